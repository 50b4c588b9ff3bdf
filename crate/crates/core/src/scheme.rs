//! Time stepping by the decoupled fixed-point iteration whose limit solves
//! the nonlinear energy-stable scheme.

use std::sync::Arc;

use thiserror::Error;

use crate::diagnostics::{self, EnergyLedger, StepRecord};
use crate::fespace::{divfree_projection, interpolate_nodal, FEFunction, FESpace, FeError, ProjectionBoundary, SpaceKind};
use crate::mesh::{BoxDomain, Mesh, MeshError};
use crate::operators::director::{solve_director, DirectorError, DirectorInputs};
use crate::operators::forms;
use crate::operators::leslie::{recovered_gradient, DiscreteLaplacian};
use crate::operators::momentum::{MomentumInputs, MomentumOperators};
use crate::operators::params::{ParamError, Params};
use crate::sparsela::{SaddleSolver, SaddleStrategy, SolveError, SparseMatrix};

/// Tolerance on nodal unit length of the initial director.
pub const INITIAL_UNIT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SchemeError {
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("{cells} cells have no vertex off the boundary; use an even resolution in 3D")]
    MeshAssumption { cells: usize },
    #[error(transparent)]
    Fe(#[from] FeError),
    #[error("invalid initial data: {0}")]
    InitialData(String),
    #[error("initial director has length off by {deviation:e} at node {node}")]
    NonUnitDirector { node: usize, deviation: f64 },
    #[error("step {step}: linear solve failed: {source}")]
    Solve { step: usize, source: SolveError },
    #[error("step {step}: {source}")]
    Director { step: usize, source: DirectorError },
    #[error("step {step}: fixed-point iteration did not reach the tolerance in {} iterations (last increment {:e}); retry with a smaller time step", increments.len(), increments.last().copied().unwrap_or(f64::NAN))]
    NotConverged { step: usize, increments: Vec<f64> },
}

/// Initial and boundary data of the benchmark settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialData {
    /// Smooth planar director `(sin 2pi(cos x1 - sin x2), cos ...)`, fluid at rest.
    Smooth,
    /// Two point defects on every horizontal plane, fluid at rest.
    Defects,
    /// The defect director in the rigid rotation `10 (-x2, x1, 0)`, imposed on the boundary.
    RotatingDefects,
}

impl std::str::FromStr for InitialData {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "smooth" => Ok(Self::Smooth),
            "defects" => Ok(Self::Defects),
            "rotating-defects" => Ok(Self::RotatingDefects),
            other => Err(format!("unknown initial data `{other}` (expected smooth, defects or rotating-defects)")),
        }
    }
}

/// Unnormalized director of the defect setting.
pub fn defect_profile(x: &[f64]) -> [f64; 3] {
    [4.0 * x[0] * x[0] + 4.0 * x[1] * x[1] - 0.25, 2.0 * x[1], 0.0]
}

/// Normalized defect director, `(0, 0, 1)` where the profile vanishes.
pub fn defect_director(x: &[f64]) -> Vec<f64> {
    let p = defect_profile(x);
    let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    if n > 1e-14 {
        p.iter().map(|c| c / n).collect()
    } else {
        vec![0.0, 0.0, 1.0]
    }
}

/// Smooth planar director, padded with zeros beyond the first two components.
pub fn smooth_director(x: &[f64], dim: usize) -> Vec<f64> {
    let g = 2.0 * std::f64::consts::PI * (x[0].cos() - x[1].sin());
    let mut d = vec![0.0; dim];
    d[0] = g.sin();
    d[1] = g.cos();
    d
}

pub fn rotating_velocity(x: &[f64]) -> Vec<f64> {
    let mut v = vec![0.0; x.len()];
    v[0] = -10.0 * x[1];
    v[1] = 10.0 * x[0];
    v
}

impl InitialData {
    pub fn director(self, x: &[f64], dim: usize) -> Vec<f64> {
        match self {
            InitialData::Smooth => smooth_director(x, dim),
            InitialData::Defects | InitialData::RotatingDefects => defect_director(x),
        }
    }

    pub fn velocity(self, x: &[f64]) -> Vec<f64> {
        match self {
            InitialData::RotatingDefects => rotating_velocity(x),
            _ => vec![0.0; x.len()],
        }
    }

    /// Whether the velocity vanishes on the boundary.
    pub fn homogeneous_boundary(self) -> bool {
        self != InitialData::RotatingDefects
    }
}

/// Everything needed to set up a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Setup {
    pub domain: BoxDomain,
    pub n: usize,
    pub params: Params,
    pub initial: InitialData,
    pub max_iterations: usize,
    pub linear_solver: SaddleStrategy,
}

pub const DEFAULT_MAX_ITERATIONS: usize = 200;

/// Mesh, spaces and time-independent operators of one run.
#[derive(Debug)]
pub struct Discretization {
    pub setup: Setup,
    pub mesh: Arc<Mesh>,
    pub velocity: Arc<FESpace>,
    pub pressure: Arc<FESpace>,
    pub director: Arc<FESpace>,
    pub momentum: MomentumOperators,
    pub laplacian: DiscreteLaplacian,
    /// Consistent scalar P1 mass matrix.
    pub p1_mass: SparseMatrix,
    /// Velocity boundary values as a full P2 vector.
    pub velocity_boundary: Vec<f64>,
}

impl Discretization {
    pub fn new(setup: Setup) -> Result<Self, SchemeError> {
        setup.params.validate()?;
        let dim = setup.domain.dim();
        if matches!(setup.initial, InitialData::Defects | InitialData::RotatingDefects) && dim != 3 {
            return Err(SchemeError::InitialData("the defect settings need a three-dimensional domain".into()));
        }
        let mesh = Arc::new(Mesh::build_box(&setup.domain, setup.n)?);
        let bad = mesh.cells_without_interior_vertex().len();
        if bad > 0 {
            return Err(SchemeError::MeshAssumption { cells: bad });
        }
        let velocity = FESpace::new(mesh.clone(), SpaceKind::P2Vector);
        let pressure = FESpace::new(mesh.clone(), SpaceKind::P1Pressure);
        let director = FESpace::new(mesh.clone(), SpaceKind::P1Vector);
        let momentum = MomentumOperators::new(velocity.clone(), pressure.clone(), &setup.params);
        let laplacian = DiscreteLaplacian::new(&director);
        let p1_mass = forms::mass_matrix(&FESpace::new(mesh.clone(), SpaceKind::P1Scalar));
        let initial = setup.initial;
        let mut velocity_boundary = interpolate_nodal(&velocity, |x| initial.velocity(x))?.into_values();
        let nn = velocity.num_nodes();
        for node in 0..nn {
            if !velocity.is_boundary_node(node) {
                for c in 0..dim {
                    velocity_boundary[c * nn + node] = 0.0;
                }
            }
        }
        Ok(Self { setup, mesh, velocity, pressure, director, momentum, laplacian, p1_mass, velocity_boundary })
    }

    pub fn params(&self) -> &Params {
        &self.setup.params
    }

    pub fn dim(&self) -> usize {
        self.mesh.dim()
    }

    /// Number of time steps `floor(T / k)`.
    pub fn num_steps(&self) -> usize {
        let p = self.params();
        ((p.t_end / p.k) * (1.0 + 1e-12)).floor().max(0.0) as usize
    }

    /// `sum_c f_c^T K g_c` over the director components.
    pub fn director_stiffness(&self, f: &[f64], g: &[f64]) -> f64 {
        self.componentwise(self.laplacian.stiffness(), f, g)
    }

    /// `sum_c f_c^T M g_c` over the director components.
    pub fn director_mass(&self, f: &[f64], g: &[f64]) -> f64 {
        self.componentwise(&self.p1_mass, f, g)
    }

    fn componentwise(&self, m: &SparseMatrix, f: &[f64], g: &[f64]) -> f64 {
        let nv = self.mesh.num_vertices();
        (0..self.dim()).map(|c| m.bilinear(&f[c * nv..(c + 1) * nv], &g[c * nv..(c + 1) * nv])).sum()
    }

    /// `||v||_{L^2}` of a P2 velocity field.
    pub fn velocity_l2(&self, v: &[f64]) -> f64 {
        self.momentum.mass.bilinear(v, v).max(0.0).sqrt()
    }

    /// Full `H^1` norm of a P1 director field.
    pub fn director_h1(&self, d: &[f64]) -> f64 {
        (self.director_mass(d, d) + self.director_stiffness(d, d)).max(0.0).sqrt()
    }

    /// `1/2 ||v||^2 + A/2 ||grad d||^2`.
    pub fn energy(&self, v: &[f64], d: &[f64]) -> f64 {
        0.5 * self.momentum.mass.bilinear(v, v) + 0.5 * self.params().a * self.director_stiffness(d, d)
    }
}

/// Discrete solution at one time level.
#[derive(Debug, Clone)]
pub struct State {
    pub step: usize,
    pub t: f64,
    pub v: FEFunction,
    pub p: FEFunction,
    pub d: FEFunction,
    /// Midpoint director of the step that produced this state.
    pub d_half: Vec<f64>,
    /// Discrete Laplacian of `d_half`.
    pub lap_half: Vec<f64>,
    /// Discrete energy.
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointReport {
    pub iterations: usize,
    /// `||v^l - v^{l-1}||_{L^2} + ||d^l - d^{l-1}||_{H^1}` of the last iteration.
    pub final_increment: f64,
    pub converged: bool,
    pub increments: Vec<f64>,
}

/// Projected initial velocity and interpolated initial director.
pub fn initial_state(disc: &Discretization) -> Result<State, SchemeError> {
    let dim = disc.dim();
    let init = disc.setup.initial;
    let v0 = |x: &[f64]| init.velocity(x);
    let boundary = |x: &[f64]| init.velocity(x);
    let v = divfree_projection(&disc.velocity, &disc.pressure, &v0, ProjectionBoundary::Dirichlet(&boundary))?;
    let d = interpolate_nodal(&disc.director, |x| init.director(x, dim))?;
    let nv = disc.mesh.num_vertices();
    for z in 0..nv {
        let len: f64 = (0..dim).map(|c| d.values()[c * nv + z].powi(2)).sum::<f64>().sqrt();
        let deviation = (len - 1.0).abs();
        if !(deviation <= INITIAL_UNIT_TOLERANCE) {
            return Err(SchemeError::NonUnitDirector { node: z, deviation });
        }
    }
    let lap = disc.laplacian.apply(d.values());
    let energy = disc.energy(v.values(), d.values());
    Ok(State {
        step: 0,
        t: 0.0,
        v,
        p: FEFunction::zeros(disc.pressure.clone()),
        d_half: d.values().to_vec(),
        lap_half: lap,
        d,
        energy,
    })
}

fn midpoint(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect()
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// One time step: fixed-point iterations until the increment drops below
/// the tolerance `theta`.
pub fn fixed_point_step(
    disc: &Discretization,
    solver: &mut SaddleSolver,
    state: &State,
) -> Result<(State, FixedPointReport), SchemeError> {
    let params = disc.params();
    let step = state.step + 1;
    let v_prev = state.v.values();
    let d_prev = state.d.values();
    let grad_prev = recovered_gradient(&disc.mesh, disc.director.lumped_weights(), d_prev);
    let conv = disc.momentum.convection(v_prev);
    let mut v_it = v_prev.to_vec();
    let mut p_it = state.p.values().to_vec();
    let mut d_it = d_prev.to_vec();
    let mut d_half = d_prev.to_vec();
    let mut lap = disc.laplacian.apply(&d_half);
    let mut increments = Vec::new();
    let mut converged = false;
    for _ in 0..disc.setup.max_iterations.max(1) {
        let inputs = MomentumInputs { v_prev, d_lag: &d_it, d_half: &d_half, lap_half: &lap, grad_prev: &grad_prev };
        let system = disc
            .momentum
            .system(&conv, &inputs, params, &disc.velocity_boundary)
            .map_err(|source| SchemeError::Solve { step, source })?;
        let (v_new, p_new) = solver.solve(&system).map_err(|source| SchemeError::Solve { step, source })?;
        let dir_inputs = DirectorInputs { v: &v_it, d_prev, d_lag: &d_half, lap_lag: &lap, grad_prev: &grad_prev };
        let d_new = solve_director(&disc.velocity, &dir_inputs, params).map_err(|source| SchemeError::Director { step, source })?;
        let inc = disc.velocity_l2(&diff(&v_new, &v_it)) + disc.director_h1(&diff(&d_new, &d_it));
        increments.push(inc);
        v_it = v_new;
        p_it = p_new;
        d_it = d_new;
        d_half = midpoint(&d_it, d_prev);
        lap = disc.laplacian.apply(&d_half);
        if inc <= params.theta {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(SchemeError::NotConverged { step, increments });
    }
    let energy = disc.energy(&v_it, &d_it);
    let next = State {
        step,
        t: step as f64 * params.k,
        v: FEFunction::new(disc.velocity.clone(), v_it)?,
        p: FEFunction::new(disc.pressure.clone(), p_it)?,
        d: FEFunction::new(disc.director.clone(), d_it)?,
        d_half,
        lap_half: lap,
        energy,
    };
    let report = FixedPointReport {
        iterations: increments.len(),
        final_increment: *increments.last().expect("at least one iteration"),
        converged,
        increments,
    };
    Ok((next, report))
}

/// A run in progress: the current state plus the diagnostics so far.
#[derive(Debug)]
pub struct Simulation<'a> {
    disc: &'a Discretization,
    solver: SaddleSolver,
    ledger: EnergyLedger,
    state: State,
    records: Vec<StepRecord>,
    states: Option<Vec<State>>,
}

impl<'a> Simulation<'a> {
    pub fn new(disc: &'a Discretization, keep_states: bool) -> Result<Self, SchemeError> {
        let state = initial_state(disc)?;
        let ledger = EnergyLedger::new(disc, &state);
        let records = vec![ledger.record(disc, &state, None)];
        let states = keep_states.then(|| vec![state.clone()]);
        Ok(Self { disc, solver: SaddleSolver::new(disc.setup.linear_solver), ledger, state, records, states })
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    pub fn solver(&self) -> &SaddleSolver {
        &self.solver
    }

    pub fn finished(&self) -> bool {
        self.state.step >= self.disc.num_steps()
    }

    pub fn step(&mut self) -> Result<&StepRecord, SchemeError> {
        let (next, report) = fixed_point_step(self.disc, &mut self.solver, &self.state)?;
        self.ledger.advance(self.disc, &self.state, &next);
        let record = self.ledger.record(self.disc, &next, Some(&report));
        self.records.push(record);
        if let Some(s) = self.states.as_mut() {
            s.push(next.clone());
        }
        self.state = next;
        Ok(self.records.last().expect("just pushed"))
    }

    pub fn run(mut self) -> Result<Trajectory, SchemeError> {
        while !self.finished() {
            self.step()?;
        }
        Ok(self.into_trajectory())
    }

    pub fn into_trajectory(self) -> Trajectory {
        Trajectory { records: self.records, states: self.states.unwrap_or_default(), final_state: self.state }
    }
}

/// Diagnostics of every step, optionally with all states.
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// One row per time level, starting with the initial state.
    pub records: Vec<StepRecord>,
    /// All states when kept, else empty.
    pub states: Vec<State>,
    pub final_state: State,
}

/// Runs `floor(T / k)` steps.
pub fn run_simulation(disc: &Discretization, keep_states: bool) -> Result<Trajectory, SchemeError> {
    Simulation::new(disc, keep_states)?.run()
}

impl Trajectory {
    /// Accumulated energy-equality residual after step `n`.
    pub fn energy_equality_residual(&self, n: usize) -> f64 {
        diagnostics::energy_equality_residual(self, n)
    }
}
