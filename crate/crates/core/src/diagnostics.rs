//! Energies, dissipation channels, unit-norm deviation and the discrete
//! energy-variational inequality.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::fespace::{divfree_projection, FESpace, FeError, ProjectionBoundary, Tabulation};
use crate::mesh::Mesh;
use crate::operators::forms::velocity_quad_degree;
use crate::operators::leslie::{self, cross_norm2, nodal, recovered_gradient, triple};
use crate::operators::params::Model;
use crate::quadrature;
use crate::scheme::{Discretization, FixedPointReport, State, Trajectory};

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("test function is not discretely divergence free (residual {residual:e})")]
    NotDivergenceFree { residual: f64 },
    #[error("test function has {got} values, the velocity space has {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("step range {from}..{to} outside the stored trajectory of {len} states")]
    Range { from: usize, to: usize, len: usize },
    #[error(transparent)]
    Fe(#[from] FeError),
}

/// Energy and the dissipation accumulated since the initial time.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EnergyBreakdown {
    pub kinetic: f64,
    pub elastic: f64,
    /// `(k^2/2) sum ||dt v||^2`.
    pub numerical_dissipation: f64,
    pub channel_mu1: f64,
    pub channel_mu4: f64,
    pub channel_mu56: f64,
    pub channel_rotational: f64,
    pub total_e: f64,
}

impl EnergyBreakdown {
    pub fn dissipated(&self) -> f64 {
        self.numerical_dissipation + self.channel_mu1 + self.channel_mu4 + self.channel_mu56 + self.channel_rotational
    }
}

/// Kinetic and elastic energy of a state, dissipation left at zero.
pub fn energy(disc: &Discretization, state: &State) -> EnergyBreakdown {
    let kinetic = 0.5 * disc.momentum.mass.bilinear(state.v.values(), state.v.values());
    let elastic = 0.5 * disc.params().a * disc.director_stiffness(state.d.values(), state.d.values());
    EnergyBreakdown { kinetic, elastic, total_e: kinetic + elastic, ..Default::default() }
}

/// `[c1 ||d . S d||^2, mu4 ||S||^2, c2 ||S d||^2]` for the full model and
/// `[0, nu ||grad v||^2, 0]` for the simplified one.
pub fn viscous_channels(disc: &Discretization, v: &[f64], d: &[f64]) -> [f64; 3] {
    let space = &disc.velocity;
    let mesh = space.mesh();
    let params = disc.params();
    let (dim, nloc, nv) = (space.dim(), space.local_nodes(), mesh.num_vertices());
    let tab = Tabulation::for_space(space, velocity_quad_degree(dim));
    let mut local = vec![0.0; nloc * dim];
    let mut g = vec![0.0; nloc * dim];
    let mut out = [0.0; 3];
    for c in 0..mesh.num_cells() {
        space.gather(v, c, &mut local);
        let (vol, gb, verts) = (mesh.cell_volume(c), mesh.cell_grad_bary(c), mesh.cell(c));
        for q in 0..tab.len() {
            tab.grads(q, gb, &mut g);
            let wt = vol * tab.weights[q];
            let mut grad = [[0.0; 3]; 3];
            for i in 0..dim {
                for r in 0..dim {
                    grad[i][r] = (0..nloc).map(|a| local[i * nloc + a] * g[a * dim + r]).sum();
                }
            }
            if params.model == Model::Simplified {
                out[1] += wt * params.nu * grad.iter().flatten().map(|x| x * x).sum::<f64>();
                continue;
            }
            let mut dq = [0.0; 3];
            for i in 0..dim {
                dq[i] = verts.iter().zip(&tab.points[q]).map(|(&z, &l)| l * d[i * nv + z]).sum();
            }
            let mut ss = 0.0;
            let mut sd = [0.0; 3];
            for i in 0..dim {
                for r in 0..dim {
                    let s = 0.5 * (grad[i][r] + grad[r][i]);
                    ss += s * s;
                    sd[i] += s * dq[r];
                }
            }
            let dsd: f64 = (0..dim).map(|i| dq[i] * sd[i]).sum();
            out[0] += wt * params.c_mu1() * dsd * dsd;
            out[1] += wt * params.mu4 * ss;
            out[2] += wt * params.c_mu56() * sd.iter().map(|x| x * x).sum::<f64>();
        }
    }
    out
}

/// `A^2 ||d x lap||_h^2` for the midpoint director and its discrete Laplacian.
pub fn rotational_channel(disc: &Discretization, d_half: &[f64], lap_half: &[f64]) -> f64 {
    let (dim, nv) = (disc.dim(), disc.mesh.num_vertices());
    let w = disc.director.lumped_weights();
    let (mut dz, mut lz) = ([0.0; 3], [0.0; 3]);
    let s: f64 = (0..nv)
        .map(|z| {
            nodal(d_half, nv, dim, z, &mut dz);
            nodal(lap_half, nv, dim, z, &mut lz);
            w[z] * cross_norm2(&dz[..dim], &lz[..dim])
        })
        .sum();
    disc.params().a * disc.params().a * s
}

/// Dissipation of one step, already multiplied by `k` where applicable.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepDissipation {
    pub numerical: f64,
    pub mu1: f64,
    pub mu4: f64,
    pub mu56: f64,
    pub rotational: f64,
}

impl StepDissipation {
    pub fn evaluate(disc: &Discretization, prev: &State, next: &State) -> Self {
        let k = disc.params().k;
        let dv: Vec<f64> = next.v.values().iter().zip(prev.v.values()).map(|(a, b)| a - b).collect();
        let [mu1, mu4, mu56] = viscous_channels(disc, next.v.values(), next.d.values());
        Self {
            numerical: 0.5 * disc.momentum.mass.bilinear(&dv, &dv),
            mu1: k * mu1,
            mu4: k * mu4,
            mu56: k * mu56,
            rotational: k * rotational_channel(disc, &next.d_half, &next.lap_half),
        }
    }

    pub fn total(&self) -> f64 {
        self.numerical + self.mu1 + self.mu4 + self.mu56 + self.rotational
    }
}

/// `E^n - E^{n-1} + (dissipation of step n)`; zero for the nonlinear scheme.
pub fn step_energy_residual(disc: &Discretization, prev: &State, next: &State) -> f64 {
    next.energy - prev.energy + StepDissipation::evaluate(disc, prev, next).total()
}

/// `max_z ||d(z)| - 1|` and `|| |d|^2 - 1 ||_{L^2}` of a P1 vector field.
pub fn unit_norm_deviation(space: &FESpace, d: &[f64]) -> (f64, f64) {
    let mesh = space.mesh();
    let (dim, nv) = (space.components(), mesh.num_vertices());
    let mut dz = [0.0; 3];
    let mut max_nodal: f64 = 0.0;
    for z in 0..nv {
        nodal(d, nv, dim, z, &mut dz);
        max_nodal = max_nodal.max((leslie::dot(&dz[..dim], &dz[..dim]).sqrt() - 1.0).abs());
    }
    let rule = quadrature::rule(mesh.dim(), 4);
    let mut s = 0.0;
    for c in 0..mesh.num_cells() {
        let verts = mesh.cell(c);
        for (l, w) in rule.points.iter().zip(&rule.weights) {
            let mut n2 = 0.0;
            for i in 0..dim {
                let di: f64 = verts.iter().zip(l).map(|(&z, &lv)| lv * d[i * nv + z]).sum();
                n2 += di * di;
            }
            s += mesh.cell_volume(c) * w * (n2 - 1.0) * (n2 - 1.0);
        }
    }
    (max_nodal, s.sqrt())
}

/// `max_q |(B v)_q|` against the full pressure space.
pub fn divergence_residual(disc: &Discretization, v: &[f64]) -> f64 {
    disc.momentum.divergence.matvec(v).iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// One row of the run diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub breakdown: EnergyBreakdown,
    /// Residual of the energy equality over this step alone.
    pub step_residual: f64,
    /// `E^n + (dissipation up to n) - E^0`.
    pub energy_residual: f64,
    pub unit_norm_max: f64,
    pub unit_norm_l2: f64,
    pub fp_iterations: usize,
    pub fp_increment: f64,
    pub divergence_residual: f64,
    /// `k sum ||grad v^l||^2`, monitored for the a-priori bound.
    pub velocity_gradient_sum: f64,
}

/// Running sums of the dissipation channels.
#[derive(Debug, Clone)]
pub struct EnergyLedger {
    e0: f64,
    cumulative: StepDissipation,
    last_step_residual: f64,
    gradient_sum: f64,
}

impl EnergyLedger {
    pub fn new(_disc: &Discretization, initial: &State) -> Self {
        Self { e0: initial.energy, cumulative: StepDissipation::default(), last_step_residual: 0.0, gradient_sum: 0.0 }
    }

    pub fn initial_energy(&self) -> f64 {
        self.e0
    }

    pub fn advance(&mut self, disc: &Discretization, prev: &State, next: &State) {
        let s = StepDissipation::evaluate(disc, prev, next);
        self.last_step_residual = next.energy - prev.energy + s.total();
        self.cumulative.numerical += s.numerical;
        self.cumulative.mu1 += s.mu1;
        self.cumulative.mu4 += s.mu4;
        self.cumulative.mu56 += s.mu56;
        self.cumulative.rotational += s.rotational;
        let kv = disc.velocity.clone();
        let g = crate::fespace::h1_seminorm_values(&kv, next.v.values());
        self.gradient_sum += disc.params().k * g * g;
    }

    pub fn record(&self, disc: &Discretization, state: &State, report: Option<&FixedPointReport>) -> StepRecord {
        let mut breakdown = energy(disc, state);
        breakdown.numerical_dissipation = self.cumulative.numerical;
        breakdown.channel_mu1 = self.cumulative.mu1;
        breakdown.channel_mu4 = self.cumulative.mu4;
        breakdown.channel_mu56 = self.cumulative.mu56;
        breakdown.channel_rotational = self.cumulative.rotational;
        let (unit_norm_max, unit_norm_l2) = unit_norm_deviation(&disc.director, state.d.values());
        StepRecord {
            step: state.step,
            t: state.t,
            breakdown,
            step_residual: if state.step == 0 { 0.0 } else { self.last_step_residual },
            energy_residual: state.energy + self.cumulative.total() - self.e0,
            unit_norm_max,
            unit_norm_l2,
            fp_iterations: report.map_or(0, |r| r.iterations),
            fp_increment: report.map_or(0.0, |r| r.final_increment),
            divergence_residual: divergence_residual(disc, state.v.values()),
            velocity_gradient_sum: self.gradient_sum,
        }
    }
}

/// `|E^n + (dissipation up to n) - E^0|` of a trajectory.
pub fn energy_equality_residual(trajectory: &Trajectory, n: usize) -> f64 {
    trajectory.records[n].energy_residual.abs()
}

/// Divergence-free velocity test function with its regularity weight.
#[derive(Debug, Clone)]
pub struct EviTestFunction {
    pub values: Vec<f64>,
    /// `K = 1/2 ||v||_{L^inf}^2`, maximum over P2 nodes and quadrature points.
    pub k_value: f64,
}

impl EviTestFunction {
    pub fn new(disc: &Discretization, values: Vec<f64>) -> Result<Self, DiagnosticsError> {
        let n = disc.velocity.dof_count();
        if values.len() != n {
            return Err(DiagnosticsError::LengthMismatch { expected: n, got: values.len() });
        }
        let b = &disc.momentum.divergence;
        let bv = b.matvec(&values);
        let scale = (0..b.nrows())
            .map(|q| {
                let (cols, vals) = b.row(q);
                cols.iter().zip(vals).map(|(&c, v)| (v * values[c]).abs()).sum::<f64>()
            })
            .fold(0.0f64, f64::max);
        let residual = bv.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if residual > 1e-10 * scale {
            return Err(DiagnosticsError::NotDivergenceFree { residual });
        }
        let k_value = 0.5 * sup_norm_squared(&disc.velocity, &values);
        Ok(Self { values, k_value })
    }

    pub fn zero(disc: &Discretization) -> Self {
        Self { values: vec![0.0; disc.velocity.dof_count()], k_value: 0.0 }
    }

    /// Discretely divergence-free projection of a random trigonometric field
    /// vanishing on the boundary.
    pub fn random(disc: &Discretization, seed: u64) -> Result<Self, DiagnosticsError> {
        let dim = disc.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let modes: Vec<(Vec<f64>, f64, f64)> = (0..3 * dim)
            .map(|_| ((0..dim).map(|_| rng.random_range(-3.0..3.0)).collect(), rng.random_range(0.0..6.3), rng.random_range(-1.0..1.0)))
            .collect();
        let f = move |x: &[f64]| -> Vec<f64> {
            (0..dim)
                .map(|i| {
                    modes[3 * i..3 * i + 3]
                        .iter()
                        .map(|(w, ph, a)| a * (leslie::dot(w, x) + ph).sin())
                        .sum()
                })
                .collect()
        };
        let zero = |x: &[f64]| vec![0.0; x.len()];
        let v = divfree_projection(&disc.velocity, &disc.pressure, &f, ProjectionBoundary::Dirichlet(&zero))?;
        Self::new(disc, v.into_values())
    }
}

/// `max |v|^2` over the P2 nodes and the quadrature points of the velocity forms.
pub fn sup_norm_squared(space: &FESpace, v: &[f64]) -> f64 {
    let (dim, nn, nloc) = (space.dim(), space.num_nodes(), space.local_nodes());
    let mut m: f64 = 0.0;
    let mut vz = [0.0; 3];
    for node in 0..nn {
        nodal(v, nn, dim, node, &mut vz);
        m = m.max(leslie::dot(&vz[..dim], &vz[..dim]));
    }
    let tab = Tabulation::for_space(space, velocity_quad_degree(dim));
    let mut local = vec![0.0; nloc * dim];
    for c in 0..space.mesh().num_cells() {
        space.gather(v, c, &mut local);
        for q in 0..tab.len() {
            let phi = &tab.values[q * nloc..(q + 1) * nloc];
            let s: f64 = (0..dim)
                .map(|i| {
                    let u: f64 = (0..nloc).map(|a| phi[a] * local[i * nloc + a]).sum();
                    u * u
                })
                .sum();
            m = m.max(s);
        }
    }
    m
}

/// Momentum equation of step `prev -> next` tested with `w`, evaluated with
/// the converged director data.
pub fn momentum_residual(disc: &Discretization, prev: &State, next: &State, w: &[f64]) -> f64 {
    let params = disc.params();
    let ops = &disc.momentum;
    let (v, vp) = (next.v.values(), prev.v.values());
    let dv: Vec<f64> = v.iter().zip(vp).map(|(a, b)| (a - b) / params.k).collect();
    let grad_prev = recovered_gradient(&disc.mesh, disc.director.lumped_weights(), prev.d.values());
    let conv = ops.convection(vp).matvec(v);
    let td = ops.dissipative(params, next.d.values()).matvec(v);
    let fe = leslie::ericksen_force(&disc.velocity, &grad_prev, &next.d_half, &next.lap_half);
    let fl = leslie::leslie_elastic_rhs(&disc.velocity, &next.d_half, &next.lap_half, params);
    let s = params.v_el * params.a;
    let mdv = ops.mass.matvec(&dv);
    (0..w.len()).map(|i| w[i] * (mdv[i] + conv[i] + td[i] - s * fe[i] + fl[i])).sum()
}

/// Left-hand side of the discrete energy-variational inequality summed over
/// the steps `from + 1 ..= to` and multiplied by `k`; the auxiliary energy
/// is taken from the stored states.
pub fn evi_residual(
    disc: &Discretization,
    states: &[State],
    test: &EviTestFunction,
    from: usize,
    to: usize,
) -> Result<f64, DiagnosticsError> {
    if from > to || to >= states.len() {
        return Err(DiagnosticsError::Range { from, to, len: states.len() });
    }
    let k = disc.params().k;
    let nonzero = test.values.iter().any(|x| *x != 0.0);
    let mut total = 0.0;
    for j in from + 1..=to {
        let (prev, next) = (&states[j - 1], &states[j]);
        let mut r = step_energy_residual(disc, prev, next);
        if nonzero {
            r -= k * momentum_residual(disc, prev, next, &test.values);
        }
        let defect = disc.energy(prev.v.values(), prev.d.values()) - prev.energy;
        r += k * test.k_value * defect;
        total += r;
    }
    Ok(total)
}

/// Analytic director sample: value, gradient (`i * dim + r`) and Laplacian.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectorSample {
    pub d: Vec<f64>,
    pub grad: Vec<f64>,
    pub lap: Vec<f64>,
}

/// `max_z | -d x (d x lap d) - (lap d + |grad d|^2 d) |` over the mesh
/// vertices for a unit-length analytic field; zero by the identity for unit vectors.
pub fn euler_lagrange_identity_check(mesh: &Mesh, field: &dyn Fn(&[f64]) -> DirectorSample) -> f64 {
    let mut worst: f64 = 0.0;
    for z in 0..mesh.num_vertices() {
        let s = field(mesh.vertex(z));
        let n = s.d.len();
        let mut t = vec![0.0; n];
        triple(&s.d, &s.lap, &mut t);
        let g2: f64 = s.grad.iter().map(|x| x * x).sum();
        for i in 0..n {
            worst = worst.max((-t[i] - (s.lap[i] + g2 * s.d[i])).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fespace::{interpolate_nodal, FEFunction, SpaceKind};
    use crate::mesh::BoxDomain;
    use crate::operators::params::{Model, Params};
    use crate::scheme::{initial_state, InitialData, Setup};
    use crate::sparsela::SaddleStrategy;
    use std::sync::Arc;

    fn setup(n: usize, model: Model) -> Setup {
        Setup {
            domain: BoxDomain::cube(2, -1.0, 1.0).unwrap(),
            n,
            params: Params {
                mu1: 1.0,
                mu4: 0.1,
                mu5_plus_mu6: 2.0,
                lambda: 1.0,
                nu: 0.1,
                a: 1.0,
                v_el: 1.0,
                k: 2.5e-4,
                theta: 1e-6,
                t_end: 1e-3,
                model,
            },
            initial: InitialData::Smooth,
            max_iterations: 200,
            linear_solver: SaddleStrategy::Reuse,
        }
    }

    #[test]
    fn energy_of_rest_with_constant_director_vanishes() {
        let disc = Discretization::new(setup(2, Model::Full)).unwrap();
        let mut s = initial_state(&disc).unwrap();
        let nv = disc.mesh.num_vertices();
        s.d = FEFunction::new(disc.director.clone(), (0..2 * nv).map(|i| if i < nv { 0.6 } else { 0.8 }).collect()).unwrap();
        let e = energy(&disc, &s);
        assert_eq!(e.kinetic, 0.0);
        assert!(e.elastic.abs() < 1e-14);
    }

    #[test]
    fn kinetic_energy_of_constant_field() {
        let disc = Discretization::new(setup(3, Model::Full)).unwrap();
        let mut s = initial_state(&disc).unwrap();
        s.v = interpolate_nodal(&disc.velocity, |_| vec![1.0, -2.0]).unwrap();
        let e = energy(&disc, &s);
        assert!((e.kinetic - 0.5 * 5.0 * 4.0).abs() < 1e-12);
    }

    #[test]
    fn unit_norm_of_constant_unit_field() {
        let m = Arc::new(Mesh::build_box(&BoxDomain::cube(3, 0.0, 1.0).unwrap(), 2).unwrap());
        let s = FESpace::new(m, SpaceKind::P1Vector);
        let d = interpolate_nodal(&s, |_| vec![0.0, 0.6, 0.8]).unwrap();
        let (a, b) = unit_norm_deviation(&s, d.values());
        assert!(a < 1e-15 && b < 1e-15);
    }

    #[test]
    fn unit_norm_l2_of_scaled_field() {
        // |d|^2 - 1 = 3 everywhere for d = 2 e1
        let m = Arc::new(Mesh::build_box(&BoxDomain::cube(2, 0.0, 2.0).unwrap(), 2).unwrap());
        let s = FESpace::new(m, SpaceKind::P1Vector);
        let d = interpolate_nodal(&s, |_| vec![2.0, 0.0]).unwrap();
        let (a, b) = unit_norm_deviation(&s, d.values());
        assert!((a - 1.0).abs() < 1e-15);
        assert!((b - 6.0).abs() < 1e-12);
    }

    #[test]
    fn euler_lagrange_identity_for_planar_angle_field() {
        let m = Mesh::build_box(&BoxDomain::cube(2, -1.0, 1.0).unwrap(), 8).unwrap();
        // d = (sin g, cos g, 0), g = x y + x^2
        let field = |x: &[f64]| {
            let g = x[0] * x[1] + x[0] * x[0];
            let (gx, gy) = (x[1] + 2.0 * x[0], x[0]);
            let lg = 2.0;
            let g2 = gx * gx + gy * gy;
            let (s, c) = g.sin_cos();
            DirectorSample {
                d: vec![s, c, 0.0],
                grad: vec![c * gx, c * gy, -s * gx, -s * gy, 0.0, 0.0],
                lap: vec![c * lg - s * g2, -s * lg - c * g2, 0.0],
            }
        };
        assert!(euler_lagrange_identity_check(&m, &field) < 1e-12);
        let constant = |_: &[f64]| DirectorSample { d: vec![1.0, 0.0, 0.0], grad: vec![0.0; 6], lap: vec![0.0; 3] };
        assert_eq!(euler_lagrange_identity_check(&m, &constant), 0.0);
    }

    #[test]
    fn random_test_function_is_divergence_free_and_rejects_others() {
        let disc = Discretization::new(setup(4, Model::Full)).unwrap();
        let t = EviTestFunction::random(&disc, 3).unwrap();
        assert!(t.k_value > 0.0);
        let bad = interpolate_nodal(&disc.velocity, |x| vec![x[0], 0.0]).unwrap();
        assert!(matches!(EviTestFunction::new(&disc, bad.into_values()), Err(DiagnosticsError::NotDivergenceFree { .. })));
    }
}
