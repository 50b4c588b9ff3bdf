//! Property suites behind `nematic verify`.
//!
//! Each suite returns a list of checks. Hard checks are invariants of the
//! scheme; soft checks are diagnostics whose bounds are only expected in the
//! limit of the converged nonlinear scheme.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::diagnostics::{evi_residual, DiagnosticsError, EviTestFunction};
use crate::fespace::{l2_norm, lumped_norm, norm_equivalence_constants, FEFunction, FESpace, SpaceKind};
use crate::io::config::{Experiment, RunConfig};
use crate::mesh::{BoxDomain, Mesh, MeshError};
use crate::operators::forms;
use crate::scheme::{Discretization, SchemeError, Simulation, Trajectory};

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Lumping,
    Energy,
    Evi,
    Norm,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Lumping, Suite::Energy, Suite::Evi, Suite::Norm];
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lumping" => Ok(Self::Lumping),
            "energy" => Ok(Self::Energy),
            "evi" => Ok(Self::Evi),
            "norm" => Ok(Self::Norm),
            other => Err(format!("unknown suite `{other}` (expected lumping, energy, evi or norm)")),
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Lumping => "lumping",
            Self::Energy => "energy",
            Self::Evi => "evi",
            Self::Norm => "norm",
        })
    }
}

/// One measured quantity against its bound (`value <= bound` passes).
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub hard: bool,
}

impl Check {
    fn hard(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, bound, hard: true }
    }

    fn soft(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, bound, hard: false }
    }

    pub fn passed(&self) -> bool {
        self.value <= self.bound
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed() { "ok" } else if self.hard { "FAIL" } else { "warn" };
        write!(f, "{status:4} {:52} {:>12.3e} <= {:.3e}", self.name, self.value, self.bound)
    }
}

/// Reduced resolutions used by the suites.
#[derive(Debug, Clone)]
pub struct SuiteOptions {
    pub n_2d: usize,
    pub n_3d: usize,
    pub steps: usize,
    pub random_fields: usize,
    pub seed: u64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self { n_2d: 8, n_3d: 4, steps: 20, random_fields: 1000, seed: 20 }
    }
}

pub fn run_suite(suite: Suite, opts: &SuiteOptions) -> Result<Vec<Check>, VerifyError> {
    match suite {
        Suite::Lumping => lumping(opts),
        Suite::Energy => energy(opts),
        Suite::Evi => evi(opts),
        Suite::Norm => norm(opts),
    }
}

/// Reduced-resolution copy of a preset run lasting `steps` steps.
pub fn reduced(experiment: Experiment, n: usize, steps: usize) -> RunConfig {
    let mut cfg = RunConfig::preset(experiment).expect("numbered experiment");
    cfg.n = n;
    cfg.t_end = steps as f64 * cfg.k;
    cfg
}

fn trajectory(cfg: &RunConfig, keep_states: bool) -> Result<(Discretization, Trajectory), VerifyError> {
    let disc = Discretization::new(cfg.setup())?;
    let traj = Simulation::new(&disc, keep_states)?.run()?;
    Ok((disc, traj))
}

fn lumping(opts: &SuiteOptions) -> Result<Vec<Check>, VerifyError> {
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for (dim, n) in [(2, opts.n_2d.min(6)), (3, opts.n_3d.min(3))] {
        let mesh = Arc::new(Mesh::build_box(&BoxDomain::cube(dim, 0.0, 1.0)?, n)?);
        let space = FESpace::new(mesh.clone(), SpaceKind::P1Scalar);
        let (lo, hi) = norm_equivalence_constants(dim);
        let mut violations = 0usize;
        for _ in 0..opts.random_fields {
            let vals: Vec<f64> = (0..space.dof_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y = FEFunction::new(space.clone(), vals).expect("length matches");
            let (l2, lumped) = (l2_norm(&y), lumped_norm(&y));
            let slack = 1e-12 * l2;
            if lo * l2 > lumped + slack || lumped > hi * l2 + slack {
                violations += 1;
            }
        }
        out.push(Check::hard(format!("{dim}d lumped norm equivalence violations"), violations as f64, 0.0));
        let mass = forms::mass_matrix(&space);
        let err = (0..mass.nrows())
            .map(|r| (mass.row(r).1.iter().sum::<f64>() - space.lumped_weights()[r]).abs())
            .fold(0.0, f64::max);
        out.push(Check::hard(format!("{dim}d lumped weights equal mass row sums"), err, 1e-14));
        let vol = (space.lumped_weights().iter().sum::<f64>() - mesh.total_volume()).abs();
        out.push(Check::hard(format!("{dim}d lumped weights sum to the volume"), vol, 1e-13));
    }
    Ok(out)
}

fn energy(opts: &SuiteOptions) -> Result<Vec<Check>, VerifyError> {
    let mut out = Vec::new();
    for (experiment, n) in [(Experiment::Smooth, opts.n_2d), (Experiment::Defects, opts.n_3d)] {
        let cfg = reduced(experiment, n, opts.steps);
        let (_, traj) = trajectory(&cfg, false)?;
        let recs = &traj.records;
        let e0 = recs[0].breakdown.total_e;
        let step_bound = 10.0 * cfg.theta * (1.0 + e0);
        let max_step = recs.iter().map(|r| r.step_residual.abs()).fold(0.0, f64::max);
        out.push(Check::hard(format!("experiment {experiment}: single-step energy residual"), max_step, step_bound));
        let rise = recs.windows(2).map(|w| w[1].breakdown.total_e - w[0].breakdown.total_e).fold(f64::MIN, f64::max);
        out.push(Check::hard(format!("experiment {experiment}: largest energy increase"), rise, step_bound));
        let mut worst: f64 = 0.0;
        for w in recs.windows(2) {
            let (a, b) = (&w[0].breakdown, &w[1].breakdown);
            for inc in [
                b.numerical_dissipation - a.numerical_dissipation,
                b.channel_mu1 - a.channel_mu1,
                b.channel_mu4 - a.channel_mu4,
                b.channel_mu56 - a.channel_mu56,
                b.channel_rotational - a.channel_rotational,
            ] {
                worst = worst.max(-inc);
            }
        }
        out.push(Check::hard(format!("experiment {experiment}: most negative dissipation channel"), worst, 1e-12));
    }
    Ok(out)
}

fn evi(opts: &SuiteOptions) -> Result<Vec<Check>, VerifyError> {
    let cfg = reduced(Experiment::Smooth, opts.n_2d, opts.steps);
    let (disc, traj) = trajectory(&cfg, true)?;
    let e0 = traj.records[0].breakdown.total_e;
    let last = traj.states.len() - 1;
    let mut out = Vec::new();
    let zero = evi_residual(&disc, &traj.states, &EviTestFunction::zero(&disc), 0, last)?;
    let acc = traj.records[last].energy_residual;
    out.push(Check::hard("zero test function reproduces the energy residual", (zero - acc).abs(), 1e-12 * (1.0 + e0)));
    out.push(Check::soft("evi residual, zero test function", zero, 1e-5 * e0));
    for seed in 1..=5 {
        let test = EviTestFunction::random(&disc, opts.seed + seed)?;
        let r = evi_residual(&disc, &traj.states, &test, 0, last)?;
        out.push(Check::soft(format!("evi residual, random test function {seed}"), r, 1e-5 * e0));
    }
    Ok(out)
}

fn norm(opts: &SuiteOptions) -> Result<Vec<Check>, VerifyError> {
    let mut out = Vec::new();
    for (experiment, n) in
        [(Experiment::Smooth, opts.n_2d), (Experiment::Defects, opts.n_3d), (Experiment::RotatingDefects, opts.n_3d)]
    {
        let cfg = reduced(experiment, n, opts.steps);
        let (_, traj) = trajectory(&cfg, false)?;
        let max = traj.records.iter().map(|r| r.unit_norm_max).fold(0.0, f64::max);
        out.push(Check::hard(format!("experiment {experiment}: nodal unit-norm deviation"), max, 1e-9));
        let div = traj.records.iter().map(|r| r.divergence_residual).fold(0.0, f64::max);
        out.push(Check::hard(format!("experiment {experiment}: discrete divergence"), div, 1e-10));
    }
    Ok(out)
}
