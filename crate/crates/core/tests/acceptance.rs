//! Acceptance run: every criterion at its stated tolerance, one PASS/FAIL
//! line each. Runs as a plain binary so the lines always reach the output.

mod common;

use std::error::Error;
use std::time::{Duration, Instant};

use nematic::fespace::{interpolate_nodal, l2_error, FESpace, SpaceKind};
use nematic::io::config::{Experiment, RunConfig};
use nematic::mesh::{BoxDomain, Mesh};
use nematic::scheme::{smooth_director, Discretization, Simulation, State, Trajectory};
use nematic::diagnostics::{evi_residual, EviTestFunction, StepRecord};
use nematic::testsupport::estimate_rate;
use nematic::verify::{reduced, run_suite, Suite, SuiteOptions};

type Outcome = Result<(bool, String), Box<dyn Error>>;

struct Run {
    disc: Discretization,
    traj: Trajectory,
    elapsed: Duration,
}

impl Run {
    fn new(cfg: &RunConfig, keep_states: bool) -> Result<Self, Box<dyn Error>> {
        let start = Instant::now();
        let disc = Discretization::new(cfg.setup())?;
        let traj = Simulation::new(&disc, keep_states)?.run()?;
        Ok(Self { disc, traj, elapsed: start.elapsed() })
    }

    fn e0(&self) -> f64 {
        self.traj.records[0].breakdown.total_e
    }

    fn theta(&self) -> f64 {
        self.disc.params().theta
    }

    fn max_unit_norm(&self) -> f64 {
        self.traj.records.iter().map(|r| r.unit_norm_max).fold(0.0, f64::max)
    }
}

fn max_step_residual(records: &[StepRecord]) -> f64 {
    records.iter().map(|r| r.step_residual.abs()).fold(0.0, f64::max)
}

/// Largest `E^j - E^{j-1}` over the records.
fn max_rise(records: &[StepRecord]) -> f64 {
    records.windows(2).map(|w| w[1].breakdown.total_e - w[0].breakdown.total_e).fold(f64::MIN, f64::max)
}

/// Experiment 2 at n = 4 run to t = 0.4, keeping the state at t = 0.1.
struct DefectRun {
    records: Vec<StepRecord>,
    at_0_1: State,
    mesh_mid_plane: Vec<usize>,
    num_vertices: usize,
}

fn defect_run() -> Result<DefectRun, Box<dyn Error>> {
    let cfg = reduced(Experiment::Defects, 4, 1600);
    let disc = Discretization::new(cfg.setup())?;
    let nv = disc.mesh.num_vertices();
    let mid = (0..nv).filter(|&z| disc.mesh.vertex(z)[2].abs() < 1e-12).collect();
    let mut sim = Simulation::new(&disc, false)?;
    let mut at = None;
    while !sim.finished() {
        sim.step()?;
        if sim.state().step == 400 {
            at = Some(sim.state().clone());
        }
    }
    Ok(DefectRun {
        records: sim.records().to_vec(),
        at_0_1: at.ok_or("run ended before t = 0.1")?,
        mesh_mid_plane: mid,
        num_vertices: nv,
    })
}

fn c1(exp1: &Run, exp2: &Run, exp3: &Run) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, run, steps, budget) in [
        ("exp 1 (2D n=16)", exp1, 200, 300.0),
        ("exp 2 (3D n=8)", exp2, 50, 1200.0),
        ("exp 3 (3D n=8)", exp3, 50, 1200.0),
    ] {
        let dev = run.max_unit_norm();
        let secs = run.elapsed.as_secs_f64();
        ok &= dev <= 1e-9 && run.traj.records.len() == steps + 1 && secs <= budget;
        parts.push(format!("{name}: max ||d(z)|-1| = {dev:.2e} <= 1e-9, {steps} steps in {secs:.0} s (target {budget:.0} s)"));
    }
    Ok((ok, parts.join("; ")))
}

fn c2(exp1: &Run) -> Result<(bool, String), Box<dyn Error>> {
    let bound = 10.0 * exp1.theta() * (1.0 + exp1.e0());
    let step = max_step_residual(&exp1.traj.records);
    let mut cfg = reduced(Experiment::Smooth, 16, 20);
    cfg.theta = 1e-10;
    let tight = Run::new(&cfg, false)?;
    let acc = tight.traj.records.last().expect("records").energy_residual.abs();
    let acc_bound = 1e-8 * tight.e0();
    Ok((
        step <= bound && acc <= acc_bound,
        format!(
            "single-step residual {step:.2e} <= {bound:.2e} (theta = 1e-6); theta = 1e-10, 20 steps: accumulated residual {acc:.2e} <= {acc_bound:.2e}"
        ),
    ))
}

fn c3(exp1: &Run, defects: &DefectRun) -> Outcome {
    let bound1 = 10.0 * exp1.theta() * (1.0 + exp1.e0());
    let rise1 = max_rise(&exp1.traj.records);
    let recs2 = &defects.records[..=200];
    let e0 = recs2[0].breakdown.total_e;
    let bound2 = 10.0 * 1e-6 * (1.0 + e0);
    let rise2 = max_rise(recs2);
    Ok((
        rise1 <= bound1 && rise2 <= bound2,
        format!(
            "200 steps, largest E^j - E^(j-1): exp 1 (n=16) {rise1:.2e} <= {bound1:.2e}; exp 2 (n=4) {rise2:.2e} <= {bound2:.2e}"
        ),
    ))
}

/// `|| |d|^2 - 1 ||_{L^2}` after a fixed short run at h = 2^-3, 2^-4, 2^-5.
/// The step is k / 16 so that the fixed point contracts on the finest mesh.
fn c4() -> Outcome {
    let mut pairs = Vec::new();
    for n in [16, 32, 64] {
        let mut cfg = reduced(Experiment::Smooth, n, 16);
        cfg.k /= 16.0;
        cfg.t_end = 16.0 * cfg.k;
        let run = Run::new(&cfg, false)?;
        pairs.push((cfg.h(), run.traj.records.last().expect("records").unit_norm_l2));
    }
    let rate = estimate_rate(&pairs)?;
    let errs: Vec<String> = pairs.iter().map(|(h, e)| format!("h={h}: {e:.3e}")).collect();
    Ok((rate.fitted_order >= 0.9, format!("fitted order {:.3} >= 0.9 ({})", rate.fitted_order, errs.join(", "))))
}

fn c5() -> Outcome {
    let mut pairs = Vec::new();
    for n in [16, 32, 64, 128] {
        let mesh = std::sync::Arc::new(Mesh::build_box(&BoxDomain::cube(2, -1.0, 1.0)?, n)?);
        let space = FESpace::new(mesh.clone(), SpaceKind::P1Vector);
        let d = interpolate_nodal(&space, |x| smooth_director(x, 2))?;
        pairs.push((mesh.h(), l2_error(&d, |x| smooth_director(x, 2), 6)));
    }
    let rate = estimate_rate(&pairs)?;
    let o = rate.fitted_order;
    Ok(((1.8..=2.2).contains(&o), format!("L2 interpolation order {o:.3} in [1.8, 2.2] over n = 16..128")))
}

fn c6() -> Outcome {
    let opts = SuiteOptions { random_fields: 1000, ..Default::default() };
    let checks = run_suite(Suite::Lumping, &opts)?;
    let ok = checks.iter().all(|c| c.passed());
    let violations: f64 = checks.iter().filter(|c| c.name.contains("violations")).map(|c| c.value).sum();
    Ok((ok, format!("1000 random P1 fields per dimension (2D, 3D): {violations} violations of ||y|| <= ||y||_h <= sqrt(dim+2) ||y||")))
}

fn c7() -> Outcome {
    use common::identities::{Instance, IDENTITIES, IDENTITY_TOL};
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, check) in IDENTITIES {
        let worst = (0..100u64).map(|s| check(&mut Instance::nth(s))).fold(0.0, f64::max);
        ok &= worst <= IDENTITY_TOL;
        parts.push(format!("{name} {worst:.1e}"));
    }
    Ok((ok, format!("100 instances each, worst relative defect <= 1e-11: {}", parts.join(", "))))
}

fn c8(exp1: &Run) -> Outcome {
    let (disc, states) = (&exp1.disc, &exp1.traj.states);
    let bound = 1e-5 * exp1.e0();
    let mut values = vec![evi_residual(disc, states, &EviTestFunction::zero(disc), 0, 50)?];
    for seed in 1..=5 {
        values.push(evi_residual(disc, states, &EviTestFunction::random(disc, seed)?, 0, 50)?);
    }
    let worst = values.iter().copied().fold(f64::MIN, f64::max);
    let list: Vec<String> = values.iter().map(|v| format!("{v:.2e}")).collect();
    Ok((worst <= bound, format!("50 steps of exp 1, zero and 5 random tests: [{}] <= {bound:.2e}", list.join(", "))))
}

fn c9(run: &DefectRun) -> Outcome {
    let elastic = |r: &StepRecord| r.breakdown.elastic;
    let (e0, e1, e_end) = (elastic(&run.records[0]), elastic(&run.records[400]), elastic(run.records.last().expect("records")));
    let fraction = (e0 - e1) / (e0 - e_end);
    let nv = run.num_vertices;
    let d = run.at_0_1.d.values();
    let d3 = run.mesh_mid_plane.iter().map(|&z| d[2 * nv + z].abs()).fold(0.0, f64::max);
    Ok((
        fraction >= 0.5 && d3 <= 0.9,
        format!(
            "exp 2 at n=4: elastic drop by t=0.1 is {:.1}% of the drop by t=0.4 (>= 50%); max midplane |d3| at t=0.1 = {d3:.3} (<= 0.9)",
            100.0 * fraction
        ),
    ))
}

fn c10() -> Outcome {
    let found = common::oracle::all();
    let worst = found.iter().max_by(|a, b| (a.error / a.tol).total_cmp(&(b.error / b.tol))).expect("comparisons");
    let bad = found.iter().filter(|d| !d.ok()).count();
    Ok((
        bad == 0,
        format!("{} comparisons, {bad} above 1e-12; worst {} at {:.1e}", found.len(), worst.name, worst.error),
    ))
}

fn report(number: usize, title: &str, outcome: Outcome, failures: &mut Vec<usize>) {
    let (ok, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    if !ok {
        failures.push(number);
    }
    println!("{} criterion {number} ({title}): {detail}", if ok { "PASS" } else { "FAIL" });
}

fn main() {
    let start = Instant::now();
    let mut failures = Vec::new();
    let runs = (|| -> Result<_, Box<dyn Error>> {
        let exp1 = Run::new(&reduced(Experiment::Smooth, 16, 200), true)?;
        let exp2 = Run::new(&reduced(Experiment::Defects, 8, 50), false)?;
        let exp3 = Run::new(&reduced(Experiment::RotatingDefects, 8, 50), false)?;
        Ok((exp1, exp2, exp3))
    })();
    let defects = defect_run();
    match &runs {
        Ok((e1, e2, e3)) => {
            report(1, "nodal unit norm", c1(e1, e2, e3), &mut failures);
            report(2, "discrete energy equality", c2(e1), &mut failures);
        }
        Err(e) => {
            for (n, t) in [(1, "nodal unit norm"), (2, "discrete energy equality")] {
                report(n, t, Err(e.to_string().into()), &mut failures);
            }
        }
    }
    match (&runs, &defects) {
        (Ok((e1, _, _)), Ok(d)) => report(3, "energy monotonicity", c3(e1, d), &mut failures),
        _ => report(3, "energy monotonicity", Err("a reference run failed".into()), &mut failures),
    }
    report(4, "unit-norm rate", c4(), &mut failures);
    report(5, "interpolation order", c5(), &mut failures);
    report(6, "mass-lumping norm equivalence", c6(), &mut failures);
    report(7, "operator identities", c7(), &mut failures);
    match &runs {
        Ok((e1, _, _)) => report(8, "energy-variational inequality", c8(e1), &mut failures),
        Err(e) => report(8, "energy-variational inequality", Err(e.to_string().into()), &mut failures),
    }
    match &defects {
        Ok(d) => report(9, "defect annihilation", c9(d), &mut failures),
        Err(e) => report(9, "defect annihilation", Err(e.to_string().into()), &mut failures),
    }
    report(10, "small-oracle equivalence", c10(), &mut failures);
    println!("acceptance: {} of 10 passed in {:.0} s", 10 - failures.len(), start.elapsed().as_secs_f64());
    if !failures.is_empty() {
        println!("failed criteria: {failures:?}");
        std::process::exit(1);
    }
}
