use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nematic::io::config::{ConfigOverrides, Experiment, RunConfig};
use nematic::io::run::run_to_disk;
use nematic::operators::Model;
use nematic::scheme::InitialData;
use nematic::sparsela::SaddleStrategy;
use nematic::verify::{run_suite, Suite, SuiteOptions};

#[derive(Parser)]
#[command(name = "nematic", version, about = "Energy-stable finite-element simulation of nematic liquid crystals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write fields and the energy series.
    Simulate(SimulateArgs),
    /// Run property suites; exits nonzero if a hard invariant fails.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Preset: 1, 2, 3 or custom (custom needs a config file).
    #[arg(long)]
    experiment: Option<Experiment>,
    /// TOML file with any of the run keys; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<Model>,
    /// Lattice cells per axis.
    #[arg(long)]
    n: Option<usize>,
    /// Lattice spacing, instead of --n.
    #[arg(long, conflicts_with = "n")]
    h: Option<f64>,
    /// Time step.
    #[arg(long)]
    k: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    /// Fixed-point tolerance.
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Saddle solver: direct or reuse.
    #[arg(long)]
    solver: Option<SaddleStrategy>,
    #[arg(long)]
    initial: Option<InitialData>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write fields every S steps (0: first and last only).
    #[arg(long)]
    save_every: Option<usize>,
    /// Export every P2 velocity node on quadratic cells.
    #[arg(long)]
    quadratic_cells: bool,
    /// Suppress per-step progress lines.
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// lumping, energy, evi or norm; all suites when omitted.
    #[arg(long)]
    suite: Vec<Suite>,
    #[arg(long, default_value_t = SuiteOptions::default().n_2d)]
    n_2d: usize,
    #[arg(long, default_value_t = SuiteOptions::default().n_3d)]
    n_3d: usize,
    #[arg(long, default_value_t = SuiteOptions::default().steps)]
    steps: usize,
}

impl SimulateArgs {
    fn overrides(&self) -> ConfigOverrides {
        ConfigOverrides {
            experiment: self.experiment,
            model: self.model,
            n: self.n,
            h: self.h,
            k: self.k,
            t_end: self.t_end,
            theta: self.theta,
            initial: self.initial,
            output_dir: self.out.clone(),
            save_every: self.save_every,
            max_iterations: self.max_iterations,
            linear_solver: self.solver,
            quadratic_cells: self.quadratic_cells.then_some(true),
            ..Default::default()
        }
    }
}

fn simulate(args: &SimulateArgs) -> Result<(), Box<dyn std::error::Error>> {
    let file = match &args.config {
        Some(p) => ConfigOverrides::from_file(p)?,
        None => ConfigOverrides::default(),
    };
    let cfg = RunConfig::resolve(&file.overlaid(&args.overrides()))?;
    eprintln!(
        "experiment {} ({:?}, n = {}, h = {}, k = {}, T = {}) -> {}",
        cfg.experiment,
        cfg.model,
        cfg.n,
        cfg.h(),
        cfg.k,
        cfg.t_end,
        cfg.output_dir.display()
    );
    let quiet = args.quiet;
    let summary = run_to_disk(&cfg, |r| {
        if !quiet {
            eprintln!(
                "step {:6} t {:.5} E {:.10e} residual {:+.2e} unit {:.1e} fp {}",
                r.step, r.t, r.breakdown.total_e, r.energy_residual, r.unit_norm_max, r.fp_iterations
            );
        }
    })?;
    println!(
        "{} steps, E {:.10e} -> {:.10e}, energy residual {:+.3e}, max step residual {:.3e}, max unit-norm deviation {:.3e}",
        summary.steps,
        summary.initial_energy,
        summary.final_energy,
        summary.final_energy_residual,
        summary.max_step_residual,
        summary.max_unit_norm_deviation
    );
    Ok(())
}

fn verify(args: &VerifyArgs) -> Result<bool, Box<dyn std::error::Error>> {
    let opts = SuiteOptions { n_2d: args.n_2d, n_3d: args.n_3d, steps: args.steps, ..Default::default() };
    let suites = if args.suite.is_empty() { Suite::ALL.to_vec() } else { args.suite.clone() };
    let mut ok = true;
    for suite in suites {
        println!("[{suite}]");
        for check in run_suite(suite, &opts)? {
            println!("  {check}");
            ok &= !check.hard || check.passed();
        }
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a).map(|_| true),
        Command::Verify(a) => verify(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("hard invariant violated");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
