//! Driving a configured run to disk.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use thiserror::Error;

use crate::diagnostics::StepRecord;
use crate::io::config::RunConfig;
use crate::io::csv::render_energy_csv;
use crate::io::vtu::{write_collection, write_fields, VtuLayout};
use crate::scheme::{Discretization, SchemeError, Simulation};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error("cannot write {path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },
}

/// Headline numbers of a finished run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub steps: usize,
    pub initial_energy: f64,
    pub final_energy: f64,
    pub max_unit_norm_deviation: f64,
    pub max_step_residual: f64,
    pub final_energy_residual: f64,
    pub files: Vec<PathBuf>,
}

fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Output { path: path.to_path_buf(), source }
}

/// Runs `cfg`, writing `config.toml`, `energy.csv` (one row per step as it
/// completes), `fields_NNNNNN.vtu` snapshots and `fields.pvd` into the output
/// directory. `progress` sees every record.
pub fn run_to_disk(cfg: &RunConfig, mut progress: impl FnMut(&StepRecord)) -> Result<RunSummary, RunError> {
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let cfg_path = dir.join("config.toml");
    std::fs::write(&cfg_path, cfg.to_toml()).map_err(io_err(&cfg_path))?;

    let disc = Discretization::new(cfg.setup())?;
    let mut sim = Simulation::new(&disc, false)?;
    let layout = if cfg.quadratic_cells { VtuLayout::Quadratic } else { VtuLayout::Vertices };
    let total = disc.num_steps();

    let csv_path = dir.join("energy.csv");
    let mut csv = BufWriter::new(File::create(&csv_path).map_err(io_err(&csv_path))?);
    let emit = |csv: &mut BufWriter<File>, rec: &StepRecord, header: bool| -> Result<(), RunError> {
        let text = render_energy_csv(std::slice::from_ref(rec));
        let body = if header { text.as_str() } else { text.split_once('\n').map_or("", |(_, rest)| rest) };
        csv.write_all(body.as_bytes()).and_then(|_| csv.flush()).map_err(io_err(&csv_path))
    };

    let mut files = vec![cfg_path, csv_path.clone()];
    let mut series = Vec::new();
    let mut snapshot = |sim: &Simulation<'_>, files: &mut Vec<PathBuf>| -> Result<(), RunError> {
        let st = sim.state();
        let name = format!("fields_{:06}.vtu", st.step);
        let path = dir.join(&name);
        write_fields(&disc, st, layout, &path).map_err(io_err(&path))?;
        series.push((st.t, name));
        files.push(path);
        Ok(())
    };

    emit(&mut csv, &sim.records()[0], true)?;
    progress(&sim.records()[0]);
    snapshot(&sim, &mut files)?;
    let (mut max_unit, mut max_res) = (sim.records()[0].unit_norm_max, 0.0f64);
    while !sim.finished() {
        let rec = sim.step()?.clone();
        emit(&mut csv, &rec, false)?;
        progress(&rec);
        max_unit = max_unit.max(rec.unit_norm_max);
        max_res = max_res.max(rec.step_residual.abs());
        let due = cfg.save_every > 0 && rec.step % cfg.save_every == 0;
        if due || rec.step == total {
            snapshot(&sim, &mut files)?;
        }
    }
    let pvd = dir.join("fields.pvd");
    write_collection(&series, &pvd).map_err(io_err(&pvd))?;
    files.push(pvd);

    let first = &sim.records()[0];
    let last = sim.records().last().expect("initial record");
    Ok(RunSummary {
        steps: last.step,
        initial_energy: first.breakdown.total_e,
        final_energy: last.breakdown.total_e,
        max_unit_norm_deviation: max_unit,
        max_step_residual: max_res,
        final_energy_residual: last.energy_residual,
        files,
    })
}
