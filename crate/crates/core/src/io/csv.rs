//! Energy time series as CSV, one row per time level.

use std::fmt::Write as _;
use std::path::Path;

use crate::diagnostics::StepRecord;

pub const ENERGY_COLUMNS: [&str; 13] = [
    "step",
    "t",
    "E",
    "kinetic",
    "elastic",
    "channel_mu1",
    "channel_mu4",
    "channel_mu56",
    "channel_rotational",
    "numerical_dissipation",
    "energy_residual",
    "unit_norm_max",
    "fp_iterations",
];

/// Renders the rows; floats use the shortest round-trip form so equal
/// trajectories give identical bytes.
pub fn render_energy_csv(records: &[StepRecord]) -> String {
    let mut s = ENERGY_COLUMNS.join(",");
    s.push('\n');
    for r in records {
        let b = &r.breakdown;
        writeln!(
            s,
            "{},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{}",
            r.step,
            r.t,
            b.total_e,
            b.kinetic,
            b.elastic,
            b.channel_mu1,
            b.channel_mu4,
            b.channel_mu56,
            b.channel_rotational,
            b.numerical_dissipation,
            r.energy_residual,
            r.unit_norm_max,
            r.fp_iterations
        )
        .expect("string write");
    }
    s
}

pub fn write_energy_csv(records: &[StepRecord], path: &Path) -> std::io::Result<()> {
    std::fs::write(path, render_energy_csv(records))
}
