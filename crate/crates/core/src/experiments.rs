//! Preset sweeps, one per published figure, and their CSV output.

use crate::config::Config;
use crate::engine::{sweep, Axis, Protocol, SweepRow};
use crate::error::{Error, Result};
use crate::ssoa::{compare_runs, ComparisonRow};

pub const PRESET_NAMES: [&str; 6] = ["fig8", "fig9", "fig10", "fig11", "fig12", "fig13"];

#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub title: &'static str,
    pub axis: Axis,
    pub values: Vec<usize>,
    pub config: Config,
}

fn holes_axis() -> Vec<usize> {
    (1..=10).map(|k| 10 * k).collect()
}

fn density_axis() -> Vec<usize> {
    (124..=154).step_by(5).collect()
}

pub fn preset(name: &str) -> Option<Preset> {
    let mut config = Config::default();
    let (title, axis, values) = match name {
        "fig8" => ("sensing holes vs recovery time", Axis::Holes, holes_axis()),
        "fig9" => {
            config.scenario.max_threshold = 160;
            ("node density vs recovery time (20 holes)", Axis::Density, density_axis())
        }
        "fig10" => ("sensing holes vs distance moved", Axis::Holes, holes_axis()),
        "fig11" => {
            config.scenario.max_threshold = 160;
            ("node density vs coverage (20 holes)", Axis::Density, density_axis())
        }
        "fig12" => {
            config.scenario.max_threshold = 160;
            ("node density vs computational cost (20 holes)", Axis::Density, density_axis())
        }
        "fig13" => {
            config.field.initial_energy = 30.0;
            ("sensing holes vs energy spent (30 J)", Axis::Holes, holes_axis())
        }
        _ => return None,
    };
    let name = PRESET_NAMES.iter().copied().find(|&n| n == name)?;
    Some(Preset {
        name,
        title,
        axis,
        values,
        config,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub rows: Vec<SweepRow>,
    pub comparisons: Vec<(usize, ComparisonRow)>,
}

pub fn run_preset(p: &Preset) -> Result<ExperimentOutput> {
    let rows = sweep(&p.config, p.axis, &p.values, &[Protocol::Hybrid, Protocol::Ssoa])?;
    let comparisons = rows
        .chunks(2)
        .map(|pair| match pair {
            [h, s] => Ok((h.axis_value, compare_runs(&h.metrics, &s.metrics)?)),
            _ => Err(Error::Invariant("sweep rows are not paired".into())),
        })
        .collect::<Result<_>>()?;
    Ok(ExperimentOutput { rows, comparisons })
}

pub fn results_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(crate::engine::ScenarioMetrics::CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.metrics.to_csv_row(r.axis_value as f64));
        out.push('\n');
    }
    out
}

pub fn comparison_csv(rows: &[(usize, ComparisonRow)]) -> String {
    let mut out = String::from(ComparisonRow::CSV_HEADER);
    out.push('\n');
    for (v, r) in rows {
        out.push_str(&r.to_csv_row(*v as f64));
        out.push('\n');
    }
    out
}
