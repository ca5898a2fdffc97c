//! Cartesian parameter sweeps run in parallel with per-cell seeds.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::measurement::ProbeMode;
use crate::runner::config::SimConfig;
use crate::runner::report::{simulate, write_csv, SqueezingReport};

/// SplitMix64 finalizer. Stable across platforms and releases.
pub fn splitmix64(z: u64) -> u64 {
    let mut z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of cell `index`: `splitmix64(splitmix64(master) ^ index)`.
pub fn cell_seed(master: u64, index: usize) -> u64 {
    splitmix64(splitmix64(master) ^ index as u64)
}

/// Axis values of one cell. `None` means the base config's value is kept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct CellAxes {
    pub alpha0: Option<f64>,
    pub x: Option<f64>,
    pub mode: Option<ProbeMode>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSpec {
    pub index: usize,
    pub id: String,
    pub axes: CellAxes,
    pub seed: u64,
    pub config: SimConfig,
}

pub fn cell_id(index: usize) -> String {
    format!("c{index:03}")
}

impl CellSpec {
    pub fn new(base: &SimConfig, index: usize, axes: CellAxes) -> Self {
        let mut config = base.clone();
        if let Some(a) = axes.alpha0 {
            config.scattering.alpha0 = a;
        }
        if let Some(x) = axes.x {
            config.atoms.noise_factor = x;
        }
        if let Some(m) = axes.mode {
            config.schedule.mode = m;
        }
        config.sweep = Default::default();
        let seed = cell_seed(base.outcome.seed, index);
        config.outcome.seed = seed;
        CellSpec {
            index,
            id: cell_id(index),
            axes,
            seed,
            config,
        }
    }
}

/// Cartesian product in the order α₀ (slowest), x, mode (fastest).
/// Empty axes contribute the base value.
pub fn expand(base: &SimConfig) -> Result<Vec<CellSpec>> {
    let s = &base.sweep;
    if s.alpha0.is_empty() && s.x.is_empty() && s.mode.is_empty() {
        return Err(SimError::Config(
            "sweep: at least one of sweep.alpha0, sweep.x, sweep.mode must be non-empty".into(),
        ));
    }
    fn axis<T: Copy>(v: &[T]) -> Vec<Option<T>> {
        if v.is_empty() {
            vec![None]
        } else {
            v.iter().copied().map(Some).collect()
        }
    }
    let mut cells = Vec::new();
    for alpha0 in axis(&s.alpha0) {
        for x in axis(&s.x) {
            for mode in axis(&s.mode) {
                let axes = CellAxes { alpha0, x, mode };
                let cell = CellSpec::new(base, cells.len(), axes);
                cell.config.validate().map_err(|e| match e {
                    SimError::Config(m) => SimError::Config(format!("sweep cell {}: {m}", cell.id)),
                    other => other,
                })?;
                cells.push(cell);
            }
        }
    }
    Ok(cells)
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub spec: CellSpec,
    pub report: std::result::Result<SqueezingReport, SimError>,
}

/// Runs every cell concurrently. Failures stay attached to their cell.
pub fn run_cells(scenario: &str, cells: Vec<CellSpec>) -> Vec<CellResult> {
    cells
        .into_par_iter()
        .map(|spec| {
            let report = simulate(&spec.config)
                .and_then(|run| SqueezingReport::build(scenario, &spec.id, &run));
            if let Err(e) = &report {
                log::warn!("{scenario} cell {} failed: {e}", spec.id);
            }
            CellResult { spec, report }
        })
        .collect()
}

/// One line of the aggregate table. Summary columns are empty for
/// failed cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub cell_id: String,
    pub seed: u64,
    pub alpha0: f64,
    pub x: f64,
    pub mode: ProbeMode,
    pub status: String,
    pub error: String,
    pub n_at: Option<f64>,
    pub eta_per_pulse: Option<f64>,
    pub min_xi_par2: Option<f64>,
    pub t_min_xi_par2: Option<f64>,
    pub xi_x2_at_min: Option<f64>,
    pub xi_z2_at_min: Option<f64>,
    pub coherence_at_min: Option<f64>,
    pub min_he_value: Option<f64>,
    pub min_xid2: Option<f64>,
    pub var_fy_growth: Option<f64>,
}

impl SweepRow {
    pub fn of(cell: &CellResult) -> Self {
        let c = &cell.spec.config;
        let mut row = SweepRow {
            cell_id: cell.spec.id.clone(),
            seed: cell.spec.seed,
            alpha0: c.scattering.alpha0,
            x: c.atoms.noise_factor,
            mode: c.schedule.mode,
            status: "ok".into(),
            error: String::new(),
            n_at: None,
            eta_per_pulse: None,
            min_xi_par2: None,
            t_min_xi_par2: None,
            xi_x2_at_min: None,
            xi_z2_at_min: None,
            coherence_at_min: None,
            min_he_value: None,
            min_xid2: None,
            var_fy_growth: None,
        };
        match &cell.report {
            Ok(r) => {
                let s = &r.summary;
                row.n_at = Some(r.resolved.n_at);
                row.eta_per_pulse = Some(r.resolved.eta_per_pulse);
                row.min_xi_par2 = Some(s.min_xi_par2);
                row.t_min_xi_par2 = Some(s.t_min_xi_par2);
                row.xi_x2_at_min = Some(s.xi_x2_at_min);
                row.xi_z2_at_min = Some(s.xi_z2_at_min);
                row.coherence_at_min = Some(s.coherence_at_min);
                row.min_he_value = Some(s.min_he_value);
                row.min_xid2 = Some(s.min_xid2);
                row.var_fy_growth = Some(s.var_fy_growth);
            }
            Err(e) => {
                row.status = "error".into();
                row.error = e.to_string();
            }
        }
        row
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub scenario: String,
    pub cells: Vec<CellResult>,
}

impl SweepOutput {
    pub fn rows(&self) -> Vec<SweepRow> {
        self.cells.iter().map(SweepRow::of).collect()
    }

    pub fn failures(&self) -> usize {
        self.cells.iter().filter(|c| c.report.is_err()).count()
    }

    pub fn table_path(&self, dir: &Path) -> PathBuf {
        dir.join(format!("{}_all_table.csv", self.scenario))
    }

    /// Per-cell series and summaries plus the aggregate table.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for cell in &self.cells {
            if let Ok(r) = &cell.report {
                r.write(dir)?;
            }
        }
        write_csv(&self.table_path(dir), &self.rows())
    }
}

pub fn sweep(base: &SimConfig) -> Result<SweepOutput> {
    let cells = expand(base)?;
    Ok(SweepOutput {
        scenario: "sweep".into(),
        cells: run_cells("sweep", cells),
    })
}
