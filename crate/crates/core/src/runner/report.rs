//! Single-cell simulation, time-series rows, summaries and report files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::Ensemble;
use crate::error::{Result, SimError};
use crate::measurement::{run_schedule, MeasurementRecord, SampleKind, Sample, Trajectory};
use crate::metrics::{he_witness, vitagliano_xi_d, xi_planar, PlanarMoments, VitaglianoInput};
use crate::runner::config::{Resolved, SimConfig};
use crate::spin::make_initial_state;

/// Relative tolerance used to pick the earliest sample at the minimum.
pub const ARGMIN_TOLERANCE: f64 = 1e-9;

/// One simulated configuration.
#[derive(Debug, Clone)]
pub struct CellRun {
    pub config: SimConfig,
    pub resolved: Resolved,
    pub trajectory: Trajectory,
}

pub fn simulate(config: &SimConfig) -> Result<CellRun> {
    config.validate()?;
    let resolved = config.resolve()?;
    let initial = make_initial_state(&config.initial_state_spec(&resolved))?;
    let ensemble = Ensemble::new(initial, resolved.n_at)?;
    let schedule = config.schedule(&resolved)?;
    let trajectory = run_schedule(
        &ensemble,
        &config.probe_settings()?,
        &schedule,
        config.outcome_mode(),
        config.sampling_grid(&resolved),
    )?;
    let flagged: Vec<f64> = trajectory
        .records
        .iter()
        .map(|r| r.max_rotation_angle)
        .filter(|a| *a > crate::dynamics::LINEARIZATION_WARN_ANGLE)
        .collect();
    if let Some(max) = flagged.iter().copied().reduce(f64::max) {
        log::warn!(
            "{} of {} events rotate the probe by more than {} rad (max {max:.3} rad); the linearized back-action may be inaccurate",
            flagged.len(),
            trajectory.records.len(),
            crate::dynamics::LINEARIZATION_WARN_ANGLE
        );
    }
    Ok(CellRun {
        config: config.clone(),
        resolved,
        trajectory,
    })
}

/// One CSV row. ξ_x² and ξ_z² are taken along and across the mean
/// in-plane spin; all other moments are in the laboratory frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub t: f64,
    pub kind: SampleKind,
    pub atom_number: f64,
    pub mean_fx: f64,
    pub mean_fy: f64,
    pub mean_fz: f64,
    pub var_fx: f64,
    pub var_fy: f64,
    pub var_fz: f64,
    pub cov_xz: f64,
    pub f_par: f64,
    pub xi_par2: f64,
    pub xi_x2: f64,
    pub xi_z2: f64,
    pub he_value: f64,
    pub xid_num: f64,
    pub xid_den: f64,
    pub xid2_literal: f64,
    pub xid2: f64,
    pub cov_trace: f64,
    pub min_eigenvalue: f64,
}

impl SeriesRow {
    pub fn from_sample(s: &Sample, spin: f64) -> Result<Self> {
        let lab = PlanarMoments::from_sample(s);
        let frame = lab.aligned();
        let (f_par, xi_par2, xi_x2, xi_z2) = match xi_planar(&frame) {
            Ok(x) => (x.f_parallel, x.xi_par2, x.xi_x2, x.xi_z2),
            Err(SimError::UndefinedParameter(_)) => (0.0, f64::NAN, f64::NAN, f64::NAN),
            Err(e) => return Err(e),
        };
        let he = he_witness(&lab)?;
        let (xid_num, xid_den, xid2_literal, xid2) =
            match vitagliano_xi_d(&VitaglianoInput::from_sample(s, spin)) {
                Ok(w) => (w.numerator, w.denominator, w.literal, w.oriented),
                Err(SimError::UndefinedWitness {
                    numerator,
                    denominator,
                }) => (numerator, denominator, f64::NAN, f64::NAN),
                Err(e) => return Err(e),
            };
        Ok(SeriesRow {
            t: s.time,
            kind: s.kind,
            atom_number: s.atom_number,
            mean_fx: lab.mean_fx,
            mean_fy: lab.mean_fy,
            mean_fz: lab.mean_fz,
            var_fx: lab.var_fx,
            var_fy: lab.var_fy,
            var_fz: lab.var_fz,
            cov_xz: lab.cov_xz,
            f_par,
            xi_par2,
            xi_x2,
            xi_z2,
            he_value: he.value,
            xid_num,
            xid_den,
            xid2_literal,
            xid2,
            cov_trace: s.cov.trace(),
            min_eigenvalue: s.min_eigenvalue,
        })
    }

    /// Laboratory-frame planar moments of this row.
    pub fn planar_moments(&self) -> PlanarMoments {
        PlanarMoments {
            mean_fx: self.mean_fx,
            mean_fy: self.mean_fy,
            mean_fz: self.mean_fz,
            var_fx: self.var_fx,
            var_fy: self.var_fy,
            var_fz: self.var_fz,
            cov_xz: self.cov_xz,
            n_at: self.atom_number,
        }
    }

    /// Smallest of `var_a var_b − ¼⟨F_c⟩²` over cyclic permutations.
    pub fn uncertainty_margin(&self) -> f64 {
        let m = |va: f64, vb: f64, c: f64| va * vb - 0.25 * c * c;
        m(self.var_fx, self.var_fy, self.mean_fz)
            .min(m(self.var_fy, self.var_fz, self.mean_fx))
            .min(m(self.var_fz, self.var_fx, self.mean_fy))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub initial_atom_number: f64,
    pub min_xi_par2: f64,
    pub t_min_xi_par2: f64,
    pub xi_x2_at_min: f64,
    pub xi_z2_at_min: f64,
    pub planar_squeezed_at_min: bool,
    /// F∥ at the ξ∥² minimum over the initial atom number.
    pub coherence_at_min: f64,
    pub min_he_value: f64,
    pub t_min_he: f64,
    pub he_entangled: bool,
    pub min_xid2: f64,
    pub t_min_xid2: f64,
    pub xid_entangled: bool,
    pub var_fy_growth: f64,
    /// Smallest `min_eigenvalue / trace` over the samples.
    pub min_psd_ratio: f64,
    /// Smallest uncertainty margin over the samples, in units of N².
    pub min_uncertainty_margin: f64,
}

fn argmin_by(rows: &[SeriesRow], f: impl Fn(&SeriesRow) -> f64) -> Option<usize> {
    let min = rows
        .iter()
        .map(&f)
        .filter(|v| !v.is_nan())
        .fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return None;
    }
    let bound = min + ARGMIN_TOLERANCE * min.abs();
    rows.iter().position(|r| f(r) <= bound)
}

impl Summary {
    /// Derived from the rows alone, so it can be recomputed from the CSV.
    pub fn from_rows(rows: &[SeriesRow]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| SimError::Structural("empty time series".into()))?;
        let n0 = first.atom_number;
        let i_xi = argmin_by(rows, |r| r.xi_par2)
            .ok_or_else(|| SimError::UndefinedParameter("ξ∥² undefined at every sample".into()))?;
        let i_he = argmin_by(rows, |r| r.he_value).unwrap_or(0);
        let i_xid = argmin_by(rows, |r| r.xid2);
        let at = &rows[i_xi];
        let last = rows.last().unwrap_or(first);
        Ok(Summary {
            initial_atom_number: n0,
            min_xi_par2: at.xi_par2,
            t_min_xi_par2: at.t,
            xi_x2_at_min: at.xi_x2,
            xi_z2_at_min: at.xi_z2,
            planar_squeezed_at_min: at.xi_par2 < 1.0 && at.xi_x2 < 1.0 && at.xi_z2 < 1.0,
            coherence_at_min: at.f_par / n0,
            min_he_value: rows[i_he].he_value,
            t_min_he: rows[i_he].t,
            he_entangled: rows[i_he].he_value < crate::metrics::HE_BOUND_F1,
            min_xid2: i_xid.map_or(f64::NAN, |i| rows[i].xid2),
            t_min_xid2: i_xid.map_or(f64::NAN, |i| rows[i].t),
            xid_entangled: rows.iter().any(|r| {
                r.xid_num < r.xid_den - crate::metrics::WITNESS_MARGIN * r.xid_den.abs()
            }),
            var_fy_growth: last.var_fy / first.var_fy,
            min_psd_ratio: rows
                .iter()
                .map(|r| r.min_eigenvalue / r.cov_trace)
                .fold(f64::INFINITY, f64::min),
            min_uncertainty_margin: rows
                .iter()
                .map(|r| r.uncertainty_margin() / (n0 * n0))
                .fold(f64::INFINITY, f64::min),
        })
    }
}

/// Serialized content of one cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SqueezingReport {
    pub scenario: String,
    pub cell_id: String,
    pub config: SimConfig,
    pub resolved: Resolved,
    pub events: usize,
    pub conditioning_count: usize,
    pub summary: Summary,
    pub records: Vec<MeasurementRecord>,
    #[serde(skip)]
    pub rows: Vec<SeriesRow>,
}

impl SqueezingReport {
    pub fn build(scenario: &str, cell_id: &str, run: &CellRun) -> Result<Self> {
        let spin = run.config.witness.spin;
        let rows = run
            .trajectory
            .samples
            .iter()
            .map(|s| SeriesRow::from_sample(s, spin))
            .collect::<Result<Vec<_>>>()?;
        Ok(SqueezingReport {
            scenario: scenario.to_string(),
            cell_id: cell_id.to_string(),
            config: run.config.clone(),
            resolved: run.resolved,
            events: run.trajectory.records.len(),
            conditioning_count: run.trajectory.conditioning_count,
            summary: Summary::from_rows(&rows)?,
            records: run.trajectory.records.clone(),
            rows,
        })
    }

    pub fn series_path(&self, dir: &Path) -> PathBuf {
        dir.join(format!("{}_{}_series.csv", self.scenario, self.cell_id))
    }

    pub fn summary_path(&self, dir: &Path) -> PathBuf {
        dir.join(format!("{}_{}_summary.json", self.scenario, self.cell_id))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_csv(&self.series_path(dir), &self.rows)?;
        write_json(&self.summary_path(dir), self)
    }
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r)
            .map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .map(|row| row.map_err(|e| SimError::Io(format!("{}: {e}", path.display()))))
        .collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
