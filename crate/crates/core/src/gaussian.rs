//! Labeled Gaussian moment states.
//!
//! A [`MomentState`] holds the first and second moments of a set of named
//! phase-space coordinates. Every operation returns a fresh value; the
//! covariance is re-symmetrized and checked for positive semidefiniteness
//! after each update.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Result, SimError};

/// Relative PSD tolerance on the smallest covariance eigenvalue.
pub const PSD_TOLERANCE: f64 = 1e-9;

/// Relative symmetry tolerance accepted on construction.
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct MomentState {
    labels: Vec<String>,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    /// Microseconds.
    time: f64,
}

impl MomentState {
    pub fn new(
        labels: Vec<String>,
        mean: DVector<f64>,
        cov: DMatrix<f64>,
        time: f64,
    ) -> Result<Self> {
        let n = labels.len();
        if mean.len() != n || cov.nrows() != n || cov.ncols() != n {
            return Err(SimError::Structural(format!(
                "dimension mismatch: {} labels, mean {}, cov {}x{}",
                n,
                mean.len(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        check_unique(&labels)?;
        let scale = cov.amax();
        let asym = (&cov - cov.transpose()).amax();
        if asym > SYMMETRY_TOLERANCE * scale {
            return Err(SimError::Structural(format!(
                "covariance not symmetric (max asymmetry {asym:e})"
            )));
        }
        let state = MomentState {
            labels,
            mean,
            cov: symmetrize(cov),
            time,
        };
        state.check_psd("construction")?;
        Ok(state)
    }

    /// An empty state at time `time`.
    pub fn empty(time: f64) -> Self {
        MomentState {
            labels: Vec::new(),
            mean: DVector::zeros(0),
            cov: DMatrix::zeros(0, 0),
            time,
        }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn require_index(&self, label: &str) -> Result<usize> {
        self.index_of(label)
            .ok_or_else(|| SimError::Structural(format!("unknown label {label:?}")))
    }

    pub fn indices_of(&self, labels: &[&str]) -> Result<Vec<usize>> {
        labels.iter().map(|l| self.require_index(l)).collect()
    }

    pub fn contains(&self, label: &str) -> bool {
        self.index_of(label).is_some()
    }

    pub fn mean_of(&self, label: &str) -> Result<f64> {
        Ok(self.mean[self.require_index(label)?])
    }

    pub fn var_of(&self, label: &str) -> Result<f64> {
        let i = self.require_index(label)?;
        Ok(self.cov[(i, i)])
    }

    pub fn cov_of(&self, a: &str, b: &str) -> Result<f64> {
        Ok(self.cov[(self.require_index(a)?, self.require_index(b)?)])
    }

    /// Smallest eigenvalue of the covariance (0 for an empty state).
    pub fn min_eigenvalue(&self) -> f64 {
        if self.dim() == 0 {
            return 0.0;
        }
        SymmetricEigen::new(self.cov.clone()).eigenvalues.min()
    }

    pub fn check_psd(&self, operation: &str) -> Result<()> {
        if self.dim() == 0 {
            return Ok(());
        }
        let trace = self.cov.trace();
        let eigenvalue = self.min_eigenvalue();
        if eigenvalue < -PSD_TOLERANCE * trace.abs() {
            return Err(SimError::NumericalDegradation {
                operation: operation.to_string(),
                eigenvalue,
                trace,
            });
        }
        Ok(())
    }

    /// `mean' = M mean`, `cov' = M cov Mᵀ + noise`.
    pub fn apply_linear_map(
        &self,
        map: &DMatrix<f64>,
        added_noise: Option<&DMatrix<f64>>,
    ) -> Result<Self> {
        let n = self.dim();
        if map.nrows() != n || map.ncols() != n {
            return Err(SimError::Structural(format!(
                "map is {}x{}, state dimension {n}",
                map.nrows(),
                map.ncols()
            )));
        }
        let mut cov = map * &self.cov * map.transpose();
        if let Some(noise) = added_noise {
            if noise.nrows() != n || noise.ncols() != n {
                return Err(SimError::Structural(format!(
                    "noise is {}x{}, state dimension {n}",
                    noise.nrows(),
                    noise.ncols()
                )));
            }
            cov += noise;
        }
        self.replaced(map * &self.mean, cov, "apply_linear_map")
    }

    /// Applies `map` to the coordinates named by `labels` and leaves the
    /// others untouched. Cross-covariances with the rest transform as `M Γ`.
    pub fn apply_block_map(
        &self,
        labels: &[&str],
        map: &DMatrix<f64>,
        added_noise: Option<&DMatrix<f64>>,
    ) -> Result<Self> {
        let idx = self.indices_of(labels)?;
        let k = idx.len();
        if map.nrows() != k || map.ncols() != k {
            return Err(SimError::Structural(format!(
                "block map is {}x{}, block has {k} labels",
                map.nrows(),
                map.ncols()
            )));
        }
        let n = self.dim();
        let mut full = DMatrix::identity(n, n);
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                full[(i, j)] = map[(a, b)];
            }
        }
        let noise = match added_noise {
            None => None,
            Some(q) => {
                if q.nrows() != k || q.ncols() != k {
                    return Err(SimError::Structural("block noise shape mismatch".into()));
                }
                let mut big = DMatrix::zeros(n, n);
                for (a, &i) in idx.iter().enumerate() {
                    for (b, &j) in idx.iter().enumerate() {
                        big[(i, j)] = q[(a, b)];
                    }
                }
                Some(big)
            }
        };
        self.apply_linear_map(&full, noise.as_ref())
    }

    /// Block-diagonal extension with a fresh, uncorrelated block.
    pub fn adjoin_block(
        &self,
        labels: &[&str],
        mean: &DVector<f64>,
        cov: &DMatrix<f64>,
    ) -> Result<Self> {
        let k = labels.len();
        if mean.len() != k || cov.nrows() != k || cov.ncols() != k {
            return Err(SimError::Structural(format!(
                "block dimension mismatch: {k} labels, mean {}, cov {}x{}",
                mean.len(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        if let Some(dup) = labels.iter().find(|l| self.contains(l)) {
            return Err(SimError::Structural(format!("label collision on {dup:?}")));
        }
        let mut all: Vec<String> = self.labels.clone();
        all.extend(labels.iter().map(|s| s.to_string()));
        check_unique(&all)?;

        let n = self.dim();
        let mut new_mean = DVector::zeros(n + k);
        new_mean.rows_mut(0, n).copy_from(&self.mean);
        new_mean.rows_mut(n, k).copy_from(mean);
        let mut new_cov = DMatrix::zeros(n + k, n + k);
        new_cov.view_mut((0, 0), (n, n)).copy_from(&self.cov);
        new_cov.view_mut((n, n), (k, k)).copy_from(cov);

        let state = MomentState {
            labels: all,
            mean: new_mean,
            cov: symmetrize(new_cov),
            time: self.time,
        };
        state.check_psd("adjoin_block")?;
        Ok(state)
    }

    /// Marginal over the remaining coordinates.
    pub fn drop_block(&self, labels: &[&str]) -> Result<Self> {
        let drop = self.indices_of(labels)?;
        let keep: Vec<usize> = (0..self.dim()).filter(|i| !drop.contains(i)).collect();
        Ok(self.select(&keep))
    }

    /// Marginal over exactly `labels`, in the given order.
    pub fn marginal(&self, labels: &[&str]) -> Result<Self> {
        let keep = self.indices_of(labels)?;
        Ok(self.select(&keep))
    }

    /// Overwrites the means of `labels`; the covariance is unchanged.
    pub fn with_means(mut self, labels: &[&str], values: &[f64]) -> Result<Self> {
        if labels.len() != values.len() {
            return Err(SimError::Structural(format!(
                "{} labels but {} values",
                labels.len(),
                values.len()
            )));
        }
        let idx = self.indices_of(labels)?;
        for (&i, &v) in idx.iter().zip(values) {
            self.mean[i] = v;
        }
        Ok(self)
    }

    fn select(&self, keep: &[usize]) -> Self {
        let k = keep.len();
        let mean = DVector::from_fn(k, |i, _| self.mean[keep[i]]);
        let cov = DMatrix::from_fn(k, k, |i, j| self.cov[(keep[i], keep[j])]);
        MomentState {
            labels: keep.iter().map(|&i| self.labels[i].clone()).collect(),
            mean,
            cov,
            time: self.time,
        }
    }

    /// Gaussian conditioning on a noisy readout of one coordinate.
    ///
    /// With `c` the covariance column of the measured coordinate and
    /// `s = cov_mm + readout_variance`, the update is
    /// `mean += c (outcome - mean_m) / s` and `cov -= c cᵀ / s`.
    pub fn condition(
        &self,
        measured_label: &str,
        outcome: f64,
        readout_variance: f64,
    ) -> Result<Self> {
        if !(readout_variance >= 0.0) {
            return Err(SimError::Structural(format!(
                "readout variance must be >= 0, got {readout_variance}"
            )));
        }
        let m = self.require_index(measured_label)?;
        let c = self.cov.column(m).into_owned();
        let s = self.cov[(m, m)] + readout_variance;
        if s <= 0.0 {
            if c.amax() == 0.0 {
                return Ok(self.clone());
            }
            return Err(SimError::DegenerateConditioning {
                label: measured_label.to_string(),
            });
        }
        let innovation = outcome - self.mean[m];
        let mean = &self.mean + &c * (innovation / s);
        let cov = &self.cov - (&c * c.transpose()) / s;
        self.replaced(mean, cov, "condition")
    }

    fn replaced(&self, mean: DVector<f64>, cov: DMatrix<f64>, op: &str) -> Result<Self> {
        let state = MomentState {
            labels: self.labels.clone(),
            mean,
            cov: symmetrize(cov),
            time: self.time,
        };
        state.check_psd(op)?;
        Ok(state)
    }
}

pub fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

fn check_unique(labels: &[String]) -> Result<()> {
    for (i, a) in labels.iter().enumerate() {
        if labels[i + 1..].contains(a) {
            return Err(SimError::Structural(format!("duplicate label {a:?}")));
        }
    }
    Ok(())
}
