//! Precession-angle uncertainty of prepared states.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::metrics::{f_parallel, PlanarMoments};

/// Grid points with `|cos φ|` below this are treated as singular.
pub const SINGULAR_COS: f64 = 1e-3;

/// Relative tolerance on the `⟨F_z⟩ = 0` input premise.
pub const MEAN_FZ_TOLERANCE: f64 = 1e-6;

/// Error-propagation phase variance for a rotation by `phi` read out on
/// F_z: `[var F_x sin²φ + var F_z cos²φ + cov sin 2φ] / (F∥² cos²φ)`.
///
/// The input must have its mean spin along +x.
pub fn phase_variance(m: &PlanarMoments, phi: f64) -> Result<f64> {
    let fp = f_parallel(m);
    if !(fp > 0.0) {
        return Err(SimError::Precondition("state has no in-plane spin".into()));
    }
    if m.mean_fz.abs() >= MEAN_FZ_TOLERANCE * fp {
        return Err(SimError::Precondition(format!(
            "input mean F_z must vanish, got {} with F∥ = {fp}",
            m.mean_fz
        )));
    }
    let (s, c) = phi.sin_cos();
    if c.abs() < SINGULAR_COS {
        return Err(SimError::Singularity { phi });
    }
    let signal = m.var_fx * s * s + m.var_fz * c * c + m.cov_xz * (2.0 * phi).sin();
    Ok(signal / (fp * fp * c * c))
}

/// Phase variance of a PCSS with `n_at` atoms and number-noise factor `x`,
/// as given by [`phase_variance`]: `(1 + 2x² tan²φ) / (2N)`.
pub fn pcss_phase_variance(n_at: f64, x: f64, phi: f64) -> f64 {
    let t = phi.tan();
    (1.0 + 2.0 * x * x * t * t) / (2.0 * n_at)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    Absolute,
    RelativeToReference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseCurve {
    pub state_label: String,
    pub normalization: Normalization,
    pub phis: Vec<f64>,
    /// `None` at singular grid points.
    pub variances: Vec<Option<f64>>,
}

impl PhaseCurve {
    pub fn evaluate(label: &str, m: &PlanarMoments, phis: &[f64]) -> Result<Self> {
        check_grid(phis)?;
        let variances = phis
            .iter()
            .map(|&phi| match phase_variance(m, phi) {
                Ok(v) => Ok(Some(v)),
                Err(SimError::Singularity { .. }) => Ok(None),
                Err(e) => Err(e),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PhaseCurve {
            state_label: label.to_string(),
            normalization: Normalization::Absolute,
            phis: phis.to_vec(),
            variances,
        })
    }

    /// Pointwise ratio to `reference` on the same grid.
    pub fn normalized_by(&self, reference: &PhaseCurve) -> Result<Self> {
        if self.phis != reference.phis {
            return Err(SimError::Structural("curves use different grids".into()));
        }
        let variances = self
            .variances
            .iter()
            .zip(&reference.variances)
            .map(|(a, b)| match (a, b) {
                (Some(a), Some(b)) => Some(a / b),
                _ => None,
            })
            .collect();
        Ok(PhaseCurve {
            state_label: self.state_label.clone(),
            normalization: Normalization::RelativeToReference,
            phis: self.phis.clone(),
            variances,
        })
    }

    /// Defined values restricted to `|φ| ≤ phi_max`.
    pub fn defined_within(&self, phi_max: f64) -> Vec<f64> {
        self.phis
            .iter()
            .zip(&self.variances)
            .filter(|(p, _)| p.abs() <= phi_max)
            .filter_map(|(_, v)| *v)
            .collect()
    }
}

fn check_grid(phis: &[f64]) -> Result<()> {
    if phis.is_empty() {
        return Err(SimError::Structural("empty phase grid".into()));
    }
    if phis.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(SimError::Structural(
            "phase grid must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Uniform grid from `start` to `end` inclusive.
pub fn uniform_grid(start: f64, end: f64, points: usize) -> Vec<f64> {
    if points < 2 {
        return vec![start];
    }
    let step = (end - start) / (points - 1) as f64;
    (0..points).map(|k| start + k as f64 * step).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveStats {
    /// Fraction of defined grid points where the state beats the reference.
    pub fraction_below_reference: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

impl CurveStats {
    pub fn of(normalized: &[f64]) -> Option<Self> {
        if normalized.is_empty() {
            return None;
        }
        let mut v = normalized.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        };
        Some(CurveStats {
            fraction_below_reference: v.iter().filter(|x| **x < 1.0).count() as f64 / n as f64,
            median,
            min: v[0],
            max: v[n - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub reference: String,
    pub absolute: Vec<PhaseCurve>,
    pub normalized: Vec<PhaseCurve>,
    pub stats: Vec<Option<CurveStats>>,
    /// `beats[i][j]`: fraction of grid points defined for both where state
    /// `i` has the smaller phase variance than state `j`.
    pub beats: Vec<Vec<f64>>,
}

pub fn compare_states(
    states: &[(String, PlanarMoments)],
    phis: &[f64],
    reference: &str,
) -> Result<Comparison> {
    let absolute = states
        .iter()
        .map(|(label, m)| PhaseCurve::evaluate(label, m, phis))
        .collect::<Result<Vec<_>>>()?;
    let ref_curve = absolute
        .iter()
        .find(|c| c.state_label == reference)
        .ok_or_else(|| SimError::Structural(format!("no reference state {reference:?}")))?
        .clone();
    let normalized = absolute
        .iter()
        .map(|c| c.normalized_by(&ref_curve))
        .collect::<Result<Vec<_>>>()?;
    let stats = normalized
        .iter()
        .map(|c| CurveStats::of(&c.defined_within(f64::INFINITY)))
        .collect();
    let beats = absolute
        .iter()
        .map(|a| {
            absolute
                .iter()
                .map(|b| {
                    let pairs: Vec<(f64, f64)> = a
                        .variances
                        .iter()
                        .zip(&b.variances)
                        .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
                        .collect();
                    if pairs.is_empty() {
                        0.0
                    } else {
                        pairs.iter().filter(|(x, y)| x < y).count() as f64 / pairs.len() as f64
                    }
                })
                .collect()
        })
        .collect();
    Ok(Comparison {
        reference: reference.to_string(),
        absolute,
        normalized,
        stats,
        beats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn state(var_fx: f64, var_fz: f64, cov_xz: f64, n: f64) -> PlanarMoments {
        PlanarMoments {
            mean_fx: n,
            mean_fy: 0.0,
            mean_fz: 0.0,
            var_fx,
            var_fy: n / 2.0,
            var_fz,
            cov_xz,
            n_at: n,
        }
    }

    #[test]
    fn pcss_at_zero_is_the_sql() {
        let n = 1.25e6;
        let v = phase_variance(&state(n, n / 2.0, 0.0, n), 0.0).unwrap();
        assert_relative_eq!(v, 1.0 / (2.0 * n), max_relative = 1e-15);
    }

    #[test]
    fn pcss_matches_closed_form() {
        let n = 1e4;
        for x in [0.5, 1.0, 2.0] {
            let m = state(x * x * n, n / 2.0, 0.0, n);
            for phi in uniform_grid(-1.4, 1.4, 57) {
                let v = phase_variance(&m, phi).unwrap();
                assert_relative_eq!(v, pcss_phase_variance(n, x, phi), max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn equal_variances_are_even_in_phi() {
        let n = 100.0;
        let m = state(30.0, 30.0, 0.0, n);
        for phi in [0.1, 0.7, 1.3] {
            let v = phase_variance(&m, phi).unwrap();
            assert_relative_eq!(v, 30.0 / (n * n * phi.cos().powi(2)), max_relative = 1e-14);
            assert_eq!(v, phase_variance(&m, -phi).unwrap());
        }
    }

    #[test]
    fn covariance_sets_the_asymmetry() {
        for cov in [5.0, -5.0] {
            let m = state(30.0, 20.0, cov, 100.0);
            let d = phase_variance(&m, 0.2).unwrap() - phase_variance(&m, -0.2).unwrap();
            assert_eq!(d.signum(), f64::signum(cov));
        }
    }

    #[test]
    fn singular_and_precondition_errors() {
        let m = state(1.0, 1.0, 0.0, 10.0);
        assert!(matches!(
            phase_variance(&m, std::f64::consts::FRAC_PI_2),
            Err(SimError::Singularity { .. })
        ));
        let tilted = PlanarMoments { mean_fz: 0.1, ..m };
        assert!(matches!(phase_variance(&tilted, 0.0), Err(SimError::Precondition(_))));
    }

    #[test]
    fn singular_points_are_absent_from_curves() {
        let m = state(1.0, 1.0, 0.0, 10.0);
        let grid = vec![-std::f64::consts::FRAC_PI_2, 0.0, 1.0];
        let c = PhaseCurve::evaluate("PCSS", &m, &grid).unwrap();
        assert_eq!(c.variances[0], None);
        assert!(c.variances[1].is_some());
    }

    #[test]
    fn non_increasing_grid_rejected() {
        let m = state(1.0, 1.0, 0.0, 10.0);
        assert!(PhaseCurve::evaluate("x", &m, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn reference_normalizes_to_one() {
        let n = 1e3;
        let pcss = state(n, n / 2.0, 0.0, n);
        let pqs = state(0.4 * n, 0.3 * n, 0.0, n);
        let grid = uniform_grid(-1.5, 1.5, 31);
        let cmp = compare_states(
            &[("PCSS".into(), pcss), ("PQS".into(), pqs)],
            &grid,
            "PCSS",
        )
        .unwrap();
        assert!(cmp.normalized[0].defined_within(10.0).iter().all(|v| *v == 1.0));
        let s = cmp.stats[1].unwrap();
        assert_eq!(s.fraction_below_reference, 1.0);
        assert!(s.median < 1.0);
        assert_eq!(cmp.beats[1][0], 1.0);
        assert_eq!(cmp.beats[0][1], 0.0);
    }

    #[test]
    fn planar_bound_holds_on_grid() {
        let n = 1e3;
        let m = state(0.4 * n, 0.2 * n, 0.05 * n, n);
        for phi in uniform_grid(-1.5, 1.5, 301) {
            let v = phase_variance(&m, phi).unwrap();
            let scaled = v * n * n * phi.cos().powi(2);
            assert!(scaled <= m.planar_variance() + m.cov_xz.abs() + 1e-9);
        }
    }

    /// Samples (F_x, F_z), rotates by φ, estimates φ from the F_z readout
    /// with an arcsin estimator, and compares the spread with the formula.
    #[test]
    fn monte_carlo_estimator_variance() {
        let n = 1e4;
        let cases = [
            state(0.4 * n, 0.3 * n, 0.0, n),
            state(1.2 * n, 0.2 * n, 0.1 * n, n),
            state(n, n / 2.0, -0.2 * n, n),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let samples = 100_000;
        for m in &cases {
            let a = m.var_fx.sqrt();
            let b = m.cov_xz / a;
            let c = (m.var_fz - b * b).sqrt();
            for phi in [-0.9, -0.3, 0.0, 0.5, 1.0] {
                let (s, co) = f64::sin_cos(phi);
                let mut vals = Vec::with_capacity(samples);
                for _ in 0..samples {
                    let u: f64 = StandardNormal.sample(&mut rng);
                    let w: f64 = StandardNormal.sample(&mut rng);
                    let fx = m.mean_fx + a * u;
                    let fz = b * u + c * w;
                    let out = fx * s + fz * co;
                    vals.push((out / m.mean_fx).clamp(-1.0, 1.0).asin());
                }
                let mean = vals.iter().sum::<f64>() / samples as f64;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (samples - 1) as f64;
                let expected = phase_variance(m, phi).unwrap();
                // Standard error of a Gaussian sample variance.
                let se = expected * (2.0 / (samples - 1) as f64).sqrt();
                assert!(
                    (var - expected).abs() < 3.0 * se + 1e-3 * expected,
                    "phi {phi}: sampled {var}, formula {expected}"
                );
            }
        }
    }
}
