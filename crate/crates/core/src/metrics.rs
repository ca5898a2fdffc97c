//! Planar squeezing parameters, entanglement witnesses and the analytic
//! optical-depth model.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::measurement::Sample;
use crate::spin::{FX, FY, FZ, JM, JX};

/// Separable bound of the planar-variance criterion for spin 1.
pub const HE_BOUND_F1: f64 = 7.0 / 16.0;

/// Relative margin a witness must clear so that rounding at the boundary
/// never reports detection.
pub const WITNESS_MARGIN: f64 = 1e-12;

/// Moments of the collective spin used by the planar quantifiers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarMoments {
    pub mean_fx: f64,
    pub mean_fy: f64,
    pub mean_fz: f64,
    pub var_fx: f64,
    pub var_fy: f64,
    pub var_fz: f64,
    pub cov_xz: f64,
    pub n_at: f64,
}

impl PlanarMoments {
    pub fn from_sample(s: &Sample) -> Self {
        PlanarMoments {
            mean_fx: s.means[FX],
            mean_fy: s.means[FY],
            mean_fz: s.means[FZ],
            var_fx: s.cov[(FX, FX)],
            var_fy: s.cov[(FY, FY)],
            var_fz: s.cov[(FZ, FZ)],
            cov_xz: s.cov[(FX, FZ)],
            n_at: s.atom_number,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.var_fx < 0.0 || self.var_fy < 0.0 || self.var_fz < 0.0 {
            return Err(SimError::Precondition(format!(
                "negative variance in {self:?}"
            )));
        }
        if self.cov_xz.abs() > (self.var_fx * self.var_fz).sqrt() + 1e-9 * (self.var_fx + self.var_fz).max(1.0) {
            return Err(SimError::Precondition(format!(
                "|cov_xz| exceeds the Cauchy-Schwarz bound in {self:?}"
            )));
        }
        Ok(())
    }

    /// Moments in x–z axes turned by `theta`: `x' = x cos θ + z sin θ`,
    /// `z' = −x sin θ + z cos θ`.
    pub fn rotated(&self, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        PlanarMoments {
            mean_fx: c * self.mean_fx + s * self.mean_fz,
            mean_fz: -s * self.mean_fx + c * self.mean_fz,
            var_fx: c * c * self.var_fx + s * s * self.var_fz + 2.0 * s * c * self.cov_xz,
            var_fz: s * s * self.var_fx + c * c * self.var_fz - 2.0 * s * c * self.cov_xz,
            cov_xz: s * c * (self.var_fz - self.var_fx) + (c * c - s * s) * self.cov_xz,
            ..*self
        }
    }

    /// Same moments seen from axes with x along the in-plane mean spin.
    pub fn aligned(&self) -> Self {
        let mut out = self.rotated(self.mean_fz.atan2(self.mean_fx));
        out.mean_fz = 0.0;
        out
    }

    pub fn planar_variance(&self) -> f64 {
        self.var_fx + self.var_fz
    }
}

/// `√(⟨F_x⟩² + ⟨F_z⟩²)`.
pub fn f_parallel(m: &PlanarMoments) -> f64 {
    m.mean_fx.hypot(m.mean_fz)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarSqueezing {
    pub f_parallel: f64,
    /// `(var F_x + var F_z) / F∥`.
    pub xi_par2: f64,
    /// `2 var F_x / F∥`.
    pub xi_x2: f64,
    /// `2 var F_z / F∥`.
    pub xi_z2: f64,
    /// All three parameters strictly below one.
    pub planar_squeezed: bool,
}

pub fn xi_planar(m: &PlanarMoments) -> Result<PlanarSqueezing> {
    let fp = f_parallel(m);
    if !(fp > 0.0) {
        return Err(SimError::UndefinedParameter(
            "planar squeezing needs a nonzero in-plane spin".into(),
        ));
    }
    let xi_par2 = m.planar_variance() / fp;
    let xi_x2 = 2.0 * m.var_fx / fp;
    let xi_z2 = 2.0 * m.var_fz / fp;
    Ok(PlanarSqueezing {
        f_parallel: fp,
        xi_par2,
        xi_x2,
        xi_z2,
        planar_squeezed: xi_par2 < 1.0 && xi_x2 < 1.0 && xi_z2 < 1.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeWitness {
    /// `(var F_x + var F_z) / N`.
    pub value: f64,
    pub entangled: bool,
}

/// Planar-variance separability criterion for spin 1.
pub fn he_witness(m: &PlanarMoments) -> Result<HeWitness> {
    if !(m.n_at > 0.0) {
        return Err(SimError::UndefinedParameter(format!(
            "atom number must be positive, got {}",
            m.n_at
        )));
    }
    let value = m.planar_variance() / m.n_at;
    Ok(HeWitness {
        value,
        entangled: value < HE_BOUND_F1,
    })
}

/// Ensemble sums `Σ_n ⟨(f_i⁽ⁿ⁾)²⟩` for i = x, y, z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SquareSums {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// Spin-1 single-atom square sums from collective alignment means:
/// `f_z² = (2 + √3 j_m)/3` and `f_x² − f_y² = j_x`, with `Σ f_i² = 2`.
pub fn square_sums_from_alignment(n_at: f64, mean_jx: f64, mean_jm: f64) -> SquareSums {
    let z = (2.0 * n_at + 3f64.sqrt() * mean_jm) / 3.0;
    let x = (2.0 * n_at - z + mean_jx) / 2.0;
    let y = 2.0 * n_at - x - z;
    SquareSums { x, y, z }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VitaglianoInput {
    pub var_fx: f64,
    pub var_fz: f64,
    /// `⟨F_y²⟩ = var F_y + ⟨F_y⟩²`.
    pub second_moment_fy: f64,
    pub sums: SquareSums,
    pub n_at: f64,
    /// Per-particle spin quantum number.
    pub spin: f64,
}

impl VitaglianoInput {
    pub fn from_sample(s: &Sample, spin: f64) -> Self {
        VitaglianoInput {
            var_fx: s.cov[(FX, FX)],
            var_fz: s.cov[(FZ, FZ)],
            second_moment_fy: s.cov[(FY, FY)] + s.means[FY] * s.means[FY],
            sums: square_sums_from_alignment(s.atom_number, s.means[JX], s.means[JM]),
            n_at: s.atom_number,
            spin,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VitaglianoWitness {
    /// `(N−1)[(Δ̃F_x)² + (Δ̃F_z)²]`.
    pub numerator: f64,
    /// `⟨F̃_y²⟩ − N(N−1)F²`.
    pub denominator: f64,
    /// `numerator / denominator`.
    pub literal: f64,
    /// The ratio oriented so that values below one mean the inequality
    /// `numerator ≥ denominator` is violated: equal to `literal` for a
    /// positive denominator and `2 − literal` for a negative one.
    pub oriented: f64,
    pub denominator_negative: bool,
    /// `numerator < denominator`, beyond rounding.
    pub entangled: bool,
}

/// Generalized spin-squeezing parameter with single-atom terms removed.
pub fn vitagliano_xi_d(input: &VitaglianoInput) -> Result<VitaglianoWitness> {
    let n = input.n_at;
    if !(n >= 2.0) {
        return Err(SimError::UndefinedParameter(format!(
            "the witness needs at least two atoms, got {n}"
        )));
    }
    let dx = input.var_fx - input.sums.x;
    let dz = input.var_fz - input.sums.z;
    let fy2 = input.second_moment_fy - input.sums.y;
    let numerator = (n - 1.0) * (dx + dz);
    let denominator = fy2 - n * (n - 1.0) * input.spin * input.spin;
    if denominator == 0.0 {
        return Err(SimError::UndefinedWitness {
            numerator,
            denominator,
        });
    }
    let literal = numerator / denominator;
    let denominator_negative = denominator < 0.0;
    Ok(VitaglianoWitness {
        numerator,
        denominator,
        literal,
        oriented: if denominator_negative { 2.0 - literal } else { literal },
        denominator_negative,
        entangled: numerator < denominator - WITNESS_MARGIN * denominator.abs(),
    })
}

fn check_model_args(alpha0: f64, eta: f64) -> Result<()> {
    if !(alpha0 > 0.0) {
        return Err(SimError::Precondition(format!("alpha0 must be positive, got {alpha0}")));
    }
    if !(0.0..1.0).contains(&eta) {
        return Err(SimError::Precondition(format!("eta must lie in [0, 1), got {eta}")));
    }
    Ok(())
}

/// `1/(1 + α₀η) + 2η`: measurement gain against scattering noise.
pub fn simple_model_xi2(alpha0: f64, eta: f64) -> Result<f64> {
    check_model_args(alpha0, eta)?;
    Ok(1.0 / (1.0 + alpha0 * eta) + 2.0 * eta)
}

/// `η₀ = 1/√(2α₀)`, the optimum for `α₀η ≫ 1`.
pub fn optimal_eta(alpha0: f64) -> Result<f64> {
    check_model_args(alpha0, 0.0)?;
    Ok(1.0 / (2.0 * alpha0).sqrt())
}

/// `ξ²_min = 2√(2/α₀)`, the minimum for `α₀η ≫ 1`.
pub fn xi2_min(alpha0: f64) -> Result<f64> {
    check_model_args(alpha0, 0.0)?;
    Ok(2.0 * (2.0 / alpha0).sqrt())
}

/// Stationary point of `simple_model_xi2` without the large-α₀
/// approximation: `(1 + α₀η)² = α₀/2`. Zero when `α₀ ≤ 2`.
pub fn exact_optimal_eta(alpha0: f64) -> Result<f64> {
    check_model_args(alpha0, 0.0)?;
    Ok((((alpha0 / 2.0).sqrt() - 1.0) / alpha0).max(0.0))
}
