//! Larmor precession, the linearized atom–light pulse interaction, and
//! scattering decoherence.

use nalgebra::{DMatrix, DVector, SMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::gaussian::MomentState;
use crate::spin::{Mat8, SingleAtomAlgebra, ATOMIC_DIM, ATOMIC_LABELS, FZ, JX, JY};

/// Rotation angle (rad) above which a pulse is flagged as outside the
/// linearized regime.
pub const LINEARIZATION_WARN_ANGLE: f64 = 0.1;

/// |γ| for ⁸⁷Rb F=1 in rad·s⁻¹·mG⁻¹: one Larmor period of 100 μs at 14.3 mG.
pub const DEFAULT_GYROMAGNETIC_RATIO: f64 = 2.0 * std::f64::consts::PI / (100e-6 * 14.3);

/// Default RK4 substeps used to integrate one pulse.
pub const DEFAULT_PULSE_STEPS: usize = 32;

/// Classical bias field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MagneticField {
    /// Milligauss.
    pub b: [f64; 3],
    /// rad·s⁻¹·mG⁻¹.
    pub gyromagnetic_ratio: f64,
}

impl MagneticField {
    pub fn new(b: [f64; 3], gyromagnetic_ratio: f64) -> Result<Self> {
        if b.iter().any(|v| !v.is_finite()) {
            return Err(SimError::Config(format!("field components must be finite: {b:?}")));
        }
        if !(gyromagnetic_ratio > 0.0) || !gyromagnetic_ratio.is_finite() {
            return Err(SimError::Config(format!(
                "gyromagnetic_ratio must be positive, got {gyromagnetic_ratio}"
            )));
        }
        Ok(MagneticField { b, gyromagnetic_ratio })
    }

    pub fn magnitude(&self) -> f64 {
        self.b.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Unit vector along the field, `None` for a zero field.
    pub fn axis(&self) -> Option<[f64; 3]> {
        let m = self.magnitude();
        (m > 0.0).then(|| [self.b[0] / m, self.b[1] / m, self.b[2] / m])
    }

    /// Larmor angular frequency in rad/μs.
    pub fn larmor_frequency(&self) -> f64 {
        self.gyromagnetic_ratio * self.magnitude() * 1e-6
    }

    /// Larmor period in μs (infinite for a zero field).
    pub fn larmor_period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.larmor_frequency()
    }

    /// Precession angle accumulated over `dt` μs.
    pub fn angle(&self, dt: f64) -> f64 {
        self.larmor_frequency() * dt
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarization {
    H,
    V,
}

impl Polarization {
    /// Sign of `⟨S_x⟩`.
    pub fn sign(self) -> f64 {
        match self {
            Polarization::H => 1.0,
            Polarization::V => -1.0,
        }
    }
}

/// One linearly polarized probe pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StokesPulse {
    pub n_photons: f64,
    pub polarization: Polarization,
    /// μs.
    pub duration: f64,
    /// Vector coupling (rad per spin unit).
    pub g1: f64,
    /// Tensor coupling (rad per alignment unit).
    pub g2: f64,
    /// Per-atom spontaneous scattering probability for this pulse.
    pub eta: f64,
}

impl StokesPulse {
    pub fn validate(&self) -> Result<()> {
        if !(self.n_photons > 0.0) || !self.n_photons.is_finite() {
            return Err(SimError::Structural(format!(
                "pulse photon number must be positive, got {}",
                self.n_photons
            )));
        }
        if !(0.0..1.0).contains(&self.eta) {
            return Err(SimError::Structural(format!(
                "pulse eta must lie in [0, 1), got {}",
                self.eta
            )));
        }
        if !(self.duration >= 0.0) {
            return Err(SimError::Structural(format!(
                "pulse duration must be >= 0, got {}",
                self.duration
            )));
        }
        Ok(())
    }

    /// Shot-noise-limited Stokes moments: `⟨S_x⟩ = ±n/2`,
    /// `var(S_y) = var(S_z) = n/4`.
    pub fn stokes_moments(&self) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.n_photons;
        let mean = DVector::from_row_slice(&[self.polarization.sign() * n / 2.0, 0.0, 0.0]);
        let cov = DMatrix::from_diagonal(&DVector::from_row_slice(&[0.0, n / 4.0, n / 4.0]));
        (mean, cov)
    }

    /// Coupling matrix `K` with `H τ = Σ K_{αa} S_α X_a`.
    fn coupling(&self) -> SMatrix<f64, 3, ATOMIC_DIM> {
        let mut k = SMatrix::<f64, 3, ATOMIC_DIM>::zeros();
        k[(2, FZ)] = self.g1;
        k[(0, JX)] = self.g2;
        k[(1, JY)] = self.g2;
        k
    }
}

/// Labels of one optical pulse block inside a joint state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StokesBlock {
    pub labels: [String; 3],
}

impl StokesBlock {
    pub fn indexed(index: usize) -> Self {
        StokesBlock {
            labels: [
                format!("Sx[{index}]"),
                format!("Sy[{index}]"),
                format!("Sz[{index}]"),
            ],
        }
    }

    pub fn refs(&self) -> [&str; 3] {
        [&self.labels[0], &self.labels[1], &self.labels[2]]
    }

    pub fn sy(&self) -> &str {
        &self.labels[1]
    }
}

/// True for labels belonging to an optical pulse block.
pub fn is_stokes_label(label: &str) -> bool {
    label.starts_with('S')
}

/// Where atoms go after a spontaneous scattering event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DecoherenceModel {
    /// Scattered atoms leave the probed hyperfine manifold.
    #[default]
    Loss,
    /// Scattered atoms stay, fully depolarized.
    Depolarize,
}

/// Collective atomic state together with the mean number of atoms that
/// still belong to the probed spin-1 manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub state: MomentState,
    pub atom_number: f64,
}

impl Ensemble {
    pub fn new(state: MomentState, atom_number: f64) -> Result<Self> {
        for l in ATOMIC_LABELS {
            state.require_index(l)?;
        }
        if !(atom_number > 0.0) {
            return Err(SimError::Structural(format!(
                "atom number must be positive, got {atom_number}"
            )));
        }
        Ok(Ensemble { state, atom_number })
    }

    pub fn time(&self) -> f64 {
        self.state.time()
    }

    pub fn atomic_means(&self) -> Result<[f64; ATOMIC_DIM]> {
        let mut m = [0.0; ATOMIC_DIM];
        for (k, l) in ATOMIC_LABELS.iter().enumerate() {
            m[k] = self.state.mean_of(l)?;
        }
        Ok(m)
    }

    pub fn atomic_cov(&self) -> Result<Mat8> {
        let idx = self.state.indices_of(&ATOMIC_LABELS)?;
        let cov = self.state.cov();
        Ok(Mat8::from_fn(|a, b| cov[(idx[a], idx[b])]))
    }
}

/// Exact rotation of the atomic block about the field over `dt` μs.
pub fn precess(state: &MomentState, field: &MagneticField, dt: f64) -> Result<MomentState> {
    if !(dt >= 0.0) {
        return Err(SimError::Structural(format!("dt must be >= 0, got {dt}")));
    }
    let end = state.time() + dt;
    let Some(axis) = field.axis() else {
        return Ok(state.clone().with_time(end));
    };
    let angle = field.angle(dt);
    if angle == 0.0 {
        return Ok(state.clone().with_time(end));
    }
    let r = SingleAtomAlgebra::get().rotation_map(axis, angle)?;
    Ok(state.apply_block_map(&ATOMIC_LABELS, &r, None)?.with_time(end))
}

/// Linear map taken by the atomic means over `dt` μs of free evolution
/// (precession composed with dephasing).
pub fn free_mean_map(field: &MagneticField, dephasing_rate: f64, dt: f64) -> Result<Mat8> {
    let Some(axis) = field.axis() else {
        return Ok(Mat8::identity());
    };
    let alg = SingleAtomAlgebra::get();
    let r = alg.rotation_map(axis, field.angle(dt))?;
    let r = Mat8::from_fn(|i, j| r[(i, j)]);
    if dephasing_rate == 0.0 || dt == 0.0 {
        return Ok(r);
    }
    let l = alg.rotation_generator(axis);
    Ok((l * l * (dephasing_rate * dt)).exp() * r)
}

/// Independent per-atom phase diffusion about the field axis at `rate`
/// (μs⁻¹): transverse orientation decays as `exp(−rate·dt)`.
pub fn dephase(ensemble: &Ensemble, field: &MagneticField, rate: f64, dt: f64) -> Result<Ensemble> {
    if !(rate >= 0.0) {
        return Err(SimError::Structural(format!("dephasing rate must be >= 0, got {rate}")));
    }
    let Some(axis) = field.axis() else {
        return Ok(ensemble.clone());
    };
    if rate == 0.0 || dt == 0.0 {
        return Ok(ensemble.clone());
    }
    let alg = SingleAtomAlgebra::get();
    let l = alg.rotation_generator(axis);
    // E[exp(δL)] for δ ~ N(0, 2·rate·dt)
    let avg = (l * l * (rate * dt)).exp();
    let m = ensemble.atomic_means()?;
    let m_vec = SMatrix::<f64, 8, 1>::from_row_slice(&m);
    let m_new = avg * m_vec;
    let t_old = alg.second_moment_sum(ensemble.atom_number, &m);
    let t_new = alg.second_moment_sum(ensemble.atom_number, m_new.as_slice());

    // cov' = A (cov − T(m)) Aᵀ + T(A m): apply A as a block map and add the
    // difference of the single-atom terms as noise.
    let a_dyn = DMatrix::from_fn(8, 8, |i, j| avg[(i, j)]);
    let noise = psd_part(&(t_new - avg * t_old * avg.transpose()));
    let noise_dyn = DMatrix::from_fn(8, 8, |i, j| noise[(i, j)]);
    let state = ensemble
        .state
        .apply_block_map(&ATOMIC_LABELS, &a_dyn, Some(&noise_dyn))?;
    Ok(Ensemble {
        state,
        atom_number: ensemble.atom_number,
    })
}

/// Diagnostics from one pulse interaction.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionReport {
    /// Largest rotation angle (rad) the pulse applies to atoms or light.
    pub max_rotation_angle: f64,
    pub linearization_warning: bool,
    /// Tangent map over the atomic labels followed by the pulse labels.
    pub tangent: DMatrix<f64>,
}

const NV: usize = ATOMIC_DIM + 3;
type VecN = SMatrix<f64, NV, 1>;
type MatN = SMatrix<f64, NV, NV>;

struct PulseFlow {
    k: SMatrix<f64, 3, ATOMIC_DIM>,
}

fn levi_civita(a: usize, b: usize, c: usize) -> f64 {
    match (a, b, c) {
        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
        (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
        _ => 0.0,
    }
}

impl PulseFlow {
    /// Heisenberg equations over the unit pulse interval,
    /// `dO/ds = i[Σ K_{αa} S_α X_a, O]`, with products replaced by means.
    fn rate(&self, v: &VecN) -> VecN {
        let alg = SingleAtomAlgebra::get();
        let mut out = VecN::zeros();
        for alpha in 0..3 {
            for a in 0..ATOMIC_DIM {
                let kv = self.k[(alpha, a)];
                if kv == 0.0 {
                    continue;
                }
                let s = v[ATOMIC_DIM + alpha];
                for c in 0..ATOMIC_DIM {
                    let mut acc = 0.0;
                    for d in 0..ATOMIC_DIM {
                        acc += alg.commutator_constant(a, c, d) * v[d];
                    }
                    out[c] -= kv * s * acc;
                }
                let x = v[a];
                for g in 0..3 {
                    let mut acc = 0.0;
                    for dd in 0..3 {
                        acc += levi_civita(alpha, g, dd) * v[ATOMIC_DIM + dd];
                    }
                    out[ATOMIC_DIM + g] -= kv * x * acc;
                }
            }
        }
        out
    }

    fn jacobian(&self, v: &VecN) -> MatN {
        let alg = SingleAtomAlgebra::get();
        let mut j = MatN::zeros();
        for alpha in 0..3 {
            for a in 0..ATOMIC_DIM {
                let kv = self.k[(alpha, a)];
                if kv == 0.0 {
                    continue;
                }
                let s = v[ATOMIC_DIM + alpha];
                for c in 0..ATOMIC_DIM {
                    let mut acc = 0.0;
                    for d in 0..ATOMIC_DIM {
                        let cc = alg.commutator_constant(a, c, d);
                        j[(c, d)] -= kv * s * cc;
                        acc += cc * v[d];
                    }
                    j[(c, ATOMIC_DIM + alpha)] -= kv * acc;
                }
                let x = v[a];
                for g in 0..3 {
                    let mut acc = 0.0;
                    for dd in 0..3 {
                        let e = levi_civita(alpha, g, dd);
                        j[(ATOMIC_DIM + g, ATOMIC_DIM + dd)] -= kv * x * e;
                        acc += e * v[ATOMIC_DIM + dd];
                    }
                    j[(ATOMIC_DIM + g, a)] -= kv * acc;
                }
            }
        }
        j
    }

    /// RK4 for the mean trajectory and its tangent map.
    fn integrate(&self, v0: VecN, steps: usize) -> (VecN, MatN) {
        let h = 1.0 / steps as f64;
        let mut v = v0;
        let mut m = MatN::identity();
        for _ in 0..steps {
            let k1v = self.rate(&v);
            let k1m = self.jacobian(&v) * m;
            let v2 = v + k1v * (h / 2.0);
            let m2 = m + k1m * (h / 2.0);
            let k2v = self.rate(&v2);
            let k2m = self.jacobian(&v2) * m2;
            let v3 = v + k2v * (h / 2.0);
            let m3 = m + k2m * (h / 2.0);
            let k3v = self.rate(&v3);
            let k3m = self.jacobian(&v3) * m3;
            let v4 = v + k3v * h;
            let m4 = m + k3m * h;
            let k4v = self.rate(&v4);
            let k4m = self.jacobian(&v4) * m4;
            v += (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (h / 6.0);
            m += (k1m + k2m * 2.0 + k3m * 2.0 + k4m) * (h / 6.0);
        }
        (v, m)
    }
}

/// Impulsive atom–light interaction for one pulse.
///
/// Means follow the mean-field trajectory of the effective Hamiltonian
/// `G₁ S_z F_z + G₂ (S_x J_x + S_y J_y)` over the pulse; the covariance is
/// propagated with the tangent (Jacobian) map of that trajectory.
pub fn interact(
    joint: &MomentState,
    pulse: &StokesPulse,
    block: &StokesBlock,
    steps: usize,
) -> Result<(MomentState, InteractionReport)> {
    pulse.validate()?;
    let mut labels: Vec<&str> = ATOMIC_LABELS.to_vec();
    labels.extend(block.refs());
    let idx = joint.indices_of(&labels).map_err(|e| {
        SimError::Structural(format!("interact needs the atomic block and pulse block: {e}"))
    })?;
    let v0 = VecN::from_fn(|i, _| joint.mean()[idx[i]]);

    let flow = PulseFlow { k: pulse.coupling() };
    let report = {
        let atom_angle = (0..3)
            .flat_map(|alpha| (0..ATOMIC_DIM).map(move |a| (alpha, a)))
            .map(|(alpha, a)| (flow.k[(alpha, a)] * v0[ATOMIC_DIM + alpha]).abs())
            .fold(0.0, f64::max);
        let light_angle = (0..3)
            .flat_map(|alpha| (0..ATOMIC_DIM).map(move |a| (alpha, a)))
            .map(|(alpha, a)| (flow.k[(alpha, a)] * v0[a]).abs())
            .fold(0.0, f64::max);
        let max_rotation_angle = atom_angle.max(light_angle);
        InteractionReport {
            max_rotation_angle,
            linearization_warning: max_rotation_angle > LINEARIZATION_WARN_ANGLE,
            tangent: DMatrix::identity(NV, NV),
        }
    };
    if report.linearization_warning {
        log::debug!(
            "pulse rotation angle {:.3} rad exceeds {} rad; linearization may be inaccurate",
            report.max_rotation_angle,
            LINEARIZATION_WARN_ANGLE
        );
    }

    if pulse.g1 == 0.0 && pulse.g2 == 0.0 {
        return Ok((joint.clone(), report));
    }
    let (v1, tangent) = flow.integrate(v0, steps.max(1));
    let map = DMatrix::from_fn(NV, NV, |i, j| tangent[(i, j)]);
    let mut out = joint.apply_block_map(&labels, &map, None)?;
    let values: Vec<f64> = v1.iter().copied().collect();
    out = out.with_means(&labels, &values)?;
    Ok((out, InteractionReport { tangent: map, ..report }))
}

/// Nearest PSD matrix. Sampled outcomes can push the collective means
/// slightly outside the set reachable by N physical atoms, where the
/// mean-field second-moment sum picks up small negative eigenvalues.
fn psd_part(m: &Mat8) -> Mat8 {
    let eig = m.symmetric_eigen();
    if eig.eigenvalues.min() >= 0.0 {
        return *m;
    }
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    eig.eigenvectors * Mat8::from_diagonal(&clipped) * eig.eigenvectors.transpose()
}

/// Spontaneous scattering with per-atom probability `eta`.
///
/// Atomic means scale by `1 − η`; the atomic covariance becomes
/// `(1−η)²Γ + η(1−η)·T + [η N Γ_dep]`, where `T` is the ensemble sum of
/// single-atom second moments (binomial partition noise) and the bracketed
/// term is present only when scattered atoms stay depolarized.
pub fn decohere(ensemble: &Ensemble, eta: f64, model: DecoherenceModel) -> Result<Ensemble> {
    if !(0.0..1.0).contains(&eta) {
        return Err(SimError::Structural(format!("eta must lie in [0, 1), got {eta}")));
    }
    if eta == 0.0 {
        return Ok(ensemble.clone());
    }
    let alg = SingleAtomAlgebra::get();
    let n = ensemble.atom_number;
    let m = ensemble.atomic_means()?;
    let mut noise = psd_part(&alg.second_moment_sum(n, &m)) * (eta * (1.0 - eta));
    let atom_number = match model {
        DecoherenceModel::Loss => n * (1.0 - eta),
        DecoherenceModel::Depolarize => {
            noise += alg.depolarized_covariance() * (eta * n);
            n
        }
    };
    let map = DMatrix::identity(8, 8) * (1.0 - eta);
    let noise = DMatrix::from_fn(8, 8, |i, j| noise[(i, j)]);
    let state = ensemble
        .state
        .apply_block_map(&ATOMIC_LABELS, &map, Some(&noise))?;
    Ok(Ensemble { state, atom_number })
}
