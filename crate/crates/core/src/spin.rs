//! Exact single-atom spin-1 algebra and collective initial states.
//!
//! The eight Hermitian, traceless operators `f_x, f_y, f_z, j_x, j_y, j_k,
//! j_l, j_m` span su(3). Every per-atom constant used by the simulator
//! (structure constants, second moments, rotation representations) is
//! derived from their 3×3 matrices here rather than typed in by hand.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, Vector3};
use num_complex::Complex64;

use crate::error::{Result, SimError};
use crate::gaussian::MomentState;

pub type Op3 = Matrix3<Complex64>;
pub type Ket3 = Vector3<Complex64>;
pub type Mat8 = SMatrix<f64, 8, 8>;

/// Number of collective atomic coordinates (3 orientation + 5 alignment).
pub const ATOMIC_DIM: usize = 8;

/// Labels of the atomic block, in storage order.
pub const ATOMIC_LABELS: [&str; ATOMIC_DIM] = ["Fx", "Fy", "Fz", "Jx", "Jy", "Jk", "Jl", "Jm"];

pub const FX: usize = 0;
pub const FY: usize = 1;
pub const FZ: usize = 2;
pub const JX: usize = 3;
pub const JY: usize = 4;
pub const JK: usize = 5;
pub const JL: usize = 6;
pub const JM: usize = 7;

const UNIT_TOLERANCE: f64 = 1e-12;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn anti(a: &Op3, b: &Op3) -> Op3 {
    a * b + b * a
}

fn comm(a: &Op3, b: &Op3) -> Op3 {
    a * b - b * a
}

fn trace_re(m: &Op3) -> f64 {
    m.trace().re
}

/// Spin-1 operators in the `|m=+1⟩, |0⟩, |−1⟩` basis with ħ = 1.
#[derive(Debug, Clone)]
pub struct SingleAtomAlgebra {
    ops: [Op3; ATOMIC_DIM],
    gram_inv: Mat8,
    /// `[X_a, X_b] = i Σ_c comm[a][b][c] X_c`
    comm: [[[f64; ATOMIC_DIM]; ATOMIC_DIM]; ATOMIC_DIM],
    /// `½{X_a, X_b} = sym_id[a][b]·1 + Σ_c sym[a][b][c] X_c`
    sym: [[[f64; ATOMIC_DIM]; ATOMIC_DIM]; ATOMIC_DIM],
    sym_id: Mat8,
}

impl SingleAtomAlgebra {
    /// Shared instance, built once on first use.
    pub fn get() -> &'static SingleAtomAlgebra {
        static ALGEBRA: OnceLock<SingleAtomAlgebra> = OnceLock::new();
        ALGEBRA.get_or_init(SingleAtomAlgebra::build)
    }

    pub fn build() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let z = c(0.0, 0.0);
        let fx = Op3::new(z, c(s, 0.0), z, c(s, 0.0), z, c(s, 0.0), z, c(s, 0.0), z);
        let fy = Op3::new(z, c(0.0, -s), z, c(0.0, s), z, c(0.0, -s), z, c(0.0, s), z);
        let fz = Op3::new(c(1.0, 0.0), z, z, z, z, z, z, z, c(-1.0, 0.0));
        let jx = fx * fx - fy * fy;
        let jy = anti(&fx, &fy);
        let jk = anti(&fx, &fz);
        let jl = anti(&fy, &fz);
        let jm = (fz * fz * c(2.0, 0.0) - fx * fx - fy * fy) * c(1.0 / 3f64.sqrt(), 0.0);
        let ops = [fx, fy, fz, jx, jy, jk, jl, jm];

        let gram = Mat8::from_fn(|a, b| trace_re(&(ops[a] * ops[b])));
        let gram_inv = gram
            .try_inverse()
            .expect("spin-1 operator basis is linearly independent");

        let mut alg = SingleAtomAlgebra {
            ops,
            gram_inv,
            comm: [[[0.0; ATOMIC_DIM]; ATOMIC_DIM]; ATOMIC_DIM],
            sym: [[[0.0; ATOMIC_DIM]; ATOMIC_DIM]; ATOMIC_DIM],
            sym_id: Mat8::zeros(),
        };
        for a in 0..ATOMIC_DIM {
            for b in 0..ATOMIC_DIM {
                let k = comm(&alg.ops[a], &alg.ops[b]) * c(0.0, -1.0);
                let (_, coeffs) = alg.expand(&k);
                alg.comm[a][b] = coeffs;
                let h = anti(&alg.ops[a], &alg.ops[b]) * c(0.5, 0.0);
                let (id, coeffs) = alg.expand(&h);
                alg.sym[a][b] = coeffs;
                alg.sym_id[(a, b)] = id;
            }
        }
        alg
    }

    pub fn ops(&self) -> &[Op3; ATOMIC_DIM] {
        &self.ops
    }

    pub fn op(&self, index: usize) -> &Op3 {
        &self.ops[index]
    }

    pub fn f(&self) -> [&Op3; 3] {
        [&self.ops[FX], &self.ops[FY], &self.ops[FZ]]
    }

    /// Decomposes a Hermitian 3×3 matrix as `c₀·1 + Σ c_a X_a`.
    pub fn expand(&self, m: &Op3) -> (f64, [f64; ATOMIC_DIM]) {
        let c0 = trace_re(m) / 3.0;
        let traceless = m - Op3::identity() * c(c0, 0.0);
        let r = SMatrix::<f64, 8, 1>::from_fn(|a, _| trace_re(&(self.ops[a] * traceless)));
        let coeffs = self.gram_inv * r;
        let mut out = [0.0; ATOMIC_DIM];
        out.copy_from_slice(coeffs.as_slice());
        (c0, out)
    }

    /// Structure constants of `[X_a, X_b] = i Σ_c C_abc X_c`.
    pub fn commutator_constant(&self, a: usize, b: usize, c: usize) -> f64 {
        self.comm[a][b][c]
    }

    /// Per-atom symmetrized second moments summed over the ensemble,
    /// `Σ_n ½⟨{X_a, X_b}⟩_n`, expressed through the collective means.
    pub fn second_moment_sum(&self, atom_number: f64, means: &[f64]) -> Mat8 {
        Mat8::from_fn(|a, b| {
            let linear: f64 = (0..ATOMIC_DIM).map(|c| self.sym[a][b][c] * means[c]).sum();
            atom_number * self.sym_id[(a, b)] + linear
        })
    }

    /// Per-atom covariance of the maximally mixed spin-1 state.
    pub fn depolarized_covariance(&self) -> Mat8 {
        Mat8::from_fn(|a, b| trace_re(&(self.ops[a] * self.ops[b])) / 3.0)
    }

    /// Generator `L` of the rotation representation about `axis`:
    /// `rotation_map(axis, θ) = exp(θ L)`.
    pub fn rotation_generator(&self, axis: [f64; 3]) -> Mat8 {
        Mat8::from_fn(|a, cc| -(0..3).map(|k| axis[k] * self.comm[a][k][cc]).sum::<f64>())
    }

    /// Spin-1 rotation unitary `exp(iθ n·f)` in closed form.
    pub fn rotation_unitary(&self, axis: [f64; 3], angle: f64) -> Op3 {
        let gen = self.ops[FX] * c(axis[0], 0.0)
            + self.ops[FY] * c(axis[1], 0.0)
            + self.ops[FZ] * c(axis[2], 0.0);
        // (n·f)³ = n·f for spin 1.
        Op3::identity() + gen * c(0.0, angle.sin()) + gen * gen * c(angle.cos() - 1.0, 0.0)
    }

    /// 8×8 real matrix `R` with `⟨X_a⟩ → Σ_b R_ab ⟨X_b⟩` under precession by
    /// `angle` about `axis`. For the y axis, `F_x → F_x cos θ − F_z sin θ`,
    /// so a spin along +x turns toward +z.
    pub fn rotation_map(&self, axis: [f64; 3], angle: f64) -> Result<DMatrix<f64>> {
        let norm = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(SimError::Structural(format!(
                "rotation axis must be a unit vector, |axis| = {norm}"
            )));
        }
        let u = self.rotation_unitary(axis, angle);
        let ud = u.adjoint();
        let mut r = DMatrix::zeros(ATOMIC_DIM, ATOMIC_DIM);
        for a in 0..ATOMIC_DIM {
            let (_, coeffs) = self.expand(&(ud * self.ops[a] * u));
            for b in 0..ATOMIC_DIM {
                r[(a, b)] = coeffs[b];
            }
        }
        Ok(r)
    }

    /// Means and symmetrized covariances of all eight operators in a pure
    /// single-atom state.
    pub fn single_atom_moments(&self, state: &Ket3) -> Result<SingleAtomMoments> {
        let norm2 = state.norm_squared();
        if (norm2 - 1.0).abs() > UNIT_TOLERANCE {
            return Err(SimError::Structural(format!(
                "single-atom state not normalized: <psi|psi> = {norm2}"
            )));
        }
        let expect = |m: &Op3| (state.adjoint() * m * state)[(0, 0)].re;
        let mut means = [0.0; ATOMIC_DIM];
        for (a, op) in self.ops.iter().enumerate() {
            means[a] = expect(op);
        }
        let cov = Mat8::from_fn(|a, b| {
            0.5 * expect(&anti(&self.ops[a], &self.ops[b])) - means[a] * means[b]
        });
        Ok(SingleAtomMoments { means, cov })
    }
}

/// Single-atom first and second moments over `ATOMIC_LABELS`.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleAtomMoments {
    pub means: [f64; ATOMIC_DIM],
    pub cov: Mat8,
}

/// `|+f_x⟩ = ½(|−1⟩ + √2|0⟩ + |+1⟩)`.
pub fn plus_fx_state() -> Ket3 {
    Ket3::new(c(0.5, 0.0), c(std::f64::consts::FRAC_1_SQRT_2, 0.0), c(0.5, 0.0))
}

/// The `f·n = +1` eigenstate for a unit direction `n`.
pub fn polarized_state(axis: [f64; 3]) -> Result<Ket3> {
    let norm = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(SimError::Structural(format!(
            "polarization axis must be a unit vector, |axis| = {norm}"
        )));
    }
    if (axis[0] - 1.0).abs() < 1e-15 {
        return Ok(plus_fx_state());
    }
    let theta = axis[2].clamp(-1.0, 1.0).acos();
    let phi = axis[1].atan2(axis[0]);
    let alg = SingleAtomAlgebra::get();
    // exp(-iφ f_z) exp(-iθ f_y) |m=+1⟩
    let up = Ket3::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0));
    let ket = alg.rotation_unitary([0.0, 0.0, 1.0], -phi)
        * alg.rotation_unitary([0.0, 1.0, 0.0], -theta)
        * up;
    Ok(ket)
}

/// Collective initial state: a product state with Poisson-like atom-number
/// noise scaled by `number_noise_factor`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct InitialStateSpec {
    pub n_mean: f64,
    /// `var(N) = x² · n_mean`.
    pub number_noise_factor: f64,
    pub polarization_axis: [f64; 3],
}

impl InitialStateSpec {
    pub fn pcss(n_mean: f64, number_noise_factor: f64) -> Self {
        InitialStateSpec {
            n_mean,
            number_noise_factor,
            polarization_axis: [1.0, 0.0, 0.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.n_mean > 0.0) || !self.n_mean.is_finite() {
            return Err(SimError::Config(format!(
                "n_mean must be positive, got {}",
                self.n_mean
            )));
        }
        if !(self.number_noise_factor >= 0.0) || !self.number_noise_factor.is_finite() {
            return Err(SimError::Config(format!(
                "number_noise_factor must be >= 0, got {}",
                self.number_noise_factor
            )));
        }
        let a = self.polarization_axis;
        let norm = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(SimError::Config(format!(
                "polarization_axis must be a unit vector, |axis| = {norm}"
            )));
        }
        Ok(())
    }
}

/// Collective moments of `n_mean` atoms in the same polarized state, with
/// atom-number fluctuations entering as a rank-one inflation along the
/// per-atom mean vector.
pub fn make_initial_state(spec: &InitialStateSpec) -> Result<MomentState> {
    spec.validate()?;
    let alg = SingleAtomAlgebra::get();
    let single = alg.single_atom_moments(&polarized_state(spec.polarization_axis)?)?;
    let n = spec.n_mean;
    let x2 = spec.number_noise_factor * spec.number_noise_factor;
    let m = DVector::from_row_slice(&single.means);
    let mean = &m * n;
    let quantum = DMatrix::from_fn(ATOMIC_DIM, ATOMIC_DIM, |a, b| single.cov[(a, b)]) * n;
    let cov = quantum + (&m * m.transpose()) * (x2 * n);
    MomentState::new(
        ATOMIC_LABELS.iter().map(|s| s.to_string()).collect(),
        mean,
        cov,
        0.0,
    )
}

/// One nonzero structure constant `[X_a, X_b] = i C X_c` with `a < b`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct StructureConstant {
    pub a: &'static str,
    pub b: &'static str,
    pub c: &'static str,
    pub value: f64,
}

/// Constants regenerated from the operator matrices, for inspection.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct OracleConstants {
    pub labels: [&'static str; ATOMIC_DIM],
    pub structure_constants: Vec<StructureConstant>,
    /// `½⟨{X_a, X_b}⟩` identity part per atom.
    pub identity_part: Vec<[f64; ATOMIC_DIM]>,
    /// `Σ_k f_k²` per atom.
    pub casimir: f64,
    pub plus_fx_means: [f64; ATOMIC_DIM],
    pub plus_fx_covariance: Vec<[f64; ATOMIC_DIM]>,
    pub depolarized_covariance: Vec<[f64; ATOMIC_DIM]>,
}

fn rows(m: &Mat8) -> Vec<[f64; ATOMIC_DIM]> {
    (0..ATOMIC_DIM)
        .map(|a| std::array::from_fn(|b| m[(a, b)]))
        .collect()
}

pub fn oracle_constants() -> Result<OracleConstants> {
    let alg = SingleAtomAlgebra::get();
    let mut structure_constants = Vec::new();
    for a in 0..ATOMIC_DIM {
        for b in a + 1..ATOMIC_DIM {
            for c in 0..ATOMIC_DIM {
                let v = alg.commutator_constant(a, b, c);
                if v.abs() > UNIT_TOLERANCE {
                    structure_constants.push(StructureConstant {
                        a: ATOMIC_LABELS[a],
                        b: ATOMIC_LABELS[b],
                        c: ATOMIC_LABELS[c],
                        value: v,
                    });
                }
            }
        }
    }
    let identity = alg.second_moment_sum(1.0, &[0.0; ATOMIC_DIM]);
    let casimir = (0..3)
        .map(|k| trace_re(&(alg.ops[k] * alg.ops[k])) / 3.0)
        .sum();
    let plus = alg.single_atom_moments(&plus_fx_state())?;
    Ok(OracleConstants {
        labels: ATOMIC_LABELS,
        structure_constants,
        identity_part: rows(&identity),
        casimir,
        plus_fx_means: plus.means,
        plus_fx_covariance: rows(&plus.cov),
        depolarized_covariance: rows(&alg.depolarized_covariance()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const TOL: f64 = 1e-12;

    fn close(a: &Op3, b: &Op3) -> bool {
        (a - b).iter().all(|z| z.norm() < TOL)
    }

    #[test]
    fn commutation_relations() {
        let alg = SingleAtomAlgebra::get();
        let [fx, fy, fz] = alg.f();
        let i = c(0.0, 1.0);
        assert!(close(&comm(fx, fy), &(fz * i)));
        assert!(close(&comm(fy, fz), &(fx * i)));
        assert!(close(&comm(fz, fx), &(fy * i)));
    }

    #[test]
    fn casimir_is_two() {
        let alg = SingleAtomAlgebra::get();
        let [fx, fy, fz] = alg.f();
        let cas = fx * fx + fy * fy + fz * fz;
        assert!(close(&cas, &(Op3::identity() * c(2.0, 0.0))));
    }

    #[test]
    fn alignment_operators_hermitian_traceless() {
        let alg = SingleAtomAlgebra::get();
        for op in alg.ops() {
            assert!(close(op, &op.adjoint()));
            assert!(op.trace().norm() < TOL);
        }
    }

    #[test]
    fn basis_is_orthogonal_under_trace_form() {
        let alg = SingleAtomAlgebra::get();
        for a in 0..ATOMIC_DIM {
            for b in 0..ATOMIC_DIM {
                let g = trace_re(&(alg.ops[a] * alg.ops[b]));
                let want = if a == b { 2.0 } else { 0.0 };
                assert!((g - want).abs() < TOL, "tr(X{a} X{b}) = {g}");
            }
        }
    }

    #[test]
    fn m_zero_eigenstate_moments() {
        let alg = SingleAtomAlgebra::get();
        let ket = Ket3::new(c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0));
        let m = alg.single_atom_moments(&ket).unwrap();
        assert!(m.means[FZ].abs() < TOL);
        // ⟨f_z²⟩ = var + mean²
        assert!(m.cov[(FZ, FZ)].abs() < TOL);
        assert_relative_eq!(m.cov[(FX, FX)], 1.0, epsilon = TOL);
        assert_relative_eq!(m.cov[(FY, FY)], 1.0, epsilon = TOL);
    }

    #[test]
    fn plus_fx_is_the_fx_eigenvector() {
        let alg = SingleAtomAlgebra::get();
        let ket = plus_fx_state();
        let image = alg.op(FX) * ket;
        assert!((image - ket).norm() < TOL);
        let m = alg.single_atom_moments(&ket).unwrap();
        assert_relative_eq!(m.means[FX], 1.0, epsilon = TOL);
        assert_relative_eq!(m.cov[(FY, FY)], 0.5, epsilon = TOL);
        assert_relative_eq!(m.cov[(FZ, FZ)], 0.5, epsilon = TOL);
    }

    #[test]
    fn plus_fx_alignment_means_frozen() {
        // Regression constants produced by the 3×3 oracle.
        let m = SingleAtomAlgebra::get()
            .single_atom_moments(&plus_fx_state())
            .unwrap();
        assert_relative_eq!(m.means[JX], 0.5, epsilon = TOL);
        assert_relative_eq!(m.means[JM], -0.288_675_134_594_812_9, epsilon = TOL);
        for idx in [FY, FZ, JY, JK, JL] {
            assert!(m.means[idx].abs() < TOL);
        }
    }

    #[test]
    fn unnormalized_state_rejected() {
        let ket = Ket3::new(c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0));
        assert!(matches!(
            SingleAtomAlgebra::get().single_atom_moments(&ket),
            Err(SimError::Structural(_))
        ));
    }

    #[test]
    fn polarized_state_points_along_axis() {
        let alg = SingleAtomAlgebra::get();
        let n = [0.36, -0.48, 0.8];
        let m = alg.single_atom_moments(&polarized_state(n).unwrap()).unwrap();
        for k in 0..3 {
            assert_relative_eq!(m.means[k], n[k], epsilon = 1e-12);
        }
    }

    #[test]
    fn rotation_zero_angle_is_identity() {
        let r = SingleAtomAlgebra::get()
            .rotation_map([0.0, 1.0, 0.0], 0.0)
            .unwrap();
        assert!((r - DMatrix::<f64>::identity(8, 8)).amax() < TOL);
    }

    #[test]
    fn rotation_about_y_turns_x_toward_z() {
        let theta = 0.37;
        let r = SingleAtomAlgebra::get()
            .rotation_map([0.0, 1.0, 0.0], theta)
            .unwrap();
        assert_relative_eq!(r[(FX, FX)], theta.cos(), epsilon = TOL);
        assert_relative_eq!(r[(FX, FZ)], -theta.sin(), epsilon = TOL);
        assert_relative_eq!(r[(FZ, FX)], theta.sin(), epsilon = TOL);
        assert_relative_eq!(r[(FY, FY)], 1.0, epsilon = TOL);
    }

    #[test]
    fn non_unit_axis_rejected() {
        assert!(SingleAtomAlgebra::get()
            .rotation_map([0.0, 2.0, 0.0], 1.0)
            .is_err());
    }

    #[test]
    fn quarter_turn_alignment_block_matches_direct_conjugation() {
        // Independent route: expm by eigen-decomposition of f_y, then project
        // with tr(X_a ·)/2 (the basis is trace-orthogonal with norm 2).
        let alg = SingleAtomAlgebra::get();
        let theta = std::f64::consts::FRAC_PI_2;
        let fy = alg.op(FY);
        let eig = nalgebra::linalg::SymmetricEigen::new(*fy);
        let phases = Matrix3::from_diagonal(&eig.eigenvalues.map(|l| c(0.0, theta * l).exp()));
        let u = eig.eigenvectors * phases * eig.eigenvectors.adjoint();
        let r = alg.rotation_map([0.0, 1.0, 0.0], theta).unwrap();
        for a in JX..=JM {
            let conj = u.adjoint() * alg.op(a) * u;
            for b in JX..=JM {
                let coef = trace_re(&(alg.op(b) * conj)) / 2.0;
                assert!((coef - r[(a, b)]).abs() < 1e-10, "J block ({a},{b})");
            }
        }
        let j = r.view((JX, JX), (5, 5)).into_owned();
        assert!((j.transpose() * &j - DMatrix::<f64>::identity(5, 5)).amax() < 1e-10);
    }

    #[test]
    fn generator_exponentiates_to_rotation() {
        let alg = SingleAtomAlgebra::get();
        let axis = [0.6, 0.0, 0.8];
        let theta = 0.9;
        let l = alg.rotation_generator(axis) * theta;
        let via_gen = DMatrix::from_fn(8, 8, |i, j| l.exp()[(i, j)]);
        let direct = alg.rotation_map(axis, theta).unwrap();
        assert!((via_gen - direct).amax() < 1e-10);
    }

    #[test]
    fn pcss_moments() {
        let n = 1.25e6;
        let s = make_initial_state(&InitialStateSpec::pcss(n, 1.0)).unwrap();
        assert_relative_eq!(s.mean_of("Fx").unwrap(), n, max_relative = 1e-12);
        assert_relative_eq!(s.var_of("Fx").unwrap(), n, max_relative = 1e-12);
        assert_relative_eq!(s.var_of("Fy").unwrap(), n / 2.0, max_relative = 1e-12);
        assert_relative_eq!(s.var_of("Fz").unwrap(), n / 2.0, max_relative = 1e-12);
    }

    #[test]
    fn definite_number_css_moments() {
        let n = 1000.0;
        let s = make_initial_state(&InitialStateSpec::pcss(n, 0.0)).unwrap();
        assert!(s.var_of("Fx").unwrap().abs() < 1e-9);
        assert_relative_eq!(s.var_of("Fz").unwrap(), n / 2.0, max_relative = 1e-12);
    }

    #[test]
    fn number_noise_factor_two() {
        let n = 5.0e5;
        let s = make_initial_state(&InitialStateSpec::pcss(n, 2.0)).unwrap();
        assert_relative_eq!(s.var_of("Fx").unwrap(), 4.0 * n, max_relative = 1e-12);
    }

    #[test]
    fn invalid_initial_spec() {
        assert!(make_initial_state(&InitialStateSpec::pcss(0.0, 1.0)).is_err());
        assert!(make_initial_state(&InitialStateSpec::pcss(10.0, -1.0)).is_err());
    }
}
