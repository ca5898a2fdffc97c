//! Rotation representation, structure constants and the spin-1 Casimir.

use nalgebra::{DMatrix, Matrix3, Vector3};
use proptest::prelude::*;

use pqsim::dynamics::Ensemble;
use pqsim::measurement::{run_schedule, SamplingGrid};
use pqsim::metrics::square_sums_from_alignment;
use pqsim::runner::config::SimConfig;
use pqsim::runner::scenario::manifest;
use pqsim::spin::{
    make_initial_state, oracle_constants, InitialStateSpec, SingleAtomAlgebra, ATOMIC_DIM, FX, JM, JX,
};

fn tol() -> f64 {
    manifest().properties.oracle_tolerance
}

fn axis_strategy() -> impl Strategy<Value = [f64; 3]> {
    (0.0f64..std::f64::consts::PI, 0.0f64..std::f64::consts::TAU).prop_map(|(t, p)| {
        [t.sin() * p.cos(), t.sin() * p.sin(), t.cos()]
    })
}

fn rot(axis: [f64; 3], angle: f64) -> DMatrix<f64> {
    SingleAtomAlgebra::get().rotation_map(axis, angle).unwrap()
}

fn close(a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
    (a - b).amax() <= tol()
}

/// Active SO(3) rotation by `angle` about `n`.
fn rodrigues(n: [f64; 3], angle: f64) -> Matrix3<f64> {
    let n = Vector3::from(n);
    let k = n.cross_matrix();
    Matrix3::identity() * angle.cos() + k * angle.sin() + n * n.transpose() * (1.0 - angle.cos())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(manifest().properties.random_instances as u32))]

    #[test]
    fn angles_add_about_a_fixed_axis(n in axis_strategy(), a in -7.0f64..7.0, b in -7.0f64..7.0) {
        prop_assert!(close(&(rot(n, a) * rot(n, b)), &rot(n, a + b)));
    }

    #[test]
    fn opposite_angle_inverts(n in axis_strategy(), a in -7.0f64..7.0) {
        let id = DMatrix::identity(ATOMIC_DIM, ATOMIC_DIM);
        prop_assert!(close(&(rot(n, a) * rot(n, -a)), &id));
    }

    #[test]
    fn maps_are_orthogonal_with_unit_determinant(n in axis_strategy(), a in -7.0f64..7.0) {
        let r = rot(n, a);
        let id = DMatrix::identity(ATOMIC_DIM, ATOMIC_DIM);
        prop_assert!(close(&(r.transpose() * &r), &id));
        prop_assert!((r.determinant() - 1.0).abs() <= tol());
    }

    #[test]
    fn vector_block_is_a_three_dimensional_rotation(n in axis_strategy(), a in -7.0f64..7.0) {
        let r = rot(n, a);
        // Means transform actively by −θ in the convention where +x turns
        // toward +z about +y.
        let expected = rodrigues(n, -a);
        for i in 0..3 {
            for j in 0..3 {
                prop_assert!((r[(i, j)] - expected[(i, j)]).abs() <= tol());
            }
            for j in 3..ATOMIC_DIM {
                prop_assert!(r[(i, j)].abs() <= tol());
                prop_assert!(r[(j, i)].abs() <= tol());
            }
        }
    }

    #[test]
    fn generator_exponentiates_to_the_map(n in axis_strategy(), a in -3.0f64..3.0) {
        let l = SingleAtomAlgebra::get().rotation_generator(n) * a;
        let exp = DMatrix::from_fn(ATOMIC_DIM, ATOMIC_DIM, |i, j| l.exp()[(i, j)]);
        prop_assert!(close(&exp, &rot(n, a)));
    }

    #[test]
    fn casimir_from_alignment_moments(
        axis in axis_strategy(),
        n in 1.0f64..1e8,
        x in 0.0f64..3.0,
    ) {
        let s = make_initial_state(&InitialStateSpec { n_mean: n, number_noise_factor: x, polarization_axis: axis }).unwrap();
        let sums = square_sums_from_alignment(n, s.mean()[JX], s.mean()[JM]);
        let total = sums.x + sums.y + sums.z;
        prop_assert!((total - 2.0 * n).abs() <= 4.0 * f64::EPSILON * n, "{} vs {}", total, 2.0 * n);
        prop_assert!(sums.x >= -1e-9 * n && sums.y >= -1e-9 * n && sums.z >= -1e-9 * n);
    }
}

#[test]
fn full_turn_is_the_identity() {
    let id = DMatrix::identity(ATOMIC_DIM, ATOMIC_DIM);
    for n in [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.6, 0.0, 0.8]] {
        assert!(close(&rot(n, std::f64::consts::TAU), &id));
    }
}

#[test]
fn precession_about_y_turns_x_toward_z() {
    let r = rot([0.0, 1.0, 0.0], 0.3);
    assert!((r[(FX, FX)] - 0.3f64.cos()).abs() < 1e-15);
    assert!((r[(2, FX)] - 0.3f64.sin()).abs() < 1e-15);
}

#[test]
fn structure_constants_are_antisymmetric_and_satisfy_jacobi() {
    let alg = SingleAtomAlgebra::get();
    let c = |a, b, k| alg.commutator_constant(a, b, k);
    for a in 0..ATOMIC_DIM {
        for b in 0..ATOMIC_DIM {
            for k in 0..ATOMIC_DIM {
                assert!((c(a, b, k) + c(b, a, k)).abs() < 1e-12);
            }
        }
    }
    // Σ_e C_abe C_ecg + C_bce C_eag + C_cae C_ebg = 0.
    for a in 0..ATOMIC_DIM {
        for b in 0..ATOMIC_DIM {
            for cc in 0..ATOMIC_DIM {
                for g in 0..ATOMIC_DIM {
                    let s: f64 = (0..ATOMIC_DIM)
                        .map(|e| c(a, b, e) * c(e, cc, g) + c(b, cc, e) * c(e, a, g) + c(cc, a, e) * c(e, b, g))
                        .sum();
                    assert!(s.abs() < 1e-10);
                }
            }
        }
    }
}

#[test]
fn oracle_constants_describe_spin_one() {
    let o = oracle_constants().unwrap();
    assert!((o.casimir - 2.0).abs() < 1e-14);
    assert!((o.plus_fx_means[FX] - 1.0).abs() < 1e-14);
    // The [Fx, Fy] = i Fz entry.
    assert!(o
        .structure_constants
        .iter()
        .any(|s| s.a == "Fx" && s.b == "Fy" && s.c == "Fz" && (s.value - 1.0).abs() < 1e-12));
    // A polarized spin-1 atom has variance ½ transverse to its spin.
    assert!((o.plus_fx_covariance[1][1] - 0.5).abs() < 1e-14);
    assert!((o.plus_fx_covariance[2][2] - 0.5).abs() < 1e-14);
    assert!(o.plus_fx_covariance[0][0].abs() < 1e-14);
}

#[test]
fn casimir_holds_along_a_probed_trajectory() {
    let config = SimConfig::default();
    let r = config.resolve().unwrap();
    let initial = make_initial_state(&config.initial_state_spec(&r)).unwrap();
    let ensemble = Ensemble::new(initial, r.n_at).unwrap();
    let t = run_schedule(
        &ensemble,
        &config.probe_settings().unwrap(),
        &config.schedule(&r).unwrap(),
        config.outcome_mode(),
        SamplingGrid { step: 5.0, end: r.end_time_us },
    )
    .unwrap();
    for s in &t.samples {
        let sums = square_sums_from_alignment(s.atom_number, s.means[JX], s.means[JM]);
        let total = sums.x + sums.y + sums.z;
        assert!((total - 2.0 * s.atom_number).abs() <= 4.0 * f64::EPSILON * s.atom_number);
    }
}
