use std::ffi::{CStr, CString};
use std::ptr;

use pqsim_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = pqsim_last_error_message();
    assert!(!p.is_null(), "expected an error message");
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn default_run_round_trip() {
    unsafe {
        let cfg = pqsim_config_new();
        let mut run = ptr::null_mut();
        assert_eq!(pqsim_simulate(cfg, &mut run), PqsimStatus::Ok);
        assert!(pqsim_last_error_message().is_null());
        let n = pqsim_run_sample_count(run);
        assert!(n > 300);

        let mut first = PqsimSample::default();
        assert_eq!(pqsim_run_sample(run, 0, &mut first), PqsimStatus::Ok);
        assert_eq!(first.t, 0.0);
        assert_eq!(first.kind, 0);
        assert_eq!(first.atom_number, 1.25e6);

        let mut summary = PqsimSummary::default();
        assert_eq!(pqsim_run_summary(run, &mut summary), PqsimStatus::Ok);
        assert!(summary.min_xi_par2 < 1.0);
        assert!(summary.planar_squeezed_at_min);

        // The summary's minimum appears in the series.
        let mut hit = false;
        for i in 0..n {
            let mut s = PqsimSample::default();
            assert_eq!(pqsim_run_sample(run, i, &mut s), PqsimStatus::Ok);
            hit |= s.t == summary.t_min_xi_par2 && s.xi_par2 == summary.min_xi_par2;
        }
        assert!(hit);

        let mut s = PqsimSample::default();
        assert_eq!(pqsim_run_sample(run, n, &mut s), PqsimStatus::InvalidArgument);
        assert!(last_error().contains("out of range"));

        let dir = tempfile::tempdir().unwrap();
        let path = c(dir.path().to_str().unwrap());
        assert_eq!(pqsim_run_write(run, path.as_ptr()), PqsimStatus::Ok);
        assert!(dir.path().join("ffi_c000_series.csv").exists());
        assert!(dir.path().join("ffi_c000_summary.json").exists());

        pqsim_run_free(run);
        pqsim_config_free(cfg);
    }
}

#[test]
fn config_errors_carry_messages() {
    unsafe {
        let cfg = pqsim_config_new();
        let bad = c("probe.g3=1");
        assert_eq!(pqsim_config_set(cfg, bad.as_ptr()), PqsimStatus::ConfigError);
        assert!(last_error().contains("g3"));

        let ok = c("atoms.noise_factor=2");
        assert_eq!(pqsim_config_set(cfg, ok.as_ptr()), PqsimStatus::Ok);
        let invalid = c("atoms.noise_factor=-1");
        assert_eq!(pqsim_config_set(cfg, invalid.as_ptr()), PqsimStatus::ConfigError);
        pqsim_config_free(cfg);

        let mut out = ptr::null_mut();
        let text = c("[atoms]\nn_at = 0\n");
        assert_eq!(pqsim_config_from_toml(text.as_ptr(), &mut out), PqsimStatus::ConfigError);
        assert!(out.is_null());
        let text = c("[atoms]\nn_at = 1e5\n");
        assert_eq!(pqsim_config_from_toml(text.as_ptr(), &mut out), PqsimStatus::Ok);
        assert!(!out.is_null());
        pqsim_config_free(out);
    }
}

#[test]
fn null_arguments_are_rejected() {
    unsafe {
        let mut run = ptr::null_mut();
        assert_eq!(pqsim_simulate(ptr::null(), &mut run), PqsimStatus::NullPointer);
        assert!(last_error().contains("config"));
        let mut v = 0.0;
        assert_eq!(pqsim_phase_variance(ptr::null(), 0.0, &mut v), PqsimStatus::NullPointer);
        assert_eq!(pqsim_simple_model_xi2(25.0, 0.1, ptr::null_mut()), PqsimStatus::NullPointer);
        assert_eq!(pqsim_run_sample_count(ptr::null()), 0);
        pqsim_run_free(ptr::null_mut());
        pqsim_config_free(ptr::null_mut());
    }
}

#[test]
fn invalid_utf8_is_rejected() {
    unsafe {
        let cfg = pqsim_config_new();
        let bytes = [0xffu8, 0x00];
        assert_eq!(
            pqsim_config_set(cfg, bytes.as_ptr().cast()),
            PqsimStatus::InvalidArgument
        );
        pqsim_config_free(cfg);
    }
}

#[test]
fn phase_variance_and_model() {
    unsafe {
        let n = 1e6;
        let pcss = PqsimPlanarMoments {
            mean_fx: n,
            mean_fz: 0.0,
            var_fx: n,
            var_fz: n / 2.0,
            cov_xz: 0.0,
            n_at: n,
        };
        let mut v = 0.0;
        assert_eq!(pqsim_phase_variance(&pcss, 0.0, &mut v), PqsimStatus::Ok);
        assert!((v * 2.0 * n - 1.0).abs() < 1e-12);
        assert_eq!(
            pqsim_phase_variance(&pcss, std::f64::consts::FRAC_PI_2, &mut v),
            PqsimStatus::NumericalError
        );
        assert!(last_error().contains("singular"), "{}", last_error());

        assert_eq!(pqsim_simple_model_xi2(25.0, 0.0, &mut v), PqsimStatus::Ok);
        assert_eq!(v, 1.0);
        assert_eq!(pqsim_simple_model_xi2(-1.0, 0.1, &mut v), PqsimStatus::NumericalError);
    }
}

#[test]
fn scenario_verdicts() {
    unsafe {
        let mut passed = false;
        let name = c("fig4a");
        assert_eq!(
            pqsim_scenario_run(name.as_ptr(), ptr::null(), ptr::null(), &mut passed),
            PqsimStatus::Ok
        );
        assert!(passed);

        // Without probing nothing squeezes.
        let cfg = c("[probe]\nphotons_per_pulse = 1.0\n");
        assert_eq!(
            pqsim_scenario_run(name.as_ptr(), cfg.as_ptr(), ptr::null(), &mut passed),
            PqsimStatus::AcceptanceFailure
        );
        assert!(!passed);
        assert!(last_error().contains("planar squeezing parameter"));

        let unknown = c("fig9");
        assert_eq!(
            pqsim_scenario_run(unknown.as_ptr(), ptr::null(), ptr::null(), ptr::null_mut()),
            PqsimStatus::ConfigError
        );
    }
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(pqsim_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_the_api_and_compiles() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(dir.join("include/pqsim.h")).unwrap();
    for f in [
        "pqsim_last_error_message",
        "pqsim_config_new",
        "pqsim_config_set",
        "pqsim_simulate",
        "pqsim_run_summary",
        "pqsim_scenario_run",
        "pqsim_phase_variance",
        "typedef struct PqsimRun PqsimRun;",
    ] {
        assert!(header.contains(f), "header lacks {f}");
    }
    let status = std::process::Command::new("cc")
        .args(["-std=c11", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(dir.join("include"))
        .arg(dir.join("tests/header_smoke.c"))
        .status();
    match status {
        Ok(s) => assert!(s.success(), "header does not compile as C11"),
        Err(e) => eprintln!("skipping C compile check: {e}"),
    }
}
