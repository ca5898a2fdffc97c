//! Frozen figure-reproduction presets and their pass/fail checks.
//!
//! Every threshold comes from the embedded acceptance manifest, so the
//! CLI and the test suite judge runs by the same numbers.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::magnetometry::{compare_states, pcss_phase_variance, phase_variance, uniform_grid};
use crate::measurement::ProbeMode;
use crate::metrics::{exact_optimal_eta, optimal_eta, simple_model_xi2, xi2_min, PlanarMoments};
use crate::runner::config::{EtaRule, SimConfig};
use crate::runner::report::{write_csv, write_json, SeriesRow, SqueezingReport};
use crate::runner::sweep::{run_cells, CellAxes, CellSpec};

/// Text of the acceptance manifest compiled into the binary.
pub const MANIFEST_TEXT: &str = include_str!("../../acceptance.toml");

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub manifest_version: u32,
    pub planar_squeezing: PlanarGate,
    pub coherence: CoherenceGate,
    pub strategy: StrategyGate,
    pub analytic: AnalyticGate,
    pub entanglement: EntanglementGate,
    pub magnetometry: MagnetometryGate,
    pub properties: PropertyGate,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanarGate {
    pub max_min_xi_par2: f64,
    pub argmin_window_us: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoherenceGate {
    pub target: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyGate {
    /// Noise factors at which one-component probing must not squeeze.
    pub failing_x: Vec<f64>,
    /// Noise factors simulated without a requirement.
    pub free_x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyticGate {
    pub alpha0: f64,
    pub xi2_min: f64,
    /// Half a unit in the last printed digit of `xi2_min`.
    pub xi2_min_rounding: f64,
    pub formula_tolerance: f64,
    pub minimizer_tolerance: f64,
    pub grid_points: usize,
    pub three_db_reading: f64,
    pub three_db_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntanglementGate {
    pub alpha0: Vec<f64>,
    pub he_bound: f64,
    pub above_bound_until: f64,
    pub below_bound_from: f64,
    pub vitagliano_alpha0: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MagnetometryGate {
    pub pqs_alpha0: f64,
    pub sss_coherence: f64,
    pub grid: [f64; 2],
    pub grid_points: usize,
    pub phi_max: f64,
    pub pcss_tolerance: f64,
    pub pqs_fraction: f64,
    pub sss_near_zero: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropertyGate {
    pub psd_tolerance: f64,
    pub uncertainty_tolerance: f64,
    pub oracle_tolerance: f64,
    pub random_instances: usize,
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| SimError::Config(format!("acceptance manifest: {e}")))
    }
}

/// The embedded manifest, parsed once.
pub fn manifest() -> &'static Manifest {
    static M: OnceLock<Manifest> = OnceLock::new();
    M.get_or_init(|| Manifest::parse(MANIFEST_TEXT).expect("embedded manifest is valid"))
}

/// A pass/fail line. Informational checks never fail a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub required: bool,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn required(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            required: true,
            passed,
            detail: detail.into(),
        }
    }

    pub fn info(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            required: false,
            passed,
            detail: detail.into(),
        }
    }

    pub fn line(&self) -> String {
        let tag = match (self.required, self.passed) {
            (true, true) => "PASS",
            (true, false) => "FAIL",
            (false, true) => "info",
            (false, false) => "note",
        };
        format!("[{tag}] {}: {}", self.name, self.detail)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Fig3,
    Fig4a,
    Fig4b,
    Fig5,
    Fig6,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::Fig3,
        Scenario::Fig4a,
        Scenario::Fig4b,
        Scenario::Fig5,
        Scenario::Fig6,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Fig3 => "fig3",
            Scenario::Fig4a => "fig4a",
            Scenario::Fig4b => "fig4b",
            Scenario::Fig5 => "fig5",
            Scenario::Fig6 => "fig6",
        }
    }

    /// Assignments applied beneath the user's config file and overrides.
    pub fn preset(self) -> &'static [&'static str] {
        match self {
            Scenario::Fig3 | Scenario::Fig4a | Scenario::Fig4b => &[],
            Scenario::Fig5 => &["scattering.rule=\"analytic-optimum\""],
            Scenario::Fig6 => &["scattering.rule=\"analytic-optimum\"", "scattering.alpha0=60"],
        }
    }

    pub fn config(self, text: &str, overrides: &[String]) -> Result<SimConfig> {
        SimConfig::layered(self.preset(), text, overrides)
    }

    pub fn run(self, base: &SimConfig) -> Result<ScenarioOutput> {
        base.validate()?;
        let gate = manifest();
        let mut out = ScenarioOutput::new(self);
        match self {
            Scenario::Fig3 => {
                out.reports = run_all(self, vec![CellSpec::new(base, 0, CellAxes::default())])?;
                out.checks.extend(coherence_checks(&out.reports[0], &gate.coherence));
            }
            Scenario::Fig4a => {
                out.reports = run_all(self, vec![CellSpec::new(base, 0, CellAxes::default())])?;
                out.checks.extend(planar_checks(&out.reports[0], &gate.planar_squeezing));
            }
            Scenario::Fig4b => {
                let mut xs: Vec<f64> = gate.strategy.failing_x.iter().chain(&gate.strategy.free_x).copied().collect();
                xs.sort_by(f64::total_cmp);
                let mut cells = Vec::new();
                for x in &xs {
                    for mode in [ProbeMode::OneComponent, ProbeMode::TwoComponent] {
                        let axes = CellAxes { alpha0: None, x: Some(*x), mode: Some(mode) };
                        cells.push(CellSpec::new(base, cells.len(), axes));
                    }
                }
                out.reports = run_all(self, cells)?;
                out.checks.extend(strategy_checks(&out.reports, &gate.strategy));
            }
            Scenario::Fig5 => {
                let cells = gate
                    .entanglement
                    .alpha0
                    .iter()
                    .enumerate()
                    .map(|(i, a)| {
                        let axes = CellAxes { alpha0: Some(*a), ..Default::default() };
                        CellSpec::new(base, i, axes)
                    })
                    .collect();
                out.reports = run_all(self, cells)?;
                out.checks.extend(entanglement_checks(&out.reports, &gate.entanglement));
                out.checks.extend(analytic_checks(&gate.analytic)?);
                out.model = model_table(&out.reports)?;
            }
            Scenario::Fig6 => run_fig6(base, gate, &mut out)?,
        }
        out.checks.extend(property_checks(&out.reports, &gate.properties));
        Ok(out)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| {
                let known: Vec<&str> = Scenario::ALL.iter().map(|s| s.name()).collect();
                SimError::Config(format!("unknown scenario {s:?}; known: {}", known.join(", ")))
            })
    }
}

fn run_all(scenario: Scenario, cells: Vec<CellSpec>) -> Result<Vec<SqueezingReport>> {
    run_cells(scenario.name(), cells)
        .into_iter()
        .map(|c| c.report)
        .collect()
}

/// One α₀ point of the entanglement figure, next to the simple model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRow {
    pub alpha0: f64,
    pub n_at: f64,
    pub eta_total: f64,
    pub eta_per_pulse: f64,
    pub kappa_per_pulse: f64,
    pub model_xi2_at_eta0: f64,
    pub closed_form_xi2_min: f64,
    pub exact_eta_opt: f64,
    pub exact_model_min: f64,
    pub min_xi_par2: f64,
    pub min_he_value: f64,
    pub min_xid2: f64,
}

/// One point of a phase-estimation curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub panel: String,
    pub state: String,
    pub phi: f64,
    pub variance: Option<f64>,
    pub normalized: Option<f64>,
}

/// A prepared state fed to the phase-estimation comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedState {
    pub panel: String,
    pub label: String,
    pub cell_id: String,
    pub t: f64,
    pub coherence: f64,
    /// Moments with x along the mean in-plane spin.
    pub moments: PlanarMoments,
}

#[derive(Debug, Clone)]
pub struct ScenarioOutput {
    pub scenario: Scenario,
    pub reports: Vec<SqueezingReport>,
    pub checks: Vec<Check>,
    pub model: Vec<ModelRow>,
    pub curves: Vec<CurvePoint>,
    pub states: Vec<PreparedState>,
}

#[derive(Serialize)]
struct ChecksFile<'a> {
    scenario: Scenario,
    passed: bool,
    checks: &'a [Check],
}

impl ScenarioOutput {
    fn new(scenario: Scenario) -> Self {
        ScenarioOutput {
            scenario,
            reports: Vec::new(),
            checks: Vec::new(),
            model: Vec::new(),
            curves: Vec::new(),
            states: Vec::new(),
        }
    }

    /// True when every required check passed.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed || !c.required)
    }

    pub fn checks_path(&self, dir: &Path) -> PathBuf {
        dir.join(format!("{}_all_checks.json", self.scenario))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for r in &self.reports {
            r.write(dir)?;
        }
        let name = self.scenario.name();
        if !self.model.is_empty() {
            write_csv(&dir.join(format!("{name}_all_model.csv")), &self.model)?;
        }
        if !self.curves.is_empty() {
            write_csv(&dir.join(format!("{name}_all_curves.csv")), &self.curves)?;
        }
        if !self.states.is_empty() {
            write_json(&dir.join(format!("{name}_all_states.json")), &self.states)?;
        }
        write_json(
            &self.checks_path(dir),
            &ChecksFile {
                scenario: self.scenario,
                passed: self.passed(),
                checks: &self.checks,
            },
        )
    }
}

fn coherence_checks(r: &SqueezingReport, gate: &CoherenceGate) -> Vec<Check> {
    let s = &r.summary;
    vec![
        Check::required(
            "coherence retained at the squeezing minimum",
            (s.coherence_at_min - gate.target).abs() <= gate.tolerance,
            format!(
                "F∥/N = {:.4} at t = {} μs, target {} ± {}",
                s.coherence_at_min, s.t_min_xi_par2, gate.target, gate.tolerance
            ),
        ),
        Check::info(
            "out-of-plane variance grows under probing",
            s.var_fy_growth > 1.0,
            format!("var F_y final/initial = {:.4}", s.var_fy_growth),
        ),
    ]
}

fn planar_checks(r: &SqueezingReport, gate: &PlanarGate) -> Vec<Check> {
    let s = &r.summary;
    let [lo, hi] = gate.argmin_window_us;
    vec![
        Check::required(
            "planar squeezing parameter drops below one",
            s.min_xi_par2 < gate.max_min_xi_par2,
            format!("min ξ∥² = {:.4}", s.min_xi_par2),
        ),
        Check::required(
            "both in-plane components squeezed at the minimum",
            s.xi_x2_at_min < 1.0 && s.xi_z2_at_min < 1.0,
            format!("ξ_x² = {:.4}, ξ_z² = {:.4}", s.xi_x2_at_min, s.xi_z2_at_min),
        ),
        Check::required(
            "squeezing minimum reached inside the expected window",
            (lo..=hi).contains(&s.t_min_xi_par2),
            format!("t = {} μs, window [{lo}, {hi}] μs", s.t_min_xi_par2),
        ),
    ]
}

fn find<'a>(reports: &'a [SqueezingReport], x: f64, mode: ProbeMode) -> Option<&'a SqueezingReport> {
    reports
        .iter()
        .find(|r| r.config.atoms.noise_factor == x && r.config.schedule.mode == mode)
}

fn strategy_checks(reports: &[SqueezingReport], gate: &StrategyGate) -> Vec<Check> {
    let mut checks = Vec::new();
    let pair = |x: f64| {
        Some((
            find(reports, x, ProbeMode::OneComponent)?.summary.min_xi_par2,
            find(reports, x, ProbeMode::TwoComponent)?.summary.min_xi_par2,
        ))
    };
    for &x in &gate.failing_x {
        let (passed, detail) = match pair(x) {
            Some((one, two)) => (
                one >= 1.0 && two < 1.0,
                format!("min ξ∥²: one-component {one:.4}, two-component {two:.4}"),
            ),
            None => (false, "cell missing".to_string()),
        };
        checks.push(Check::required(
            format!("only two-component probing squeezes noisy states (x = {x})"),
            passed,
            detail,
        ));
    }
    for &x in &gate.free_x {
        if let Some((one, two)) = pair(x) {
            checks.push(Check::info(
                format!("low-noise states under both strategies (x = {x})"),
                true,
                format!("min ξ∥²: one-component {one:.4}, two-component {two:.4}"),
            ));
        }
    }
    checks
}

fn series(reports: &[SqueezingReport], f: impl Fn(&SqueezingReport) -> f64) -> Vec<(f64, f64)> {
    reports
        .iter()
        .map(|r| (r.config.scattering.alpha0, f(r)))
        .collect()
}

fn show(points: &[(f64, f64)]) -> String {
    points
        .iter()
        .map(|(a, v)| format!("{a}: {v:.4}"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn entanglement_checks(reports: &[SqueezingReport], gate: &EntanglementGate) -> Vec<Check> {
    let he = series(reports, |r| r.summary.min_he_value);
    let xid = series(reports, |r| r.summary.min_xid2);
    let he_text = show(&he);
    let mut checks = vec![
        Check::required(
            "planar variance per atom is nonincreasing in optical depth",
            he.windows(2).all(|w| w[1].1 <= w[0].1),
            he_text.clone(),
        ),
        Check::required(
            "planar variance stays at or above the separable bound at low optical depth",
            he.iter()
                .filter(|(a, _)| *a <= gate.above_bound_until)
                .all(|(_, v)| *v >= gate.he_bound),
            format!("bound {}, α₀ ≤ {}: {he_text}", gate.he_bound, gate.above_bound_until),
        ),
        Check::required(
            "planar variance falls below the separable bound at high optical depth",
            he.iter()
                .filter(|(a, _)| *a >= gate.below_bound_from)
                .all(|(_, v)| *v < gate.he_bound),
            format!("bound {}, α₀ ≥ {}: {he_text}", gate.he_bound, gate.below_bound_from),
        ),
        Check::required(
            "generalized squeezing parameter decreases with optical depth",
            xid.windows(2).all(|w| w[1].1 < w[0].1),
            show(&xid),
        ),
    ];
    let at = xid.iter().find(|(a, _)| *a == gate.vitagliano_alpha0);
    checks.push(Check::required(
        "generalized squeezing parameter below one at the largest optical depth",
        at.is_some_and(|(_, v)| *v < 1.0),
        match at {
            Some((a, v)) => format!("α₀ = {a}: min ξ_d² = {v:.4}"),
            None => format!("α₀ = {} not simulated", gate.vitagliano_alpha0),
        },
    ));
    checks
}

/// Index of the smallest model value on `points` samples of `[0, ½]`.
fn grid_minimizer(alpha0: f64, points: usize) -> Result<(f64, f64)> {
    let grid = uniform_grid(0.0, 0.5, points);
    let mut best = (f64::NAN, f64::INFINITY);
    for eta in grid {
        let v = simple_model_xi2(alpha0, eta)?;
        if v < best.1 {
            best = (eta, v);
        }
    }
    Ok(best)
}

/// The large-α₀ closed forms against the model they approximate.
pub fn analytic_checks(gate: &AnalyticGate) -> Result<Vec<Check>> {
    let a = gate.alpha0;
    let eta0 = optimal_eta(a)?;
    let closed = xi2_min(a)?;
    let at_eta0 = simple_model_xi2(a, eta0)?;
    let (grid_eta, grid_min) = grid_minimizer(a, gate.grid_points)?;
    let exact = exact_optimal_eta(a)?;
    let step = 0.5 / (gate.grid_points - 1) as f64;
    Ok(vec![
        Check::required(
            "closed-form minimum 2√(2/α₀) matches its printed value",
            (closed - gate.xi2_min).abs() <= gate.xi2_min_rounding,
            format!("α₀ = {a}: 2√(2/α₀) = {closed:.6}, printed {}", gate.xi2_min),
        ),
        Check::required(
            "model evaluated at η₀ = 1/√(2α₀) equals the closed-form minimum",
            (at_eta0 - closed).abs() <= gate.formula_tolerance,
            format!(
                "1/(1+α₀η₀) + 2η₀ = {at_eta0:.6} vs {closed:.6} (difference {:.2e}, tolerance {:.0e})",
                at_eta0 - closed,
                gate.formula_tolerance
            ),
        ),
        Check::required(
            "grid scan locates the minimizer at η₀ = 1/√(2α₀)",
            (grid_eta - eta0).abs() <= gate.minimizer_tolerance,
            format!(
                "grid argmin η = {grid_eta:.6} vs η₀ = {eta0:.6} over {} points",
                gate.grid_points
            ),
        ),
        Check::required(
            "model minimum reads roughly 3 dB",
            (grid_min - gate.three_db_reading).abs() <= gate.three_db_tolerance
                && (at_eta0 - gate.three_db_reading).abs() <= gate.three_db_tolerance,
            format!(
                "min over η = {grid_min:.4}, value at η₀ = {at_eta0:.4}, reading {} ± {}",
                gate.three_db_reading, gate.three_db_tolerance
            ),
        ),
        Check::info(
            "grid minimizer agrees with the exact stationary point",
            (grid_eta - exact).abs() <= step,
            format!("exact η* = {exact:.6}, model min {:.6}", simple_model_xi2(a, exact)?),
        ),
    ])
}

fn model_table(reports: &[SqueezingReport]) -> Result<Vec<ModelRow>> {
    reports
        .iter()
        .map(|r| {
            let a = r.config.scattering.alpha0;
            let eta0 = optimal_eta(a)?;
            let exact = exact_optimal_eta(a)?;
            Ok(ModelRow {
                alpha0: a,
                n_at: r.resolved.n_at,
                eta_total: 1.0 - r.resolved.coherence_after_probing,
                eta_per_pulse: r.resolved.eta_per_pulse,
                kappa_per_pulse: r.resolved.kappa_per_pulse,
                model_xi2_at_eta0: simple_model_xi2(a, eta0)?,
                closed_form_xi2_min: xi2_min(a)?,
                exact_eta_opt: exact,
                exact_model_min: simple_model_xi2(a, exact)?,
                min_xi_par2: r.summary.min_xi_par2,
                min_he_value: r.summary.min_he_value,
                min_xid2: r.summary.min_xid2,
            })
        })
        .collect()
}

fn property_checks(reports: &[SqueezingReport], gate: &PropertyGate) -> Vec<Check> {
    if reports.is_empty() {
        return Vec::new();
    }
    let psd = reports.iter().map(|r| r.summary.min_psd_ratio).fold(f64::INFINITY, f64::min);
    let unc = reports
        .iter()
        .map(|r| r.summary.min_uncertainty_margin)
        .fold(f64::INFINITY, f64::min);
    let samples: usize = reports.iter().map(|r| r.rows.len()).sum();
    vec![
        Check::required(
            "covariance stays positive semidefinite at every sample",
            psd >= -gate.psd_tolerance,
            format!("min λ_min/trace = {psd:.3e} over {samples} samples"),
        ),
        Check::required(
            "uncertainty products respected at every sample",
            unc >= -gate.uncertainty_tolerance,
            format!("min margin/N² = {unc:.3e} over {samples} samples"),
        ),
    ]
}

fn prepared(panel: &str, label: &str, r: &SqueezingReport, row: &SeriesRow) -> PreparedState {
    PreparedState {
        panel: panel.into(),
        label: label.into(),
        cell_id: r.cell_id.clone(),
        t: row.t,
        coherence: row.f_par / r.summary.initial_atom_number,
        moments: row.planar_moments().aligned(),
    }
}

fn row_at(r: &SqueezingReport, t: f64) -> Result<&SeriesRow> {
    r.rows
        .iter()
        .find(|row| row.t == t)
        .ok_or_else(|| SimError::Structural(format!("no sample at t = {t}")))
}

/// Sample whose coherence is closest to `target`, earliest on ties.
fn row_at_coherence(r: &SqueezingReport, target: f64) -> Result<&SeriesRow> {
    let n0 = r.summary.initial_atom_number;
    let dist = |row: &SeriesRow| (row.f_par / n0 - target).abs();
    r.rows
        .iter()
        .filter(|row| !dist(row).is_nan())
        .reduce(|best, row| if dist(row) < dist(best) { row } else { best })
        .ok_or_else(|| SimError::Structural("empty time series".into()))
}

fn curve_points(panel: &str, states: &[PreparedState], grid: &[f64]) -> Result<Vec<CurvePoint>> {
    let input: Vec<(String, PlanarMoments)> =
        states.iter().map(|s| (s.label.clone(), s.moments)).collect();
    let cmp = compare_states(&input, grid, "PCSS")?;
    let mut out = Vec::new();
    for (abs, norm) in cmp.absolute.iter().zip(&cmp.normalized) {
        for (i, phi) in abs.phis.iter().enumerate() {
            out.push(CurvePoint {
                panel: panel.into(),
                state: abs.state_label.clone(),
                phi: *phi,
                variance: abs.variances[i],
                normalized: norm.variances[i],
            });
        }
    }
    Ok(out)
}

fn run_fig6(base: &SimConfig, gate: &Manifest, out: &mut ScenarioOutput) -> Result<()> {
    let m = &gate.magnetometry;
    let x = base.atoms.noise_factor;
    let two = |i: usize, x: f64| {
        CellSpec::new(
            base,
            i,
            CellAxes { alpha0: Some(m.pqs_alpha0), x: Some(x), mode: Some(ProbeMode::TwoComponent) },
        )
    };
    // Panel (b) states share the atom number of the α₀ point; the SSS is a
    // one-component run with the decay-calibrated scattering rule.
    let pqs = two(0, x);
    let mut sss = CellSpec::new(base, 1, CellAxes { mode: Some(ProbeMode::OneComponent), ..Default::default() });
    sss.config.scattering.rule = EtaRule::Fig3Decay;
    sss.config.atoms.n_at = pqs.config.resolve()?.n_at;
    // Panel (a): defaults at three noise levels.
    let mut cells = vec![pqs, sss];
    for (k, xa) in [0.5, 1.0, 2.0].into_iter().enumerate() {
        let mut c = CellSpec::new(
            base,
            2 + k,
            CellAxes { x: Some(xa), mode: Some(ProbeMode::TwoComponent), ..Default::default() },
        );
        c.config.scattering.rule = EtaRule::Fig3Decay;
        cells.push(c);
    }
    let reports = run_all(Scenario::Fig6, cells)?;
    let grid = uniform_grid(m.grid[0], m.grid[1], m.grid_points);

    let (pqs_r, sss_r) = (&reports[0], &reports[1]);
    let pcss = prepared("b", "PCSS", pqs_r, &pqs_r.rows[0]);
    let pqs = prepared("b", "PQS", pqs_r, row_at(pqs_r, pqs_r.summary.t_min_xi_par2)?);
    let sss = prepared("b", "SSS", sss_r, row_at_coherence(sss_r, m.sss_coherence)?);
    let panel_b = vec![pcss.clone(), pqs.clone(), sss.clone()];
    out.curves = curve_points("b", &panel_b, &grid)?;

    let x1 = &reports[3];
    let mut panel_a = vec![prepared("a", "PCSS", x1, &x1.rows[0])];
    for r in &reports[2..5] {
        let label = format!("PQS x={}", r.config.atoms.noise_factor);
        panel_a.push(prepared("a", &label, r, row_at(r, r.summary.t_min_xi_par2)?));
    }
    out.curves.extend(curve_points("a", &panel_a, &grid)?);

    // PCSS closed form.
    let n0 = pcss.moments.n_at;
    let mut worst: f64 = 0.0;
    let mut literal_worst: f64 = 0.0;
    for &phi in &grid {
        if let Ok(v) = phase_variance(&pcss.moments, phi) {
            let closed = pcss_phase_variance(n0, x, phi);
            worst = worst.max(((v - closed) / closed).abs());
            let literal = closed / phi.cos().powi(2);
            literal_worst = literal_worst.max(((v - literal) / literal).abs());
        }
    }
    let sql = phase_variance(&pcss.moments, 0.0)?;
    let sql_err = (sql * 2.0 * n0 - 1.0).abs();
    out.checks.push(Check::required(
        "PCSS phase variance matches (1 + 2x² tan²φ)/(2N)",
        worst <= m.pcss_tolerance,
        format!("max relative deviation {worst:.2e} over {} points, x = {x}", grid.len()),
    ));
    out.checks.push(Check::required(
        "PCSS at zero phase sits at the standard quantum limit",
        sql_err <= m.pcss_tolerance,
        format!("Δ²φ·2N = {:.12}", sql * 2.0 * n0),
    ));
    out.checks.push(Check::info(
        "form with an extra 1/cos²φ factor",
        literal_worst <= m.pcss_tolerance,
        format!("max relative deviation {literal_worst:.3e}; agrees only at φ = 0"),
    ));

    // Normalized comparisons.
    let cmp = compare_states(
        &panel_b.iter().map(|s| (s.label.clone(), s.moments)).collect::<Vec<_>>(),
        &grid,
        "PCSS",
    )?;
    let pqs_norm = cmp.normalized[1].defined_within(m.phi_max);
    let below = pqs_norm.iter().filter(|v| **v < 1.0).count() as f64 / pqs_norm.len().max(1) as f64;
    out.checks.push(Check::required(
        "PQS beats the PCSS across the phase range",
        below >= m.pqs_fraction,
        format!(
            "below one on {:.1}% of {} points with |φ| ≤ {}",
            100.0 * below,
            pqs_norm.len(),
            m.phi_max
        ),
    ));
    let sss_near = cmp.normalized[2].defined_within(m.sss_near_zero);
    let sss_all = cmp.normalized[2].defined_within(f64::INFINITY);
    let near_max = sss_near.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    out.checks.push(Check::required(
        "SSS beats the PCSS near zero phase",
        !sss_near.is_empty() && near_max < 1.0,
        format!("max normalized value {near_max:.4} for |φ| ≤ {}", m.sss_near_zero),
    ));
    let above = sss_all.iter().filter(|v| **v > 1.0).count();
    out.checks.push(Check::required(
        "SSS loses to the PCSS at larger phases",
        above > 0,
        format!("above one on {above} of {} points", sss_all.len()),
    ));
    let median = |i: usize| cmp.stats[i].map_or(f64::NAN, |s| s.median);
    out.checks.push(Check::info(
        "PQS more precise than SSS on average",
        median(1) < median(2),
        format!(
            "median normalized: PQS {:.4}, SSS {:.4}; PQS better on {:.1}% of the grid",
            median(1),
            median(2),
            100.0 * cmp.beats[1][2]
        ),
    ));
    out.checks.push(Check::info(
        "SSS preparation",
        true,
        format!(
            "t = {} μs, coherence {:.3}, var F_z reduced by {:.1}% from N/2",
            sss.t,
            sss.coherence,
            100.0 * (1.0 - sss.moments.var_fz / (n0 / 2.0))
        ),
    ));
    out.states = panel_b.into_iter().chain(panel_a).collect();
    out.reports = reports;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_parses() {
        let m = manifest();
        assert_eq!(m.manifest_version, 1);
        assert_eq!(m.entanglement.alpha0.len(), 7);
        assert_eq!(m.entanglement.he_bound, crate::metrics::HE_BOUND_F1);
    }

    #[test]
    fn names_round_trip() {
        for s in Scenario::ALL {
            assert_eq!(s.name().parse::<Scenario>().unwrap(), s);
        }
        assert_eq!("fig7".parse::<Scenario>().unwrap_err().exit_code(), 1);
    }

    #[test]
    fn presets_validate() {
        for s in Scenario::ALL {
            s.config("", &[]).unwrap();
        }
        let c = Scenario::Fig6.config("", &["scattering.alpha0=70".into()]).unwrap();
        assert_eq!(c.scattering.alpha0, 70.0);
        assert_eq!(c.scattering.rule, EtaRule::AnalyticOptimum);
    }

    #[test]
    fn check_tags() {
        assert!(Check::required("a", true, "").line().starts_with("[PASS]"));
        assert!(Check::required("a", false, "").line().starts_with("[FAIL]"));
        assert!(Check::info("a", false, "").line().starts_with("[note]"));
    }

    #[test]
    fn grid_minimizer_finds_stationary_point() {
        let (eta, _) = grid_minimizer(25.0, 100_001).unwrap();
        assert!((eta - exact_optimal_eta(25.0).unwrap()).abs() <= 5e-6);
    }
}
