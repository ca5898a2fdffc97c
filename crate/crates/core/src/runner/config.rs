//! Versioned TOML configuration.

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    DecoherenceModel, MagneticField, Polarization, StokesPulse, DEFAULT_GYROMAGNETIC_RATIO,
    DEFAULT_PULSE_STEPS,
};
use crate::error::{Result, SimError};
use crate::measurement::{OutcomeMode, ProbeMode, ProbeSchedule, ProbeSettings, SamplingGrid};
use crate::metrics::optimal_eta;
use crate::spin::InitialStateSpec;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub schema_version: u32,
    pub atoms: AtomsConfig,
    pub field: FieldConfig,
    pub probe: ProbeConfig,
    pub scattering: ScatteringConfig,
    pub schedule: ScheduleConfig,
    pub sampling: SamplingConfig,
    pub outcome: OutcomeConfig,
    pub witness: WitnessConfig,
    pub sweep: SweepConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            schema_version: SCHEMA_VERSION,
            atoms: AtomsConfig::default(),
            field: FieldConfig::default(),
            probe: ProbeConfig::default(),
            scattering: ScatteringConfig::default(),
            schedule: ScheduleConfig::default(),
            sampling: SamplingConfig::default(),
            outcome: OutcomeConfig::default(),
            witness: WitnessConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AtomsConfig {
    /// Mean atom number.
    pub n_at: f64,
    /// `var(N) = x² N`.
    pub noise_factor: f64,
    pub polarization_axis: [f64; 3],
}

impl Default for AtomsConfig {
    fn default() -> Self {
        AtomsConfig {
            n_at: 1.25e6,
            noise_factor: 1.0,
            polarization_axis: [1.0, 0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldConfig {
    /// mG.
    pub b_mg: [f64; 3],
    /// rad·s⁻¹·mG⁻¹.
    pub gyromagnetic_ratio: f64,
    /// Transverse dephasing rate, μs⁻¹.
    pub dephasing_rate: f64,
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig {
            b_mg: [0.0, 14.3, 0.0],
            gyromagnetic_ratio: DEFAULT_GYROMAGNETIC_RATIO,
            dephasing_rate: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    pub g1: f64,
    pub g2: f64,
    /// Used by the `fixed` and `fig3-decay` rules; derived under
    /// `analytic-optimum`.
    pub photons_per_pulse: f64,
    pub pulse_duration_us: f64,
    pub intra_pair_gap_us: f64,
    /// Polarimeter noise on top of the Stokes shot noise.
    pub readout_variance: f64,
    pub pulse_steps: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            g1: 0.5e-7,
            g2: 1.1e-9,
            photons_per_pulse: 1e8,
            pulse_duration_us: 1.0,
            intra_pair_gap_us: 1.0,
            readout_variance: 0.0,
            pulse_steps: DEFAULT_PULSE_STEPS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EtaRule {
    /// `eta` per pulse as given.
    Fixed,
    /// `(1 − η)^calibration_pulses = coherence_target`.
    Fig3Decay,
    /// Total scattering `1/√(2α₀)` spread over the schedule's pulses, with
    /// atom and photon numbers following the optical-depth mapping.
    AnalyticOptimum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScatteringConfig {
    pub rule: EtaRule,
    pub model: DecoherenceModel,
    /// Per-pulse probability for the `fixed` rule.
    pub eta: f64,
    pub coherence_target: f64,
    pub calibration_pulses: usize,
    /// Optical depth for the `analytic-optimum` rule.
    pub alpha0: f64,
    /// Optical depth of the reference point (`atoms.n_at`, `probe.g1`).
    pub reference_alpha0: f64,
    /// `G₁² n_ph N / 2 = kappa_scale · α₀ η` per pulse.
    pub kappa_scale: f64,
    /// Scale the atom number with α₀ at fixed geometry.
    pub scale_atoms_with_alpha0: bool,
}

impl Default for ScatteringConfig {
    fn default() -> Self {
        ScatteringConfig {
            rule: EtaRule::Fig3Decay,
            model: DecoherenceModel::Loss,
            eta: 0.021,
            coherence_target: 0.60,
            calibration_pulses: 24,
            alpha0: 65.0,
            reference_alpha0: 65.0,
            kappa_scale: 1.0,
            scale_atoms_with_alpha0: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub mode: ProbeMode,
    pub n_periods: usize,
    /// Start time of the first event, μs.
    pub start_offset_us: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            mode: ProbeMode::TwoComponent,
            n_periods: 3,
            start_offset_us: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingConfig {
    pub step_us: f64,
    /// Free evolution recorded after the last Larmor period of probing.
    pub tail_us: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            step_us: 1.0,
            tail_us: 100.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeKind {
    Mean,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutcomeConfig {
    pub mode: OutcomeKind,
    pub seed: u64,
}

impl Default for OutcomeConfig {
    fn default() -> Self {
        OutcomeConfig {
            mode: OutcomeKind::Mean,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WitnessConfig {
    /// Per-particle spin in the generalized squeezing parameter.
    pub spin: f64,
}

impl Default for WitnessConfig {
    fn default() -> Self {
        WitnessConfig { spin: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub alpha0: Vec<f64>,
    pub x: Vec<f64>,
    pub mode: Vec<ProbeMode>,
}

/// Quantities derived from a config before a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resolved {
    pub n_at: f64,
    pub eta_per_pulse: f64,
    pub photons_per_pulse: f64,
    pub pulses_total: usize,
    /// `G₁² n_ph N / 2` for the initial state.
    pub kappa_per_pulse: f64,
    /// Coherence left after all pulses, `(1 − η)^pulses`.
    pub coherence_after_probing: f64,
    pub larmor_period_us: f64,
    pub end_time_us: f64,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(SimError::Config(format!("{name} must be positive and finite, got {v}")))
    }
}

fn non_negative(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(SimError::Config(format!("{name} must be >= 0 and finite, got {v}")))
    }
}

impl SimConfig {
    /// Parses TOML text, applies `key.path=value` overrides, validates.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        Self::layered(&[], text, overrides)
    }

    /// Preset assignments first, then the file's keys, then overrides.
    pub fn layered(preset: &[&str], text: &str, overrides: &[String]) -> Result<Self> {
        let mut table = toml::Table::new();
        for p in preset {
            apply_override(&mut table, p)?;
        }
        let file: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| SimError::Config(format!("invalid TOML: {e}")))?;
        merge_tables(&mut table, file);
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let config: SimConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| SimError::Config(e.to_string().trim().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: Option<&std::path::Path>, overrides: &[String]) -> Result<Self> {
        Self::from_toml_str(&read_config_text(path)?, overrides)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| SimError::Config(format!("cannot serialize config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(SimError::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        positive("atoms.n_at", self.atoms.n_at)?;
        non_negative("atoms.noise_factor", self.atoms.noise_factor)?;
        InitialStateSpec {
            n_mean: self.atoms.n_at,
            number_noise_factor: self.atoms.noise_factor,
            polarization_axis: self.atoms.polarization_axis,
        }
        .validate()
        .map_err(|e| SimError::Config(format!("atoms: {e}")))?;
        MagneticField::new(self.field.b_mg, self.field.gyromagnetic_ratio)
            .map_err(|e| SimError::Config(format!("field: {e}")))?;
        if self.field.b_mg.iter().all(|b| *b == 0.0) {
            return Err(SimError::Config("field.b_mg must be nonzero for stroboscopic probing".into()));
        }
        non_negative("field.dephasing_rate", self.field.dephasing_rate)?;
        non_negative("probe.g1", self.probe.g1)?;
        non_negative("probe.g2", self.probe.g2)?;
        positive("probe.photons_per_pulse", self.probe.photons_per_pulse)?;
        non_negative("probe.pulse_duration_us", self.probe.pulse_duration_us)?;
        non_negative("probe.intra_pair_gap_us", self.probe.intra_pair_gap_us)?;
        non_negative("probe.readout_variance", self.probe.readout_variance)?;
        if self.probe.pulse_steps == 0 {
            return Err(SimError::Config("probe.pulse_steps must be >= 1".into()));
        }
        let s = &self.scattering;
        match s.rule {
            EtaRule::Fixed => {
                if !(0.0..1.0).contains(&s.eta) {
                    return Err(SimError::Config(format!(
                        "scattering.eta must lie in [0, 1), got {}",
                        s.eta
                    )));
                }
            }
            EtaRule::Fig3Decay => {
                if !(s.coherence_target > 0.0 && s.coherence_target <= 1.0) {
                    return Err(SimError::Config(format!(
                        "scattering.coherence_target must lie in (0, 1], got {}",
                        s.coherence_target
                    )));
                }
                if s.calibration_pulses == 0 {
                    return Err(SimError::Config("scattering.calibration_pulses must be >= 1".into()));
                }
            }
            EtaRule::AnalyticOptimum => {
                positive("scattering.alpha0", s.alpha0)?;
                positive("scattering.reference_alpha0", s.reference_alpha0)?;
                positive("scattering.kappa_scale", s.kappa_scale)?;
                positive("probe.g1", self.probe.g1)?;
                if s.alpha0 <= 0.5 {
                    return Err(SimError::Config(format!(
                        "scattering.alpha0 = {} gives a total scattering probability >= 1",
                        s.alpha0
                    )));
                }
            }
        }
        if self.schedule.n_periods == 0 && s.rule == EtaRule::AnalyticOptimum {
            return Err(SimError::Config(
                "schedule.n_periods must be >= 1 under the analytic-optimum rule".into(),
            ));
        }
        non_negative("schedule.start_offset_us", self.schedule.start_offset_us)?;
        positive("sampling.step_us", self.sampling.step_us)?;
        non_negative("sampling.tail_us", self.sampling.tail_us)?;
        positive("witness.spin", self.witness.spin)?;
        for a in &self.sweep.alpha0 {
            positive("sweep.alpha0 entries", *a)?;
        }
        for x in &self.sweep.x {
            non_negative("sweep.x entries", *x)?;
        }
        let r = self.resolve()?;
        let event = self.probe.pulse_duration_us * 2.0 + self.probe.intra_pair_gap_us;
        let spacing = r.larmor_period_us / self.schedule.mode.events_per_period() as f64;
        if event > spacing {
            return Err(SimError::Config(format!(
                "a measurement event lasts {event} μs, longer than the {spacing} μs event spacing"
            )));
        }
        Ok(())
    }

    pub fn field(&self) -> Result<MagneticField> {
        MagneticField::new(self.field.b_mg, self.field.gyromagnetic_ratio)
    }

    pub fn pulses_total(&self) -> usize {
        2 * self.schedule.n_periods * self.schedule.mode.events_per_period()
    }

    pub fn resolve(&self) -> Result<Resolved> {
        let field = self.field()?;
        let s = &self.scattering;
        let pulses_total = self.pulses_total();
        let (n_at, eta, photons) = match s.rule {
            EtaRule::Fixed => (self.atoms.n_at, s.eta, self.probe.photons_per_pulse),
            EtaRule::Fig3Decay => (
                self.atoms.n_at,
                1.0 - s.coherence_target.powf(1.0 / s.calibration_pulses as f64),
                self.probe.photons_per_pulse,
            ),
            EtaRule::AnalyticOptimum => {
                let n_at = if s.scale_atoms_with_alpha0 {
                    self.atoms.n_at * s.alpha0 / s.reference_alpha0
                } else {
                    self.atoms.n_at
                };
                let eta_total = optimal_eta(s.alpha0)?;
                let eta = 1.0 - (1.0 - eta_total).powf(1.0 / pulses_total as f64);
                let kappa = s.kappa_scale * s.alpha0 * eta;
                let photons = 2.0 * kappa / (self.probe.g1 * self.probe.g1 * n_at);
                (n_at, eta, photons)
            }
        };
        let period = field.larmor_period();
        let end = (self.schedule.n_periods as f64 * period + self.sampling.tail_us)
            .max(self.schedule.start_offset_us + self.sampling.tail_us);
        Ok(Resolved {
            n_at,
            eta_per_pulse: eta,
            photons_per_pulse: photons,
            pulses_total,
            kappa_per_pulse: self.probe.g1 * self.probe.g1 * photons * n_at / 2.0,
            coherence_after_probing: (1.0 - eta).powi(pulses_total as i32),
            larmor_period_us: period,
            end_time_us: end,
        })
    }

    pub fn initial_state_spec(&self, r: &Resolved) -> InitialStateSpec {
        InitialStateSpec {
            n_mean: r.n_at,
            number_noise_factor: self.atoms.noise_factor,
            polarization_axis: self.atoms.polarization_axis,
        }
    }

    pub fn pulse_pair(&self, r: &Resolved) -> [StokesPulse; 2] {
        let make = |polarization| StokesPulse {
            n_photons: r.photons_per_pulse,
            polarization,
            duration: self.probe.pulse_duration_us,
            g1: self.probe.g1,
            g2: self.probe.g2,
            eta: r.eta_per_pulse,
        };
        [make(Polarization::H), make(Polarization::V)]
    }

    pub fn probe_settings(&self) -> Result<ProbeSettings> {
        Ok(ProbeSettings {
            field: self.field()?,
            decoherence: self.scattering.model,
            readout_variance: self.probe.readout_variance,
            dephasing_rate: self.field.dephasing_rate,
            pulse_steps: self.probe.pulse_steps,
        })
    }

    pub fn schedule(&self, r: &Resolved) -> Result<ProbeSchedule> {
        if self.schedule.n_periods == 0 {
            return Ok(ProbeSchedule::empty(self.schedule.mode));
        }
        ProbeSchedule::stroboscopic(
            self.schedule.mode,
            self.schedule.n_periods,
            &self.field()?,
            self.schedule.start_offset_us,
            self.pulse_pair(r),
            self.probe.intra_pair_gap_us,
        )
    }

    pub fn sampling_grid(&self, r: &Resolved) -> SamplingGrid {
        SamplingGrid {
            step: self.sampling.step_us,
            end: r.end_time_us,
        }
    }

    pub fn outcome_mode(&self) -> OutcomeMode {
        match self.outcome.mode {
            OutcomeKind::Mean => OutcomeMode::Mean,
            OutcomeKind::Sampled => OutcomeMode::Sampled {
                seed: self.outcome.seed,
            },
        }
    }
}

/// Contents of an optional config file; empty when no path is given.
pub fn read_config_text(path: Option<&std::path::Path>) -> Result<String> {
    match path {
        Some(p) => std::fs::read_to_string(p)
            .map_err(|e| SimError::Config(format!("cannot read config {}: {e}", p.display()))),
        None => Ok(String::new()),
    }
}

/// Recursive merge; values in `top` win.
fn merge_tables(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => merge_tables(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Sets `a.b.c = value` in a TOML table. The value is read as a TOML
/// literal when possible and as a bare string otherwise.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| SimError::Config(format!("override {assignment:?} is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    if key.is_empty() {
        return Err(SimError::Config(format!("override {assignment:?} has an empty key")));
    }
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| {
            SimError::Config(format!("override {key:?}: {p:?} is not a table"))
        })?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}
