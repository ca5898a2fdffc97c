//! Pulse-pair QND measurement events and stroboscopic probe schedules.

use std::fmt;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use nalgebra::{DVector, SVector};

use crate::dynamics::{
    decohere, dephase, free_mean_map, interact, is_stokes_label, precess, DecoherenceModel,
    Ensemble, MagneticField, Polarization, StokesBlock, StokesPulse, DEFAULT_PULSE_STEPS,
};
use crate::error::{Result, SimError};
use crate::spin::{Mat8, ATOMIC_DIM, ATOMIC_LABELS};

/// Absolute time tolerance (μs) when matching event times.
pub const TIME_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeMode {
    /// Probes ±F_z only: two events per Larmor period.
    OneComponent,
    /// Probes F_z, F_x, −F_z, −F_x: four events per Larmor period.
    TwoComponent,
}

impl ProbeMode {
    pub fn events_per_period(self) -> usize {
        match self {
            ProbeMode::OneComponent => 2,
            ProbeMode::TwoComponent => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ProbeMode::OneComponent => "one-component",
            ProbeMode::TwoComponent => "two-component",
        }
    }
}

impl fmt::Display for ProbeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Atomic-frame in-plane component that lies along the laboratory z axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Component {
    #[serde(rename = "+Fz")]
    PlusFz,
    #[serde(rename = "+Fx")]
    PlusFx,
    #[serde(rename = "-Fz")]
    MinusFz,
    #[serde(rename = "-Fx")]
    MinusFx,
}

impl Component {
    /// Nearest quarter turn of the precession angle. In the frame
    /// co-rotating with the spins, laboratory F_z reads
    /// `sin φ · F_x + cos φ · F_z`.
    pub fn from_angle(phi: f64) -> Self {
        let quarter = (phi / std::f64::consts::FRAC_PI_2).round().rem_euclid(4.0) as u8;
        match quarter {
            0 => Component::PlusFz,
            1 => Component::PlusFx,
            2 => Component::MinusFz,
            _ => Component::MinusFx,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Component::PlusFz => "+Fz",
            Component::PlusFx => "+Fx",
            Component::MinusFz => "-Fz",
            Component::MinusFx => "-Fx",
        }
    }
}

/// An h pulse, a precession gap, then a v pulse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementEvent {
    /// Event start in μs.
    pub time: f64,
    pub target: Component,
    pub pulses: [StokesPulse; 2],
    /// μs between the end of the h pulse and the start of the v pulse.
    pub intra_pair_gap: f64,
}

impl MeasurementEvent {
    pub fn new(
        time: f64,
        field: &MagneticField,
        pulses: [StokesPulse; 2],
        intra_pair_gap: f64,
    ) -> Result<Self> {
        let mut event = MeasurementEvent {
            time,
            target: Component::PlusFz,
            pulses,
            intra_pair_gap,
        };
        event.validate()?;
        event.target = Component::from_angle(field.angle(event.center()));
        Ok(event)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pulses[0].polarization != Polarization::H
            || self.pulses[1].polarization != Polarization::V
        {
            return Err(SimError::Structural(
                "a measurement event is an h pulse followed by a v pulse".into(),
            ));
        }
        if !(self.intra_pair_gap >= 0.0) {
            return Err(SimError::Structural(format!(
                "intra-pair gap must be >= 0, got {}",
                self.intra_pair_gap
            )));
        }
        if !self.time.is_finite() || self.time < 0.0 {
            return Err(SimError::Scheduling(format!(
                "event time must be finite and >= 0, got {}",
                self.time
            )));
        }
        for p in &self.pulses {
            p.validate()?;
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.pulses[0].duration + self.intra_pair_gap + self.pulses[1].duration
    }

    pub fn end(&self) -> f64 {
        self.time + self.duration()
    }

    pub fn center(&self) -> f64 {
        self.time + 0.5 * self.duration()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSchedule {
    pub events: Vec<MeasurementEvent>,
    pub mode: ProbeMode,
    pub n_periods: usize,
}

impl ProbeSchedule {
    pub fn empty(mode: ProbeMode) -> Self {
        ProbeSchedule {
            events: Vec::new(),
            mode,
            n_periods: 0,
        }
    }

    /// Events every `T_L / events_per_period`, the first starting at
    /// `start_offset` μs.
    pub fn stroboscopic(
        mode: ProbeMode,
        n_periods: usize,
        field: &MagneticField,
        start_offset: f64,
        pulses: [StokesPulse; 2],
        intra_pair_gap: f64,
    ) -> Result<Self> {
        if field.axis().is_none() {
            return Err(SimError::Scheduling(
                "stroboscopic probing needs a nonzero field".into(),
            ));
        }
        let spacing = field.larmor_period() / mode.events_per_period() as f64;
        let count = n_periods * mode.events_per_period();
        let events = (0..count)
            .map(|k| {
                MeasurementEvent::new(
                    start_offset + k as f64 * spacing,
                    field,
                    pulses,
                    intra_pair_gap,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let schedule = ProbeSchedule {
            events,
            mode,
            n_periods,
        };
        schedule.validate(field)?;
        Ok(schedule)
    }

    pub fn validate(&self, field: &MagneticField) -> Result<()> {
        for e in &self.events {
            e.validate()?;
        }
        if self.events.len() < 2 {
            return Ok(());
        }
        let spacing = field.larmor_period() / self.mode.events_per_period() as f64;
        for w in self.events.windows(2) {
            let gap = w[1].time - w[0].time;
            if !(gap > 0.0) {
                return Err(SimError::Scheduling(format!(
                    "event times must be strictly increasing ({} then {})",
                    w[0].time, w[1].time
                )));
            }
            if (gap - spacing).abs() > 1e-6 * spacing {
                return Err(SimError::Scheduling(format!(
                    "event spacing {gap} μs does not match {} probing (T_L/{} = {spacing} μs)",
                    self.mode,
                    self.mode.events_per_period()
                )));
            }
            if w[0].end() > w[1].time + TIME_TOLERANCE {
                return Err(SimError::Scheduling(format!(
                    "event at {} μs overlaps the next one at {} μs",
                    w[0].time, w[1].time
                )));
            }
        }
        Ok(())
    }

    pub fn pulse_count(&self) -> usize {
        2 * self.events.len()
    }

    pub fn last_end(&self) -> f64 {
        self.events.last().map_or(0.0, |e| e.end())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum OutcomeMode {
    /// Every readout equals its predicted mean.
    Mean,
    /// Readouts drawn from the predicted Gaussian marginal.
    Sampled { seed: u64 },
}

/// Source of polarimeter outcomes for one run.
#[derive(Debug, Clone)]
pub struct OutcomeSource {
    rng: Option<ChaCha8Rng>,
}

impl OutcomeSource {
    pub fn new(mode: OutcomeMode) -> Self {
        OutcomeSource {
            rng: match mode {
                OutcomeMode::Mean => None,
                OutcomeMode::Sampled { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
            },
        }
    }

    fn draw(&mut self, mean: f64, variance: f64) -> Result<f64> {
        match self.rng.as_mut() {
            None => Ok(mean),
            Some(rng) => {
                let normal = Normal::new(mean, variance.max(0.0).sqrt()).map_err(|e| {
                    SimError::Structural(format!("invalid outcome distribution: {e}"))
                })?;
                Ok(normal.sample(rng))
            }
        }
    }
}

/// Physical settings shared by every event of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeSettings {
    pub field: MagneticField,
    pub decoherence: DecoherenceModel,
    /// Extra polarimeter noise added to the Stokes shot noise.
    pub readout_variance: f64,
    /// Transverse dephasing rate in μs⁻¹.
    pub dephasing_rate: f64,
    pub pulse_steps: usize,
}

impl ProbeSettings {
    pub fn new(field: MagneticField) -> Self {
        ProbeSettings {
            field,
            decoherence: DecoherenceModel::Loss,
            readout_variance: 0.0,
            dephasing_rate: 0.0,
            pulse_steps: DEFAULT_PULSE_STEPS,
        }
    }
}

/// Conditional state of a run.
///
/// Covariances and linearization points follow the nominal trajectory, on
/// which every readout equals its prediction; sampled readouts displace the
/// atomic means by `offset`, which propagates through the same linear maps.
/// Covariances are therefore independent of the realized outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct RunState {
    pub nominal: Ensemble,
    pub offset: SVector<f64, ATOMIC_DIM>,
}

impl RunState {
    pub fn new(nominal: Ensemble) -> Self {
        RunState {
            nominal,
            offset: SVector::zeros(),
        }
    }

    pub fn time(&self) -> f64 {
        self.nominal.time()
    }

    pub fn atom_number(&self) -> f64 {
        self.nominal.atom_number
    }

    /// Conditional atomic means.
    pub fn atomic_means(&self) -> Result<[f64; ATOMIC_DIM]> {
        let mut m = self.nominal.atomic_means()?;
        for (k, v) in m.iter_mut().enumerate() {
            *v += self.offset[k];
        }
        Ok(m)
    }

    pub fn mean_of(&self, label: &str) -> Result<f64> {
        let base = self.nominal.state.mean_of(label)?;
        Ok(match ATOMIC_LABELS.iter().position(|l| *l == label) {
            Some(k) => base + self.offset[k],
            None => base,
        })
    }

    pub fn var_of(&self, label: &str) -> Result<f64> {
        self.nominal.state.var_of(label)
    }

    fn with_time(mut self, time: f64) -> Self {
        self.nominal.state = self.nominal.state.with_time(time);
        self
    }
}

/// Free evolution: precession plus optional dephasing.
pub fn evolve(run: &RunState, settings: &ProbeSettings, dt: f64) -> Result<RunState> {
    let state = precess(&run.nominal.state, &settings.field, dt)?;
    let nominal = dephase(
        &Ensemble {
            state,
            atom_number: run.nominal.atom_number,
        },
        &settings.field,
        settings.dephasing_rate,
        dt,
    )?;
    let offset = if run.offset.iter().all(|v| *v == 0.0) {
        run.offset
    } else {
        free_mean_map(&settings.field, settings.dephasing_rate, dt)? * run.offset
    };
    Ok(RunState { nominal, offset })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub time: f64,
    pub target: Component,
    /// S_y readouts of the h and v pulses.
    pub outcomes: [f64; 2],
    /// Laboratory var(F_z) at event start and end.
    pub pre_variance: f64,
    pub post_variance: f64,
    /// `var/var' − 1` of laboratory F_z across each conditioning step.
    pub pulse_kappas: [f64; 2],
    /// Combined strength: `(1+κ_h)(1+κ_v) − 1`.
    pub kappa: f64,
    pub max_rotation_angle: f64,
}

struct PulseResult {
    run: RunState,
    outcome: f64,
    kappa: f64,
    max_rotation_angle: f64,
}

/// One pulse: adjoin, interact, read out S_y, scatter, trace out the light.
fn apply_pulse(
    run: &RunState,
    settings: &ProbeSettings,
    pulse: &StokesPulse,
    slot: usize,
    outcomes: &mut OutcomeSource,
) -> Result<PulseResult> {
    let block = StokesBlock::indexed(slot);
    let (m, c) = pulse.stokes_moments();
    let joint = run.nominal.state.adjoin_block(&block.refs(), &m, &c)?;
    let (joint, report) = interact(&joint, pulse, &block, settings.pulse_steps)?;

    let mut labels: Vec<&str> = ATOMIC_LABELS.to_vec();
    labels.extend(block.refs());
    let idx = joint.indices_of(&labels)?;
    let sy = joint.require_index(block.sy())?;
    let mut offset = DVector::zeros(labels.len());
    offset.rows_mut(0, ATOMIC_DIM).copy_from(&run.offset);
    let mut offset = &report.tangent * offset;

    let before = joint.var_of("Fz")?;
    let nominal_outcome = joint.mean()[sy];
    let predicted = nominal_outcome + offset[ATOMIC_DIM + 1];
    let spread = joint.cov()[(sy, sy)] + settings.readout_variance;
    let outcome = outcomes.draw(predicted, spread)?;
    if outcome != predicted {
        let gain = (outcome - predicted) / spread;
        for (k, &i) in idx.iter().enumerate() {
            offset[k] += joint.cov()[(i, sy)] * gain;
        }
    }
    let joint = joint.condition(block.sy(), nominal_outcome, settings.readout_variance)?;
    let after = joint.var_of("Fz")?;
    let kappa = if after > 0.0 { before / after - 1.0 } else { f64::INFINITY };

    let scattered = decohere(
        &Ensemble {
            state: joint,
            atom_number: run.nominal.atom_number,
        },
        pulse.eta,
        settings.decoherence,
    )?;
    let state = scattered.state.drop_block(&block.refs())?;
    Ok(PulseResult {
        run: RunState {
            nominal: Ensemble {
                state,
                atom_number: scattered.atom_number,
            },
            offset: SVector::from_fn(|k, _| offset[k] * (1.0 - pulse.eta)),
        },
        outcome,
        kappa,
        max_rotation_angle: report.max_rotation_angle,
    })
}

/// Runs one h/v measurement event starting at `event.time`.
pub fn measure_event(
    run: &RunState,
    settings: &ProbeSettings,
    event: &MeasurementEvent,
    outcomes: &mut OutcomeSource,
) -> Result<(RunState, MeasurementRecord)> {
    event.validate()?;
    if (run.time() - event.time).abs() > TIME_TOLERANCE {
        return Err(SimError::Scheduling(format!(
            "state time {} μs does not match event time {} μs",
            run.time(),
            event.time
        )));
    }
    if let Some(l) = run.nominal.state.labels().iter().find(|l| is_stokes_label(l)) {
        return Err(SimError::Structural(format!("pending pulse block {l:?}")));
    }
    let omega_tau = event
        .pulses
        .iter()
        .map(|p| settings.field.angle(p.duration))
        .fold(0.0, f64::max);
    if omega_tau > 0.1 {
        log::warn!("Larmor rotation during a pulse is {omega_tau:.3} rad (> 0.1 rad)");
    }

    let pre_variance = run.var_of("Fz")?;
    let [h, v] = &event.pulses;
    let r = evolve(run, settings, h.duration / 2.0)?;
    let ph = apply_pulse(&r, settings, h, 0, outcomes)?;
    let r = evolve(
        &ph.run,
        settings,
        h.duration / 2.0 + event.intra_pair_gap + v.duration / 2.0,
    )?;
    let pv = apply_pulse(&r, settings, v, 1, outcomes)?;
    // Pin the clock to the nominal end to keep float drift out of scheduling.
    let r = evolve(&pv.run, settings, v.duration / 2.0)?.with_time(event.end());

    let record = MeasurementRecord {
        time: event.time,
        target: event.target,
        outcomes: [ph.outcome, pv.outcome],
        pre_variance,
        post_variance: r.var_of("Fz")?,
        pulse_kappas: [ph.kappa, pv.kappa],
        kappa: (1.0 + ph.kappa) * (1.0 + pv.kappa) - 1.0,
        max_rotation_angle: ph.max_rotation_angle.max(pv.max_rotation_angle),
    };
    Ok((r, record))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleKind {
    Grid,
    EventStart,
    EventEnd,
}

/// Atomic moments at one recorded time.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub time: f64,
    pub kind: SampleKind,
    pub atom_number: f64,
    pub means: [f64; ATOMIC_DIM],
    pub cov: Mat8,
    /// Smallest eigenvalue of the atomic covariance.
    pub min_eigenvalue: f64,
}

impl Sample {
    pub fn capture(run: &RunState, kind: SampleKind) -> Result<Self> {
        let cov = run.nominal.atomic_cov()?;
        let min_eigenvalue = cov.symmetric_eigenvalues().min();
        Ok(Sample {
            time: run.time(),
            kind,
            atom_number: run.atom_number(),
            means: run.atomic_means()?,
            cov,
            min_eigenvalue,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub records: Vec<MeasurementRecord>,
    pub conditioning_count: usize,
    pub final_state: RunState,
}

/// Sample times every `step` μs up to `end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingGrid {
    pub step: f64,
    pub end: f64,
}

struct Recorder {
    samples: Vec<Sample>,
}

impl Recorder {
    fn push(&mut self, run: &RunState, kind: SampleKind) -> Result<()> {
        if let Some(last) = self.samples.last() {
            if run.time() <= last.time + TIME_TOLERANCE {
                return Ok(());
            }
        }
        self.samples.push(Sample::capture(run, kind)?);
        Ok(())
    }
}

/// Free evolution to `target`, recording every grid point on the way.
fn advance(
    mut e: RunState,
    settings: &ProbeSettings,
    target: f64,
    step: f64,
    recorder: &mut Recorder,
) -> Result<RunState> {
    loop {
        let t = e.time();
        let next_grid = (((t + TIME_TOLERANCE) / step).floor() + 1.0) * step;
        if next_grid < target - TIME_TOLERANCE {
            e = evolve(&e, settings, next_grid - t)?.with_time(next_grid);
            recorder.push(&e, SampleKind::Grid)?;
        } else {
            if target > t {
                e = evolve(&e, settings, target - t)?;
            }
            return Ok(e.with_time(target.max(t)));
        }
    }
}

/// Alternates free evolution and measurement events, recording atomic
/// moments on the sampling grid and at every event boundary.
pub fn run_schedule(
    initial: &Ensemble,
    settings: &ProbeSettings,
    schedule: &ProbeSchedule,
    outcome_mode: OutcomeMode,
    grid: SamplingGrid,
) -> Result<Trajectory> {
    schedule.validate(&settings.field)?;
    if !(grid.step > 0.0) {
        return Err(SimError::Config(format!(
            "sampling step must be positive, got {}",
            grid.step
        )));
    }
    if let Some(first) = schedule.events.first() {
        if first.time + TIME_TOLERANCE < initial.time() {
            return Err(SimError::Scheduling(format!(
                "first event at {} μs precedes the initial state time {} μs",
                first.time,
                initial.time()
            )));
        }
    }
    let mut outcomes = OutcomeSource::new(outcome_mode);
    let mut recorder = Recorder { samples: Vec::new() };
    recorder.push(&RunState::new(initial.clone()), SampleKind::Grid)?;
    let mut e = RunState::new(initial.clone());
    let mut records = Vec::with_capacity(schedule.events.len());
    for event in &schedule.events {
        e = advance(e, settings, event.time, grid.step, &mut recorder)?;
        recorder.push(&e, SampleKind::EventStart)?;
        let (next, record) = measure_event(&e, settings, event, &mut outcomes)?;
        e = next;
        records.push(record);
        recorder.push(&e, SampleKind::EventEnd)?;
    }
    let end = grid.end.max(e.time());
    e = advance(e, settings, end, grid.step, &mut recorder)?;
    recorder.push(&e, SampleKind::Grid)?;
    Ok(Trajectory {
        samples: recorder.samples,
        conditioning_count: 2 * records.len(),
        records,
        final_state: e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::DEFAULT_GYROMAGNETIC_RATIO;
    use crate::spin::{make_initial_state, InitialStateSpec, FX, FZ};
    use approx::assert_relative_eq;

    const N: f64 = 1.25e6;

    fn field() -> MagneticField {
        MagneticField::new([0.0, 14.3, 0.0], DEFAULT_GYROMAGNETIC_RATIO).unwrap()
    }

    fn pulse(pol: Polarization, n_photons: f64, g1: f64, eta: f64) -> StokesPulse {
        StokesPulse {
            n_photons,
            polarization: pol,
            duration: 1.0,
            g1,
            g2: 0.0,
            eta,
        }
    }

    fn pair(n_photons: f64, g1: f64, eta: f64) -> [StokesPulse; 2] {
        [
            pulse(Polarization::H, n_photons, g1, eta),
            pulse(Polarization::V, n_photons, g1, eta),
        ]
    }

    fn ensemble(x: f64) -> Ensemble {
        Ensemble::new(make_initial_state(&InitialStateSpec::pcss(N, x)).unwrap(), N).unwrap()
    }

    fn run_state(x: f64) -> RunState {
        RunState::new(ensemble(x))
    }

    /// No precession, so both pulses of a pair see the same F_z.
    fn frozen() -> ProbeSettings {
        ProbeSettings::new(MagneticField::new([0.0; 3], DEFAULT_GYROMAGNETIC_RATIO).unwrap())
    }

    fn event_at(t: f64, pulses: [StokesPulse; 2]) -> MeasurementEvent {
        MeasurementEvent::new(t, &field(), pulses, 1.0).unwrap()
    }

    #[test]
    fn component_labels_follow_precession() {
        let f = field();
        let s = ProbeSchedule::stroboscopic(ProbeMode::TwoComponent, 1, &f, 0.0, pair(1e8, 0.5e-7, 0.0), 1.0)
            .unwrap();
        let labels: Vec<_> = s.events.iter().map(|e| e.target).collect();
        assert_eq!(
            labels,
            vec![Component::PlusFz, Component::PlusFx, Component::MinusFz, Component::MinusFx]
        );
        let s = ProbeSchedule::stroboscopic(ProbeMode::OneComponent, 2, &f, 0.0, pair(1e8, 0.5e-7, 0.0), 1.0)
            .unwrap();
        assert!(s
            .events
            .iter()
            .all(|e| matches!(e.target, Component::PlusFz | Component::MinusFz)));
        assert_eq!(s.pulse_count(), 8);
    }

    #[test]
    fn wrong_pulse_order_rejected() {
        let p = pair(1e8, 0.5e-7, 0.0);
        let err = MeasurementEvent::new(0.0, &field(), [p[1], p[0]], 1.0).unwrap_err();
        assert!(matches!(err, SimError::Structural(_)));
    }

    #[test]
    fn inconsistent_spacing_rejected() {
        let f = field();
        let mut s =
            ProbeSchedule::stroboscopic(ProbeMode::TwoComponent, 1, &f, 0.0, pair(1e8, 0.5e-7, 0.0), 1.0).unwrap();
        s.events[2].time += 3.0;
        assert!(matches!(s.validate(&f), Err(SimError::Scheduling(_))));
        s.events[2].time = s.events[1].time;
        assert!(matches!(s.validate(&f), Err(SimError::Scheduling(_))));
    }

    #[test]
    fn time_mismatch_is_a_scheduling_error() {
        let e = run_state(1.0);
        let ev = event_at(5.0, pair(1e8, 0.5e-7, 0.0));
        let err = measure_event(&e, &ProbeSettings::new(field()), &ev, &mut OutcomeSource::new(OutcomeMode::Mean))
            .unwrap_err();
        assert!(matches!(err, SimError::Scheduling(_)));
    }

    #[test]
    fn pending_pulse_block_rejected() {
        let mut e = run_state(1.0);
        let p = pulse(Polarization::H, 1e8, 0.5e-7, 0.0);
        let (m, c) = p.stokes_moments();
        e.nominal.state = e.nominal.state.adjoin_block(&StokesBlock::indexed(7).refs(), &m, &c).unwrap();
        let ev = event_at(0.0, pair(1e8, 0.5e-7, 0.0));
        let err = measure_event(&e, &ProbeSettings::new(field()), &ev, &mut OutcomeSource::new(OutcomeMode::Mean))
            .unwrap_err();
        assert!(matches!(err, SimError::Structural(_)));
    }

    #[test]
    fn uncoupled_event_only_decoheres() {
        let e = run_state(1.0);
        let settings = frozen();
        let ev = MeasurementEvent::new(0.0, &settings.field, pair(1e8, 0.0, 0.02), 1.0).unwrap();
        let (out, rec) = measure_event(&e, &settings, &ev, &mut OutcomeSource::new(OutcomeMode::Mean)).unwrap();
        assert_eq!(rec.kappa, 0.0);
        assert_relative_eq!(out.mean_of("Fx").unwrap(), N * 0.98 * 0.98, max_relative = 1e-12);
    }

    /// Photon number giving single-pulse strength κ for the prior var(F_z).
    fn photons_for_kappa(kappa: f64, g1: f64, var_fz: f64) -> f64 {
        // κ = (G₁ n/2)² var(F_z) / (n/4) = G₁² n var(F_z)
        kappa / (g1 * g1 * var_fz)
    }

    #[test]
    fn unit_kappa_halves_the_measured_variance() {
        let g1 = 0.5e-7;
        let e = run_state(1.0);
        let var0 = e.var_of("Fz").unwrap();
        // Two pulses of κ each on a frozen F_z compose to 1 + 2κ; aim at 1.
        let n = photons_for_kappa(0.5, g1, var0);
        let settings = frozen();
        let ev = MeasurementEvent::new(0.0, &settings.field, pair(n, g1, 0.0), 1.0).unwrap();
        let (out, rec) = measure_event(&e, &settings, &ev, &mut OutcomeSource::new(OutcomeMode::Mean)).unwrap();
        assert_relative_eq!(rec.kappa, 1.0, max_relative = 1e-6);
        assert_relative_eq!(out.var_of("Fz").unwrap(), var0 / 2.0, max_relative = 1e-6);
    }

    #[test]
    fn two_events_match_one_event_with_doubled_photons() {
        let g1 = 0.5e-7;
        let settings = frozen();
        let e = run_state(1.0);
        let n = photons_for_kappa(0.2, g1, e.var_of("Fz").unwrap());
        let mut src = OutcomeSource::new(OutcomeMode::Mean);
        let ev1 = MeasurementEvent::new(0.0, &settings.field, pair(n, g1, 0.0), 1.0).unwrap();
        let (mid, _) = measure_event(&e, &settings, &ev1, &mut src).unwrap();
        let ev2 = MeasurementEvent::new(3.0, &settings.field, pair(n, g1, 0.0), 1.0).unwrap();
        let (two, _) = measure_event(&mid, &settings, &ev2, &mut src).unwrap();
        let evd = MeasurementEvent::new(0.0, &settings.field, pair(2.0 * n, g1, 0.0), 1.0).unwrap();
        let (one, _) = measure_event(&e, &settings, &evd, &mut src).unwrap();
        let v0 = e.var_of("Fz").unwrap();
        assert_relative_eq!(two.var_of("Fz").unwrap(), one.var_of("Fz").unwrap(), max_relative = 1e-6);
        // Four pulses of κ = 0.2 each: 1/(1 + 0.8).
        assert_relative_eq!(two.var_of("Fz").unwrap(), v0 / 1.8, max_relative = 1e-6);
    }

    fn defaults_schedule(mode: ProbeMode) -> (ProbeSettings, ProbeSchedule) {
        let f = field();
        let eta = 1.0 - 0.6f64.powf(1.0 / 24.0);
        let mut pulses = pair(1e8, 0.5e-7, eta);
        for p in &mut pulses {
            p.g2 = 1.1e-9;
        }
        let s = ProbeSchedule::stroboscopic(mode, 3, &f, 0.0, pulses, 1.0).unwrap();
        (ProbeSettings::new(f), s)
    }

    #[test]
    fn every_event_reduces_laboratory_fz_variance() {
        let (settings, schedule) = defaults_schedule(ProbeMode::TwoComponent);
        let grid = SamplingGrid { step: 1.0, end: 400.0 };
        let traj = run_schedule(&ensemble(1.0), &settings, &schedule, OutcomeMode::Mean, grid).unwrap();
        assert_eq!(traj.records.len(), 12);
        assert_eq!(traj.conditioning_count, 24);
        for r in &traj.records {
            assert!(r.post_variance < r.pre_variance, "{r:?}");
            assert!(r.kappa > 0.0);
        }
        let first = &traj.samples[0];
        let last = traj.samples.last().unwrap();
        assert!(last.cov[(1, 1)] > first.cov[(1, 1)]);
        assert!(traj.samples.windows(2).all(|w| w[1].time > w[0].time));
        assert_relative_eq!(last.time, 400.0);
    }

    #[test]
    fn empty_schedule_is_pure_precession() {
        let settings = ProbeSettings::new(field());
        let grid = SamplingGrid { step: 1.0, end: 100.0 };
        let traj = run_schedule(&ensemble(1.0), &settings, &ProbeSchedule::empty(ProbeMode::TwoComponent), OutcomeMode::Mean, grid)
            .unwrap();
        assert_eq!(traj.samples.len(), 101);
        // Variances swap every quarter period; means return after a full one.
        let q = &traj.samples[25];
        assert_relative_eq!(q.cov[(FZ, FZ)], N, max_relative = 1e-9);
        assert_relative_eq!(q.cov[(FX, FX)], N / 2.0, max_relative = 1e-9);
        let h = &traj.samples[50];
        assert_relative_eq!(h.cov[(FX, FX)], N, max_relative = 1e-9);
        assert_relative_eq!(h.means[FX], -N, max_relative = 1e-9);
        assert_relative_eq!(traj.samples[100].means[FX], N, max_relative = 1e-9);
    }

    #[test]
    fn sampled_outcomes_leave_covariances_unchanged() {
        let (settings, schedule) = defaults_schedule(ProbeMode::TwoComponent);
        let grid = SamplingGrid { step: 5.0, end: 300.0 };
        let run = |mode| run_schedule(&ensemble(1.0), &settings, &schedule, mode, grid).unwrap();
        let a = run(OutcomeMode::Sampled { seed: 1 });
        let b = run(OutcomeMode::Sampled { seed: 2 });
        let m = run(OutcomeMode::Mean);
        assert_ne!(a.records[0].outcomes, b.records[0].outcomes);
        for ((sa, sb), sm) in a.samples.iter().zip(&b.samples).zip(&m.samples) {
            assert_eq!(sa.cov, sm.cov);
            assert_eq!(sb.cov, sm.cov);
        }
    }

    #[test]
    fn mean_mode_is_bit_reproducible() {
        let (settings, schedule) = defaults_schedule(ProbeMode::OneComponent);
        let grid = SamplingGrid { step: 1.0, end: 300.0 };
        let a = run_schedule(&ensemble(1.0), &settings, &schedule, OutcomeMode::Mean, grid).unwrap();
        let b = run_schedule(&ensemble(1.0), &settings, &schedule, OutcomeMode::Mean, grid).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.records, b.records);
    }
}
