//! Closed-loop actuator simulator: proportional position loop, DC motor with
//! angle-dependent fault modulation, lumped mechanics with dry friction,
//! backlash and endstops, and an envelope-current sensor chain.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PhmError, Result};
use crate::fault::FaultVector;

/// Gain reported when a probe produces no measurable response.
pub const GAIN_FLOOR_DB: f64 = -120.0;

/// Physical parameters of the actuator plus the knobs of the simulated
/// sensor chain. Angles are radians, the motor side unless stated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActuatorParams {
    /// Stator resistance, ohm.
    pub resistance: f64,
    /// Stator inductance, henry.
    pub inductance: f64,
    /// Back-EMF / torque constant, V·s/rad = N·m/A.
    pub back_emf: f64,
    /// Rotor plus reflected load inertia, kg·m².
    pub inertia: f64,
    /// Nominal dry-friction torque at the motor, N·m.
    pub friction: f64,
    /// Viscous coefficient, N·m·s/rad.
    pub viscous: f64,
    pub gear_ratio: f64,
    /// Nominal total backlash, motor-side rad.
    pub backlash: f64,
    /// Symmetric endstop on the user-side angle, rad.
    pub endstop: f64,
    /// Nominal proportional gain, A per user-side rad.
    pub gain: f64,
    /// Current command saturation, A.
    pub current_limit: f64,
    /// Supply voltage, V.
    pub supply_voltage: f64,
    /// Constant external torque on the user side, N·m.
    #[serde(default)]
    pub load_torque: f64,
    #[serde(default)]
    pub model: ModelSettings,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    pub pole_pairs: u32,
    /// Speed scale of the tanh friction regularisation, rad/s.
    pub friction_speed: f64,
    /// Fraction of R and κv lost under a full short in the conducting sector.
    pub short_severity: f64,
    /// Half-width of each phase's conduction window, electrical rad.
    pub short_window: f64,
    /// κv modulation depth for a full-air-gap eccentricity.
    pub eccentricity_depth: f64,
    /// Commutation ripple amplitude, fraction of instantaneous current (truth tier).
    pub ripple_fraction: f64,
    /// Sensor noise σ as a fraction of `current_limit` (truth tier).
    pub noise_fraction: f64,
    /// Corner of each of the two envelope low-pass stages, Hz.
    pub envelope_cutoff: f64,
    /// Solver steps per acquisition sample.
    pub oversample: u32,
}

impl Default for ModelSettings {
    fn default() -> Self {
        ModelSettings {
            pole_pairs: 2,
            friction_speed: 0.1,
            short_severity: 0.5,
            short_window: 2.0 * std::f64::consts::FRAC_PI_3,
            eccentricity_depth: 0.3,
            ripple_fraction: 0.02,
            noise_fraction: 0.005,
            envelope_cutoff: 50.0,
            oversample: 10,
        }
    }
}

impl Default for ActuatorParams {
    fn default() -> Self {
        ActuatorParams {
            resistance: 1.0,
            inductance: 2e-3,
            back_emf: 0.05,
            inertia: 2e-5,
            friction: 0.01,
            viscous: 1e-5,
            gear_ratio: 100.0,
            backlash: 1e-3,
            endstop: 0.05,
            gain: 500.0,
            current_limit: 10.0,
            supply_voltage: 28.0,
            load_torque: 0.0,
            model: ModelSettings::default(),
        }
    }
}

impl ActuatorParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("resistance", self.resistance),
            ("inductance", self.inductance),
            ("back_emf", self.back_emf),
            ("inertia", self.inertia),
            ("friction", self.friction),
            ("viscous", self.viscous),
            ("gear_ratio", self.gear_ratio),
            ("endstop", self.endstop),
            ("gain", self.gain),
            ("current_limit", self.current_limit),
            ("supply_voltage", self.supply_voltage),
            ("friction_speed", self.model.friction_speed),
            ("envelope_cutoff", self.model.envelope_cutoff),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(PhmError::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        let unit = [
            ("backlash", self.backlash, f64::INFINITY),
            ("short_severity", self.model.short_severity, 0.99),
            ("eccentricity_depth", self.model.eccentricity_depth, 0.99),
            ("ripple_fraction", self.model.ripple_fraction, 1.0),
            ("noise_fraction", self.model.noise_fraction, 1.0),
            ("short_window", self.model.short_window, PI),
        ];
        for (name, v, hi) in unit {
            if !(v.is_finite() && v >= 0.0 && v <= hi) {
                return Err(PhmError::invalid(format!("{name} = {v} outside [0, {hi}]")));
            }
        }
        if !self.load_torque.is_finite() {
            return Err(PhmError::invalid("load_torque must be finite"));
        }
        if self.model.pole_pairs == 0 || self.model.oversample == 0 {
            return Err(PhmError::invalid("pole_pairs and oversample must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    /// Smooth DC model with fault modulation.
    Lf,
    /// Lf plus commutation ripple and sensor noise.
    Truth,
}

impl std::str::FromStr for Tier {
    type Err = PhmError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lf" => Ok(Tier::Lf),
            "truth" => Ok(Tier::Truth),
            other => Err(PhmError::invalid(format!("unknown tier `{other}`"))),
        }
    }
}

/// User-side position command sampled on a uniform grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommandProfile {
    pub duration: f64,
    pub sample_rate: f64,
    pub samples: Vec<f64>,
}

impl CommandProfile {
    pub fn new(duration: f64, sample_rate: f64, samples: Vec<f64>) -> Result<Self> {
        if !(duration.is_finite() && duration > 0.0 && sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(PhmError::invalid("duration and sample rate must be positive"));
        }
        let expected = sample_count(duration, sample_rate);
        if samples.len() != expected {
            return Err(PhmError::invalid(format!(
                "command has {} samples, duration × rate + 1 = {expected}",
                samples.len()
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(PhmError::invalid("command contains non-finite samples"));
        }
        Ok(CommandProfile { duration, sample_rate, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.samples.len()).map(|i| i as f64 / self.sample_rate).collect()
    }
}

fn sample_count(duration: f64, rate: f64) -> usize {
    (duration * rate).round() as usize + 1
}

/// Linear chirp `a·sin(2π(f0·t + (f1 − f0)·t²/(2T)))`.
pub fn chirp_command(duration: f64, amplitude: f64, f_start: f64, f_end: f64, sample_rate: f64) -> Result<CommandProfile> {
    let args = [duration, amplitude, f_start, f_end, sample_rate];
    if args.iter().any(|v| !v.is_finite()) {
        return Err(PhmError::invalid("chirp arguments must be finite"));
    }
    if duration <= 0.0 || sample_rate <= 0.0 {
        return Err(PhmError::invalid("chirp duration and sample rate must be positive"));
    }
    if f_start < 0.0 || f_end < f_start {
        return Err(PhmError::invalid(format!("need 0 ≤ f_start ≤ f_end, got {f_start}, {f_end}")));
    }
    if sample_rate <= 2.0 * f_end {
        return Err(PhmError::invalid(format!("sample rate {sample_rate} Hz does not resolve {f_end} Hz")));
    }
    let n = sample_count(duration, sample_rate);
    let sweep = (f_end - f_start) / (2.0 * duration);
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / sample_rate;
            amplitude * (2.0 * PI * (f_start * t + sweep * t * t)).sin()
        })
        .collect();
    CommandProfile::new(duration, sample_rate, samples)
}

/// Envelope current on the acquisition grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalSnapshot {
    pub t: Vec<f64>,
    pub y: Vec<f64>,
}

impl SignalSnapshot {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Everything the sensor chain sees, sampled on the acquisition grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub t: Vec<f64>,
    pub command: Vec<f64>,
    /// User-side position after backlash.
    pub position: Vec<f64>,
    /// Sensed current before rectification.
    pub current: Vec<f64>,
    pub envelope: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BodeData {
    pub freqs: Vec<f64>,
    pub gain_db: Vec<f64>,
    pub phase_deg: Vec<f64>,
}

/// Fault-dependent constants resolved once per run.
struct Plant {
    r: f64,
    l: f64,
    kv: f64,
    inertia: f64,
    viscous: f64,
    friction: f64,
    inv_wref: f64,
    n: f64,
    half_play: f64,
    endstop: f64,
    kp: f64,
    i_max: f64,
    v_max: f64,
    load: f64,
    pole_pairs: f64,
    modulated: bool,
    ecc_amp: f64,
    ecc_phase: f64,
    shorts: [f64; 3],
    window: f64,
}

impl Plant {
    fn new(fault: &FaultVector, p: &ActuatorParams, force_modulation: bool) -> Self {
        let m = &p.model;
        Plant {
            r: p.resistance,
            l: p.inductance,
            kv: p.back_emf,
            inertia: p.inertia,
            viscous: p.viscous,
            friction: p.friction * fault.friction_scale(),
            inv_wref: 1.0 / m.friction_speed,
            n: p.gear_ratio,
            half_play: p.backlash * fault.backlash_scale() / (2.0 * p.gear_ratio),
            endstop: p.endstop,
            kp: p.gain * fault.gain_scale(),
            i_max: p.current_limit,
            v_max: p.supply_voltage,
            load: p.load_torque / p.gear_ratio,
            pole_pairs: m.pole_pairs as f64,
            modulated: force_modulation || fault.has_shape_faults(),
            ecc_amp: m.eccentricity_depth * fault.eccentricity(),
            ecc_phase: fault.eccentricity_phase(),
            shorts: [0, 1, 2].map(|i| m.short_severity * fault.short_fraction(i)),
            window: m.short_window,
        }
    }

    /// Effective (R, κv) at motor angle `theta`.
    #[inline]
    fn electrical(&self, theta: f64) -> (f64, f64) {
        if !self.modulated {
            return (self.r, self.kv);
        }
        let te = self.pole_pairs * theta;
        let ecc = 1.0 - self.ecc_amp * (te - self.ecc_phase).cos();
        let mut loss = 0.0;
        for (i, &s) in self.shorts.iter().enumerate() {
            if s != 0.0 {
                loss += s * sector_window(te - 2.0 * PI * i as f64 / 3.0, self.window);
            }
        }
        let short = 1.0 - loss;
        (self.r * short, self.kv * ecc * short)
    }

    #[inline]
    fn play(&self, user_prev: f64, theta: f64) -> f64 {
        let x = theta / self.n;
        user_prev.clamp(x - self.half_play, x + self.half_play)
    }

    /// Time derivative of (I, ω, θ).
    #[inline]
    fn deriv(&self, s: [f64; 3], cmd: f64, user_prev: f64) -> [f64; 3] {
        let [i, w, theta] = s;
        let user = self.play(user_prev, theta);
        let i_ref = (self.kp * (cmd - user)).clamp(-self.i_max, self.i_max);
        let v = (self.r * i_ref).clamp(-self.v_max, self.v_max);
        let (r, kv) = self.electrical(theta);
        let di = (v - r * i - kv * w) / self.l;
        let torque = kv * i - self.viscous * w - self.friction * (w * self.inv_wref).tanh() - self.load;
        [di, torque / self.inertia, w]
    }
}

/// Raised-cosine window of the given half-width centred on zero, argument
/// wrapped. At half-width 2π/3 the three phase windows sum to one.
#[inline]
fn sector_window(x: f64, half_width: f64) -> f64 {
    let d = (x + PI).rem_euclid(2.0 * PI) - PI;
    if d.abs() >= half_width {
        0.0
    } else {
        0.5 * (1.0 + (PI * d / half_width).cos())
    }
}

/// Zero-mean trapezoid with six plateaus pairs per electrical revolution.
#[inline]
fn commutation_ripple(theta_e: f64) -> f64 {
    let phase = (6.0 * theta_e / (2.0 * PI)).rem_euclid(1.0);
    let tri = 1.0 - 4.0 * (phase - 0.5).abs();
    (2.0 * tri).clamp(-1.0, 1.0)
}

struct RunSpec<'a> {
    command: &'a [f64],
    rate: f64,
    oversample: u32,
    tier: Tier,
    noise_seed: Option<u64>,
    force_modulation: bool,
}

/// Integrates the closed loop, calling `emit(index, position, sensed_current)`
/// once per acquisition sample.
fn run(fault: &FaultVector, params: &ActuatorParams, spec: &RunSpec, mut emit: impl FnMut(usize, f64, f64)) -> Result<()> {
    let plant = Plant::new(fault, params, spec.force_modulation);
    let os = spec.oversample as usize;
    let h = 1.0 / (spec.rate * os as f64);
    let truth = spec.tier == Tier::Truth;
    let ripple = params.model.ripple_fraction;
    let sigma = params.model.noise_fraction * params.current_limit;
    let mut rng = spec.noise_seed.filter(|_| truth && sigma > 0.0).map(ChaCha8Rng::seed_from_u64);

    let sense = |i: f64, theta: f64, rng: &mut Option<ChaCha8Rng>| {
        let mut x = i;
        if truth {
            x *= 1.0 + ripple * commutation_ripple(plant.pole_pairs * theta);
            if let Some(r) = rng.as_mut() {
                let z: f64 = StandardNormal.sample(r);
                x += sigma * z;
            }
        }
        x
    };

    let mut s = [0.0f64; 3];
    let mut user = 0.0f64;
    emit(0, user, sense(s[0], s[2], &mut rng));

    let cmd = spec.command;
    for n in 1..cmd.len() {
        let (c0, c1) = (cmd[n - 1], cmd[n]);
        let dc = c1 - c0;
        for j in 0..os {
            let f0 = j as f64 / os as f64;
            let fh = (j as f64 + 0.5) / os as f64;
            let f1 = (j as f64 + 1.0) / os as f64;
            let (u0, uh, u1) = (c0 + dc * f0, c0 + dc * fh, c0 + dc * f1);

            let k1 = plant.deriv(s, u0, user);
            let k2 = plant.deriv(axpy(s, 0.5 * h, k1), uh, user);
            let k3 = plant.deriv(axpy(s, 0.5 * h, k2), uh, user);
            let k4 = plant.deriv(axpy(s, h, k3), u1, user);
            for q in 0..3 {
                s[q] += h / 6.0 * (k1[q] + 2.0 * k2[q] + 2.0 * k3[q] + k4[q]);
            }

            let limit = plant.endstop * plant.n;
            if s[2] > limit {
                s[2] = limit;
                s[1] = s[1].min(0.0);
            } else if s[2] < -limit {
                s[2] = -limit;
                s[1] = s[1].max(0.0);
            }
            user = plant.play(user, s[2]).clamp(-plant.endstop, plant.endstop);

            if !(s[0].is_finite() && s[1].is_finite() && s[2].is_finite()) {
                let step = (n - 1) * os + j + 1;
                return Err(PhmError::Diverged { step, time: step as f64 * h });
            }
        }
        emit(n, user, sense(s[0], s[2], &mut rng));
    }
    Ok(())
}

#[inline]
fn axpy(s: [f64; 3], a: f64, k: [f64; 3]) -> [f64; 3] {
    [s[0] + a * k[0], s[1] + a * k[1], s[2] + a * k[2]]
}

/// Full-wave rectifier followed by two identical first-order low-pass
/// stages, discretised exactly for a zero-order-held input.
#[derive(Clone, Debug)]
pub struct EnvelopeFilter {
    a: f64,
    y1: f64,
    y2: f64,
}

impl EnvelopeFilter {
    pub fn new(cutoff_hz: f64, rate: f64) -> Self {
        EnvelopeFilter { a: (-2.0 * PI * cutoff_hz / rate).exp(), y1: 0.0, y2: 0.0 }
    }

    pub fn push(&mut self, x: f64) -> f64 {
        let b = 1.0 - self.a;
        self.y1 = self.a * self.y1 + b * x.abs();
        self.y2 = self.a * self.y2 + b * self.y1;
        self.y2
    }
}

fn check_command(cmd: &CommandProfile) -> Result<()> {
    if !(cmd.duration > 0.0 && cmd.sample_rate > 0.0)
        || cmd.samples.len() != sample_count(cmd.duration, cmd.sample_rate) || cmd.samples.iter().any(|v| !v.is_finite()) {
        return Err(PhmError::invalid("malformed command profile"));
    }
    Ok(())
}

/// Simulates the actuator and records the full sensor chain.
///
/// `noise_seed` enables sensor noise on the truth tier; without it the truth
/// tier carries ripple only.
pub fn simulate_trace(
    fault: &FaultVector,
    cmd: &CommandProfile,
    params: &ActuatorParams,
    tier: Tier,
    noise_seed: Option<u64>,
) -> Result<Trace> {
    simulate_trace_with(fault, cmd, params, tier, noise_seed, params.model.oversample, false)
}

pub(crate) fn simulate_trace_with(
    fault: &FaultVector,
    cmd: &CommandProfile,
    params: &ActuatorParams,
    tier: Tier,
    noise_seed: Option<u64>,
    oversample: u32,
    force_modulation: bool,
) -> Result<Trace> {
    params.validate()?;
    FaultVector::new(fault.0)?;
    check_command(cmd)?;
    let n = cmd.len();
    let mut trace = Trace {
        t: cmd.times(),
        command: cmd.samples.clone(),
        position: vec![0.0; n],
        current: vec![0.0; n],
        envelope: vec![0.0; n],
    };
    let mut filter = EnvelopeFilter::new(params.model.envelope_cutoff, cmd.sample_rate);
    let spec = RunSpec {
        command: &cmd.samples,
        rate: cmd.sample_rate,
        oversample,
        tier,
        noise_seed,
        force_modulation,
    };
    run(fault, params, &spec, |i, pos, cur| {
        trace.position[i] = pos;
        trace.current[i] = cur;
        trace.envelope[i] = filter.push(cur);
    })?;
    Ok(trace)
}

/// Envelope current response to `cmd`.
pub fn simulate_response(
    fault: &FaultVector,
    cmd: &CommandProfile,
    params: &ActuatorParams,
    tier: Tier,
    noise_seed: Option<u64>,
) -> Result<SignalSnapshot> {
    let trace = simulate_trace(fault, cmd, params, tier, noise_seed)?;
    Ok(SignalSnapshot { t: trace.t, y: trace.envelope })
}

/// How each sine probe of [`frequency_response`] is run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSettings {
    /// Lowest acquisition rate of a probe, Hz. Rounded up to whole samples per cycle.
    pub min_rate: f64,
    /// Transient discarded before the measurement window, s.
    pub settle_time: f64,
    /// Whole cycles in the measurement window.
    pub cycles: u32,
    pub oversample: u32,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        ProbeSettings { min_rate: 1000.0, settle_time: 0.2, cycles: 1, oversample: 10 }
    }
}

/// One sine probe: returns the sampled command and user position, the
/// sample rate and the index where the measurement window starts.
pub struct ProbeRun {
    pub rate: f64,
    pub start: usize,
    pub samples_per_cycle: usize,
    pub command: Vec<f64>,
    pub position: Vec<f64>,
}

pub fn run_probe(
    fault: &FaultVector,
    params: &ActuatorParams,
    freq: f64,
    amplitude: f64,
    settings: &ProbeSettings,
) -> Result<ProbeRun> {
    let per_cycle = ((settings.min_rate / freq).ceil() as usize).max(8);
    let rate = per_cycle as f64 * freq;
    let start = (settings.settle_time * rate).ceil() as usize;
    let n = start + per_cycle * settings.cycles.max(1) as usize + 1;
    let w = 2.0 * PI * freq;
    let command: Vec<f64> = (0..n).map(|i| amplitude * (w * i as f64 / rate).sin()).collect();
    let mut position = vec![0.0; n];
    let spec = RunSpec {
        command: &command,
        rate,
        oversample: settings.oversample.max(1),
        tier: Tier::Lf,
        noise_seed: None,
        force_modulation: false,
    };
    run(fault, params, &spec, |i, pos, _| position[i] = pos)?;
    Ok(ProbeRun { rate, start, samples_per_cycle: per_cycle, command, position })
}

/// Single-frequency Fourier projection of `x` over the measurement window,
/// returned as (amplitude, phase in rad) of `x ≈ A·sin(ωt + φ)`.
pub fn project_sine(x: &[f64], rate: f64, freq: f64, start: usize, len: usize) -> (f64, f64) {
    let w = 2.0 * PI * freq;
    let (mut a, mut b) = (0.0, 0.0);
    for i in start..start + len {
        let ph = w * i as f64 / rate;
        a += x[i] * ph.sin();
        b += x[i] * ph.cos();
    }
    a *= 2.0 / len as f64;
    b *= 2.0 / len as f64;
    (a.hypot(b), b.atan2(a))
}

/// Closed-loop position Bode data of the lf tier.
pub fn frequency_response(
    fault: &FaultVector,
    params: &ActuatorParams,
    freqs: &[f64],
    probe_amplitude: f64,
    settings: &ProbeSettings,
) -> Result<BodeData> {
    params.validate()?;
    FaultVector::new(fault.0)?;
    if freqs.is_empty() || freqs.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
        return Err(PhmError::invalid("probe frequencies must be positive"));
    }
    if freqs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(PhmError::invalid("probe frequencies must be strictly increasing"));
    }
    if !(probe_amplitude.is_finite() && probe_amplitude > 0.0) {
        return Err(PhmError::invalid("probe amplitude must be positive"));
    }
    let points: Vec<(f64, f64)> = freqs
        .par_iter()
        .map(|&f| {
            let p = run_probe(fault, params, f, probe_amplitude, settings)?;
            let len = p.samples_per_cycle * settings.cycles.max(1) as usize;
            let (amp, phase) = project_sine(&p.position, p.rate, f, p.start, len);
            let ratio = amp / probe_amplitude;
            let gain = if ratio > 0.0 { (20.0 * ratio.log10()).max(GAIN_FLOOR_DB) } else { GAIN_FLOOR_DB };
            Ok((gain, phase.to_degrees()))
        })
        .collect::<Result<_>>()?;

    let gain_db = points.iter().map(|p| p.0).collect();
    let mut phase_deg = Vec::with_capacity(points.len());
    let mut prev: Option<f64> = None;
    for &(_, ph) in &points {
        let mut v = ph;
        if let Some(p) = prev {
            v += 360.0 * ((p - v) / 360.0).round();
        }
        phase_deg.push(v);
        prev = Some(v);
    }
    Ok(BodeData { freqs: freqs.to_vec(), gain_db, phase_deg })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short_chirp() -> CommandProfile {
        chirp_command(0.1, 5e-3, 0.0, 15.0, 20000.0).unwrap()
    }

    #[test]
    fn chirp_reference_shape() {
        let c = chirp_command(0.5, 5e-3, 0.0, 15.0, 20000.0).unwrap();
        assert_eq!(c.len(), 10001);
        assert_eq!(c.samples[0], 0.0);
    }

    #[test]
    fn chirp_zero_frequency_is_flat() {
        let c = chirp_command(0.2, 1.0, 0.0, 0.0, 100.0).unwrap();
        assert!(c.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn chirp_end_frequency() {
        // finite-difference of the unwrapped phase recovered from the samples
        let (t_end, fs) = (1.0, 1000.0);
        let c = chirp_command(t_end, 1.0, 2.0, 10.0, fs).unwrap();
        let phase = |t: f64| 2.0 * PI * (2.0 * t + 8.0 * t * t / (2.0 * t_end));
        let n = c.len() - 1;
        assert!((c.samples[n] - phase(1.0).sin()).abs() < 1e-12);
        let inst = (phase(1.0) - phase(1.0 - 1.0 / fs)) * fs / (2.0 * PI);
        assert!((inst - 10.0).abs() < 0.01, "{inst}");
    }

    #[test]
    fn chirp_rejects_bad_arguments() {
        assert!(chirp_command(0.0, 1.0, 0.0, 1.0, 100.0).is_err());
        assert!(chirp_command(1.0, 1.0, 2.0, 1.0, 100.0).is_err());
        assert!(chirp_command(1.0, 1.0, 0.0, 60.0, 100.0).is_err());
        assert!(chirp_command(1.0, f64::NAN, 0.0, 1.0, 100.0).is_err());
    }

    #[test]
    fn command_sample_count_is_checked() {
        assert!(CommandProfile::new(0.1, 100.0, vec![0.0; 11]).is_ok());
        assert!(CommandProfile::new(0.1, 100.0, vec![0.0; 10]).is_err());
    }

    #[test]
    fn window_partition() {
        let hw = 2.0 * PI / 3.0;
        assert_eq!(sector_window(0.0, hw), 1.0);
        assert_eq!(sector_window(hw, hw), 0.0);
        assert!((sector_window(2.0 * PI, hw) - 1.0).abs() < 1e-12);
        assert_eq!(sector_window(PI, hw), 0.0);
        for i in 0..50 {
            let x = -PI + 2.0 * PI * i as f64 / 50.0;
            let sum: f64 = (0..3).map(|p| sector_window(x - 2.0 * PI * p as f64 / 3.0, hw)).sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ripple_has_zero_mean() {
        let n = 6000;
        let m: f64 = (0..n).map(|i| commutation_ripple(2.0 * PI * i as f64 / n as f64)).sum::<f64>() / n as f64;
        assert!(m.abs() < 1e-9);
    }

    #[test]
    fn zero_command_stays_at_rest() {
        let cmd = CommandProfile::new(0.1, 20000.0, vec![0.0; 2001]).unwrap();
        let p = ActuatorParams::default();
        let s = simulate_response(&FaultVector::NOMINAL, &cmd, &p, Tier::Lf, None).unwrap();
        assert!(s.y.iter().all(|&v| v.abs() < 0.01 * p.current_limit));
        let s = simulate_response(&FaultVector::NOMINAL, &cmd, &p, Tier::Truth, Some(3)).unwrap();
        let tail = &s.y[400..];
        assert!(tail.iter().all(|&v| v.abs() < 0.01 * p.current_limit), "{:?}", tail.iter().cloned().fold(0.0, f64::max));
    }

    #[test]
    fn envelope_filter_unity_dc() {
        let mut f = EnvelopeFilter::new(200.0, 20000.0);
        let mut y = 0.0;
        for _ in 0..20000 {
            y = f.push(-2.5);
        }
        assert!((y - 2.5).abs() < 1e-12);
    }

    #[test]
    fn deterministic_with_seed() {
        let p = ActuatorParams::default();
        let k = FaultVector([0.2, 0.1, 0.3, 0.0, 0.1, 0.4, 0.7, 0.6]);
        let a = simulate_response(&k, &short_chirp(), &p, Tier::Truth, Some(11)).unwrap();
        let b = simulate_response(&k, &short_chirp(), &p, Tier::Truth, Some(11)).unwrap();
        assert_eq!(a, b);
        let c = simulate_response(&k, &short_chirp(), &p, Tier::Truth, Some(12)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn unmodulated_path_is_bit_identical() {
        let p = ActuatorParams::default();
        let k = FaultVector([0.3, 0.2, 0.0, 0.0, 0.0, 0.0, 0.9, 0.3]);
        let cmd = short_chirp();
        let fast = simulate_trace_with(&k, &cmd, &p, Tier::Lf, None, 10, false).unwrap();
        let full = simulate_trace_with(&k, &cmd, &p, Tier::Lf, None, 10, true).unwrap();
        assert_eq!(fast, full);
    }

    #[test]
    fn divergence_reports_step() {
        let mut p = ActuatorParams::default();
        p.inductance = 1e-9;
        let err = simulate_response(&FaultVector::NOMINAL, &short_chirp(), &p, Tier::Lf, None).unwrap_err();
        match err {
            PhmError::Diverged { step, time } => assert!(step > 0 && time > 0.0),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn params_validation() {
        let mut p = ActuatorParams::default();
        p.inertia = 0.0;
        assert!(p.validate().is_err());
        let mut p = ActuatorParams::default();
        p.backlash = 0.0;
        assert!(p.validate().is_ok());
        p.backlash = -1.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn bode_input_checks() {
        let p = ActuatorParams::default();
        let s = ProbeSettings::default();
        let k = FaultVector::NOMINAL;
        assert!(frequency_response(&k, &p, &[1.0, 1.0], 5e-3, &s).is_err());
        assert!(frequency_response(&k, &p, &[0.0, 1.0], 5e-3, &s).is_err());
        assert!(frequency_response(&k, &p, &[1.0], 0.0, &s).is_err());
    }
}
