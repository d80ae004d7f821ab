//! Damage growth k̇ = F(k − k0) + ε integrated forward until the health
//! assessment flips, with Monte-Carlo quantiles and their deterministic
//! equivalents found by bisection on an initial-state disturbance.

use nalgebra::SMatrix;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rand_pcg::Pcg64Mcg;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assess::{Assessor, HealthLabel};
use crate::error::{PhmError, Result};
use crate::fault::{FaultVector, N_FAULTS, PHASE_INDEX};
use crate::seed;

/// Generator of the propagation noise, one per run.
pub type NoiseRng = Pcg64Mcg;

/// Standard normal 95% quantile.
pub const Z95: f64 = 1.644_853_626_951_472_2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DamageModel {
    /// Influence matrix, row i holds the contributions to k̇_i, 1/h.
    pub influence: [[f64; N_FAULTS]; N_FAULTS],
    /// Diffusion scale per component, 1/√h.
    pub noise: [f64; N_FAULTS],
    pub nominal: FaultVector,
    /// Minimum |k − k0| fed to the growth law.
    pub floor: f64,
    /// Integration step, h.
    pub dt: f64,
    /// Horizon, h.
    pub cap: f64,
}

impl Default for DamageModel {
    fn default() -> Self {
        let mut f = [[0.0; N_FAULTS]; N_FAULTS];
        for (i, row) in f.iter_mut().enumerate() {
            if i != PHASE_INDEX {
                row[i] = 1e-4;
            }
        }
        // wear couples friction into backlash, eccentricity rubs the windings
        f[1][0] = 2e-5;
        for row in &mut f[2..=4] {
            row[5] = 2e-5;
        }
        let mut noise = [5e-5; N_FAULTS];
        noise[PHASE_INDEX] = 0.0;
        DamageModel { influence: f, noise, nominal: FaultVector::NOMINAL, floor: 1e-3, dt: 10.0, cap: 20_000.0 }
    }
}

impl DamageModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite() && self.cap > 0.0 && self.cap.is_finite()) {
            return Err(PhmError::invalid("dt and cap must be positive"));
        }
        if self.influence.iter().flatten().any(|v| !v.is_finite()) {
            return Err(PhmError::invalid("influence matrix must be finite"));
        }
        if self.noise.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(PhmError::invalid("noise scales must be finite and non-negative"));
        }
        if !(self.floor.is_finite() && self.floor >= 0.0) {
            return Err(PhmError::invalid("floor must be non-negative"));
        }
        Ok(())
    }

    pub fn is_deterministic(&self) -> bool {
        self.noise.iter().all(|&v| v == 0.0)
    }

    /// One step in place: the drift is advanced exactly over dt for the
    /// current (floored) deviation, the noise as Euler–Maruyama. Returns
    /// whether any component hit the [0, 1] box.
    pub fn step(&self, k: &mut [f64; N_FAULTS], rng: Option<&mut NoiseRng>) -> bool {
        Stepper::new(self).step(k, rng)
    }
}

/// The model in the form used inside a propagation loop: columns of
/// exp(F dt) − I and noise scales per step.
struct Stepper {
    growth: [[f64; N_FAULTS]; N_FAULTS],
    sd: [f64; N_FAULTS],
    nominal: [f64; N_FAULTS],
    floor: f64,
}

impl Stepper {
    fn new(m: &DamageModel) -> Self {
        let f = SMatrix::<f64, N_FAULTS, N_FAULTS>::from_fn(|i, j| m.influence[i][j] * m.dt);
        let g = f.exp() - SMatrix::<f64, N_FAULTS, N_FAULTS>::identity();
        let growth = std::array::from_fn(|j| std::array::from_fn(|i| g[(i, j)]));
        let sq = m.dt.sqrt();
        Stepper { growth, sd: m.noise.map(|n| n * sq), nominal: m.nominal.0, floor: m.floor }
    }

    #[inline]
    fn step(&self, k: &mut [f64; N_FAULTS], rng: Option<&mut NoiseRng>) -> bool {
        let mut dk = [0.0; N_FAULTS];
        for i in 0..N_FAULTS {
            let d = k[i] - self.nominal[i];
            dk[i] = if d.abs() >= self.floor { d } else { self.floor.copysign(d) };
        }
        let mut next = *k;
        if let Some(rng) = rng {
            for (x, &sd) in next.iter_mut().zip(&self.sd) {
                if sd != 0.0 {
                    let z: f64 = StandardNormal.sample(rng);
                    *x += sd * z;
                }
            }
        }
        let mut growth = [0.0; N_FAULTS];
        for (col, d) in self.growth.iter().zip(dk) {
            for (g, c) in growth.iter_mut().zip(col) {
                *g += c * d;
            }
        }
        for (x, g) in next.iter_mut().zip(growth) {
            *x += g;
        }
        let mut clamped = false;
        for (ki, x) in k.iter_mut().zip(next) {
            let c = x.clamp(0.0, 1.0);
            clamped |= c != x;
            *ki = c;
        }
        clamped
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Propagation {
    pub rul: f64,
    pub censored: bool,
    pub clamp_events: usize,
    /// States at every step, including the start; empty unless requested.
    pub trajectory: Vec<FaultVector>,
}

/// Integrates from `k_init` until `assessor` reports faulty or the cap is hit.
pub fn propagate(k_init: &FaultVector, model: &DamageModel, assessor: &dyn Assessor, noise_seed: Option<u64>, keep_trajectory: bool) -> Result<Propagation> {
    model.validate()?;
    let mut trajectory = Vec::new();
    if keep_trajectory {
        trajectory.push(*k_init);
    }
    if !assessor.assess(k_init)?.is_healthy() {
        return Ok(Propagation { rul: 0.0, censored: false, clamp_events: 0, trajectory });
    }
    let mut rng = noise_seed.filter(|_| !model.is_deterministic()).map(NoiseRng::seed_from_u64);
    let mut k = k_init.0;
    let n_steps = (model.cap / model.dt).ceil() as usize;
    let mut clamp_events = 0;
    let stepper = Stepper::new(model);
    // With a bounded decision value, a state whose distance from the last
    // scored one cannot move the value across zero keeps the label unscored.
    let bound = assessor.decision_bound().filter(|_| assessor.decision(k_init).is_some());
    let mut anchor = k;
    let mut slack = match (&bound, assessor.decision(k_init)) {
        (Some(b), Some(s)) => s.abs() - 2.0 * b.rounding,
        _ => 0.0,
    };
    for s in 1..=n_steps {
        if stepper.step(&mut k, rng.as_mut()) {
            clamp_events += 1;
        }
        let kv = FaultVector(k);
        if keep_trajectory {
            trajectory.push(kv);
        }
        let healthy = match &bound {
            Some(b) => {
                let moved: f64 = (0..N_FAULTS).map(|i| b.lipschitz[i] * (k[i] - anchor[i]).abs()).sum();
                if moved < slack {
                    true
                } else {
                    let d = assessor.decision(&kv).expect("assessor has a decision value");
                    anchor = k;
                    slack = d.abs() - 2.0 * b.rounding;
                    HealthLabel::from_sign(d).is_healthy()
                }
            }
            None => assessor.assess(&kv)?.is_healthy(),
        };
        if !healthy {
            return Ok(Propagation { rul: s as f64 * model.dt, censored: false, clamp_events, trajectory });
        }
    }
    if clamp_events > 0 {
        log::debug!("{clamp_events} steps clamped to the unit box");
    }
    Ok(Propagation { rul: model.cap, censored: true, clamp_events, trajectory })
}

pub fn deterministic_rul(k_init: &FaultVector, model: &DamageModel, assessor: &dyn Assessor) -> Result<Propagation> {
    propagate(k_init, model, assessor, None, false)
}

/// Deterministic RUL for expensive assessors. The noise-free trajectory is
/// integrated first and the first faulty step is located by galloping then
/// bisection, so the label is assumed to flip once along the trajectory.
pub fn deterministic_rul_search(k_init: &FaultVector, model: &DamageModel, assessor: &dyn Assessor) -> Result<Propagation> {
    model.validate()?;
    let done = |rul: f64, censored: bool, clamp_events: usize| Propagation { rul, censored, clamp_events, trajectory: Vec::new() };
    if !assessor.assess(k_init)?.is_healthy() {
        return Ok(done(0.0, false, 0));
    }
    let n_steps = (model.cap / model.dt).ceil() as usize;
    let mut states = Vec::with_capacity(n_steps + 1);
    states.push(k_init.0);
    let mut k = k_init.0;
    let mut clamp_events = 0;
    let stepper = Stepper::new(model);
    for _ in 0..n_steps {
        if stepper.step(&mut k, None) {
            clamp_events += 1;
        }
        states.push(k);
    }
    let faulty = |s: usize| -> Result<bool> { Ok(!assessor.assess(&FaultVector(states[s]))?.is_healthy()) };
    let (mut lo, mut hi) = (0, 1);
    loop {
        if hi >= n_steps {
            hi = n_steps;
            if !faulty(hi)? {
                return Ok(done(model.cap, true, clamp_events));
            }
            break;
        }
        if faulty(hi)? {
            break;
        }
        lo = hi;
        hi *= 2;
    }
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if faulty(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(done(hi as f64 * model.dt, false, clamp_events))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RulEstimate {
    pub rul_5: f64,
    pub rul_50: f64,
    pub rul_95: f64,
    pub mean: f64,
    pub std: f64,
    pub samples: usize,
    pub censored_runs: usize,
    /// More than half of the runs reached the cap.
    pub censored: bool,
    /// Initial-state disturbances reproducing the three quantiles, once
    /// calibrated.
    pub delta: Option<[f64; 3]>,
}

impl RulEstimate {
    fn from_samples(ruls: &[f64], censored_runs: usize) -> Self {
        let n = ruls.len() as f64;
        let mean = ruls.iter().sum::<f64>() / n;
        let var = ruls.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        let std = var.sqrt();
        RulEstimate {
            rul_5: (mean - Z95 * std).max(0.0),
            rul_50: mean.max(0.0),
            rul_95: (mean + Z95 * std).max(0.0),
            mean,
            std,
            samples: ruls.len(),
            censored_runs,
            censored: 2 * censored_runs > ruls.len(),
            delta: None,
        }
    }

    pub fn quantiles(&self) -> [f64; 3] {
        [self.rul_5, self.rul_50, self.rul_95]
    }

    /// Median on the censored scale min(rul, cap). With more than half of
    /// the runs at the cap the sample median is the cap, whatever the fit says.
    pub fn censored_median(&self, cap: f64) -> f64 {
        if self.censored {
            cap
        } else {
            self.rul_50.min(cap)
        }
    }
}

/// Monte-Carlo RUL with a moment-matched Gaussian.
pub fn estimate_rul_quantiles(k_init: &FaultVector, model: &DamageModel, assessor: &dyn Assessor, n_mc: usize, seed: u64) -> Result<RulEstimate> {
    if n_mc < 2 {
        return Err(PhmError::invalid("at least two Monte-Carlo runs are needed"));
    }
    if n_mc < 30 {
        log::warn!("{n_mc} Monte-Carlo runs give loose quantiles");
    }
    let runs: Vec<Propagation> = (0..n_mc as u64)
        .into_par_iter()
        .map(|i| propagate(k_init, model, assessor, Some(seed::derive_indexed(seed, "rul", i)), false))
        .collect::<Result<_>>()?;
    let ruls: Vec<f64> = runs.iter().map(|p| p.rul).collect();
    let censored = runs.iter().filter(|p| p.censored).count();
    Ok(RulEstimate::from_samples(&ruls, censored))
}

/// Unit vector from the nominal state through `k`, phase excluded; uniform
/// positive at nominal.
pub fn radial_direction(k: &FaultVector, nominal: &FaultVector) -> [f64; N_FAULTS] {
    let mut d = [0.0; N_FAULTS];
    for i in 0..N_FAULTS {
        if i != PHASE_INDEX {
            d[i] = k.0[i] - nominal.0[i];
        }
    }
    let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        d.iter_mut().for_each(|v| *v /= norm);
    } else {
        let u = 1.0 / ((N_FAULTS - 1) as f64).sqrt();
        for (i, v) in d.iter_mut().enumerate() {
            *v = if i == PHASE_INDEX { 0.0 } else { u };
        }
    }
    d
}

/// `k + δ·dir`, clamped to the unit box.
pub fn displaced(k: &FaultVector, dir: &[f64; N_FAULTS], delta: f64) -> FaultVector {
    let mut out = k.0;
    for i in 0..N_FAULTS {
        out[i] = (out[i] + delta * dir[i]).clamp(0.0, 1.0);
    }
    FaultVector(out)
}

/// Scalar δ such that the deterministic RUL from `k + δ·dir` is within one
/// step of `target`. Targets past the cap are matched on the censored scale,
/// that is to the cap itself.
pub fn calibrate_delta(k_init: &FaultVector, model: &DamageModel, assessor: &dyn Assessor, target: f64, dir: &[f64; N_FAULTS]) -> Result<f64> {
    let target = target.min(model.cap);
    let det = DamageModel { noise: [0.0; N_FAULTS], ..model.clone() };
    let rul = |delta: f64| -> Result<f64> { Ok(deterministic_rul(&displaced(k_init, dir, delta), &det, assessor)?.rul) };
    let r0 = rul(0.0)?;
    if (r0 - target).abs() < det.dt {
        return Ok(0.0);
    }
    // RUL decreases with δ along the damage direction. Going back, the
    // state reaches nominal at −reach and would move away again past it.
    let sign = if target < r0 { 1.0 } else { -1.0 };
    let reach: f64 = (0..N_FAULTS).map(|i| dir[i] * (k_init.0[i] - model.nominal.0[i])).sum::<f64>().max(0.0);
    let mut near = 0.0;
    let mut far = if sign < 0.0 { -(0.1f64.min(reach)) } else { 0.1 };
    let mut grown = 0;
    loop {
        if far == 0.0 {
            return Err(PhmError::Bracket(format!("target {target} h lies beyond the nominal state")));
        }
        let r = rul(far)?;
        if (r - target).abs() < det.dt {
            return Ok(far);
        }
        if (sign > 0.0 && r < target) || (sign < 0.0 && r > target) {
            break;
        }
        if sign > 0.0 && r > r0 || sign < 0.0 && r < r0 {
            return Err(PhmError::Bracket(format!("rul is not monotone in delta (rul({far:.3}) = {r})")));
        }
        if sign < 0.0 && far <= -reach {
            return Err(PhmError::Bracket(format!("target {target} h lies beyond the rul from nominal ({r} h)")));
        }
        near = far;
        far = if sign < 0.0 { (2.0 * far).max(-reach) } else { 2.0 * far };
        grown += 1;
        if grown > 6 {
            return Err(PhmError::Bracket(format!("target {target} h not reached within delta = {far:.3}")));
        }
    }
    for _ in 0..60 {
        let mid = 0.5 * (near + far);
        let r = rul(mid)?;
        if (r - target).abs() < det.dt {
            return Ok(mid);
        }
        if (sign > 0.0 && r > target) || (sign < 0.0 && r < target) {
            near = mid;
        } else {
            far = mid;
        }
    }
    Ok(0.5 * (near + far))
}

/// Fills `est.delta` with the disturbances matching its three quantiles.
pub fn calibrate_estimate(est: &mut RulEstimate, k_init: &FaultVector, model: &DamageModel, assessor: &dyn Assessor) -> Result<()> {
    let dir = radial_direction(k_init, &model.nominal);
    let q = est.quantiles();
    let mut d = [0.0; 3];
    for (slot, target) in d.iter_mut().zip(q) {
        *slot = calibrate_delta(k_init, model, assessor, target, &dir)?;
    }
    est.delta = Some(d);
    Ok(())
}

/// (err_RUL, Δ_RUL): median error and 5–95 band width of `est`, both relative
/// to the reference median.
pub fn rul_metrics(est: &RulEstimate, reference: &RulEstimate) -> Result<(f64, f64)> {
    if !(reference.rul_50 > 0.0) {
        return Err(PhmError::Undefined("reference median rul is zero".into()));
    }
    let err = (est.rul_50 - reference.rul_50).abs() / reference.rul_50;
    let band = (est.rul_95 - est.rul_5).abs() / reference.rul_50;
    Ok((err, band))
}
