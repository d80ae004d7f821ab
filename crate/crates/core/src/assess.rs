//! Model-based health assessment from closed-loop Bode margins.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{PhmError, Result};
use crate::fault::{FaultVector, N_FAULTS};
use crate::sim::{frequency_response, ActuatorParams, BodeData, ProbeSettings};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HealthLabel {
    Healthy,
    Faulty,
}

impl HealthLabel {
    /// +1 healthy, −1 faulty.
    pub fn sign(self) -> f64 {
        match self {
            HealthLabel::Healthy => 1.0,
            HealthLabel::Faulty => -1.0,
        }
    }

    pub fn from_sign(v: f64) -> Self {
        if v >= 0.0 {
            HealthLabel::Healthy
        } else {
            HealthLabel::Faulty
        }
    }

    pub fn is_healthy(self) -> bool {
        self == HealthLabel::Healthy
    }
}

impl fmt::Display for HealthLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HealthLabel::Healthy => "healthy",
            HealthLabel::Faulty => "faulty",
        })
    }
}

/// Between two states of the unit box the decision value moves by at most
/// Σ lipschitz_i |Δk_i|, and each evaluation is off by at most `rounding`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecisionBound {
    pub lipschitz: [f64; N_FAULTS],
    pub rounding: f64,
}

/// Anything that labels a fault vector.
pub trait Assessor: Sync {
    fn assess(&self, k: &FaultVector) -> Result<HealthLabel>;

    /// Decision value whose sign is the label, for assessors that have one.
    fn decision(&self, _k: &FaultVector) -> Option<f64> {
        None
    }

    /// Set only when `decision` is available.
    fn decision_bound(&self) -> Option<DecisionBound> {
        None
    }
}

impl<F> Assessor for F
where
    F: Fn(&FaultVector) -> Result<HealthLabel> + Sync,
{
    fn assess(&self, k: &FaultVector) -> Result<HealthLabel> {
        self(k)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Requirements {
    /// dB
    pub gain_margin: f64,
    /// degrees
    pub phase_margin: f64,
    /// Hz, closed-loop −3 dB
    pub cutoff: f64,
}

impl Default for Requirements {
    fn default() -> Self {
        Requirements { gain_margin: 12.5, phase_margin: 44.0, cutoff: 18.5 }
    }
}

impl Requirements {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("gain_margin", self.gain_margin), ("phase_margin", self.phase_margin), ("cutoff", self.cutoff)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(PhmError::invalid(format!("requirement {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Margins extracted from one sweep. `None` margins mean the loop never
/// crosses the corresponding boundary inside the grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Margins {
    pub gain_margin: Option<f64>,
    pub phase_margin: Option<f64>,
    pub cutoff: f64,
    /// Set when no −3 dB crossing was found and `cutoff` is the grid edge.
    pub cutoff_clipped: bool,
}

impl Margins {
    pub fn meets(&self, reqs: &Requirements) -> bool {
        self.gain_margin.is_none_or(|g| g >= reqs.gain_margin)
            && self.phase_margin.is_none_or(|p| p >= reqs.phase_margin)
            && self.cutoff >= reqs.cutoff
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assessment {
    pub label: HealthLabel,
    pub margins: Margins,
}

/// Settings of the full assessment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BodeSettings {
    pub f_min: f64,
    pub f_max: f64,
    pub points: usize,
    /// User-side probe amplitude, rad.
    pub amplitude: f64,
    pub probe: ProbeSettings,
}

impl Default for BodeSettings {
    fn default() -> Self {
        BodeSettings { f_min: 0.2, f_max: 50.0, points: 20, amplitude: 5e-3, probe: ProbeSettings::default() }
    }
}

impl BodeSettings {
    pub fn grid(&self) -> Result<Vec<f64>> {
        if !(self.f_min > 0.0 && self.f_max > self.f_min && self.points >= 2) {
            return Err(PhmError::invalid("bode grid needs 0 < f_min < f_max and at least 2 points"));
        }
        let ratio = (self.f_max / self.f_min).ln();
        Ok((0..self.points)
            .map(|i| self.f_min * (ratio * i as f64 / (self.points - 1) as f64).exp())
            .collect())
    }
}

/// Full assessment: the lf tier swept over the grid and judged against `reqs`.
#[derive(Clone, Debug)]
pub struct FullAssessor {
    pub params: ActuatorParams,
    pub reqs: Requirements,
    pub bode: BodeSettings,
    grid: Vec<f64>,
}

impl FullAssessor {
    pub fn new(params: ActuatorParams, reqs: Requirements, bode: BodeSettings) -> Result<Self> {
        params.validate()?;
        reqs.validate()?;
        let grid = bode.grid()?;
        Ok(FullAssessor { params, reqs, bode, grid })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn bode(&self, k: &FaultVector) -> Result<BodeData> {
        frequency_response(k, &self.params, &self.grid, self.bode.amplitude, &self.bode.probe)
    }

    pub fn assess_full(&self, k: &FaultVector) -> Result<Assessment> {
        let margins = margins(&self.bode(k)?)?;
        let label = if margins.meets(&self.reqs) { HealthLabel::Healthy } else { HealthLabel::Faulty };
        Ok(Assessment { label, margins })
    }
}

impl Assessor for FullAssessor {
    fn assess(&self, k: &FaultVector) -> Result<HealthLabel> {
        Ok(self.assess_full(k)?.label)
    }
}

fn log_interp(f0: f64, f1: f64, t: f64) -> f64 {
    (f0.ln() + t * (f1.ln() - f0.ln())).exp()
}

/// Cutoff and open-loop margins recovered from a closed-loop sweep.
pub fn margins(bode: &BodeData) -> Result<Margins> {
    let n = bode.freqs.len();
    if n < 2 || bode.gain_db.len() != n || bode.phase_deg.len() != n {
        return Err(PhmError::invalid("bode data needs at least two aligned points"));
    }
    let (f, g) = (&bode.freqs, &bode.gain_db);

    let mut cutoff = None;
    if g[0] <= -3.0 {
        cutoff = Some(f[0]);
    }
    for i in 1..n {
        if cutoff.is_some() {
            break;
        }
        if g[i] <= -3.0 && g[i - 1] > -3.0 {
            let t = (-3.0 - g[i - 1]) / (g[i] - g[i - 1]);
            cutoff = Some(log_interp(f[i - 1], f[i], t));
        }
    }
    let cutoff_clipped = cutoff.is_none();
    let cutoff = cutoff.unwrap_or(f[n - 1]);

    // open loop G = H / (1 − H) for unity feedback
    let mut ol: Vec<(f64, f64, f64)> = Vec::with_capacity(n);
    for i in 0..n {
        let mag = 10f64.powf(g[i] / 20.0);
        let ph = bode.phase_deg[i].to_radians();
        let (hr, hi) = (mag * ph.cos(), mag * ph.sin());
        let (dr, di) = (1.0 - hr, -hi);
        let den = dr * dr + di * di;
        if den.sqrt() < 1e-3 {
            continue;
        }
        let gr = (hr * dr + hi * di) / den;
        let gi = (hi * dr - hr * di) / den;
        ol.push((f[i], 20.0 * gr.hypot(gi).log10(), gi.atan2(gr).to_degrees()));
    }
    let mut prev: Option<f64> = None;
    for p in ol.iter_mut() {
        if let Some(q) = prev {
            p.2 += 360.0 * ((q - p.2) / 360.0).round();
        }
        prev = Some(p.2);
    }
    // a type-1 loop starts near −90°
    if let Some(first) = ol.first() {
        let shift = 360.0 * ((-90.0 - first.2) / 360.0).round();
        for p in ol.iter_mut() {
            p.2 += shift;
        }
    }

    let mut phase_margin = None;
    let mut gain_margin = None;
    for w in ol.windows(2) {
        let (a, b) = (w[0], w[1]);
        if phase_margin.is_none() && a.1 >= 0.0 && b.1 < 0.0 {
            let t = a.1 / (a.1 - b.1);
            phase_margin = Some(180.0 + a.2 + t * (b.2 - a.2));
        }
        if gain_margin.is_none() && a.2 > -180.0 && b.2 <= -180.0 {
            let t = (-180.0 - a.2) / (b.2 - a.2);
            gain_margin = Some(-(a.1 + t * (b.1 - a.1)));
        }
    }
    Ok(Margins { gain_margin, phase_margin, cutoff, cutoff_clipped })
}

/// Counts laid out as healthy/faulty truth versus surrogate prediction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    /// faulty, predicted faulty
    pub detected: usize,
    /// healthy, predicted healthy
    pub undetected: usize,
    /// faulty, predicted healthy
    pub missed: usize,
    /// healthy, predicted faulty
    pub false_positive: usize,
}

impl Confusion {
    pub fn from_labels(truth: &[HealthLabel], predicted: &[HealthLabel]) -> Self {
        let mut c = Confusion::default();
        for (t, p) in truth.iter().zip(predicted) {
            match (t, p) {
                (HealthLabel::Faulty, HealthLabel::Faulty) => c.detected += 1,
                (HealthLabel::Healthy, HealthLabel::Healthy) => c.undetected += 1,
                (HealthLabel::Faulty, HealthLabel::Healthy) => c.missed += 1,
                (HealthLabel::Healthy, HealthLabel::Faulty) => c.false_positive += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.detected + self.undetected + self.missed + self.false_positive
    }

    pub fn accuracy(&self) -> f64 {
        (self.detected + self.undetected) as f64 / self.total().max(1) as f64
    }

    pub fn healthy_count(&self) -> usize {
        self.undetected + self.false_positive
    }

    pub fn faulty_count(&self) -> usize {
        self.detected + self.missed
    }

    /// Rows of (condition, correct, wrong, total, percent correct).
    pub fn to_csv(&self) -> String {
        let pct = |a: usize, b: usize| 100.0 * a as f64 / (a + b).max(1) as f64;
        let mut s = String::from("condition,correct,wrong,total,percent_correct\n");
        s += &format!(
            "faulty,{},{},{},{:.2}\n",
            self.detected,
            self.missed,
            self.faulty_count(),
            pct(self.detected, self.missed)
        );
        s += &format!(
            "healthy,{},{},{},{:.2}\n",
            self.undetected,
            self.false_positive,
            self.healthy_count(),
            pct(self.undetected, self.false_positive)
        );
        let ok = self.detected + self.undetected;
        s += &format!("total,{},{},{},{:.2}\n", ok, self.total() - ok, self.total(), 100.0 * self.accuracy());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// Closed loop of G(s) = K / (s (τ s + 1)²) on the given grid.
    fn analytic(kg: f64, tau: f64, freqs: &[f64]) -> BodeData {
        let mut gain_db = Vec::new();
        let mut phase_deg = Vec::new();
        for &f in freqs {
            let w = 2.0 * PI * f;
            // G = K / (j w (1 + j w τ)^2)
            let (ar, ai) = (1.0 - w * w * tau * tau, 2.0 * w * tau);
            let (dr, di) = (-w * ai, w * ar);
            let den = dr * dr + di * di;
            let (gr, gi) = (kg * dr / den, -kg * di / den);
            let (nr, ni) = (1.0 + gr, gi);
            let nd = nr * nr + ni * ni;
            let (hr, hi) = ((gr * nr + gi * ni) / nd, (gi * nr - gr * ni) / nd);
            gain_db.push(20.0 * hr.hypot(hi).log10());
            phase_deg.push(hi.atan2(hr).to_degrees());
        }
        let mut prev: Option<f64> = None;
        for p in phase_deg.iter_mut() {
            if let Some(q) = prev {
                *p += 360.0 * ((q - *p) / 360.0).round();
            }
            prev = Some(*p);
        }
        BodeData { freqs: freqs.to_vec(), gain_db, phase_deg }
    }

    fn dense(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| a * (b / a).powf(i as f64 / (n - 1) as f64)).collect()
    }

    #[test]
    fn margins_of_known_loop() {
        // K = 20, τ = 0.01: phase crossover at w = 1/τ = 100 rad/s, |G| = K τ / 2 = 0.1 → 20 dB
        let b = analytic(20.0, 0.01, &dense(0.1, 200.0, 4000));
        let m = margins(&b).unwrap();
        assert!((m.gain_margin.unwrap() - 20.0).abs() < 0.05, "{m:?}");
        // gain crossover: 20 = w (1 + w² τ²) → solve numerically
        let mut w: f64 = 19.0;
        for _ in 0..50 {
            w = 20.0 / (1.0 + w * w * 1e-4);
        }
        let pm = 180.0 - 90.0 - 2.0 * (w * 0.01).atan().to_degrees();
        assert!((m.phase_margin.unwrap() - pm).abs() < 0.05, "{m:?} vs {pm}");
        assert!(!m.cutoff_clipped);
    }

    #[test]
    fn no_crossing_means_no_margin() {
        let b = BodeData { freqs: vec![1.0, 2.0, 3.0], gain_db: vec![0.0, -0.1, -0.2], phase_deg: vec![-1.0, -2.0, -3.0] };
        let m = margins(&b).unwrap();
        assert!(m.cutoff_clipped);
        assert_eq!(m.cutoff, 3.0);
        assert!(m.gain_margin.is_none());
    }

    #[test]
    fn cutoff_interpolates_in_log_frequency() {
        let b = BodeData { freqs: vec![1.0, 10.0, 100.0], gain_db: vec![0.0, -2.0, -4.0], phase_deg: vec![0.0, -10.0, -20.0] };
        let m = margins(&b).unwrap();
        assert!((m.cutoff - 10f64.powf(1.5)).abs() < 1e-9);
    }

    #[test]
    fn confusion_rows_sum_to_class_counts() {
        use HealthLabel::*;
        let t = [Healthy, Healthy, Faulty, Faulty, Faulty];
        let p = [Healthy, Faulty, Faulty, Healthy, Faulty];
        let c = Confusion::from_labels(&t, &p);
        assert_eq!((c.detected, c.undetected, c.missed, c.false_positive), (2, 1, 1, 1));
        assert_eq!(c.healthy_count(), 2);
        assert_eq!(c.faulty_count(), 3);
        assert!(c.to_csv().contains("total,3,2,5,60.00"));
    }

    #[test]
    fn label_sign_round_trip() {
        assert_eq!(HealthLabel::from_sign(0.0), HealthLabel::Healthy);
        assert_eq!(HealthLabel::from_sign(HealthLabel::Faulty.sign()), HealthLabel::Faulty);
    }
}
