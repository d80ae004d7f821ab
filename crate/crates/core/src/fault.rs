//! The normalized fault vector and its mapping onto physical quantities.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{PhmError, Result};

pub const N_FAULTS: usize = 8;

/// Index of the eccentricity-phase component (not a damage, never grows).
pub const PHASE_INDEX: usize = 6;
/// Index of the eccentricity-amplitude component, used to weight phase errors.
pub const ECCENTRICITY_INDEX: usize = 5;
/// Index of the proportional-gain drift component (nominal sits mid-range).
pub const GAIN_INDEX: usize = 7;

pub const FAULT_NAMES: [&str; N_FAULTS] = [
    "friction",
    "backlash",
    "short_a",
    "short_b",
    "short_c",
    "eccentricity",
    "eccentricity_phase",
    "gain_drift",
];

/// Eight fault intensities in `[0, 1]`:
///
/// | idx | fault               | 0            | 1                 |
/// |-----|---------------------|--------------|-------------------|
/// | 0   | dry friction        | nominal      | 300 % of nominal  |
/// | 1   | backlash            | nominal      | 100 × nominal     |
/// | 2-4 | phase A/B/C short   | none         | full short        |
/// | 5   | rotor eccentricity  | none         | one air gap       |
/// | 6   | eccentricity phase  | −180°        | +180°             |
/// | 7   | proportional gain   | 50 %         | 150 %             |
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaultVector(pub [f64; N_FAULTS]);

impl FaultVector {
    pub const NOMINAL: FaultVector = FaultVector([0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.5, 0.5]);

    pub fn new(values: [f64; N_FAULTS]) -> Result<Self> {
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() || !(0.0..=1.0).contains(v) {
                return Err(PhmError::invalid(format!(
                    "fault component {} ({}) = {v} outside [0, 1]",
                    i + 1,
                    FAULT_NAMES[i]
                )));
            }
        }
        Ok(FaultVector(values))
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        let arr: [f64; N_FAULTS] = values.try_into().map_err(|_| {
            PhmError::invalid(format!("fault vector needs {N_FAULTS} components, got {}", values.len()))
        })?;
        Self::new(arr)
    }

    /// Clamps every component into `[0, 1]`; non-finite entries become nominal.
    pub fn clamped(values: [f64; N_FAULTS]) -> Self {
        let mut out = values;
        for (i, v) in out.iter_mut().enumerate() {
            *v = if v.is_finite() { v.clamp(0.0, 1.0) } else { Self::NOMINAL.0[i] };
        }
        FaultVector(out)
    }

    pub fn as_array(&self) -> &[f64; N_FAULTS] {
        &self.0
    }

    pub fn friction_scale(&self) -> f64 {
        1.0 + 2.0 * self.0[0]
    }

    pub fn backlash_scale(&self) -> f64 {
        1.0 + 99.0 * self.0[1]
    }

    /// Short-circuit fraction of phase 0 (A), 1 (B) or 2 (C).
    pub fn short_fraction(&self, phase: usize) -> f64 {
        self.0[2 + phase]
    }

    pub fn eccentricity(&self) -> f64 {
        self.0[ECCENTRICITY_INDEX]
    }

    /// Eccentricity phase in radians, affine in `[-π, π]`.
    pub fn eccentricity_phase(&self) -> f64 {
        2.0 * PI * (self.0[PHASE_INDEX] - 0.5)
    }

    pub fn gain_scale(&self) -> f64 {
        0.5 + self.0[GAIN_INDEX]
    }

    /// True when none of the angle-dependent electrical faults is active.
    pub fn has_shape_faults(&self) -> bool {
        self.0[2..=ECCENTRICITY_INDEX].iter().any(|&k| k != 0.0)
    }

    /// Normalized distance of each component from nominal, in `[0, 1]`.
    /// The phase component carries no damage and maps to zero.
    pub fn deviation(&self) -> [f64; N_FAULTS] {
        let mut d = [0.0; N_FAULTS];
        for i in 0..N_FAULTS {
            d[i] = match i {
                PHASE_INDEX => 0.0,
                GAIN_INDEX => (self.0[i] - 0.5).abs() * 2.0,
                _ => self.0[i],
            };
        }
        d
    }

    pub fn max_deviation(&self) -> f64 {
        self.deviation().into_iter().fold(0.0, f64::max)
    }
}

impl Default for FaultVector {
    fn default() -> Self {
        Self::NOMINAL
    }
}

impl fmt::Display for FaultVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| format!("{v:.4}")).collect();
        write!(f, "[{}]", parts.join(", "))
    }
}

impl std::str::FromStr for FaultVector {
    type Err = PhmError;

    fn from_str(s: &str) -> Result<Self> {
        let values: std::result::Result<Vec<f64>, _> = s
            .trim()
            .trim_start_matches('[')
            .trim_end_matches(']')
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect();
        let values = values.map_err(|e| PhmError::invalid(format!("fault vector `{s}`: {e}")))?;
        Self::from_slice(&values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_bounds() {
        let lo = FaultVector([0.0; 8]);
        let hi = FaultVector([1.0; 8]);
        assert_eq!(lo.friction_scale(), 1.0);
        assert_eq!(hi.friction_scale(), 3.0);
        assert_eq!(lo.backlash_scale(), 1.0);
        assert_eq!(hi.backlash_scale(), 100.0);
        assert_eq!(lo.gain_scale(), 0.5);
        assert_eq!(hi.gain_scale(), 1.5);
        assert!((lo.eccentricity_phase() + PI).abs() < 1e-15);
        assert!((hi.eccentricity_phase() - PI).abs() < 1e-15);
    }

    #[test]
    fn nominal_is_at_zero_deviation() {
        let n = FaultVector::NOMINAL;
        assert_eq!(n.gain_scale(), 1.0);
        assert_eq!(n.eccentricity_phase(), 0.0);
        assert_eq!(n.max_deviation(), 0.0);
        assert!(!n.has_shape_faults());
    }

    #[test]
    fn rejects_out_of_range() {
        let mut v = [0.0; 8];
        v[3] = 1.2;
        assert!(FaultVector::new(v).is_err());
        v[3] = f64::NAN;
        assert!(FaultVector::new(v).is_err());
        assert!(FaultVector::from_slice(&[0.0; 7]).is_err());
    }

    #[test]
    fn parses_comma_list() {
        let k: FaultVector = "0.1, 0,0,0,0,0,0.5,0.5".parse().unwrap();
        assert_eq!(k.0[0], 0.1);
        assert!("0.1,0.2".parse::<FaultVector>().is_err());
    }
}
