//! Gappy POD: POD coefficients from a handful of signal samples.

use log::warn;
use nalgebra::{DMatrix, DVector, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{PhmError, Result};
use crate::pod::PodBasis;
use crate::som::SensorSchedule;

/// Condition number of the gappy matrix above which recovery is refused.
pub const MAX_CONDITION: f64 = 1e12;

/// Samples of a signal at the schedule's time points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompressedSignal {
    pub values: Vec<f64>,
    pub schedule_hash: [u8; 16],
}

impl CompressedSignal {
    /// Wire form: 16-byte schedule hash, then `n_w` little-endian f64.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * self.values.len());
        out.extend_from_slice(&self.schedule_hash);
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || (bytes.len() - 16) % 8 != 0 {
            return Err(PhmError::Format(format!("compressed signal of {} bytes is malformed", bytes.len())));
        }
        let schedule_hash: [u8; 16] = bytes[..16].try_into().expect("length checked");
        let values = bytes[16..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Ok(CompressedSignal { values, schedule_hash })
    }
}

/// ŷ_j = y[t̂_j].
pub fn compress_signal(y: &[f64], schedule: &SensorSchedule) -> Result<CompressedSignal> {
    if y.len() != schedule.n_e {
        return Err(PhmError::invalid(format!("signal has {} samples, schedule expects {}", y.len(), schedule.n_e)));
    }
    Ok(CompressedSignal { values: schedule.indices.iter().map(|&i| y[i]).collect(), schedule_hash: schedule.hash() })
}

/// Precomputed least-squares map from compressed samples to coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct GappyOperator {
    /// Rows of the first `n_m` modes at the schedule (n_w × n_m).
    pub v_hat: DMatrix<f64>,
    /// Reference signal at the schedule.
    pub y0_hat: DVector<f64>,
    /// Pseudo-inverse of `v_hat` (n_m × n_w).
    pub pinv: DMatrix<f64>,
    /// cond(G) with G = v̂ᵀv̂.
    pub condition: f64,
    pub schedule_hash: [u8; 16],
}

impl GappyOperator {
    pub fn new(basis: &PodBasis, schedule: &SensorSchedule, n_m: usize) -> Result<Self> {
        if schedule.n_e != basis.n_e() {
            return Err(PhmError::invalid("schedule and basis refer to different grids"));
        }
        if n_m == 0 || n_m > basis.rank() {
            return Err(PhmError::invalid(format!("n_m must be in 1..={}, got {n_m}", basis.rank())));
        }
        let n_w = schedule.n_w();
        if n_m > n_w {
            return Err(PhmError::Underdetermined { modes: n_m, points: n_w });
        }
        if n_m == n_w {
            warn!("{n_m} modes from {n_w} points: gappy matrix is square and likely ill-conditioned");
        }
        let v_hat = DMatrix::from_fn(n_w, n_m, |r, c| basis.modes[(schedule.indices[r], c)]);
        let y0_hat = DVector::from_fn(n_w, |r, _| basis.y0[schedule.indices[r]]);
        Self::from_parts(v_hat, y0_hat, schedule.hash())
    }

    pub fn from_parts(v_hat: DMatrix<f64>, y0_hat: DVector<f64>, schedule_hash: [u8; 16]) -> Result<Self> {
        let svd = SVD::new(v_hat.clone(), true, true);
        let s = &svd.singular_values;
        let smax = s.max();
        let smin = s.min();
        let condition = if smin > 0.0 { (smax / smin).powi(2) } else { f64::INFINITY };
        if !(condition <= MAX_CONDITION) {
            return Err(PhmError::IllConditioned { condition });
        }
        let pinv = svd.pseudo_inverse(0.0).map_err(|e| PhmError::Undefined(e.to_string()))?;
        Ok(GappyOperator { v_hat, y0_hat, pinv, condition, schedule_hash })
    }

    pub fn n_m(&self) -> usize {
        self.v_hat.ncols()
    }

    pub fn n_w(&self) -> usize {
        self.v_hat.nrows()
    }

    /// Solves G α = v̂ᵀ(ŷ − ŷ0) in the least-squares sense.
    pub fn reconstruct(&self, y_hat: &CompressedSignal) -> Result<DVector<f64>> {
        if y_hat.schedule_hash != self.schedule_hash {
            return Err(PhmError::HashMismatch {
                expected: hex::encode(self.schedule_hash),
                found: hex::encode(y_hat.schedule_hash),
            });
        }
        if y_hat.values.len() != self.n_w() {
            return Err(PhmError::invalid(format!("{} samples for a {}-point schedule", y_hat.values.len(), self.n_w())));
        }
        if y_hat.values.iter().any(|v| !v.is_finite()) {
            return Err(PhmError::invalid("compressed signal has non-finite samples"));
        }
        let d = DVector::from_column_slice(&y_hat.values) - &self.y0_hat;
        Ok(&self.pinv * d)
    }
}

/// Gappy coefficients in one call.
pub fn reconstruct_coefficients(
    y_hat: &CompressedSignal,
    basis: &PodBasis,
    schedule: &SensorSchedule,
) -> Result<DVector<f64>> {
    GappyOperator::new(basis, schedule, basis.n_m)?.reconstruct(y_hat)
}

/// RMS(α_gappy − α_full) / (max α_full − min α_full).
pub fn coefficient_error(alpha_gappy: &[f64], alpha_full: &[f64]) -> Result<f64> {
    if alpha_gappy.len() != alpha_full.len() || alpha_full.is_empty() {
        return Err(PhmError::invalid("coefficient vectors must be non-empty and of equal length"));
    }
    let hi = alpha_full.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = alpha_full.iter().cloned().fold(f64::INFINITY, f64::min);
    let range = hi - lo;
    if range <= 0.0 {
        return Err(PhmError::Undefined("coefficient error of a constant reference vector".into()));
    }
    let ms = alpha_gappy.iter().zip(alpha_full).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / alpha_full.len() as f64;
    Ok(ms.sqrt() / range)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pod::{compute_pod, PodOptions};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn basis(n_e: usize, n_s: usize, seed: u64) -> PodBasis {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = DMatrix::from_fn(n_e, n_s, |_, _| StandardNormal.sample(&mut rng));
        let y0 = DVector::from_fn(n_e, |i, _| (i as f64 * 0.1).sin());
        compute_pod(&y, &y0, &PodOptions::default()).unwrap()
    }

    #[test]
    fn identity_schedule_is_projection() {
        let b = basis(30, 10, 1).with_retained(6).unwrap();
        let s = SensorSchedule::from_indices((0..30).collect(), 30).unwrap();
        let op = GappyOperator::new(&b, &s, 6).unwrap();
        assert!((op.condition - 1.0).abs() < 1e-10);
        let y: Vec<f64> = (0..30).map(|i| (i as f64).cos()).collect();
        let c = compress_signal(&y, &s).unwrap();
        assert_eq!(c.values, y);
        let a = op.reconstruct(&c).unwrap();
        let full = b.project(&y).unwrap();
        assert!((&a - &full).norm() < 1e-10 * full.norm().max(1.0));
    }

    #[test]
    fn representable_signal_is_recovered() {
        let b = basis(80, 20, 2).with_retained(5).unwrap();
        let s = SensorSchedule::from_indices(vec![1, 7, 13, 22, 30, 41, 55, 63, 70, 78], 80).unwrap();
        let alpha = DVector::from_vec(vec![2.0, -1.0, 0.5, 3.0, -0.25]);
        let y = b.reconstruct(&alpha).unwrap();
        let a = reconstruct_coefficients(&compress_signal(y.as_slice(), &s).unwrap(), &b, &s).unwrap();
        assert!((&a - &alpha).norm() < 1e-8 * alpha.norm());
    }

    #[test]
    fn residual_satisfies_normal_equations() {
        let b = basis(80, 20, 3).with_retained(6).unwrap();
        let s = SensorSchedule::from_indices((0..80).step_by(6).collect(), 80).unwrap();
        let op = GappyOperator::new(&b, &s, 6).unwrap();
        let y: Vec<f64> = (0..80).map(|i| (i as f64 * 0.37).sin() * 2.0).collect();
        let c = compress_signal(&y, &s).unwrap();
        let a = op.reconstruct(&c).unwrap();
        let r = DVector::from_column_slice(&c.values) - &op.y0_hat - &op.v_hat * &a;
        assert!(op.v_hat.tr_mul(&r).norm() < 1e-8 * r.norm().max(1.0));
    }

    #[test]
    fn refuses_more_modes_than_points() {
        let b = basis(50, 20, 4);
        let s = SensorSchedule::from_indices(vec![3, 9, 20, 33, 41], 50).unwrap();
        assert!(matches!(GappyOperator::new(&b, &s, 6), Err(PhmError::Underdetermined { modes: 6, points: 5 })));
        assert!(GappyOperator::new(&b, &s, 5).is_ok());
    }

    #[test]
    fn singular_gappy_matrix_is_flagged() {
        let v = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let err = GappyOperator::from_parts(v, DVector::zeros(3), [0; 16]).unwrap_err();
        assert!(matches!(err, PhmError::IllConditioned { .. }));
    }

    #[test]
    fn foreign_schedule_is_rejected() {
        let b = basis(40, 10, 5).with_retained(3).unwrap();
        let s1 = SensorSchedule::from_indices(vec![1, 5, 9, 20, 30], 40).unwrap();
        let s2 = SensorSchedule::from_indices(vec![2, 5, 9, 20, 30], 40).unwrap();
        let op = GappyOperator::new(&b, &s1, 3).unwrap();
        let c = compress_signal(&[0.0; 40], &s2).unwrap();
        assert!(matches!(op.reconstruct(&c), Err(PhmError::HashMismatch { .. })));
        assert!(compress_signal(&[0.0; 39], &s1).is_err());
    }

    #[test]
    fn constant_signal_compresses_to_constant() {
        let s = SensorSchedule::from_indices(vec![0, 3, 7], 10).unwrap();
        assert_eq!(compress_signal(&[2.5; 10], &s).unwrap().values, vec![2.5; 3]);
    }

    #[test]
    fn wire_round_trip() {
        let c = CompressedSignal { values: vec![1.5, -2.0, f64::MIN_POSITIVE], schedule_hash: [7; 16] };
        let b = c.to_bytes();
        assert_eq!(b.len(), 16 + 24);
        assert_eq!(CompressedSignal::from_bytes(&b).unwrap(), c);
        assert!(CompressedSignal::from_bytes(&b[..20]).is_err());
    }

    #[test]
    fn error_metric() {
        assert_eq!(coefficient_error(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        let e = coefficient_error(&[1.0, 1.0], &[0.0, 1.0]).unwrap();
        assert!((e - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(matches!(coefficient_error(&[1.0], &[1.0]), Err(PhmError::Undefined(_))));
    }

    #[test]
    fn error_grows_with_noise() {
        let b = basis(120, 40, 6).with_retained(8).unwrap();
        let s = SensorSchedule::from_indices((0..120).step_by(5).collect(), 120).unwrap();
        let op = GappyOperator::new(&b, &s, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut means = Vec::new();
        for sigma in [0.01, 0.05, 0.2] {
            let mut total = 0.0;
            for _ in 0..100 {
                let alpha = DVector::from_fn(8, |_, _| StandardNormal.sample(&mut rng));
                let y = b.reconstruct(&alpha).unwrap();
                let mut c = compress_signal(y.as_slice(), &s).unwrap();
                for v in c.values.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *v += sigma * z;
                }
                let a = op.reconstruct(&c).unwrap();
                total += coefficient_error(a.as_slice(), alpha.as_slice()).unwrap();
            }
            means.push(total / 100.0);
        }
        assert!(means[0] < means[1] && means[1] < means[2], "{means:?}");
    }
}
