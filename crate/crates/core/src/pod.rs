//! Proper orthogonal decomposition of a snapshot matrix.

use log::debug;
use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{PhmError, Result};

/// Relative singular-value floor below which modes are dropped.
pub const RANK_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PodMethod {
    /// Randomized when only a few leading modes are wanted, else thin SVD.
    Auto,
    /// Thin SVD of the centered snapshots.
    Svd,
    /// Eigen-decomposition of the n_s × n_s correlation matrix.
    Snapshots,
    /// Range finder with power iterations, keeps `max_modes` modes.
    Randomized,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PodOptions {
    pub method: PodMethod,
    /// Upper bound on stored modes; `None` keeps the numerical rank.
    pub max_modes: Option<usize>,
    /// Extra random directions for the randomized path.
    pub oversample: usize,
    pub power_iters: usize,
    pub seed: u64,
}

impl Default for PodOptions {
    fn default() -> Self {
        PodOptions { method: PodMethod::Auto, max_modes: None, oversample: 20, power_iters: 3, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PodBasis {
    /// Centering reference.
    pub y0: DVector<f64>,
    /// Orthonormal modes, one per column, ordered by energy.
    pub modes: DMatrix<f64>,
    /// λ_i = σ_i² / n_s.
    pub eigenvalues: Vec<f64>,
    /// Σ of all eigenvalues, including modes that were not stored.
    pub total_energy: f64,
    /// Modes used by projection and reconstruction.
    pub n_m: usize,
    pub n_snapshots: usize,
}

pub fn compute_pod(y: &DMatrix<f64>, y0: &DVector<f64>, opts: &PodOptions) -> Result<PodBasis> {
    let (n_e, n_s) = y.shape();
    if n_s < 2 {
        return Err(PhmError::invalid(format!("POD needs at least 2 snapshots, got {n_s}")));
    }
    if y0.len() != n_e {
        return Err(PhmError::invalid(format!("reference has {} samples, snapshots have {n_e}", y0.len())));
    }
    if y.iter().chain(y0.iter()).any(|v| !v.is_finite()) {
        return Err(PhmError::invalid("snapshots contain non-finite values"));
    }
    if opts.max_modes == Some(0) {
        return Err(PhmError::invalid("max_modes must be at least 1"));
    }
    let mut x = y.clone();
    for mut c in x.column_iter_mut() {
        c -= y0;
    }
    let total_energy = x.norm_squared() / n_s as f64;
    let full = n_e.min(n_s);

    let method = match opts.method {
        PodMethod::Auto => match opts.max_modes {
            Some(k) if 2 * (k + opts.oversample) < full => PodMethod::Randomized,
            _ => PodMethod::Svd,
        },
        m => m,
    };
    debug!("pod: {n_e}×{n_s} via {method:?}");

    let (u, sigma) = match method {
        PodMethod::Randomized => {
            let k = opts.max_modes.unwrap_or(full).min(full);
            randomized(&x, k, opts)
        }
        PodMethod::Snapshots => snapshots(&x),
        _ => thin_svd(x),
    };

    let s1 = sigma.first().copied().unwrap_or(0.0);
    let floor = match method {
        // the correlation matrix squares the condition number
        PodMethod::Snapshots => s1 * 1e-7,
        _ => s1 * RANK_TOL,
    };
    let mut rank = sigma.iter().take_while(|&&s| s > floor && s > 0.0).count();
    if let Some(k) = opts.max_modes {
        rank = rank.min(k);
    }
    let modes = u.columns(0, rank).into_owned();
    let eigenvalues: Vec<f64> = sigma[..rank].iter().map(|s| s * s / n_s as f64).collect();
    Ok(PodBasis { y0: y0.clone(), modes, eigenvalues, total_energy, n_m: rank, n_snapshots: n_s })
}

fn sorted(u: DMatrix<f64>, s: Vec<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let mut idx: Vec<usize> = (0..s.len()).collect();
    idx.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let u = DMatrix::from_fn(u.nrows(), idx.len(), |r, c| u[(r, idx[c])]);
    let s = idx.iter().map(|&i| s[i]).collect();
    (u, s)
}

fn thin_svd(x: DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let svd = SVD::new(x, true, false);
    let u = svd.u.expect("left singular vectors requested");
    sorted(u, svd.singular_values.iter().copied().collect())
}

fn snapshots(x: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let c = x.tr_mul(x);
    let eig = SymmetricEigen::new(c);
    let s: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).collect();
    let (v, s) = sorted(eig.eigenvectors, s);
    let mut u = x * v;
    for (j, sj) in s.iter().enumerate() {
        if *sj > 0.0 {
            u.column_mut(j).scale_mut(1.0 / sj);
        }
    }
    // restore orthonormality lost to round-off in the weak modes
    let keep = s.iter().take_while(|&&v| v > s[0] * 1e-7).count().max(1);
    let q = u.columns(0, keep).into_owned().qr();
    let (mut q, r) = (q.q(), q.r());
    for j in 0..keep {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    (q, s[..keep].to_vec())
}

fn randomized(x: &DMatrix<f64>, k: usize, opts: &PodOptions) -> (DMatrix<f64>, Vec<f64>) {
    let (m, n) = x.shape();
    let l = (k + opts.oversample).min(m.min(n));
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let omega = DMatrix::from_fn(n, l, |_, _| StandardNormal.sample(&mut rng));
    let mut q = (x * omega).qr().q();
    for _ in 0..opts.power_iters {
        let z = x.tr_mul(&q).qr().q();
        q = (x * z).qr().q();
    }
    let b = q.tr_mul(x);
    let svd = SVD::new(b, true, false);
    let (ub, s) = sorted(svd.u.expect("left singular vectors requested"), svd.singular_values.iter().copied().collect());
    let k = k.min(s.len());
    let u = q * ub.columns(0, k);
    (u, s[..k].to_vec())
}

impl PodBasis {
    pub fn n_e(&self) -> usize {
        self.y0.len()
    }

    /// Number of stored modes.
    pub fn rank(&self) -> usize {
        self.modes.ncols()
    }

    pub fn with_retained(mut self, n_m: usize) -> Result<Self> {
        self.set_retained(n_m)?;
        Ok(self)
    }

    pub fn set_retained(&mut self, n_m: usize) -> Result<()> {
        if n_m == 0 || n_m > self.rank() {
            return Err(PhmError::invalid(format!("retained modes must be in 1..={}, got {n_m}", self.rank())));
        }
        self.n_m = n_m;
        Ok(())
    }

    /// Share of the snapshot energy captured by the first `n_m` modes.
    pub fn energy_fraction(&self, n_m: usize) -> Result<f64> {
        if n_m == 0 || n_m > self.rank() {
            return Err(PhmError::invalid(format!("energy fraction needs 1 ≤ n_m ≤ {}, got {n_m}", self.rank())));
        }
        if self.total_energy == 0.0 {
            return Ok(1.0);
        }
        let captured: f64 = self.eigenvalues[..n_m].iter().sum();
        Ok((captured / self.total_energy).min(1.0))
    }

    /// Coefficients on the first `n` modes.
    pub fn project_n(&self, y: &[f64], n: usize) -> Result<DVector<f64>> {
        if y.len() != self.n_e() {
            return Err(PhmError::invalid(format!("signal has {} samples, basis expects {}", y.len(), self.n_e())));
        }
        if n > self.rank() {
            return Err(PhmError::invalid(format!("only {} modes stored, asked for {n}", self.rank())));
        }
        let d = DVector::from_column_slice(y) - &self.y0;
        Ok(self.modes.columns(0, n).tr_mul(&d))
    }

    /// Coefficients on the retained modes.
    pub fn project(&self, y: &[f64]) -> Result<DVector<f64>> {
        self.project_n(y, self.n_m)
    }

    /// Coefficients of every column of `y` on the first `n` modes (n × n_s).
    pub fn project_columns(&self, y: &DMatrix<f64>, n: usize) -> Result<DMatrix<f64>> {
        if y.nrows() != self.n_e() || n > self.rank() {
            return Err(PhmError::invalid("snapshot rows or mode count do not match the basis"));
        }
        let mut x = y.clone();
        for mut c in x.column_iter_mut() {
            c -= &self.y0;
        }
        Ok(self.modes.columns(0, n).tr_mul(&x))
    }

    pub fn reconstruct(&self, alpha: &DVector<f64>) -> Result<DVector<f64>> {
        if alpha.len() > self.rank() {
            return Err(PhmError::invalid("more coefficients than stored modes"));
        }
        Ok(&self.y0 + self.modes.columns(0, alpha.len()) * alpha)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random(m: usize, n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(m, n, |_, _| StandardNormal.sample(&mut rng))
    }

    fn orthonormality_error(v: &DMatrix<f64>) -> f64 {
        let g = v.tr_mul(v);
        (g - DMatrix::identity(v.ncols(), v.ncols())).abs().max()
    }

    #[test]
    fn rank_one_from_identical_columns() {
        let col = DVector::from_vec(vec![1.0, 2.0, 0.5, -1.0]);
        let y = DMatrix::from_columns(&[col.clone(), col.clone()]);
        let y0 = DVector::zeros(4);
        let b = compute_pod(&y, &y0, &PodOptions::default()).unwrap();
        assert_eq!(b.rank(), 1);
        let v = b.modes.column(0);
        let cos = v.dot(&col).abs() / col.norm();
        assert!((cos - 1.0).abs() < 1e-12);
        assert!((b.energy_fraction(1).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn energy_matches_gram_oracle() {
        let y = random(50, 10, 1);
        let y0 = DVector::from_fn(50, |i, _| i as f64 * 0.01);
        let b = compute_pod(&y, &y0, &PodOptions::default()).unwrap();
        assert!(orthonormality_error(&b.modes) < 1e-10);
        // oracle: eigenvalues of the centered Gram matrix / n_s
        let mut x = y.clone();
        for mut c in x.column_iter_mut() {
            c -= &y0;
        }
        let eig = SymmetricEigen::new(x.tr_mul(&x));
        let mut lam: Vec<f64> = eig.eigenvalues.iter().map(|l| l / 10.0).collect();
        lam.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in b.eigenvalues.iter().zip(&lam) {
            assert!((a - b).abs() < 1e-8 * lam[0]);
        }
        let variance = x.norm_squared() / 10.0;
        let sum: f64 = b.eigenvalues.iter().sum();
        assert!((sum - variance).abs() < 1e-8 * variance);
        assert!((b.energy_fraction(b.rank()).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn full_rank_reconstruction_is_exact() {
        let y = random(40, 12, 2);
        let y0 = DVector::from_element(40, 0.3);
        let b = compute_pod(&y, &y0, &PodOptions::default()).unwrap();
        for j in 0..12 {
            let a = b.project_n(y.column(j).as_slice(), b.rank()).unwrap();
            let r = b.reconstruct(&a).unwrap();
            assert!((&r - y.column(j)).norm() < 1e-8 * y.column(j).norm());
        }
    }

    #[test]
    fn projection_trivia() {
        let y = random(30, 8, 3);
        let y0 = DVector::zeros(30);
        let b = compute_pod(&y, &y0, &PodOptions::default()).unwrap().with_retained(4).unwrap();
        assert!(b.project(y0.as_slice()).unwrap().iter().all(|&a| a == 0.0));
        let s = &y0 + b.modes.column(1) * 3.0;
        let a = b.project(s.as_slice()).unwrap();
        for (i, v) in a.iter().enumerate() {
            let want = if i == 1 { 3.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-12);
        }
    }

    #[test]
    fn truncated_projection_is_least_squares() {
        let y = random(60, 15, 4);
        let y0 = DVector::zeros(60);
        let b = compute_pod(&y, &y0, &PodOptions::default()).unwrap().with_retained(5).unwrap();
        let col = y.column(7).into_owned();
        let a = b.project(col.as_slice()).unwrap();
        let v = b.modes.columns(0, 5);
        // normal equations oracle
        let ls = (v.tr_mul(&v)).lu().solve(&v.tr_mul(&col)).unwrap();
        assert!((&a - &ls).norm() < 1e-10);
        let resid = &col - v * &a;
        assert!(v.tr_mul(&resid).norm() < 1e-8 * col.norm());
    }

    #[test]
    fn beats_random_bases() {
        let y = random(40, 20, 5);
        let y0 = DVector::zeros(40);
        let b = compute_pod(&y, &y0, &PodOptions::default()).unwrap();
        let err = |v: &DMatrix<f64>| {
            let p = v * v.tr_mul(&y);
            (&y - p).norm_squared()
        };
        let pod_err = err(&b.modes.columns(0, 6).into_owned());
        for s in 0..10 {
            let q = random(40, 6, 100 + s).qr().q();
            assert!(pod_err <= err(&q));
        }
    }

    #[test]
    fn methods_agree() {
        // decaying spectrum so the leading modes are well separated
        let y = random(200, 60, 6);
        let w = DMatrix::from_diagonal(&DVector::from_fn(60, |i, _| 0.7f64.powi(i as i32)));
        let y = &y * random(60, 60, 7).qr().q() * w;
        let y0 = DVector::zeros(200);
        let svd = compute_pod(&y, &y0, &PodOptions { method: PodMethod::Svd, ..Default::default() }).unwrap();
        let snap = compute_pod(&y, &y0, &PodOptions { method: PodMethod::Snapshots, ..Default::default() }).unwrap();
        let rnd = compute_pod(
            &y,
            &y0,
            &PodOptions { method: PodMethod::Randomized, max_modes: Some(8), ..Default::default() },
        )
        .unwrap();
        assert_eq!(rnd.rank(), 8);
        assert!((rnd.total_energy - svd.total_energy).abs() < 1e-10 * svd.total_energy);
        for i in 0..8 {
            assert!((svd.eigenvalues[i] - snap.eigenvalues[i]).abs() < 1e-8 * svd.eigenvalues[0]);
            assert!((svd.eigenvalues[i] - rnd.eigenvalues[i]).abs() < 1e-8 * svd.eigenvalues[0]);
            let c = svd.modes.column(i).dot(&rnd.modes.column(i)).abs();
            assert!((c - 1.0).abs() < 1e-6, "mode {i}: {c}");
        }
        assert!(orthonormality_error(&snap.modes) < 1e-10);
        assert!(orthonormality_error(&rnd.modes) < 1e-10);
    }

    #[test]
    fn rejects_bad_inputs() {
        let y = random(5, 1, 8);
        assert!(compute_pod(&y, &DVector::zeros(5), &PodOptions::default()).is_err());
        let y = random(5, 3, 8);
        assert!(compute_pod(&y, &DVector::zeros(4), &PodOptions::default()).is_err());
        let b = compute_pod(&y, &DVector::zeros(5), &PodOptions::default()).unwrap();
        assert!(b.energy_fraction(0).is_err());
        assert!(b.project(&[0.0; 4]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn invariants_hold(m in 3usize..40, n in 2usize..25, seed in 0u64..1000) {
            let y = random(m, n, seed);
            let y0 = DVector::from_fn(m, |i, _| (i as f64).sin());
            let b = compute_pod(&y, &y0, &PodOptions::default()).unwrap();
            prop_assert!(orthonormality_error(&b.modes) < 1e-10);
            prop_assert!(b.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
            prop_assert!(b.eigenvalues.iter().all(|&l| l >= 0.0));
            let mut last = 0.0;
            for k in 1..=b.rank() {
                let e = b.energy_fraction(k).unwrap();
                prop_assert!(e >= last - 1e-15);
                last = e;
            }
        }
    }
}
