//! Self-organizing selection of informative time samples.
//!
//! The training rows are `[t, v1(t), …, v_nm(t)]`, one per acquisition
//! sample. A ring of `n_w` neurons is fitted to them by competitive learning
//! and the time component of each trained neuron becomes a sampling point.

use log::warn;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{PhmError, Result};
use crate::pod::PodBasis;
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SomOptions {
    pub n_w: usize,
    pub epochs: usize,
    /// Standardize every training column before fitting.
    pub standardize: bool,
    pub eta_start: f64,
    pub eta_end: f64,
    /// Final neighbourhood width in lattice steps; the start is `n_w / 4`.
    pub sigma_end: f64,
    pub lattice: Lattice,
    /// Extra factor on the time column after standardization.
    pub time_weight: f64,
}

/// Neuron topology along the single lattice axis.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lattice {
    #[default]
    Ring,
    /// Open chain: the first and last neurons are not neighbours.
    Chain,
}

impl Lattice {
    fn distance(self, a: usize, b: usize, n: usize) -> f64 {
        let d = a.abs_diff(b);
        match self {
            Lattice::Ring => d.min(n - d) as f64,
            Lattice::Chain => d as f64,
        }
    }
}

impl Default for SomOptions {
    fn default() -> Self {
        SomOptions {
            n_w: 30,
            epochs: 200,
            standardize: false,
            eta_start: 0.5,
            eta_end: 0.01,
            sigma_end: 0.5,
            lattice: Lattice::Ring,
            time_weight: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorSchedule {
    /// Strictly increasing indices into the acquisition grid.
    pub indices: Vec<usize>,
    /// Length of the acquisition grid the indices refer to.
    pub n_e: usize,
    /// Trained neurons in raw units, `n_w × (n_m + 1)`, time first.
    #[serde(skip)]
    pub weights: DMatrix<f64>,
    pub epochs: usize,
    pub seed: u64,
    pub standardized: bool,
    pub column_mean: Vec<f64>,
    pub column_scale: Vec<f64>,
}

impl SensorSchedule {
    pub fn n_w(&self) -> usize {
        self.indices.len()
    }

    /// Schedule built from explicit indices.
    pub fn from_indices(mut indices: Vec<usize>, n_e: usize) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if indices.is_empty() || indices.last().is_some_and(|&i| i >= n_e) {
            return Err(PhmError::invalid(format!("schedule indices must be non-empty and below {n_e}")));
        }
        Ok(SensorSchedule {
            indices,
            n_e,
            weights: DMatrix::zeros(0, 0),
            epochs: 0,
            seed: 0,
            standardized: false,
            column_mean: Vec::new(),
            column_scale: Vec::new(),
        })
    }

    /// First 16 bytes of SHA-256 over the grid length and indices.
    pub fn hash(&self) -> [u8; 16] {
        let mut h = Sha256::new();
        h.update((self.n_e as u64).to_le_bytes());
        for &i in &self.indices {
            h.update((i as u64).to_le_bytes());
        }
        let d = h.finalize();
        d[..16].try_into().expect("digest has 32 bytes")
    }

    pub fn hash_hex(&self) -> String {
        hex::encode(self.hash())
    }
}

/// Training rows `[t, v1, …, v_nm]` for the retained modes.
pub fn training_rows(basis: &PodBasis, times: &[f64]) -> Result<DMatrix<f64>> {
    if times.len() != basis.n_e() {
        return Err(PhmError::invalid(format!("time grid has {} samples, basis has {}", times.len(), basis.n_e())));
    }
    let n_m = basis.n_m;
    Ok(DMatrix::from_fn(times.len(), n_m + 1, |r, c| if c == 0 { times[r] } else { basis.modes[(r, c - 1)] }))
}

/// Index of the neuron closest to `x`.
pub fn winner(weights: &DMatrix<f64>, x: &[f64]) -> usize {
    let mut best = (0, f64::INFINITY);
    for l in 0..weights.nrows() {
        let mut d = 0.0;
        for (c, xc) in x.iter().enumerate() {
            let e = weights[(l, c)] - xc;
            d += e * e;
        }
        if d < best.1 {
            best = (l, d);
        }
    }
    best.0
}

/// One competitive-learning update; returns the winner.
pub fn update(weights: &mut DMatrix<f64>, x: &[f64], eta: f64, sigma: f64, lattice: Lattice) -> usize {
    let n = weights.nrows();
    let win = winner(weights, x);
    let two_s2 = 2.0 * sigma * sigma;
    for l in 0..n {
        let d = lattice.distance(l, win, n);
        let h = (-d * d / two_s2).exp();
        if h < 1e-12 {
            continue;
        }
        let rate = eta * h;
        for (c, xc) in x.iter().enumerate() {
            let w = &mut weights[(l, c)];
            *w += rate * (xc - *w);
        }
    }
    win
}

/// Fits the ring to `rows` and snaps each neuron's time onto the grid
/// `t_i = times[i]`.
pub fn train_som_rows(rows: &DMatrix<f64>, times: &[f64], opts: &SomOptions, seed: u64) -> Result<SensorSchedule> {
    let (n_e, dim) = rows.shape();
    let n_w = opts.n_w;
    if n_w == 0 || n_w > n_e {
        return Err(PhmError::invalid(format!("n_w must be in 1..={n_e}, got {n_w}")));
    }
    if opts.epochs == 0 {
        return Err(PhmError::invalid("SOM needs at least one epoch"));
    }
    if n_w < dim - 1 {
        warn!("{n_w} sampling points for {} modes: gappy recovery will refuse", dim - 1);
    }

    let mut mean = vec![0.0; dim];
    let mut scale = vec![1.0; dim];
    if opts.standardize {
        for c in 0..dim {
            let col = rows.column(c);
            let m = col.mean();
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n_e as f64;
            mean[c] = m;
            scale[c] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
    }
    if !(opts.time_weight.is_finite() && opts.time_weight > 0.0) {
        return Err(PhmError::invalid("time_weight must be positive"));
    }
    scale[0] /= opts.time_weight;
    let z = DMatrix::from_fn(n_e, dim, |r, c| (rows[(r, c)] - mean[c]) / scale[c]);
    let data: Vec<Vec<f64>> = (0..n_e).map(|r| z.row(r).iter().copied().collect()).collect();

    // evenly spaced in time, modes at their column means
    let col_mean: Vec<f64> = (0..dim).map(|c| z.column(c).mean()).collect();
    let mut w = DMatrix::from_fn(n_w, dim, |l, c| {
        if c == 0 {
            let r = ((l as f64 + 0.5) * n_e as f64 / n_w as f64).floor() as usize;
            z[(r.min(n_e - 1), 0)]
        } else {
            col_mean[c]
        }
    });

    let mut rng = seed::rng(seed, "som");
    let mut order: Vec<usize> = (0..n_e).collect();
    let sigma0 = (n_w as f64 / 4.0).max(opts.sigma_end);
    for e in 0..opts.epochs {
        let frac = if opts.epochs > 1 { e as f64 / (opts.epochs - 1) as f64 } else { 1.0 };
        let eta = opts.eta_start + (opts.eta_end - opts.eta_start) * frac;
        let sigma = sigma0 + (opts.sigma_end - sigma0) * frac;
        order.shuffle(&mut rng);
        for &r in &order {
            update(&mut w, &data[r], eta, sigma, opts.lattice);
        }
    }

    let raw = DMatrix::from_fn(n_w, dim, |l, c| w[(l, c)] * scale[c] + mean[c]);
    let indices = snap_to_grid(&(0..n_w).map(|l| raw[(l, 0)]).collect::<Vec<_>>(), times);
    Ok(SensorSchedule {
        indices,
        n_e,
        weights: raw,
        epochs: opts.epochs,
        seed,
        standardized: opts.standardize,
        column_mean: mean,
        column_scale: scale,
    })
}

/// Nearest grid index for each time; collisions move to the closest free
/// index. Result sorted.
pub fn snap_to_grid(t: &[f64], times: &[f64]) -> Vec<usize> {
    let n_e = times.len();
    let mut taken = vec![false; n_e];
    let mut order: Vec<usize> = (0..t.len()).collect();
    order.sort_by(|&a, &b| t[a].total_cmp(&t[b]));
    let mut out = Vec::with_capacity(t.len());
    for &q in &order {
        let i = match times.binary_search_by(|v| v.total_cmp(&t[q])) {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) if i >= n_e => n_e - 1,
            Err(i) => {
                if (t[q] - times[i - 1]).abs() <= (times[i] - t[q]).abs() {
                    i - 1
                } else {
                    i
                }
            }
        };
        let mut pick = None;
        for step in 0..n_e {
            let lo = i.checked_sub(step);
            let hi = (i + step < n_e).then_some(i + step);
            let cands = [lo, hi];
            let mut best: Option<usize> = None;
            for c in cands.into_iter().flatten() {
                if !taken[c] && best.is_none_or(|b| (times[c] - t[q]).abs() < (times[b] - t[q]).abs()) {
                    best = Some(c);
                }
            }
            if best.is_some() {
                pick = best;
                break;
            }
        }
        let p = pick.expect("n_w ≤ n_e leaves a free index");
        taken[p] = true;
        out.push(p);
    }
    out.sort_unstable();
    out
}

/// Trains the schedule on `[t, v1, …, v_nm]` built from `basis`.
pub fn train_som(basis: &PodBasis, times: &[f64], opts: &SomOptions, seed: u64) -> Result<SensorSchedule> {
    let rows = training_rows(basis, times)?;
    train_som_rows(&rows, times, opts, seed)
}
