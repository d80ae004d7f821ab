//! Importance-sampled design of fault conditions and dataset assembly.

use std::path::Path;

use log::{info, warn};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assess::{Assessor, HealthLabel};
use crate::error::{PhmError, Result};
use crate::fault::{FaultVector, GAIN_INDEX, N_FAULTS, PHASE_INDEX};
use crate::matrix_io;
use crate::seed;
use crate::sim::{simulate_response, ActuatorParams, CommandProfile, Tier};

/// Design points in the unit hypercube, one row per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignMatrix {
    pub entries: DMatrix<f64>,
    /// Columns left out of the power rescale.
    pub exempt: Vec<usize>,
}

impl DesignMatrix {
    pub fn n_samples(&self) -> usize {
        self.entries.nrows()
    }

    pub fn n_vars(&self) -> usize {
        self.entries.ncols()
    }

    /// ‖row‖∞ over the non-exempt columns.
    pub fn row_sup(&self, i: usize) -> f64 {
        (0..self.n_vars())
            .filter(|j| !self.exempt.contains(j))
            .map(|j| self.entries[(i, j)])
            .fold(0.0, f64::max)
    }
}

/// Each column is `(perm(0..n_s) + U(0,1)) / n_s`.
pub fn latin_hypercube(n_s: usize, n_k: usize, seed: u64) -> Result<DesignMatrix> {
    if n_s < 2 || n_k < 1 {
        return Err(PhmError::invalid(format!("latin hypercube needs n_s ≥ 2 and n_k ≥ 1, got {n_s}×{n_k}")));
    }
    let mut rng = seed::rng(seed, "lhs");
    let mut entries = DMatrix::zeros(n_s, n_k);
    let mut perm: Vec<usize> = (0..n_s).collect();
    for j in 0..n_k {
        perm.shuffle(&mut rng);
        for i in 0..n_s {
            let u: f64 = rng.random();
            entries[(i, j)] = (perm[i] as f64 + u) / n_s as f64;
        }
    }
    Ok(DesignMatrix { entries, exempt: Vec::new() })
}

/// Raises non-exempt entries to the power of the non-exempt column count,
/// which makes the sup-norm over those columns uniformly distributed. With
/// no exemptions the power is `n_k`.
pub fn importance_rescale(j: &DesignMatrix, exempt: &[usize]) -> Result<DesignMatrix> {
    let n_k = j.n_vars();
    if let Some(&bad) = exempt.iter().find(|&&c| c >= n_k) {
        return Err(PhmError::invalid(format!("exempt column {bad} out of range")));
    }
    if j.entries.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(PhmError::invalid("design entries must lie in [0, 1]"));
    }
    let mut ex = exempt.to_vec();
    ex.sort_unstable();
    ex.dedup();
    let power = (n_k - ex.len()) as i32;
    let mut entries = j.entries.clone();
    for c in 0..n_k {
        if ex.contains(&c) {
            continue;
        }
        for v in entries.column_mut(c).iter_mut() {
            *v = v.powi(power);
        }
    }
    Ok(DesignMatrix { entries, exempt: ex })
}

/// Shrinks non-exempt entries toward zero, for near-nominal validation sets.
pub fn restrict(k: &DesignMatrix, factor: f64) -> DesignMatrix {
    let mut entries = k.entries.clone();
    for c in 0..k.n_vars() {
        if !k.exempt.contains(&c) {
            entries.column_mut(c).scale_mut(factor);
        }
    }
    DesignMatrix { entries, exempt: k.exempt.clone() }
}

/// Maps design rows (distance from nominal per component) onto fault vectors.
/// The gain component drifts to either side of nominal with a sign drawn
/// from its own stream; the phase component is taken as is.
pub fn to_fault_vectors(k: &DesignMatrix, sign_seed: u64) -> Result<Vec<FaultVector>> {
    if k.n_vars() != N_FAULTS {
        return Err(PhmError::invalid(format!("design has {} columns, fault vectors need {N_FAULTS}", k.n_vars())));
    }
    let mut rng = seed::rng(sign_seed, "gain-sign");
    (0..k.n_samples())
        .map(|i| {
            let mut v = [0.0; N_FAULTS];
            for (j, x) in v.iter_mut().enumerate() {
                *x = k.entries[(i, j)];
            }
            let up: bool = rng.random();
            let d = v[GAIN_INDEX];
            v[GAIN_INDEX] = if up { 0.5 + 0.5 * d } else { 0.5 - 0.5 * d };
            FaultVector::new(v)
        })
        .collect()
}

/// Plan for one set of fault conditions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingPlan {
    pub n_samples: usize,
    pub exempt: Vec<usize>,
    /// Multiplier applied after rescaling; 1 for the general domain.
    pub restrict: f64,
}

impl Default for SamplingPlan {
    fn default() -> Self {
        SamplingPlan { n_samples: 1000, exempt: vec![PHASE_INDEX], restrict: 1.0 }
    }
}

impl SamplingPlan {
    pub fn fault_vectors(&self, seed: u64) -> Result<Vec<FaultVector>> {
        if !(self.restrict > 0.0 && self.restrict <= 1.0) {
            return Err(PhmError::invalid(format!("restrict factor {} outside (0, 1]", self.restrict)));
        }
        let j = latin_hypercube(self.n_samples, N_FAULTS, seed)?;
        let mut k = importance_rescale(&j, &self.exempt)?;
        if self.restrict < 1.0 {
            k = restrict(&k, self.restrict);
        }
        to_fault_vectors(&k, seed)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub n_s: usize,
    pub n_e: usize,
    pub config_hash: String,
    /// Requested rows whose simulation or assessment failed.
    pub dropped: Vec<usize>,
}

/// Fault conditions K (n_s × 8), signals Y (n_e × n_s) and labels Φ.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotDataset {
    pub k: Vec<FaultVector>,
    pub y: DMatrix<f64>,
    pub phi: Vec<HealthLabel>,
    pub manifest: DatasetManifest,
}

impl SnapshotDataset {
    pub fn n_samples(&self) -> usize {
        self.k.len()
    }

    pub fn k_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.k.len(), N_FAULTS, |i, j| self.k[i].0[j])
    }

    pub fn phi_row(&self) -> DMatrix<f64> {
        DMatrix::from_fn(1, self.phi.len(), |_, j| self.phi[j].sign())
    }

    pub fn healthy_fraction(&self) -> f64 {
        self.phi.iter().filter(|l| l.is_healthy()).count() as f64 / self.phi.len().max(1) as f64
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        matrix_io::write_matrix(&dir.join("K.bin"), &self.k_matrix())?;
        matrix_io::write_matrix(&dir.join("Y.bin"), &self.y)?;
        matrix_io::write_matrix(&dir.join("Phi.bin"), &self.phi_row())?;
        std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&self.manifest)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let km = matrix_io::read_matrix(&dir.join("K.bin"))?;
        let y = matrix_io::read_matrix(&dir.join("Y.bin"))?;
        let phi = matrix_io::read_matrix(&dir.join("Phi.bin"))?;
        let manifest: DatasetManifest = serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json"))?)?;
        if km.ncols() != N_FAULTS || km.nrows() != y.ncols() || phi.len() != y.ncols() {
            return Err(PhmError::Format(format!(
                "dataset shapes disagree: K {}×{}, Y {}×{}, Phi {}",
                km.nrows(),
                km.ncols(),
                y.nrows(),
                y.ncols(),
                phi.len()
            )));
        }
        let k = (0..km.nrows())
            .map(|i| FaultVector::from_slice(&km.row(i).iter().copied().collect::<Vec<_>>()))
            .collect::<Result<_>>()?;
        let phi = phi.iter().map(|&v| HealthLabel::from_sign(v)).collect();
        Ok(SnapshotDataset { k, y, phi, manifest })
    }
}

/// Simulates every fault row on the truth tier and labels it with `assessor`.
/// Rows that fail are dropped and listed in the manifest.
pub fn build_dataset(
    faults: &[FaultVector],
    cmd: &CommandProfile,
    params: &ActuatorParams,
    assessor: &dyn Assessor,
    seed: u64,
    config_hash: &str,
) -> Result<SnapshotDataset> {
    params.validate()?;
    let rows: Vec<Result<(Vec<f64>, HealthLabel)>> = faults
        .par_iter()
        .enumerate()
        .map(|(i, k)| {
            let noise = seed::derive_indexed(seed, "noise", i as u64);
            let y = simulate_response(k, cmd, params, Tier::Truth, Some(noise))?.y;
            let label = assessor.assess(k)?;
            Ok((y, label))
        })
        .collect();

    let n_e = cmd.len();
    let mut k = Vec::with_capacity(faults.len());
    let mut phi = Vec::with_capacity(faults.len());
    let mut columns = Vec::with_capacity(faults.len() * n_e);
    let mut dropped = Vec::new();
    for (i, row) in rows.into_iter().enumerate() {
        match row {
            Ok((y, label)) => {
                k.push(faults[i]);
                phi.push(label);
                columns.extend_from_slice(&y);
            }
            Err(e) => {
                warn!("dropping row {i} ({}): {e}", faults[i]);
                dropped.push(i);
            }
        }
    }
    if k.is_empty() {
        return Err(PhmError::invalid("every dataset row failed"));
    }
    info!("dataset: {} rows kept, {} dropped", k.len(), dropped.len());
    let y = DMatrix::from_vec(n_e, k.len(), columns);
    Ok(SnapshotDataset {
        manifest: DatasetManifest { seed, n_s: k.len(), n_e, config_hash: config_hash.to_string(), dropped },
        k,
        y,
        phi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn four_strata() {
        let d = latin_hypercube(4, 1, 9).unwrap();
        let mut bins: Vec<usize> = d.entries.iter().map(|v| (v * 4.0).floor() as usize).collect();
        bins.sort_unstable();
        assert_eq!(bins, vec![0, 1, 2, 3]);
    }

    #[test]
    fn seeds_decide_the_design() {
        let a = latin_hypercube(50, 3, 1).unwrap();
        assert_eq!(a, latin_hypercube(50, 3, 1).unwrap());
        assert_ne!(a, latin_hypercube(50, 3, 2).unwrap());
        assert!(latin_hypercube(1, 3, 1).is_err());
    }

    #[test]
    fn rescale_fixed_points_and_power() {
        let j = DesignMatrix { entries: DMatrix::from_row_slice(1, 8, &[0.0, 1.0, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5]), exempt: vec![] };
        let k = importance_rescale(&j, &[]).unwrap();
        assert_eq!(k.entries[(0, 0)], 0.0);
        assert_eq!(k.entries[(0, 1)], 1.0);
        assert_eq!(k.entries[(0, 2)], 0.00390625);
        let k = importance_rescale(&j, &[6]).unwrap();
        assert_eq!(k.entries[(0, 2)], 0.0078125);
        assert_eq!(k.entries[(0, 6)], 0.5);
        assert!(importance_rescale(&j, &[8]).is_err());
    }

    /// Kolmogorov distance of a sample to U(0, 1).
    fn ks_uniform(mut v: Vec<f64>) -> f64 {
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        v.iter().enumerate().map(|(i, &x)| (x - i as f64 / n).max((i + 1) as f64 / n - x)).fold(0.0, f64::max)
    }

    /// Asymptotic 1% critical value of the one-sample KS statistic.
    fn ks_critical_1pct(n: usize) -> f64 {
        1.6276 / (n as f64).sqrt()
    }

    #[test]
    fn columns_pass_ks() {
        let d = latin_hypercube(1000, 8, 11).unwrap();
        for c in 0..8 {
            let col: Vec<f64> = d.entries.column(c).iter().copied().collect();
            assert!(ks_uniform(col) < ks_critical_1pct(1000), "column {c}");
        }
    }

    #[test]
    fn sup_norm_is_uniform_with_phase_exempt() {
        let n = 10_000;
        let j = latin_hypercube(n, 8, 12).unwrap();
        let k = importance_rescale(&j, &[PHASE_INDEX]).unwrap();
        let sup: Vec<f64> = (0..n).map(|i| k.row_sup(i)).collect();
        let near = sup.iter().filter(|&&s| s < 0.1).count() as f64 / n as f64;
        assert!((near - 0.1).abs() < 0.01, "{near}");
        assert!(ks_uniform(sup) < ks_critical_1pct(n));
        // keeping the full power with one exemption is visibly biased
        let biased: Vec<f64> = (0..n).map(|i| (0..8).filter(|&c| c != PHASE_INDEX).map(|c| j.entries[(i, c)].powi(8)).fold(0.0, f64::max)).collect();
        assert!(ks_uniform(biased) > ks_critical_1pct(n));
    }

    #[test]
    fn gain_drifts_both_ways() {
        let plan = SamplingPlan { n_samples: 400, ..Default::default() };
        let ks = plan.fault_vectors(3).unwrap();
        let up = ks.iter().filter(|k| k.0[GAIN_INDEX] > 0.5).count();
        assert!(up > 150 && up < 250, "{up}");
        assert!(ks.iter().all(|k| k.max_deviation() <= 1.0));
    }

    #[test]
    fn restricted_plan_stays_near_nominal() {
        let plan = SamplingPlan { n_samples: 200, restrict: 0.3, ..Default::default() };
        let ks = plan.fault_vectors(4).unwrap();
        assert!(ks.iter().all(|k| k.max_deviation() <= 0.3 + 1e-12));
        assert!(ks.iter().any(|k| k.0[PHASE_INDEX] > 0.9));
    }

    #[test]
    fn small_dataset_shape_and_round_trip() {
        let cmd = crate::sim::chirp_command(0.02, 5e-3, 0.0, 15.0, 20000.0).unwrap();
        let params = ActuatorParams::default();
        let plan = SamplingPlan { n_samples: 10, ..Default::default() };
        let mut faults = plan.fault_vectors(5).unwrap();
        faults[0] = FaultVector::NOMINAL;
        let assessor = |k: &FaultVector| Ok(HealthLabel::from_sign(0.5 - k.max_deviation()));
        let ds = build_dataset(&faults, &cmd, &params, &assessor, 5, "h").unwrap();
        assert_eq!(ds.y.ncols(), 10);
        assert_eq!(ds.y.nrows(), cmd.len());
        assert_eq!(ds.phi[0], HealthLabel::Healthy);
        let dir = tempfile::tempdir().unwrap();
        ds.save(dir.path()).unwrap();
        assert_eq!(SnapshotDataset::load(dir.path()).unwrap(), ds);
    }

    #[test]
    fn failed_rows_are_dropped() {
        let cmd = crate::sim::chirp_command(0.01, 5e-3, 0.0, 15.0, 20000.0).unwrap();
        let params = ActuatorParams::default();
        let mut faults = vec![FaultVector::NOMINAL; 3];
        faults[1].0[0] = 0.7;
        let picky = |k: &FaultVector| {
            if k.0[0] > 0.5 {
                Err(PhmError::Undefined("stub".into()))
            } else {
                Ok(HealthLabel::Healthy)
            }
        };
        let ds = build_dataset(&faults, &cmd, &params, &picky, 1, "h").unwrap();
        assert_eq!(ds.manifest.dropped, vec![1]);
        assert_eq!(ds.n_samples(), 2);
        let always_bad = |_: &FaultVector| Err(PhmError::Undefined("stub".into()));
        assert!(build_dataset(&faults, &cmd, &params, &always_bad, 1, "h").is_err());
    }

    proptest! {
        #[test]
        fn rescale_preserves_column_order(seed in 0u64..1000) {
            let j = latin_hypercube(30, 8, seed).unwrap();
            let k = importance_rescale(&j, &[6]).unwrap();
            for c in 0..8 {
                for a in 0..30 {
                    for b in 0..30 {
                        if j.entries[(a, c)] < j.entries[(b, c)] {
                            prop_assert!(k.entries[(a, c)] <= k.entries[(b, c)]);
                        }
                    }
                }
            }
        }

        #[test]
        fn every_column_is_stratified(n in 2usize..60, seed in 0u64..100) {
            let d = latin_hypercube(n, 3, seed).unwrap();
            for c in 0..3 {
                let mut bins: Vec<usize> = d.entries.column(c).iter().map(|v| (v * n as f64).floor() as usize).collect();
                bins.sort_unstable();
                prop_assert_eq!(bins, (0..n).collect::<Vec<_>>());
            }
        }
    }
}
