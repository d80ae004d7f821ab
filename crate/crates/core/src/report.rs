//! Validation report: the data behind every figure and table of a run.
//!
//! Files written by [`RunReport::write`]:
//!
//! | file                        | content                                      |
//! |-----------------------------|----------------------------------------------|
//! | `validation_records.csv`    | one row per validation sample                |
//! | `hidden_sweep.csv`          | fault-vector error against hidden-layer size |
//! | `mode_sweep.csv`            | gappy coefficient error against retained modes |
//! | `fdi_per_parameter.csv`     | mean absolute error per fault component      |
//! | `confusion.csv`             | surrogate against full assessment            |
//! | `rul_near_nominal.csv`      | estimated and reference RUL bands            |
//! | `rul_error_distribution.csv`| sorted RUL errors and band widths            |
//! | `summary.json`              | aggregate statistics                         |
//! | `timings.json`              | wall-clock measurements                      |
//! | `report_manifest.json`      | hashes of every file except the timings      |

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::assess::{Assessor, Confusion, HealthLabel};
use crate::bundle::ModelBundle;
use crate::error::{PhmError, Result};
use crate::fault::{FaultVector, ECCENTRICITY_INDEX, FAULT_NAMES, N_FAULTS, PHASE_INDEX};
use crate::gappy::{coefficient_error, compress_signal, GappyOperator};
use crate::mlp::{fdi_error, StopCriteria};
use crate::pipeline::{full_assessor, projected_inputs, reference_rul, train_network, Datasets, StageTiming};
use crate::rul::rul_metrics;
use crate::seed;

pub const TIMINGS_FILE: &str = "timings.json";
pub const MANIFEST_FILE: &str = "report_manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub index: usize,
    pub k_actual: FaultVector,
    pub k_estimated: FaultVector,
    pub err_k: f64,
    pub err_alpha: Option<f64>,
    pub label_full: HealthLabel,
    /// Surrogate at the actual fault vector.
    pub label_surrogate: HealthLabel,
    /// Surrogate at the estimated fault vector.
    pub label_estimated: HealthLabel,
    pub rul: [f64; 3],
    pub censored: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RulRecord {
    pub index: usize,
    pub k_actual: FaultVector,
    pub k_estimated: FaultVector,
    pub estimate: [f64; 3],
    pub reference: Option<[f64; 3]>,
    pub reference_error: Option<String>,
    pub err_rul: Option<f64>,
    pub delta_rul: Option<f64>,
    /// Estimated median inside the reference 5–95 band.
    pub inside: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HiddenRow {
    pub n_hidden: usize,
    pub epochs: usize,
    pub train_mse: f64,
    pub mean_err_k: f64,
    pub median_err_k: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeRow {
    pub n_modes: usize,
    /// `None` when the gappy system was refused.
    pub condition: Option<f64>,
    pub median_err_alpha: Option<f64>,
    pub q25: Option<f64>,
    pub q75: Option<f64>,
    pub energy: Option<f64>,
    pub refusal: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub bundle_hash: String,
    pub n_validation: usize,
    pub n_modes: usize,
    pub energy_fraction: f64,
    pub median_err_alpha: f64,
    /// Sweep entry with the lowest median coefficient error.
    pub best_n_modes: Option<usize>,
    pub mode_sweep_interior_minimum: bool,
    pub mean_err_k: f64,
    pub median_err_k: f64,
    pub per_parameter: [f64; N_FAULTS],
    pub confusion: Confusion,
    pub surrogate_accuracy: f64,
    pub rul_samples: usize,
    pub rul_reference_failures: usize,
    pub rul_inside_fraction: f64,
    pub median_err_rul: Option<f64>,
    pub median_delta_rul: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub offline: Vec<StageTiming>,
    pub report: Vec<StageTiming>,
    /// Online compute per estimate, ms, in validation order.
    pub online_ms: Vec<f64>,
    pub online_ms_median: f64,
    pub online_ms_max: f64,
    /// Online compute per estimate on the near-nominal set, ms.
    pub online_near_ms: Vec<f64>,
    pub hidden_sweep_seconds: Vec<(usize, f64)>,
    pub full_assessment_seconds: f64,
    pub surrogate_assessment_seconds: f64,
    pub surrogate_speedup: f64,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub records: Vec<SampleRecord>,
    pub rul_records: Vec<RulRecord>,
    pub hidden_sweep: Vec<HiddenRow>,
    pub mode_sweep: Vec<ModeRow>,
    pub summary: Summary,
    pub timings: Timings,
}

pub fn median(v: &[f64]) -> Option<f64> {
    quantile(v, 0.5)
}

/// Linear-interpolated empirical quantile.
pub fn quantile(v: &[f64], q: f64) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(s[lo] + (pos - lo as f64) * (s[hi] - s[lo]))
}

/// Mean |k_est − k_act| per component, phase weighted by the actual
/// eccentricity.
pub fn per_parameter_error(pairs: &[(FaultVector, FaultVector)]) -> [f64; N_FAULTS] {
    let mut out = [0.0; N_FAULTS];
    for (est, act) in pairs {
        for i in 0..N_FAULTS {
            let w = if i == PHASE_INDEX { act.0[ECCENTRICITY_INDEX] } else { 1.0 };
            out[i] += w * (est.0[i] - act.0[i]).abs();
        }
    }
    let n = pairs.len().max(1) as f64;
    out.map(|v| v / n)
}

fn column(y: &nalgebra::DMatrix<f64>, j: usize) -> Vec<f64> {
    y.column(j).iter().copied().collect()
}

fn timed<T>(name: &str, t: &mut Vec<StageTiming>, f: impl FnOnce() -> Result<T>) -> Result<T> {
    crate::pipeline::stage(name, t, f)
}

/// Evaluates `bundle` on the validation and near-nominal sets.
pub fn run_report(bundle: &ModelBundle, data: &Datasets) -> Result<RunReport> {
    let cfg = &bundle.config;
    data.check_config(cfg)?;
    let n_m = cfg.compression.n_modes;
    let val = &data.validation;
    if val.n_samples() == 0 {
        return Err(PhmError::invalid("validation set is empty"));
    }
    let online = bundle.online()?;
    let full = full_assessor(cfg)?;
    let mut timings = Timings::default();
    let mut t = Vec::new();

    let (records, online_ms) = timed("validation", &mut t, || {
        let mut records = Vec::with_capacity(val.n_samples());
        let mut ms = Vec::with_capacity(val.n_samples());
        for j in 0..val.n_samples() {
            let y = column(&val.y, j);
            let y_hat = compress_signal(&y, &bundle.schedule)?;
            let est = online.estimate(&y_hat, cfg.rul.monte_carlo, seed::derive_indexed(cfg.seed, "online", j as u64))?;
            let full_alpha = bundle.basis.project_n(&y, n_m)?;
            let k = val.k[j];
            ms.push(est.compute_ms);
            records.push(SampleRecord {
                index: j,
                k_actual: k,
                k_estimated: est.k_estimated,
                err_k: fdi_error(&est.k_estimated, &k),
                err_alpha: coefficient_error(&est.alpha, full_alpha.as_slice()).ok(),
                label_full: val.phi[j],
                label_surrogate: online.surrogate.assess(&k)?,
                label_estimated: est.label,
                rul: est.rul.quantiles(),
                censored: est.rul.censored,
            });
        }
        Ok((records, ms))
    })?;

    let mode_sweep = timed("mode sweep", &mut t, || mode_sweep(bundle, data))?;
    let hidden_sweep = timed("hidden sweep", &mut t, || hidden_sweep(bundle, data, &mut timings.hidden_sweep_seconds))?;
    let (rul_records, online_near_ms) = timed("rul", &mut t, || rul_records(bundle, data, &full))?;
    timings.online_near_ms = online_near_ms;

    // one full assessment against many surrogate ones
    let probe: Vec<FaultVector> = val.k.iter().take(3).copied().collect();
    let t0 = Instant::now();
    for k in &probe {
        full.assess(k)?;
    }
    timings.full_assessment_seconds = t0.elapsed().as_secs_f64() / probe.len() as f64;
    let t0 = Instant::now();
    let mut calls = 0usize;
    let mut healthy = 0usize;
    while t0.elapsed().as_secs_f64() < 0.05 {
        for k in &val.k {
            healthy += online.surrogate.assess(k)?.is_healthy() as usize;
            calls += 1;
        }
    }
    std::hint::black_box(healthy);
    timings.surrogate_assessment_seconds = t0.elapsed().as_secs_f64() / calls as f64;
    timings.surrogate_speedup = timings.full_assessment_seconds / timings.surrogate_assessment_seconds;

    let truth: Vec<HealthLabel> = records.iter().map(|r| r.label_full).collect();
    let pred: Vec<HealthLabel> = records.iter().map(|r| r.label_surrogate).collect();
    let confusion = Confusion::from_labels(&truth, &pred);
    let pairs: Vec<(FaultVector, FaultVector)> = records.iter().map(|r| (r.k_estimated, r.k_actual)).collect();
    let err_k: Vec<f64> = records.iter().map(|r| r.err_k).collect();
    let err_alpha: Vec<f64> = records.iter().filter_map(|r| r.err_alpha).collect();
    let errs_rul: Vec<f64> = rul_records.iter().filter_map(|r| r.err_rul).collect();
    let deltas: Vec<f64> = rul_records.iter().filter_map(|r| r.delta_rul).collect();
    let best = mode_sweep
        .iter()
        .filter_map(|r| r.median_err_alpha.map(|e| (r.n_modes, e)))
        .min_by(|a, b| a.1.total_cmp(&b.1));
    let valid: Vec<usize> = mode_sweep.iter().filter(|r| r.median_err_alpha.is_some()).map(|r| r.n_modes).collect();
    let interior = best.is_some_and(|(n, _)| valid.first().is_some_and(|&f| n > f) && valid.last().is_some_and(|&l| n < l));

    let summary = Summary {
        bundle_hash: bundle.bundle_hash().to_string(),
        n_validation: records.len(),
        n_modes: n_m,
        energy_fraction: bundle.basis.energy_fraction(n_m)?,
        median_err_alpha: median(&err_alpha).unwrap_or(f64::NAN),
        best_n_modes: best.map(|b| b.0),
        mode_sweep_interior_minimum: interior,
        mean_err_k: err_k.iter().sum::<f64>() / err_k.len() as f64,
        median_err_k: median(&err_k).unwrap_or(f64::NAN),
        per_parameter: per_parameter_error(&pairs),
        confusion,
        surrogate_accuracy: confusion.accuracy(),
        rul_samples: rul_records.len(),
        rul_reference_failures: rul_records.iter().filter(|r| r.reference.is_none()).count(),
        rul_inside_fraction: rul_records.iter().filter(|r| r.inside).count() as f64 / rul_records.len().max(1) as f64,
        median_err_rul: median(&errs_rul),
        median_delta_rul: median(&deltas),
    };
    timings.online_ms_median = median(&online_ms).unwrap_or(0.0);
    timings.online_ms_max = online_ms.iter().cloned().fold(0.0, f64::max);
    timings.online_ms = online_ms;
    timings.report = t;
    Ok(RunReport { records, rul_records, hidden_sweep, mode_sweep, summary, timings })
}

fn mode_sweep(bundle: &ModelBundle, data: &Datasets) -> Result<Vec<ModeRow>> {
    let val = &data.validation;
    let rank = bundle.basis.rank();
    let top = bundle.config.report.mode_sweep.iter().copied().max().unwrap_or(0).min(rank);
    let full = bundle.basis.project_columns(&val.y, top)?;
    let mut rows = Vec::new();
    for &n in &bundle.config.report.mode_sweep {
        let energy = bundle.basis.energy_fraction(n).ok();
        let op = match GappyOperator::new(&bundle.basis, &bundle.schedule, n) {
            Ok(op) => op,
            Err(e) => {
                rows.push(ModeRow { n_modes: n, condition: None, median_err_alpha: None, q25: None, q75: None, energy, refusal: Some(e.to_string()) });
                continue;
            }
        };
        let mut errs = Vec::with_capacity(val.n_samples());
        for j in 0..val.n_samples() {
            let y_hat = compress_signal(&column(&val.y, j), &bundle.schedule)?;
            let g = op.reconstruct(&y_hat)?;
            let f: Vec<f64> = full.column(j).iter().take(n).copied().collect();
            if let Ok(e) = coefficient_error(g.as_slice(), &f) {
                errs.push(e);
            }
        }
        rows.push(ModeRow {
            n_modes: n,
            condition: Some(op.condition),
            median_err_alpha: median(&errs),
            q25: quantile(&errs, 0.25),
            q75: quantile(&errs, 0.75),
            energy,
            refusal: None,
        });
    }
    Ok(rows)
}

fn hidden_sweep(bundle: &ModelBundle, data: &Datasets, seconds: &mut Vec<(usize, f64)>) -> Result<Vec<HiddenRow>> {
    let cfg = &bundle.config;
    let n_m = cfg.compression.n_modes;
    let inputs = projected_inputs(&bundle.basis, &data.training, n_m)?;
    let stop = StopCriteria { max_epochs: cfg.report.hidden_sweep_epochs, ..cfg.mlp.stop.clone() };
    let val = &data.validation;
    let alphas: Vec<Vec<f64>> = (0..val.n_samples())
        .map(|j| Ok(bundle.gappy.reconstruct(&compress_signal(&column(&val.y, j), &bundle.schedule)?)?.iter().copied().collect()))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for &n_h in &cfg.report.hidden_sweep {
        let t0 = Instant::now();
        let net = train_network(&inputs, &data.training, n_h, &stop, seed::derive_indexed(cfg.seed, "mlp-sweep", n_h as u64))?;
        seconds.push((n_h, t0.elapsed().as_secs_f64()));
        let errs: Vec<f64> = alphas
            .iter()
            .zip(&val.k)
            .map(|(a, k)| Ok(fdi_error(&net.estimate(a)?, k)))
            .collect::<Result<_>>()?;
        let rec = net.record.as_ref().expect("trained network has a record");
        info!("n_h = {n_h}: mean err_k {:.4}", errs.iter().sum::<f64>() / errs.len() as f64);
        rows.push(HiddenRow {
            n_hidden: n_h,
            epochs: rec.epochs,
            train_mse: rec.mse,
            mean_err_k: errs.iter().sum::<f64>() / errs.len() as f64,
            median_err_k: median(&errs).unwrap_or(f64::NAN),
        });
    }
    Ok(rows)
}

fn rul_records(bundle: &ModelBundle, data: &Datasets, full: &dyn Assessor) -> Result<(Vec<RulRecord>, Vec<f64>)> {
    let cfg = &bundle.config;
    let online = bundle.online()?;
    let near = &data.near_nominal;
    let n = cfg.report.rul_samples.min(near.n_samples());
    let mut out = Vec::with_capacity(n);
    let mut ms = Vec::with_capacity(n);
    for j in 0..n {
        let k = near.k[j];
        let y_hat = compress_signal(&column(&near.y, j), &bundle.schedule)?;
        let est = online.estimate(&y_hat, cfg.rul.monte_carlo, seed::derive_indexed(cfg.seed, "online-near", j as u64))?;
        let reference = reference_rul(
            &k,
            bundle.damage(),
            &online.surrogate,
            full,
            cfg.rul.monte_carlo,
            seed::derive_indexed(cfg.seed, "rul-reference", j as u64),
        );
        ms.push(est.compute_ms);
        let q = est.rul.quantiles();
        let rec = match reference {
            Ok(r) => {
                let metrics = rul_metrics(&est.rul, &r).ok();
                RulRecord {
                    index: j,
                    k_actual: k,
                    k_estimated: est.k_estimated,
                    estimate: q,
                    reference: Some(r.quantiles()),
                    reference_error: None,
                    err_rul: metrics.map(|m| m.0),
                    delta_rul: metrics.map(|m| m.1),
                    inside: {
                        let m = est.rul.censored_median(bundle.damage().cap);
                        r.rul_5 <= m && m <= r.rul_95
                    },
                }
            }
            Err(e) => {
                warn!("near-nominal sample {j}: no reference ({e})");
                RulRecord {
                    index: j,
                    k_actual: k,
                    k_estimated: est.k_estimated,
                    estimate: q,
                    reference: None,
                    reference_error: Some(e.to_string()),
                    err_rul: None,
                    delta_rul: None,
                    inside: false,
                }
            }
        };
        out.push(rec);
    }
    Ok((out, ms))
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

fn label(l: HealthLabel) -> &'static str {
    match l {
        HealthLabel::Healthy => "healthy",
        HealthLabel::Faulty => "faulty",
    }
}

impl RunReport {
    /// Deterministic files, by name.
    pub fn files(&self) -> Result<BTreeMap<&'static str, String>> {
        let mut f = BTreeMap::new();
        let ks = |p: &str| FAULT_NAMES.iter().map(|n| format!("{p}_{n}")).collect::<Vec<_>>().join(",");

        let mut s = format!("index,{},{},err_k,err_alpha,label_full,label_surrogate,label_estimated,rul_5,rul_50,rul_95,censored\n", ks("actual"), ks("estimated"));
        for r in &self.records {
            let join = |k: &FaultVector| k.0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
            writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.index,
                join(&r.k_actual),
                join(&r.k_estimated),
                r.err_k,
                opt(r.err_alpha),
                label(r.label_full),
                label(r.label_surrogate),
                label(r.label_estimated),
                r.rul[0],
                r.rul[1],
                r.rul[2],
                r.censored
            )
            .expect("string write");
        }
        f.insert("validation_records.csv", s);

        let mut s = String::from("n_hidden,epochs,train_mse,mean_err_k,median_err_k\n");
        for r in &self.hidden_sweep {
            writeln!(s, "{},{},{},{},{}", r.n_hidden, r.epochs, r.train_mse, r.mean_err_k, r.median_err_k).expect("string write");
        }
        f.insert("hidden_sweep.csv", s);

        let mut s = String::from("n_modes,status,condition,median_err_alpha,q25,q75,energy\n");
        for r in &self.mode_sweep {
            let status = if r.refusal.is_some() { "refused" } else { "ok" };
            writeln!(s, "{},{status},{},{},{},{},{}", r.n_modes, opt(r.condition), opt(r.median_err_alpha), opt(r.q25), opt(r.q75), opt(r.energy))
                .expect("string write");
        }
        f.insert("mode_sweep.csv", s);

        let mut s = String::from("index,parameter,mean_abs_error\n");
        for (i, e) in self.summary.per_parameter.iter().enumerate() {
            writeln!(s, "{},{},{e}", i + 1, FAULT_NAMES[i]).expect("string write");
        }
        f.insert("fdi_per_parameter.csv", s);
        f.insert("confusion.csv", self.summary.confusion.to_csv());

        let mut s = format!("index,{},est_5,est_50,est_95,ref_5,ref_50,ref_95,err_rul,delta_rul,inside,reference_error\n", ks("actual"));
        for r in &self.rul_records {
            let rf = r.reference.map_or(",,".to_string(), |q| format!("{},{},{}", q[0], q[1], q[2]));
            let k = r.k_actual.0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
            let err = r.reference_error.as_deref().unwrap_or("").replace([',', '\n'], ";");
            writeln!(
                s,
                "{},{k},{},{},{},{rf},{},{},{},{err}",
                r.index,
                r.estimate[0],
                r.estimate[1],
                r.estimate[2],
                opt(r.err_rul),
                opt(r.delta_rul),
                r.inside
            )
            .expect("string write");
        }
        f.insert("rul_near_nominal.csv", s);

        let mut errs: Vec<f64> = self.rul_records.iter().filter_map(|r| r.err_rul).collect();
        let mut deltas: Vec<f64> = self.rul_records.iter().filter_map(|r| r.delta_rul).collect();
        errs.sort_by(f64::total_cmp);
        deltas.sort_by(f64::total_cmp);
        let mut s = String::from("rank,cdf,err_rul,delta_rul\n");
        for (i, (e, d)) in errs.iter().zip(&deltas).enumerate() {
            writeln!(s, "{},{},{e},{d}", i + 1, (i + 1) as f64 / errs.len() as f64).expect("string write");
        }
        f.insert("rul_error_distribution.csv", s);

        f.insert("summary.json", serde_json::to_string_pretty(&self.summary)? + "\n");
        Ok(f)
    }

    /// SHA-256 over the deterministic files.
    pub fn hash(&self) -> Result<String> {
        let mut h = Sha256::new();
        for (name, body) in self.files()? {
            h.update(name.as_bytes());
            h.update([0]);
            h.update(Sha256::digest(body.as_bytes()));
        }
        Ok(hex::encode(h.finalize()))
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<String> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let files = self.files()?;
        let mut listing = BTreeMap::new();
        for (name, body) in &files {
            std::fs::write(dir.join(name), body)?;
            listing.insert(name.to_string(), hex::encode(Sha256::digest(body.as_bytes())));
        }
        let hash = self.hash()?;
        let manifest = serde_json::json!({ "files": listing, "report_hash": hash });
        std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)? + "\n")?;
        std::fs::write(dir.join(TIMINGS_FILE), serde_json::to_string_pretty(&self.timings)? + "\n")?;
        Ok(hash)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(median(&v), Some(2.5));
        assert_eq!(quantile(&v, 0.0), Some(1.0));
        assert_eq!(quantile(&v, 1.0), Some(4.0));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn per_parameter_weights_phase() {
        let act = FaultVector([0.1, 0.0, 0.0, 0.0, 0.0, 0.5, 0.5, 0.5]);
        let est = FaultVector([0.2, 0.0, 0.0, 0.0, 0.0, 0.5, 0.9, 0.5]);
        let e = per_parameter_error(&[(est, act)]);
        assert!((e[0] - 0.1).abs() < 1e-15);
        assert!((e[PHASE_INDEX] - 0.2).abs() < 1e-15);
    }
}
