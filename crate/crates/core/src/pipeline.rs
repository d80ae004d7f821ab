//! Offline training lane and online estimation lane.

use std::path::Path;
use std::time::Instant;

use log::info;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::assess::{Assessor, FullAssessor, HealthLabel};
use crate::bundle::{ModelBundle, OnlineModel};
use crate::config::PipelineConfig;
use crate::doe::{build_dataset, SamplingPlan, SnapshotDataset};
use crate::error::{PhmError, Result};
use crate::fault::FaultVector;
use crate::gappy::{compress_signal, CompressedSignal};
use crate::matrix_io;
use crate::mlp::{train_mlp, MlpModel, StopCriteria};
use crate::pod::{compute_pod, PodBasis};
use crate::rul::{
    calibrate_estimate, deterministic_rul_search, displaced, estimate_rul_quantiles, radial_direction, DamageModel,
    RulEstimate, Z95,
};
use crate::seed;
use crate::sim::{simulate_response, Tier};
use crate::som::train_som;
use crate::svm::{train_svm, SurrogateAssessor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Runs one named stage, timing it and tagging its error with the name.
pub fn stage<T>(name: &str, timings: &mut Vec<StageTiming>, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let t = Instant::now();
    let out = f().map_err(|e| PhmError::Stage { stage: name.to_string(), source: Box::new(e) })?;
    let seconds = t.elapsed().as_secs_f64();
    info!("stage {name}: {seconds:.2} s");
    timings.push(StageTiming { stage: name.to_string(), seconds });
    Ok(out)
}

/// The three sample sets of a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetKind {
    Training,
    Validation,
    NearNominal,
}

impl DatasetKind {
    pub const ALL: [DatasetKind; 3] = [DatasetKind::Training, DatasetKind::Validation, DatasetKind::NearNominal];

    /// Seed stream and directory name.
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Training => "sampling",
            DatasetKind::Validation => "validation",
            DatasetKind::NearNominal => "near-nominal",
        }
    }

    pub fn plan(self, cfg: &PipelineConfig) -> &SamplingPlan {
        match self {
            DatasetKind::Training => &cfg.training,
            DatasetKind::Validation => &cfg.validation,
            DatasetKind::NearNominal => &cfg.near_nominal,
        }
    }
}

pub fn full_assessor(cfg: &PipelineConfig) -> Result<FullAssessor> {
    FullAssessor::new(cfg.actuator.clone(), cfg.requirements.clone(), cfg.bode.clone())
}

/// Noise-free truth response at the nominal condition: the POD centering.
pub fn reference_signal(cfg: &PipelineConfig) -> Result<Vec<f64>> {
    Ok(simulate_response(&FaultVector::NOMINAL, &cfg.command.profile()?, &cfg.actuator, Tier::Truth, None)?.y)
}

/// Samples, simulates and labels one set with the full assessment.
pub fn generate_dataset(cfg: &PipelineConfig, kind: DatasetKind) -> Result<SnapshotDataset> {
    let s = seed::derive(cfg.seed, kind.name());
    let faults = kind.plan(cfg).fault_vectors(s)?;
    build_dataset(&faults, &cfg.command.profile()?, &cfg.actuator, &full_assessor(cfg)?, s, &cfg.hash())
}

#[derive(Clone, Debug)]
pub struct Datasets {
    pub training: SnapshotDataset,
    pub validation: SnapshotDataset,
    pub near_nominal: SnapshotDataset,
}

impl Datasets {
    pub fn generate(cfg: &PipelineConfig) -> Result<Self> {
        let mut t = Vec::new();
        Ok(Datasets {
            training: stage("generate training", &mut t, || generate_dataset(cfg, DatasetKind::Training))?,
            validation: stage("generate validation", &mut t, || generate_dataset(cfg, DatasetKind::Validation))?,
            near_nominal: stage("generate near-nominal", &mut t, || generate_dataset(cfg, DatasetKind::NearNominal))?,
        })
    }

    pub fn get(&self, kind: DatasetKind) -> &SnapshotDataset {
        match kind {
            DatasetKind::Training => &self.training,
            DatasetKind::Validation => &self.validation,
            DatasetKind::NearNominal => &self.near_nominal,
        }
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        for kind in DatasetKind::ALL {
            self.get(kind).save(&dir.as_ref().join(kind.name()))?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let load = |kind: DatasetKind| {
            let d = dir.as_ref().join(kind.name());
            SnapshotDataset::load(&d).map_err(|e| PhmError::Format(format!("dataset {}: {e}", d.display())))
        };
        Ok(Datasets {
            training: load(DatasetKind::Training)?,
            validation: load(DatasetKind::Validation)?,
            near_nominal: load(DatasetKind::NearNominal)?,
        })
    }

    /// Fails unless every set was generated from `cfg`.
    pub fn check_config(&self, cfg: &PipelineConfig) -> Result<()> {
        let h = cfg.hash();
        for kind in DatasetKind::ALL {
            let found = &self.get(kind).manifest.config_hash;
            if *found != h {
                return Err(PhmError::HashMismatch { expected: h, found: format!("{} {found}", kind.name()) });
            }
        }
        Ok(())
    }
}

/// Full-projection coefficients of every snapshot, one row per sample.
pub fn projected_inputs(basis: &PodBasis, data: &SnapshotDataset, n_m: usize) -> Result<Vec<Vec<f64>>> {
    let a = basis.project_columns(&data.y, n_m)?;
    Ok(a.column_iter().map(|c| c.iter().copied().collect()).collect())
}

pub fn train_network(inputs: &[Vec<f64>], data: &SnapshotDataset, n_h: usize, stop: &StopCriteria, seed: u64) -> Result<MlpModel> {
    let targets: Vec<Vec<f64>> = data.k.iter().map(|k| k.0.to_vec()).collect();
    train_mlp(inputs, &targets, n_h, stop, seed)
}

fn persist(partial: Option<&Path>, name: &str, bytes: impl FnOnce() -> Result<Vec<u8>>) -> Result<()> {
    if let Some(dir) = partial {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(name), bytes()?)?;
    }
    Ok(())
}

/// pod → som → mlp → svm → bundle on an already generated training set.
/// Each finished stage is written to `partial` when given.
pub fn run_offline(cfg: &PipelineConfig, training: &SnapshotDataset, partial: Option<&Path>) -> Result<(ModelBundle, Vec<StageTiming>)> {
    cfg.validate()?;
    let mut t = Vec::new();
    let n_m = cfg.compression.n_modes;
    let cmd = cfg.command.profile()?;
    if training.y.nrows() != cmd.len() {
        return Err(PhmError::invalid(format!("training signals have {} samples, command has {}", training.y.nrows(), cmd.len())));
    }
    let basis = stage("pod", &mut t, || {
        let y0 = DVector::from_vec(reference_signal(cfg)?);
        let b = compute_pod(&training.y, &y0, &cfg.compression.pod)?.with_retained(n_m)?;
        info!("{n_m} modes hold {:.4} of the energy", b.energy_fraction(n_m)?);
        persist(partial, "pod_modes.bin", || Ok(matrix_io::encode(&b.modes)))?;
        Ok(b)
    })?;
    let schedule = stage("som", &mut t, || {
        let s = train_som(&basis, &cmd.times(), &cfg.compression.som, seed::derive(cfg.seed, "som"))?;
        persist(partial, "schedule.json", || Ok(serde_json::to_vec_pretty(&s)?))?;
        Ok(s)
    })?;
    let mlp = stage("mlp", &mut t, || {
        let inputs = projected_inputs(&basis, training, n_m)?;
        let m = train_network(&inputs, training, cfg.mlp.n_hidden, &cfg.mlp.stop, seed::derive(cfg.seed, "mlp"))?;
        persist(partial, "mlp.json", || Ok(serde_json::to_vec_pretty(&m.record)?))?;
        Ok(m)
    })?;
    let svm = stage("svm", &mut t, || {
        let x: Vec<Vec<f64>> = training.k.iter().map(|k| k.0.to_vec()).collect();
        let m = train_svm(&x, &training.phi, &cfg.svm)?;
        persist(partial, "svm.json", || Ok(serde_json::to_vec_pretty(&m)?))?;
        Ok(m)
    })?;
    let bundle = stage("bundle", &mut t, || ModelBundle::new(cfg.clone(), basis, schedule, mlp, svm))?;
    Ok((bundle, t))
}

/// Result of one online estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OnlineEstimate {
    pub k_estimated: FaultVector,
    pub alpha: Vec<f64>,
    pub label: HealthLabel,
    /// Surrogate decision value, positive is healthy.
    pub score: f64,
    pub rul: RulEstimate,
    /// Compute time from compressed samples to RUL, ms.
    pub compute_ms: f64,
    pub bundle_hash: String,
}

impl OnlineModel {
    /// gappy → network → surrogate → Monte-Carlo RUL.
    pub fn estimate(&self, y_hat: &CompressedSignal, n_mc: usize, seed: u64) -> Result<OnlineEstimate> {
        let t = Instant::now();
        let alpha = self.gappy.reconstruct(y_hat)?;
        let k = self.mlp.estimate(alpha.as_slice())?;
        let score = self.surrogate.score(&k);
        let label = self.surrogate.assess(&k)?;
        let rul = estimate_rul_quantiles(&k, self.damage(), &self.surrogate, n_mc, seed)?;
        let compute_ms = t.elapsed().as_secs_f64() * 1e3;
        Ok(OnlineEstimate {
            k_estimated: k,
            alpha: alpha.iter().copied().collect(),
            label,
            score,
            rul,
            compute_ms,
            bundle_hash: self.bundle_hash.clone(),
        })
    }

    /// Samples a raw full-length acquisition at the bundle's schedule.
    pub fn compress(&self, y: &[f64]) -> Result<CompressedSignal> {
        compress_signal(y, &self.schedule)
    }
}

/// Full-model reference band: the disturbances that reproduce the surrogate
/// Monte-Carlo quantiles at `k` are replayed with the full assessment.
pub fn reference_rul(
    k: &FaultVector,
    damage: &DamageModel,
    surrogate: &SurrogateAssessor,
    full: &dyn Assessor,
    n_mc: usize,
    seed: u64,
) -> Result<RulEstimate> {
    let mut est = estimate_rul_quantiles(k, damage, surrogate, n_mc, seed)?;
    calibrate_estimate(&mut est, k, damage, surrogate)?;
    let delta = est.delta.expect("calibrated");
    let dir = radial_direction(k, &damage.nominal);
    let det = DamageModel { noise: [0.0; crate::fault::N_FAULTS], ..damage.clone() };
    let mut r = [0.0; 3];
    let mut censored = 0;
    for (slot, d) in r.iter_mut().zip(delta) {
        let p = deterministic_rul_search(&displaced(k, &dir, d), &det, full)?;
        censored += p.censored as usize;
        *slot = p.rul;
    }
    r.sort_by(f64::total_cmp);
    Ok(RulEstimate {
        rul_5: r[0],
        rul_50: r[1],
        rul_95: r[2],
        mean: r[1],
        std: (r[2] - r[0]) / (2.0 * Z95),
        samples: 3,
        censored_runs: censored,
        censored: censored >= 2,
        delta: Some(delta),
    })
}
