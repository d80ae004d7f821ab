//! Self-describing model bundle directory.
//!
//! Every artifact is a file in one directory. `manifest.json` lists the
//! SHA-256 of each file and a bundle hash over that list, so a bundle that
//! was edited, truncated or mixed with another run's files is refused.
//!
//! | file                | content                                   |
//! |---------------------|-------------------------------------------|
//! | `config.toml`       | full pipeline configuration               |
//! | `pod_y0.bin`        | centering reference, n_e × 1              |
//! | `pod_modes.bin`     | stored modes, n_e × rank                  |
//! | `pod_eigenvalues.bin` | eigenvalues, one column                 |
//! | `pod.json`          | total energy, retained modes, snapshots   |
//! | `schedule.json`     | sampling indices and SOM metadata         |
//! | `som_weights.bin`   | trained neurons                           |
//! | `gappy_v_hat.bin`   | modes at the sampling points, n_w × n_m   |
//! | `gappy_y0_hat.bin`  | reference at the sampling points          |
//! | `mlp_*.bin`         | network weights and input normalization   |
//! | `mlp.json`          | training record                           |
//! | `svm.json`          | support vectors, multipliers, bias        |
//!
//! The online loader only reads the compressed-side files, never the
//! full-length basis.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::error::{PhmError, Result};
use crate::gappy::GappyOperator;
use crate::matrix_io::{decode, encode};
use crate::mlp::{MlpModel, TrainingRecord};
use crate::pod::PodBasis;
use crate::rul::DamageModel;
use crate::seed;
use crate::som::SensorSchedule;
use crate::svm::{SurrogateAssessor, SvmModel};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";

const ONLINE_FILES: [&str; 10] = [
    "config.toml",
    "schedule.json",
    "gappy_v_hat.bin",
    "gappy_y0_hat.bin",
    "mlp_w_hidden.bin",
    "mlp_b_hidden.bin",
    "mlp_w_out.bin",
    "mlp_b_out.bin",
    "mlp_input_mean.bin",
    "mlp_input_scale.bin",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: u32,
    pub crate_version: String,
    pub seed: u64,
    /// Derived seed of every named stream used offline.
    pub streams: BTreeMap<String, u64>,
    pub config_hash: String,
    /// Unix seconds; from `SOURCE_DATE_EPOCH` when set. Not covered by the hash.
    pub created: u64,
    pub n_e: usize,
    pub n_m: usize,
    pub n_w: usize,
    pub n_h: usize,
    pub schedule_hash: String,
    /// File name to hex SHA-256 of its bytes.
    pub artifacts: BTreeMap<String, String>,
    pub bundle_hash: String,
}

fn sha_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Manifest {
    /// Hash over everything except `created` and `bundle_hash` itself.
    pub fn compute_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.format.to_le_bytes());
        h.update(self.crate_version.as_bytes());
        h.update(self.seed.to_le_bytes());
        for (name, s) in &self.streams {
            h.update(name.as_bytes());
            h.update(s.to_le_bytes());
        }
        h.update(self.config_hash.as_bytes());
        for n in [self.n_e, self.n_m, self.n_w, self.n_h] {
            h.update((n as u64).to_le_bytes());
        }
        h.update(self.schedule_hash.as_bytes());
        for (name, digest) in &self.artifacts {
            h.update(name.as_bytes());
            h.update([0]);
            h.update(digest.as_bytes());
        }
        hex::encode(h.finalize())
    }

    fn check(&self) -> Result<()> {
        if self.format != FORMAT_VERSION {
            return Err(PhmError::Format(format!("bundle format {} is not supported", self.format)));
        }
        let found = self.compute_hash();
        if found != self.bundle_hash {
            return Err(PhmError::HashMismatch { expected: self.bundle_hash.clone(), found });
        }
        Ok(())
    }
}

pub fn stream_seeds(master: u64) -> BTreeMap<String, u64> {
    ["sampling", "validation", "near-nominal", "som", "mlp", "rul"]
        .iter()
        .map(|n| (n.to_string(), seed::derive(master, n)))
        .collect()
}

fn creation_time() -> u64 {
    if let Some(t) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|s| s.parse().ok()) {
        return t;
    }
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PodMeta {
    total_energy: f64,
    n_m: usize,
    n_snapshots: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MlpMeta {
    n_in: usize,
    n_hidden: usize,
    n_out: usize,
    record: Option<TrainingRecord>,
}

fn column(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v)
}

fn json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("bundle metadata serializes");
    s.push('\n');
    s.into_bytes()
}

/// Everything the offline pipeline produces.
#[derive(Clone, Debug)]
pub struct ModelBundle {
    pub config: PipelineConfig,
    pub basis: PodBasis,
    pub schedule: SensorSchedule,
    pub gappy: GappyOperator,
    pub mlp: MlpModel,
    pub svm: SvmModel,
    pub manifest: Manifest,
}

impl ModelBundle {
    pub fn new(config: PipelineConfig, basis: PodBasis, schedule: SensorSchedule, mlp: MlpModel, svm: SvmModel) -> Result<Self> {
        let gappy = GappyOperator::new(&basis, &schedule, config.compression.n_modes)?;
        let manifest = Manifest {
            format: FORMAT_VERSION,
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            streams: stream_seeds(config.seed),
            config_hash: config.hash(),
            created: creation_time(),
            n_e: basis.n_e(),
            n_m: config.compression.n_modes,
            n_w: schedule.n_w(),
            n_h: mlp.b_hidden.len(),
            schedule_hash: schedule.hash_hex(),
            artifacts: BTreeMap::new(),
            bundle_hash: String::new(),
        };
        let mut b = ModelBundle { config, basis, schedule, gappy, mlp, svm, manifest };
        b.check_consistency()?;
        b.refresh_manifest();
        Ok(b)
    }

    pub fn damage(&self) -> &DamageModel {
        &self.config.rul.damage
    }

    pub fn bundle_hash(&self) -> &str {
        &self.manifest.bundle_hash
    }

    fn check_consistency(&self) -> Result<()> {
        let n_m = self.config.compression.n_modes;
        let bad = |msg: String| Err(PhmError::Format(msg));
        if self.schedule.n_e != self.basis.n_e() {
            return bad(format!("schedule grid {} vs basis length {}", self.schedule.n_e, self.basis.n_e()));
        }
        if self.gappy.schedule_hash != self.schedule.hash() || self.gappy.n_m() != n_m {
            return bad("gappy operator does not match the schedule".into());
        }
        if self.mlp.w_hidden.ncols() != n_m {
            return bad(format!("network takes {} inputs, bundle retains {n_m} modes", self.mlp.w_hidden.ncols()));
        }
        if self.svm.dim() != crate::fault::N_FAULTS {
            return bad(format!("svm has {} inputs", self.svm.dim()));
        }
        self.mlp.validate()
    }

    fn artifact_bytes(&self) -> BTreeMap<&'static str, Vec<u8>> {
        let b = &self.basis;
        let m = &self.mlp;
        let mut out = BTreeMap::new();
        out.insert("config.toml", self.config.to_toml().into_bytes());
        out.insert("pod_y0.bin", encode(&column(b.y0.as_slice())));
        out.insert("pod_modes.bin", encode(&b.modes));
        out.insert("pod_eigenvalues.bin", encode(&column(&b.eigenvalues)));
        out.insert("pod.json", json(&PodMeta { total_energy: b.total_energy, n_m: b.n_m, n_snapshots: b.n_snapshots }));
        out.insert("schedule.json", json(&self.schedule));
        out.insert("som_weights.bin", encode(&self.schedule.weights));
        out.insert("gappy_v_hat.bin", encode(&self.gappy.v_hat));
        out.insert("gappy_y0_hat.bin", encode(&column(self.gappy.y0_hat.as_slice())));
        out.insert("mlp_w_hidden.bin", encode(&m.w_hidden));
        out.insert("mlp_b_hidden.bin", encode(&column(m.b_hidden.as_slice())));
        out.insert("mlp_w_out.bin", encode(&m.w_out));
        out.insert("mlp_b_out.bin", encode(&column(m.b_out.as_slice())));
        out.insert("mlp_input_mean.bin", encode(&column(m.input_mean.as_slice())));
        out.insert("mlp_input_scale.bin", encode(&column(m.input_scale.as_slice())));
        out.insert(
            "mlp.json",
            json(&MlpMeta { n_in: m.w_hidden.ncols(), n_hidden: m.w_hidden.nrows(), n_out: m.w_out.nrows(), record: m.record.clone() }),
        );
        out.insert("svm.json", json(&self.svm));
        out
    }

    fn refresh_manifest(&mut self) {
        self.manifest.artifacts = self.artifact_bytes().iter().map(|(k, v)| (k.to_string(), sha_hex(v))).collect();
        self.manifest.bundle_hash = self.manifest.compute_hash();
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        for (name, bytes) in self.artifact_bytes() {
            std::fs::write(dir.join(name), bytes)?;
        }
        std::fs::write(dir.join(MANIFEST), json(&self.manifest))?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest = read_manifest(dir)?;
        let names: Vec<&str> = manifest.artifacts.keys().map(String::as_str).collect();
        let files = read_verified(dir, &manifest, &names)?;
        let get = |n: &str| -> Result<&[u8]> {
            files.get(n).map(Vec::as_slice).ok_or_else(|| PhmError::Format(format!("bundle lacks {n}")))
        };
        let vector = |n: &str| -> Result<DVector<f64>> { Ok(DVector::from_column_slice(decode(get(n)?)?.as_slice())) };

        let config = PipelineConfig::from_toml(std::str::from_utf8(get("config.toml")?).map_err(|e| PhmError::Format(e.to_string()))?)?;
        let meta: PodMeta = serde_json::from_slice(get("pod.json")?)?;
        let basis = PodBasis {
            y0: vector("pod_y0.bin")?,
            modes: decode(get("pod_modes.bin")?)?,
            eigenvalues: vector("pod_eigenvalues.bin")?.as_slice().to_vec(),
            total_energy: meta.total_energy,
            n_m: meta.n_m,
            n_snapshots: meta.n_snapshots,
        };
        let mut schedule: SensorSchedule = serde_json::from_slice(get("schedule.json")?)?;
        schedule.weights = decode(get("som_weights.bin")?)?;
        let (gappy, mlp) = online_parts(&files, &schedule)?;
        let svm: SvmModel = serde_json::from_slice(get("svm.json")?)?;
        let b = ModelBundle { config, basis, schedule, gappy, mlp, svm, manifest };
        b.check_consistency()?;
        Ok(b)
    }

    pub fn online(&self) -> Result<OnlineModel> {
        let schedule = SensorSchedule { weights: DMatrix::zeros(0, 0), ..self.schedule.clone() };
        OnlineModel::from_parts(
            self.config.clone(),
            schedule,
            self.gappy.clone(),
            self.mlp.clone(),
            self.svm.clone(),
            self.manifest.bundle_hash.clone(),
        )
    }
}

fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    let text = std::fs::read(&path).map_err(|e| PhmError::Format(format!("{}: {e}", path.display())))?;
    let manifest: Manifest = serde_json::from_slice(&text)?;
    manifest.check()?;
    Ok(manifest)
}

fn read_verified(dir: &Path, manifest: &Manifest, names: &[&str]) -> Result<BTreeMap<String, Vec<u8>>> {
    let mut out = BTreeMap::new();
    for &name in names {
        let expected = manifest.artifacts.get(name).ok_or_else(|| PhmError::Format(format!("manifest lacks {name}")))?;
        let bytes = std::fs::read(dir.join(name))?;
        let found = sha_hex(&bytes);
        if &found != expected {
            return Err(PhmError::HashMismatch { expected: format!("{name} {expected}"), found });
        }
        out.insert(name.to_string(), bytes);
    }
    Ok(out)
}

fn online_parts(files: &BTreeMap<String, Vec<u8>>, schedule: &SensorSchedule) -> Result<(GappyOperator, MlpModel)> {
    let get = |n: &str| -> Result<DMatrix<f64>> {
        decode(files.get(n).ok_or_else(|| PhmError::Format(format!("bundle lacks {n}")))?)
    };
    let vector = |n: &str| -> Result<DVector<f64>> { Ok(DVector::from_column_slice(get(n)?.as_slice())) };
    let gappy = GappyOperator::from_parts(get("gappy_v_hat.bin")?, vector("gappy_y0_hat.bin")?, schedule.hash())?;
    let record = match files.get("mlp.json") {
        Some(b) => serde_json::from_slice::<MlpMeta>(b)?.record,
        None => None,
    };
    let mlp = MlpModel {
        w_hidden: get("mlp_w_hidden.bin")?,
        b_hidden: vector("mlp_b_hidden.bin")?,
        w_out: get("mlp_w_out.bin")?,
        b_out: vector("mlp_b_out.bin")?,
        input_mean: vector("mlp_input_mean.bin")?,
        input_scale: vector("mlp_input_scale.bin")?,
        record,
    };
    mlp.validate()?;
    Ok((gappy, mlp))
}

/// The compressed-side subset of a bundle used by the online estimator.
#[derive(Clone, Debug)]
pub struct OnlineModel {
    pub config: PipelineConfig,
    /// Sampling indices only; the SOM neurons are not loaded.
    pub schedule: SensorSchedule,
    pub gappy: GappyOperator,
    pub mlp: MlpModel,
    pub surrogate: SurrogateAssessor,
    pub bundle_hash: String,
}

impl OnlineModel {
    pub fn from_parts(
        config: PipelineConfig,
        schedule: SensorSchedule,
        gappy: GappyOperator,
        mlp: MlpModel,
        svm: SvmModel,
        bundle_hash: String,
    ) -> Result<Self> {
        if gappy.schedule_hash != schedule.hash() {
            return Err(PhmError::Format("gappy operator does not match the schedule".into()));
        }
        if mlp.w_hidden.ncols() != gappy.n_m() {
            return Err(PhmError::Format(format!("network takes {} inputs, gappy recovers {}", mlp.w_hidden.ncols(), gappy.n_m())));
        }
        Ok(OnlineModel { config, schedule, gappy, mlp, surrogate: SurrogateAssessor::new(svm)?, bundle_hash })
    }

    /// Reads and verifies only the files the online path needs.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest = read_manifest(dir)?;
        let mut names = ONLINE_FILES.to_vec();
        names.push("svm.json");
        let files = read_verified(dir, &manifest, &names)?;
        let config = PipelineConfig::from_toml(
            std::str::from_utf8(&files["config.toml"]).map_err(|e| PhmError::Format(e.to_string()))?,
        )?;
        let schedule: SensorSchedule = serde_json::from_slice(&files["schedule.json"])?;
        if schedule.hash_hex() != manifest.schedule_hash {
            return Err(PhmError::HashMismatch { expected: manifest.schedule_hash.clone(), found: schedule.hash_hex() });
        }
        let (gappy, mlp) = online_parts(&files, &schedule)?;
        let svm: SvmModel = serde_json::from_slice(&files["svm.json"])?;
        Self::from_parts(config, schedule, gappy, mlp, svm, manifest.bundle_hash)
    }

    pub fn schedule_hash(&self) -> [u8; 16] {
        self.gappy.schedule_hash
    }

    pub fn damage(&self) -> &DamageModel {
        &self.config.rul.damage
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assess::HealthLabel;
    use crate::pod::{compute_pod, PodOptions};
    use crate::svm::{train_svm, SvmOptions};
    use rand::Rng;

    fn toy_bundle(seed: u64) -> ModelBundle {
        let mut rng = crate::seed::rng(seed, "toy");
        let y = DMatrix::from_fn(60, 12, |_, _| rng.random_range(-1.0..1.0));
        let basis = compute_pod(&y, &DVector::zeros(60), &PodOptions::default()).unwrap();
        let schedule = SensorSchedule::from_indices((0..60).step_by(6).collect(), 60).unwrap();
        let mut cfg = PipelineConfig::with_samples(seed, 12);
        cfg.compression.n_modes = 3;
        let mlp = MlpModel::init(3, 4, 8, seed).unwrap();
        let x: Vec<Vec<f64>> = (0..20).map(|_| (0..8).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        let labels: Vec<HealthLabel> = x.iter().map(|v| HealthLabel::from_sign(0.5 - v[0])).collect();
        let svm = train_svm(&x, &labels, &SvmOptions::default()).unwrap();
        ModelBundle::new(cfg, basis, schedule, mlp, svm).unwrap()
    }

    fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
        std::fs::read_dir(dir)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
            })
            .collect()
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let bundle = toy_bundle(1);
        bundle.save(a.path()).unwrap();
        let back = ModelBundle::load(a.path()).unwrap();
        back.save(b.path()).unwrap();
        assert_eq!(dir_bytes(a.path()), dir_bytes(b.path()));
        assert_eq!(back.bundle_hash(), bundle.bundle_hash());
        assert_eq!(back.mlp, bundle.mlp);
        assert_eq!(back.svm, bundle.svm);
    }

    #[test]
    fn same_inputs_same_hash() {
        assert_eq!(toy_bundle(2).bundle_hash(), toy_bundle(2).bundle_hash());
        assert_ne!(toy_bundle(2).bundle_hash(), toy_bundle(3).bundle_hash());
    }

    #[test]
    fn tampering_is_refused() {
        let d = tempfile::tempdir().unwrap();
        toy_bundle(4).save(d.path()).unwrap();
        let p = d.path().join("mlp_b_out.bin");
        let mut bytes = std::fs::read(&p).unwrap();
        *bytes.last_mut().unwrap() ^= 1;
        std::fs::write(&p, bytes).unwrap();
        assert!(matches!(ModelBundle::load(d.path()), Err(PhmError::HashMismatch { .. })));
        assert!(matches!(OnlineModel::load(d.path()), Err(PhmError::HashMismatch { .. })));

        let d = tempfile::tempdir().unwrap();
        toy_bundle(4).save(d.path()).unwrap();
        let p = d.path().join(MANIFEST);
        let text = std::fs::read_to_string(&p).unwrap().replace("\"n_h\": 4", "\"n_h\": 5");
        std::fs::write(&p, text).unwrap();
        assert!(matches!(ModelBundle::load(d.path()), Err(PhmError::HashMismatch { .. })));
    }

    #[test]
    fn online_subset_matches_full_load() {
        let d = tempfile::tempdir().unwrap();
        let bundle = toy_bundle(5);
        bundle.save(d.path()).unwrap();
        std::fs::remove_file(d.path().join("pod_modes.bin")).unwrap();
        let online = OnlineModel::load(d.path()).unwrap();
        assert_eq!(online.mlp, bundle.mlp);
        assert_eq!(online.gappy.v_hat, bundle.gappy.v_hat);
        assert_eq!(online.bundle_hash, bundle.manifest.bundle_hash);
        assert!(ModelBundle::load(d.path()).is_err());
    }

    #[test]
    fn mismatched_network_rejected() {
        let b = toy_bundle(6);
        let mlp = MlpModel::init(4, 4, 8, 1).unwrap();
        assert!(ModelBundle::new(b.config, b.basis, b.schedule, mlp, b.svm).is_err());
    }
}
