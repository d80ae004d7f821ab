//! `phm`: offline training, online estimation and reports.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde_json::json;

use phm_core::assess::Assessor;
use phm_core::bundle::{ModelBundle, OnlineModel};
use phm_core::config::PipelineConfig;
use phm_core::error::{PhmError, Result};
use phm_core::fault::{FaultVector, FAULT_NAMES};
use phm_core::gappy::CompressedSignal;
use phm_core::matrix_io;
use phm_core::nalgebra::DMatrix;
use phm_core::pipeline::{full_assessor, generate_dataset, run_offline, DatasetKind, Datasets};
use phm_core::report::run_report;
use phm_core::rul::propagate;
use phm_core::seed;
use phm_core::sim::{simulate_response, Tier};

#[derive(Parser)]
#[command(name = "phm", version, about = "Actuator fault identification and remaining useful life")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Pipeline configuration (TOML). Defaults are used when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self, n_s: Option<usize>) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::with_samples(self.seed.unwrap_or(0), n_s.unwrap_or(1000)),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(n) = n_s {
            cfg.training.n_samples = n;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum SetArg {
    Training,
    Validation,
    NearNominal,
    All,
}

#[derive(Args)]
struct SignalArgs {
    /// Full-length acquisition: binary matrix file or CSV with one value per row.
    #[arg(long, conflicts_with_all = ["compressed", "simulate"])]
    signal: Option<PathBuf>,
    /// Compressed samples in wire form.
    #[arg(long, conflicts_with = "simulate")]
    compressed: Option<PathBuf>,
    /// Simulate the acquisition for this fault vector, e.g. "0.1,0,0,0,0,0,0.5,0.5".
    #[arg(long)]
    simulate: Option<String>,
    /// Noise seed of the simulated acquisition.
    #[arg(long, default_value_t = 1)]
    noise_seed: u64,
    /// Monte-Carlo propagations; the bundle's setting when absent.
    #[arg(long)]
    n_mc: Option<usize>,
    /// Seed of the RUL noise streams.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Sample, simulate and label snapshot datasets.
    Gen {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Training sample count; overrides the configuration.
        #[arg(long = "n-s")]
        n_s: Option<usize>,
        #[arg(long, value_enum, default_value_t = SetArg::All)]
        set: SetArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the model bundle.
    Offline {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Dataset directory written by `gen`; generated on the fly when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Bundle directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate faults and RUL from one acquisition.
    Online {
        #[arg(long)]
        bundle: PathBuf,
        #[command(flatten)]
        signal: SignalArgs,
    },
    /// Assess one fault vector.
    Assess {
        /// Comma-separated fault vector.
        #[arg(long)]
        k: String,
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Use the bundle's SVM surrogate instead of the full assessment.
        #[arg(long)]
        bundle: Option<PathBuf>,
    },
    /// RUL from one acquisition, optionally dumping the mean trajectory.
    Rul {
        #[arg(long)]
        bundle: PathBuf,
        #[command(flatten)]
        signal: SignalArgs,
        /// CSV file for the noise-free trajectory from the estimated state.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Evaluate a bundle on generated datasets and write the report files.
    Report {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_k(s: &str) -> Result<FaultVector> {
    let v: std::result::Result<Vec<f64>, _> = s.split(',').map(|x| x.trim().parse::<f64>()).collect();
    let v = v.map_err(|e| PhmError::InvalidArgument(format!("fault vector `{s}`: {e}")))?;
    FaultVector::from_slice(&v)
}

fn read_signal(path: &Path) -> Result<Vec<f64>> {
    let m = if path.extension().is_some_and(|e| e == "csv") {
        matrix_io::read_csv(path)?
    } else {
        matrix_io::read_matrix(path)?
    };
    if m.ncols() != 1 && m.nrows() != 1 {
        return Err(PhmError::Format(format!("signal must be a vector, got {}×{}", m.nrows(), m.ncols())));
    }
    Ok(m.as_slice().to_vec())
}

fn acquire(model: &OnlineModel, a: &SignalArgs) -> Result<CompressedSignal> {
    if let Some(p) = &a.compressed {
        return CompressedSignal::from_bytes(&std::fs::read(p)?);
    }
    let y = if let Some(p) = &a.signal {
        read_signal(p)?
    } else if let Some(k) = &a.simulate {
        let cfg = &model.config;
        simulate_response(&parse_k(k)?, &cfg.command.profile()?, &cfg.actuator, Tier::Truth, Some(a.noise_seed))?.y
    } else {
        return Err(PhmError::InvalidArgument("one of --signal, --compressed or --simulate is required".into()));
    };
    if y.len() != model.schedule.n_e {
        return Err(PhmError::InvalidArgument(format!("signal has {} samples, bundle expects {}", y.len(), model.schedule.n_e)));
    }
    model.compress(&y)
}

fn k_json(k: &FaultVector) -> serde_json::Value {
    FAULT_NAMES.iter().zip(k.0).map(|(n, v)| (n.to_string(), json!(v))).collect::<serde_json::Map<_, _>>().into()
}

fn print(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json value serializes"));
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen { cfg, n_s, set, out } => {
            let cfg = cfg.load(n_s)?;
            let kinds: Vec<DatasetKind> = match set {
                SetArg::Training => vec![DatasetKind::Training],
                SetArg::Validation => vec![DatasetKind::Validation],
                SetArg::NearNominal => vec![DatasetKind::NearNominal],
                SetArg::All => DatasetKind::ALL.to_vec(),
            };
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("config.toml"), cfg.to_toml())?;
            let mut summary = serde_json::Map::new();
            for kind in kinds {
                let ds = generate_dataset(&cfg, kind)?;
                ds.save(&out.join(kind.name()))?;
                info!("{}: {} rows, {:.1}% healthy", kind.name(), ds.n_samples(), 100.0 * ds.healthy_fraction());
                summary.insert(
                    kind.name().into(),
                    json!({ "n_s": ds.n_samples(), "n_e": ds.manifest.n_e, "dropped": ds.manifest.dropped, "healthy_fraction": ds.healthy_fraction() }),
                );
            }
            print(&json!({ "config_hash": cfg.hash(), "sets": summary }));
        }
        Command::Offline { cfg, data, out } => {
            let cfg = cfg.load(None)?;
            let training = match &data {
                Some(d) => {
                    let ds = phm_core::doe::SnapshotDataset::load(&d.join(DatasetKind::Training.name()))?;
                    if ds.manifest.config_hash != cfg.hash() {
                        return Err(PhmError::HashMismatch { expected: cfg.hash(), found: ds.manifest.config_hash });
                    }
                    ds
                }
                None => generate_dataset(&cfg, DatasetKind::Training)?,
            };
            let partial = out.join("partial");
            let (bundle, timings) = run_offline(&cfg, &training, Some(&partial)).map_err(|e| {
                log::error!("partial artifacts kept in {}", partial.display());
                e
            })?;
            std::fs::remove_dir_all(&partial)?;
            bundle.save(&out)?;
            print(&json!({ "bundle_hash": bundle.bundle_hash(), "stages": timings }));
        }
        Command::Online { bundle, signal } => {
            let model = OnlineModel::load(&bundle)?;
            let y_hat = acquire(&model, &signal)?;
            let n_mc = signal.n_mc.unwrap_or(model.config.rul.monte_carlo);
            let est = model.estimate(&y_hat, n_mc, seed::derive(signal.seed, "rul"))?;
            print(&json!({
                "k_estimated": k_json(&est.k_estimated),
                "label": est.label,
                "score": est.score,
                "rul_5": est.rul.rul_5,
                "rul_50": est.rul.rul_50,
                "rul_95": est.rul.rul_95,
                "censored": est.rul.censored,
                "compute_ms": est.compute_ms,
                "bundle_hash": est.bundle_hash,
            }));
        }
        Command::Assess { k, cfg, bundle } => {
            let k = parse_k(&k)?;
            if let Some(b) = bundle {
                let model = OnlineModel::load(&b)?;
                print(&json!({ "label": model.surrogate.assess(&k)?, "score": model.surrogate.score(&k) }));
            } else {
                let a = full_assessor(&cfg.load(None)?)?.assess_full(&k)?;
                let m = &a.margins;
                print(&json!({
                    "label": a.label,
                    "gain_margin_db": m.gain_margin,
                    "phase_margin_deg": m.phase_margin,
                    "cutoff_hz": m.cutoff,
                    "cutoff_clipped": m.cutoff_clipped,
                }));
            }
        }
        Command::Rul { bundle, signal, trajectory } => {
            let model = OnlineModel::load(&bundle)?;
            let y_hat = acquire(&model, &signal)?;
            let n_mc = signal.n_mc.unwrap_or(model.config.rul.monte_carlo);
            let est = model.estimate(&y_hat, n_mc, seed::derive(signal.seed, "rul"))?;
            if let Some(path) = trajectory {
                let p = propagate(&est.k_estimated, model.damage(), &model.surrogate, None, true)?;
                let dt = model.damage().dt;
                let m = trajectory_rows(&p.trajectory, dt);
                let header: Vec<&str> = std::iter::once("hours").chain(FAULT_NAMES).collect();
                matrix_io::write_csv(&path, Some(&header), &m)?;
            }
            print(&json!({
                "rul_5": est.rul.rul_5,
                "rul_50": est.rul.rul_50,
                "rul_95": est.rul.rul_95,
                "k_estimated": k_json(&est.k_estimated),
                "censored": est.rul.censored,
            }));
        }
        Command::Report { bundle, data, out } => {
            let bundle = ModelBundle::load(&bundle)?;
            let data = Datasets::load(&data)?;
            let report = run_report(&bundle, &data)?;
            let hash = report.write(&out)?;
            let s = &report.summary;
            print(&json!({
                "report_hash": hash,
                "median_err_alpha": s.median_err_alpha,
                "best_n_modes": s.best_n_modes,
                "mean_err_k": s.mean_err_k,
                "per_parameter": s.per_parameter,
                "surrogate_accuracy": s.surrogate_accuracy,
                "rul_inside_fraction": s.rul_inside_fraction,
                "median_err_rul": s.median_err_rul,
                "median_delta_rul": s.median_delta_rul,
                "online_ms_median": report.timings.online_ms_median,
            }));
        }
    }
    Ok(())
}

/// Trajectory rows of (hours, k1..k8).
fn trajectory_rows(traj: &[FaultVector], dt: f64) -> DMatrix<f64> {
    DMatrix::from_fn(traj.len(), 9, |r, c| if c == 0 { r as f64 * dt } else { traj[r].0[c - 1] })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
