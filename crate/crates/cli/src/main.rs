use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use uwgnn_core::channel::NetworkInstance;
use uwgnn_core::dataset::{load_dataset, save_dataset, DatasetHeader};
use uwgnn_core::experiments::{
    curve_csv, distribution_shift_suite, mobility_suite, ratio_table, sample_complexity_suite, scalability_suite,
    short_digest, topology_suite, CurvePoint, EvalContext, ExperimentReport, ShiftSpec, TopologyDirection,
};
use uwgnn_core::io::write_atomic;
use uwgnn_core::nn::CheckpointMeta;
use uwgnn_core::rng::derive_seed;
use uwgnn_core::runconfig::{load_config, RunConfig};
use uwgnn_core::uwgnn::{train, Uwgnn};
use uwgnn_core::wmmse::{solve_best_of, solve_full_power, sum_rate};

const SALT_TEST_SET: u64 = 0x7e57;

#[derive(Parser)]
#[command(name = "uwgnn", version, about = "D2D power allocation with WMMSE and an unrolled graph network")]
struct Cli {
    #[command(flatten)]
    shared: Shared,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Shared {
    /// Flat `key = value` run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Noise power in dB (0 dB is unit noise power).
    #[arg(long, global = true, allow_hyphen_values = true)]
    noise_db: Option<f64>,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Extra `key=value` overrides, applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a dataset of channel instances.
    Generate {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Solve every instance with WMMSE: single run and best of restarts.
    Baseline {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        restarts: Option<usize>,
    },
    /// Train the network; writes the checkpoint to --out and the curve next to it.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        /// Validation set (default: the first 256 training instances).
        #[arg(long)]
        val_dataset: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Run an evaluation suite against a checkpoint; writes reports into --out.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum)]
        suite: Suite,
        /// Test set (default: drawn from the configuration).
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Training pool for the sample-complexity suite.
        #[arg(long)]
        train_dataset: Option<PathBuf>,
        /// Network sizes (scalability) or training-set sizes (sample complexity).
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        speeds: Vec<f64>,
        #[arg(long, default_value_t = 10)]
        horizon: usize,
        #[arg(long, value_enum, default_value_t = Direction::DenseToSparse)]
        direction: Direction,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        etas: Vec<f64>,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    RatioTable,
    Scalability,
    DistributionShift,
    Topology,
    Mobility,
    SampleComplexity,
}

#[derive(Clone, Copy, ValueEnum)]
enum Direction {
    DenseToSparse,
    SparseToDense,
}

fn run_config(shared: &Shared) -> Result<RunConfig> {
    let mut cfg = match &shared.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    for kv in &shared.overrides {
        let (k, v) = kv.split_once('=').with_context(|| format!("--set expects KEY=VALUE, got {kv:?}"))?;
        cfg.set(k.trim(), v)?;
    }
    if let Some(seed) = shared.seed {
        cfg.seed = seed;
    }
    if let Some(db) = shared.noise_db {
        ensure!(db.is_finite(), "--noise-db must be finite");
        cfg.noise_db = db;
    }
    Ok(cfg)
}

fn out_path(shared: &Shared) -> Result<&Path> {
    shared.out.as_deref().context("--out is required for this command")
}

fn load(path: &Path) -> Result<Vec<NetworkInstance>> {
    Ok(load_dataset(path).with_context(|| format!("loading {}", path.display()))?.1)
}

fn cmd_generate(cfg: &mut RunConfig, shared: &Shared, n: Option<usize>, count: Option<usize>) -> Result<()> {
    if let Some(n) = n {
        cfg.n_users = n;
    }
    if let Some(c) = count {
        cfg.count = c;
    }
    cfg.validate()?;
    let samples = cfg.channel().generate_many(cfg.n_users, cfg.count, cfg.seed)?;
    let header = DatasetHeader {
        config_digest: Some(cfg.digest()),
        ..DatasetHeader::new(cfg.seed)
    };
    save_dataset(&samples, &header, out_path(shared)?)?;
    Ok(())
}

fn cmd_baseline(cfg: &RunConfig, shared: &Shared, dataset: &Path, restarts: Option<usize>) -> Result<()> {
    use rayon::prelude::*;
    let samples = load(dataset)?;
    let opts = cfg.solve_options();
    let restarts = restarts.unwrap_or(cfg.restarts).max(1);
    let base = derive_seed(cfg.seed, 1);
    let rows: Vec<(f64, f64)> = samples
        .par_iter()
        .enumerate()
        .map(|(k, inst)| {
            let single = sum_rate(inst, &solve_full_power(inst, &opts)?.0)?;
            let best = solve_best_of(inst, restarts, derive_seed(base, k as u64), &opts)?.1;
            Ok((single, best))
        })
        .collect::<uwgnn_core::Result<_>>()?;
    ensure!(rows.iter().all(|(a, b)| a.is_finite() && b.is_finite()), "non-finite baseline rate");
    let digest = cfg.digest();
    let mut text = String::from("id,wmmse_rate,best_rate,config_digest\n");
    for (k, (a, b)) in rows.iter().enumerate() {
        text.push_str(&format!("{k},{a},{b},{digest}\n"));
    }
    write_atomic(out_path(shared)?, text.as_bytes())?;
    Ok(())
}

fn curve_path(checkpoint: &Path, digest: &str) -> PathBuf {
    let stem = checkpoint.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    checkpoint.with_file_name(format!("{stem}.curve-{}.csv", short_digest(digest)))
}

fn cmd_train(cfg: &mut RunConfig, shared: &Shared, dataset: &Path, val: Option<&Path>, epochs: Option<usize>) -> Result<()> {
    if let Some(e) = epochs {
        cfg.epochs = e;
    }
    cfg.validate()?;
    let out = out_path(shared)?;
    let samples = load(dataset)?;
    ensure!(!samples.is_empty(), "training set is empty");
    let val_set = match val {
        Some(p) => load(p)?,
        None => samples[..samples.len().min(256)].to_vec(),
    };
    let (model, curve) = train(cfg.model(), &samples, &val_set, &cfg.train_options())?;
    ensure!(
        curve.points.iter().all(|p| p.train_loss.is_finite() && p.val_ratio.is_finite()),
        "training produced non-finite values"
    );
    let digest = cfg.digest();
    let meta = CheckpointMeta {
        seed: cfg.seed,
        config_digest: digest.clone(),
        epoch: curve.selected_epoch,
        param_count: 0,
        model: None,
    };
    model.save(out, meta)?;
    curve.save_csv(&curve_path(out, &digest))?;
    Ok(())
}

fn write_report(dir: &Path, report: &ExperimentReport) -> Result<()> {
    ensure!(report.is_finite(), "report {} has non-finite values", report.name);
    report.write(dir)?;
    Ok(())
}

fn write_curve(dir: &Path, name: &str, digest: &str, points: &[CurvePoint]) -> Result<()> {
    ensure!(
        points.iter().all(|p| p.x.is_finite() && p.mean.is_finite() && p.std.is_finite()),
        "curve {name} has non-finite values"
    );
    write_atomic(&dir.join(format!("{name}-{}.csv", short_digest(digest))), &curve_csv(points)?)?;
    Ok(())
}

fn test_set(cfg: &RunConfig, dataset: Option<&Path>) -> Result<Vec<NetworkInstance>> {
    match dataset {
        Some(p) => load(p),
        None => Ok(cfg
            .channel()
            .generate_many(cfg.n_users, cfg.test_count, derive_seed(cfg.seed, SALT_TEST_SET))?),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    cfg: &RunConfig,
    shared: &Shared,
    checkpoint: &Path,
    suite: Suite,
    dataset: Option<&Path>,
    train_dataset: Option<&Path>,
    sizes: &[usize],
    speeds: &[f64],
    horizon: usize,
    direction: Direction,
    etas: &[f64],
    repeats: usize,
) -> Result<()> {
    cfg.validate()?;
    let dir = out_path(shared)?;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let (model, _) = Uwgnn::load(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    let digest = cfg.digest();
    let ctx = EvalContext {
        solve: cfg.solve_options(),
        restarts: 0,
        ..EvalContext::new(digest.clone(), cfg.seed)
    };
    match suite {
        Suite::RatioTable => {
            let ctx = EvalContext {
                restarts: cfg.restarts,
                ..ctx
            };
            write_report(dir, &ratio_table(&model, &test_set(cfg, dataset)?, &ctx)?)?;
        }
        Suite::Scalability => {
            let sizes = if sizes.is_empty() { vec![10, 20, 30, 50] } else { sizes.to_vec() };
            for r in scalability_suite(&model, &sizes, cfg.test_count, &cfg.channel(), &ctx)? {
                write_report(dir, &r)?;
            }
        }
        Suite::DistributionShift => {
            let shift = match cfg.family {
                uwgnn_core::experiments::ChannelFamily::Rayleigh => ShiftSpec::rayleigh(cfg.std),
                uwgnn_core::experiments::ChannelFamily::Rician => ShiftSpec::rician(cfg.mean, cfg.std, cfg.los_strength),
            };
            let r = distribution_shift_suite(&model, &shift, cfg.n_users, cfg.test_count, &cfg.channel(), &ctx)?;
            write_report(dir, &r)?;
        }
        Suite::Topology => {
            let direction = match direction {
                Direction::DenseToSparse => TopologyDirection::DenseToSparse,
                Direction::SparseToDense => TopologyDirection::SparseToDense,
            };
            let grid = if etas.is_empty() { direction.default_grid() } else { etas.to_vec() };
            let reports = topology_suite(&model, direction, &grid, &test_set(cfg, dataset)?, &ctx)?;
            let mut points = Vec::with_capacity(grid.len());
            for (eta, r) in grid.iter().zip(&reports) {
                write_report(dir, r)?;
                points.push(CurvePoint {
                    x: *eta,
                    mean: r.summary.mean_ratio,
                    std: r.summary.std,
                });
            }
            write_curve(dir, "topology", &digest, &points)?;
        }
        Suite::Mobility => {
            let speeds = if speeds.is_empty() { vec![0.0, 50.0, 100.0, 200.0] } else { speeds.to_vec() };
            for c in mobility_suite(&model, &speeds, horizon, cfg.n_users, cfg.test_count, &cfg.channel(), &ctx)? {
                write_curve(dir, &format!("mobility_s{}", c.speed), &digest, &c.points)?;
            }
        }
        Suite::SampleComplexity => {
            let pool = load(train_dataset.context("--train-dataset is required for sample-complexity")?)?;
            let sizes = if sizes.is_empty() {
                [100, 1000, pool.len()].into_iter().filter(|&s| s <= pool.len()).collect()
            } else {
                sizes.to_vec()
            };
            let test = test_set(cfg, dataset)?;
            let result = sample_complexity_suite(model.config(), &sizes, repeats, &pool, &test, &cfg.train_options(), &ctx)?;
            write_curve(dir, "sample_complexity", &digest, &result.points)?;
            let summary = format!(
                "{{\n  \"name\": \"sample_complexity\",\n  \"spearman\": {},\n  \"test_digest\": \"{}\",\n  \"config_digest\": \"{}\",\n  \"seed\": {}\n}}\n",
                result.spearman, result.test_digest, digest, cfg.seed
            );
            ensure!(result.spearman.is_finite(), "non-finite rank correlation");
            write_atomic(&dir.join(format!("sample_complexity-{}.json", short_digest(&digest))), summary.as_bytes())?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.shared.threads {
        ensure!(t > 0, "--threads must be positive");
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    let mut cfg = run_config(&cli.shared)?;
    let shared = &cli.shared;
    match &cli.command {
        Command::Generate { n, count } => cmd_generate(&mut cfg, shared, *n, *count),
        Command::Baseline { dataset, restarts } => cmd_baseline(&cfg, shared, dataset, *restarts),
        Command::Train {
            dataset,
            val_dataset,
            epochs,
        } => cmd_train(&mut cfg, shared, dataset, val_dataset.as_deref(), *epochs),
        Command::Eval {
            checkpoint,
            suite,
            dataset,
            train_dataset,
            sizes,
            speeds,
            horizon,
            direction,
            etas,
            repeats,
        } => cmd_eval(
            &cfg,
            shared,
            checkpoint,
            *suite,
            dataset.as_deref(),
            train_dataset.as_deref(),
            sizes,
            speeds,
            *horizon,
            *direction,
            etas,
            *repeats,
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
