//! Evaluation suites comparing a power-allocation policy against single-run
//! WMMSE, plus the feature-correlation metric.

mod report;
mod stats;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use report::{curve_csv, short_digest, CurvePoint, ExperimentReport, InstanceResult, ReportSummary};
pub use stats::{corr_metric, spearman};

use crate::channel::{mask_topology, rescale_channels, step_mobility, ChannelConfig, GeometryState, NetworkInstance, PathlossModel};
use crate::dataset::dataset_digest;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream_rng};
use crate::uwgnn::{train, TrainOptions, Uwgnn, UwgnnConfig};
use crate::wmmse::{solve_best_of, solve_full_power, sum_rate, SolveOptions};

/// Anything that maps an instance to a power vector.
pub trait PowerPolicy: Sync {
    fn allocate(&self, inst: &NetworkInstance) -> Result<Vec<f64>>;
}

impl PowerPolicy for Uwgnn {
    fn allocate(&self, inst: &NetworkInstance) -> Result<Vec<f64>> {
        Uwgnn::allocate(self, inst)
    }
}

/// Single-run WMMSE from full power; evaluating it yields ratio 1.
#[derive(Debug, Clone, Copy, Default)]
pub struct WmmsePolicy(pub SolveOptions);

impl PowerPolicy for WmmsePolicy {
    fn allocate(&self, inst: &NetworkInstance) -> Result<Vec<f64>> {
        Ok(solve_full_power(inst, &self.0)?.0)
    }
}

/// Settings shared by every suite.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalContext {
    pub config_digest: String,
    pub seed: u64,
    pub solve: SolveOptions,
    /// Randomly initialized WMMSE runs for the upper-bound column; 0 skips it.
    pub restarts: usize,
}

impl EvalContext {
    pub fn new(config_digest: impl Into<String>, seed: u64) -> Self {
        Self {
            config_digest: config_digest.into(),
            seed,
            solve: SolveOptions::default(),
            restarts: 0,
        }
    }
}

const SALT_SCALABILITY: u64 = 0x5ca1e;
const SALT_SHIFT: u64 = 0x5d1f7;
const SALT_TOPOLOGY: u64 = 0x70b0;
const SALT_MOBILITY: u64 = 0x30b1;
const SALT_RESTARTS: u64 = 0xbe57;

/// Per-instance model and baseline rates; the report's `n_users` is taken
/// from the first instance.
pub fn evaluate(name: &str, policy: &dyn PowerPolicy, test_set: &[NetworkInstance], ctx: &EvalContext) -> Result<ExperimentReport> {
    if test_set.is_empty() {
        return Err(Error::invalid("test set is empty"));
    }
    let restart_seed = derive_seed(ctx.seed, SALT_RESTARTS);
    let rows = test_set
        .par_iter()
        .enumerate()
        .map(|(id, inst)| {
            let model_rate = sum_rate(inst, &policy.allocate(inst)?)?;
            let wmmse_rate = sum_rate(inst, &solve_full_power(inst, &ctx.solve)?.0)?;
            let best_rate = match ctx.restarts {
                0 => None,
                r => Some(solve_best_of(inst, r, derive_seed(restart_seed, id as u64), &ctx.solve)?.1),
            };
            Ok(InstanceResult {
                id,
                model_rate,
                wmmse_rate,
                best_rate,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentReport::new(name, rows, test_set[0].n_users(), &ctx.config_digest, ctx.seed))
}

/// Model vs single-run WMMSE on a fixed test set, with the best-of-restarts
/// column when `ctx.restarts > 0`.
pub fn ratio_table(policy: &dyn PowerPolicy, test_set: &[NetworkInstance], ctx: &EvalContext) -> Result<ExperimentReport> {
    evaluate("ratio_table", policy, test_set, ctx)
}

/// Evaluates one fixed policy at several network sizes.
pub fn scalability_suite(
    policy: &dyn PowerPolicy,
    sizes: &[usize],
    count: usize,
    channel: &ChannelConfig,
    ctx: &EvalContext,
) -> Result<Vec<ExperimentReport>> {
    let base = derive_seed(ctx.seed, SALT_SCALABILITY);
    sizes
        .iter()
        .map(|&n| {
            let test = channel.generate_many(n, count, derive_seed(base, n as u64))?;
            evaluate(&format!("scalability_n{n}"), policy, &test, ctx)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelFamily {
    Rayleigh,
    Rician,
}

/// A test-time channel distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftSpec {
    pub family: ChannelFamily,
    pub mean: f64,
    pub std: f64,
    /// Scales the line-of-sight mean of the Rician family.
    pub los_strength: f64,
}

impl ShiftSpec {
    /// Rayleigh fading with per-component deviation `std`.
    pub fn rayleigh(std: f64) -> Self {
        Self {
            family: ChannelFamily::Rayleigh,
            mean: 0.0,
            std,
            los_strength: 0.0,
        }
    }

    pub fn rician(mean: f64, std: f64, los_strength: f64) -> Self {
        Self {
            family: ChannelFamily::Rician,
            mean,
            std,
            los_strength,
        }
    }

    /// The channel generator for this shift; noise, power and weights come from `base`.
    pub fn channel(&self, base: &ChannelConfig) -> ChannelConfig {
        let mean = match self.family {
            ChannelFamily::Rayleigh => 0.0,
            ChannelFamily::Rician => self.mean * self.los_strength,
        };
        ChannelConfig {
            mean,
            std: self.std,
            ..base.clone()
        }
    }
}

/// Evaluates a fixed policy on `count` instances drawn from a shifted distribution.
pub fn distribution_shift_suite(
    policy: &dyn PowerPolicy,
    shift: &ShiftSpec,
    n: usize,
    count: usize,
    base: &ChannelConfig,
    ctx: &EvalContext,
) -> Result<ExperimentReport> {
    let channel = shift.channel(base);
    channel.validate()?;
    let test = channel.generate_many(n, count, derive_seed(ctx.seed, SALT_SHIFT))?;
    let name = match shift.family {
        ChannelFamily::Rayleigh => "shift_rayleigh",
        ChannelFamily::Rician => "shift_rician",
    };
    evaluate(name, policy, &test, ctx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyDirection {
    DenseToSparse,
    SparseToDense,
}

impl TopologyDirection {
    /// Masking thresholds ordered in the direction of travel.
    pub fn default_grid(self) -> Vec<f64> {
        let mut grid = vec![-1e6, -1.0, -0.5, 0.0, 0.5, 1.0];
        if self == Self::SparseToDense {
            grid.reverse();
        }
        grid
    }
}

/// Masks every test instance at each threshold and evaluates the fixed policy.
///
/// Instance `k` uses the same mask scores at every threshold, so raising the
/// threshold only removes edges.
pub fn topology_suite(
    policy: &dyn PowerPolicy,
    direction: TopologyDirection,
    eta_grid: &[f64],
    test_set: &[NetworkInstance],
    ctx: &EvalContext,
) -> Result<Vec<ExperimentReport>> {
    let base = derive_seed(ctx.seed, SALT_TOPOLOGY);
    let tag = match direction {
        TopologyDirection::DenseToSparse => "dense_to_sparse",
        TopologyDirection::SparseToDense => "sparse_to_dense",
    };
    eta_grid
        .iter()
        .enumerate()
        .map(|(g, &eta)| {
            let masked: Vec<NetworkInstance> = test_set
                .iter()
                .enumerate()
                .map(|(k, inst)| mask_topology(inst, eta, derive_seed(base, k as u64)))
                .collect();
            evaluate(&format!("topology_{tag}_{g}"), policy, &masked, ctx)
        })
        .collect()
}

/// Per-step ratio curve at one receiver speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobilityCurve {
    pub speed: f64,
    /// `x` is the step index; step 0 is the initial geometry.
    pub points: Vec<CurvePoint>,
}

/// Moves receivers for `horizon` steps at each speed and re-evaluates the
/// fixed policy after every step.
///
/// Instance `k` starts from the same fading draw and geometry at every speed,
/// and the step-`t` displacement directions are shared across speeds.
pub fn mobility_suite(
    policy: &dyn PowerPolicy,
    speeds: &[f64],
    horizon: usize,
    n: usize,
    count: usize,
    channel: &ChannelConfig,
    ctx: &EvalContext,
) -> Result<Vec<MobilityCurve>> {
    let base = derive_seed(ctx.seed, SALT_MOBILITY);
    let fading = channel.generate_many(n, count, base)?;
    let model = PathlossModel::default();
    speeds
        .iter()
        .map(|&speed| {
            let per_instance: Vec<Vec<f64>> = fading
                .par_iter()
                .enumerate()
                .map(|(k, inst)| {
                    let inst_seed = derive_seed(base, k as u64 + 1);
                    let mut geo = GeometryState::sample(n, speed, &mut stream_rng(inst_seed, 0))?;
                    let mut cur = rescale_channels(inst, &geo, &geo, &model)?;
                    let mut ratios = Vec::with_capacity(horizon + 1);
                    for t in 0..=horizon {
                        if t > 0 {
                            (geo, cur) = step_mobility(&geo, &cur, derive_seed(inst_seed, t as u64))?;
                        }
                        let wmmse = sum_rate(&cur, &solve_full_power(&cur, &ctx.solve)?.0)?;
                        let model_rate = sum_rate(&cur, &policy.allocate(&cur)?)?;
                        ratios.push(if wmmse > 0.0 { model_rate / wmmse } else { f64::NAN });
                    }
                    Ok(ratios)
                })
                .collect::<Result<_>>()?;
            let points = (0..=horizon)
                .map(|t| {
                    let xs: Vec<f64> = per_instance.iter().map(|r| r[t]).filter(|r| !r.is_nan()).collect();
                    let (mean, std) = report::mean_std(&xs);
                    CurvePoint { x: t as f64, mean, std }
                })
                .collect();
            Ok(MobilityCurve { speed, points })
        })
        .collect()
}

/// Final test ratio as a function of training-set size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleComplexity {
    /// `x` is the training-set size; mean and spread are over repeats.
    pub points: Vec<CurvePoint>,
    /// Every `(size, ratio)` run.
    pub runs: Vec<(usize, f64)>,
    /// Rank correlation between size and ratio over all runs.
    pub spearman: f64,
    /// Digest of the test set every run was scored on.
    pub test_digest: String,
}

/// Trains a fresh model on the first `size` instances of `train_pool` for
/// every size and repeat; repeat `r` uses training seed `derive_seed(opts.seed, r)`.
pub fn sample_complexity_suite(
    cfg: &UwgnnConfig,
    train_sizes: &[usize],
    repeats: usize,
    train_pool: &[NetworkInstance],
    test_set: &[NetworkInstance],
    opts: &TrainOptions,
    ctx: &EvalContext,
) -> Result<SampleComplexity> {
    if repeats == 0 || train_sizes.is_empty() {
        return Err(Error::invalid("need at least one size and one repeat"));
    }
    if let Some(&s) = train_sizes.iter().find(|&&s| s == 0 || s > train_pool.len()) {
        return Err(Error::invalid(format!("training size {s} outside 1..={}", train_pool.len())));
    }
    let test_digest = dataset_digest(test_set)?;
    let eval_ctx = EvalContext {
        restarts: 0,
        ..ctx.clone()
    };
    let mut runs = Vec::new();
    let mut points = Vec::new();
    for &size in train_sizes {
        let mut ratios = Vec::with_capacity(repeats);
        for r in 0..repeats {
            let run_opts = TrainOptions {
                seed: derive_seed(opts.seed, r as u64),
                ..opts.clone()
            };
            let (model, _) = train(cfg.clone(), &train_pool[..size], &[], &run_opts)?;
            let report = evaluate("sample_complexity", &model, test_set, &eval_ctx)?;
            ratios.push(report.summary.mean_ratio);
            runs.push((size, report.summary.mean_ratio));
        }
        let (mean, std) = report::mean_std(&ratios);
        points.push(CurvePoint {
            x: size as f64,
            mean,
            std,
        });
    }
    let xs: Vec<f64> = runs.iter().map(|r| r.0 as f64).collect();
    let ys: Vec<f64> = runs.iter().map(|r| r.1).collect();
    let spearman = if runs.len() >= 2 { spearman(&xs, &ys)? } else { 0.0 };
    Ok(SampleComplexity {
        points,
        runs,
        spearman,
        test_digest,
    })
}
