use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::model::full_power;
use super::{Uwgnn, UwgnnConfig};
use crate::channel::{GraphSample, NetworkInstance};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::nn::{AdamState, Gradients, ParamSet};
use crate::rng::{derive_seed, stream_rng};
use crate::wmmse::{solve_full_power, sum_rate, SolveOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Seeds initialization (stream 1) and shuffling (stream 2).
    pub seed: u64,
    /// Solver settings for the validation baseline.
    pub solve: SolveOptions,
    /// Return the weights from the epoch with the best validation ratio
    /// instead of the last epoch. Ignored without a validation set.
    pub keep_best: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 64,
            lr: 1e-3,
            seed: 0,
            solve: SolveOptions::default(),
            keep_best: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub epoch: usize,
    /// Mean minibatch loss over the epoch.
    pub train_loss: f64,
    /// Mean model/WMMSE sum-rate ratio on the validation set after the epoch.
    pub val_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingCurve {
    /// Validation ratio of the untrained network.
    pub initial_val_ratio: f64,
    pub points: Vec<CurvePoint>,
    /// Epoch whose weights were returned (0 when no epoch ran).
    pub selected_epoch: usize,
}

impl TrainingCurve {
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["epoch", "train_loss", "val_ratio"])?;
        for p in &self.points {
            w.write_record([p.epoch.to_string(), p.train_loss.to_string(), p.val_ratio.to_string()])?;
        }
        w.into_inner().map_err(|e| Error::invalid(e.to_string()))
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_csv()?)
    }
}

struct Prepared<'a> {
    inst: &'a NetworkInstance,
    graph: GraphSample,
    v0: Vec<f64>,
}

fn prepare<'a>(model: &Uwgnn, set: &'a [NetworkInstance]) -> Result<Vec<Prepared<'a>>> {
    set.par_iter()
        .map(|inst| {
            Ok(Prepared {
                inst,
                graph: model.graph(inst)?,
                v0: full_power(inst),
            })
        })
        .collect()
}

/// Mean ratio of model to single-run WMMSE sum rate over instances where the
/// baseline rate is positive.
fn val_ratio(model: &Uwgnn, val: &[Prepared], baseline: &[f64]) -> Result<f64> {
    let ratios: Vec<Option<f64>> = val
        .par_iter()
        .zip(baseline)
        .map(|(s, &b)| {
            let (p, _) = model.forward(&s.graph, &s.v0)?;
            let r = sum_rate(s.inst, &p)?;
            Ok((b > 0.0).then(|| r / b))
        })
        .collect::<Result<_>>()?;
    let kept: Vec<f64> = ratios.into_iter().flatten().collect();
    if kept.is_empty() {
        return Ok(f64::NAN);
    }
    Ok(kept.iter().sum::<f64>() / kept.len() as f64)
}

/// Minibatch Adam on the mean negative sum rate.
///
/// Per-instance gradients are computed in parallel and summed in batch order,
/// so the result does not depend on the thread count.
pub fn train(cfg: UwgnnConfig, train_set: &[NetworkInstance], val_set: &[NetworkInstance], opts: &TrainOptions) -> Result<(Uwgnn, TrainingCurve)> {
    if train_set.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if opts.batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    let mut model = Uwgnn::new(cfg, derive_seed(opts.seed, 1))?;
    let mut adam = AdamState::new(model.params(), opts.lr)?;
    let samples = prepare(&model, train_set)?;
    let val = prepare(&model, val_set)?;
    let baseline: Vec<f64> = val_set
        .par_iter()
        .map(|inst| sum_rate(inst, &solve_full_power(inst, &opts.solve)?.0))
        .collect::<Result<_>>()?;

    let initial_val_ratio = val_ratio(&model, &val, &baseline)?;
    let mut points = Vec::with_capacity(opts.epochs);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let shuffle_seed = derive_seed(opts.seed, 2);
    let mut best: Option<(f64, usize, ParamSet)> = None;
    for epoch in 0..opts.epochs {
        order.sort_unstable();
        order.shuffle(&mut stream_rng(shuffle_seed, epoch as u64));
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (b, chunk) in order.chunks(opts.batch_size).enumerate() {
            let per: Vec<(f64, Gradients)> = chunk
                .par_iter()
                .map(|&k| {
                    let s = &samples[k];
                    let mut g = model.params().zero_gradients();
                    let l = model.loss_and_grad(s.inst, &s.graph, &s.v0, &mut g)?;
                    Ok((l, g))
                })
                .collect::<Result<_>>()?;
            let mut grads = model.params().zero_gradients();
            let mut loss = 0.0;
            for (l, g) in &per {
                loss += l;
                grads.accumulate(g);
            }
            let scale = 1.0 / chunk.len() as f64;
            loss *= scale;
            grads.scale(scale);
            if !loss.is_finite() || grads.values.iter().flatten().any(|g| !g.is_finite()) {
                return Err(Error::Training { epoch, batch: b });
            }
            adam.step(model.params_mut(), &grads)?;
            loss_sum += loss;
            batches += 1;
        }
        let ratio = val_ratio(&model, &val, &baseline)?;
        points.push(CurvePoint {
            epoch: epoch + 1,
            train_loss: loss_sum / batches as f64,
            val_ratio: ratio,
        });
        if opts.keep_best && ratio.is_finite() && best.as_ref().is_none_or(|(r, _, _)| ratio > *r) {
            best = Some((ratio, epoch + 1, model.params().clone()));
        }
    }
    let mut selected_epoch = opts.epochs;
    if let Some((_, epoch, params)) = best {
        *model.params_mut() = params;
        selected_epoch = epoch;
    }
    Ok((
        model,
        TrainingCurve {
            initial_val_ratio,
            points,
            selected_epoch,
        },
    ))
}
