use jamloc_nn::{Graph, Mode, NnError, Sgd, SgdConfig};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::{loss_graph, LossKind};
use super::metrics::{MetricsReport, MetricsSummary};
use crate::dsp::features::{FeatureBundle, NormalizationSpec};
use crate::error::{invalid, Error, Result};
use crate::model::{Batch, DispNorm, ModelConfig, TrainedModel};
use crate::sigsim::derive_seed;

/// Metric that picks the retained checkpoint on the selection split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Lowest distance error.
    DeltaD,
    /// Highest class accuracy, falling back to Δd when no classifier exists.
    Accuracy,
}

impl Selection {
    /// Lower is better.
    fn score(self, r: &MetricsReport) -> f64 {
        match (self, r.accuracy_classes) {
            (Selection::Accuracy, Some(a)) => -a,
            _ => r.delta_d,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Weight of the displacement term.
    pub gamma: f64,
    pub base_lr: f64,
    pub weight_decay: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub n_seeds: usize,
    /// Epochs at which the learning rate is multiplied by `lr_decay_factor`;
    /// defaults to 60% and 85% of `epochs`.
    pub milestones: Option<Vec<usize>>,
    pub lr_decay_factor: f64,
    pub loss: LossKind,
    /// Global gradient-norm limit; `None` disables clipping.
    pub grad_clip: Option<f64>,
    /// Evaluate on the selection split every this many epochs (and after the last).
    pub eval_every: usize,
    pub select_by: Selection,
    /// Sweep grid for `gamma`.
    pub gammas: Vec<f64>,
    /// Sweep grid for dropout rates, crossed with the two placements.
    pub dropout_rates: Vec<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 1.0,
            base_lr: 1e-2,
            weight_decay: 5e-4,
            momentum: 0.9,
            batch_size: 64,
            epochs: 30,
            n_seeds: 3,
            milestones: None,
            lr_decay_factor: 0.1,
            loss: LossKind::Mse,
            grad_clip: Some(5.0),
            eval_every: 1,
            select_by: Selection::DeltaD,
            gammas: vec![1e-3, 1e-2, 0.1, 0.2, 1.0, 10.0],
            dropout_rates: vec![0.1, 0.3, 0.5],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) {
            return invalid("train.gamma must be positive");
        }
        if self.batch_size == 0 || self.epochs == 0 || self.n_seeds == 0 || self.eval_every == 0 {
            return invalid("batch_size, epochs, n_seeds and eval_every must be positive");
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return invalid("grad_clip must be positive");
            }
        }
        self.sgd().validate()?;
        Ok(())
    }

    pub fn milestones(&self) -> Vec<usize> {
        self.milestones.clone().unwrap_or_else(|| {
            let e = self.epochs as f64;
            vec![(0.6 * e).round() as usize, (0.85 * e).round() as usize]
        })
    }

    pub fn sgd(&self) -> SgdConfig {
        SgdConfig {
            learning_rate: self.base_lr,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            milestones: self.milestones(),
            lr_decay_factor: self.lr_decay_factor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub test: Option<MetricsReport>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the best epoch on the selection split.
    pub model: TrainedModel,
    pub report: MetricsReport,
    pub best_epoch: usize,
    pub history: Vec<EpochLog>,
}

pub fn evaluate(model: &TrainedModel, items: &[&FeatureBundle], batch_size: usize) -> Result<MetricsReport> {
    let preds = model.predict(items, batch_size)?;
    let labels: Vec<_> = items.iter().map(|b| b.label).collect();
    MetricsReport::compute(&preds, &labels)
}

fn diverged(e: Error, epoch: usize, step: usize) -> Error {
    match e {
        Error::Nn(NnError::NonFinite { .. }) => Error::Divergence { epoch, step, loss: f64::NAN },
        other => other,
    }
}

/// Trains one model. Normalization statistics come from `train` only;
/// `select` is evaluated periodically and the best checkpoint is kept.
pub fn train(model_cfg: &ModelConfig, train: &[FeatureBundle], select: &[&FeatureBundle], cfg: &TrainConfig, seed: u64) -> Result<TrainOutcome> {
    cfg.validate()?;
    model_cfg.validate()?;
    if select.is_empty() {
        return invalid("selection split is empty");
    }
    let norm = NormalizationSpec::fit(train)?;
    let disp_norm = DispNorm::fit(train);
    let mut model = TrainedModel::new(model_cfg.clone(), norm, disp_norm, derive_seed(seed, 1, 0))?;
    model.train_seed = Some(seed);
    let mut opt = Sgd::new(cfg.sgd())?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 2, 0));
    let inputs = model.net.inputs();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, jamloc_nn::ParamStore<f32>, MetricsReport)> = None;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for (step, idx) in order.chunks(cfg.batch_size).enumerate() {
            let items: Vec<&FeatureBundle> = idx.iter().map(|&i| &train[i]).collect();
            let batch = Batch::<f32>::build(&items, &model.norm, inputs)?;
            let (loss, mut grads) = {
                let mut g = Graph::new(&model.store);
                let run = (|| -> Result<_> {
                    let out = model.net.forward(&mut g, &batch, Mode::Train, &mut rng)?;
                    let l = loss_graph(&mut g, &out, &batch, &model.disp_norm, cfg.gamma, cfg.loss)?;
                    let v = g.value(l)[0] as f64;
                    Ok((v, g.backward(l)?))
                })();
                run.map_err(|e| diverged(e, epoch, step))?
            };
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, step, loss });
            }
            if let Some(c) = cfg.grad_clip {
                let norm = grads.squared_norm().sqrt();
                if !norm.is_finite() {
                    return Err(Error::Divergence { epoch, step, loss });
                }
                if norm > c {
                    grads.scale(c / norm);
                }
            }
            model.store.accumulate(&grads)?;
            opt.step(&mut model.store, epoch)?;
            loss_sum += loss * items.len() as f64;
            seen += items.len();
        }
        let train_loss = loss_sum / seen.max(1) as f64;
        let last = epoch + 1 == cfg.epochs;
        let test = if (epoch + 1) % cfg.eval_every == 0 || last {
            let r = evaluate(&model, select, 256)?;
            let score = cfg.select_by.score(&r);
            if best.as_ref().is_none_or(|b| score < b.0) {
                best = Some((score, epoch, model.store.clone(), r.clone()));
            }
            Some(r)
        } else {
            None
        };
        match &test {
            Some(r) => log::info!(
                "epoch {epoch}: loss {train_loss:.4}, test dd {:.3} m, az {:.2} deg, el {:.2} deg",
                r.delta_d,
                r.azimuth_mae,
                r.elevation_mae
            ),
            None => log::info!("epoch {epoch}: loss {train_loss:.4}"),
        }
        history.push(EpochLog { epoch, train_loss, test });
    }
    let (_, best_epoch, store, report) = best.expect("last epoch is always evaluated");
    model.store = store;
    Ok(TrainOutcome { model, report, best_epoch, history })
}

/// Seed used for the `k`-th repetition of a run seeded with `seed`.
pub fn run_seed(seed: u64, k: usize) -> u64 {
    seed.wrapping_add(k as u64)
}

pub struct MultiSeedOutcome {
    pub runs: Vec<TrainOutcome>,
    pub summary: MetricsSummary,
}

/// `cfg.n_seeds` independent runs; results are ordered by seed index
/// whatever the rayon pool size.
pub fn train_seeds(model_cfg: &ModelConfig, train_set: &[FeatureBundle], select: &[&FeatureBundle], cfg: &TrainConfig, seed: u64) -> Result<MultiSeedOutcome> {
    let runs = (0..cfg.n_seeds)
        .into_par_iter()
        .map(|k| train(model_cfg, train_set, select, cfg, run_seed(seed, k)))
        .collect::<Result<Vec<_>>>()?;
    let reports: Vec<MetricsReport> = runs.iter().map(|r| r.report.clone()).collect();
    let summary = MetricsSummary::of(&reports)?;
    Ok(MultiSeedOutcome { runs, summary })
}
