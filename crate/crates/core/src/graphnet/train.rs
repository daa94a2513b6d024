use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::encoding::{initial_graph, InitialGraph, PositionalEncoder};
use super::model::{forward, loss_and_gradient, predict, stack, ModelConfig, ModelParams};
use crate::depgraph::threshold_graph;
use crate::error::{Error, Result};
use crate::geometry::Catalog;
use crate::scenegen::dataset::{mix_seed, DatasetEntry};
use crate::scenegen::{observe, ObservationConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    /// Fraction of the dataset held out for edge metrics.
    pub val_fraction: f64,
    /// Weight of the positive-edge term of the loss.
    pub pos_weight: f64,
    pub observation: ObservationConfig,
    pub tstar_sweep: Vec<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 16,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            val_fraction: 0.1,
            pos_weight: 1.0,
            observation: ObservationConfig::default(),
            tstar_sweep: vec![0.3, 0.4, 0.5, 0.6, 0.7],
        }
    }
}

/// Node features of an observed target scene and its true adjacency.
#[derive(Debug, Clone)]
pub struct TrainingExample {
    pub graph: InitialGraph,
    pub truth: Array2<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EdgeMetrics {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl EdgeMetrics {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 1.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        EdgeMetrics {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdMetrics {
    pub tstar: f64,
    pub metrics: EdgeMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_scenes: usize,
    pub val_scenes: usize,
    pub parameters: usize,
    pub epoch_losses: Vec<f64>,
    pub validation: Vec<ThresholdMetrics>,
}

/// Observation seed of dataset entry `i` for feature extraction.
pub fn observation_seed(seed: u64, i: usize) -> u64 {
    mix_seed(seed ^ 0x0b5e_7e55, i as u64)
}

/// Observes each target scene and pairs its node features with the oracle graph.
pub fn prepare_examples(
    entries: &[DatasetEntry],
    catalog: &Catalog,
    model: &ModelConfig,
    observation: &ObservationConfig,
    seed: u64,
) -> Result<Vec<TrainingExample>> {
    let encoder = PositionalEncoder::new(model.encoder.clone())?;
    entries
        .par_iter()
        .enumerate()
        .map(|(i, e)| {
            let obs = observe(&e.target, catalog, observation, observation_seed(seed, i))?;
            Ok(TrainingExample {
                graph: initial_graph(&obs, &encoder, model.num_classes)?,
                truth: e.graph.adjacency(),
            })
        })
        .collect()
}

/// Adam moment buffers.
struct Adam {
    m: ModelParams,
    v: ModelParams,
    t: i32,
}

impl Adam {
    fn new(params: &ModelParams) -> Self {
        Adam {
            m: ModelParams::zeros(&params.config),
            v: ModelParams::zeros(&params.config),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut ModelParams, grads: &ModelParams, cfg: &TrainConfig) {
        self.t += 1;
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let lr = cfg.learning_rate;
        let eps = cfg.epsilon;
        for (((p, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
        {
            ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            });
        }
    }
}

/// Mini-batch Adam on the mean per-graph cross-entropy. Each batch is one
/// block-diagonal graph so the input projection is a single product.
pub fn train(
    train_set: &[TrainingExample],
    val_set: &[TrainingExample],
    model: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainReport)> {
    if cfg.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be at least 1".into()));
    }
    if train_set.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    let mut params = ModelParams::init(model)?;
    let mut grads = ModelParams::zeros(model);
    let mut adam = Adam::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut batches = 0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let feats: Vec<_> = chunk.iter().map(|&i| &train_set[i].graph.features).collect();
            let truths: Vec<&Array2<f64>> = chunk.iter().map(|&i| &train_set[i].truth).collect();
            let (x, segs) = stack(&feats);
            let cache = forward(&params, x, segs)?;
            grads.tensors_mut().into_iter().for_each(|t| t.fill(0.0));
            let loss = loss_and_gradient(&params, &cache, &truths, cfg.pos_weight, &mut grads);
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::NanLoss(format!(
                    "epoch {epoch}, batch {b} (examples {chunk:?}): loss {loss}"
                )));
            }
            adam.step(&mut params, &grads, cfg);
            sum += loss;
            batches += 1;
        }
        let mean = sum / batches as f64;
        log::info!("epoch {}/{}: loss {mean:.5}", epoch + 1, cfg.epochs);
        epoch_losses.push(mean);
    }

    let validation = if val_set.is_empty() {
        Vec::new()
    } else {
        let probs = val_set
            .iter()
            .map(|e| predict(&params, &e.graph))
            .collect::<Result<Vec<_>>>()?;
        cfg.tstar_sweep
            .iter()
            .map(|&t| {
                let m = metrics_from(&probs, val_set, t);
                log::info!("held-out t*={t}: precision {:.4} recall {:.4} F1 {:.4}", m.precision, m.recall, m.f1);
                ThresholdMetrics { tstar: t, metrics: m }
            })
            .collect()
    };
    let report = TrainReport {
        train_scenes: train_set.len(),
        val_scenes: val_set.len(),
        parameters: params.num_parameters(),
        epoch_losses,
        validation,
    };
    Ok((params, report))
}

fn metrics_from(
    probs: &[crate::graphnet::DependencyProbabilities],
    examples: &[TrainingExample],
    tstar: f64,
) -> EdgeMetrics {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (p, e) in probs.iter().zip(examples) {
        let g = threshold_graph(p, tstar);
        let n = p.n();
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                match (g.contains(i, j), e.truth[(i, j)] > 0.5) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    _ => {}
                }
            }
        }
    }
    EdgeMetrics::from_counts(tp, fp, fn_)
}

/// Precision, recall and F1 of thresholded predictions against the truth.
pub fn edge_metrics(params: &ModelParams, examples: &[TrainingExample], tstar: f64) -> Result<EdgeMetrics> {
    let probs = examples
        .iter()
        .map(|e| predict(params, &e.graph))
        .collect::<Result<Vec<_>>>()?;
    Ok(metrics_from(&probs, examples, tstar))
}

/// Splits `entries` into training and held-out parts, prepares features and trains.
pub fn train_on_dataset(
    entries: &[DatasetEntry],
    catalog: &Catalog,
    model: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainReport)> {
    let examples = prepare_examples(entries, catalog, model, &cfg.observation, cfg.seed)?;
    let n_val = ((entries.len() as f64) * cfg.val_fraction).round() as usize;
    let n_val = n_val.min(entries.len().saturating_sub(1));
    let (train_set, val_set) = examples.split_at(entries.len() - n_val);
    train(train_set, val_set, model, cfg)
}

