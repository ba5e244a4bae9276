//! Training orchestration: the epoch loop with validation-loss early
//! stopping, test evaluation, seeded replicates with mean ± std reporting,
//! and stratified label subsampling for low-label experiments.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::Corpus;
use crate::gcn::{
    self, AdamConfig, AdamState, GcnHyper, GcnModel,
};
use crate::graph::TextGraph;
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize)]
pub struct TrainConfig {
    pub embedding_dim: usize,
    pub window_size: usize,
    pub learning_rate: f64,
    pub dropout: f64,
    pub l2_weight: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub seeds: Vec<u64>,
    pub label_fraction: f64,
    /// When set, the returned model is the best-validation checkpoint
    /// instead of the last epoch's parameters.
    pub restore_best: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            embedding_dim: 200,
            window_size: 20,
            learning_rate: 0.02,
            dropout: 0.5,
            l2_weight: 0.0,
            max_epochs: 200,
            patience: 10,
            validation_fraction: 0.1,
            seeds: (0..10).collect(),
            label_fraction: 1.0,
            restore_best: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patience >= self.max_epochs {
            return Err(Error::Config(format!(
                "patience ({}) must be smaller than max_epochs ({})",
                self.patience, self.max_epochs
            )));
        }
        if !(self.label_fraction > 0.0 && self.label_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "label fraction must be in (0, 1], got {}",
                self.label_fraction
            )));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config(format!(
                "validation fraction must be in (0, 1), got {}",
                self.validation_fraction
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list is empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
    pub stopped_epoch: usize,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub runs: Vec<RunReport>,
    pub mean_test_accuracy: f64,
    pub std_test_accuracy: f64,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-document class labels laid out by node id (documents come first).
fn doc_labels(corpus: &Corpus) -> Vec<usize> {
    corpus.documents.iter().map(|d| d.label).collect()
}

/// Seed-deterministic partition of `ids` into (rest, held-out) with the
/// held-out share rounded and floored at 1.
pub(crate) fn split_ids(ids: &[usize], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut pool = ids.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pool.shuffle(&mut rng);
    let held = ((fraction * pool.len() as f64).round() as usize)
        .max(1)
        .min(pool.len() - 1);
    let mut held_out = pool.split_off(pool.len() - held);
    pool.sort_unstable();
    held_out.sort_unstable();
    (pool, held_out)
}

/// Stratified subsample keeping `fraction` of each class's documents,
/// at least one per class.
fn subsample_stratified(
    corpus: &Corpus,
    ids: &[usize],
    fraction: f64,
    seed: u64,
) -> Result<Vec<usize>> {
    let mut by_class: HashMap<usize, Vec<usize>> = HashMap::new();
    for &id in ids {
        by_class
            .entry(corpus.documents[id].label)
            .or_default()
            .push(id);
    }
    for class in 0..corpus.num_classes {
        if !by_class.contains_key(&class) {
            return Err(Error::Corpus(format!(
                "class `{}` has no documents available for subsampling",
                corpus.label_names[class]
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kept = Vec::new();
    let mut classes: Vec<usize> = by_class.keys().copied().collect();
    classes.sort_unstable();
    for class in classes {
        let mut members = by_class.remove(&class).unwrap();
        members.sort_unstable();
        members.shuffle(&mut rng);
        let keep = ((fraction * members.len() as f64).round() as usize)
            .max(1)
            .min(members.len());
        kept.extend_from_slice(&members[..keep]);
    }
    kept.sort_unstable();
    Ok(kept)
}

/// Predicted class per node: argmax of the softmax row, ties broken toward
/// the lowest class index.
pub fn predict(model: &GcnModel, graph: &TextGraph) -> Result<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let cache = gcn::forward(model, &graph.normalized, false, &mut rng)?;
    Ok(argmax_rows(&cache.z))
}

pub fn argmax_rows(z: &crate::sparse::DenseMatrix) -> Vec<usize> {
    (0..z.rows)
        .map(|r| {
            let row = z.row(r);
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// Accuracy of the model over the given document nodes.
pub fn evaluate(
    model: &GcnModel,
    graph: &TextGraph,
    corpus: &Corpus,
    doc_ids: &[usize],
) -> Result<f64> {
    let predictions = predict(model, graph)?;
    Ok(accuracy(&predictions, corpus, doc_ids))
}

pub fn accuracy(predictions: &[usize], corpus: &Corpus, doc_ids: &[usize]) -> f64 {
    if doc_ids.is_empty() {
        return 0.0;
    }
    let correct = doc_ids
        .iter()
        .filter(|&&d| predictions[d] == corpus.documents[d].label)
        .count();
    correct as f64 / doc_ids.len() as f64
}

/// Trains one seeded replicate: full-batch Adam epochs, stopping when the
/// validation loss fails to improve on the best seen for `patience`
/// consecutive epochs. All randomness (label subsampling, validation split,
/// init, dropout) derives from the single seed.
pub fn train_once(
    corpus: &Corpus,
    graph: &TextGraph,
    config: &TrainConfig,
    seed: u64,
) -> Result<(GcnModel, RunReport)> {
    config.validate()?;
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let subsample_seed: u64 = master.gen();
    let split_seed: u64 = master.gen();
    let init_seed: u64 = master.gen();
    let dropout_seed: u64 = master.gen();

    let train_ids = corpus.train_doc_ids();
    let labeled = if config.label_fraction < 1.0 {
        subsample_stratified(corpus, &train_ids, config.label_fraction, subsample_seed)?
    } else {
        train_ids
    };
    if labeled.len() < 2 {
        return Err(Error::Corpus(
            "need at least 2 labeled documents to train".into(),
        ));
    }
    let (mask, val_ids) = split_ids(&labeled, config.validation_fraction, split_seed);
    let labels = doc_labels(corpus);

    let mut init_rng = ChaCha8Rng::seed_from_u64(init_seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(dropout_seed);
    let hyper = GcnHyper {
        embedding_dim: config.embedding_dim,
        dropout: config.dropout,
        seed,
    };
    let mut model = GcnModel::new(graph.node_count, corpus.num_classes, hyper, &mut init_rng);
    let mut adam = AdamState::new(
        &model,
        AdamConfig {
            learning_rate: config.learning_rate,
            weight_decay: config.l2_weight,
            ..AdamConfig::default()
        },
    );

    let mut records = Vec::new();
    let mut best_val = f64::INFINITY;
    let mut epochs_without_improvement = 0usize;
    let mut best_model: Option<GcnModel> = None;
    let mut stopped_epoch = config.max_epochs;

    for epoch in 1..=config.max_epochs {
        let cache = gcn::forward(&model, &graph.normalized, true, &mut dropout_rng)
            .map_err(|e| Error::Diverged {
                epoch,
                detail: e.to_string(),
            })?;
        let train_loss = gcn::loss(&cache, &labels, &mask)?;
        if !train_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                detail: format!("training loss {train_loss}"),
            });
        }
        let (d_w0, d_w1) = gcn::backward(&model, &graph.normalized, &cache, &labels, &mask)?;
        gcn::adam_step(&mut model, &mut adam, &d_w0, &d_w1).map_err(|e| Error::Diverged {
            epoch,
            detail: e.to_string(),
        })?;

        let mut eval_rng = ChaCha8Rng::seed_from_u64(0);
        let eval_cache = gcn::forward(&model, &graph.normalized, false, &mut eval_rng)?;
        let val_loss = gcn::loss(&eval_cache, &labels, &val_ids)?;
        let predictions = argmax_rows(&eval_cache.z);
        let val_accuracy = accuracy(&predictions, corpus, &val_ids);
        records.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_accuracy,
        });

        if val_loss < best_val {
            best_val = val_loss;
            epochs_without_improvement = 0;
            if config.restore_best {
                best_model = Some(model.clone());
            }
        } else {
            epochs_without_improvement += 1;
            if epochs_without_improvement >= config.patience {
                stopped_epoch = epoch;
                break;
            }
        }
    }

    let final_model = match (config.restore_best, best_model) {
        (true, Some(m)) => m,
        _ => model,
    };
    let test_ids = corpus.test_doc_ids();
    let test_accuracy = evaluate(&final_model, graph, corpus, &test_ids)?;
    let report = RunReport {
        seed,
        epochs: records,
        stopped_epoch,
        test_accuracy,
    };
    Ok((final_model, report))
}

/// Trains one replicate per seed (in parallel, aggregated in seed-list
/// order) and reports mean ± std test accuracy.
pub fn run_replicates(
    corpus: &Corpus,
    graph: &TextGraph,
    config: &TrainConfig,
) -> Result<TrainReport> {
    config.validate()?;
    let runs: Vec<RunReport> = config
        .seeds
        .par_iter()
        .map(|&seed| train_once(corpus, graph, config, seed).map(|(_, r)| r))
        .collect::<Result<_>>()?;
    let accuracies: Vec<f64> = runs.iter().map(|r| r.test_accuracy).collect();
    let (mean, std) = mean_std(&accuracies);
    Ok(TrainReport {
        runs,
        mean_test_accuracy: mean,
        std_test_accuracy: std,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub value: f64,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
}

/// Replicate runs at each training-label fraction. Unlabeled training
/// documents stay in the graph as unlabeled nodes.
pub fn label_fraction_sweep(
    corpus: &Corpus,
    graph: &TextGraph,
    config: &TrainConfig,
    fractions: &[f64],
) -> Result<Vec<SweepPoint>> {
    let mut points = Vec::with_capacity(fractions.len());
    for &fraction in fractions {
        let mut cfg = config.clone();
        cfg.label_fraction = fraction;
        let report = run_replicates(corpus, graph, &cfg)?;
        points.push(SweepPoint {
            value: fraction,
            mean_accuracy: report.mean_test_accuracy,
            std_accuracy: report.std_test_accuracy,
        });
    }
    Ok(points)
}
