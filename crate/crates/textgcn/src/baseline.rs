//! Bag-of-words baseline: TF-IDF document features (same tf and idf
//! definitions as the graph builder) plus multinomial logistic regression
//! trained full-batch, with the L2 strength picked on the validation split.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::Corpus;
use crate::sparse::{DenseMatrix, SparseMatrix};
use crate::trainer;
use crate::{Error, Result};

const ITERATIONS: usize = 500;
const STEP_SIZE: f64 = 0.5;
const L2_GRID: [f64; 3] = [1e-4, 1e-3, 1e-2];

/// TF-IDF feature matrix over all documents (rows) and the vocabulary
/// (columns). Zero-idf terms contribute nothing, as in the graph.
pub fn tfidf_features(corpus: &Corpus) -> Result<SparseMatrix> {
    let n = corpus.num_docs() as f64;
    let mut triplets = Vec::new();
    for doc in &corpus.documents {
        let mut tf: HashMap<u32, usize> = HashMap::new();
        for &t in &doc.tokens {
            *tf.entry(t).or_insert(0) += 1;
        }
        for (&term, &count) in &tf {
            let idf = (n / corpus.vocabulary.doc_freq[term as usize] as f64).ln();
            let w = count as f64 * idf;
            if w > 0.0 {
                triplets.push((doc.id, term as usize, w));
            }
        }
    }
    SparseMatrix::from_triplets(corpus.num_docs(), corpus.vocabulary.len(), triplets)
}

struct LogisticModel {
    weights: DenseMatrix, // vocab x classes
    bias: Vec<f64>,
}

fn softmax_inplace(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Full-batch gradient descent from zero init; deterministic for a fixed
/// training set, so the seed only enters through the validation split.
fn fit_logistic(
    features: &SparseMatrix,
    features_t: &SparseMatrix,
    corpus: &Corpus,
    train_ids: &[usize],
    l2: f64,
) -> Result<LogisticModel> {
    let classes = corpus.num_classes;
    let mut weights = DenseMatrix::zeros(features.cols(), classes);
    let mut bias = vec![0.0f64; classes];
    let inv_m = 1.0 / train_ids.len() as f64;

    for _ in 0..ITERATIONS {
        let mut logits = features.spmm(&weights)?;
        for r in 0..logits.rows {
            let row = logits.row_mut(r);
            for (v, b) in row.iter_mut().zip(&bias) {
                *v += b;
            }
        }
        let mut d_logits = DenseMatrix::zeros(logits.rows, classes);
        let mut d_bias = vec![0.0f64; classes];
        for &d in train_ids {
            let mut probs = logits.row(d).to_vec();
            softmax_inplace(&mut probs);
            probs[corpus.documents[d].label] -= 1.0;
            let out = d_logits.row_mut(d);
            for ((o, db), p) in out.iter_mut().zip(d_bias.iter_mut()).zip(&probs) {
                *o = p * inv_m;
                *db += p * inv_m;
            }
        }
        let mut d_weights = features_t.spmm(&d_logits)?;
        if l2 > 0.0 {
            for (g, w) in d_weights.data.iter_mut().zip(&weights.data) {
                *g += l2 * w;
            }
        }
        for (w, g) in weights.data.iter_mut().zip(&d_weights.data) {
            *w -= STEP_SIZE * g;
        }
        for (b, g) in bias.iter_mut().zip(&d_bias) {
            *b -= STEP_SIZE * g;
        }
    }
    Ok(LogisticModel { weights, bias })
}

fn predict_logistic(model: &LogisticModel, features: &SparseMatrix) -> Result<Vec<usize>> {
    let mut logits = features.spmm(&model.weights)?;
    for r in 0..logits.rows {
        let row = logits.row_mut(r);
        for (v, b) in row.iter_mut().zip(&model.bias) {
            *v += b;
        }
    }
    Ok(trainer::argmax_rows(&logits))
}

/// Test accuracy of the TF-IDF + logistic regression baseline. The L2
/// strength is chosen on a seeded validation split, then the winner is
/// refit on the full (possibly label-subsampled) training set.
pub fn tfidf_lr_baseline(corpus: &Corpus, seed: u64, label_fraction: f64) -> Result<f64> {
    if !(label_fraction > 0.0 && label_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "label fraction must be in (0, 1], got {label_fraction}"
        )));
    }
    let features = tfidf_features(corpus)?;
    let features_t = features.transpose();

    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let subsample_seed: u64 = master.gen();
    let split_seed: u64 = master.gen();

    let all_train = corpus.train_doc_ids();
    let labeled = if label_fraction < 1.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(subsample_seed);
        stratified(corpus, &all_train, label_fraction, &mut rng)?
    } else {
        all_train
    };
    let (train_ids, val_ids) = trainer::split_ids(&labeled, 0.1, split_seed);

    let mut best = (f64::NEG_INFINITY, L2_GRID[0]);
    for &l2 in &L2_GRID {
        let model = fit_logistic(&features, &features_t, corpus, &train_ids, l2)?;
        let predictions = predict_logistic(&model, &features)?;
        let acc = trainer::accuracy(&predictions, corpus, &val_ids);
        if acc > best.0 {
            best = (acc, l2);
        }
    }

    let model = fit_logistic(&features, &features_t, corpus, &labeled, best.1)?;
    let predictions = predict_logistic(&model, &features)?;
    Ok(trainer::accuracy(&predictions, corpus, &corpus.test_doc_ids()))
}

fn stratified(
    corpus: &Corpus,
    ids: &[usize],
    fraction: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    use rand::seq::SliceRandom;
    let mut by_class: HashMap<usize, Vec<usize>> = HashMap::new();
    for &id in ids {
        by_class
            .entry(corpus.documents[id].label)
            .or_default()
            .push(id);
    }
    let mut classes: Vec<usize> = by_class.keys().copied().collect();
    classes.sort_unstable();
    let mut kept = Vec::new();
    for class in classes {
        let mut members = by_class.remove(&class).unwrap();
        members.sort_unstable();
        members.shuffle(rng);
        let keep = ((fraction * members.len() as f64).round() as usize)
            .max(1)
            .min(members.len());
        kept.extend_from_slice(&members[..keep]);
    }
    kept.sort_unstable();
    Ok(kept)
}
