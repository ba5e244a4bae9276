//! Two-layer graph convolutional model with analytic forward and backward
//! passes, inverted dropout, masked mean cross-entropy, and Adam updates.
//!
//! The node feature matrix is the identity, so the first spmm collapses to
//! `Ã W₀` and `W₀` doubles as the node embedding table.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::sparse::{DenseMatrix, SparseMatrix};
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GcnHyper {
    pub embedding_dim: usize,
    pub dropout: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GcnModel {
    pub w0: DenseMatrix,
    pub w1: DenseMatrix,
    pub hyper: GcnHyper,
}

impl GcnModel {
    pub fn new(nodes: usize, num_classes: usize, hyper: GcnHyper, rng: &mut impl Rng) -> Self {
        let w0 = glorot_init(nodes, hyper.embedding_dim, rng);
        let w1 = glorot_init(hyper.embedding_dim, num_classes, rng);
        GcnModel { w0, w1, hyper }
    }

    pub fn nodes(&self) -> usize {
        self.w0.rows
    }

    pub fn num_classes(&self) -> usize {
        self.w1.cols
    }
}

/// Glorot-uniform weights: entries drawn from ±sqrt(6 / (rows + cols)).
pub fn glorot_init(rows: usize, cols: usize, rng: &mut impl Rng) -> DenseMatrix {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.gen_range(-bound..bound))
        .collect();
    DenseMatrix::from_vec(rows, cols, data).expect("sized by construction")
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `Ã W₀`, the first-layer embeddings before the nonlinearity.
    pub e1_pre: DenseMatrix,
    /// After ReLU, and after dropout in training mode.
    pub e1: DenseMatrix,
    /// `Ã e1`, kept for the `W₁` gradient.
    pub e1_agg: DenseMatrix,
    /// Second-layer logits.
    pub e2: DenseMatrix,
    /// Row-wise softmax of the logits.
    pub z: DenseMatrix,
    /// Per-element multiplier applied to e1 (0 or 1/keep) in training mode.
    dropout_scale: Option<Vec<f64>>,
}

fn softmax_rows(logits: &DenseMatrix) -> DenseMatrix {
    let mut z = logits.clone();
    for r in 0..z.rows {
        let row = z.row_mut(r);
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
    z
}

/// Full-graph forward pass. In training mode inverted dropout is applied to
/// the post-ReLU first-layer activations; evaluation mode applies neither
/// dropout nor rescaling.
pub fn forward(
    model: &GcnModel,
    a_norm: &SparseMatrix,
    training: bool,
    rng: &mut impl Rng,
) -> Result<ForwardCache> {
    if a_norm.rows() != a_norm.cols() || a_norm.rows() != model.w0.rows {
        return Err(Error::DimensionMismatch(format!(
            "forward: Ã is {}x{}, W₀ has {} rows",
            a_norm.rows(),
            a_norm.cols(),
            model.w0.rows
        )));
    }
    let e1_pre = a_norm.spmm(&model.w0)?;
    let mut e1 = e1_pre.clone();
    for v in e1.data.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let dropout_scale = if training && model.hyper.dropout > 0.0 {
        let keep = 1.0 - model.hyper.dropout;
        let scale: Vec<f64> = e1
            .data
            .iter()
            .map(|_| {
                if rng.gen_range(0.0..1.0) < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
            .collect();
        for (v, s) in e1.data.iter_mut().zip(&scale) {
            *v *= s;
        }
        Some(scale)
    } else {
        None
    };
    let e1_agg = a_norm.spmm(&e1)?;
    let e2 = e1_agg.matmul(&model.w1)?;
    if !e2.all_finite() {
        return Err(Error::InvalidMatrix(
            "non-finite activations in forward pass".into(),
        ));
    }
    let z = softmax_rows(&e2);
    Ok(ForwardCache {
        e1_pre,
        e1,
        e1_agg,
        e2,
        z,
        dropout_scale,
    })
}

/// Masked mean cross-entropy: `-mean_{d in mask} ln Z[d][label(d)]`.
/// `labels[d]` is the class of document node `d`.
pub fn loss(cache: &ForwardCache, labels: &[usize], mask: &[usize]) -> Result<f64> {
    if mask.is_empty() {
        return Err(Error::Config("loss mask is empty".into()));
    }
    let mut total = 0.0;
    for &d in mask {
        total -= cache.z.get(d, labels[d]).ln();
    }
    Ok(total / mask.len() as f64)
}

/// Exact reverse-mode gradients of the masked mean cross-entropy with
/// respect to `W₀` and `W₁`. The softmax/cross-entropy pair is fused as
/// `(Z - Y) / |mask|` on masked rows.
pub fn backward(
    model: &GcnModel,
    a_norm: &SparseMatrix,
    cache: &ForwardCache,
    labels: &[usize],
    mask: &[usize],
) -> Result<(DenseMatrix, DenseMatrix)> {
    if cache.z.rows != model.nodes() || cache.z.cols != model.num_classes() {
        return Err(Error::DimensionMismatch(
            "backward: cache does not match model shape".into(),
        ));
    }
    if mask.is_empty() {
        return Err(Error::Config("loss mask is empty".into()));
    }
    let inv_m = 1.0 / mask.len() as f64;
    let mut d_logits = DenseMatrix::zeros(cache.z.rows, cache.z.cols);
    for &d in mask {
        let z_row = cache.z.row(d);
        let out = d_logits.row_mut(d);
        for (o, &z) in out.iter_mut().zip(z_row) {
            *o = z * inv_m;
        }
        out[labels[d]] -= inv_m;
    }

    let d_w1 = cache.e1_agg.transpose_matmul(&d_logits)?;
    let d_e1_agg = d_logits.matmul_transpose(&model.w1)?;
    let mut d_e1 = a_norm.spmm_transpose(&d_e1_agg)?;
    if let Some(scale) = &cache.dropout_scale {
        for (g, s) in d_e1.data.iter_mut().zip(scale) {
            *g *= s;
        }
    }
    for (g, &pre) in d_e1.data.iter_mut().zip(&cache.e1_pre.data) {
        if pre <= 0.0 {
            *g = 0.0;
        }
    }
    let d_w0 = a_norm.spmm_transpose(&d_e1)?;
    Ok((d_w0, d_w1))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Decoupled L2 term; 0 disables it.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.02,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    m0: DenseMatrix,
    v0: DenseMatrix,
    m1: DenseMatrix,
    v1: DenseMatrix,
}

impl AdamState {
    pub fn new(model: &GcnModel, config: AdamConfig) -> Self {
        AdamState {
            config,
            step: 0,
            m0: DenseMatrix::zeros(model.w0.rows, model.w0.cols),
            v0: DenseMatrix::zeros(model.w0.rows, model.w0.cols),
            m1: DenseMatrix::zeros(model.w1.rows, model.w1.cols),
            v1: DenseMatrix::zeros(model.w1.rows, model.w1.cols),
        }
    }
}

fn adam_update(
    params: &mut DenseMatrix,
    grads: &DenseMatrix,
    m: &mut DenseMatrix,
    v: &mut DenseMatrix,
    config: &AdamConfig,
    step: u64,
) {
    let bc1 = 1.0 - config.beta1.powi(step as i32);
    let bc2 = 1.0 - config.beta2.powi(step as i32);
    for i in 0..params.data.len() {
        let g = grads.data[i];
        m.data[i] = config.beta1 * m.data[i] + (1.0 - config.beta1) * g;
        v.data[i] = config.beta2 * v.data[i] + (1.0 - config.beta2) * g * g;
        let m_hat = m.data[i] / bc1;
        let v_hat = v.data[i] / bc2;
        params.data[i] -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
        if config.weight_decay > 0.0 {
            params.data[i] -= config.learning_rate * config.weight_decay * params.data[i];
        }
    }
}

/// One bias-corrected Adam step over both weight matrices.
pub fn adam_step(
    model: &mut GcnModel,
    state: &mut AdamState,
    d_w0: &DenseMatrix,
    d_w1: &DenseMatrix,
) -> Result<()> {
    if d_w0.rows != model.w0.rows
        || d_w0.cols != model.w0.cols
        || d_w1.rows != model.w1.rows
        || d_w1.cols != model.w1.cols
    {
        return Err(Error::DimensionMismatch(
            "adam_step: gradient shapes do not match parameters".into(),
        ));
    }
    if !d_w0.all_finite() || !d_w1.all_finite() {
        return Err(Error::InvalidMatrix("non-finite gradient".into()));
    }
    state.step += 1;
    let config = state.config.clone();
    adam_update(&mut model.w0, d_w0, &mut state.m0, &mut state.v0, &config, state.step);
    adam_update(&mut model.w1, d_w1, &mut state.m1, &mut state.v1, &config, state.step);
    if !model.w0.all_finite() || !model.w1.all_finite() {
        return Err(Error::InvalidMatrix("non-finite parameters after update".into()));
    }
    Ok(())
}

/// Versioned model checkpoint, lossless at full f64 precision.
#[derive(Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub nodes: usize,
    pub embedding_dim: usize,
    pub num_classes: usize,
    pub dropout: f64,
    pub seed: u64,
    pub w0: DenseMatrix,
    pub w1: DenseMatrix,
}

pub const CHECKPOINT_VERSION: u32 = 1;

pub fn save_checkpoint(path: &Path, model: &GcnModel) -> Result<()> {
    let checkpoint = Checkpoint {
        version: CHECKPOINT_VERSION,
        nodes: model.nodes(),
        embedding_dim: model.hyper.embedding_dim,
        num_classes: model.num_classes(),
        dropout: model.hyper.dropout,
        seed: model.hyper.seed,
        w0: model.w0.clone(),
        w1: model.w1.clone(),
    };
    let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    serde_json::to_writer(BufWriter::new(file), &checkpoint)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<GcnModel> {
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let checkpoint: Checkpoint = serde_json::from_reader(BufReader::new(file))?;
    if checkpoint.version != CHECKPOINT_VERSION {
        return Err(Error::Config(format!(
            "unsupported checkpoint version {}",
            checkpoint.version
        )));
    }
    if checkpoint.w0.rows != checkpoint.nodes
        || checkpoint.w0.cols != checkpoint.embedding_dim
        || checkpoint.w1.rows != checkpoint.embedding_dim
        || checkpoint.w1.cols != checkpoint.num_classes
    {
        return Err(Error::Config("checkpoint dimensions are inconsistent".into()));
    }
    Ok(GcnModel {
        hyper: GcnHyper {
            embedding_dim: checkpoint.embedding_dim,
            dropout: checkpoint.dropout,
            seed: checkpoint.seed,
        },
        w0: checkpoint.w0,
        w1: checkpoint.w1,
    })
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)] // index-style dense oracles
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn model_from(w0: DenseMatrix, w1: DenseMatrix, dropout: f64) -> GcnModel {
        let hyper = GcnHyper {
            embedding_dim: w0.cols,
            dropout,
            seed: 0,
        };
        GcnModel { w0, w1, hyper }
    }

    /// Small symmetric normalized graph with self-loops for gradient tests.
    fn toy_graph(n: usize, extra_edges: &[(usize, usize)]) -> SparseMatrix {
        let mut triplets: Vec<(usize, usize, f64)> = (0..n).map(|i| (i, i, 1.0)).collect();
        for &(i, j) in extra_edges {
            triplets.push((i, j, 1.0));
            triplets.push((j, i, 1.0));
        }
        SparseMatrix::from_triplets(n, n, triplets)
            .unwrap()
            .normalize_symmetric()
            .unwrap()
    }

    #[test]
    fn forward_single_node_hand_example() {
        // Ã = I (1 node), W₀ = [[1, -1]], W₁ = 2x2 identity:
        // e1 = ReLU([1, -1]) = [1, 0], z = softmax([1, 0]).
        let a = SparseMatrix::identity(1);
        let w0 = DenseMatrix::from_vec(1, 2, vec![1.0, -1.0]).unwrap();
        let w1 = DenseMatrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let model = model_from(w0, w1, 0.0);
        let cache = forward(&model, &a, false, &mut rng(0)).unwrap();
        assert_eq!(cache.e1.data, vec![1.0, 0.0]);
        assert!((cache.z.get(0, 0) - 0.7310585786300049).abs() < 1e-12);
        assert!((cache.z.get(0, 1) - 0.2689414213699951).abs() < 1e-12);
    }

    #[test]
    fn equal_logits_give_uniform_softmax() {
        let a = SparseMatrix::identity(2);
        let w0 = DenseMatrix::from_vec(2, 2, vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        let w1 = DenseMatrix::from_vec(2, 4, vec![0.0; 8]).unwrap();
        let model = model_from(w0, w1, 0.0);
        let cache = forward(&model, &a, false, &mut rng(0)).unwrap();
        for r in 0..2 {
            for f in 0..4 {
                assert!((cache.z.get(r, f) - 0.25).abs() < 1e-15);
            }
        }
    }

    /// Brute-force dense evaluation of the two-layer model with an explicit
    /// identity feature matrix.
    fn dense_forward_oracle(a: &SparseMatrix, w0: &DenseMatrix, w1: &DenseMatrix) -> DenseMatrix {
        let ad = a.to_dense();
        let x = SparseMatrix::identity(a.rows()).to_dense();
        let ax = ad.matmul(&x).unwrap();
        let mut e1 = ax.matmul(w0).unwrap();
        for v in e1.data.iter_mut() {
            *v = v.max(0.0);
        }
        let e2 = ad.matmul(&e1).unwrap().matmul(w1).unwrap();
        softmax_rows(&e2)
    }

    #[test]
    fn eval_forward_matches_dense_oracle() {
        let a = toy_graph(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 5)]);
        let mut r = rng(42);
        let model = model_from(glorot_init(6, 3, &mut r), glorot_init(3, 2, &mut r), 0.0);
        let cache = forward(&model, &a, false, &mut rng(0)).unwrap();
        let want = dense_forward_oracle(&a, &model.w0, &model.w1);
        for (got, want) in cache.z.data.iter().zip(&want.data) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let a = toy_graph(5, &[(0, 2), (1, 3)]);
        let mut r = rng(7);
        let model = model_from(glorot_init(5, 4, &mut r), glorot_init(4, 3, &mut r), 0.5);
        for training in [false, true] {
            let cache = forward(&model, &a, training, &mut rng(9)).unwrap();
            for row in 0..5 {
                let s: f64 = cache.z.row(row).iter().sum();
                assert!((s - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn loss_examples() {
        // Perfect prediction contributes zero.
        let z = DenseMatrix::from_vec(1, 2, vec![1.0, 0.0]).unwrap();
        let cache = ForwardCache {
            e1_pre: DenseMatrix::zeros(1, 1),
            e1: DenseMatrix::zeros(1, 1),
            e1_agg: DenseMatrix::zeros(1, 1),
            e2: DenseMatrix::zeros(1, 2),
            z,
            dropout_scale: None,
        };
        assert_eq!(loss(&cache, &[0], &[0]).unwrap(), 0.0);

        // Uniform prediction over 4 classes: ln 4.
        let z = DenseMatrix::from_vec(1, 4, vec![0.25; 4]).unwrap();
        let cache = ForwardCache {
            z,
            e2: DenseMatrix::zeros(1, 4),
            ..cache
        };
        assert!((loss(&cache, &[2], &[0]).unwrap() - 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn loss_matches_scalar_oracle() {
        let z = DenseMatrix::from_vec(
            3,
            2,
            vec![0.9, 0.1, 0.3, 0.7, 0.6, 0.4],
        )
        .unwrap();
        let cache = ForwardCache {
            e1_pre: DenseMatrix::zeros(3, 1),
            e1: DenseMatrix::zeros(3, 1),
            e1_agg: DenseMatrix::zeros(3, 1),
            e2: DenseMatrix::zeros(3, 2),
            z,
            dropout_scale: None,
        };
        let labels = [0, 1, 0];
        let mask = [0, 1, 2];
        let brute: f64 = -(0.9f64.ln() + 0.7f64.ln() + 0.6f64.ln()) / 3.0;
        assert!((loss(&cache, &labels, &mask).unwrap() - brute).abs() < 1e-12);
        assert!(loss(&cache, &labels, &[]).is_err());
    }

    #[test]
    fn gradients_vanish_at_perfect_prediction() {
        // Ã = I with one node per class and huge logit margins: Z ≈ Y, so
        // both gradients are (numerically) zero. Build the exact case by
        // patching the cache so Z == Y on the masked row.
        let a = SparseMatrix::identity(2);
        let w0 = DenseMatrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let w1 = DenseMatrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let model = model_from(w0, w1, 0.0);
        let mut cache = forward(&model, &a, true, &mut rng(0)).unwrap();
        cache.z = DenseMatrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let (d_w0, d_w1) = backward(&model, &a, &cache, &[0, 1], &[0, 1]).unwrap();
        assert!(d_w0.data.iter().all(|&g| g == 0.0));
        assert!(d_w1.data.iter().all(|&g| g == 0.0));
    }

    fn finite_difference_check(seed: u64, n: usize, k: usize, f: usize) -> f64 {
        let mut r = rng(seed);
        let edges: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|_| r.gen_range(0.0..1.0) < 0.4)
            .collect();
        let a = toy_graph(n, &edges);
        let mut model = model_from(glorot_init(n, k, &mut r), glorot_init(k, f, &mut r), 0.0);
        let labels: Vec<usize> = (0..n).map(|_| r.gen_range(0..f)).collect();
        let mask: Vec<usize> = (0..n.min(3)).collect();

        let cache = forward(&model, &a, true, &mut rng(0)).unwrap();
        let (d_w0, d_w1) = backward(&model, &a, &cache, &labels, &mask).unwrap();

        let h = 1e-5;
        let mut max_rel: f64 = 0.0;
        for which in 0..2 {
            let len = if which == 0 {
                model.w0.data.len()
            } else {
                model.w1.data.len()
            };
            for i in 0..len {
                let eval = |model: &GcnModel| {
                    let c = forward(model, &a, false, &mut rng(0)).unwrap();
                    loss(&c, &labels, &mask).unwrap()
                };
                fn param(m: &mut GcnModel, which: usize, i: usize) -> &mut f64 {
                    if which == 0 {
                        &mut m.w0.data[i]
                    } else {
                        &mut m.w1.data[i]
                    }
                }
                let orig = *param(&mut model, which, i);
                *param(&mut model, which, i) = orig + h;
                let up = eval(&model);
                *param(&mut model, which, i) = orig - h;
                let down = eval(&model);
                *param(&mut model, which, i) = orig;
                let numeric = (up - down) / (2.0 * h);
                let analytic = if which == 0 {
                    d_w0.data[i]
                } else {
                    d_w1.data[i]
                };
                let denom = numeric.abs().max(analytic.abs()).max(1e-8);
                max_rel = max_rel.max((numeric - analytic).abs() / denom);
            }
        }
        max_rel
    }

    #[test]
    fn gradients_match_finite_differences() {
        let err = finite_difference_check(3, 6, 3, 2);
        assert!(err < 1e-6, "max relative error {err}");
    }

    #[test]
    fn gradient_is_mask_mean_of_single_node_gradients() {
        let a = toy_graph(4, &[(0, 1), (1, 2), (2, 3)]);
        let mut r = rng(11);
        let model = model_from(glorot_init(4, 3, &mut r), glorot_init(3, 2, &mut r), 0.0);
        let labels = [0, 1, 0, 1];
        let cache = forward(&model, &a, true, &mut rng(0)).unwrap();
        let (d_both, _) = backward(&model, &a, &cache, &labels, &[0, 1]).unwrap();
        let (d_a, _) = backward(&model, &a, &cache, &labels, &[0]).unwrap();
        let (d_b, _) = backward(&model, &a, &cache, &labels, &[1]).unwrap();
        for i in 0..d_both.data.len() {
            let want = 0.5 * (d_a.data[i] + d_b.data[i]);
            assert!((d_both.data[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn adam_zero_gradient_leaves_parameters_unchanged() {
        let mut r = rng(5);
        let mut model = model_from(glorot_init(3, 2, &mut r), glorot_init(2, 2, &mut r), 0.0);
        let before = model.clone();
        let mut state = AdamState::new(&model, AdamConfig::default());
        let z0 = DenseMatrix::zeros(3, 2);
        let z1 = DenseMatrix::zeros(2, 2);
        adam_step(&mut model, &mut state, &z0, &z1).unwrap();
        assert_eq!(model.w0, before.w0);
        assert_eq!(model.w1, before.w1);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn adam_matches_scalar_hand_trace() {
        // Three steps of textbook Adam on a single parameter, gradient held
        // constant at g, computed by hand alongside.
        let g = 0.3f64;
        let config = AdamConfig::default();
        let mut model = model_from(
            DenseMatrix::from_vec(1, 1, vec![1.0]).unwrap(),
            DenseMatrix::from_vec(1, 1, vec![0.0]).unwrap(),
            0.0,
        );
        let mut state = AdamState::new(&model, config.clone());
        let grad0 = DenseMatrix::from_vec(1, 1, vec![g]).unwrap();
        let grad1 = DenseMatrix::zeros(1, 1);

        let (mut p, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for t in 1..=3u32 {
            adam_step(&mut model, &mut state, &grad0, &grad1).unwrap();
            m = config.beta1 * m + (1.0 - config.beta1) * g;
            v = config.beta2 * v + (1.0 - config.beta2) * g * g;
            let m_hat = m / (1.0 - config.beta1.powi(t as i32));
            let v_hat = v / (1.0 - config.beta2.powi(t as i32));
            p -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
            assert!(
                (model.w0.data[0] - p).abs() < 1e-15,
                "step {t}: {} vs {p}",
                model.w0.data[0]
            );
        }
        // First step moves by roughly -lr * sign(g).
        assert!((1.0 - p).signum() == g.signum());
    }

    #[test]
    fn adam_is_deterministic_and_rejects_nonfinite() {
        let mut r1 = rng(21);
        let mut r2 = rng(21);
        let mut m1 = model_from(glorot_init(2, 2, &mut r1), glorot_init(2, 2, &mut r1), 0.0);
        let mut m2 = model_from(glorot_init(2, 2, &mut r2), glorot_init(2, 2, &mut r2), 0.0);
        let g0 = DenseMatrix::from_vec(2, 2, vec![0.1, -0.2, 0.3, -0.4]).unwrap();
        let g1 = DenseMatrix::from_vec(2, 2, vec![0.5, 0.6, -0.7, 0.8]).unwrap();
        let mut s1 = AdamState::new(&m1, AdamConfig::default());
        let mut s2 = AdamState::new(&m2, AdamConfig::default());
        adam_step(&mut m1, &mut s1, &g0, &g1).unwrap();
        adam_step(&mut m2, &mut s2, &g0, &g1).unwrap();
        assert_eq!(m1.w0.data, m2.w0.data);
        assert_eq!(m1.w1.data, m2.w1.data);

        let bad = DenseMatrix::from_vec(2, 2, vec![f64::NAN, 0.0, 0.0, 0.0]).unwrap();
        assert!(adam_step(&mut m1, &mut s1, &bad, &g1).is_err());
    }

    #[test]
    fn glorot_bounds_and_determinism() {
        let m = glorot_init(1, 1, &mut rng(1));
        assert!(m.data[0].abs() < 3.0f64.sqrt());

        let a = glorot_init(100, 100, &mut rng(2));
        let b = glorot_init(100, 100, &mut rng(2));
        assert_eq!(a.data, b.data);

        let big = glorot_init(200, 50, &mut rng(3));
        let bound = (6.0 / 250.0f64).sqrt();
        let min = big.data.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = big.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mean: f64 = big.data.iter().sum::<f64>() / big.data.len() as f64;
        assert!(min >= -bound && max <= bound);
        assert!(mean.abs() < 0.01);
    }

    #[test]
    fn dropout_expectation_approaches_eval_activations() {
        let a = toy_graph(4, &[(0, 1), (2, 3)]);
        let mut r = rng(33);
        let model = model_from(glorot_init(4, 3, &mut r), glorot_init(3, 2, &mut r), 0.5);
        let eval = forward(&model, &a, false, &mut rng(0)).unwrap();

        let passes = 10_000;
        let mut sum = vec![0.0f64; eval.e1.data.len()];
        let mut sum_sq = vec![0.0f64; eval.e1.data.len()];
        let mut dropout_rng = rng(77);
        for _ in 0..passes {
            let c = forward(&model, &a, true, &mut dropout_rng).unwrap();
            for (i, &v) in c.e1.data.iter().enumerate() {
                sum[i] += v;
                sum_sq[i] += v * v;
            }
        }
        for i in 0..sum.len() {
            let mean = sum[i] / passes as f64;
            let var = (sum_sq[i] / passes as f64 - mean * mean).max(0.0);
            let stderr = (var / passes as f64).sqrt();
            let diff = (mean - eval.e1.data[i]).abs();
            assert!(
                diff <= 3.0 * stderr + 1e-12,
                "element {i}: diff {diff} > 3 * stderr {stderr}"
            );
        }
    }

    #[test]
    fn loss_is_permutation_equivariant() {
        let n = 5;
        let a = toy_graph(n, &[(0, 1), (1, 2), (3, 4)]);
        let mut r = rng(55);
        let model = model_from(glorot_init(n, 3, &mut r), glorot_init(3, 2, &mut r), 0.0);
        let labels = [0, 1, 0, 1, 0];
        let mask = [0, 2, 3];
        let cache = forward(&model, &a, false, &mut rng(0)).unwrap();
        let base = loss(&cache, &labels, &mask).unwrap();

        // Permute nodes by p, remap Ã, W₀ rows, labels, and mask.
        let p = [3usize, 0, 4, 1, 2]; // new index of old node i
        let perm_a = SparseMatrix::from_triplets(
            n,
            n,
            a.iter().map(|(i, j, v)| (p[i], p[j], v)),
        )
        .unwrap();
        let mut w0p = DenseMatrix::zeros(n, 3);
        for i in 0..n {
            w0p.row_mut(p[i]).copy_from_slice(model.w0.row(i));
        }
        let perm_model = model_from(w0p, model.w1.clone(), 0.0);
        let mut perm_labels = [0usize; 5];
        for i in 0..n {
            perm_labels[p[i]] = labels[i];
        }
        let perm_mask: Vec<usize> = mask.iter().map(|&i| p[i]).collect();
        let perm_cache = forward(&perm_model, &perm_a, false, &mut rng(0)).unwrap();
        let permuted = loss(&perm_cache, &perm_labels, &perm_mask).unwrap();
        assert!((base - permuted).abs() < 1e-12);
    }

    #[test]
    fn checkpoint_round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let mut r = rng(8);
        let model = model_from(glorot_init(4, 3, &mut r), glorot_init(3, 2, &mut r), 0.5);
        save_checkpoint(&path, &model).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(model.w0.data, back.w0.data);
        assert_eq!(model.w1.data, back.w1.data);
        assert_eq!(model.hyper.embedding_dim, back.hyper.embedding_dim);
    }
}
