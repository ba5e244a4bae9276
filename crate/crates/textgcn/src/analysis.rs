//! Analysis artifacts: embedding exports for external visualization tools,
//! top-k words per class, and the hyperparameter sweep drivers.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::Corpus;
use crate::gcn::{self, GcnModel};
use crate::graph::{build_graph, TextGraph};
use crate::trainer::{run_replicates, SweepPoint, TrainConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    /// Post-ReLU first-layer embeddings, k columns.
    First,
    /// Second-layer logits, one column per class.
    Second,
}

impl Layer {
    pub fn parse(s: &str) -> Result<Layer> {
        match s {
            "first" => Ok(Layer::First),
            "second" => Ok(Layer::Second),
            other => Err(Error::Config(format!(
                "unknown layer `{other}` (expected first or second)"
            ))),
        }
    }
}

/// Writes a TSV with one node per row: id, kind, name, label, then the
/// embedding values. Documents carry their class name; words carry the
/// argmax dimension of the exported vector as a pseudo-label.
pub fn export_embeddings(
    model: &GcnModel,
    graph: &TextGraph,
    corpus: &Corpus,
    layer: Layer,
    path: &Path,
) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let cache = gcn::forward(model, &graph.normalized, false, &mut rng)?;
    let matrix = match layer {
        Layer::First => &cache.e1,
        Layer::Second => &cache.e2,
    };
    let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path.display().to_string(), e);

    let layer_name = match layer {
        Layer::First => "first",
        Layer::Second => "second",
    };
    writeln!(
        w,
        "# layer={layer_name} nodes={} width={} seed={}",
        graph.node_count, matrix.cols, model.hyper.seed
    )
    .map_err(io_err)?;
    write!(w, "node_id\tkind\tname\tlabel").map_err(io_err)?;
    for c in 0..matrix.cols {
        write!(w, "\tv{c}").map_err(io_err)?;
    }
    writeln!(w).map_err(io_err)?;

    let num_docs = corpus.num_docs();
    for node in 0..graph.node_count {
        let row = matrix.row(node);
        let (kind, name, label) = if node < num_docs {
            let doc = &corpus.documents[node];
            (
                "doc",
                doc.name.clone(),
                corpus.label_names[doc.label].clone(),
            )
        } else {
            let term = corpus.vocabulary.terms[node - num_docs].clone();
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            let pseudo = if matrix.cols == corpus.num_classes {
                corpus.label_names[best].clone()
            } else {
                format!("dim{best}")
            };
            ("word", term, pseudo)
        };
        write!(w, "{node}\t{kind}\t{name}\t{label}").map_err(io_err)?;
        for v in row {
            write!(w, "\t{v:.17e}").map_err(io_err)?;
        }
        writeln!(w).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

#[derive(Debug, Clone)]
pub struct TopWordsTable {
    /// Per class: top-k (word, value) pairs, values non-increasing.
    pub classes: Vec<Vec<(String, f64)>>,
}

/// Ranks word nodes per class by their second-layer embedding value at the
/// class dimension, descending. Ties break toward the lower vocabulary
/// index for determinism.
pub fn top_words(
    model: &GcnModel,
    graph: &TextGraph,
    corpus: &Corpus,
    top_k: usize,
) -> Result<TopWordsTable> {
    if top_k == 0 || top_k > corpus.vocabulary.len() {
        return Err(Error::Config(format!(
            "top_k must be in [1, {}], got {top_k}",
            corpus.vocabulary.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let cache = gcn::forward(model, &graph.normalized, false, &mut rng)?;
    let num_docs = corpus.num_docs();
    let mut classes = Vec::with_capacity(corpus.num_classes);
    for f in 0..corpus.num_classes {
        let mut scored: Vec<(usize, f64)> = (0..corpus.vocabulary.len())
            .map(|t| (t, cache.e2.get(num_docs + t, f)))
            .collect();
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        classes.push(
            scored
                .into_iter()
                .take(top_k)
                .map(|(t, v)| (corpus.vocabulary.terms[t].clone(), v))
                .collect(),
        );
    }
    Ok(TopWordsTable { classes })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParameter {
    WindowSize,
    EmbeddingDim,
}

impl SweepParameter {
    pub fn parse(s: &str) -> Result<SweepParameter> {
        match s {
            "window-size" => Ok(SweepParameter::WindowSize),
            "embedding-dim" => Ok(SweepParameter::EmbeddingDim),
            other => Err(Error::Config(format!(
                "unknown sweep parameter `{other}` (expected window-size or embedding-dim)"
            ))),
        }
    }
}

/// Replicate runs across parameter values. The graph is rebuilt per value
/// for window sweeps and reused for embedding-dimension sweeps. Output is
/// ordered by parameter value regardless of input order.
pub fn sweep(
    corpus: &Corpus,
    config: &TrainConfig,
    parameter: SweepParameter,
    values: &[usize],
) -> Result<Vec<SweepPoint>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let mut ordered: Vec<usize> = values.to_vec();
    ordered.sort_unstable();
    ordered.dedup();

    let mut points = Vec::with_capacity(ordered.len());
    match parameter {
        SweepParameter::WindowSize => {
            for &ws in &ordered {
                let mut cfg = config.clone();
                cfg.window_size = ws;
                let graph = build_graph(corpus, ws)?;
                let report = run_replicates(corpus, &graph, &cfg)?;
                points.push(SweepPoint {
                    value: ws as f64,
                    mean_accuracy: report.mean_test_accuracy,
                    std_accuracy: report.std_test_accuracy,
                });
            }
        }
        SweepParameter::EmbeddingDim => {
            let graph = build_graph(corpus, config.window_size)?;
            for &k in &ordered {
                let mut cfg = config.clone();
                cfg.embedding_dim = k;
                let report = run_replicates(corpus, &graph, &cfg)?;
                points.push(SweepPoint {
                    value: k as f64,
                    mean_accuracy: report.mean_test_accuracy,
                    std_accuracy: report.std_test_accuracy,
                });
            }
        }
    }
    Ok(points)
}
