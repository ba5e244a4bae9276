//! Heterogeneous text graph construction: sliding-window co-occurrence
//! statistics, PMI word-word edges, TF-IDF document-word edges, unit
//! self-loops, and the symmetric normalization of the result.
//!
//! Node layout: documents occupy ids `0..#docs`, word `w` sits at
//! `#docs + vocab_index(w)`.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::Corpus;
use crate::sparse::SparseMatrix;
use crate::{Error, Result};

/// Window counts over the whole corpus. A window containing a term more
/// than once still counts that window exactly once.
#[derive(Debug, Clone, Default)]
pub struct CooccurrenceStats {
    pub total_windows: u64,
    pub word_windows: Vec<u64>,
    /// Keyed by canonically ordered term pairs (i < j).
    pub pair_windows: HashMap<(u32, u32), u64>,
}

#[derive(Debug, Clone)]
pub struct TextGraph {
    pub adjacency: SparseMatrix,
    pub normalized: SparseMatrix,
    pub node_count: usize,
    pub summary: BuildSummary,
}

#[derive(Debug, Clone, Serialize)]
pub struct BuildSummary {
    pub nodes: usize,
    pub documents: usize,
    pub words: usize,
    pub self_loops: usize,
    /// Undirected edge counts (each stored twice in the adjacency).
    pub word_word_edges: usize,
    pub doc_word_edges: usize,
    pub total_windows: u64,
}

/// Slides a stride-1 window over every document and aggregates counts.
/// A document shorter than the window contributes exactly one window;
/// windows never cross document boundaries.
pub fn count_windows(corpus: &Corpus, window_size: usize) -> Result<CooccurrenceStats> {
    if window_size < 2 {
        return Err(Error::Graph(format!(
            "window size must be at least 2, got {window_size}"
        )));
    }
    let vocab_len = corpus.vocabulary.len();

    let partials: Vec<CooccurrenceStats> = corpus
        .documents
        .par_iter()
        .map(|doc| {
            let mut stats = CooccurrenceStats {
                total_windows: 0,
                word_windows: vec![0; vocab_len],
                pair_windows: HashMap::new(),
            };
            let len = doc.tokens.len();
            let width = window_size.min(len);
            let mut uniq: Vec<u32> = Vec::with_capacity(width);
            for start in 0..len.saturating_sub(width) + 1 {
                stats.total_windows += 1;
                uniq.clear();
                uniq.extend_from_slice(&doc.tokens[start..start + width]);
                uniq.sort_unstable();
                uniq.dedup();
                for (a, &i) in uniq.iter().enumerate() {
                    stats.word_windows[i as usize] += 1;
                    for &j in &uniq[a + 1..] {
                        *stats.pair_windows.entry((i, j)).or_insert(0) += 1;
                    }
                }
            }
            stats
        })
        .collect();

    let mut total = CooccurrenceStats {
        total_windows: 0,
        word_windows: vec![0; vocab_len],
        pair_windows: HashMap::new(),
    };
    for p in partials {
        total.total_windows += p.total_windows;
        for (acc, v) in total.word_windows.iter_mut().zip(&p.word_windows) {
            *acc += v;
        }
        for (k, v) in p.pair_windows {
            *total.pair_windows.entry(k).or_insert(0) += v;
        }
    }
    Ok(total)
}

/// Pointwise mutual information of a term pair from window counts.
/// Returns `None` when the pair never co-occurs or PMI is non-positive;
/// only positive values become edges.
pub fn pmi(stats: &CooccurrenceStats, i: u32, j: u32) -> Result<Option<f64>> {
    if i == j {
        return Err(Error::Graph(
            "self-PMI is not an edge; self-loops are added separately".into(),
        ));
    }
    let key = if i < j { (i, j) } else { (j, i) };
    let joint = match stats.pair_windows.get(&key) {
        Some(&c) if c > 0 => c,
        _ => return Ok(None),
    };
    let wi = stats.word_windows[i as usize];
    let wj = stats.word_windows[j as usize];
    let value =
        ((joint as f64 * stats.total_windows as f64) / (wi as f64 * wj as f64)).ln();
    Ok(if value > 0.0 { Some(value) } else { None })
}

/// TF-IDF of a term in a document: raw in-document count times
/// `ln(N / df)`. `None` when the term is absent or idf is zero.
pub fn tfidf(corpus: &Corpus, doc: usize, term: u32) -> Option<f64> {
    let tf = corpus.documents[doc]
        .tokens
        .iter()
        .filter(|&&t| t == term)
        .count();
    if tf == 0 {
        return None;
    }
    let n = corpus.num_docs() as f64;
    let df = corpus.vocabulary.doc_freq[term as usize] as f64;
    let idf = (n / df).ln();
    if idf == 0.0 {
        None
    } else {
        Some(tf as f64 * idf)
    }
}

/// Assembles the full symmetric adjacency (PMI + TF-IDF + unit self-loops)
/// and its normalized form.
pub fn build_graph(corpus: &Corpus, window_size: usize) -> Result<TextGraph> {
    if corpus.documents.is_empty() {
        return Err(Error::Graph("cannot build a graph from an empty corpus".into()));
    }
    let stats = count_windows(corpus, window_size)?;
    let num_docs = corpus.num_docs();
    let n = corpus.node_count();

    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    for node in 0..n {
        triplets.push((node, node, 1.0));
    }

    let mut word_word_edges = 0usize;
    for &(i, j) in stats.pair_windows.keys() {
        if let Some(w) = pmi(&stats, i, j)? {
            let a = num_docs + i as usize;
            let b = num_docs + j as usize;
            triplets.push((a, b, w));
            triplets.push((b, a, w));
            word_word_edges += 1;
        }
    }

    let n_docs_f = num_docs as f64;
    let mut doc_word_edges = 0usize;
    for doc in &corpus.documents {
        let mut tf: HashMap<u32, usize> = HashMap::new();
        for &t in &doc.tokens {
            *tf.entry(t).or_insert(0) += 1;
        }
        for (&term, &count) in &tf {
            let idf = (n_docs_f / corpus.vocabulary.doc_freq[term as usize] as f64).ln();
            let w = count as f64 * idf;
            if w > 0.0 {
                let word_node = num_docs + term as usize;
                triplets.push((doc.id, word_node, w));
                triplets.push((word_node, doc.id, w));
                doc_word_edges += 1;
            }
        }
    }

    let adjacency = SparseMatrix::from_triplets(n, n, triplets)?;
    let normalized = adjacency.normalize_symmetric()?;
    let summary = BuildSummary {
        nodes: n,
        documents: num_docs,
        words: corpus.vocabulary.len(),
        self_loops: n,
        word_word_edges,
        doc_word_edges,
        total_windows: stats.total_windows,
    };
    Ok(TextGraph {
        adjacency,
        normalized,
        node_count: n,
        summary,
    })
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)] // index-style dense oracles
mod tests {
    use super::*;
    use crate::corpus::{build_corpus, PreprocessOptions};
    use std::collections::HashSet;
    use std::io::Write;
    use std::path::PathBuf;

    fn corpus_from(docs: &[&str], metas: &[(&str, &str, &str)]) -> Corpus {
        let dir = tempfile::tempdir().unwrap();
        let docs_path: PathBuf = dir.path().join("docs.txt");
        let meta_path: PathBuf = dir.path().join("meta.txt");
        let mut f = std::fs::File::create(&docs_path).unwrap();
        for d in docs {
            writeln!(f, "{d}").unwrap();
        }
        let mut f = std::fs::File::create(&meta_path).unwrap();
        for (n, s, l) in metas {
            writeln!(f, "{n}\t{s}\t{l}").unwrap();
        }
        let options = PreprocessOptions {
            filter_enabled: false,
            ..Default::default()
        };
        build_corpus(&docs_path, &meta_path, &options).unwrap()
    }

    fn two_class_meta(n: usize) -> Vec<(String, &'static str, &'static str)> {
        (0..n)
            .map(|i| {
                (
                    format!("d{i}"),
                    if i == 0 { "train" } else { "test" },
                    "x",
                )
            })
            .collect()
    }

    fn simple_corpus(docs: &[&str]) -> Corpus {
        let metas = two_class_meta(docs.len());
        let meta_refs: Vec<(&str, &str, &str)> =
            metas.iter().map(|(n, s, l)| (n.as_str(), *s, *l)).collect();
        corpus_from(docs, &meta_refs)
    }

    #[test]
    fn short_document_yields_one_window() {
        let corpus = simple_corpus(&["a b"]);
        let stats = count_windows(&corpus, 20).unwrap();
        assert_eq!(stats.total_windows, 1);
        assert_eq!(stats.word_windows, vec![1, 1]);
        assert_eq!(stats.pair_windows[&(0, 1)], 1);
    }

    #[test]
    fn repeated_term_counts_window_once() {
        // [a, b, a] with window 2: windows {a,b} and {b,a}.
        let corpus = simple_corpus(&["a b a"]);
        let stats = count_windows(&corpus, 2).unwrap();
        assert_eq!(stats.total_windows, 2);
        assert_eq!(stats.word_windows, vec![2, 2]);
        assert_eq!(stats.pair_windows[&(0, 1)], 2);
    }

    #[test]
    fn window_size_below_two_is_rejected() {
        let corpus = simple_corpus(&["a b"]);
        assert!(count_windows(&corpus, 1).is_err());
    }

    #[test]
    fn counts_match_brute_force_enumeration() {
        // Deterministic pseudo-random 30-token doc over 5 terms.
        let terms = ["t0", "t1", "t2", "t3", "t4"];
        let mut state = 12345u64;
        let mut toks = Vec::new();
        for _ in 0..30 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            toks.push(terms[(state >> 33) as usize % 5]);
        }
        let text = toks.join(" ");
        let corpus = simple_corpus(&[&text]);
        let ws = 3;
        let stats = count_windows(&corpus, ws).unwrap();

        let doc = &corpus.documents[0].tokens;
        let mut total = 0u64;
        let mut per_word = vec![0u64; corpus.vocabulary.len()];
        let mut per_pair: HashMap<(u32, u32), u64> = HashMap::new();
        for w in doc.windows(ws) {
            total += 1;
            let set: HashSet<u32> = w.iter().copied().collect();
            let mut v: Vec<u32> = set.into_iter().collect();
            v.sort_unstable();
            for (a, &i) in v.iter().enumerate() {
                per_word[i as usize] += 1;
                for &j in &v[a + 1..] {
                    *per_pair.entry((i, j)).or_insert(0) += 1;
                }
            }
        }
        assert_eq!(stats.total_windows, total);
        assert_eq!(stats.word_windows, per_word);
        assert_eq!(stats.pair_windows, per_pair);
    }

    #[test]
    fn pmi_zero_is_absent() {
        // One window containing exactly {a, b}: PMI = ln(1*1/(1*1)) = 0.
        let corpus = simple_corpus(&["a b"]);
        let stats = count_windows(&corpus, 20).unwrap();
        assert_eq!(pmi(&stats, 0, 1).unwrap(), None);
    }

    #[test]
    fn pmi_positive_case() {
        let stats = CooccurrenceStats {
            total_windows: 4,
            word_windows: vec![1, 2],
            pair_windows: [((0u32, 1u32), 1u64)].into_iter().collect(),
        };
        let v = pmi(&stats, 0, 1).unwrap().unwrap();
        assert!((v - 2.0f64.ln()).abs() < 1e-12);
        // Symmetric lookup.
        assert_eq!(pmi(&stats, 1, 0).unwrap().unwrap(), v);
    }

    #[test]
    fn pmi_absent_without_cooccurrence_and_error_on_self() {
        let stats = CooccurrenceStats {
            total_windows: 4,
            word_windows: vec![2, 2],
            pair_windows: HashMap::new(),
        };
        assert_eq!(pmi(&stats, 0, 1).unwrap(), None);
        assert!(pmi(&stats, 1, 1).is_err());
    }

    #[test]
    fn tfidf_examples() {
        // doc0 = "a a b", doc1 = "b": term a appears twice in doc0, df=1, N=2.
        let corpus = simple_corpus(&["a a b", "b"]);
        let a = corpus.vocabulary.index["a"];
        let b = corpus.vocabulary.index["b"];
        let v = tfidf(&corpus, 0, a).unwrap();
        assert!((v - 2.0 * 2.0f64.ln()).abs() < 1e-12);
        // Absent term.
        assert_eq!(tfidf(&corpus, 1, a), None);
        // df = N makes idf zero, edge omitted.
        assert_eq!(tfidf(&corpus, 0, b), None);
    }

    #[test]
    fn single_doc_graph_degenerates_to_self_loops() {
        let corpus = simple_corpus(&["a"]);
        let g = build_graph(&corpus, 20).unwrap();
        assert_eq!(g.node_count, 2);
        assert_eq!(g.adjacency.nnz(), 2);
        assert_eq!(g.adjacency.get(0, 0), 1.0);
        assert_eq!(g.adjacency.get(1, 1), 1.0);
        assert_eq!(g.summary.doc_word_edges, 0);
    }

    /// Direct evaluation of the edge-weight cases over all node pairs.
    fn dense_reference_adjacency(corpus: &Corpus, window_size: usize) -> Vec<Vec<f64>> {
        let n = corpus.node_count();
        let d = corpus.num_docs();
        let stats = count_windows(corpus, window_size).unwrap();
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    a[i][j] = 1.0;
                } else if i >= d && j >= d {
                    if let Some(v) = pmi(&stats, (i - d) as u32, (j - d) as u32).unwrap() {
                        a[i][j] = v;
                    }
                } else if i < d && j >= d {
                    if let Some(v) = tfidf(corpus, i, (j - d) as u32) {
                        a[i][j] = v;
                    }
                } else if i >= d && j < d {
                    if let Some(v) = tfidf(corpus, j, (i - d) as u32) {
                        a[i][j] = v;
                    }
                }
            }
        }
        a
    }

    #[test]
    fn two_doc_graph_matches_hand_assembly() {
        // Docs [a,b] and [b,c]: idf(a) = idf(c) = ln 2, idf(b) = 0.
        let corpus = simple_corpus(&["a b", "b c"]);
        let g = build_graph(&corpus, 20).unwrap();
        assert_eq!(g.node_count, 5);
        let d = 2;
        let (a, b, c) = (
            corpus.vocabulary.index["a"] as usize,
            corpus.vocabulary.index["b"] as usize,
            corpus.vocabulary.index["c"] as usize,
        );
        let ln2 = 2.0f64.ln();
        assert!((g.adjacency.get(0, d + a) - ln2).abs() < 1e-12);
        assert!((g.adjacency.get(1, d + c) - ln2).abs() < 1e-12);
        assert_eq!(g.adjacency.get(0, d + b), 0.0);
        assert_eq!(g.adjacency.get(1, d + b), 0.0);
        // Word-word PMI: #W = 2, #W(a) = #W(b) = ... from the two windows.
        // PMI(a, c) absent (never co-occur); PMI(a, b) = ln(1*2/(1*2)) = 0,
        // also absent. So no word-word edges at all here.
        assert_eq!(g.summary.word_word_edges, 0);

        let reference = dense_reference_adjacency(&corpus, 20);
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(g.adjacency.get(i, j), reference[i][j], "({i},{j})");
            }
        }
    }

    #[test]
    fn adjacency_matches_dense_reference_on_micro_corpora() {
        let vocab = ["red", "blue", "green", "cat", "dog", "fish", "sun"];
        let mut state = 99u64;
        let mut next = |m: u64| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 33) % m
        };
        for round in 0..10 {
            let n_docs = 2 + next(4) as usize;
            let docs: Vec<String> = (0..n_docs)
                .map(|_| {
                    let len = 1 + next(8) as usize;
                    (0..len)
                        .map(|_| vocab[next(vocab.len() as u64) as usize])
                        .collect::<Vec<_>>()
                        .join(" ")
                })
                .collect();
            let doc_refs: Vec<&str> = docs.iter().map(String::as_str).collect();
            let metas: Vec<(String, &str, &str)> = (0..n_docs)
                .map(|i| (format!("d{i}"), if i == 0 { "train" } else { "test" }, "x"))
                .collect();
            let meta_refs: Vec<(&str, &str, &str)> =
                metas.iter().map(|(n, s, l)| (n.as_str(), *s, *l)).collect();
            let corpus = corpus_from(&doc_refs, &meta_refs);
            let window = 2 + (round % 4);
            let g = build_graph(&corpus, window).unwrap();
            let reference = dense_reference_adjacency(&corpus, window);
            let n = corpus.node_count();
            for i in 0..n {
                for j in 0..n {
                    assert_eq!(g.adjacency.get(i, j), reference[i][j], "round {round} ({i},{j})");
                }
            }
            assert!(g.adjacency.is_symmetric());
        }
    }

    #[test]
    fn stored_word_word_edges_recompute_to_positive_pmi() {
        let corpus = simple_corpus(&[
            "cat dog cat fish",
            "dog fish dog",
            "sun sun cat dog fish",
        ]);
        let stats = count_windows(&corpus, 3).unwrap();
        let g = build_graph(&corpus, 3).unwrap();
        let d = corpus.num_docs();
        for (i, j, _) in g.adjacency.iter() {
            if i >= d && j >= d && i != j {
                let v = pmi(&stats, (i - d) as u32, (j - d) as u32).unwrap();
                assert!(v.is_some() && v.unwrap() > 0.0);
            }
        }
        // No document-document off-diagonal edges.
        for (i, j, _) in g.adjacency.iter() {
            assert!(!(i < d && j < d && i != j));
        }
    }
}
