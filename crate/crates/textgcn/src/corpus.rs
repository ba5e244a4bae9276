//! Corpus ingestion: tokenization, stop-word and frequency filtering,
//! vocabulary assembly, and the train/validation split.
//!
//! Tokenization follows the common sentence-cleaning convention for text
//! classification corpora: strip characters outside `A-Za-z0-9(),!?'` and
//! backtick, split contractions ("don't" -> "do n't"), space out
//! punctuation, collapse whitespace, lowercase.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use regex::Regex;
use unicode_normalization::UnicodeNormalization;

use crate::{Error, Result};

/// Frozen copy of the NLTK English stop-word list.
pub const BUNDLED_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone)]
pub struct Document {
    pub id: usize,
    pub name: String,
    pub tokens: Vec<u32>,
    pub split: Split,
    pub label: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Vocabulary {
    pub terms: Vec<String>,
    pub index: HashMap<String, u32>,
    pub doc_freq: Vec<u32>,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub vocabulary: Vocabulary,
    pub num_classes: usize,
    pub label_names: Vec<String>,
}

impl Corpus {
    pub fn num_docs(&self) -> usize {
        self.documents.len()
    }

    /// Documents first, words after: total graph node count.
    pub fn node_count(&self) -> usize {
        self.documents.len() + self.vocabulary.len()
    }

    pub fn word_node(&self, term: u32) -> usize {
        self.documents.len() + term as usize
    }

    pub fn train_doc_ids(&self) -> Vec<usize> {
        self.documents
            .iter()
            .filter(|d| d.split == Split::Train)
            .map(|d| d.id)
            .collect()
    }

    pub fn test_doc_ids(&self) -> Vec<usize> {
        self.documents
            .iter()
            .filter(|d| d.split == Split::Test)
            .map(|d| d.id)
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct PreprocessOptions {
    pub min_term_freq: u32,
    /// When false (short-text mode) no stop-word or frequency filtering runs.
    pub filter_enabled: bool,
    pub stopwords: HashSet<String>,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        PreprocessOptions {
            min_term_freq: 5,
            filter_enabled: true,
            stopwords: bundled_stopwords(),
        }
    }
}

pub fn bundled_stopwords() -> HashSet<String> {
    BUNDLED_STOPWORDS
        .lines()
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty())
        .collect()
}

pub fn load_stopwords(path: &Path) -> Result<HashSet<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(text
        .lines()
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty())
        .collect())
}

fn strip_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[^A-Za-z0-9(),!?'`]").unwrap())
}

fn squeeze_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\s{2,}").unwrap())
}

/// Cleans and tokenizes one raw document. Empty input yields an empty list.
pub fn tokenize(raw_text: &str) -> Vec<String> {
    // Lowercase before the contraction splits so "DON'T" and "don't"
    // tokenize identically and re-tokenizing output is a fixed point.
    let text: String = raw_text.nfc().collect::<String>().to_lowercase();
    let text = strip_regex().replace_all(&text, " ");
    let text = text
        .replace("'s", " 's")
        .replace("'ve", " 've")
        .replace("n't", " n't")
        .replace("'re", " 're")
        .replace("'d", " 'd")
        .replace("'ll", " 'll")
        .replace(',', " , ")
        .replace('!', " ! ")
        .replace('(', " ( ")
        .replace(')', " ) ")
        .replace('?', " ? ");
    let text = squeeze_regex().replace_all(&text, " ");
    text.split_whitespace()
        .map(str::to_string)
        .collect()
}

/// Reads the documents and metadata files and assembles a deterministic
/// corpus. Vocabulary indices follow first occurrence in document order.
pub fn build_corpus(
    documents_path: &Path,
    metadata_path: &Path,
    options: &PreprocessOptions,
) -> Result<Corpus> {
    let docs_text = fs::read_to_string(documents_path)
        .map_err(|e| Error::io(documents_path.display().to_string(), e))?;
    let meta_text = fs::read_to_string(metadata_path)
        .map_err(|e| Error::io(metadata_path.display().to_string(), e))?;
    let doc_lines: Vec<&str> = docs_text.lines().collect();
    let meta_lines: Vec<&str> = meta_text.lines().collect();
    if doc_lines.len() != meta_lines.len() {
        return Err(Error::Corpus(format!(
            "documents file has {} lines but metadata file has {}",
            doc_lines.len(),
            meta_lines.len()
        )));
    }
    if doc_lines.is_empty() {
        return Err(Error::Corpus("corpus is empty".into()));
    }

    struct Meta {
        name: String,
        split: Split,
        label: String,
    }
    let mut metas = Vec::with_capacity(meta_lines.len());
    for (i, line) in meta_lines.iter().enumerate() {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                path: metadata_path.display().to_string(),
                line: i + 1,
                detail: format!("expected `name<TAB>split<TAB>label`, got {} fields", fields.len()),
            });
        }
        let split = match fields[1] {
            "train" => Split::Train,
            "test" => Split::Test,
            other => {
                return Err(Error::Parse {
                    path: metadata_path.display().to_string(),
                    line: i + 1,
                    detail: format!("unknown split `{other}` (expected train or test)"),
                })
            }
        };
        metas.push(Meta {
            name: fields[0].to_string(),
            split,
            label: fields[2].to_string(),
        });
    }

    let tokenized: Vec<Vec<String>> = doc_lines.par_iter().map(|l| tokenize(l)).collect();

    // Corpus-wide term frequencies on the cleaned text; the stop-word and
    // low-frequency filters are applied together in a single pass.
    let retained: Vec<Vec<String>> = if options.filter_enabled {
        let mut term_freq: HashMap<&str, u32> = HashMap::new();
        for doc in &tokenized {
            for tok in doc {
                *term_freq.entry(tok.as_str()).or_insert(0) += 1;
            }
        }
        tokenized
            .iter()
            .map(|doc| {
                doc.iter()
                    .filter(|t| {
                        term_freq[t.as_str()] >= options.min_term_freq
                            && !options.stopwords.contains(t.as_str())
                    })
                    .cloned()
                    .collect()
            })
            .collect()
    } else {
        tokenized
    };

    for (i, doc) in retained.iter().enumerate() {
        if doc.is_empty() {
            return Err(Error::Corpus(format!(
                "document on line {} is empty after preprocessing",
                i + 1
            )));
        }
    }

    // Sequential vocabulary assembly in document order keeps indices stable.
    let mut vocabulary = Vocabulary::default();
    let mut label_index: HashMap<String, usize> = HashMap::new();
    let mut label_names = Vec::new();
    let mut documents = Vec::with_capacity(retained.len());
    for (i, (tokens, meta)) in retained.iter().zip(&metas).enumerate() {
        let mut ids = Vec::with_capacity(tokens.len());
        let mut seen_in_doc = HashSet::new();
        for tok in tokens {
            let id = match vocabulary.index.get(tok) {
                Some(&id) => id,
                None => {
                    let id = vocabulary.terms.len() as u32;
                    vocabulary.terms.push(tok.clone());
                    vocabulary.index.insert(tok.clone(), id);
                    vocabulary.doc_freq.push(0);
                    id
                }
            };
            if seen_in_doc.insert(id) {
                vocabulary.doc_freq[id as usize] += 1;
            }
            ids.push(id);
        }
        let label = match label_index.get(&meta.label) {
            Some(&l) => l,
            None => {
                let l = label_names.len();
                label_names.push(meta.label.clone());
                label_index.insert(meta.label.clone(), l);
                l
            }
        };
        documents.push(Document {
            id: i,
            name: meta.name.clone(),
            tokens: ids,
            split: meta.split,
            label,
        });
    }

    let num_classes = label_names.len();
    let mut train_class_seen = vec![false; num_classes];
    for d in &documents {
        if d.split == Split::Train {
            train_class_seen[d.label] = true;
        }
    }
    if let Some(missing) = train_class_seen.iter().position(|seen| !seen) {
        return Err(Error::Corpus(format!(
            "class `{}` has no training documents",
            label_names[missing]
        )));
    }

    Ok(Corpus {
        documents,
        vocabulary,
        num_classes,
        label_names,
    })
}

/// Seed-deterministic uniform partition of the training documents into
/// (train, validation). Validation size is round(fraction * #train), at
/// least 1. Returned index lists are sorted.
pub fn split_validation(
    corpus: &Corpus,
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!(
            "validation fraction must be in (0, 1), got {fraction}"
        )));
    }
    let mut train = corpus.train_doc_ids();
    if train.len() < 2 {
        return Err(Error::Corpus(
            "need at least 2 training documents to split".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    train.shuffle(&mut rng);
    let val_size = ((fraction * train.len() as f64).round() as usize)
        .max(1)
        .min(train.len() - 1);
    let mut validation: Vec<usize> = train.split_off(train.len() - val_size);
    train.sort_unstable();
    validation.sort_unstable();
    Ok((train, validation))
}
