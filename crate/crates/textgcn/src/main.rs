use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use textgcn::analysis::{self, Layer, SweepParameter};
use textgcn::baseline;
use textgcn::corpus::{self, Corpus, PreprocessOptions};
use textgcn::gcn;
use textgcn::graph::{build_graph, TextGraph};
use textgcn::market;
use textgcn::trainer::{self, TrainConfig, TrainReport};
use textgcn::{Error, Result};

#[derive(Parser)]
#[command(name = "textgcn", about = "Word-document graph construction and GCN text classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CorpusArgs {
    /// Documents file: one raw document per line.
    #[arg(long)]
    documents: PathBuf,
    /// Metadata file: doc_name<TAB>split<TAB>label per line.
    #[arg(long)]
    metadata: PathBuf,
    /// Minimum corpus frequency for a term to be kept.
    #[arg(long)]
    min_term_freq: Option<u32>,
    /// Disable stop-word and frequency filtering (short-text mode).
    #[arg(long)]
    no_filter: bool,
    /// Stop-word list file; defaults to the bundled list.
    #[arg(long)]
    stopwords: Option<PathBuf>,
    /// Optional flat key=value config file; flags override file values.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct TrainFlags {
    #[arg(long)]
    embedding_dim: Option<usize>,
    #[arg(long)]
    window_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    val_fraction: Option<f64>,
    /// Either a replicate count (seeds 0..n) or an explicit comma list.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    label_fraction: Option<f64>,
    /// Return the best-validation checkpoint instead of the last epoch.
    #[arg(long)]
    restore_best: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Build the text graph and write it in Matrix Market format.
    BuildGraph {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        window_size: Option<usize>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Train seeded replicates and write reports and per-epoch curves.
    Train {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        train: TrainFlags,
        #[arg(long)]
        output: PathBuf,
        /// Save the first seed's trained model as a checkpoint.
        #[arg(long)]
        save_model: Option<PathBuf>,
    },
    /// Test accuracy of a saved model checkpoint.
    Evaluate {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        window_size: Option<usize>,
    },
    /// Replicate accuracy across window sizes or embedding dimensions.
    Sweep {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        train: TrainFlags,
        /// window-size or embedding-dim.
        #[arg(long)]
        parameter: String,
        /// Comma-separated values, e.g. 5,10,15,20.
        #[arg(long)]
        values: String,
        #[arg(long)]
        output: PathBuf,
    },
    /// Replicate accuracy across training-label fractions.
    LabelSweep {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        train: TrainFlags,
        /// Comma-separated fractions, e.g. 0.01,0.05,0.1,0.2.
        #[arg(long)]
        fractions: String,
        #[arg(long)]
        output: PathBuf,
    },
    /// Export node embeddings as TSV for external visualization.
    ExportEmbeddings {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        model: PathBuf,
        /// first or second.
        #[arg(long, default_value = "second")]
        layer: String,
        #[arg(long)]
        window_size: Option<usize>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Highest-valued words per class from the second-layer embeddings.
    TopWords {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 10)]
        top_k: usize,
        #[arg(long)]
        window_size: Option<usize>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// TF-IDF + logistic regression baseline accuracy.
    Baseline {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        label_fraction: Option<f64>,
    },
}

fn read_config_file(path: &Path) -> Result<HashMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut map = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            detail: "expected key=value".into(),
        })?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn file_value<T: std::str::FromStr>(map: &HashMap<String, String>, key: &str) -> Result<Option<T>> {
    match map.get(key) {
        None => Ok(None),
        Some(raw) => raw
            .parse::<T>()
            .map(Some)
            .map_err(|_| Error::Config(format!("config key `{key}` has invalid value `{raw}`"))),
    }
}

fn parse_seeds(raw: &str) -> Result<Vec<u64>> {
    if raw.contains(',') {
        raw.split(',')
            .map(|s| {
                s.trim()
                    .parse::<u64>()
                    .map_err(|_| Error::Config(format!("bad seed `{s}`")))
            })
            .collect()
    } else {
        let n: u64 = raw
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad seed count `{raw}`")))?;
        if n == 0 {
            return Err(Error::Config("seed count must be positive".into()));
        }
        Ok((0..n).collect())
    }
}

fn parse_list<T: std::str::FromStr>(raw: &str, what: &str) -> Result<Vec<T>> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse::<T>()
                .map_err(|_| Error::Config(format!("bad {what} value `{s}`")))
        })
        .collect()
}

fn load_corpus(args: &CorpusArgs, file: &HashMap<String, String>) -> Result<Corpus> {
    let defaults = PreprocessOptions::default();
    let min_term_freq = args
        .min_term_freq
        .or(file_value(file, "min-term-freq")?)
        .unwrap_or(defaults.min_term_freq);
    let no_filter = args.no_filter || file_value::<bool>(file, "no-filter")?.unwrap_or(false);
    let stopwords = match (&args.stopwords, file.get("stopwords")) {
        (Some(path), _) => corpus::load_stopwords(path)?,
        (None, Some(path)) => corpus::load_stopwords(Path::new(path))?,
        (None, None) => defaults.stopwords,
    };
    let options = PreprocessOptions {
        min_term_freq,
        filter_enabled: !no_filter,
        stopwords,
    };
    corpus::build_corpus(&args.documents, &args.metadata, &options)
}

fn resolve_train_config(flags: &TrainFlags, file: &HashMap<String, String>) -> Result<TrainConfig> {
    let d = TrainConfig::default();
    let seeds = match (&flags.seeds, file.get("seeds")) {
        (Some(raw), _) => parse_seeds(raw)?,
        (None, Some(raw)) => parse_seeds(raw)?,
        (None, None) => d.seeds.clone(),
    };
    let config = TrainConfig {
        embedding_dim: flags
            .embedding_dim
            .or(file_value(file, "embedding-dim")?)
            .unwrap_or(d.embedding_dim),
        window_size: flags
            .window_size
            .or(file_value(file, "window-size")?)
            .unwrap_or(d.window_size),
        learning_rate: flags.lr.or(file_value(file, "lr")?).unwrap_or(d.learning_rate),
        dropout: flags
            .dropout
            .or(file_value(file, "dropout")?)
            .unwrap_or(d.dropout),
        l2_weight: flags.l2.or(file_value(file, "l2")?).unwrap_or(d.l2_weight),
        max_epochs: flags
            .max_epochs
            .or(file_value(file, "max-epochs")?)
            .unwrap_or(d.max_epochs),
        patience: flags
            .patience
            .or(file_value(file, "patience")?)
            .unwrap_or(d.patience),
        validation_fraction: flags
            .val_fraction
            .or(file_value(file, "val-fraction")?)
            .unwrap_or(d.validation_fraction),
        seeds,
        label_fraction: flags
            .label_fraction
            .or(file_value(file, "label-fraction")?)
            .unwrap_or(d.label_fraction),
        restore_best: flags.restore_best
            || file_value::<bool>(file, "restore-best")?.unwrap_or(false),
    };
    config.validate()?;
    Ok(config)
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path.display().to_string(), e))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path.display().to_string(), e))
}

fn write_node_map(path: &Path, corpus: &Corpus) -> Result<()> {
    let mut out = String::from("node_id\tkind\tname\n");
    for doc in &corpus.documents {
        out.push_str(&format!("{}\tdoc\t{}\n", doc.id, doc.name));
    }
    for (t, term) in corpus.vocabulary.terms.iter().enumerate() {
        out.push_str(&format!("{}\tword\t{}\n", corpus.num_docs() + t, term));
    }
    write_file(path, &out)
}

fn report_text_table(report: &TrainReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:>6} {:>14} {:>14} {:>13}\n",
        "seed", "test_accuracy", "stopped_epoch", "final_val"
    ));
    for run in &report.runs {
        let final_val = run.epochs.last().map(|e| e.val_loss).unwrap_or(f64::NAN);
        out.push_str(&format!(
            "{:>6} {:>14.4} {:>14} {:>13.4}\n",
            run.seed, run.test_accuracy, run.stopped_epoch, final_val
        ));
    }
    out.push_str(&format!(
        "\nmean {:.4}  std {:.4}  ({} runs)\n",
        report.mean_test_accuracy,
        report.std_test_accuracy,
        report.runs.len()
    ));
    out
}

fn curves_csv(run: &textgcn::trainer::RunReport) -> String {
    let mut out = String::from("epoch,train_loss,val_loss,val_acc\n");
    for e in &run.epochs {
        out.push_str(&format!(
            "{},{:.17e},{:.17e},{:.17e}\n",
            e.epoch, e.train_loss, e.val_loss, e.val_accuracy
        ));
    }
    out
}

fn sweep_csv(points: &[trainer::SweepPoint], value_name: &str) -> String {
    let mut out = format!("{value_name},mean_accuracy,std_accuracy\n");
    for p in points {
        out.push_str(&format!(
            "{},{:.17e},{:.17e}\n",
            p.value, p.mean_accuracy, p.std_accuracy
        ));
    }
    out
}

fn load_graph_for(corpus: &Corpus, window_size: Option<usize>) -> Result<TextGraph> {
    build_graph(corpus, window_size.unwrap_or(20))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::BuildGraph {
            corpus: corpus_args,
            window_size,
            output,
        } => {
            let file = match &corpus_args.config {
                Some(p) => read_config_file(p)?,
                None => HashMap::new(),
            };
            let corpus = load_corpus(&corpus_args, &file)?;
            let ws = window_size
                .or(file_value(&file, "window-size")?)
                .unwrap_or(20);
            let graph = build_graph(&corpus, ws)?;
            create_dir(&output)?;
            market::write(&output.join("adjacency.mtx"), &graph.adjacency, market::Layout::Symmetric)?;
            market::write(&output.join("normalized.mtx"), &graph.normalized, market::Layout::Symmetric)?;
            write_node_map(&output.join("node_map.tsv"), &corpus)?;
            println!("{}", serde_json::to_string(&graph.summary)?);
        }
        Command::Train {
            corpus: corpus_args,
            train,
            output,
            save_model,
        } => {
            let file = match &corpus_args.config {
                Some(p) => read_config_file(p)?,
                None => HashMap::new(),
            };
            let corpus = load_corpus(&corpus_args, &file)?;
            let config = resolve_train_config(&train, &file)?;
            let graph = build_graph(&corpus, config.window_size)?;
            let report = trainer::run_replicates(&corpus, &graph, &config)?;
            create_dir(&output)?;
            write_file(
                &output.join("report.json"),
                &serde_json::to_string_pretty(&report)?,
            )?;
            write_file(&output.join("report.txt"), &report_text_table(&report))?;
            for run in &report.runs {
                write_file(
                    &output.join(format!("curves-{}.csv", run.seed)),
                    &curves_csv(run),
                )?;
            }
            if let Some(model_path) = save_model {
                let (model, _) = trainer::train_once(&corpus, &graph, &config, config.seeds[0])?;
                gcn::save_checkpoint(&model_path, &model)?;
            }
            print!("{}", report_text_table(&report));
        }
        Command::Evaluate {
            corpus: corpus_args,
            model,
            window_size,
        } => {
            let file = match &corpus_args.config {
                Some(p) => read_config_file(p)?,
                None => HashMap::new(),
            };
            let corpus = load_corpus(&corpus_args, &file)?;
            let graph = load_graph_for(&corpus, window_size.or(file_value(&file, "window-size")?))?;
            let model = gcn::load_checkpoint(&model)?;
            let accuracy = trainer::evaluate(&model, &graph, &corpus, &corpus.test_doc_ids())?;
            println!("{}", serde_json::json!({ "test_accuracy": accuracy }));
        }
        Command::Sweep {
            corpus: corpus_args,
            train,
            parameter,
            values,
            output,
        } => {
            let file = match &corpus_args.config {
                Some(p) => read_config_file(p)?,
                None => HashMap::new(),
            };
            let corpus = load_corpus(&corpus_args, &file)?;
            let config = resolve_train_config(&train, &file)?;
            let parameter = SweepParameter::parse(&parameter)?;
            let values: Vec<usize> = parse_list(&values, "sweep")?;
            let points = analysis::sweep(&corpus, &config, parameter, &values)?;
            let name = match parameter {
                SweepParameter::WindowSize => "window_size",
                SweepParameter::EmbeddingDim => "embedding_dim",
            };
            write_file(&output, &sweep_csv(&points, name))?;
            print!("{}", sweep_csv(&points, name));
        }
        Command::LabelSweep {
            corpus: corpus_args,
            train,
            fractions,
            output,
        } => {
            let file = match &corpus_args.config {
                Some(p) => read_config_file(p)?,
                None => HashMap::new(),
            };
            let corpus = load_corpus(&corpus_args, &file)?;
            let config = resolve_train_config(&train, &file)?;
            let fractions: Vec<f64> = parse_list(&fractions, "fraction")?;
            let graph = build_graph(&corpus, config.window_size)?;
            let points = trainer::label_fraction_sweep(&corpus, &graph, &config, &fractions)?;
            write_file(&output, &sweep_csv(&points, "label_fraction"))?;
            print!("{}", sweep_csv(&points, "label_fraction"));
        }
        Command::ExportEmbeddings {
            corpus: corpus_args,
            model,
            layer,
            window_size,
            output,
        } => {
            let file = match &corpus_args.config {
                Some(p) => read_config_file(p)?,
                None => HashMap::new(),
            };
            let corpus = load_corpus(&corpus_args, &file)?;
            let graph = load_graph_for(&corpus, window_size.or(file_value(&file, "window-size")?))?;
            let model = gcn::load_checkpoint(&model)?;
            analysis::export_embeddings(&model, &graph, &corpus, Layer::parse(&layer)?, &output)?;
        }
        Command::TopWords {
            corpus: corpus_args,
            model,
            top_k,
            window_size,
            output,
        } => {
            let file = match &corpus_args.config {
                Some(p) => read_config_file(p)?,
                None => HashMap::new(),
            };
            let corpus = load_corpus(&corpus_args, &file)?;
            let graph = load_graph_for(&corpus, window_size.or(file_value(&file, "window-size")?))?;
            let model = gcn::load_checkpoint(&model)?;
            let table = analysis::top_words(&model, &graph, &corpus, top_k)?;
            let mut out = String::from("class\trank\tword\tvalue\n");
            for (f, words) in table.classes.iter().enumerate() {
                for (rank, (word, value)) in words.iter().enumerate() {
                    out.push_str(&format!(
                        "{}\t{}\t{}\t{:.6}\n",
                        corpus.label_names[f],
                        rank + 1,
                        word,
                        value
                    ));
                }
            }
            if let Some(path) = output {
                write_file(&path, &out)?;
            }
            print!("{out}");
        }
        Command::Baseline {
            corpus: corpus_args,
            seed,
            label_fraction,
        } => {
            let file = match &corpus_args.config {
                Some(p) => read_config_file(p)?,
                None => HashMap::new(),
            };
            let corpus = load_corpus(&corpus_args, &file)?;
            let fraction = label_fraction
                .or(file_value(&file, "label-fraction")?)
                .unwrap_or(1.0);
            let accuracy = baseline::tfidf_lr_baseline(&corpus, seed, fraction)?;
            println!(
                "{}",
                serde_json::json!({ "baseline_test_accuracy": accuracy, "seed": seed, "label_fraction": fraction })
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut stderr = std::io::stderr();
            let _ = writeln!(
                stderr,
                "{}",
                serde_json::json!({ "error": e.to_string() })
            );
            ExitCode::FAILURE
        }
    }
}
