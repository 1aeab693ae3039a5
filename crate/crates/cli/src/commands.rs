//! The workflows behind each subcommand, callable without the argument
//! parser.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};

use emojinet::corpus::{class_counts, EncodedSet, Example, Split, SplitCorpus, NUM_CLASSES};
use emojinet::losses::Criterion;
use emojinet::metrics::{report, ClassificationReport, ConfusionMatrix};
use emojinet::models::{Arch, Model};
use emojinet::tensor::rng::{seeded, RngState};
use emojinet::tokenizer::{Vocabulary, MAX_LEN};
use emojinet::training::{self, curves_csv, curves_svg, TrainOptions, TrainOutcome};

use crate::config::{RunConfig, Settings};
use crate::error::{io_err, CliError, Result};

pub const CHECKPOINT: &str = "model.ckpt";
pub const VOCAB: &str = "vocab.txt";
pub const CONFIG_RESOLVED: &str = "config_resolved";
pub const CURVES_CSV: &str = "curves.csv";
pub const CURVES_SVG: &str = "curves.svg";
pub const REPORT_TXT: &str = "report.txt";
pub const REPORT_JSON: &str = "report.json";
pub const CONFUSION_CSV: &str = "confusion.csv";
pub const COMPARISON_TXT: &str = "comparison.txt";
pub const COMPARISON_CSV: &str = "comparison.csv";

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(io_err(path))
}

fn limited(examples: &[Example], limit: Option<usize>) -> &[Example] {
    &examples[..limit.map_or(examples.len(), |n| n.min(examples.len()))]
}

/// Split sizes and label distribution of a data directory.
#[derive(Clone, Debug)]
pub struct DataSummary {
    pub labels: Vec<String>,
    pub sizes: [usize; 3],
    pub counts: [[usize; NUM_CLASSES]; 3],
    /// Most over least frequent training label; infinite when a label is
    /// missing.
    pub imbalance_ratio: f64,
    pub missing_train_labels: Vec<usize>,
}

impl fmt::Display for DataSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (split, size) in Split::ALL.iter().zip(self.sizes) {
            writeln!(f, "{:<12}{size:>8} examples", split.name())?;
        }
        writeln!(f)?;
        writeln!(f, "{:<32}{:>10}{:>12}{:>10}", "label", "train", "validation", "test")?;
        for (c, name) in self.labels.iter().enumerate() {
            writeln!(
                f,
                "{name:<32}{:>10}{:>12}{:>10}",
                self.counts[0][c], self.counts[1][c], self.counts[2][c]
            )?;
        }
        writeln!(f)?;
        writeln!(f, "train imbalance ratio (most / least frequent): {:.2}", self.imbalance_ratio)
    }
}

/// Loads every split. Fails when a file is missing or malformed, and after
/// summarizing when a label never occurs in train.
pub fn check_data(dir: &Path) -> Result<DataSummary> {
    let corpus = SplitCorpus::load(dir)?;
    let counts = Split::ALL.map(|s| corpus.class_counts(s));
    let train = counts[0];
    let max = *train.iter().max().expect("20 classes");
    let min = *train.iter().min().expect("20 classes");
    Ok(DataSummary {
        labels: corpus.labels.names().to_vec(),
        sizes: Split::ALL.map(|s| corpus.split(s).len()),
        counts,
        imbalance_ratio: if min == 0 { f64::INFINITY } else { max as f64 / min as f64 },
        missing_train_labels: corpus.missing_train_labels(),
    })
}

/// Builds the vocabulary of the (optionally truncated) train split and
/// writes it to `out`.
pub fn build_vocab(data_dir: &Path, min_freq: usize, limit_train: Option<usize>, out: &Path) -> Result<Vocabulary> {
    let corpus = SplitCorpus::load(data_dir)?;
    let vocab = Vocabulary::build(limited(&corpus.train, limit_train), min_freq)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    vocab.save(out)?;
    Ok(vocab)
}

/// A report and the confusion matrix it came from.
#[derive(Clone, Debug)]
pub struct Assessment {
    pub report: ClassificationReport,
    pub confusion: ConfusionMatrix,
}

impl Assessment {
    /// Writes `report.txt`, `report.json` and `confusion.csv` into `dir`.
    pub fn write(&self, dir: &Path, names: &[String]) -> Result<()> {
        write(&dir.join(REPORT_TXT), self.report.to_text())?;
        write(&dir.join(REPORT_JSON), self.report.to_json()?)?;
        write(&dir.join(CONFUSION_CSV), self.confusion.to_csv(names))
    }
}

fn assess(model: &Model, examples: &[Example], vocab: &Vocabulary, names: &[String]) -> Result<Assessment> {
    let set = EncodedSet::new(examples, vocab, MAX_LEN);
    let eval = training::evaluate(model, &set, None)?;
    let confusion = ConfusionMatrix::from_predictions(&set.labels, &eval.predictions, names.len())?;
    Ok(Assessment {
        report: report(&confusion, names)?,
        confusion,
    })
}

/// Everything a training run produced.
#[derive(Clone, Debug)]
pub struct TrainRun {
    pub config: RunConfig,
    pub outcome: TrainOutcome,
    pub test: Assessment,
}

/// Trains one model, evaluates it on the (optionally truncated) test split
/// and writes all artifacts into `cfg.out`.
pub fn train(cfg: &RunConfig) -> Result<TrainRun> {
    let corpus = SplitCorpus::load(&cfg.data_dir)?;
    let train_examples = limited(&corpus.train, cfg.limit_train);
    let counts = class_counts(train_examples);
    if let Some(c) = (0..NUM_CLASSES).find(|&c| counts[c] == 0) {
        return Err(CliError::Data(format!(
            "label {} has no training example{}; class weights are undefined",
            corpus.labels.name(c),
            if cfg.limit_train.is_some() { " within --limit-train" } else { "" }
        )));
    }
    let vocab = Vocabulary::build(train_examples, cfg.min_freq)?;
    log::info!(
        "{}: {} training examples, vocabulary of {} tokens",
        cfg.arch,
        train_examples.len(),
        vocab.len()
    );
    let train_set = EncodedSet::new(train_examples, &vocab, MAX_LEN);
    let val_set = EncodedSet::new(&corpus.validation, &vocab, MAX_LEN);

    let mut rng = seeded(cfg.seed);
    let mut model: Model = Model::new(cfg.model_config(vocab.len()), &mut rng)?;
    log::info!("{}: {} parameters", cfg.arch, model.num_parameters());
    let criterion = Criterion::from_kind(cfg.train.loss, cfg.train.gamma, &counts)?;
    let opts = TrainOptions {
        epochs: cfg.train.epochs,
        batch_size: cfg.train.batch_size,
        patience: cfg.train.patience,
    };
    let outcome = training::train(
        &mut model,
        &train_set,
        Some(&val_set),
        criterion,
        cfg.train.optim.clone(),
        &opts,
        &mut rng,
    )?;

    let out = &cfg.out;
    fs::create_dir_all(out).map_err(io_err(out))?;
    write(&out.join(CONFIG_RESOLVED), cfg.to_file_string())?;
    vocab.save(&out.join(VOCAB))?;
    let mut meta = serde_json::Map::new();
    meta.insert("run".into(), cfg.to_json().into());
    meta.insert("best_epoch".into(), outcome.best_epoch.into());
    model.save(&out.join(CHECKPOINT), Some(RngState::capture(&rng)), Some(vocab.hash()), meta)?;
    write(&out.join(CURVES_CSV), curves_csv(&outcome.records))?;
    let title = format!("{} (seed {})", cfg.arch, cfg.seed);
    write(&out.join(CURVES_SVG), curves_svg(&outcome.records, &title))?;

    let names = corpus.labels.names();
    let test = assess(&model, limited(&corpus.test, cfg.limit_test), &vocab, names)?;
    test.write(out, names)?;
    log::info!(
        "{}: test accuracy {:.4}, macro F1 {:.4}, weighted F1 {:.4}",
        cfg.arch,
        test.report.accuracy,
        test.report.macro_avg.f1,
        test.report.weighted_avg.f1
    );
    Ok(TrainRun {
        config: cfg.clone(),
        outcome,
        test,
    })
}

#[derive(Clone, Debug)]
pub struct EvaluateArgs {
    pub checkpoint: PathBuf,
    /// Defaults to the data directory recorded in the checkpoint.
    pub data_dir: Option<PathBuf>,
    pub split: Split,
    pub limit: Option<usize>,
    /// Defaults to `vocab.txt` next to the checkpoint.
    pub vocab: Option<PathBuf>,
    /// Defaults to the checkpoint's directory.
    pub out: Option<PathBuf>,
}

/// Evaluates a saved model on one split and writes its reports.
pub fn evaluate(args: &EvaluateArgs) -> Result<Assessment> {
    let (model, header) = Model::load(&args.checkpoint)?;
    let ckpt_dir = args.checkpoint.parent().unwrap_or(Path::new("."));
    let vocab_path = args.vocab.clone().unwrap_or_else(|| ckpt_dir.join(VOCAB));
    let vocab = Vocabulary::load(&vocab_path)?;
    let found = vocab.hash();
    match header.vocab_hash {
        Some(expected) if expected != found => {
            return Err(CliError::VocabMismatch {
                vocab: vocab_path,
                expected,
                found,
            })
        }
        Some(_) => {}
        None => log::warn!("checkpoint records no vocabulary hash; cannot verify {}", vocab_path.display()),
    }
    if vocab.len() != model.config.vocab_size {
        return Err(CliError::Data(format!(
            "vocabulary has {} tokens, model expects {}",
            vocab.len(),
            model.config.vocab_size
        )));
    }
    let data_dir = match &args.data_dir {
        Some(d) => d.clone(),
        None => header
            .meta
            .get("run")
            .and_then(|r| r.get("data_dir"))
            .and_then(|d| d.as_str())
            .map(PathBuf::from)
            .ok_or_else(|| CliError::Usage("checkpoint records no data directory; pass --data-dir".into()))?,
    };
    let corpus = SplitCorpus::load(&data_dir)?;
    let names = corpus.labels.names();
    let assessment = assess(&model, limited(corpus.split(args.split), args.limit), &vocab, names)?;
    let out = args.out.clone().unwrap_or_else(|| ckpt_dir.to_path_buf());
    fs::create_dir_all(&out).map_err(io_err(&out))?;
    assessment.write(&out, names)?;
    Ok(assessment)
}

/// One row of the architecture comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub arch: Arch,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub weighted_f1: f64,
}

pub fn comparison_table(rows: &[ComparisonRow]) -> String {
    let mut out = format!("{:<14}{:>10}{:>10}{:>13}\n", "model", "accuracy", "macro F1", "weighted F1");
    for r in rows {
        writeln!(
            out,
            "{:<14}{:>10.4}{:>10.4}{:>13.4}",
            r.arch.name(),
            r.accuracy,
            r.macro_f1,
            r.weighted_f1
        )
        .expect("writing to a String");
    }
    out
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from("model,accuracy,macro_f1,weighted_f1\n");
    for r in rows {
        writeln!(out, "{},{},{},{}", r.arch.name(), r.accuracy, r.macro_f1, r.weighted_f1).expect("writing to a String");
    }
    out
}

/// Trains each architecture in turn (one at a time) with otherwise
/// identical settings, each into `<out>/<arch>`, and writes the combined
/// table into `<out>`.
pub fn compare(settings: &Settings, archs: &[Arch]) -> Result<Vec<ComparisonRow>> {
    let base_out = settings.out.clone().unwrap_or_else(|| PathBuf::from("runs/compare"));
    let mut rows = Vec::with_capacity(archs.len());
    for &arch in archs {
        let cfg = RunConfig::resolve(&settings.clone().overlay(Settings {
            arch: Some(arch),
            out: Some(base_out.join(arch.name())),
            ..Settings::default()
        }))?;
        let run = train(&cfg)?;
        let r = &run.test.report;
        rows.push(ComparisonRow {
            arch,
            accuracy: r.accuracy,
            macro_f1: r.macro_avg.f1,
            weighted_f1: r.weighted_avg.f1,
        });
    }
    fs::create_dir_all(&base_out).map_err(io_err(&base_out))?;
    write(&base_out.join(COMPARISON_TXT), comparison_table(&rows))?;
    write(&base_out.join(COMPARISON_CSV), comparison_csv(&rows))?;
    Ok(rows)
}
