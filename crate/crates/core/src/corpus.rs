//! The emoji dataset on disk and in memory.
//!
//! A data directory holds `train.tsv`, `validation.tsv` and `test.tsv`
//! (one `<text>\t<label id>` line per example) plus `labels.txt` with one
//! label name per line, in id order.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use tensor::{Mask, Rng};

use crate::error::{io_err, Error, Result};
use crate::tokenizer::{Encoded, Vocabulary, PAD};

/// Label names in id order, matching the row order of the evaluation tables.
pub const LABEL_NAMES: [&str; 20] = [
    ":heart:",
    ":heart_eyes:",
    ":joy:",
    ":two_hearts:",
    ":fire:",
    ":blush:",
    ":sunglasses:",
    ":sparkles:",
    ":blue_heart:",
    ":kiss:",
    ":camera:",
    ":flag-us:",
    ":sunny:",
    ":purple_heart:",
    ":wink:",
    ":100:",
    ":grin:",
    ":christmas_tree:",
    ":camera_with_flash:",
    ":stuck_out_tongue_winking_eye:",
];

pub const NUM_CLASSES: usize = LABEL_NAMES.len();

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelSet {
    names: Vec<String>,
}

impl Default for LabelSet {
    fn default() -> Self {
        Self {
            names: LABEL_NAMES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl LabelSet {
    /// Reads `labels.txt` and checks it lists the 20 expected labels in the
    /// expected order; any other mapping would silently permute classes.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let names: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        if names.len() != NUM_CLASSES {
            return Err(Error::Data(format!(
                "{}: expected {NUM_CLASSES} labels, found {}",
                path.display(),
                names.len()
            )));
        }
        for (id, (got, want)) in names.iter().zip(LABEL_NAMES).enumerate() {
            if *got != want {
                return Err(Error::Data(format!(
                    "{}: label {id} is {got:?}, expected {want:?}",
                    path.display()
                )));
            }
        }
        Ok(Self::default())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = self.names.join("\n");
        out.push('\n');
        fs::write(path, out).map_err(io_err(path))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    pub text: String,
    pub label: usize,
}

impl Example {
    pub fn new(text: impl Into<String>, label: usize) -> Self {
        Self {
            text: text.into(),
            label,
        }
    }
}

/// Parses one TSV file. Blank lines are skipped; every other line must be
/// `<text>\t<label>` with exactly one tab.
pub fn load_tsv(path: &Path, labels: &LabelSet) -> Result<Vec<Example>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_tsv(&text, path, labels)
}

pub(crate) fn parse_tsv(text: &str, path: &Path, labels: &LabelSet) -> Result<Vec<Example>> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let (Some(body), Some(label), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(err(line_no, "expected exactly one tab separator".into()));
        };
        if body.trim().is_empty() {
            return Err(err(line_no, "empty text".into()));
        }
        let label: usize = label
            .trim()
            .parse()
            .map_err(|_| err(line_no, format!("label {label:?} is not a non-negative integer")))?;
        if label >= labels.len() {
            return Err(err(line_no, format!("label out of range ({label} ≥ {})", labels.len())));
        }
        out.push(Example::new(body, label));
    }
    if out.is_empty() {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    Ok(out)
}

/// Writes examples in the format [`load_tsv`] reads. Tabs and line breaks
/// inside the text become single spaces.
pub fn write_tsv(path: &Path, examples: &[Example]) -> Result<()> {
    let mut out = String::new();
    for ex in examples {
        let text: String = ex
            .text
            .chars()
            .map(|c| if matches!(c, '\t' | '\n' | '\r') { ' ' } else { c })
            .collect();
        writeln!(out, "{text}\t{}", ex.label).expect("writing to a String");
    }
    fs::write(path, out).map_err(io_err(path))
}

pub fn class_counts(examples: &[Example]) -> [usize; NUM_CLASSES] {
    let mut counts = [0; NUM_CLASSES];
    for ex in examples {
        counts[ex.label] += 1;
    }
    counts
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn file_name(self) -> &'static str {
        match self {
            Split::Train => "train.tsv",
            Split::Validation => "validation.tsv",
            Split::Test => "test.tsv",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" | "val" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SplitCorpus {
    pub labels: LabelSet,
    pub train: Vec<Example>,
    pub validation: Vec<Example>,
    pub test: Vec<Example>,
}

impl SplitCorpus {
    /// Loads a data directory. `labels.txt` is optional; when present it
    /// must match the built-in label order.
    pub fn load(dir: &Path) -> Result<Self> {
        let labels_path = dir.join("labels.txt");
        let labels = if labels_path.exists() {
            LabelSet::load(&labels_path)?
        } else {
            LabelSet::default()
        };
        let load = |split: Split| load_tsv(&dir.join(split.file_name()), &labels);
        let corpus = Self {
            train: load(Split::Train)?,
            validation: load(Split::Validation)?,
            test: load(Split::Test)?,
            labels,
        };
        Ok(corpus)
    }

    pub fn split(&self, split: Split) -> &[Example] {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }

    pub fn class_counts(&self, split: Split) -> [usize; NUM_CLASSES] {
        class_counts(self.split(split))
    }

    /// Labels with no training example; loss weighting needs this empty.
    pub fn missing_train_labels(&self) -> Vec<usize> {
        let counts = self.class_counts(Split::Train);
        (0..NUM_CLASSES).filter(|&c| counts[c] == 0).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let missing = self.missing_train_labels();
        if missing.is_empty() {
            Ok(())
        } else {
            let names: Vec<&str> = missing.iter().map(|&c| self.labels.name(c)).collect();
            Err(Error::Data(format!("labels absent from train split: {}", names.join(", "))))
        }
    }
}

pub fn data_file(dir: &Path, split: Split) -> PathBuf {
    dir.join(split.file_name())
}

/// A split tokenized and encoded once, ready to be cut into batches.
#[derive(Clone, Debug)]
pub struct EncodedSet {
    pub max_len: usize,
    /// `len × max_len` token ids, PAD beyond each example's length.
    pub ids: Vec<usize>,
    pub lengths: Vec<usize>,
    pub labels: Vec<usize>,
}

impl EncodedSet {
    pub fn new(examples: &[Example], vocab: &Vocabulary, max_len: usize) -> Self {
        let mut set = Self {
            max_len,
            ids: Vec::with_capacity(examples.len() * max_len),
            lengths: Vec::with_capacity(examples.len()),
            labels: Vec::with_capacity(examples.len()),
        };
        for ex in examples {
            let Encoded { ids, length } = vocab.encode(&ex.text, max_len);
            set.ids.extend_from_slice(&ids);
            set.lengths.push(length);
            set.labels.push(ex.label);
        }
        set
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let mut counts = [0; NUM_CLASSES];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// First `n` examples (all of them if `n` exceeds the size).
    pub fn prefix(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            max_len: self.max_len,
            ids: self.ids[..n * self.max_len].to_vec(),
            lengths: self.lengths[..n].to_vec(),
            labels: self.labels[..n].to_vec(),
        }
    }

    pub fn batch(&self, indices: &[usize]) -> EncodedBatch {
        let mut ids = Vec::with_capacity(indices.len() * self.max_len);
        let mut lengths = Vec::with_capacity(indices.len());
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            ids.extend_from_slice(&self.ids[i * self.max_len..(i + 1) * self.max_len]);
            lengths.push(self.lengths[i]);
            labels.push(self.labels[i]);
        }
        EncodedBatch {
            max_len: self.max_len,
            mask: Mask::from_lengths(&lengths, self.max_len),
            token_ids: ids,
            lengths,
            labels,
        }
    }

    /// Batches in order, or in a permutation drawn from `rng`.
    pub fn batches(&self, batch_size: usize, rng: Option<&mut Rng>) -> Result<Vec<EncodedBatch>> {
        Ok(batch_order(self.len(), batch_size, rng)?
            .iter()
            .map(|idx| self.batch(idx))
            .collect())
    }
}

/// Splits `0..n` into consecutive batches, after shuffling when `rng` is
/// given. The final short batch is kept.
pub fn batch_order(n: usize, batch_size: usize, rng: Option<&mut Rng>) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    if let Some(rng) = rng {
        order.shuffle(rng);
    }
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// Encodes and batches `examples`; a seed shuffles them first.
pub fn make_batches(
    examples: &[Example],
    vocab: &Vocabulary,
    batch_size: usize,
    shuffle_seed: Option<u64>,
) -> Result<Vec<EncodedBatch>> {
    let set = EncodedSet::new(examples, vocab, crate::tokenizer::MAX_LEN);
    let mut rng = shuffle_seed.map(tensor::rng::seeded);
    set.batches(batch_size, rng.as_mut())
}

/// A batch of fixed-length encoded examples.
#[derive(Clone, Debug)]
pub struct EncodedBatch {
    pub max_len: usize,
    /// `batch × max_len`, PAD wherever the mask is off.
    pub token_ids: Vec<usize>,
    pub mask: Mask,
    pub lengths: Vec<usize>,
    pub labels: Vec<usize>,
}

impl EncodedBatch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Ids and mask cut to `max(longest sequence, min_len)` positions (never
    /// more than `max_len`). Positions beyond every real token only ever
    /// hold padding, so models that ignore padding give the same result on
    /// the shorter batch. Ids under the mask are forced to PAD.
    pub fn trimmed(&self, min_len: usize) -> (Vec<usize>, Mask) {
        let longest = self.lengths.iter().copied().max().unwrap_or(0);
        let len = longest.max(min_len).min(self.max_len).max(1);
        let mut ids = Vec::with_capacity(self.len() * len);
        for (b, &n) in self.lengths.iter().enumerate() {
            let row = &self.token_ids[b * self.max_len..b * self.max_len + len];
            ids.extend(row.iter().enumerate().map(|(p, &id)| if p < n { id } else { PAD }));
        }
        (ids, Mask::from_lengths(&self.lengths, len))
    }
}
