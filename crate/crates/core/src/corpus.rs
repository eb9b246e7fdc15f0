//! Labeled command corpora: data model, JSONL/CSV interchange, validation and
//! per-class stratified splitting.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::text::{has_content, normalize};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: unknown label {label:?}")]
    UnknownLabel { line: usize, label: String },
    #[error("invalid label {0:?}")]
    InvalidLabel(String),
    #[error("duplicate utterance id {0:?}")]
    DuplicateId(String),
    #[error("duplicate utterance text {text:?} for label {label}")]
    DuplicateText { text: String, label: TaskLabel },
    #[error("utterance {0:?} has no alphanumeric content")]
    EmptyText(String),
    #[error("label {label} of utterance {id:?} is not in the registry")]
    UnregisteredLabel { id: String, label: TaskLabel },
    #[error("label registry is empty")]
    EmptyRegistry,
    #[error("class {label} has {count} utterance(s); a split needs at least 2")]
    ClassTooSmall { label: TaskLabel, count: usize },
    #[error("train fraction must lie strictly between 0 and 1, got {0}")]
    BadFraction(f64),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CorpusError>;

/// Task class name, stored uppercase exactly as written (hyphens kept).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct TaskLabel(String);

impl TaskLabel {
    pub fn new(name: &str) -> Result<Self> {
        let name = name.trim().to_uppercase();
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            return Err(CorpusError::InvalidLabel(name));
        }
        Ok(Self(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for TaskLabel {
    type Error = CorpusError;
    fn try_from(value: String) -> Result<Self> {
        Self::new(&value)
    }
}

impl From<TaskLabel> for String {
    fn from(label: TaskLabel) -> Self {
        label.0
    }
}

impl fmt::Display for TaskLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(&self.0)
    }
}

/// The seven command classes of the reference task set.
pub const STANDARD_LABELS: [&str; 7] = [
    "CHAT",
    "EEG-EMOTIONS",
    "EEG-MENTAL-STATE",
    "JOKE",
    "SCENE-CLASSIFICATION",
    "SENTIMENT-ANALYSIS",
    "SIGN-LANGUAGE",
];

/// Ordered, duplicate-free set of labels. Order is lexicographic and defines
/// class indices everywhere (probability rows, confusion matrices, one-hot
/// columns).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<TaskLabel>", into = "Vec<TaskLabel>")]
pub struct LabelRegistry {
    labels: Vec<TaskLabel>,
}

impl LabelRegistry {
    pub fn new(labels: impl IntoIterator<Item = TaskLabel>) -> Result<Self> {
        let mut labels: Vec<TaskLabel> = labels.into_iter().collect();
        labels.sort();
        labels.dedup();
        if labels.is_empty() {
            return Err(CorpusError::EmptyRegistry);
        }
        Ok(Self { labels })
    }

    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let labels = names
            .iter()
            .map(|n| TaskLabel::new(n.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(labels)
    }

    pub fn standard() -> Self {
        Self::from_names(&STANDARD_LABELS).expect("standard labels are valid")
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[TaskLabel] {
        &self.labels
    }

    pub fn index_of(&self, label: &TaskLabel) -> Option<usize> {
        self.labels.binary_search(label).ok()
    }

    pub fn contains(&self, label: &TaskLabel) -> bool {
        self.index_of(label).is_some()
    }

    pub fn label(&self, index: usize) -> &TaskLabel {
        &self.labels[index]
    }
}

impl TryFrom<Vec<TaskLabel>> for LabelRegistry {
    type Error = CorpusError;
    fn try_from(value: Vec<TaskLabel>) -> Result<Self> {
        Self::new(value)
    }
}

impl From<LabelRegistry> for Vec<TaskLabel> {
    fn from(registry: LabelRegistry) -> Self {
        registry.labels
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    #[default]
    Human,
    Synthetic,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Human => "human",
            Provenance::Synthetic => "synthetic",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: String,
    pub text: String,
    pub label: TaskLabel,
    #[serde(default)]
    pub provenance: Provenance,
}

impl Utterance {
    pub fn human(id: impl Into<String>, text: impl Into<String>, label: TaskLabel) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            label,
            provenance: Provenance::Human,
        }
    }

    fn dedup_key(&self) -> (String, TaskLabel) {
        (normalize(&self.text), self.label.clone())
    }
}

/// An immutable, validated collection of utterances.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    utterances: Vec<Utterance>,
    registry: LabelRegistry,
}

impl Corpus {
    /// Builds a corpus, rejecting anything that breaks the corpus invariants.
    pub fn new(utterances: Vec<Utterance>, registry: LabelRegistry) -> Result<Self> {
        let mut ids = HashSet::new();
        let mut keys = HashSet::new();
        for u in &utterances {
            if !has_content(&u.text) {
                return Err(CorpusError::EmptyText(u.id.clone()));
            }
            if !registry.contains(&u.label) {
                return Err(CorpusError::UnregisteredLabel {
                    id: u.id.clone(),
                    label: u.label.clone(),
                });
            }
            if !ids.insert(u.id.as_str()) {
                return Err(CorpusError::DuplicateId(u.id.clone()));
            }
            if !keys.insert(u.dedup_key()) {
                return Err(CorpusError::DuplicateText {
                    text: u.text.clone(),
                    label: u.label.clone(),
                });
            }
        }
        Ok(Self {
            utterances,
            registry,
        })
    }

    /// Builds a corpus whose registry is inferred from the labels present.
    pub fn from_utterances(utterances: Vec<Utterance>) -> Result<Self> {
        let registry = LabelRegistry::new(utterances.iter().map(|u| u.label.clone()))?;
        Self::new(utterances, registry)
    }

    pub fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }

    pub fn registry(&self) -> &LabelRegistry {
        &self.registry
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Utterance> {
        self.utterances.iter()
    }

    /// Class index of every utterance, in corpus order.
    pub fn label_indices(&self) -> Vec<usize> {
        self.utterances
            .iter()
            .map(|u| self.registry.index_of(&u.label).expect("validated label"))
            .collect()
    }

    /// Utterance count per registry label (registry order).
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.registry.len()];
        for idx in self.label_indices() {
            counts[idx] += 1;
        }
        counts
    }

    pub fn with_registry(self, registry: LabelRegistry) -> Result<Self> {
        Self::new(self.utterances, registry)
    }

    /// Order-independent content hash over (id, normalized text, label).
    pub fn content_hash(&self) -> String {
        let mut lines: Vec<String> = self
            .utterances
            .iter()
            .map(|u| format!("{}\t{}\t{}", u.id, normalize(&u.text), u.label))
            .collect();
        lines.sort();
        let mut hasher = Sha256::new();
        for line in &lines {
            hasher.update(line.as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a Utterance;
    type IntoIter = std::slice::Iter<'a, Utterance>;
    fn into_iter(self) -> Self::IntoIter {
        self.utterances.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Jsonl,
    Csv,
}

impl CorpusFormat {
    /// Guesses the format from a file extension, defaulting to JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => CorpusFormat::Csv,
            _ => CorpusFormat::Jsonl,
        }
    }
}

impl std::str::FromStr for CorpusFormat {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" => Ok(CorpusFormat::Jsonl),
            "csv" => Ok(CorpusFormat::Csv),
            other => Err(format!("unknown corpus format {other:?}")),
        }
    }
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    #[serde(default)]
    id: Option<String>,
    text: Option<String>,
    label: Option<String>,
    #[serde(default)]
    provenance: Option<String>,
}

#[derive(Debug, Clone)]
pub struct LoadOutcome {
    pub corpus: Corpus,
    pub duplicates_dropped: usize,
}

/// Loads and validates a corpus file. Records repeating an earlier
/// (normalized text, label) pair are dropped and counted. When `registry`
/// is given, any other label is an error.
pub fn load_corpus(
    path: &Path,
    format: CorpusFormat,
    registry: Option<&LabelRegistry>,
) -> Result<LoadOutcome> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let records = match format {
        CorpusFormat::Jsonl => read_jsonl_records(BufReader::new(file), path)?,
        CorpusFormat::Csv => read_csv_records(file)?,
    };
    from_records(records, registry)
}

/// Parses JSONL corpus text already held in memory.
pub fn parse_jsonl(content: &str, registry: Option<&LabelRegistry>) -> Result<LoadOutcome> {
    let records = read_jsonl_records(content.as_bytes(), Path::new("<memory>"))?;
    from_records(records, registry)
}

fn read_jsonl_records(reader: impl BufRead, path: &Path) -> Result<Vec<(usize, RawRecord)>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: RawRecord = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push((i + 1, record));
    }
    Ok(out)
}

fn read_csv_records(file: File) -> Result<Vec<(usize, RawRecord)>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<RawRecord>().enumerate() {
        // header is line 1
        let line = i + 2;
        let record = row.map_err(|e| CorpusError::Malformed {
            line,
            reason: e.to_string(),
        })?;
        out.push((line, record));
    }
    Ok(out)
}

fn from_records(
    records: Vec<(usize, RawRecord)>,
    registry: Option<&LabelRegistry>,
) -> Result<LoadOutcome> {
    let mut utterances = Vec::with_capacity(records.len());
    let mut seen = HashSet::new();
    let mut ids = HashSet::new();
    let mut duplicates_dropped = 0;
    for (line, raw) in records {
        let text = raw.text.ok_or_else(|| CorpusError::Malformed {
            line,
            reason: "missing `text`".into(),
        })?;
        let label = raw.label.ok_or_else(|| CorpusError::Malformed {
            line,
            reason: "missing `label`".into(),
        })?;
        if !has_content(&text) {
            return Err(CorpusError::Malformed {
                line,
                reason: "text has no alphanumeric content".into(),
            });
        }
        let label = TaskLabel::new(&label).map_err(|_| CorpusError::Malformed {
            line,
            reason: format!("invalid label {label:?}"),
        })?;
        if let Some(reg) = registry {
            if !reg.contains(&label) {
                return Err(CorpusError::UnknownLabel {
                    line,
                    label: label.to_string(),
                });
            }
        }
        let provenance = match raw.provenance.as_deref().map(str::trim) {
            None | Some("") | Some("human") => Provenance::Human,
            Some("synthetic") => Provenance::Synthetic,
            Some(other) => {
                return Err(CorpusError::Malformed {
                    line,
                    reason: format!("unknown provenance {other:?}"),
                })
            }
        };
        let id = match raw.id.filter(|id| !id.trim().is_empty()) {
            Some(id) => id.trim().to_string(),
            None => format!("u{line:05}"),
        };
        let utterance = Utterance {
            id,
            text,
            label,
            provenance,
        };
        if !seen.insert(utterance.dedup_key()) {
            duplicates_dropped += 1;
            continue;
        }
        if !ids.insert(utterance.id.clone()) {
            return Err(CorpusError::Malformed {
                line,
                reason: format!("duplicate id {:?}", utterance.id),
            });
        }
        utterances.push(utterance);
    }
    let registry = match registry {
        Some(r) => r.clone(),
        None => LabelRegistry::new(utterances.iter().map(|u| u.label.clone()))?,
    };
    Ok(LoadOutcome {
        corpus: Corpus::new(utterances, registry)?,
        duplicates_dropped,
    })
}

#[derive(Serialize)]
struct JsonRecord<'a> {
    id: &'a str,
    text: &'a str,
    label: &'a str,
    provenance: Provenance,
}

pub fn write_jsonl(corpus: &Corpus, writer: impl Write) -> std::io::Result<()> {
    let mut w = BufWriter::new(writer);
    for u in corpus {
        let record = JsonRecord {
            id: &u.id,
            text: &u.text,
            label: u.label.as_str(),
            provenance: u.provenance,
        };
        serde_json::to_writer(&mut w, &record)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn save_corpus(corpus: &Corpus, path: &Path, format: CorpusFormat) -> Result<()> {
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    match format {
        CorpusFormat::Jsonl => write_jsonl(corpus, file).map_err(io_err),
        CorpusFormat::Csv => {
            let mut writer = csv::Writer::from_writer(file);
            writer.write_record(["id", "text", "label", "provenance"])?;
            for u in corpus {
                writer.write_record([
                    u.id.as_str(),
                    u.text.as_str(),
                    u.label.as_str(),
                    &u.provenance.to_string(),
                ])?;
            }
            writer.flush().map_err(io_err)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub total: usize,
    pub class_counts: BTreeMap<String, usize>,
    /// max/min over classes with at least one utterance; infinite when a
    /// registered class is empty.
    pub imbalance_ratio: f64,
    pub duplicates: Vec<(String, String)>,
    pub duplicate_ids: Vec<String>,
    pub empty_text: Vec<String>,
    pub unregistered: Vec<String>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.duplicates.is_empty()
            && self.duplicate_ids.is_empty()
            && self.empty_text.is_empty()
            && self.unregistered.is_empty()
    }
}

/// Report-only check of raw utterances against the corpus rules.
pub fn validate_utterances(utterances: &[Utterance], registry: &LabelRegistry) -> ValidationReport {
    let mut class_counts: BTreeMap<String, usize> = registry
        .labels()
        .iter()
        .map(|l| (l.to_string(), 0))
        .collect();
    let mut first_by_key: HashMap<(String, TaskLabel), &str> = HashMap::new();
    let mut ids = HashSet::new();
    let mut report = ValidationReport {
        total: utterances.len(),
        class_counts: BTreeMap::new(),
        imbalance_ratio: 1.0,
        duplicates: Vec::new(),
        duplicate_ids: Vec::new(),
        empty_text: Vec::new(),
        unregistered: Vec::new(),
    };
    for u in utterances {
        if !has_content(&u.text) {
            report.empty_text.push(u.id.clone());
        }
        if !ids.insert(u.id.as_str()) {
            report.duplicate_ids.push(u.id.clone());
        }
        if registry.contains(&u.label) {
            *class_counts.get_mut(u.label.as_str()).expect("registered") += 1;
        } else {
            report.unregistered.push(u.id.clone());
        }
        match first_by_key.get(&u.dedup_key()) {
            Some(first) => report.duplicates.push((first.to_string(), u.id.clone())),
            None => {
                first_by_key.insert(u.dedup_key(), &u.id);
            }
        }
    }
    let max = class_counts.values().copied().max().unwrap_or(0);
    let min = class_counts.values().copied().min().unwrap_or(0);
    report.imbalance_ratio = if min == 0 {
        if max == 0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        max as f64 / min as f64
    };
    report.class_counts = class_counts;
    report
}

pub fn validate_corpus(corpus: &Corpus) -> ValidationReport {
    validate_utterances(corpus.utterances(), corpus.registry())
}

/// Per-class training count: round-half-up of `fraction * count`, clamped so
/// both sides of the split keep at least one utterance.
pub fn train_count(fraction: f64, count: usize) -> usize {
    let raw = (fraction * count as f64 + 0.5 + 1e-9).floor() as usize;
    raw.clamp(1, count.saturating_sub(1).max(1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSplit {
    pub total: usize,
    pub train: usize,
    pub validation: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub train_fraction: f64,
    pub classes: BTreeMap<String, ClassSplit>,
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train: Corpus,
    pub validation: Corpus,
    pub manifest: SplitManifest,
}

/// Seeded per-class split. Within each class the members are shuffled and the
/// first `train_count` go to training; both outputs keep corpus order.
pub fn stratified_split(corpus: &Corpus, train_fraction: f64, seed: u64) -> Result<Split> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(CorpusError::BadFraction(train_fraction));
    }
    let labels = corpus.label_indices();
    let registry = corpus.registry();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); registry.len()];
    for (i, &c) in labels.iter().enumerate() {
        members[c].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; corpus.len()];
    let mut classes = BTreeMap::new();
    for (c, idx) in members.iter_mut().enumerate() {
        let label = registry.label(c);
        if idx.len() < 2 {
            return Err(CorpusError::ClassTooSmall {
                label: label.clone(),
                count: idx.len(),
            });
        }
        idx.shuffle(&mut rng);
        let n_train = train_count(train_fraction, idx.len());
        for &i in &idx[..n_train] {
            in_train[i] = true;
        }
        classes.insert(
            label.to_string(),
            ClassSplit {
                total: idx.len(),
                train: n_train,
                validation: idx.len() - n_train,
            },
        );
    }
    let (train, validation): (Vec<_>, Vec<_>) = corpus
        .utterances()
        .iter()
        .cloned()
        .zip(in_train)
        .partition(|(_, t)| *t);
    let strip = |v: Vec<(Utterance, bool)>| v.into_iter().map(|(u, _)| u).collect::<Vec<_>>();
    Ok(Split {
        train: Corpus::new(strip(train), registry.clone())?,
        validation: Corpus::new(strip(validation), registry.clone())?,
        manifest: SplitManifest {
            seed,
            train_fraction,
            classes,
        },
    })
}

/// Writes `<prefix>.train.jsonl`, `<prefix>.valid.jsonl` and a
/// `split-manifest.json` next to them.
pub fn write_split(split: &Split, prefix: &Path) -> Result<[PathBuf; 3]> {
    let with_suffix = |suffix: &str| {
        let mut name = prefix.as_os_str().to_owned();
        name.push(suffix);
        PathBuf::from(name)
    };
    let train = with_suffix(".train.jsonl");
    let valid = with_suffix(".valid.jsonl");
    let dir = prefix.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir).map_err(|source| CorpusError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let manifest = dir.join("split-manifest.json");
    save_corpus(&split.train, &train, CorpusFormat::Jsonl)?;
    save_corpus(&split.validation, &valid, CorpusFormat::Jsonl)?;
    let file = File::create(&manifest).map_err(|source| CorpusError::Io {
        path: manifest.clone(),
        source,
    })?;
    serde_json::to_writer_pretty(file, &split.manifest)?;
    Ok([train, valid, manifest])
}
