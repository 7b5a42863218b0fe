//! Dataset ingestion: manifests, normalized samples, CLS derivations and
//! sample accounting.

mod derive;
mod load;
mod manifest;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::io::{self, IoError};
use crate::task::{Split, TaskKind};

pub use crate::gold::{EntityMention, RelationTriple};
pub use derive::{derive_ner_cls, derive_ner_cls_as, derive_re_cls, derive_re_cls_as};
pub use load::{expand_headline, load_dataset, HeadlineRow, HEADLINE_QUESTIONS};
pub use manifest::{label_space, load_manifests, DatasetManifest, LabelSpace, SourceFormat, SplitSpec};

/// Meta key holding the sample's split.
pub const META_SPLIT: &str = "split";
/// Meta key holding the id of the sample a derived sample came from.
pub const META_SOURCE_ID: &str = "source_id";
pub const META_QUESTION_INDEX: &str = "question_index";
pub const META_QUESTION: &str = "question";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gold {
    Label(String),
    Entities(Vec<EntityMention>),
    Relations(Vec<RelationTriple>),
}

impl Gold {
    pub fn matches_task(&self, task: TaskKind) -> bool {
        match self {
            Gold::Label(_) => task.is_classification(),
            Gold::Entities(_) => task == TaskKind::Ner,
            Gold::Relations(_) => task == TaskKind::Re,
        }
    }

    pub fn label(&self) -> Option<&str> {
        match self {
            Gold::Label(l) => Some(l),
            _ => None,
        }
    }
}

/// One normalized gold example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub dataset: String,
    pub task: TaskKind,
    #[serde(rename = "input")]
    pub input_text: String,
    pub gold: Gold,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

impl Sample {
    /// Split recorded at load time; samples without one count as train.
    pub fn split(&self) -> Split {
        self.meta
            .get(META_SPLIT)
            .and_then(|s| s.parse().ok())
            .unwrap_or(Split::Train)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("source file not found: {0}")]
    MissingFile(PathBuf),
    #[error("dataset {dataset}: malformed row {row}: {reason}")]
    MalformedRow {
        dataset: String,
        row: usize,
        reason: String,
    },
    #[error("dataset {dataset}: expected {expected} samples, loaded {actual}")]
    CountMismatch {
        dataset: String,
        expected: usize,
        actual: usize,
    },
    #[error("dataset {dataset}: row {row}: label `{label}` not in vocabulary")]
    UnknownLabel {
        dataset: String,
        row: usize,
        label: String,
    },
    #[error("headline row {row}: missing answer for question {question}")]
    MissingQuestionAnswer { row: usize, question: usize },
    #[error("dataset {dataset}: field mapping has no source for `{field}`")]
    IncompleteMapping { dataset: String, field: String },
    #[error("manifest `{name}`: {reason}")]
    InvalidManifest { name: String, reason: String },
    #[error("sample {id}: expected task {expected}, found {found}")]
    TaskMismatch {
        id: String,
        expected: TaskKind,
        found: TaskKind,
    },
    #[error(transparent)]
    Io(#[from] IoError),
}

/// Published sample counts per dataset, before augmentation.
pub const PUBLISHED_COUNTS: [(&str, usize); 9] = [
    ("FPB", 3634),
    ("FiQA-SA", 938),
    ("TFNS", 9543),
    ("NWGI", 16184),
    ("NER", 609),
    ("Headline", 11412 * 9),
    ("FinRED", 6768),
    ("NER_CLS", 1003),
    ("RE_CLS", 9657),
];

pub fn published_count(dataset: &str) -> Option<usize> {
    PUBLISHED_COUNTS
        .iter()
        .find(|(name, _)| name.eq_ignore_ascii_case(dataset))
        .map(|(_, n)| *n)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountEntry {
    pub expected: Option<usize>,
    pub actual: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountReport {
    pub entries: BTreeMap<String, CountEntry>,
    pub pass: bool,
}

/// Compares loaded counts against the published table. Datasets without a
/// published count pass unconditionally.
pub fn validate_counts(samples_by_dataset: &BTreeMap<String, Vec<Sample>>) -> CountReport {
    let expected = samples_by_dataset
        .keys()
        .filter_map(|k| published_count(k).map(|n| (k.clone(), n)))
        .collect();
    validate_counts_against(samples_by_dataset, &expected)
}

pub fn validate_counts_against(
    samples_by_dataset: &BTreeMap<String, Vec<Sample>>,
    expected: &BTreeMap<String, usize>,
) -> CountReport {
    let entries: BTreeMap<_, _> = samples_by_dataset
        .iter()
        .map(|(name, samples)| {
            let expected = expected.get(name).copied();
            let actual = samples.len();
            let entry = CountEntry {
                expected,
                actual,
                pass: expected.is_none_or(|e| e == actual),
            };
            (name.clone(), entry)
        })
        .collect();
    let pass = entries.values().all(|e| e.pass);
    CountReport { entries, pass }
}

impl CountReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (name, e) in &self.entries {
            let expected = e.expected.map_or("-".to_string(), |n| n.to_string());
            out.push_str(&format!(
                "{name:<10} expected {expected:>7} actual {:>7} {}\n",
                e.actual,
                if e.pass { "ok" } else { "FAIL" }
            ));
        }
        out.push_str(if self.pass { "overall: pass\n" } else { "overall: FAIL\n" });
        out
    }
}

/// Loads every manifest, keyed by dataset name.
pub fn load_all(manifests: &[DatasetManifest]) -> Result<BTreeMap<String, Vec<Sample>>, CorpusError> {
    manifests
        .iter()
        .map(|m| Ok((m.name.clone(), load_dataset(m)?)))
        .collect()
}

/// Pools samples of all datasets by task, in dataset-name order.
pub fn by_task(samples_by_dataset: &BTreeMap<String, Vec<Sample>>) -> BTreeMap<TaskKind, Vec<Sample>> {
    let mut out: BTreeMap<TaskKind, Vec<Sample>> = BTreeMap::new();
    for samples in samples_by_dataset.values() {
        for s in samples {
            out.entry(s.task).or_default().push(s.clone());
        }
    }
    out
}

pub fn write_samples(path: &Path, samples: &[Sample]) -> Result<(), IoError> {
    io::write_jsonl(path, samples)
}

pub fn read_samples(path: &Path) -> Result<Vec<Sample>, IoError> {
    io::read_jsonl(path)
}
