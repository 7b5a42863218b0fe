//! Instruction records: prompt pools, the two rendering templates, and
//! zero-shot option injection.
//!
//! Rendered form (standard):
//!
//! ```text
//! Instruction: {instruction}
//! Input: {input}
//! Answer: {answer}
//! ```
//!
//! Zero-shot records add an `Options: a/b/c` line between `Instruction` and
//! `Input`. Without an answer the text ends exactly at `Answer:`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Gold, LabelSpace, Sample};
use crate::gold;
use crate::io::{self, IoError};
use crate::seed;
use crate::task::{Mode, Split, TaskKind};

const DEFAULT_POOLS: &str = include_str!("../data/default_prompts.json");

pub const OPTION_SEPARATOR: char = '/';

#[derive(Debug, thiserror::Error)]
pub enum InstructError {
    #[error("prompt pool for {pool} cannot serve sample {sample_id} of task {sample_task}")]
    PoolTaskMismatch {
        pool: TaskKind,
        sample_id: String,
        sample_task: TaskKind,
    },
    #[error("zero-shot mode requires a classification task, got {0}")]
    ZeroShotOnGenerationTask(TaskKind),
    #[error("prompt pool for {task}: {reason}")]
    InvalidPool { task: TaskKind, reason: String },
    #[error("no prompt pool for task {0}")]
    MissingPool(TaskKind),
    #[error("no label vocabulary for dataset {0}")]
    MissingVocabulary(String),
    #[error("label `{label}` cannot be rendered as an option")]
    InvalidOption { label: String },
    #[error("sample {sample_id}: gold label `{label}` not in its dataset vocabulary")]
    LabelOutsideVocabulary { sample_id: String, label: String },
    #[error("sample {0}: gold does not match task shape")]
    GoldShape(String),
    #[error(transparent)]
    Io(#[from] IoError),
}

/// Instruction prompts for one task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptPool {
    task: TaskKind,
    prompts: Vec<String>,
}

impl PromptPool {
    pub fn new(task: TaskKind, prompts: Vec<String>) -> Result<Self, InstructError> {
        let invalid = |reason: &str| InstructError::InvalidPool {
            task,
            reason: reason.to_string(),
        };
        if prompts.is_empty() {
            return Err(invalid("pool is empty"));
        }
        let mut seen = BTreeSet::new();
        for p in &prompts {
            if p.trim().is_empty() {
                return Err(invalid("empty prompt"));
            }
            if p.contains('\n') {
                return Err(invalid("prompts must be single-line"));
            }
            if !seen.insert(p.as_str()) {
                return Err(invalid("duplicate prompt"));
            }
        }
        Ok(Self { task, prompts })
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    pub fn prompts(&self) -> &[String] {
        &self.prompts
    }
}

/// Pools for every task, as stored in a prompt pool file (`{"SA": [...], ...}`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptPools(BTreeMap<TaskKind, PromptPool>);

impl PromptPools {
    pub fn from_json(text: &str) -> Result<Self, InstructError> {
        let raw: BTreeMap<TaskKind, Vec<String>> =
            serde_json::from_str(text).map_err(|e| InstructError::Io(IoError::Json {
                path: "<prompt pool>".into(),
                line: e.line(),
                source: e,
            }))?;
        raw.into_iter()
            .map(|(task, prompts)| Ok((task, PromptPool::new(task, prompts)?)))
            .collect::<Result<_, _>>()
            .map(PromptPools)
    }

    pub fn load(path: &Path) -> Result<Self, InstructError> {
        let raw: BTreeMap<TaskKind, Vec<String>> = io::read_json(path)?;
        raw.into_iter()
            .map(|(task, prompts)| Ok((task, PromptPool::new(task, prompts)?)))
            .collect::<Result<_, _>>()
            .map(PromptPools)
    }

    /// The shipped pools: ten generic prompts per task.
    pub fn builtin() -> Self {
        Self::from_json(DEFAULT_POOLS).expect("bundled prompt pools are valid")
    }

    pub fn get(&self, task: TaskKind) -> Result<&PromptPool, InstructError> {
        self.0.get(&task).ok_or(InstructError::MissingPool(task))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionRecord {
    pub id: String,
    pub task: TaskKind,
    pub dataset: String,
    pub split: Split,
    pub instruction: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<String>>,
    pub input: String,
    pub answer: String,
    pub source_sample_id: String,
}

/// Canonical target text for NER and RE samples; `None` for classification samples.
pub fn render_gold(sample: &Sample) -> Option<String> {
    match &sample.gold {
        Gold::Entities(e) => Some(gold::render_entities(e)),
        Gold::Relations(r) => Some(gold::render_relations(r)),
        Gold::Label(_) => None,
    }
}

fn answer_for(sample: &Sample) -> Result<String, InstructError> {
    if !sample.gold.matches_task(sample.task) {
        return Err(InstructError::GoldShape(sample.id.clone()));
    }
    Ok(match &sample.gold {
        Gold::Label(l) => l.clone(),
        _ => render_gold(sample).expect("generation gold"),
    })
}

/// Builds one record per sample.
///
/// Each record draws its prompt, and in zero-shot train mode its option
/// order, from a generator seeded by `(seed, sample id)`, so output does not
/// depend on sample order or sharding.
pub fn build_records(
    samples: &[Sample],
    pool: &PromptPool,
    mode: Mode,
    split: Split,
    seed: u64,
    labels: &LabelSpace,
) -> Result<Vec<InstructionRecord>, InstructError> {
    if mode == Mode::ZeroShot && pool.task.is_generation() {
        return Err(InstructError::ZeroShotOnGenerationTask(pool.task));
    }
    samples
        .iter()
        .map(|sample| {
            if sample.task != pool.task {
                return Err(InstructError::PoolTaskMismatch {
                    pool: pool.task,
                    sample_id: sample.id.clone(),
                    sample_task: sample.task,
                });
            }
            let answer = answer_for(sample)?;
            let mut rng = seed::rng_for(seed, &["record", &sample.id]);
            let instruction = pool.prompts[rng.gen_range(0..pool.prompts.len())].clone();
            let options = match mode {
                Mode::Standard => None,
                Mode::ZeroShot => {
                    let vocab = labels
                        .get(&sample.dataset)
                        .ok_or_else(|| InstructError::MissingVocabulary(sample.dataset.clone()))?;
                    if let Some(bad) = vocab
                        .iter()
                        .find(|l| l.contains(OPTION_SEPARATOR) || l.contains('\n') || l.trim().is_empty())
                    {
                        return Err(InstructError::InvalidOption { label: bad.clone() });
                    }
                    if !vocab.contains(&answer) {
                        return Err(InstructError::LabelOutsideVocabulary {
                            sample_id: sample.id.clone(),
                            label: answer,
                        });
                    }
                    let mut opts = vocab.clone();
                    if split == Split::Train {
                        opts.shuffle(&mut rng);
                    }
                    Some(opts)
                }
            };
            Ok(InstructionRecord {
                id: sample.id.clone(),
                task: sample.task,
                dataset: sample.dataset.clone(),
                split,
                instruction,
                options,
                input: sample.input_text.clone(),
                answer,
                source_sample_id: sample.id.clone(),
            })
        })
        .collect()
}

pub fn render(record: &InstructionRecord, include_answer: bool) -> String {
    let mut out = format!("Instruction: {}\n", record.instruction);
    if let Some(options) = &record.options {
        out.push_str("Options: ");
        out.push_str(&options.join(&OPTION_SEPARATOR.to_string()));
        out.push('\n');
    }
    out.push_str("Input: ");
    out.push_str(&record.input);
    out.push_str("\nAnswer:");
    if include_answer {
        out.push(' ');
        out.push_str(&record.answer);
    }
    out
}

/// Sections recovered from rendered text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedParts {
    pub instruction: String,
    pub options: Option<Vec<String>>,
    pub input: String,
    pub answer: Option<String>,
}

/// Inverse of [`render`].
pub fn parse_rendered(text: &str) -> Option<RenderedParts> {
    let rest = text.strip_prefix("Instruction: ")?;
    let (instruction, mut rest) = rest.split_once('\n')?;
    let mut options = None;
    if let Some(after) = rest.strip_prefix("Options: ") {
        let (line, tail) = after.split_once('\n')?;
        options = Some(line.split(OPTION_SEPARATOR).map(String::from).collect());
        rest = tail;
    }
    let rest = rest.strip_prefix("Input: ")?;
    let at = rest.find("\nAnswer:")?;
    let input = &rest[..at];
    let tail = &rest[at + "\nAnswer:".len()..];
    let answer = if tail.is_empty() {
        None
    } else {
        Some(tail.strip_prefix(' ')?.to_string())
    };
    Some(RenderedParts {
        instruction: instruction.to_string(),
        options,
        input: input.to_string(),
        answer,
    })
}

pub fn write_records(path: &Path, records: &[InstructionRecord]) -> Result<(), IoError> {
    io::write_jsonl(path, records)
}

pub fn read_records(path: &Path) -> Result<Vec<InstructionRecord>, IoError> {
    io::read_jsonl(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gold::{EntityMention, RelationTriple};

    fn sa(i: usize, label: &str) -> Sample {
        Sample {
            id: format!("FPB-{i:06}"),
            dataset: "FPB".into(),
            task: TaskKind::Sa,
            input_text: format!("Shares moved {i}."),
            gold: Gold::Label(label.into()),
            meta: BTreeMap::new(),
        }
    }

    fn labels() -> LabelSpace {
        BTreeMap::from([(
            "FPB".to_string(),
            vec!["negative".to_string(), "neutral".to_string(), "positive".to_string()],
        )])
    }

    fn record(options: Option<Vec<&str>>) -> InstructionRecord {
        InstructionRecord {
            id: "r".into(),
            task: TaskKind::Sa,
            dataset: "FPB".into(),
            split: Split::Test,
            instruction: "What is the sentiment?".into(),
            options: options.map(|o| o.into_iter().map(String::from).collect()),
            input: "Shares rallied.".into(),
            answer: "positive".into(),
            source_sample_id: "r".into(),
        }
    }

    #[test]
    fn standard_template() {
        let r = record(None);
        assert_eq!(
            render(&r, true),
            "Instruction: What is the sentiment?\nInput: Shares rallied.\nAnswer: positive"
        );
        assert!(render(&r, false).ends_with("Answer:"));
        assert!(!render(&r, false).ends_with(" Answer: "));
    }

    #[test]
    fn zero_shot_options_section_round_trips() {
        let r = record(Some(vec!["negative", "positive"]));
        let text = render(&r, true);
        assert!(text.contains("\nOptions: negative/positive\n"));
        let parts = parse_rendered(&text).unwrap();
        assert_eq!(parts.options, r.options);
        assert_eq!(parts.answer.as_deref(), Some("positive"));
        assert_eq!(parse_rendered(&render(&r, false)).unwrap().answer, None);
    }

    #[test]
    fn render_gold_forms() {
        let mut s = sa(0, "x");
        s.task = TaskKind::Ner;
        s.gold = Gold::Entities(vec![EntityMention::new("Apple Inc", "ORG")]);
        assert_eq!(render_gold(&s).unwrap(), "Apple Inc, ORG");
        s.gold = Gold::Entities(vec![]);
        assert_eq!(render_gold(&s).unwrap(), "none");
        s.task = TaskKind::Re;
        s.gold = Gold::Relations(vec![RelationTriple::new("subsidiary", "AlphaCo", "BetaCo")]);
        assert_eq!(render_gold(&s).unwrap(), "subsidiary: AlphaCo, BetaCo");
    }

    #[test]
    fn standard_mode_has_no_options() {
        let samples: Vec<_> = (0..50).map(|i| sa(i, "neutral")).collect();
        let pools = PromptPools::builtin();
        let recs = build_records(&samples, pools.get(TaskKind::Sa).unwrap(), Mode::Standard, Split::Train, 1, &labels()).unwrap();
        assert_eq!(recs.len(), 50);
        assert!(recs.iter().all(|r| r.options.is_none()));
    }

    #[test]
    fn zero_shot_test_split_keeps_canonical_order() {
        let pools = PromptPools::builtin();
        let recs = build_records(&[sa(0, "positive")], pools.get(TaskKind::Sa).unwrap(), Mode::ZeroShot, Split::Test, 3, &labels()).unwrap();
        assert_eq!(
            recs[0].options.as_deref().unwrap(),
            &["negative".to_string(), "neutral".to_string(), "positive".to_string()]
        );
    }

    #[test]
    fn zero_shot_train_permutes_deterministically() {
        let samples: Vec<_> = (0..1000).map(|i| sa(i, "positive")).collect();
        let pool = PromptPools::builtin().get(TaskKind::Sa).unwrap().clone();
        let a = build_records(&samples, &pool, Mode::ZeroShot, Split::Train, 7, &labels()).unwrap();
        let b = build_records(&samples, &pool, Mode::ZeroShot, Split::Train, 7, &labels()).unwrap();
        assert_eq!(a, b);
        let mut orders = BTreeSet::new();
        for r in &a {
            let mut sorted = r.options.clone().unwrap();
            orders.insert(sorted.clone());
            sorted.sort();
            assert_eq!(sorted, labels()["FPB"]);
        }
        assert!(orders.len() > 1, "options were never permuted");
    }

    #[test]
    fn error_paths() {
        let pools = PromptPools::builtin();
        let ner_pool = pools.get(TaskKind::Ner).unwrap();
        assert!(matches!(
            build_records(&[], ner_pool, Mode::ZeroShot, Split::Test, 0, &labels()),
            Err(InstructError::ZeroShotOnGenerationTask(TaskKind::Ner))
        ));
        assert!(matches!(
            build_records(&[sa(0, "positive")], ner_pool, Mode::Standard, Split::Test, 0, &labels()),
            Err(InstructError::PoolTaskMismatch { .. })
        ));
        let sa_pool = pools.get(TaskKind::Sa).unwrap();
        assert!(matches!(
            build_records(&[sa(0, "positive")], sa_pool, Mode::ZeroShot, Split::Test, 0, &BTreeMap::new()),
            Err(InstructError::MissingVocabulary(_))
        ));
        let slash = BTreeMap::from([("FPB".to_string(), vec!["up/down".to_string()])]);
        assert!(matches!(
            build_records(&[sa(0, "up/down")], sa_pool, Mode::ZeroShot, Split::Test, 0, &slash),
            Err(InstructError::InvalidOption { .. })
        ));
    }

    #[test]
    fn pool_validation() {
        assert!(PromptPool::new(TaskKind::Sa, vec![]).is_err());
        assert!(PromptPool::new(TaskKind::Sa, vec!["a".into(), "a".into()]).is_err());
        assert!(PromptPool::new(TaskKind::Sa, vec![" ".into()]).is_err());
        assert!(PromptPool::new(TaskKind::Sa, vec!["a\nb".into()]).is_err());
        let pools = PromptPools::builtin();
        for t in TaskKind::ALL {
            assert_eq!(pools.get(t).unwrap().prompts().len(), 10);
        }
    }

    #[test]
    fn prompt_usage_is_near_uniform() {
        let samples: Vec<_> = (0..12_000).map(|i| sa(i, "neutral")).collect();
        let pool = PromptPools::builtin().get(TaskKind::Sa).unwrap().clone();
        let recs = build_records(&samples, &pool, Mode::Standard, Split::Train, 11, &labels()).unwrap();
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for r in &recs {
            *counts.entry(r.instruction.as_str()).or_default() += 1;
        }
        assert_eq!(counts.len(), 10);
        for (_, c) in counts {
            let share = c as f64 / recs.len() as f64;
            assert!((share - 0.1).abs() <= 0.05, "share {share}");
        }
    }

    #[test]
    fn record_store_omits_absent_options() {
        let line = serde_json::to_string(&record(None)).unwrap();
        assert!(!line.contains("options"));
        let keys: Vec<String> = serde_json::from_str::<serde_json::Value>(&line)
            .unwrap()
            .as_object()
            .unwrap()
            .keys()
            .cloned()
            .collect();
        assert_eq!(keys.len(), 8);
    }
}
