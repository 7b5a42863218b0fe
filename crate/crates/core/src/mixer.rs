//! Per-phase training and evaluation sets.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::instruct::InstructionRecord;
use crate::io::{self, IoError};
use crate::scorer::filter_neutral;
use crate::seed::{self, SHUFFLE_ALGORITHM};
use crate::task::{Phase, TaskKind};

#[derive(Debug, thiserror::Error)]
pub enum MixError {
    #[error("task {0} has no records to oversample")]
    EmptyGroup(TaskKind),
    #[error("phase {phase} needs records for task {task}")]
    MissingTask { phase: Phase, task: TaskKind },
    #[error("zero-shot eval record {0} has no options")]
    MissingOptions(String),
    #[error("zero-shot train and eval share source sample {0}")]
    Leak(String),
    #[error(transparent)]
    Io(#[from] IoError),
}

/// Train and test records of one task.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TaskRecords {
    pub train: Vec<InstructionRecord>,
    pub test: Vec<InstructionRecord>,
}

/// What to assemble. Task-specific mixes name their single task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assembly {
    TaskSpecific(TaskKind),
    MultiTask,
    ZeroShot,
}

impl Assembly {
    pub fn phase(self) -> Phase {
        match self {
            Assembly::TaskSpecific(_) => Phase::TaskSpecific,
            Assembly::MultiTask => Phase::MultiTask,
            Assembly::ZeroShot => Phase::ZeroShot,
        }
    }

    /// `{task}` for task-specific mixes, `all` otherwise.
    pub fn label(self) -> String {
        match self {
            Assembly::TaskSpecific(t) => t.to_string(),
            _ => "all".to_string(),
        }
    }

    pub fn train_tasks(self) -> Vec<TaskKind> {
        match self {
            Assembly::TaskSpecific(t) => vec![t],
            Assembly::MultiTask => TaskKind::ALL.to_vec(),
            Assembly::ZeroShot => ZERO_SHOT_TRAIN.to_vec(),
        }
    }

    pub fn eval_tasks(self) -> Vec<TaskKind> {
        match self {
            Assembly::TaskSpecific(t) => vec![t],
            Assembly::MultiTask => TaskKind::ALL.to_vec(),
            Assembly::ZeroShot => vec![ZERO_SHOT_EVAL],
        }
    }
}

pub const ZERO_SHOT_TRAIN: [TaskKind; 3] = [TaskKind::Hc, TaskKind::NerCls, TaskKind::ReCls];
pub const ZERO_SHOT_EVAL: TaskKind = TaskKind::Sa;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordOrder {
    pub seed: u64,
    pub algorithm: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixPlan {
    pub phase: Phase,
    pub label: String,
    pub seed: u64,
    pub train_tasks: Vec<TaskKind>,
    pub eval_tasks: Vec<TaskKind>,
    pub per_task_counts_before: BTreeMap<TaskKind, usize>,
    pub per_task_counts_after: BTreeMap<TaskKind, usize>,
    pub train_size: usize,
    pub eval_size: usize,
    pub record_order: Option<RecordOrder>,
}

/// Balances every group to the largest group's size, then shuffles.
///
/// A group of `n` records is repeated `M / n` whole times, and the remaining
/// `M % n` slots are filled by a seeded sample without replacement, so each
/// task contributes exactly `M` records.
pub fn oversample(
    groups: &BTreeMap<TaskKind, Vec<InstructionRecord>>,
    seed: u64,
) -> Result<Vec<InstructionRecord>, MixError> {
    if let Some((task, _)) = groups.iter().find(|(_, g)| g.is_empty()) {
        return Err(MixError::EmptyGroup(*task));
    }
    let max = groups.values().map(Vec::len).max().unwrap_or(0);
    let mut out = Vec::with_capacity(max * groups.len());
    for (task, group) in groups {
        let n = group.len();
        for _ in 0..max / n {
            out.extend(group.iter().cloned());
        }
        let remainder = max % n;
        if remainder > 0 {
            let mut rng = seed::rng_for(seed, &["oversample", task.as_str()]);
            let mut picks = index::sample(&mut rng, n, remainder).into_vec();
            picks.sort_unstable();
            out.extend(picks.into_iter().map(|i| group[i].clone()));
        }
    }
    shuffle(&mut out, seed);
    Ok(out)
}

fn shuffle(records: &mut [InstructionRecord], seed: u64) {
    records.shuffle(&mut seed::rng_for(seed, &["shuffle"]));
}

fn counts(groups: &BTreeMap<TaskKind, Vec<InstructionRecord>>) -> BTreeMap<TaskKind, usize> {
    groups.iter().map(|(t, g)| (*t, g.len())).collect()
}

/// Output of [`assemble_phase`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhaseMix {
    pub plan: MixPlan,
    pub train: Vec<InstructionRecord>,
    pub eval: Vec<InstructionRecord>,
}

pub fn assemble_phase(
    assembly: Assembly,
    records_by_task: &BTreeMap<TaskKind, TaskRecords>,
    seed: u64,
) -> Result<PhaseMix, MixError> {
    let phase = assembly.phase();
    let get = |task: TaskKind| {
        records_by_task
            .get(&task)
            .ok_or(MixError::MissingTask { phase, task })
    };

    let train_groups: BTreeMap<TaskKind, Vec<InstructionRecord>> = assembly
        .train_tasks()
        .into_iter()
        .map(|t| Ok((t, get(t)?.train.clone())))
        .collect::<Result<_, MixError>>()?;
    let before = counts(&train_groups);

    let (train, after, order) = match assembly {
        Assembly::TaskSpecific(t) => {
            let train = train_groups[&t].clone();
            (train, before.clone(), None)
        }
        Assembly::MultiTask => {
            let train = oversample(&train_groups, seed)?;
            let max = before.values().copied().max().unwrap_or(0);
            let after = before.keys().map(|t| (*t, max)).collect();
            (train, after, Some(order(seed)))
        }
        Assembly::ZeroShot => {
            let mut train: Vec<_> = train_groups.values().flatten().cloned().collect();
            shuffle(&mut train, seed);
            (train, before.clone(), Some(order(seed)))
        }
    };

    let eval: Vec<InstructionRecord> = match assembly {
        Assembly::ZeroShot => {
            let sa = &get(ZERO_SHOT_EVAL)?.test;
            if let Some(r) = sa.iter().find(|r| r.options.is_none()) {
                return Err(MixError::MissingOptions(r.id.clone()));
            }
            filter_neutral(sa)
        }
        _ => assembly
            .eval_tasks()
            .into_iter()
            .map(|t| Ok(get(t)?.test.clone()))
            .collect::<Result<Vec<_>, MixError>>()?
            .into_iter()
            .flatten()
            .collect(),
    };

    if assembly == Assembly::ZeroShot {
        check_disjoint(&train, &eval)?;
    }

    let plan = MixPlan {
        phase,
        label: assembly.label(),
        seed,
        train_tasks: assembly.train_tasks(),
        eval_tasks: assembly.eval_tasks(),
        per_task_counts_before: before,
        per_task_counts_after: after,
        train_size: train.len(),
        eval_size: eval.len(),
        record_order: order,
    };
    Ok(PhaseMix { plan, train, eval })
}

fn order(seed: u64) -> RecordOrder {
    RecordOrder {
        seed,
        algorithm: SHUFFLE_ALGORITHM.to_string(),
    }
}

/// Fails if any source sample feeds both train and eval, or an eval task is trained on.
pub fn check_disjoint(train: &[InstructionRecord], eval: &[InstructionRecord]) -> Result<(), MixError> {
    let train_sources: BTreeSet<&str> = train.iter().map(|r| r.source_sample_id.as_str()).collect();
    let train_tasks: BTreeSet<TaskKind> = train.iter().map(|r| r.task).collect();
    for r in eval {
        if train_sources.contains(r.source_sample_id.as_str()) || train_tasks.contains(&r.task) {
            return Err(MixError::Leak(r.source_sample_id.clone()));
        }
    }
    Ok(())
}

/// Paths of a persisted mix: `{phase}_{label}_{seed}.{train,eval}.jsonl` and `.plan.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixFiles {
    pub plan: PathBuf,
    pub train: PathBuf,
    pub eval: PathBuf,
}

impl MixFiles {
    pub fn in_dir(dir: &Path, plan: &MixPlan) -> Self {
        let stem = format!("{}_{}_{}", plan.phase, plan.label, plan.seed);
        MixFiles {
            plan: dir.join(format!("{stem}.plan.json")),
            train: dir.join(format!("{stem}.train.jsonl")),
            eval: dir.join(format!("{stem}.eval.jsonl")),
        }
    }
}

pub fn write_mix(dir: &Path, mix: &PhaseMix) -> Result<MixFiles, MixError> {
    let files = MixFiles::in_dir(dir, &mix.plan);
    io::write_jsonl(&files.train, &mix.train)?;
    io::write_jsonl(&files.eval, &mix.eval)?;
    io::write_json(&files.plan, &mix.plan)?;
    Ok(files)
}
