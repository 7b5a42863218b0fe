use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::adapter::{invoke_adapter, Adapter, AnswerRow, PromptRow, AdapterRequest};
use super::manifest::{CostDefaults, DecodingContract, InputDigest, RunManifest};
use super::{select_checkpoint, CheckpointRecord, PhasePlan, RunnerError};
use crate::corpus::{LabelSpace, Sample};
use crate::instruct::{build_records, render, write_records, InstructionRecord, PromptPools};
use crate::io::{self, IoError};
use crate::mixer::{assemble_phase, write_mix, TaskRecords};
use crate::scorer::{score_records, write_metrics, MetricReport};
use crate::task::{Mode, Phase, Split, TaskKind};

/// Instruction records for every task a phase touches. Zero-shot phases
/// build option-bearing records; the others build standard ones.
pub fn records_for_phase(
    phase: Phase,
    samples_by_task: &BTreeMap<TaskKind, Vec<Sample>>,
    pools: &PromptPools,
    labels: &LabelSpace,
    seed: u64,
) -> Result<BTreeMap<TaskKind, TaskRecords>, RunnerError> {
    let mode = if phase == Phase::ZeroShot { Mode::ZeroShot } else { Mode::Standard };
    let mut out = BTreeMap::new();
    for (task, samples) in samples_by_task {
        if mode == Mode::ZeroShot && task.is_generation() {
            continue;
        }
        let pool = pools.get(*task)?;
        let (train, test): (Vec<Sample>, Vec<Sample>) =
            samples.iter().cloned().partition(|s| s.split() == Split::Train);
        out.insert(
            *task,
            TaskRecords {
                train: build_records(&train, pool, mode, Split::Train, seed, labels)?,
                test: build_records(&test, pool, mode, Split::Test, seed, labels)?,
            },
        );
    }
    Ok(out)
}

pub struct PlanInputs<'a> {
    pub records: &'a BTreeMap<TaskKind, TaskRecords>,
    pub labels: &'a LabelSpace,
    /// (role, path) of upstream files the records were built from.
    pub sources: Vec<(String, PathBuf)>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub run_dir: PathBuf,
    pub manifest: RunManifest,
    pub metrics: Vec<MetricReport>,
}

/// `runs/{phase}/{model}/{task}`; multi-task runs use `all`, zero-shot runs
/// are named by their eval task.
pub fn run_dir(runs: &Path, plan: &PhasePlan) -> PathBuf {
    let label = match plan.phase {
        Phase::ZeroShot => plan.eval_spec.tasks.first().map_or("all", |t| t.as_str()).to_string(),
        _ => plan.label.clone(),
    };
    runs.join(plan.phase.as_str()).join(&plan.model.name).join(label)
}

fn eval_dir(dir: &Path, task: TaskKind) -> PathBuf {
    dir.join("eval").join(task.as_str())
}

fn final_checkpoint(records: &[CheckpointRecord]) -> Result<&CheckpointRecord, RunnerError> {
    records.iter().max_by_key(|r| r.step).ok_or(RunnerError::EmptyRecords)
}

fn pick_checkpoint(phase: Phase, records: &[CheckpointRecord]) -> Result<CheckpointRecord, RunnerError> {
    match phase {
        Phase::ZeroShot => select_checkpoint(records).cloned(),
        _ => final_checkpoint(records).cloned(),
    }
}

fn remove_dir(path: &Path) -> Result<(), IoError> {
    match std::fs::remove_dir_all(path) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(IoError::io(path, e)),
        _ => Ok(()),
    }
}

/// Mix → train → select checkpoint → infer per eval task → score, writing
/// every intermediate file plus `metrics.json` and `manifest.json` under
/// [`run_dir`].
pub fn execute_plan(
    plan: &PhasePlan,
    inputs: &PlanInputs<'_>,
    adapter: &Adapter,
    runs: &Path,
) -> Result<RunOutcome, RunnerError> {
    let dir = run_dir(runs, plan);
    std::fs::create_dir_all(&dir).map_err(|e| IoError::io(&dir, e))?;

    let mix = assemble_phase(plan.assembly(), inputs.records, plan.seed)?;
    let mix_files = write_mix(&dir, &mix)?;
    let config = dir.join("config.json");
    io::write_json(&config, &plan.train_config)?;

    let mut digests = Vec::new();
    for (role, path) in &inputs.sources {
        digests.push(InputDigest::of(role.clone(), path)?);
    }
    digests.push(InputDigest::of("mix_train", &mix_files.train)?);
    digests.push(InputDigest::of("mix_eval", &mix_files.eval)?);
    digests.push(InputDigest::of("train_config", &config)?);

    let logs = dir.join("logs");
    let ckpt_dir = dir.join("checkpoints");
    remove_dir(&ckpt_dir)?;
    let train = invoke_adapter(
        &adapter.with_checkpoint_interval(plan.checkpoint_every_steps),
        &AdapterRequest::Train {
            train_file: mix_files.train.clone(),
            eval_file: mix_files.eval.clone(),
            config: config.clone(),
            output_dir: ckpt_dir.clone(),
        },
        &logs,
        "train",
    )?;
    let selected = pick_checkpoint(plan.phase, &train.checkpoints)?;
    let mut invocations = vec![train.invocation];
    let mut artifacts = BTreeMap::from([
        ("checkpoints".to_string(), ckpt_dir),
        ("logs".to_string(), logs.clone()),
    ]);

    let mut metrics = Vec::new();
    for &task in &plan.eval_spec.tasks {
        let records: Vec<InstructionRecord> = mix.eval.iter().filter(|r| r.task == task).cloned().collect();
        let edir = eval_dir(&dir, task);
        let prompts = edir.join("prompts.jsonl");
        let answers = edir.join("answers.jsonl");
        let completions = edir.join("completions.jsonl");
        let prompt_rows: Vec<PromptRow> = records
            .iter()
            .map(|r| PromptRow {
                id: r.id.clone(),
                prompt: render(r, false),
            })
            .collect();
        let answer_rows: Vec<AnswerRow> = records
            .iter()
            .map(|r| AnswerRow {
                id: r.id.clone(),
                answer: r.answer.clone(),
            })
            .collect();
        io::write_jsonl(&prompts, &prompt_rows)?;
        io::write_jsonl(&answers, &answer_rows)?;
        write_records(&edir.join("records.jsonl"), &records)?;
        digests.push(InputDigest::of(format!("prompts:{task}"), &prompts)?);
        digests.push(InputDigest::of(format!("answers:{task}"), &answers)?);

        let infer = invoke_adapter(
            adapter,
            &AdapterRequest::Infer {
                model: PathBuf::from(&selected.path),
                prompts,
                output: completions.clone(),
                max_new_tokens: plan.eval_spec.max_new_tokens.get(&task).copied().unwrap_or(16),
            },
            &logs,
            &format!("infer-{task}"),
        )?;
        invocations.push(infer.invocation);
        metrics.extend(score_records(&records, &infer.completions, inputs.labels)?);
        artifacts.insert(format!("completions:{task}"), completions);
    }

    let metrics_path = dir.join("metrics.json");
    write_metrics(&metrics_path, &metrics)?;
    artifacts.insert("metrics".into(), metrics_path);
    artifacts.insert("mix_plan".into(), mix_files.plan.clone());

    let mut notes = Vec::new();
    if plan.phase == Phase::ZeroShot {
        notes.push(
            "checkpoint chosen by eval loss on the full neutral-filtered SA eval file (all SA datasets pooled)".into(),
        );
    } else {
        notes.push("final checkpoint used for inference".into());
    }
    let manifest = RunManifest {
        run_id: format!("{}-{}-{}-{:016x}", plan.phase, plan.model.name, plan.label, plan.seed),
        phase_plan: plan.clone(),
        train_config: plan.train_config.clone(),
        mix_plan: mix.plan,
        mix_files,
        inputs: digests,
        invocations,
        artifacts,
        checkpoints: train.checkpoints,
        selected_checkpoint: selected,
        decoding: DecodingContract {
            strategy: "greedy".into(),
            max_new_tokens: plan.eval_spec.max_new_tokens.clone(),
        },
        cost_defaults: CostDefaults::default(),
        notes,
    };
    manifest.write(&dir.join("manifest.json"))?;
    Ok(RunOutcome {
        run_dir: dir,
        manifest,
        metrics,
    })
}

/// Re-runs the adapter steps of a recorded run into `out_dir` from the
/// manifest's recorded files, returning the new completions file per eval task.
///
/// Fails if any recorded input changed since the run.
pub fn replay(manifest: &RunManifest, adapter: &Adapter, out_dir: &Path) -> Result<BTreeMap<TaskKind, PathBuf>, RunnerError> {
    if let Some(stale) = manifest.stale_inputs().first() {
        return Err(RunnerError::ProtocolViolation(format!(
            "recorded input {} ({}) changed since the run",
            stale.role,
            stale.path.display()
        )));
    }
    let recorded = |role: &str| {
        manifest
            .input(role)
            .map(|d| d.path.clone())
            .ok_or_else(|| RunnerError::ProtocolViolation(format!("manifest records no {role} input")))
    };
    let logs = out_dir.join("logs");
    let ckpt_dir = out_dir.join("checkpoints");
    remove_dir(&ckpt_dir)?;
    let train = invoke_adapter(
        &adapter.with_checkpoint_interval(manifest.phase_plan.checkpoint_every_steps),
        &AdapterRequest::Train {
            train_file: recorded("mix_train")?,
            eval_file: recorded("mix_eval")?,
            config: recorded("train_config")?,
            output_dir: ckpt_dir,
        },
        &logs,
        "train",
    )?;
    let selected = pick_checkpoint(manifest.phase_plan.phase, &train.checkpoints)?;
    let mut out = BTreeMap::new();
    for &task in &manifest.phase_plan.eval_spec.tasks {
        let completions = eval_dir(out_dir, task).join("completions.jsonl");
        invoke_adapter(
            adapter,
            &AdapterRequest::Infer {
                model: PathBuf::from(&selected.path),
                prompts: recorded(&format!("prompts:{task}"))?,
                output: completions.clone(),
                max_new_tokens: manifest.decoding.max_new_tokens.get(&task).copied().unwrap_or(16),
            },
            &logs,
            &format!("infer-{task}"),
        )?;
        out.insert(task, completions);
    }
    Ok(out)
}
