//! Run orchestration: phase plans with the reference hyperparameters, the
//! adapter process protocol, checkpoint selection, cost estimation and run
//! manifests.
//!
//! The runner never touches model weights. Training and inference happen in an
//! external adapter executable that speaks the file protocol in [`adapter`].

pub mod adapter;
mod cost;
mod execute;
mod manifest;
pub mod mock;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::instruct::InstructError;
use crate::io::IoError;
use crate::mixer::{Assembly, MixError};
use crate::scorer::ScoreError;
use crate::seed::derive_seed;
use crate::task::{Phase, TaskKind};

pub use adapter::{invoke_adapter, Adapter, AdapterInvocation, AdapterKind, AdapterRequest, AdapterResult};
pub use cost::{estimate_cost, Currency, GPU_HOURLY_RATE, MULTI_AND_ZERO_SHOT_HOURS, TASK_SPECIFIC_HOURS};
pub use execute::{execute_plan, records_for_phase, replay, run_dir, PlanInputs, RunOutcome};
pub use manifest::{CostDefaults, DecodingContract, InputDigest, RunManifest};

#[derive(Debug, thiserror::Error)]
pub enum RunnerError {
    #[error("unknown phase `{0}`")]
    UnknownPhase(String),
    #[error("invalid override: {0}")]
    InvalidOverride(String),
    #[error("no models given")]
    NoModels,
    #[error("adapter not found: {0}")]
    AdapterNotFound(String),
    #[error("adapter {kind} exited with {status}; stderr: {stderr_tail}")]
    AdapterFailed {
        kind: AdapterKind,
        status: String,
        stderr_tail: String,
    },
    #[error("adapter protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("no checkpoint records")]
    EmptyRecords,
    #[error("invalid cost input: {0}")]
    InvalidCost(String),
    #[error(transparent)]
    Mix(#[from] MixError),
    #[error(transparent)]
    Instruct(#[from] InstructError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Io(#[from] IoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    LinearDecayToZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    Fp16,
    Fp32,
}

/// Fine-tuning hyperparameters handed to the adapter as `config.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub lora_rank: u32,
    pub lora_alpha: u32,
    pub lora_targets: String,
    pub learning_rate: f64,
    pub warmup_fraction: f64,
    pub schedule: Schedule,
    pub precision: Precision,
    pub max_token_length: u32,
    pub per_device_batch: u32,
    pub grad_accumulation: u32,
    pub epochs: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lora_rank: 8,
            lora_alpha: 32,
            lora_targets: "attention-projection layers".into(),
            learning_rate: 1e-4,
            warmup_fraction: 0.03,
            schedule: Schedule::LinearDecayToZero,
            precision: Precision::Fp16,
            max_token_length: 512,
            per_device_batch: 4,
            grad_accumulation: 8,
            epochs: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub adapter_id: String,
    pub base_checkpoint: String,
}

impl ModelSpec {
    /// The six reference base models.
    pub fn presets() -> Vec<ModelSpec> {
        [
            ("Llama2-7B", "meta-llama/Llama-2-7b-hf"),
            ("Falcon-7B", "tiiuae/falcon-7b"),
            ("MPT-7B", "mosaicml/mpt-7b"),
            ("BLOOM-7.1B", "bigscience/bloom-7b1"),
            ("ChatGLM2-6B", "THUDM/chatglm2-6b"),
            ("Qwen-7B", "Qwen/Qwen-7B"),
        ]
        .into_iter()
        .map(|(name, ckpt)| ModelSpec {
            name: name.into(),
            adapter_id: "lora".into(),
            base_checkpoint: ckpt.into(),
        })
        .collect()
    }

    /// A preset by case-insensitive name or prefix (`qwen` → `Qwen-7B`), or an
    /// ad-hoc spec whose checkpoint locator is the name itself.
    pub fn resolve(name: &str) -> ModelSpec {
        let lower = name.to_lowercase();
        Self::presets()
            .into_iter()
            .find(|p| {
                let pl = p.name.to_lowercase();
                pl == lower || pl.split('-').next() == Some(lower.as_str())
            })
            .unwrap_or_else(|| ModelSpec {
                name: name.to_string(),
                adapter_id: "lora".into(),
                base_checkpoint: name.to_string(),
            })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalSpec {
    pub tasks: Vec<TaskKind>,
    /// Neutral-labeled eval samples are removed (zero-shot sentiment).
    pub drop_neutral: bool,
    pub max_new_tokens: BTreeMap<TaskKind, u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePlan {
    pub phase: Phase,
    /// Task name for task-specific plans, `all` otherwise.
    pub label: String,
    pub tasks: Vec<TaskKind>,
    pub per_task_epochs: BTreeMap<TaskKind, f64>,
    pub eval_spec: EvalSpec,
    pub checkpoint_every_steps: Option<u64>,
    pub model: ModelSpec,
    pub seed: u64,
    pub train_config: TrainConfig,
}

impl PhasePlan {
    pub fn assembly(&self) -> Assembly {
        match self.phase {
            Phase::TaskSpecific => Assembly::TaskSpecific(self.tasks[0]),
            Phase::MultiTask => Assembly::MultiTask,
            Phase::ZeroShot => Assembly::ZeroShot,
        }
    }
}

/// Optional per-run changes applied after the phase defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Overrides {
    pub epochs: Option<f64>,
    pub checkpoint_every_steps: Option<u64>,
    pub tasks: Option<Vec<TaskKind>>,
    pub learning_rate: Option<f64>,
    pub lora_rank: Option<u32>,
    pub lora_alpha: Option<u32>,
    pub warmup_fraction: Option<f64>,
    pub precision: Option<Precision>,
    pub max_token_length: Option<u32>,
    pub per_device_batch: Option<u32>,
    pub grad_accumulation: Option<u32>,
}

/// Greedy-decoding token budget per task shape.
pub fn max_new_tokens(task: TaskKind) -> u32 {
    if task.is_generation() {
        128
    } else {
        16
    }
}

fn default_epochs(phase: Phase, task: TaskKind) -> f64 {
    match phase {
        Phase::TaskSpecific if task == TaskKind::Ner => 50.0,
        Phase::TaskSpecific => 8.0,
        Phase::MultiTask => 4.0,
        Phase::ZeroShot => 1.0,
    }
}

fn invalid(msg: impl Into<String>) -> RunnerError {
    RunnerError::InvalidOverride(msg.into())
}

impl Overrides {
    fn validate(&self, phase: Phase) -> Result<(), RunnerError> {
        if let Some(e) = self.epochs {
            if !(e.is_finite() && e > 0.0) {
                return Err(invalid(format!("epochs must be positive, got {e}")));
            }
        }
        if self.checkpoint_every_steps == Some(0) {
            return Err(invalid("checkpoint_every_steps must be positive"));
        }
        if let Some(lr) = self.learning_rate {
            if !(lr.is_finite() && lr > 0.0) {
                return Err(invalid(format!("learning_rate must be positive, got {lr}")));
            }
        }
        if let Some(w) = self.warmup_fraction {
            if !(0.0..1.0).contains(&w) {
                return Err(invalid(format!("warmup_fraction must be in [0, 1), got {w}")));
            }
        }
        for (name, v) in [
            ("lora_rank", self.lora_rank),
            ("lora_alpha", self.lora_alpha),
            ("max_token_length", self.max_token_length),
            ("per_device_batch", self.per_device_batch),
            ("grad_accumulation", self.grad_accumulation),
        ] {
            if v == Some(0) {
                return Err(invalid(format!("{name} must be positive")));
            }
        }
        if let Some(tasks) = &self.tasks {
            if phase != Phase::TaskSpecific {
                return Err(invalid("tasks can only be overridden for task_specific runs"));
            }
            if tasks.is_empty() {
                return Err(invalid("tasks override is empty"));
            }
        }
        Ok(())
    }

    fn apply(&self, config: &mut TrainConfig) {
        let c = config;
        if let Some(v) = self.learning_rate {
            c.learning_rate = v;
        }
        if let Some(v) = self.lora_rank {
            c.lora_rank = v;
        }
        if let Some(v) = self.lora_alpha {
            c.lora_alpha = v;
        }
        if let Some(v) = self.warmup_fraction {
            c.warmup_fraction = v;
        }
        if let Some(v) = self.precision {
            c.precision = v;
        }
        if let Some(v) = self.max_token_length {
            c.max_token_length = v;
        }
        if let Some(v) = self.per_device_batch {
            c.per_device_batch = v;
        }
        if let Some(v) = self.grad_accumulation {
            c.grad_accumulation = v;
        }
    }
}

/// One plan per (model, task) for task-specific runs, one per model otherwise.
///
/// Each plan's seed mixes `run_seed` with phase, model and task so concurrent
/// plans never share a random stream.
pub fn plan_run(
    phase: &str,
    models: &[ModelSpec],
    overrides: &Overrides,
    run_seed: u64,
) -> Result<Vec<PhasePlan>, RunnerError> {
    let phase: Phase = phase
        .parse()
        .map_err(|_| RunnerError::UnknownPhase(phase.to_string()))?;
    if models.is_empty() {
        return Err(RunnerError::NoModels);
    }
    overrides.validate(phase)?;
    let mut seen = std::collections::BTreeSet::new();
    for m in models {
        if !seen.insert(m.name.as_str()) {
            return Err(invalid(format!("model `{}` listed twice", m.name)));
        }
    }

    let assemblies: Vec<Assembly> = match phase {
        Phase::TaskSpecific => overrides
            .tasks
            .clone()
            .unwrap_or_else(|| TaskKind::PRIMARY.to_vec())
            .into_iter()
            .map(Assembly::TaskSpecific)
            .collect(),
        Phase::MultiTask => vec![Assembly::MultiTask],
        Phase::ZeroShot => vec![Assembly::ZeroShot],
    };

    let mut plans = Vec::new();
    for model in models {
        for assembly in &assemblies {
            let tasks = assembly.train_tasks();
            let per_task_epochs: BTreeMap<TaskKind, f64> = tasks
                .iter()
                .map(|t| (*t, overrides.epochs.unwrap_or_else(|| default_epochs(phase, *t))))
                .collect();
            let eval_tasks = assembly.eval_tasks();
            let mut train_config = TrainConfig::default();
            overrides.apply(&mut train_config);
            train_config.epochs = per_task_epochs.values().copied().fold(0.0, f64::max);
            let label = assembly.label();
            plans.push(PhasePlan {
                phase,
                seed: derive_seed(run_seed, &[phase.as_str(), &model.name, &label]),
                label,
                tasks,
                per_task_epochs,
                eval_spec: EvalSpec {
                    max_new_tokens: eval_tasks.iter().map(|t| (*t, max_new_tokens(*t))).collect(),
                    tasks: eval_tasks,
                    drop_neutral: phase == Phase::ZeroShot,
                },
                checkpoint_every_steps: overrides
                    .checkpoint_every_steps
                    .or((phase == Phase::ZeroShot).then_some(100)),
                model: model.clone(),
                train_config,
            });
        }
    }
    Ok(plans)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRecord {
    pub step: u64,
    pub eval_loss: f64,
    pub path: String,
}

/// Minimal eval loss; ties go to the earliest step.
pub fn select_checkpoint(records: &[CheckpointRecord]) -> Result<&CheckpointRecord, RunnerError> {
    records
        .iter()
        .min_by(|a, b| a.eval_loss.total_cmp(&b.eval_loss).then(a.step.cmp(&b.step)))
        .ok_or(RunnerError::EmptyRecords)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ckpt(step: u64, loss: f64) -> CheckpointRecord {
        CheckpointRecord {
            step,
            eval_loss: loss,
            path: format!("checkpoint-{step}"),
        }
    }

    #[test]
    fn train_config_defaults() {
        let c = TrainConfig::default();
        assert_eq!((c.lora_rank, c.lora_alpha), (8, 32));
        assert_eq!(c.learning_rate, 1e-4);
        assert_eq!(c.warmup_fraction, 0.03);
        assert_eq!(c.precision, Precision::Fp16);
        assert_eq!((c.max_token_length, c.per_device_batch, c.grad_accumulation), (512, 4, 8));
        let v = serde_json::to_value(&c).unwrap();
        assert_eq!(v["schedule"], "linear_decay_to_zero");
        assert_eq!(v.as_object().unwrap().len(), 11);
    }

    #[test]
    fn task_specific_plans_per_model_and_task() {
        let plans = plan_run("task_specific", &ModelSpec::presets(), &Overrides::default(), 1).unwrap();
        assert_eq!(plans.len(), 24);
        for p in &plans {
            let want = if p.tasks == [TaskKind::Ner] { 50.0 } else { 8.0 };
            assert_eq!(p.per_task_epochs[&p.tasks[0]], want);
            assert_eq!(p.train_config.epochs, want);
            assert_eq!(p.checkpoint_every_steps, None);
        }
        let seeds: std::collections::BTreeSet<_> = plans.iter().map(|p| p.seed).collect();
        assert_eq!(seeds.len(), 24);
    }

    #[test]
    fn zero_shot_and_multi_task_defaults() {
        let one = [ModelSpec::resolve("qwen")];
        assert_eq!(one[0].name, "Qwen-7B");
        let z = plan_run("zero_shot", &one, &Overrides::default(), 1).unwrap();
        assert_eq!(z.len(), 1);
        assert_eq!(z[0].checkpoint_every_steps, Some(100));
        assert_eq!(z[0].train_config.epochs, 1.0);
        assert!(z[0].eval_spec.drop_neutral);
        assert_eq!(z[0].eval_spec.tasks, vec![TaskKind::Sa]);
        let m = plan_run("multi_task", &one, &Overrides::default(), 1).unwrap();
        assert_eq!(m[0].tasks.len(), 6);
        assert!(m[0].per_task_epochs.values().all(|e| *e == 4.0));
        assert_eq!(m[0].eval_spec.max_new_tokens[&TaskKind::Re], 128);
        assert_eq!(m[0].eval_spec.max_new_tokens[&TaskKind::Hc], 16);
    }

    #[test]
    fn overrides_apply_and_validate() {
        let one = [ModelSpec::resolve("falcon")];
        let o = Overrides {
            epochs: Some(1.0),
            learning_rate: Some(2e-4),
            ..Default::default()
        };
        for p in plan_run("task_specific", &one, &o, 0).unwrap() {
            assert!(p.per_task_epochs.values().all(|e| *e == 1.0));
            assert_eq!(p.train_config.learning_rate, 2e-4);
        }
        let bad = Overrides {
            epochs: Some(0.0),
            ..Default::default()
        };
        assert!(matches!(plan_run("zero_shot", &one, &bad, 0), Err(RunnerError::InvalidOverride(_))));
        let bad = Overrides {
            tasks: Some(vec![TaskKind::Sa]),
            ..Default::default()
        };
        assert!(matches!(plan_run("multi_task", &one, &bad, 0), Err(RunnerError::InvalidOverride(_))));
        assert!(matches!(plan_run("phase4", &one, &Overrides::default(), 0), Err(RunnerError::UnknownPhase(_))));
        assert!(matches!(plan_run("zero_shot", &[], &Overrides::default(), 0), Err(RunnerError::NoModels)));
    }

    #[test]
    fn plans_serialize() {
        let p = plan_run("zero_shot", &[ModelSpec::resolve("mpt")], &Overrides::default(), 3).unwrap();
        let text = serde_json::to_string(&p).unwrap();
        let back: Vec<PhasePlan> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn checkpoint_selection() {
        let r = [ckpt(100, 0.9), ckpt(200, 0.7), ckpt(300, 0.8)];
        assert_eq!(select_checkpoint(&r).unwrap().step, 200);
        assert_eq!(select_checkpoint(&r[..1]).unwrap().step, 100);
        let tie = [ckpt(200, 0.7), ckpt(100, 0.7)];
        assert_eq!(select_checkpoint(&tie).unwrap().step, 100);
        assert!(matches!(select_checkpoint(&[]), Err(RunnerError::EmptyRecords)));
    }
}
