//! A deterministic stand-in adapter used for end-to-end tests.
//!
//! `train` computes a step count from the config, emits checkpoints with a
//! loss curve that falls then plateaus, and stores the majority training
//! answer in each checkpoint. `infer` answers according to
//! [`MockBehavior`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::adapter::{AnswerRow, PromptRow, CHECKPOINTS_FILE};
use super::{CheckpointRecord, RunnerError, TrainConfig};
use crate::instruct::{read_records, InstructionRecord};
use crate::io;
use crate::scorer::Completion;

type AnswerFn = Box<dyn Fn(&str) -> Result<String, RunnerError>>;

pub const ENV_BEHAVIOR: &str = "FINBENCH_MOCK_BEHAVIOR";
pub const ENV_ANSWERS: &str = "FINBENCH_MOCK_ANSWERS";
pub const ENV_CHECKPOINT_STEPS: &str = "FINBENCH_MOCK_CHECKPOINT_STEPS";
pub const DEFAULT_CHECKPOINT_STEPS: u64 = 100;
pub const STATE_FILE: &str = "mock_state.json";
/// Default gold-answer file, looked up next to the prompts file.
pub const ANSWERS_FILE: &str = "answers.jsonl";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MockBehavior {
    /// Replays the gold answer of each prompt.
    EchoGold,
    /// Answers the most frequent training answer everywhere.
    MajorityClass,
    FixedString(String),
}

impl FromStr for MockBehavior {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "echo_gold" => Ok(MockBehavior::EchoGold),
            "majority_class" => Ok(MockBehavior::MajorityClass),
            _ => s
                .strip_prefix("fixed_string:")
                .map(|t| MockBehavior::FixedString(t.to_string()))
                .ok_or_else(|| format!("unknown mock behavior `{s}` (echo_gold, majority_class, fixed_string:<text>)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockState {
    pub step: u64,
    pub majority_answer: String,
    pub train_rows: usize,
}

/// Optimizer steps for `rows` records: `ceil(rows · epochs / (batch · accumulation))`, at least 1.
pub fn total_steps(rows: usize, config: &TrainConfig) -> u64 {
    let per_step = f64::from(config.per_device_batch.max(1)) * f64::from(config.grad_accumulation.max(1));
    ((rows as f64 * config.epochs / per_step).ceil() as u64).max(1)
}

/// Strictly decreasing until 60% of training, flat afterwards.
pub fn mock_loss(step: u64, total: u64) -> f64 {
    let knee = ((total as f64 * 0.6).ceil() as u64).max(1);
    let s = step.min(knee) as f64;
    let loss = 0.4 + 1.6 / (1.0 + s / 10.0);
    (loss * 1e6).round() / 1e6
}

/// Checkpoint steps: every `interval`, plus the final step.
pub fn checkpoint_steps(total: u64, interval: u64) -> Vec<u64> {
    let interval = interval.max(1);
    let mut steps: Vec<u64> = (1..=total / interval).map(|k| k * interval).collect();
    if steps.last() != Some(&total) {
        steps.push(total);
    }
    steps
}

fn majority(records: &[InstructionRecord]) -> String {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in records {
        *counts.entry(r.answer.as_str()).or_default() += 1;
    }
    // Highest count; ties go to the lexicographically smallest answer.
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(a.0)))
        .map(|(a, _)| a.to_string())
        .unwrap_or_default()
}

pub fn mock_train(
    train_file: &Path,
    eval_file: &Path,
    config: &Path,
    output_dir: &Path,
    interval: u64,
) -> Result<Vec<CheckpointRecord>, RunnerError> {
    let config: TrainConfig = io::read_json(config)?;
    let train = read_records(train_file)?;
    // The eval file must exist and parse even though the mock ignores its content.
    read_records(eval_file)?;
    let total = total_steps(train.len(), &config);
    let majority_answer = majority(&train);
    let mut records = Vec::new();
    for step in checkpoint_steps(total, interval) {
        let dir = format!("checkpoint-{step}");
        io::write_json(
            &output_dir.join(&dir).join(STATE_FILE),
            &MockState {
                step,
                majority_answer: majority_answer.clone(),
                train_rows: train.len(),
            },
        )?;
        records.push(CheckpointRecord {
            step,
            eval_loss: mock_loss(step, total),
            path: dir,
        });
    }
    io::write_json(&output_dir.join(CHECKPOINTS_FILE), &records)?;
    Ok(records)
}

pub fn answers_path(prompts: &Path, override_path: Option<PathBuf>) -> PathBuf {
    override_path.unwrap_or_else(|| prompts.with_file_name(ANSWERS_FILE))
}

pub fn mock_infer(
    model: &Path,
    prompts: &Path,
    output: &Path,
    behavior: &MockBehavior,
    answers: &Path,
) -> Result<Vec<Completion>, RunnerError> {
    let prompts: Vec<PromptRow> = io::read_jsonl(prompts)?;
    let answer_for: AnswerFn = match behavior {
        MockBehavior::EchoGold => {
            let rows: Vec<AnswerRow> = io::read_jsonl(answers)?;
            let map: BTreeMap<String, String> = rows.into_iter().map(|r| (r.id, r.answer)).collect();
            Box::new(move |id| {
                map.get(id)
                    .cloned()
                    .ok_or_else(|| RunnerError::ProtocolViolation(format!("no gold answer for id {id}")))
            })
        }
        MockBehavior::MajorityClass => {
            let state: MockState = io::read_json(&model.join(STATE_FILE))?;
            Box::new(move |_| Ok(state.majority_answer.clone()))
        }
        MockBehavior::FixedString(t) => {
            let t = t.clone();
            Box::new(move |_| Ok(t.clone()))
        }
    };
    let completions = prompts
        .iter()
        .map(|p| {
            Ok(Completion {
                id: p.id.clone(),
                completion: answer_for(&p.id)?,
            })
        })
        .collect::<Result<Vec<_>, RunnerError>>()?;
    io::write_jsonl(output, &completions)?;
    Ok(completions)
}

/// Checkpoint interval: the mock override, else the runner's planned
/// interval, else the default.
pub fn interval_from_env() -> u64 {
    [ENV_CHECKPOINT_STEPS, super::adapter::ENV_CHECKPOINT_EVERY]
        .iter()
        .find_map(|k| std::env::var(k).ok().and_then(|v| v.trim().parse().ok()).filter(|v| *v > 0))
        .unwrap_or(DEFAULT_CHECKPOINT_STEPS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::{Split, TaskKind};

    #[test]
    fn behaviors_parse() {
        assert_eq!("echo_gold".parse(), Ok(MockBehavior::EchoGold));
        assert_eq!("majority_class".parse(), Ok(MockBehavior::MajorityClass));
        assert_eq!(
            "fixed_string:positive".parse(),
            Ok(MockBehavior::FixedString("positive".into()))
        );
        assert!("bogus".parse::<MockBehavior>().is_err());
    }

    #[test]
    fn steps_and_losses() {
        let c = TrainConfig::default();
        assert_eq!(total_steps(320, &c), 10);
        assert_eq!(total_steps(321, &c), 11);
        assert_eq!(total_steps(0, &c), 1);
        assert_eq!(checkpoint_steps(250, 100), vec![100, 200, 250]);
        assert_eq!(checkpoint_steps(200, 100), vec![100, 200]);
        assert_eq!(checkpoint_steps(7, 100), vec![7]);
        let total = 1000;
        let knee = 600;
        for s in 1..knee {
            assert!(mock_loss(s, total) > mock_loss(s + 1, total));
        }
        assert_eq!(mock_loss(knee, total), mock_loss(total, total));
    }

    #[test]
    fn train_then_infer() {
        let dir = tempfile::tempdir().unwrap();
        let rec = |i: usize, answer: &str| InstructionRecord {
            id: format!("r{i}"),
            task: TaskKind::Hc,
            dataset: "Headline".into(),
            split: Split::Train,
            instruction: "q".into(),
            options: Some(vec!["yes".into(), "no".into()]),
            input: "x".into(),
            answer: answer.into(),
            source_sample_id: format!("r{i}"),
        };
        let train: Vec<_> = (0..100).map(|i| rec(i, if i % 3 == 0 { "yes" } else { "no" })).collect();
        let (tf, ef, cf) = (dir.path().join("t.jsonl"), dir.path().join("e.jsonl"), dir.path().join("c.json"));
        io::write_jsonl(&tf, &train).unwrap();
        io::write_jsonl(&ef, &train[..3]).unwrap();
        io::write_json(&cf, &TrainConfig::default()).unwrap();
        let out = dir.path().join("ckpt");
        let ck = mock_train(&tf, &ef, &cf, &out, 2).unwrap();
        assert_eq!(ck.iter().map(|c| c.step).collect::<Vec<_>>(), vec![2, 4]);
        let model = out.join(&ck[0].path);

        let prompts = dir.path().join("p.jsonl");
        io::write_jsonl(
            &prompts,
            &[PromptRow {
                id: "a".into(),
                prompt: "p".into(),
            }],
        )
        .unwrap();
        let o = dir.path().join("o.jsonl");
        let got = mock_infer(&model, &prompts, &o, &MockBehavior::MajorityClass, Path::new("none")).unwrap();
        assert_eq!(got[0].completion, "no");
        io::write_jsonl(
            &answers_path(&prompts, None),
            &[AnswerRow {
                id: "a".into(),
                answer: "yes".into(),
            }],
        )
        .unwrap();
        let got = mock_infer(&model, &prompts, &o, &MockBehavior::EchoGold, &answers_path(&prompts, None)).unwrap();
        assert_eq!(got[0].completion, "yes");
    }
}
