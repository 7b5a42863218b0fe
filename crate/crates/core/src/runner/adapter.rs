//! The adapter process protocol.
//!
//! ```text
//! <adapter> train --train-file T --eval-file E --config C --output-dir D
//!     writes D/checkpoints.json: [{"step", "eval_loss", "path"}, ...]
//! <adapter> infer --model M --prompts P --output O --max-new-tokens N
//!     P rows: {"id", "prompt"}; writes O rows: {"id", "completion"}, one per prompt
//! ```
//!
//! Checkpoint paths may be relative to the output directory.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};

use super::{CheckpointRecord, RunnerError};
use crate::io::{self, IoError};
use crate::scorer::Completion;

/// Set on `train` invocations when the plan fixes a checkpoint interval.
pub const ENV_CHECKPOINT_EVERY: &str = "FINBENCH_CHECKPOINT_EVERY_STEPS";

pub const CHECKPOINTS_FILE: &str = "checkpoints.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdapterKind {
    Train,
    Infer,
}

impl fmt::Display for AdapterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AdapterKind::Train => "train",
            AdapterKind::Infer => "infer",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRow {
    pub id: String,
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerRow {
    pub id: String,
    pub answer: String,
}

/// A resolved adapter executable plus extra environment for its processes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adapter {
    pub executable: PathBuf,
    pub env: Vec<(String, String)>,
}

impl Adapter {
    /// `spec` is a path (anything containing a separator) or a bare name
    /// looked up on `PATH`.
    pub fn resolve(spec: &str) -> Result<Adapter, RunnerError> {
        let not_found = || RunnerError::AdapterNotFound(spec.to_string());
        if spec.trim().is_empty() {
            return Err(not_found());
        }
        let direct = Path::new(spec);
        let path = if direct.components().count() > 1 || direct.is_absolute() {
            direct.is_file().then(|| direct.to_path_buf())
        } else {
            std::env::var_os("PATH").and_then(|paths| {
                std::env::split_paths(&paths)
                    .map(|d| d.join(spec))
                    .find(|p| p.is_file())
            })
        };
        Ok(Adapter {
            executable: path.ok_or_else(not_found)?,
            env: Vec::new(),
        })
    }

    pub fn with_env(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.env.push((key.into(), value.into()));
        self
    }

    /// This adapter plus the checkpoint-interval variable, if `every` is set.
    pub fn with_checkpoint_interval(&self, every: Option<u64>) -> Adapter {
        match every {
            Some(n) => self.clone().with_env(ENV_CHECKPOINT_EVERY, n.to_string()),
            None => self.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AdapterRequest {
    Train {
        train_file: PathBuf,
        eval_file: PathBuf,
        config: PathBuf,
        output_dir: PathBuf,
    },
    Infer {
        model: PathBuf,
        prompts: PathBuf,
        output: PathBuf,
        max_new_tokens: u32,
    },
}

impl AdapterRequest {
    pub fn kind(&self) -> AdapterKind {
        match self {
            AdapterRequest::Train { .. } => AdapterKind::Train,
            AdapterRequest::Infer { .. } => AdapterKind::Infer,
        }
    }

    pub fn args(&self) -> Vec<String> {
        let s = |p: &Path| p.display().to_string();
        match self {
            AdapterRequest::Train {
                train_file,
                eval_file,
                config,
                output_dir,
            } => vec![
                "train".into(),
                "--train-file".into(),
                s(train_file),
                "--eval-file".into(),
                s(eval_file),
                "--config".into(),
                s(config),
                "--output-dir".into(),
                s(output_dir),
            ],
            AdapterRequest::Infer {
                model,
                prompts,
                output,
                max_new_tokens,
            } => vec![
                "infer".into(),
                "--model".into(),
                s(model),
                "--prompts".into(),
                s(prompts),
                "--output".into(),
                s(output),
                "--max-new-tokens".into(),
                max_new_tokens.to_string(),
            ],
        }
    }
}

/// What was run, recorded in the run manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdapterInvocation {
    pub kind: AdapterKind,
    pub command: Vec<String>,
    pub exit_status: Option<i32>,
    pub started_at: String,
    pub finished_at: String,
    pub stdout_log: PathBuf,
    pub stderr_log: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdapterResult {
    pub invocation: AdapterInvocation,
    /// Filled for train requests, with paths made absolute.
    pub checkpoints: Vec<CheckpointRecord>,
    /// Filled for infer requests, in prompt order.
    pub completions: Vec<Completion>,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn tail(path: &Path, max: usize) -> String {
    let text = std::fs::read_to_string(path).unwrap_or_default();
    let start = text.len().saturating_sub(max);
    let start = (start..=text.len()).find(|i| text.is_char_boundary(*i)).unwrap_or(text.len());
    text[start..].trim().to_string()
}

fn violation(msg: impl Into<String>) -> RunnerError {
    RunnerError::ProtocolViolation(msg.into())
}

/// Runs one adapter request, logging stdout/stderr to
/// `{log_dir}/{log_stem}.{stdout,stderr}.log`, and validates its outputs.
pub fn invoke_adapter(
    adapter: &Adapter,
    request: &AdapterRequest,
    log_dir: &Path,
    log_stem: &str,
) -> Result<AdapterResult, RunnerError> {
    std::fs::create_dir_all(log_dir).map_err(|e| IoError::io(log_dir, e))?;
    let stdout_log = log_dir.join(format!("{log_stem}.stdout.log"));
    let stderr_log = log_dir.join(format!("{log_stem}.stderr.log"));
    let out = File::create(&stdout_log).map_err(|e| IoError::io(&stdout_log, e))?;
    let err = File::create(&stderr_log).map_err(|e| IoError::io(&stderr_log, e))?;

    let args = request.args();
    let mut command = vec![adapter.executable.display().to_string()];
    command.extend(args.iter().cloned());

    let started_at = now();
    let status = Command::new(&adapter.executable)
        .args(&args)
        .envs(adapter.env.iter().map(|(k, v)| (k, v)))
        .stdin(Stdio::null())
        .stdout(out)
        .stderr(err)
        .status()
        .map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound | std::io::ErrorKind::PermissionDenied => {
                RunnerError::AdapterNotFound(format!("{}: {e}", adapter.executable.display()))
            }
            _ => IoError::io(&adapter.executable, e).into(),
        })?;
    let invocation = AdapterInvocation {
        kind: request.kind(),
        command,
        exit_status: status.code(),
        started_at,
        finished_at: now(),
        stdout_log,
        stderr_log,
    };
    if !status.success() {
        return Err(RunnerError::AdapterFailed {
            kind: request.kind(),
            status: status.to_string(),
            stderr_tail: tail(&invocation.stderr_log, 2000),
        });
    }

    let mut result = AdapterResult {
        invocation,
        checkpoints: Vec::new(),
        completions: Vec::new(),
    };
    match request {
        AdapterRequest::Train { output_dir, .. } => {
            result.checkpoints = read_checkpoints(output_dir)?;
        }
        AdapterRequest::Infer { prompts, output, .. } => {
            let prompts: Vec<PromptRow> = io::read_jsonl(prompts)?;
            result.completions = read_completions_for(&prompts, output)?;
        }
    }
    Ok(result)
}

/// Reads and validates `checkpoints.json` in `output_dir`.
pub fn read_checkpoints(output_dir: &Path) -> Result<Vec<CheckpointRecord>, RunnerError> {
    let path = output_dir.join(CHECKPOINTS_FILE);
    if !path.is_file() {
        return Err(violation(format!("train produced no {}", path.display())));
    }
    let mut records: Vec<CheckpointRecord> =
        io::read_json(&path).map_err(|e| violation(format!("unreadable checkpoint list: {e}")))?;
    if records.is_empty() {
        return Err(violation("train reported no checkpoints"));
    }
    let mut steps = BTreeSet::new();
    for r in &mut records {
        if !r.eval_loss.is_finite() {
            return Err(violation(format!("checkpoint {} has non-finite eval loss", r.step)));
        }
        if !steps.insert(r.step) {
            return Err(violation(format!("checkpoint step {} reported twice", r.step)));
        }
        let p = Path::new(&r.path);
        if p.is_relative() {
            r.path = output_dir.join(p).display().to_string();
        }
    }
    Ok(records)
}

/// Reads an infer output file and checks it answers every prompt exactly once.
pub fn read_completions_for(prompts: &[PromptRow], output: &Path) -> Result<Vec<Completion>, RunnerError> {
    if !output.is_file() {
        return Err(violation(format!("infer produced no {}", output.display())));
    }
    let rows: Vec<Completion> =
        io::read_jsonl(output).map_err(|e| violation(format!("unreadable completions: {e}")))?;
    let wanted: BTreeSet<&str> = prompts.iter().map(|p| p.id.as_str()).collect();
    let mut by_id = std::collections::BTreeMap::new();
    for row in &rows {
        if !wanted.contains(row.id.as_str()) {
            return Err(violation(format!("completion for unknown id {}", row.id)));
        }
        if by_id.insert(row.id.as_str(), row).is_some() {
            return Err(violation(format!("duplicate completion for id {}", row.id)));
        }
    }
    prompts
        .iter()
        .map(|p| {
            by_id
                .get(p.id.as_str())
                .map(|c| (*c).clone())
                .ok_or_else(|| violation(format!("missing completion for id {}", p.id)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argument_vectors_are_exact() {
        let t = AdapterRequest::Train {
            train_file: "a.jsonl".into(),
            eval_file: "b.jsonl".into(),
            config: "c.json".into(),
            output_dir: "out".into(),
        };
        assert_eq!(
            t.args(),
            ["train", "--train-file", "a.jsonl", "--eval-file", "b.jsonl", "--config", "c.json", "--output-dir", "out"]
        );
        let i = AdapterRequest::Infer {
            model: "m".into(),
            prompts: "p.jsonl".into(),
            output: "o.jsonl".into(),
            max_new_tokens: 16,
        };
        assert_eq!(
            i.args(),
            ["infer", "--model", "m", "--prompts", "p.jsonl", "--output", "o.jsonl", "--max-new-tokens", "16"]
        );
    }

    #[test]
    fn missing_adapter() {
        assert!(matches!(
            Adapter::resolve("/nonexistent/finbench-adapter"),
            Err(RunnerError::AdapterNotFound(_))
        ));
        assert!(matches!(
            Adapter::resolve("definitely-not-on-path-xyz"),
            Err(RunnerError::AdapterNotFound(_))
        ));
    }

    #[test]
    fn completions_must_cover_prompts() {
        let dir = tempfile::tempdir().unwrap();
        let prompts: Vec<PromptRow> = ["a", "b"]
            .iter()
            .map(|id| PromptRow {
                id: id.to_string(),
                prompt: "p".into(),
            })
            .collect();
        let out = dir.path().join("o.jsonl");
        let row = |id: &str| Completion {
            id: id.into(),
            completion: "x".into(),
        };
        io::write_jsonl(&out, &[row("b"), row("a")]).unwrap();
        let got = read_completions_for(&prompts, &out).unwrap();
        assert_eq!(got[0].id, "a");
        io::write_jsonl(&out, &[row("a")]).unwrap();
        match read_completions_for(&prompts, &out) {
            Err(RunnerError::ProtocolViolation(m)) => assert!(m.contains("id b"), "{m}"),
            other => panic!("{other:?}"),
        }
        io::write_jsonl(&out, &[row("a"), row("b"), row("c")]).unwrap();
        assert!(matches!(read_completions_for(&prompts, &out), Err(RunnerError::ProtocolViolation(_))));
        assert!(matches!(
            read_completions_for(&prompts, &dir.path().join("none.jsonl")),
            Err(RunnerError::ProtocolViolation(_))
        ));
    }

    #[test]
    fn checkpoint_list_validation() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(read_checkpoints(dir.path()), Err(RunnerError::ProtocolViolation(_))));
        let rec = |step| CheckpointRecord {
            step,
            eval_loss: 0.5,
            path: format!("checkpoint-{step}"),
        };
        io::write_json(&dir.path().join(CHECKPOINTS_FILE), &vec![rec(1), rec(2)]).unwrap();
        let got = read_checkpoints(dir.path()).unwrap();
        assert!(Path::new(&got[0].path).is_absolute());
        io::write_json(&dir.path().join(CHECKPOINTS_FILE), &vec![rec(1), rec(1)]).unwrap();
        assert!(read_checkpoints(dir.path()).is_err());
    }
}
