//! Task, phase and split vocabularies shared by every stage of the pipeline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The six task kinds. Four are classification-shaped, two are generation-shaped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TaskKind {
    #[serde(rename = "SA")]
    Sa,
    #[serde(rename = "HC")]
    Hc,
    #[serde(rename = "NER")]
    Ner,
    #[serde(rename = "RE")]
    Re,
    #[serde(rename = "NER_CLS")]
    NerCls,
    #[serde(rename = "RE_CLS")]
    ReCls,
}

impl TaskKind {
    pub const ALL: [TaskKind; 6] = [
        TaskKind::Sa,
        TaskKind::Hc,
        TaskKind::Ner,
        TaskKind::Re,
        TaskKind::NerCls,
        TaskKind::ReCls,
    ];

    /// Tasks evaluated in the task-specific phase, in table order.
    pub const PRIMARY: [TaskKind; 4] = [TaskKind::Sa, TaskKind::Hc, TaskKind::Ner, TaskKind::Re];

    pub fn is_classification(self) -> bool {
        !self.is_generation()
    }

    pub fn is_generation(self) -> bool {
        matches!(self, TaskKind::Ner | TaskKind::Re)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Sa => "SA",
            TaskKind::Hc => "HC",
            TaskKind::Ner => "NER",
            TaskKind::Re => "RE",
            TaskKind::NerCls => "NER_CLS",
            TaskKind::ReCls => "RE_CLS",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown {kind} `{value}`")]
pub struct ParseEnumError {
    kind: &'static str,
    value: String,
}

impl FromStr for TaskKind {
    type Err = ParseEnumError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .trim()
            .to_ascii_uppercase()
            .chars()
            .map(|c| if c == '-' || c == ' ' { '_' } else { c })
            .collect();
        match key.as_str() {
            "SA" => Ok(TaskKind::Sa),
            "HC" => Ok(TaskKind::Hc),
            "NER" => Ok(TaskKind::Ner),
            "RE" => Ok(TaskKind::Re),
            "NER_CLS" | "NER(CLS)" | "NERCLS" => Ok(TaskKind::NerCls),
            "RE_CLS" | "RE(CLS)" | "RECLS" => Ok(TaskKind::ReCls),
            _ => Err(ParseEnumError {
                kind: "task",
                value: s.to_string(),
            }),
        }
    }
}

/// The three tuning regimes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    TaskSpecific,
    MultiTask,
    ZeroShot,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::TaskSpecific, Phase::MultiTask, Phase::ZeroShot];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::TaskSpecific => "task_specific",
            Phase::MultiTask => "multi_task",
            Phase::ZeroShot => "zero_shot",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Phase {
    type Err = ParseEnumError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "task_specific" | "1" => Ok(Phase::TaskSpecific),
            "multi_task" | "2" => Ok(Phase::MultiTask),
            "zero_shot" | "3" => Ok(Phase::ZeroShot),
            _ => Err(ParseEnumError {
                kind: "phase",
                value: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = ParseEnumError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "test" | "eval" => Ok(Split::Test),
            _ => Err(ParseEnumError {
                kind: "split",
                value: s.to_string(),
            }),
        }
    }
}

/// Record construction mode: plain template or template with an options section.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Standard,
    #[serde(rename = "zeroshot")]
    ZeroShot,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Standard => "standard",
            Mode::ZeroShot => "zeroshot",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = ParseEnumError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "standard" => Ok(Mode::Standard),
            "zeroshot" => Ok(Mode::ZeroShot),
            _ => Err(ParseEnumError {
                kind: "mode",
                value: s.to_string(),
            }),
        }
    }
}
