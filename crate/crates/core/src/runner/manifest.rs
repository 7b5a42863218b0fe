use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::adapter::AdapterInvocation;
use super::cost::{GPU_HOURLY_RATE, MULTI_AND_ZERO_SHOT_HOURS, TASK_SPECIFIC_HOURS};
use super::{CheckpointRecord, PhasePlan, TrainConfig};
use crate::io::{self, IoError};
use crate::mixer::{MixFiles, MixPlan};
use crate::task::TaskKind;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
}

impl InputDigest {
    /// Records `path` as absolute so replays work from any directory.
    pub fn of(role: impl Into<String>, path: &Path) -> Result<Self, IoError> {
        Ok(InputDigest {
            role: role.into(),
            path: std::path::absolute(path).map_err(|e| IoError::io(path, e))?,
            sha256: io::sha256_file(path)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodingContract {
    pub strategy: String,
    pub max_new_tokens: BTreeMap<TaskKind, u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostDefaults {
    pub task_specific_hours: f64,
    pub multi_and_zero_shot_hours: f64,
    pub gpu_hourly_rate: f64,
}

impl Default for CostDefaults {
    fn default() -> Self {
        CostDefaults {
            task_specific_hours: TASK_SPECIFIC_HOURS,
            multi_and_zero_shot_hours: MULTI_AND_ZERO_SHOT_HOURS,
            gpu_hourly_rate: GPU_HOURLY_RATE,
        }
    }
}

/// Everything needed to rerun a plan: the plan, its config, digests of every
/// file handed to the adapter, and what the adapter did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub phase_plan: PhasePlan,
    pub train_config: TrainConfig,
    pub mix_plan: MixPlan,
    pub mix_files: MixFiles,
    pub inputs: Vec<InputDigest>,
    pub invocations: Vec<AdapterInvocation>,
    /// Artifact name → path.
    pub artifacts: BTreeMap<String, PathBuf>,
    pub checkpoints: Vec<CheckpointRecord>,
    pub selected_checkpoint: CheckpointRecord,
    pub decoding: DecodingContract,
    pub cost_defaults: CostDefaults,
    pub notes: Vec<String>,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<(), IoError> {
        io::write_json(path, self)
    }

    pub fn read(path: &Path) -> Result<Self, IoError> {
        io::read_json(path)
    }

    /// Inputs whose current content no longer matches the recorded digest
    /// (or that are gone).
    pub fn stale_inputs(&self) -> Vec<&InputDigest> {
        self.inputs
            .iter()
            .filter(|d| io::sha256_file(&d.path).map_or(true, |h| h != d.sha256))
            .collect()
    }

    pub fn input(&self, role: &str) -> Option<&InputDigest> {
        self.inputs.iter().find(|d| d.role == role)
    }
}
