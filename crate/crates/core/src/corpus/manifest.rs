use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CorpusError;
use crate::io;
use crate::task::TaskKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceFormat {
    Csv,
    Tsv,
    #[serde(alias = "jsonl")]
    JsonLines,
}

/// How a dataset is divided into train and test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SplitSpec {
    /// `source_path` holds the train rows and this file the test rows.
    Explicit { test_source_path: PathBuf },
    /// Seeded random split over raw rows.
    Seeded {
        test_fraction: f64,
        #[serde(default)]
        seed: u64,
    },
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec::Seeded {
            test_fraction: 0.2,
            seed: 0,
        }
    }
}

/// Declares where a dataset lives and how its columns map onto sample fields.
///
/// `field_mapping` maps source column (CSV/TSV header or JSON key) to a
/// semantic field: `text`, `label`, `entities`, `relations`, `headline`,
/// `q0`..`q8`, or `meta:<key>` to carry a column into the sample's meta.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub name: String,
    pub task: TaskKind,
    pub source_path: PathBuf,
    pub format: SourceFormat,
    pub field_mapping: BTreeMap<String, String>,
    #[serde(default)]
    pub label_vocabulary: Vec<String>,
    #[serde(default)]
    pub expected_count: Option<usize>,
    #[serde(default)]
    pub split: Option<SplitSpec>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let invalid = |reason: String| CorpusError::InvalidManifest {
            name: self.name.clone(),
            reason,
        };
        if self.name.trim().is_empty() {
            return Err(invalid("empty dataset name".into()));
        }
        if self.task.is_classification() == self.label_vocabulary.is_empty() {
            return Err(invalid(format!(
                "label_vocabulary must be {} for task {}",
                if self.task.is_classification() { "nonempty" } else { "empty" },
                self.task
            )));
        }
        let mut seen = BTreeSet::new();
        for label in &self.label_vocabulary {
            if label.trim().is_empty() {
                return Err(invalid("empty label in vocabulary".into()));
            }
            if !seen.insert(label.to_lowercase()) {
                return Err(invalid(format!("duplicate label `{label}`")));
            }
        }
        let mut targets = BTreeSet::new();
        for target in self.field_mapping.values() {
            if !target.starts_with("meta:") && !targets.insert(target.as_str()) {
                return Err(invalid(format!("field `{target}` mapped twice")));
            }
        }
        if let Some(SplitSpec::Seeded { test_fraction, .. }) = &self.split {
            if !(0.0..=1.0).contains(test_fraction) {
                return Err(invalid(format!("test_fraction {test_fraction} outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Semantic fields the task shape needs.
    pub fn required_fields(&self) -> Vec<String> {
        match self.task {
            TaskKind::Sa => vec!["text".into(), "label".into()],
            TaskKind::Hc => std::iter::once("headline".to_string())
                .chain((0..9).map(|q| format!("q{q}")))
                .collect(),
            TaskKind::Ner | TaskKind::NerCls => vec!["text".into(), "entities".into()],
            TaskKind::Re | TaskKind::ReCls => vec!["text".into(), "relations".into()],
        }
    }

    pub fn split_spec(&self) -> SplitSpec {
        self.split.clone().unwrap_or_default()
    }

    fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut self.source_path);
        if let Some(SplitSpec::Explicit { test_source_path }) = &mut self.split {
            resolve(test_source_path);
        }
    }
}

/// Reads a manifest file (a JSON array of dataset objects, or a single
/// object). Relative paths resolve against the manifest file's directory.
pub fn load_manifests(path: &Path) -> Result<Vec<DatasetManifest>, CorpusError> {
    if !path.exists() {
        return Err(CorpusError::MissingFile(path.to_path_buf()));
    }
    let value: serde_json::Value = io::read_json(path)?;
    let items = match value {
        serde_json::Value::Array(items) => items,
        other => vec![other],
    };
    let base = path.parent().unwrap_or(Path::new("."));
    let mut names = BTreeSet::new();
    items
        .into_iter()
        .map(|item| {
            let mut m: DatasetManifest =
                serde_json::from_value(item).map_err(|e| CorpusError::InvalidManifest {
                    name: path.display().to_string(),
                    reason: e.to_string(),
                })?;
            m.validate()?;
            if !names.insert(m.name.clone()) {
                return Err(CorpusError::InvalidManifest {
                    name: m.name,
                    reason: "dataset name declared twice".into(),
                });
            }
            m.resolve_paths(base);
            Ok(m)
        })
        .collect()
}

/// Dataset name → ordered label vocabulary, for classification datasets.
pub type LabelSpace = BTreeMap<String, Vec<String>>;

pub fn label_space(manifests: &[DatasetManifest]) -> LabelSpace {
    manifests
        .iter()
        .filter(|m| m.task.is_classification())
        .map(|m| (m.name.clone(), m.label_vocabulary.clone()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sa() -> DatasetManifest {
        DatasetManifest {
            name: "FPB".into(),
            task: TaskKind::Sa,
            source_path: "fpb.csv".into(),
            format: SourceFormat::Csv,
            field_mapping: BTreeMap::from([
                ("sentence".into(), "text".into()),
                ("label".into(), "label".into()),
            ]),
            label_vocabulary: vec!["negative".into(), "neutral".into(), "positive".into()],
            expected_count: Some(3634),
            split: None,
        }
    }

    #[test]
    fn vocabulary_must_match_task_shape() {
        assert!(sa().validate().is_ok());
        let mut m = sa();
        m.label_vocabulary.clear();
        assert!(m.validate().is_err());
        let mut m = sa();
        m.task = TaskKind::Ner;
        assert!(m.validate().is_err());
    }

    #[test]
    fn rejects_unknown_keys() {
        let json = r#"{"name":"FPB","task":"SA","source_path":"a.csv","format":"csv",
            "field_mapping":{},"label_vocabulary":["a"],"expected_count":null,"split":null,"extra":1}"#;
        assert!(serde_json::from_str::<DatasetManifest>(json).is_err());
    }

    #[test]
    fn wire_keys_are_exact() {
        let v = serde_json::to_value(sa()).unwrap();
        let keys: BTreeSet<_> = v.as_object().unwrap().keys().cloned().collect();
        let want: BTreeSet<String> = [
            "name",
            "task",
            "source_path",
            "format",
            "field_mapping",
            "label_vocabulary",
            "expected_count",
            "split",
        ]
        .into_iter()
        .map(String::from)
        .collect();
        assert_eq!(keys, want);
    }

    #[test]
    fn split_spec_forms() {
        let s: SplitSpec = serde_json::from_str(r#"{"test_fraction":0.3,"seed":9}"#).unwrap();
        assert_eq!(s, SplitSpec::Seeded { test_fraction: 0.3, seed: 9 });
        let s: SplitSpec = serde_json::from_str(r#"{"test_source_path":"t.csv"}"#).unwrap();
        assert!(matches!(s, SplitSpec::Explicit { .. }));
        let mut m = sa();
        m.split = Some(SplitSpec::Seeded { test_fraction: 1.5, seed: 0 });
        assert!(m.validate().is_err());
    }

    #[test]
    fn relative_paths_resolve_against_manifest_dir() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("manifests.json");
        std::fs::write(&p, serde_json::to_string(&vec![sa()]).unwrap()).unwrap();
        let ms = load_manifests(&p).unwrap();
        assert_eq!(ms[0].source_path, dir.path().join("fpb.csv"));
        assert_eq!(label_space(&ms)["FPB"].len(), 3);
    }
}
