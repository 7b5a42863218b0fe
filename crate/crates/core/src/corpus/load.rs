use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use serde_json::Value;

use super::{
    derive, CorpusError, DatasetManifest, Gold, Sample, SourceFormat, SplitSpec, META_QUESTION,
    META_QUESTION_INDEX, META_SPLIT,
};
use crate::gold::{self, normalize_ws, EntityMention, RelationTriple};
use crate::io;
use crate::seed;
use crate::task::{Split, TaskKind};

/// The nine fixed questions asked of every headline, in column order `q0`..`q8`.
pub const HEADLINE_QUESTIONS: [&str; 9] = [
    "Does the news headline talk about price?",
    "Does the news headline talk about price going up?",
    "Does the news headline talk about price staying constant?",
    "Does the news headline talk about price going down?",
    "Does the news headline talk about a past price?",
    "Does the news headline talk about a future price?",
    "Does the news headline talk about a general event (apart from prices) in the past?",
    "Does the news headline talk about a general event (apart from prices) in the future?",
    "Does the news headline compare gold with any other asset?",
];

/// One raw headline with its nine binary answers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeadlineRow {
    pub headline: String,
    pub answers: Vec<Option<String>>,
    pub meta: BTreeMap<String, String>,
}

impl HeadlineRow {
    pub fn new(headline: impl Into<String>, answers: [&str; 9]) -> Self {
        Self {
            headline: headline.into(),
            answers: answers.iter().map(|a| Some(a.to_string())).collect(),
            meta: BTreeMap::new(),
        }
    }
}

/// Semantic-field view of one source row.
struct RawRow {
    index: usize,
    fields: BTreeMap<String, Value>,
    meta: BTreeMap<String, String>,
}

impl RawRow {
    fn text(&self, dataset: &str, field: &str) -> Result<String, CorpusError> {
        let text = self
            .fields
            .get(field)
            .and_then(value_to_string)
            .map(|s| normalize_ws(&s))
            .unwrap_or_default();
        if text.is_empty() {
            return Err(malformed(dataset, self.index, format!("missing or empty `{field}`")));
        }
        Ok(text)
    }
}

fn malformed(dataset: &str, row: usize, reason: impl Into<String>) -> CorpusError {
    CorpusError::MalformedRow {
        dataset: dataset.to_string(),
        row,
        reason: reason.into(),
    }
}

fn value_to_string(v: &Value) -> Option<String> {
    match v {
        Value::Null => None,
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        other => Some(other.to_string()),
    }
}

/// Loads one dataset into normalized samples.
///
/// Ids are `{name}-{row:06}` (headline samples append `-q{k}`, derived CLS
/// samples append `-e{j}` / `-r{j}` to their source id). Splits are assigned
/// per raw row, so the nine headline questions and all CLS samples derived
/// from one sentence land in the same split.
pub fn load_dataset(manifest: &DatasetManifest) -> Result<Vec<Sample>, CorpusError> {
    manifest.validate()?;
    let mapped: Vec<&str> = manifest.field_mapping.values().map(String::as_str).collect();
    for field in manifest.required_fields() {
        if !mapped.contains(&field.as_str()) {
            return Err(CorpusError::IncompleteMapping {
                dataset: manifest.name.clone(),
                field,
            });
        }
    }

    let mut rows = read_source(manifest, &manifest.source_path, 0)?;
    let split = manifest.split_spec();
    match &split {
        SplitSpec::Explicit { test_source_path } => {
            for r in &mut rows {
                r.meta.insert(META_SPLIT.into(), Split::Train.to_string());
            }
            let test = read_source(manifest, test_source_path, rows.len())?;
            rows.extend(test.into_iter().map(|mut r| {
                r.meta.insert(META_SPLIT.into(), Split::Test.to_string());
                r
            }));
        }
        SplitSpec::Seeded {
            test_fraction,
            seed: split_seed,
        } => {
            let n = rows.len();
            let n_test = ((n as f64) * test_fraction).round() as usize;
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut seed::rng_for(*split_seed, &[&manifest.name, "split"]));
            let mut is_test = vec![false; n];
            for &i in order.iter().take(n_test.min(n)) {
                is_test[i] = true;
            }
            for (r, test) in rows.iter_mut().zip(is_test) {
                let s = if test { Split::Test } else { Split::Train };
                r.meta.insert(META_SPLIT.into(), s.to_string());
            }
        }
    }

    let name = manifest.name.as_str();
    let samples = match manifest.task {
        TaskKind::Sa => rows
            .iter()
            .map(|r| {
                let raw = r.fields.get("label").and_then(value_to_string).unwrap_or_default();
                let label = canonical_label(&manifest.label_vocabulary, &raw).ok_or_else(|| {
                    CorpusError::UnknownLabel {
                        dataset: name.into(),
                        row: r.index,
                        label: raw.clone(),
                    }
                })?;
                Ok(Sample {
                    id: row_id(name, r.index),
                    dataset: name.into(),
                    task: TaskKind::Sa,
                    input_text: r.text(name, "text")?,
                    gold: Gold::Label(label),
                    meta: r.meta.clone(),
                })
            })
            .collect::<Result<Vec<_>, CorpusError>>()?,
        TaskKind::Hc => {
            let headline_rows = rows
                .iter()
                .map(|r| {
                    Ok(HeadlineRow {
                        headline: r.text(name, "headline")?,
                        answers: (0..9)
                            .map(|q| r.fields.get(&format!("q{q}")).and_then(value_to_string))
                            .collect(),
                        meta: r.meta.clone(),
                    })
                })
                .collect::<Result<Vec<_>, CorpusError>>()?;
            expand_headline_as(&headline_rows, name, &manifest.label_vocabulary)?
        }
        TaskKind::Ner | TaskKind::NerCls => {
            let ner = rows
                .iter()
                .map(|r| {
                    Ok(Sample {
                        id: row_id(name, r.index),
                        dataset: name.into(),
                        task: TaskKind::Ner,
                        input_text: r.text(name, "text")?,
                        gold: Gold::Entities(parse_entities_value(name, r)?),
                        meta: r.meta.clone(),
                    })
                })
                .collect::<Result<Vec<_>, CorpusError>>()?;
            if manifest.task == TaskKind::Ner {
                ner
            } else {
                let derived = derive::derive_ner_cls_as(&ner, name)?;
                canonicalize_labels(derived, manifest)?
            }
        }
        TaskKind::Re | TaskKind::ReCls => {
            let re = rows
                .iter()
                .map(|r| {
                    Ok(Sample {
                        id: row_id(name, r.index),
                        dataset: name.into(),
                        task: TaskKind::Re,
                        input_text: r.text(name, "text")?,
                        gold: Gold::Relations(parse_relations_value(name, r)?),
                        meta: r.meta.clone(),
                    })
                })
                .collect::<Result<Vec<_>, CorpusError>>()?;
            if manifest.task == TaskKind::Re {
                re
            } else {
                let derived = derive::derive_re_cls_as(&re, name)?;
                canonicalize_labels(derived, manifest)?
            }
        }
    };

    if let Some(expected) = manifest.expected_count {
        if expected != samples.len() {
            return Err(CorpusError::CountMismatch {
                dataset: name.into(),
                expected,
                actual: samples.len(),
            });
        }
    }
    Ok(samples)
}

fn row_id(dataset: &str, index: usize) -> String {
    format!("{dataset}-{index:06}")
}

/// Exact match first, then case-insensitive; returns the vocabulary spelling.
fn canonical_label(vocabulary: &[String], raw: &str) -> Option<String> {
    let raw = normalize_ws(raw);
    vocabulary
        .iter()
        .find(|v| **v == raw)
        .or_else(|| vocabulary.iter().find(|v| v.to_lowercase() == raw.to_lowercase()))
        .cloned()
}

fn canonicalize_labels(
    samples: Vec<Sample>,
    manifest: &DatasetManifest,
) -> Result<Vec<Sample>, CorpusError> {
    samples
        .into_iter()
        .enumerate()
        .map(|(i, mut s)| {
            let raw = s.gold.label().unwrap_or_default().to_string();
            let label = canonical_label(&manifest.label_vocabulary, &raw).ok_or_else(|| {
                CorpusError::UnknownLabel {
                    dataset: manifest.name.clone(),
                    row: i,
                    label: raw,
                }
            })?;
            s.gold = Gold::Label(label);
            Ok(s)
        })
        .collect()
}

fn read_source(
    manifest: &DatasetManifest,
    path: &Path,
    first_index: usize,
) -> Result<Vec<RawRow>, CorpusError> {
    if !path.exists() {
        return Err(CorpusError::MissingFile(path.to_path_buf()));
    }
    let text = io::read_utf8(path)?;
    let name = manifest.name.as_str();
    let source_rows: Vec<BTreeMap<String, Value>> = match manifest.format {
        SourceFormat::Csv | SourceFormat::Tsv => {
            let mut builder = csv::ReaderBuilder::new();
            builder.has_headers(true);
            if manifest.format == SourceFormat::Tsv {
                builder.delimiter(b'\t').quoting(false);
            }
            let mut reader = builder.from_reader(text.as_bytes());
            let headers = reader
                .headers()
                .map_err(|e| malformed(name, first_index, format!("header: {e}")))?
                .clone();
            reader
                .records()
                .enumerate()
                .map(|(i, rec)| {
                    let rec = rec.map_err(|e| malformed(name, first_index + i, e.to_string()))?;
                    Ok(headers
                        .iter()
                        .zip(rec.iter())
                        .map(|(h, v)| (h.trim().to_string(), Value::String(v.to_string())))
                        .collect())
                })
                .collect::<Result<_, CorpusError>>()?
        }
        SourceFormat::JsonLines => text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, line)| match serde_json::from_str::<Value>(line) {
                Ok(Value::Object(obj)) => Ok(obj.into_iter().collect()),
                Ok(_) => Err(malformed(name, first_index + i, "not a JSON object")),
                Err(e) => Err(malformed(name, first_index + i, e.to_string())),
            })
            .collect::<Result<_, CorpusError>>()?,
    };

    Ok(source_rows
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            let mut fields = BTreeMap::new();
            let mut meta = BTreeMap::new();
            for (source, target) in &manifest.field_mapping {
                let Some(value) = row.get(source) else { continue };
                match target.strip_prefix("meta:") {
                    Some(key) => {
                        if let Some(s) = value_to_string(value) {
                            meta.insert(key.to_string(), s);
                        }
                    }
                    None => {
                        fields.insert(target.clone(), value.clone());
                    }
                }
            }
            RawRow {
                index: first_index + i,
                fields,
                meta,
            }
        })
        .collect())
}

fn first_key(obj: &serde_json::Map<String, Value>, keys: &[&str]) -> Option<String> {
    keys.iter()
        .find_map(|k| obj.get(*k))
        .and_then(value_to_string)
        .map(|s| normalize_ws(&s))
        .filter(|s| !s.is_empty())
}

fn parse_entities_value(dataset: &str, row: &RawRow) -> Result<Vec<EntityMention>, CorpusError> {
    let bad = |reason: &str| malformed(dataset, row.index, reason);
    match row.fields.get("entities") {
        None | Some(Value::Null) => Err(bad("missing `entities`")),
        Some(Value::String(s)) => {
            let (parsed, dropped) = gold::parse_entity_entries(s);
            if let Some(entry) = dropped.first() {
                return Err(malformed(dataset, row.index, format!("bad entity entry `{entry}`")));
            }
            Ok(parsed)
        }
        Some(Value::Array(items)) => items
            .iter()
            .map(|item| {
                let (surface, ty) = match item {
                    Value::Object(obj) => (
                        first_key(obj, &["surface", "text", "entity", "word", "name"]),
                        first_key(obj, &["entity_type", "type", "label"]),
                    ),
                    Value::Array(pair) if pair.len() == 2 => (
                        value_to_string(&pair[0]).map(|s| normalize_ws(&s)),
                        value_to_string(&pair[1]).map(|s| normalize_ws(&s)),
                    ),
                    _ => (None, None),
                };
                match (surface, ty) {
                    (Some(s), Some(t)) if !s.is_empty() && !t.is_empty() => {
                        Ok(EntityMention::new(s, t))
                    }
                    _ => Err(bad("entity needs a nonempty surface and type")),
                }
            })
            .collect(),
        Some(_) => Err(bad("`entities` must be a list or a string")),
    }
}

fn parse_relations_value(dataset: &str, row: &RawRow) -> Result<Vec<RelationTriple>, CorpusError> {
    let bad = |reason: &str| malformed(dataset, row.index, reason);
    match row.fields.get("relations") {
        None | Some(Value::Null) => Err(bad("missing `relations`")),
        Some(Value::String(s)) => {
            let (parsed, dropped) = gold::parse_relation_entries(s);
            if let Some(entry) = dropped.first() {
                return Err(malformed(dataset, row.index, format!("bad relation entry `{entry}`")));
            }
            Ok(parsed)
        }
        Some(Value::Array(items)) => items
            .iter()
            .map(|item| {
                let parts = match item {
                    Value::Object(obj) => (
                        first_key(obj, &["relation", "predicate", "type"]),
                        first_key(obj, &["subject", "head", "subj"]),
                        first_key(obj, &["object", "tail", "obj"]),
                    ),
                    Value::Array(t) if t.len() == 3 => {
                        let get = |i: usize| {
                            value_to_string(&t[i])
                                .map(|s| normalize_ws(&s))
                                .filter(|s| !s.is_empty())
                        };
                        (get(0), get(1), get(2))
                    }
                    _ => (None, None, None),
                };
                match parts {
                    (Some(r), Some(s), Some(o)) => Ok(RelationTriple::new(r, s, o)),
                    _ => Err(bad("relation needs nonempty relation, subject and object")),
                }
            })
            .collect(),
        Some(_) => Err(bad("`relations` must be a list or a string")),
    }
}

fn yes_no(raw: &str) -> Option<&'static str> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "yes" | "y" | "1" | "1.0" | "true" => Some("Yes"),
        "no" | "n" | "0" | "0.0" | "false" => Some("No"),
        _ => None,
    }
}

/// Expands each headline into nine Yes/No samples, one per fixed question.
pub fn expand_headline(rows: &[HeadlineRow]) -> Result<Vec<Sample>, CorpusError> {
    expand_headline_as(rows, "Headline", &[])
}

pub(crate) fn expand_headline_as(
    rows: &[HeadlineRow],
    dataset: &str,
    vocabulary: &[String],
) -> Result<Vec<Sample>, CorpusError> {
    let mut out = Vec::with_capacity(rows.len() * HEADLINE_QUESTIONS.len());
    for (row, r) in rows.iter().enumerate() {
        for (q, question) in HEADLINE_QUESTIONS.iter().enumerate() {
            let raw = r
                .answers
                .get(q)
                .cloned()
                .flatten()
                .filter(|a| !a.trim().is_empty())
                .ok_or(CorpusError::MissingQuestionAnswer { row, question: q })?;
            let unknown = || CorpusError::UnknownLabel {
                dataset: dataset.to_string(),
                row,
                label: raw.clone(),
            };
            let answer = yes_no(&raw).ok_or_else(unknown)?;
            let label = if vocabulary.is_empty() {
                answer.to_string()
            } else {
                canonical_label(vocabulary, answer).ok_or_else(unknown)?
            };
            let mut meta = r.meta.clone();
            meta.insert(META_QUESTION_INDEX.into(), q.to_string());
            meta.insert(META_QUESTION.into(), question.to_string());
            out.push(Sample {
                id: format!("{}-q{q}", row_id(dataset, row)),
                dataset: dataset.to_string(),
                task: TaskKind::Hc,
                input_text: format!("{}\nQuestion: {question}", normalize_ws(&r.headline)),
                gold: Gold::Label(label),
                meta,
            });
        }
    }
    Ok(out)
}
