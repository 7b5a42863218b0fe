//! Synthetic stand-ins for the benchmark datasets.
//!
//! Each dataset is written in a different source format with a manifest that
//! loads it, so fixtures exercise the same ingestion path as real data. At
//! [`FixtureSpec::published`] scale every dataset has its published cardinality.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::{json, Value};

use crate::corpus::{DatasetManifest, SourceFormat, SplitSpec};
use crate::io::{self, IoError};
use crate::seed::rng_for;
use crate::task::TaskKind;

pub const SENTIMENT_LABELS: [&str; 3] = ["negative", "neutral", "positive"];
pub const ENTITY_TYPES: [&str; 3] = ["PER", "ORG", "LOC"];
pub const RELATION_LABELS: [&str; 8] = [
    "subsidiary",
    "owned_by",
    "manufacturer",
    "product_or_material_produced",
    "industry",
    "headquarters_location",
    "founded_by",
    "chief_executive_officer",
];

const ORGS: [&str; 8] = [
    "Northwind Holdings",
    "Acme Capital",
    "Globex Bank",
    "Initech Systems",
    "Umbrella Pharma",
    "Stark Metals",
    "Wayne Freight",
    "Hooli Media",
];
const PEOPLE: [&str; 6] = ["Ada Park", "Ravi Menon", "Lena Ortiz", "Tom Brandt", "Mei Chen", "Omar Haddad"];
const PLACES: [&str; 6] = ["Boston", "Frankfurt", "Singapore", "Toronto", "Zurich", "Osaka"];
const EVENTS: [&str; 6] = [
    "quarterly earnings call",
    "guidance update",
    "merger announcement",
    "rating change",
    "dividend decision",
    "product launch",
];

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureSpec {
    /// Sentiment dataset → row count. FPB is CSV, FiQA-SA JSON lines, TFNS
    /// CSV, NWGI TSV; other names are written as CSV.
    pub sentiment: Vec<(String, usize)>,
    pub headline_rows: usize,
    pub ner_rows: usize,
    /// Total mentions across all NER rows (= derived NER_CLS samples).
    pub ner_entities: usize,
    pub re_rows: usize,
    /// Total triples across all RE rows (= derived RE_CLS samples).
    pub re_triples: usize,
    pub test_fraction: f64,
    pub seed: u64,
}

impl FixtureSpec {
    /// Published dataset sizes.
    pub fn published() -> Self {
        FixtureSpec {
            sentiment: vec![
                ("FPB".into(), 3634),
                ("FiQA-SA".into(), 938),
                ("TFNS".into(), 9543),
                ("NWGI".into(), 16184),
            ],
            headline_rows: 11412,
            ner_rows: 609,
            ner_entities: 1003,
            re_rows: 6768,
            re_triples: 9657,
            test_fraction: 0.2,
            seed: 0,
        }
    }

    /// A few dozen rows per dataset, for fast end-to-end runs.
    pub fn small() -> Self {
        FixtureSpec {
            sentiment: vec![
                ("FPB".into(), 60),
                ("FiQA-SA".into(), 30),
                ("TFNS".into(), 45),
                ("NWGI".into(), 50),
            ],
            headline_rows: 24,
            ner_rows: 30,
            ner_entities: 48,
            re_rows: 40,
            re_triples: 57,
            test_fraction: 0.25,
            seed: 0,
        }
    }

    /// Expected sample count per dataset name.
    pub fn expected_counts(&self) -> BTreeMap<String, usize> {
        let mut out: BTreeMap<String, usize> = self.sentiment.iter().cloned().collect();
        out.insert("Headline".into(), self.headline_rows * 9);
        out.insert("NER".into(), self.ner_rows);
        out.insert("NER_CLS".into(), self.ner_entities);
        out.insert("FinRED".into(), self.re_rows);
        out.insert("RE_CLS".into(), self.re_triples);
        out
    }
}

/// Splits `total` items over `rows` buckets as evenly as possible, in a
/// seeded order.
fn spread(total: usize, rows: usize, rng: &mut impl Rng) -> Vec<usize> {
    if rows == 0 {
        return Vec::new();
    }
    let mut counts: Vec<usize> = (0..rows).map(|i| total / rows + usize::from(i < total % rows)).collect();
    counts.shuffle(rng);
    counts
}

fn format_for(name: &str) -> SourceFormat {
    match name {
        "FiQA-SA" => SourceFormat::JsonLines,
        "NWGI" => SourceFormat::Tsv,
        _ => SourceFormat::Csv,
    }
}

fn extension(format: SourceFormat) -> &'static str {
    match format {
        SourceFormat::Csv => "csv",
        SourceFormat::Tsv => "tsv",
        SourceFormat::JsonLines => "jsonl",
    }
}

fn write_table(path: &Path, format: SourceFormat, header: &[&str], rows: &[Vec<String>]) -> Result<(), IoError> {
    let bytes = match format {
        SourceFormat::JsonLines => {
            let objs: Vec<Value> = rows
                .iter()
                .map(|r| Value::Object(header.iter().map(|h| h.to_string()).zip(r.iter().map(|v| json!(v))).collect()))
                .collect();
            io::to_jsonl(&objs).into_bytes()
        }
        SourceFormat::Csv | SourceFormat::Tsv => {
            let delimiter = if format == SourceFormat::Tsv { b'\t' } else { b',' };
            let mut w = csv::WriterBuilder::new().delimiter(delimiter).from_writer(Vec::new());
            let to_io = |e: csv::Error| IoError::io(path, std::io::Error::other(e));
            w.write_record(header).map_err(to_io)?;
            for r in rows {
                w.write_record(r).map_err(to_io)?;
            }
            w.into_inner().map_err(|e| IoError::io(path, std::io::Error::other(e.to_string())))?
        }
    };
    io::write_atomic(path, &bytes)
}

fn mapping(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
}

fn entity_surface(kind: usize, row: usize, j: usize) -> String {
    match kind {
        0 => format!("{} {}", PEOPLE[(row + j) % PEOPLE.len()], j + 1),
        1 => format!("{} {}", ORGS[(row + j) % ORGS.len()], j + 1),
        _ => format!("{} {}", PLACES[(row + j) % PLACES.len()], j + 1),
    }
}

/// Writes every fixture dataset plus `manifests.json` into `dir` and returns
/// the manifest path.
pub fn write_fixtures(dir: &Path, spec: &FixtureSpec) -> Result<PathBuf, IoError> {
    std::fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    let split = Some(SplitSpec::Seeded {
        test_fraction: spec.test_fraction,
        seed: spec.seed,
    });
    let vocab = |labels: &[&str]| labels.iter().map(|l| l.to_string()).collect::<Vec<_>>();
    let mut manifests = Vec::new();

    for (name, n) in &spec.sentiment {
        let mut rng = rng_for(spec.seed, &["fixture", name]);
        let format = format_for(name);
        let rows: Vec<Vec<String>> = (0..*n)
            .map(|i| {
                let label = SENTIMENT_LABELS[rng.gen_range(0..SENTIMENT_LABELS.len())];
                let verb = match label {
                    "negative" => "slid",
                    "positive" => "rallied",
                    _ => "held steady",
                };
                let text = format!(
                    "Shares of {} {verb} after the {} (note {i}).",
                    ORGS[rng.gen_range(0..ORGS.len())],
                    EVENTS[rng.gen_range(0..EVENTS.len())]
                );
                vec![text, label.to_string()]
            })
            .collect();
        let file = format!("{name}.{}", extension(format));
        write_table(&dir.join(&file), format, &["sentence", "sentiment"], &rows)?;
        manifests.push(DatasetManifest {
            name: name.clone(),
            task: TaskKind::Sa,
            source_path: file.into(),
            format,
            field_mapping: mapping(&[("sentence", "text"), ("sentiment", "label")]),
            label_vocabulary: vocab(&SENTIMENT_LABELS),
            expected_count: Some(*n),
            split: split.clone(),
        });
    }

    {
        let mut rng = rng_for(spec.seed, &["fixture", "Headline"]);
        let mut header = vec!["headline".to_string()];
        header.extend((0..9).map(|q| format!("q{q}")));
        let rows: Vec<Vec<String>> = (0..spec.headline_rows)
            .map(|i| {
                let up = rng.gen_bool(0.5);
                let mut row = vec![format!(
                    "Gold {} {} per ounce in session {i}",
                    if up { "climbs" } else { "drops" },
                    rng.gen_range(1..40)
                )];
                row.extend((0..9).map(|_| if rng.gen_bool(0.4) { "yes" } else { "no" }.to_string()));
                row
            })
            .collect();
        let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
        write_table(&dir.join("Headline.csv"), SourceFormat::Csv, &header_refs, &rows)?;
        let pairs: Vec<(String, String)> = header.iter().map(|h| (h.clone(), h.clone())).collect();
        manifests.push(DatasetManifest {
            name: "Headline".into(),
            task: TaskKind::Hc,
            source_path: "Headline.csv".into(),
            format: SourceFormat::Csv,
            field_mapping: pairs.into_iter().collect(),
            label_vocabulary: vocab(&["yes", "no"]),
            expected_count: Some(spec.headline_rows * 9),
            split: split.clone(),
        });
    }

    {
        let mut rng = rng_for(spec.seed, &["fixture", "NER"]);
        let per_row = spread(spec.ner_entities, spec.ner_rows, &mut rng);
        let lines: Vec<Value> = per_row
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                let ents: Vec<(String, &str)> = (0..k)
                    .map(|j| {
                        let kind = rng.gen_range(0..ENTITY_TYPES.len());
                        (entity_surface(kind, i, j), ENTITY_TYPES[kind])
                    })
                    .collect();
                let text = if ents.is_empty() {
                    format!("No parties were named in clause {i}.")
                } else {
                    let names: Vec<&str> = ents.iter().map(|(s, _)| s.as_str()).collect();
                    format!("Clause {i} binds {} under this agreement.", names.join(" and "))
                };
                json!({
                    "tokens_text": text,
                    "entities": ents.iter().map(|(s, t)| json!({"surface": s, "type": t})).collect::<Vec<_>>(),
                })
            })
            .collect();
        io::write_jsonl(&dir.join("NER.jsonl"), &lines)?;
        let map = mapping(&[("tokens_text", "text"), ("entities", "entities")]);
        for (name, task, labels, count) in [
            ("NER", TaskKind::Ner, vec![], spec.ner_rows),
            ("NER_CLS", TaskKind::NerCls, vocab(&ENTITY_TYPES), spec.ner_entities),
        ] {
            manifests.push(DatasetManifest {
                name: name.into(),
                task,
                source_path: "NER.jsonl".into(),
                format: SourceFormat::JsonLines,
                field_mapping: map.clone(),
                label_vocabulary: labels,
                expected_count: Some(count),
                split: split.clone(),
            });
        }
    }

    {
        let mut rng = rng_for(spec.seed, &["fixture", "FinRED"]);
        let per_row = spread(spec.re_triples, spec.re_rows, &mut rng);
        let lines: Vec<Value> = per_row
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                let triples: Vec<(&str, String, String)> = (0..k)
                    .map(|j| {
                        let rel = RELATION_LABELS[rng.gen_range(0..RELATION_LABELS.len())];
                        let subject = format!("{} {}", ORGS[(i + j) % ORGS.len()], j + 1);
                        let object = match rel {
                            "founded_by" | "chief_executive_officer" => PEOPLE[(i + 2 * j) % PEOPLE.len()].to_string(),
                            "headquarters_location" => PLACES[(i + 2 * j) % PLACES.len()].to_string(),
                            _ => format!("{} {}", ORGS[(i + 3 * j + 1) % ORGS.len()], j + 2),
                        };
                        (rel, subject, object)
                    })
                    .collect();
                let text = if triples.is_empty() {
                    format!("Report {i} lists no corporate links.")
                } else {
                    let parts: Vec<String> = triples.iter().map(|(_, s, o)| format!("{s} with {o}")).collect();
                    format!("Report {i} links {}.", parts.join("; "))
                };
                json!({
                    "sentence": text,
                    "triples": triples
                        .iter()
                        .map(|(r, s, o)| json!({"relation": r, "subject": s, "object": o}))
                        .collect::<Vec<_>>(),
                })
            })
            .collect();
        io::write_jsonl(&dir.join("FinRED.jsonl"), &lines)?;
        let map = mapping(&[("sentence", "text"), ("triples", "relations")]);
        for (name, task, labels, count) in [
            ("FinRED", TaskKind::Re, vec![], spec.re_rows),
            ("RE_CLS", TaskKind::ReCls, vocab(&RELATION_LABELS), spec.re_triples),
        ] {
            manifests.push(DatasetManifest {
                name: name.into(),
                task,
                source_path: "FinRED.jsonl".into(),
                format: SourceFormat::JsonLines,
                field_mapping: map.clone(),
                label_vocabulary: labels,
                expected_count: Some(count),
                split: split.clone(),
            });
        }
    }

    let path = dir.join("manifests.json");
    io::write_json(&path, &manifests)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{by_task, load_all, load_manifests};

    #[test]
    fn small_fixtures_load_with_declared_counts() {
        let dir = tempfile::tempdir().unwrap();
        let spec = FixtureSpec::small();
        let path = write_fixtures(dir.path(), &spec).unwrap();
        let manifests = load_manifests(&path).unwrap();
        assert_eq!(manifests.len(), 9);
        let loaded = load_all(&manifests).unwrap();
        let counts: BTreeMap<String, usize> = loaded.iter().map(|(k, v)| (k.clone(), v.len())).collect();
        assert_eq!(counts, spec.expected_counts());
        let tasks = by_task(&loaded);
        assert_eq!(tasks.len(), 6);
        assert_eq!(tasks[&TaskKind::Sa].len(), 185);
    }

    #[test]
    fn fixtures_are_byte_stable() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        write_fixtures(a.path(), &FixtureSpec::small()).unwrap();
        write_fixtures(b.path(), &FixtureSpec::small()).unwrap();
        for f in ["FPB.csv", "FiQA-SA.jsonl", "NWGI.tsv", "Headline.csv", "NER.jsonl", "FinRED.jsonl"] {
            assert_eq!(
                io::sha256_file(&a.path().join(f)).unwrap(),
                io::sha256_file(&b.path().join(f)).unwrap(),
                "{f}"
            );
        }
    }

    #[test]
    fn spread_is_exact() {
        let mut rng = rng_for(1, &["t"]);
        let s = spread(1003, 609, &mut rng);
        assert_eq!(s.iter().sum::<usize>(), 1003);
        assert!(s.iter().all(|k| (1..=2).contains(k)));
        assert!(spread(5, 0, &mut rng).is_empty());
    }
}
