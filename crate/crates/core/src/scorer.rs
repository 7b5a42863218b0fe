//! Completion parsing and metrics.
//!
//! Classification tasks report support-weighted per-class F1 (macro and micro
//! are stored alongside). NER reports micro entity-level F1 over exact
//! (surface, type) matches. RE reports micro F1 over relation labels only,
//! ignoring subject and object.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::LabelSpace;
use crate::gold::{self, normalize_label, EntityMention, RelationTriple};
use crate::instruct::InstructionRecord;
use crate::io::{self, IoError};
use crate::task::TaskKind;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParsedPrediction {
    Label(String),
    Entities(BTreeSet<EntityMention>),
    Relations(Vec<RelationTriple>),
    Unparsed(String),
}

/// A parsed prediction plus the number of malformed entries discarded on the way.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Parse {
    pub prediction: ParsedPrediction,
    pub dropped: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum ScoreError {
    #[error("gold has {gold} items but predictions have {pred}")]
    LengthMismatch { gold: usize, pred: usize },
    #[error("no completion for record id `{0}`")]
    MissingCompletion(String),
    #[error("completion for unknown or duplicate id `{0}`")]
    UnexpectedCompletion(String),
    #[error("record {0}: gold answer does not parse")]
    BadGold(String),
    #[error(transparent)]
    Io(#[from] IoError),
}

/// Picks the option whose first case-insensitive occurrence in the completion
/// is earliest. Ties on position go to the longer option. The decision
/// depends only on text positions, never on option order.
pub fn parse_classification(completion: &str, options: &[String]) -> ParsedPrediction {
    let haystack = completion.to_lowercase();
    options
        .iter()
        .filter_map(|o| {
            let needle = o.to_lowercase();
            if needle.is_empty() {
                return None;
            }
            haystack.find(&needle).map(|pos| (pos, std::cmp::Reverse(needle.len()), o))
        })
        .min()
        .map(|(_, _, o)| ParsedPrediction::Label(o.clone()))
        .unwrap_or_else(|| ParsedPrediction::Unparsed(completion.to_string()))
}

pub fn parse_entities(completion: &str) -> Parse {
    let (parsed, dropped) = gold::parse_entity_entries(completion);
    Parse {
        prediction: ParsedPrediction::Entities(parsed.iter().map(EntityMention::normalized).collect()),
        dropped: dropped.len(),
    }
}

pub fn parse_relations(completion: &str) -> Parse {
    let (parsed, dropped) = gold::parse_relation_entries(completion);
    Parse {
        prediction: ParsedPrediction::Relations(parsed),
        dropped: dropped.len(),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub task: TaskKind,
    pub dataset: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    pub unparsed_count: usize,
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub dropped_entries: usize,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_class: BTreeMap<String, ClassMetrics>,
}

/// True/false positive tallies. Shards merge by addition.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tally {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Tally {
    pub fn merge(self, other: Tally) -> Tally {
        Tally {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            fn_: self.fn_ + other.fn_,
        }
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        harmonic(self.precision(), self.recall())
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn harmonic(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// One-vs-rest per-class F1 with a support-weighted average.
///
/// Unparsed predictions (and labels outside the vocabulary) count against
/// recall of the gold class and against no class's precision.
pub fn score_classification(
    gold: &[String],
    pred: &[ParsedPrediction],
    vocabulary: &[String],
) -> Result<MetricReport, ScoreError> {
    if gold.len() != pred.len() {
        return Err(ScoreError::LengthMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    let mut tallies: BTreeMap<&str, Tally> = vocabulary.iter().map(|v| (v.as_str(), Tally::default())).collect();
    let mut support: BTreeMap<&str, usize> = BTreeMap::new();
    let mut unparsed = 0;
    for (g, p) in gold.iter().zip(pred) {
        *support.entry(g.as_str()).or_default() += 1;
        let predicted = match p {
            ParsedPrediction::Label(l) if tallies.contains_key(l.as_str()) => Some(l.as_str()),
            ParsedPrediction::Unparsed(_) => {
                unparsed += 1;
                None
            }
            _ => None,
        };
        match predicted {
            Some(l) if l == g => tallies.get_mut(l).unwrap().tp += 1,
            Some(l) => {
                tallies.get_mut(l).unwrap().fp += 1;
                tallies.entry(g.as_str()).or_default().fn_ += 1;
            }
            None => tallies.entry(g.as_str()).or_default().fn_ += 1,
        }
    }

    let total: usize = gold.len();
    let mut per_class = BTreeMap::new();
    let (mut wp, mut wr, mut wf) = (0.0, 0.0, 0.0);
    let mut macro_sum = 0.0;
    let mut macro_n = 0usize;
    let mut micro = Tally::default();
    for (label, t) in &tallies {
        let s = support.get(label).copied().unwrap_or(0);
        let m = ClassMetrics {
            precision: t.precision(),
            recall: t.recall(),
            f1: t.f1(),
            support: s,
        };
        if s > 0 || t.fp > 0 {
            macro_sum += m.f1;
            macro_n += 1;
        }
        if total > 0 {
            let w = s as f64 / total as f64;
            wp += w * m.precision;
            wr += w * m.recall;
            wf += w * m.f1;
        }
        micro = micro.merge(Tally { tp: t.tp, fp: t.fp, fn_: 0 });
        per_class.insert(label.to_string(), m);
    }
    micro.fn_ = total - micro.tp;

    Ok(MetricReport {
        task: TaskKind::Sa,
        dataset: String::new(),
        precision: wp,
        recall: wr,
        f1: wf,
        support: total,
        unparsed_count: unparsed,
        macro_f1: if macro_n == 0 { 0.0 } else { macro_sum / macro_n as f64 },
        micro_f1: micro.f1(),
        dropped_entries: 0,
        per_class,
    })
}

fn micro_report(task: TaskKind, tally: Tally, support: usize, unparsed: usize) -> MetricReport {
    let f1 = tally.f1();
    MetricReport {
        task,
        dataset: String::new(),
        precision: tally.precision(),
        recall: tally.recall(),
        f1,
        support,
        unparsed_count: unparsed,
        macro_f1: f1,
        micro_f1: f1,
        dropped_entries: 0,
        per_class: BTreeMap::new(),
    }
}

/// Per-sample entity tally under exact (normalized surface, case-folded type) match.
pub fn entity_tally(gold: &[EntityMention], pred: &BTreeSet<EntityMention>) -> Tally {
    let gold: BTreeSet<EntityMention> = gold.iter().map(EntityMention::normalized).collect();
    let pred: BTreeSet<EntityMention> = pred.iter().map(EntityMention::normalized).collect();
    let tp = gold.intersection(&pred).count();
    Tally {
        tp,
        fp: pred.len() - tp,
        fn_: gold.len() - tp,
    }
}

/// Micro-averaged entity-level F1 over the corpus.
pub fn score_ner(gold: &[Vec<EntityMention>], pred: &[ParsedPrediction]) -> Result<MetricReport, ScoreError> {
    if gold.len() != pred.len() {
        return Err(ScoreError::LengthMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    let empty = BTreeSet::new();
    let mut tally = Tally::default();
    let mut unparsed = 0;
    let mut support = 0;
    for (g, p) in gold.iter().zip(pred) {
        let predicted = match p {
            ParsedPrediction::Entities(set) => set,
            ParsedPrediction::Unparsed(_) => {
                unparsed += 1;
                &empty
            }
            _ => &empty,
        };
        let t = entity_tally(g, predicted);
        support += t.tp + t.fn_;
        tally = tally.merge(t);
    }
    Ok(micro_report(TaskKind::Ner, tally, support, unparsed))
}

/// Per-sample relation-label multiset tally; arguments are ignored.
pub fn relation_tally(gold: &[RelationTriple], pred: &[RelationTriple]) -> Tally {
    let mut remaining: BTreeMap<String, usize> = BTreeMap::new();
    for g in gold {
        *remaining.entry(normalize_label(&g.relation)).or_default() += 1;
    }
    let mut tp = 0;
    for p in pred {
        if let Some(n) = remaining.get_mut(&normalize_label(&p.relation)).filter(|n| **n > 0) {
            *n -= 1;
            tp += 1;
        }
    }
    Tally {
        tp,
        fp: pred.len() - tp,
        fn_: gold.len() - tp,
    }
}

/// Micro-averaged F1 over relation labels.
pub fn score_re(gold: &[Vec<RelationTriple>], pred: &[ParsedPrediction]) -> Result<MetricReport, ScoreError> {
    if gold.len() != pred.len() {
        return Err(ScoreError::LengthMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    let mut tally = Tally::default();
    let mut unparsed = 0;
    let mut support = 0;
    for (g, p) in gold.iter().zip(pred) {
        let predicted: &[RelationTriple] = match p {
            ParsedPrediction::Relations(r) => r,
            ParsedPrediction::Unparsed(_) => {
                unparsed += 1;
                &[]
            }
            _ => &[],
        };
        support += g.len();
        tally = tally.merge(relation_tally(g, predicted));
    }
    Ok(micro_report(TaskKind::Re, tally, support, unparsed))
}

/// Drops records whose answer is `neutral` (case-insensitive), keeping order.
pub fn filter_neutral(records: &[InstructionRecord]) -> Vec<InstructionRecord> {
    records
        .iter()
        .filter(|r| normalize_label(&r.answer) != "neutral")
        .cloned()
        .collect()
}

/// One row of a completions file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub id: String,
    pub completion: String,
}

pub fn read_completions(path: &Path) -> Result<Vec<Completion>, IoError> {
    io::read_jsonl(path)
}

/// Joins completions 1:1 with eval records by id.
pub fn join_completions<'a>(
    records: &[InstructionRecord],
    completions: &'a [Completion],
) -> Result<BTreeMap<String, &'a str>, ScoreError> {
    let wanted: BTreeSet<&str> = records.iter().map(|r| r.id.as_str()).collect();
    let mut by_id = BTreeMap::new();
    for c in completions {
        if !wanted.contains(c.id.as_str()) || by_id.insert(c.id.clone(), c.completion.as_str()).is_some() {
            return Err(ScoreError::UnexpectedCompletion(c.id.clone()));
        }
    }
    if let Some(missing) = records.iter().find(|r| !by_id.contains_key(&r.id)) {
        return Err(ScoreError::MissingCompletion(missing.id.clone()));
    }
    Ok(by_id)
}

/// Scores an eval record set, one report per (task, dataset), in record order
/// of first appearance.
///
/// Classification completions are parsed against the record's options when
/// present, else against the dataset vocabulary from `labels`, else against
/// the distinct gold answers of that dataset.
pub fn score_records(
    records: &[InstructionRecord],
    completions: &[Completion],
    labels: &LabelSpace,
) -> Result<Vec<MetricReport>, ScoreError> {
    let joined = join_completions(records, completions)?;
    let mut groups: Vec<((TaskKind, String), Vec<&InstructionRecord>)> = Vec::new();
    for r in records {
        let key = (r.task, r.dataset.clone());
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r),
            None => groups.push((key, vec![r])),
        }
    }

    groups
        .into_iter()
        .map(|((task, dataset), recs)| {
            let mut report = match task {
                TaskKind::Ner => {
                    let mut dropped = 0;
                    let mut gold = Vec::new();
                    let mut pred = Vec::new();
                    for r in &recs {
                        let (g, bad) = gold::parse_entity_entries(&r.answer);
                        if !bad.is_empty() {
                            return Err(ScoreError::BadGold(r.id.clone()));
                        }
                        gold.push(g);
                        let p = parse_entities(joined[&r.id]);
                        dropped += p.dropped;
                        pred.push(p.prediction);
                    }
                    let mut rep = score_ner(&gold, &pred)?;
                    rep.dropped_entries = dropped;
                    rep
                }
                TaskKind::Re => {
                    let mut dropped = 0;
                    let mut gold = Vec::new();
                    let mut pred = Vec::new();
                    for r in &recs {
                        let (g, bad) = gold::parse_relation_entries(&r.answer);
                        if !bad.is_empty() {
                            return Err(ScoreError::BadGold(r.id.clone()));
                        }
                        gold.push(g);
                        let p = parse_relations(joined[&r.id]);
                        dropped += p.dropped;
                        pred.push(p.prediction);
                    }
                    let mut rep = score_re(&gold, &pred)?;
                    rep.dropped_entries = dropped;
                    rep
                }
                _ => {
                    let vocabulary = classification_vocabulary(&recs, labels.get(&dataset));
                    let gold: Vec<String> = recs.iter().map(|r| r.answer.clone()).collect();
                    let pred: Vec<ParsedPrediction> = recs
                        .iter()
                        .map(|r| {
                            let options = r.options.as_deref().unwrap_or(&vocabulary);
                            parse_classification(joined[&r.id], options)
                        })
                        .collect();
                    score_classification(&gold, &pred, &vocabulary)?
                }
            };
            report.task = task;
            report.dataset = dataset;
            Ok(report)
        })
        .collect()
}

fn classification_vocabulary(records: &[&InstructionRecord], declared: Option<&Vec<String>>) -> Vec<String> {
    let mut vocab: Vec<String> = declared.cloned().unwrap_or_default();
    let mut push = |label: &String| {
        if !vocab.contains(label) {
            vocab.push(label.clone());
        }
    };
    for r in records {
        for o in r.options.iter().flatten() {
            push(o);
        }
    }
    for r in records {
        push(&r.answer);
    }
    vocab
}

pub fn write_metrics(path: &Path, reports: &[MetricReport]) -> Result<(), IoError> {
    io::write_json(path, &reports)
}

/// Reads a metrics file holding either one report or an array of reports.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricReport>, IoError> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        Many(Vec<MetricReport>),
        One(MetricReport),
    }
    Ok(match io::read_json::<OneOrMany>(path)? {
        OneOrMany::Many(v) => v,
        OneOrMany::One(r) => vec![r],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::Split;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    fn label(l: &str) -> ParsedPrediction {
        ParsedPrediction::Label(l.into())
    }

    #[test]
    fn classification_parse_rules() {
        let opts = s(&["negative", "neutral", "positive"]);
        assert_eq!(parse_classification("The sentiment is positive.", &opts), label("positive"));
        assert_eq!(parse_classification("no idea", &s(&["Yes", "No"])), label("No"));
        assert!(matches!(parse_classification("gibberish", &opts), ParsedPrediction::Unparsed(_)));
        assert_eq!(parse_classification("POSITIVE then negative", &opts), label("positive"));
        // same start position: longer option wins
        assert_eq!(parse_classification("product_owner", &s(&["product", "product_owner"])), label("product_owner"));
        assert_eq!(parse_classification("product_owner", &s(&["product_owner", "product"])), label("product_owner"));
    }

    #[test]
    fn entity_parse_rules() {
        let p = parse_entities("Apple Inc, ORG; Tim Cook, PER");
        let want: BTreeSet<_> = [EntityMention::new("Apple Inc", "org"), EntityMention::new("Tim Cook", "per")].into();
        assert_eq!(p.prediction, ParsedPrediction::Entities(want));
        assert_eq!(p.dropped, 0);
        assert_eq!(parse_entities("none").prediction, ParsedPrediction::Entities(BTreeSet::new()));
        let p = parse_entities("Apple Inc ORG");
        assert_eq!(p.prediction, ParsedPrediction::Entities(BTreeSet::new()));
        assert_eq!(p.dropped, 1);
    }

    #[test]
    fn relation_parse_rules() {
        let p = parse_relations("subsidiary: AlphaCo, BetaCo");
        assert_eq!(
            p.prediction,
            ParsedPrediction::Relations(vec![RelationTriple::new("subsidiary", "AlphaCo", "BetaCo")])
        );
        assert_eq!(parse_relations("").prediction, ParsedPrediction::Relations(vec![]));
        let p = parse_relations("subsidiary AlphaCo BetaCo");
        assert_eq!(p.prediction, ParsedPrediction::Relations(vec![]));
        assert_eq!(p.dropped, 1);
    }

    #[test]
    fn classification_examples() {
        let vocab = s(&["neg", "pos"]);
        let r = score_classification(&s(&["pos", "neg"]), &[label("pos"), label("neg")], &vocab).unwrap();
        assert_eq!(r.f1, 1.0);

        let r = score_classification(
            &s(&["pos", "pos", "neg", "neg"]),
            &[label("pos"), label("neg"), label("neg"), label("neg")],
            &vocab,
        )
        .unwrap();
        assert!((r.per_class["pos"].f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.per_class["neg"].f1 - 0.8).abs() < 1e-12);
        assert!((r.f1 - (0.5 * 2.0 / 3.0 + 0.5 * 0.8)).abs() < 1e-12);

        let r = score_classification(&s(&["pos"]), &[ParsedPrediction::Unparsed("??".into())], &vocab).unwrap();
        assert_eq!(r.f1, 0.0);
        assert_eq!(r.unparsed_count, 1);
        assert_eq!(r.per_class["pos"].recall, 0.0);

        assert!(matches!(
            score_classification(&s(&["pos"]), &[], &vocab),
            Err(ScoreError::LengthMismatch { gold: 1, pred: 0 })
        ));
    }

    #[test]
    fn ner_examples() {
        let gold = vec![vec![EntityMention::new("Apple Inc", "ORG"), EntityMention::new("Tim Cook", "PER")]];
        let pred = vec![ParsedPrediction::Entities([EntityMention::new("Apple Inc", "ORG")].into())];
        let r = score_ner(&gold, &pred).unwrap();
        assert_eq!((r.precision, r.recall), (1.0, 0.5));
        assert!((r.f1 - 2.0 / 3.0).abs() < 1e-12);

        let empty = vec![ParsedPrediction::Entities(BTreeSet::new())];
        let r = score_ner(&gold, &empty).unwrap();
        assert_eq!((r.recall, r.f1), (0.0, 0.0));

        // empty vs empty contributes nothing
        let r = score_ner(&[vec![]], &empty).unwrap();
        assert_eq!((r.precision, r.recall, r.f1, r.support), (0.0, 0.0, 0.0, 0));
    }

    #[test]
    fn re_examples() {
        let gold = vec![vec![
            RelationTriple::new("subsidiary", "A", "B"),
            RelationTriple::new("product_or_material_produced", "A", "C"),
        ]];
        let pred = vec![ParsedPrediction::Relations(vec![RelationTriple::new("subsidiary", "X", "Y")])];
        let r = score_re(&gold, &pred).unwrap();
        assert_eq!((r.precision, r.recall), (1.0, 0.5));
        assert!((r.f1 - 2.0 / 3.0).abs() < 1e-12);

        // repeated guesses earn one credit per gold occurrence
        let pred = vec![ParsedPrediction::Relations(vec![
            RelationTriple::new("subsidiary", "A", "B"),
            RelationTriple::new("subsidiary", "A", "B"),
        ])];
        assert_eq!(score_re(&gold, &pred).unwrap().precision, 0.5);
    }

    fn rec(id: &str, answer: &str) -> InstructionRecord {
        InstructionRecord {
            id: id.into(),
            task: TaskKind::Sa,
            dataset: "FPB".into(),
            split: Split::Test,
            instruction: "i".into(),
            options: None,
            input: "x".into(),
            answer: answer.into(),
            source_sample_id: id.into(),
        }
    }

    #[test]
    fn neutral_filter() {
        let rs = vec![rec("a", "positive"), rec("b", "Neutral"), rec("c", "negative")];
        let kept: Vec<_> = filter_neutral(&rs).into_iter().map(|r| r.id).collect();
        assert_eq!(kept, vec!["a", "c"]);
        let none = vec![rec("a", "positive")];
        assert_eq!(filter_neutral(&none), none);
        assert!(filter_neutral(&[rec("a", "neutral"), rec("b", "neutral")]).is_empty());
    }

    #[test]
    fn join_requires_exact_id_coverage() {
        let rs = vec![rec("a", "positive"), rec("b", "negative")];
        let c = |id: &str| Completion { id: id.into(), completion: "positive".into() };
        assert!(join_completions(&rs, &[c("a"), c("b")]).is_ok());
        assert!(matches!(join_completions(&rs, &[c("a")]), Err(ScoreError::MissingCompletion(id)) if id == "b"));
        assert!(matches!(join_completions(&rs, &[c("a"), c("b"), c("z")]), Err(ScoreError::UnexpectedCompletion(_))));
        assert!(matches!(join_completions(&rs, &[c("a"), c("a"), c("b")]), Err(ScoreError::UnexpectedCompletion(_))));
    }

    #[test]
    fn score_records_groups_by_dataset() {
        let mut rs = vec![rec("a", "positive"), rec("b", "negative")];
        let mut other = rec("c", "positive");
        other.dataset = "TFNS".into();
        rs.push(other);
        let comps: Vec<_> = ["a", "b", "c"]
            .iter()
            .map(|id| Completion { id: id.to_string(), completion: "positive".into() })
            .collect();
        let labels = BTreeMap::from([("FPB".to_string(), s(&["negative", "neutral", "positive"]))]);
        let reps = score_records(&rs, &comps, &labels).unwrap();
        assert_eq!(reps.len(), 2);
        assert_eq!(reps[0].dataset, "FPB");
        assert_eq!(reps[0].per_class["negative"].recall, 0.0);
        assert_eq!(reps[0].per_class["positive"].recall, 1.0);
        assert_eq!(reps[1].f1, 1.0);
    }
}
