//! Classification reformulations of the generation tasks: one NER_CLS sample
//! per gold entity, one RE_CLS sample per gold relation.

use super::{CorpusError, Gold, Sample, META_SOURCE_ID};
use crate::task::TaskKind;

pub fn derive_ner_cls(ner_samples: &[Sample]) -> Result<Vec<Sample>, CorpusError> {
    derive_ner_cls_as(ner_samples, "NER_CLS")
}

pub fn derive_re_cls(re_samples: &[Sample]) -> Result<Vec<Sample>, CorpusError> {
    derive_re_cls_as(re_samples, "RE_CLS")
}

fn check_task(sample: &Sample, expected: TaskKind) -> Result<(), CorpusError> {
    if sample.task != expected {
        return Err(CorpusError::TaskMismatch {
            id: sample.id.clone(),
            expected,
            found: sample.task,
        });
    }
    Ok(())
}

/// Input is the source sentence followed by `\nEntity: <surface>`.
pub fn derive_ner_cls_as(ner_samples: &[Sample], dataset: &str) -> Result<Vec<Sample>, CorpusError> {
    let mut out = Vec::new();
    for sample in ner_samples {
        check_task(sample, TaskKind::Ner)?;
        let Gold::Entities(entities) = &sample.gold else {
            return Err(CorpusError::TaskMismatch {
                id: sample.id.clone(),
                expected: TaskKind::Ner,
                found: sample.task,
            });
        };
        for (j, e) in entities.iter().enumerate() {
            let mut meta = sample.meta.clone();
            meta.insert(META_SOURCE_ID.into(), sample.id.clone());
            out.push(Sample {
                id: format!("{}-e{j}", sample.id),
                dataset: dataset.to_string(),
                task: TaskKind::NerCls,
                input_text: format!("{}\nEntity: {}", sample.input_text, e.surface),
                gold: Gold::Label(e.entity_type.clone()),
                meta,
            });
        }
    }
    Ok(out)
}

/// Input is the source sentence followed by `\nSubject: <s> Object: <o>`.
pub fn derive_re_cls_as(re_samples: &[Sample], dataset: &str) -> Result<Vec<Sample>, CorpusError> {
    let mut out = Vec::new();
    for sample in re_samples {
        check_task(sample, TaskKind::Re)?;
        let Gold::Relations(relations) = &sample.gold else {
            return Err(CorpusError::TaskMismatch {
                id: sample.id.clone(),
                expected: TaskKind::Re,
                found: sample.task,
            });
        };
        for (j, r) in relations.iter().enumerate() {
            let mut meta = sample.meta.clone();
            meta.insert(META_SOURCE_ID.into(), sample.id.clone());
            out.push(Sample {
                id: format!("{}-r{j}", sample.id),
                dataset: dataset.to_string(),
                task: TaskKind::ReCls,
                input_text: format!(
                    "{}\nSubject: {} Object: {}",
                    sample.input_text, r.subject, r.object
                ),
                gold: Gold::Label(r.relation.clone()),
                meta,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gold::{EntityMention, RelationTriple};
    use std::collections::{BTreeMap, BTreeSet};

    fn ner(id: &str, entities: Vec<EntityMention>) -> Sample {
        Sample {
            id: id.into(),
            dataset: "NER".into(),
            task: TaskKind::Ner,
            input_text: "Apple opened an office in London".into(),
            gold: Gold::Entities(entities),
            meta: BTreeMap::new(),
        }
    }

    #[test]
    fn one_sample_per_entity_in_order() {
        let s = ner(
            "NER-000000",
            vec![EntityMention::new("Apple", "ORG"), EntityMention::new("London", "LOC")],
        );
        let d = derive_ner_cls(&[s]).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d[0].gold, Gold::Label("ORG".into()));
        assert_eq!(d[1].gold, Gold::Label("LOC".into()));
        assert_eq!(d[1].input_text, "Apple opened an office in London\nEntity: London");
        assert_eq!(d[0].meta[META_SOURCE_ID], "NER-000000");
    }

    #[test]
    fn zero_entities_zero_samples() {
        assert!(derive_ner_cls(&[ner("x", vec![])]).unwrap().is_empty());
    }

    #[test]
    fn relation_triples_sharing_subject_get_distinct_ids() {
        let s = Sample {
            id: "FinRED-000003".into(),
            dataset: "FinRED".into(),
            task: TaskKind::Re,
            input_text: "AlphaCo owns BetaCo and makes widgets".into(),
            gold: Gold::Relations(vec![
                RelationTriple::new("subsidiary", "AlphaCo", "BetaCo"),
                RelationTriple::new("product_or_material_produced", "AlphaCo", "widgets"),
            ]),
            meta: BTreeMap::new(),
        };
        let d = derive_re_cls(&[s]).unwrap();
        let ids: BTreeSet<_> = d.iter().map(|x| x.id.clone()).collect();
        assert_eq!(ids.len(), 2);
        assert_eq!(d[0].gold.label(), Some("subsidiary"));
    }

    #[test]
    fn rejects_wrong_task() {
        let mut s = ner("x", vec![]);
        s.task = TaskKind::Sa;
        assert!(matches!(derive_ner_cls(&[s.clone()]), Err(CorpusError::TaskMismatch { .. })));
        assert!(matches!(derive_re_cls(&[s]), Err(CorpusError::TaskMismatch { .. })));
    }
}
