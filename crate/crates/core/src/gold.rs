//! Canonical text form of NER and RE gold structures.
//!
//! Entities render as `surface, type` and relations as `relation: subject, object`,
//! entries joined by `"; "`. An empty structure renders as `none`.

use serde::{Deserialize, Serialize};

pub const ENTRY_SEPARATOR: &str = "; ";
pub const EMPTY_SENTINEL: &str = "none";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntityMention {
    pub surface: String,
    pub entity_type: String,
}

impl EntityMention {
    pub fn new(surface: impl Into<String>, entity_type: impl Into<String>) -> Self {
        Self {
            surface: surface.into(),
            entity_type: entity_type.into(),
        }
    }

    /// Scoring identity: whitespace-normalized surface, case-folded type.
    pub fn normalized(&self) -> EntityMention {
        EntityMention {
            surface: normalize_ws(&self.surface),
            entity_type: normalize_ws(&self.entity_type).to_lowercase(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RelationTriple {
    pub relation: String,
    pub subject: String,
    pub object: String,
}

impl RelationTriple {
    pub fn new(
        relation: impl Into<String>,
        subject: impl Into<String>,
        object: impl Into<String>,
    ) -> Self {
        Self {
            relation: relation.into(),
            subject: subject.into(),
            object: object.into(),
        }
    }

    pub fn normalized(&self) -> RelationTriple {
        RelationTriple {
            relation: normalize_label(&self.relation),
            subject: normalize_ws(&self.subject),
            object: normalize_ws(&self.object),
        }
    }
}

/// Trims and collapses internal whitespace runs to one space.
pub fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Whitespace-normalized and case-folded.
pub fn normalize_label(s: &str) -> String {
    normalize_ws(s).to_lowercase()
}

pub fn render_entities(entities: &[EntityMention]) -> String {
    if entities.is_empty() {
        return EMPTY_SENTINEL.to_string();
    }
    entities
        .iter()
        .map(|e| format!("{}, {}", e.surface, e.entity_type))
        .collect::<Vec<_>>()
        .join(ENTRY_SEPARATOR)
}

pub fn render_relations(relations: &[RelationTriple]) -> String {
    if relations.is_empty() {
        return EMPTY_SENTINEL.to_string();
    }
    relations
        .iter()
        .map(|r| format!("{}: {}, {}", r.relation, r.subject, r.object))
        .collect::<Vec<_>>()
        .join(ENTRY_SEPARATOR)
}

/// Splits a completion into entries. Empty input and the sentinel yield no entries.
fn entries(text: &str) -> Vec<&str> {
    let trimmed = text.trim();
    if trimmed.is_empty() || trimmed.eq_ignore_ascii_case(EMPTY_SENTINEL) {
        return Vec::new();
    }
    trimmed
        .split(ENTRY_SEPARATOR)
        .filter(|e| !e.trim().is_empty())
        .collect()
}

/// Parses entity entries, splitting each on its last `", "`.
/// Returns the parsed mentions (unnormalized apart from trimming) and the malformed entries.
pub fn parse_entity_entries(text: &str) -> (Vec<EntityMention>, Vec<String>) {
    let mut parsed = Vec::new();
    let mut dropped = Vec::new();
    for entry in entries(text) {
        match entry.rsplit_once(", ") {
            Some((surface, ty)) if !normalize_ws(surface).is_empty() && !normalize_ws(ty).is_empty() => {
                parsed.push(EntityMention::new(normalize_ws(surface), normalize_ws(ty)))
            }
            _ => dropped.push(entry.to_string()),
        }
    }
    (parsed, dropped)
}

/// Parses relation entries of the form `relation: subject, object`.
/// The relation ends at the first `": "`; subject and object split on the first `", "`.
pub fn parse_relation_entries(text: &str) -> (Vec<RelationTriple>, Vec<String>) {
    let mut parsed = Vec::new();
    let mut dropped = Vec::new();
    for entry in entries(text) {
        let triple = entry.split_once(": ").and_then(|(rel, args)| {
            let (subj, obj) = args.split_once(", ")?;
            let t = RelationTriple::new(normalize_ws(rel), normalize_ws(subj), normalize_ws(obj));
            (!t.relation.is_empty() && !t.subject.is_empty() && !t.object.is_empty()).then_some(t)
        });
        match triple {
            Some(t) => parsed.push(t),
            None => dropped.push(entry.to_string()),
        }
    }
    (parsed, dropped)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entity_surface_may_contain_comma() {
        let (p, d) = parse_entity_entries("Apple, Inc., ORG");
        assert!(d.is_empty());
        assert_eq!(p, vec![EntityMention::new("Apple, Inc.", "ORG")]);
    }

    #[test]
    fn normalization_keeps_surface_case() {
        let e = EntityMention::new("  IT   Corp ", "Org").normalized();
        assert_eq!(e.surface, "IT Corp");
        assert_eq!(e.entity_type, "org");
    }

    #[test]
    fn sentinel_and_blank_parse_empty() {
        assert_eq!(parse_entity_entries("none"), (vec![], vec![]));
        assert_eq!(parse_relation_entries("  "), (vec![], vec![]));
        assert_eq!(parse_relation_entries("None"), (vec![], vec![]));
    }
}
