//! Entity-level diversity and gold-similarity measures over per-type
//! surface-form distributions. Entropy and KL are in bits.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl::read_jsonl;

/// OntoNotes-style NER tags minus the two numeric ones (CARDINAL, ORDINAL).
pub const DEFAULT_TAG_SET: [&str; 16] = [
    "PERSON",
    "NORP",
    "FAC",
    "ORG",
    "GPE",
    "LOC",
    "PRODUCT",
    "EVENT",
    "WORK_OF_ART",
    "LAW",
    "LANGUAGE",
    "DATE",
    "TIME",
    "PERCENT",
    "MONEY",
    "QUANTITY",
];

pub const DEFAULT_KL_ALPHA: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityMention {
    pub surface: String,
    #[serde(rename = "type")]
    pub entity_type: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub example_id: String,
    pub entities: Vec<EntityMention>,
}

/// Reads an `entities.jsonl` sidecar, rejecting types outside `tag_set`.
pub fn read_entities(path: impl AsRef<Path>, tag_set: &[String]) -> Result<Vec<EntityRecord>> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for (line, rec) in read_jsonl::<EntityRecord>(path)? {
        if let Some(bad) = rec.entities.iter().find(|e| !tag_set.contains(&e.entity_type)) {
            return Err(Error::Parse {
                path: path.to_owned(),
                line,
                message: format!("entity type `{}` is not in the tag set", bad.entity_type),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

/// Case-folded, whitespace-collapsed surface form.
pub fn normalize_surface(surface: &str) -> String {
    surface.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Counts of normalized surface forms for one entity type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityDistribution {
    #[serde(rename = "type")]
    pub entity_type: String,
    pub counts: BTreeMap<String, u64>,
    pub total: u64,
}

impl EntityDistribution {
    pub fn from_counts<S: AsRef<str>>(entity_type: &str, counts: impl IntoIterator<Item = (S, u64)>) -> Self {
        let mut map = BTreeMap::new();
        for (s, c) in counts {
            if c > 0 {
                *map.entry(normalize_surface(s.as_ref())).or_insert(0) += c;
            }
        }
        let total = map.values().sum();
        Self {
            entity_type: entity_type.to_owned(),
            counts: map,
            total,
        }
    }

    /// Distribution of `entity_type` mentions across `records`; empty if the
    /// type never occurs.
    pub fn from_records(records: &[EntityRecord], entity_type: &str) -> Self {
        Self::from_counts(
            entity_type,
            records
                .iter()
                .flat_map(|r| &r.entities)
                .filter(|e| e.entity_type == entity_type)
                .map(|e| (e.surface.as_str(), 1)),
        )
    }

    /// All mentions regardless of type, keyed `TYPE:surface`.
    pub fn pooled(records: &[EntityRecord]) -> Self {
        Self::from_counts(
            "*",
            records
                .iter()
                .flat_map(|r| &r.entities)
                .map(|e| (format!("{}:{}", e.entity_type, e.surface), 1)),
        )
    }
}

/// Types with at least one mention, in sorted order.
pub fn present_types(records: &[EntityRecord]) -> BTreeSet<String> {
    records
        .iter()
        .flat_map(|r| &r.entities)
        .map(|e| e.entity_type.clone())
        .collect()
}

/// Shannon entropy (bits) of a distribution's surface forms. Surfaces are
/// grouped by count, `H = Σ_v (k_v·v/T)·log2(T/v)`, so a uniform distribution
/// over m surfaces gives `log2 m` exactly.
pub fn distribution_entropy(dist: &EntityDistribution) -> Result<f64> {
    if dist.total == 0 {
        return Err(Error::AbsentEntityType(dist.entity_type.clone()));
    }
    let mut groups: BTreeMap<u64, u64> = BTreeMap::new();
    for &c in dist.counts.values() {
        *groups.entry(c).or_default() += 1;
    }
    let t = dist.total as f64;
    let h: f64 = groups
        .into_iter()
        .map(|(v, k)| (k * v) as f64 / t * (t / v as f64).log2())
        .sum();
    Ok(h.max(0.0))
}

pub fn entity_entropy(records: &[EntityRecord], entity_type: &str) -> Result<f64> {
    distribution_entropy(&EntityDistribution::from_records(records, entity_type))
}

/// Fraction of gold surfaces that also occur in `synth`; the weighted variant
/// counts each gold surface by its gold frequency.
pub fn entity_recall(gold: &EntityDistribution, synth: &EntityDistribution, weighted: bool) -> f64 {
    if gold.total == 0 {
        return 0.0;
    }
    let shared = gold.counts.iter().filter(|(s, _)| synth.counts.contains_key(*s));
    if weighted {
        shared.map(|(_, &c)| c).sum::<u64>() as f64 / gold.total as f64
    } else {
        shared.count() as f64 / gold.counts.len() as f64
    }
}

/// KL(P ‖ Q) in bits over the union support, after adding `alpha` to every
/// count on both sides.
pub fn entity_kl(p: &EntityDistribution, q: &EntityDistribution, alpha: f64) -> f64 {
    assert!(alpha > 0.0, "smoothing alpha must be positive");
    let support: BTreeSet<&String> = p.counts.keys().chain(q.counts.keys()).collect();
    let k = support.len() as f64;
    let pz = p.total as f64 + alpha * k;
    let qz = q.total as f64 + alpha * k;
    let kl: f64 = support
        .into_iter()
        .map(|s| {
            let ps = (p.counts.get(s).copied().unwrap_or(0) as f64 + alpha) / pz;
            let qs = (q.counts.get(s).copied().unwrap_or(0) as f64 + alpha) / qz;
            ps * (ps / qs).log2()
        })
        .sum();
    kl.max(0.0)
}
