//! Intrinsic dataset-quality metrics and the combined report.

pub mod bleu;
pub mod entity;
pub mod kmeans;
pub mod label;
pub mod mauve;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use bleu::{self_bleu, SelfBleuParams};
pub use entity::{
    distribution_entropy, entity_entropy, entity_kl, entity_recall, normalize_surface, read_entities,
    EntityDistribution, EntityMention, EntityRecord, DEFAULT_KL_ALPHA, DEFAULT_TAG_SET,
};
pub use label::{label_preservation, Classifier, HttpClassifier};
pub use mauve::{mauve_score, MauveParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntityRecall {
    pub unweighted: f64,
    pub weighted: f64,
}

/// Which way entity KL is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlDirection {
    /// KL(gold ‖ synth): penalizes synthetic data missing gold mass.
    #[default]
    GoldToSynth,
    SynthToGold,
}

/// Every metric computed for one dataset. Metrics whose inputs were not
/// supplied are left empty / `None`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    pub self_bleu: BTreeMap<usize, f64>,
    pub entity_entropy: BTreeMap<String, f64>,
    pub entity_recall: Option<EntityRecall>,
    pub entity_kl: BTreeMap<String, f64>,
    pub mauve: Option<f64>,
    pub label_preservation: Option<f64>,
}

/// Fills the entity fields of `report`: entropy for every type present in
/// `synth`, and — given gold records — pooled recall and per-type KL over
/// types present on both sides.
pub fn entity_metrics(
    report: &mut MetricReport,
    synth: &[EntityRecord],
    gold: Option<&[EntityRecord]>,
    alpha: f64,
    direction: KlDirection,
) {
    for ty in entity::present_types(synth) {
        let dist = EntityDistribution::from_records(synth, &ty);
        let h = distribution_entropy(&dist).expect("type is present");
        report.entity_entropy.insert(ty, h);
    }
    let Some(gold) = gold else { return };
    let pooled_gold = EntityDistribution::pooled(gold);
    if pooled_gold.total > 0 {
        let pooled_synth = EntityDistribution::pooled(synth);
        report.entity_recall = Some(EntityRecall {
            unweighted: entity_recall(&pooled_gold, &pooled_synth, false),
            weighted: entity_recall(&pooled_gold, &pooled_synth, true),
        });
    }
    let synth_types = entity::present_types(synth);
    for ty in entity::present_types(gold).intersection(&synth_types) {
        let g = EntityDistribution::from_records(gold, ty);
        let s = EntityDistribution::from_records(synth, ty);
        let kl = match direction {
            KlDirection::GoldToSynth => entity_kl(&g, &s, alpha),
            KlDirection::SynthToGold => entity_kl(&s, &g, alpha),
        };
        report.entity_kl.insert(ty.clone(), kl);
    }
}
