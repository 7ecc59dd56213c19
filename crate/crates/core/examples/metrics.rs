//! Intrinsic dataset metrics: self-BLEU, entity entropy / recall / KL and a
//! MAUVE score over toy embeddings.
//!
//! cargo run --example metrics

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use synthrr::metrics::entity::{EntityMention, EntityRecord};
use synthrr::metrics::{entity_metrics, mauve_score, self_bleu, KlDirection, MauveParams, MetricReport, SelfBleuParams};
use synthrr::Tokenizer;

fn record(id: &str, ents: &[(&str, &str)]) -> EntityRecord {
    EntityRecord {
        example_id: id.into(),
        entities: ents
            .iter()
            .map(|(s, t)| EntityMention {
                surface: s.to_string(),
                entity_type: t.to_string(),
            })
            .collect(),
    }
}

fn cloud(rng: &mut ChaCha8Rng, center: [f32; 2], n: usize) -> Vec<Vec<f32>> {
    (0..n)
        .map(|_| center.iter().map(|c| c + rng.gen_range(-0.5..0.5)).collect())
        .collect()
}

fn main() -> synthrr::Result<()> {
    let texts: Vec<String> = [
        "stocks fall as oil prices climb",
        "stocks rise as oil prices fall",
        "the home team wins the final",
        "a new phone goes on sale today",
    ]
    .map(String::from)
    .to_vec();
    let params = SelfBleuParams {
        n_max: 4,
        sample_size: None,
        rng_seed: 0,
    };
    println!("self-BLEU: {:?}", self_bleu(&texts, &Tokenizer::whitespace(), &params)?);

    let synth = vec![
        record("0", &[("Tokyo", "GPE"), ("Sony", "ORG")]),
        record("1", &[("tokyo", "GPE"), ("Paris", "GPE")]),
    ];
    let gold = vec![record("g0", &[("Paris", "GPE"), ("Berlin", "GPE"), ("Sony", "ORG")])];
    let mut report = MetricReport::default();
    entity_metrics(&mut report, &synth, Some(&gold), 0.5, KlDirection::GoldToSynth);
    println!("entity entropy (bits): {:?}", report.entity_entropy);
    println!("entity recall: {:?}", report.entity_recall);
    println!("entity KL (bits): {:?}", report.entity_kl);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let gold_emb = cloud(&mut rng, [0.0, 0.0], 100);
    let close = cloud(&mut rng, [0.2, 0.0], 100);
    let far = cloud(&mut rng, [6.0, 6.0], 100);
    let p = MauveParams::default();
    println!("MAUVE close: {:.3}", mauve_score(&gold_emb, &close, &p)?);
    println!("MAUVE far:   {:.3}", mauve_score(&gold_emb, &far, &p)?);
    Ok(())
}
