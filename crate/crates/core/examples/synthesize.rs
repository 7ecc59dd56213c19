//! Generates a small dataset with the offline mock teacher, behind a rate
//! limiter and a persistent response cache.
//!
//! cargo run --example synthesize

use std::sync::Arc;

use synthrr::icl::TripletDoc;
use synthrr::llm::{MockStyle, ResponseCache, Throttle, Throttled};
use synthrr::synthesis::{synthesize_dataset, ShotPool};
use synthrr::{IclPair, MockLlm, RetrievedTriplet, SynthesisConfig, TaskTemplates};

fn main() -> synthrr::Result<()> {
    let templates = TaskTemplates::builtin("ag_news")?;
    let triplets = vec![RetrievedTriplet {
        seed_id: "s0".into(),
        label: "Sports".into(),
        docs: (0..4)
            .map(|i| TripletDoc {
                doc_id: format!("d{i}"),
                score: 1.0,
                text: format!("Match report {i}: the visitors came back late to win on penalties."),
            })
            .collect(),
    }];
    let pool: Vec<IclPair> = (0..3)
        .map(|i| IclPair {
            doc_text: format!("Season preview {i} for the league."),
            exemplar_text: format!("Club {i} eyes the title"),
            label: "Sports".into(),
        })
        .collect();

    let throttle = Arc::new(Throttle::new(600, 4));
    let llm = Throttled::new(MockLlm::with_style(1, MockStyle::Remix), throttle);
    let cache = ResponseCache::open(std::env::temp_dir().join("synthrr-example-cache.jsonl"))?;

    let cfg = SynthesisConfig {
        n_shots: 2,
        rng_seed: 7,
        ..SynthesisConfig::default()
    };
    let out = synthesize_dataset(&triplets, ShotPool::Retricl(&pool), &templates, &llm, Some(&cache), &cfg)?;
    for e in &out.examples {
        println!("#{} [{}] {}", e.draw_index, e.label, e.text);
    }
    println!("{} examples, {} failures, {} cached responses", out.examples.len(), out.failures.len(), cache.len());
    Ok(())
}
