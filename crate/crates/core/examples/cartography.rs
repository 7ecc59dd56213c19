//! Builds a data map from per-epoch training dynamics and keeps the most
//! ambiguous examples.
//!
//! cargo run --example cartography

use std::collections::HashMap;

use synthrr::cartography::{ambiguity_filter, compute_data_map, example_id, DynamicsRecord};
use synthrr::SyntheticExample;

fn main() -> synthrr::Result<()> {
    let dataset: Vec<SyntheticExample> = (0..6)
        .map(|i| SyntheticExample {
            text: format!("example {i}"),
            label: if i % 2 == 0 { "positive" } else { "negative" }.into(),
            seed_id: "s".into(),
            doc_id: None,
            prompt_hash: String::new(),
            draw_index: i,
        })
        .collect();
    // Gold-label probability per epoch: some are learned at once, some flip.
    let trajectories = [
        [0.95, 0.97, 0.99],
        [0.20, 0.60, 0.90],
        [0.50, 0.40, 0.60],
        [0.05, 0.10, 0.08],
        [0.90, 0.30, 0.80],
        [0.85, 0.90, 0.95],
    ];
    let mut records = Vec::new();
    for (e, probs) in dataset.iter().zip(&trajectories) {
        for (epoch, &p) in probs.iter().enumerate() {
            records.push(DynamicsRecord {
                example_id: example_id(e),
                epoch: epoch as u32,
                gold_prob: p,
                predicted_label: if p >= 0.5 { e.label.clone() } else { "other".into() },
            });
        }
    }
    let gold: HashMap<String, String> = dataset.iter().map(|e| (example_id(e), e.label.clone())).collect();
    let map = compute_data_map(&records, &gold)?;
    println!("id  confidence  variability  correctness");
    for p in &map {
        println!("{:<3} {:>10.3}  {:>11.3}  {:>11.3}", p.example_id, p.confidence, p.variability, p.correctness);
    }
    let kept = ambiguity_filter(&dataset, &map, 0.5)?;
    println!("kept: {:?}", kept.iter().map(example_id).collect::<Vec<_>>());
    Ok(())
}
