//! Retrieves grounding documents for each seed and builds the
//! demonstration pool, using the bundled toy corpus.
//!
//! cargo run --example content_sourcing

use std::path::Path;

use synthrr::icl::{build_retricl, content_source, Retriever, SourcingParams};
use synthrr::retrieval::{build_sparse_index, overlap_histogram, Bm25Params};
use synthrr::{Corpus, SeedSet, TaskTemplates, TokenizerSpec};

fn main() -> synthrr::Result<()> {
    let toy = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/toy");
    let labels = TaskTemplates::builtin("ag_news")?.verbalizer.label_set();
    let corpus = Corpus::from_jsonl(toy.join("corpus.jsonl"))?;
    let seeds = SeedSet::from_jsonl(toy.join("seeds.jsonl"), &labels)?;
    let index = build_sparse_index(&corpus, Bm25Params::default(), &TokenizerSpec::unicode_word())?;

    let params = SourcingParams {
        k_retrieve: 50,
        k_expand: 3,
        band: None,
        rng_seed: 7,
    };
    let sourcing = content_source(&seeds, &corpus, &Retriever::Sparse(&index), &params)?;
    for t in sourcing.triplets.iter().take(3) {
        println!("{} [{}]", t.seed_id, t.label);
        for d in &t.docs {
            println!("  {} {:.3} {}", d.doc_id, d.score, d.text.chars().take(60).collect::<String>());
        }
    }

    let lists: Vec<Vec<&str>> = sourcing
        .triplets
        .iter()
        .map(|t| t.docs.iter().map(|d| d.doc_id.as_str()).collect())
        .collect();
    println!("documents shared by n seeds: {:?}", overlap_histogram(&lists));

    let pool = build_retricl(&seeds, &sourcing.rankings, &corpus, None, 2)?;
    println!("demonstration pool: {} pairs from {} seeds", pool.len(), seeds.len());
    Ok(())
}
