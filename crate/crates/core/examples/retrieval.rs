//! BM25 and dense cosine search over a small in-memory corpus.
//!
//! cargo run --example retrieval

use synthrr::retrieval::{build_dense_index, build_sparse_index, search_dense, search_sparse, Bm25Params, Embeddings};
use synthrr::{Corpus, Document, TokenizerSpec};

fn main() -> synthrr::Result<()> {
    let texts = [
        "Central bank raises interest rates to curb inflation",
        "Striker scores twice as the home side wins the cup final",
        "New chip design promises faster and cheaper phones",
        "Markets rally after the bank signals a pause in rate hikes",
    ];
    let corpus = Corpus::new(
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| Document {
                id: format!("doc{i}"),
                text: t.to_string(),
                meta: Default::default(),
            })
            .collect(),
    )?;

    let sparse = build_sparse_index(&corpus, Bm25Params::default(), &TokenizerSpec::unicode_word())?;
    println!("BM25 for \"bank rate\":");
    for hit in search_sparse(&sparse, "bank rate", 3) {
        println!("  #{} {} {:.4}", hit.rank, hit.doc_id, hit.score);
    }

    // Toy 3-d "embeddings": (finance, sport, tech).
    let vecs = [[0.9, 0.0, 0.1], [0.0, 1.0, 0.0], [0.1, 0.0, 0.9], [0.8, 0.1, 0.0]];
    let emb = Embeddings::new(
        vecs.iter()
            .enumerate()
            .map(|(i, v)| (format!("doc{i}"), v.to_vec()))
            .collect(),
    )?;
    let dense = build_dense_index(&corpus, &emb)?;
    println!("cosine for a finance-leaning query:");
    for hit in search_dense(&dense, &[1.0, 0.0, 0.3], 4)? {
        println!("  #{} {} {:+.4}", hit.rank, hit.doc_id, hit.score);
    }
    Ok(())
}
