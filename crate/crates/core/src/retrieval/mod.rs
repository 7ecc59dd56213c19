//! Query-by-example retrieval over a corpus: BM25 sparse search, exhaustive
//! cosine dense search, embedding sidecars and overlap statistics.

mod dense;
mod sidecar;
mod sparse;

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

pub use dense::{build_dense_index, search_dense, DenseIndex};
pub use sidecar::{read_embeddings, write_embeddings_binary, write_embeddings_jsonl, Embeddings};
pub use sparse::{build_sparse_index, search_sparse, Bm25Params, SparseIndex};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalHit {
    pub doc_id: String,
    pub score: f64,
    pub rank: usize,
}

/// Orders candidates by descending score, then ascending doc id, keeps the
/// first `k` and assigns 1-based ranks.
pub(crate) fn rank_top_k(mut scored: Vec<(f64, &str)>, k: usize) -> Vec<RetrievalHit> {
    scored.sort_by(|a, b| match b.0.total_cmp(&a.0) {
        Ordering::Equal => a.1.cmp(b.1),
        other => other,
    });
    scored
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(i, (score, id))| RetrievalHit {
            doc_id: id.to_owned(),
            score,
            rank: i + 1,
        })
        .collect()
}

/// For each `m`, the number of distinct documents that occur in exactly `m`
/// of the given result lists.
pub fn overlap_histogram<L, S>(lists: &[L]) -> BTreeMap<usize, usize>
where
    L: AsRef<[S]>,
    S: AsRef<str>,
{
    let mut occurrences: BTreeMap<&str, usize> = BTreeMap::new();
    for list in lists {
        let distinct: HashSet<&str> = list.as_ref().iter().map(AsRef::as_ref).collect();
        for id in distinct {
            *occurrences.entry(id).or_default() += 1;
        }
    }
    let mut hist = BTreeMap::new();
    for count in occurrences.into_values() {
        *hist.entry(count).or_default() += 1;
    }
    hist
}
