//! Content sourcing and in-context set construction: per-seed retrieval with
//! cosine-band filtering and expansion sampling, the RetrICL demonstration
//! pool, and reproducible per-generation shot draws.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, SeedExample, SeedSet};
use crate::error::{Error, Result};
use crate::retrieval::{search_dense, search_sparse, DenseIndex, Embeddings, RetrievalHit, SparseIndex};

const SOURCING_STREAM_SALT: u64 = 0x5eed_c0de_0000_0001;

/// Inclusive cosine band `s_lo <= cos <= s_hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandParams {
    pub s_lo: f64,
    pub s_hi: f64,
}

impl Default for BandParams {
    fn default() -> Self {
        Self { s_lo: 0.4, s_hi: 0.9 }
    }
}

impl BandParams {
    pub fn new(s_lo: f64, s_hi: f64) -> Result<Self> {
        if !(-1.0 <= s_lo && s_lo < s_hi && s_hi <= 1.0) {
            return Err(Error::Invalid(format!(
                "band must satisfy -1 <= s_lo < s_hi <= 1, got ({s_lo}, {s_hi})"
            )));
        }
        Ok(Self { s_lo, s_hi })
    }

    pub fn contains(&self, score: f64) -> bool {
        self.s_lo <= score && score <= self.s_hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletDoc {
    pub doc_id: String,
    pub score: f64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedTriplet {
    pub seed_id: String,
    pub label: String,
    pub docs: Vec<TripletDoc>,
}

/// The unfiltered ranking retrieved for one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedHits {
    pub seed_id: String,
    pub hits: Vec<RetrievalHit>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IclPair {
    pub doc_text: String,
    pub exemplar_text: String,
    pub label: String,
}

pub enum Retriever<'a> {
    Sparse(&'a SparseIndex),
    Dense {
        index: &'a DenseIndex,
        queries: &'a Embeddings,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourcingParams {
    pub k_retrieve: usize,
    pub k_expand: usize,
    pub band: Option<BandParams>,
    pub rng_seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Sourcing {
    pub triplets: Vec<RetrievedTriplet>,
    pub rankings: Vec<RankedHits>,
    pub warnings: Vec<String>,
}

/// Retrieves `k_retrieve` documents per seed, keeps those inside the band
/// (dense only) and samples `k_expand` of the survivors without replacement.
/// Sampled documents keep their rank order.
pub fn content_source(
    seeds: &SeedSet,
    corpus: &Corpus,
    retriever: &Retriever<'_>,
    params: &SourcingParams,
) -> Result<Sourcing> {
    if params.k_expand < 1 || params.k_retrieve < params.k_expand {
        return Err(Error::Invalid(format!(
            "need k_retrieve >= k_expand >= 1, got k_retrieve={} k_expand={}",
            params.k_retrieve, params.k_expand
        )));
    }
    match (retriever, params.band) {
        (Retriever::Sparse(_), Some(_)) => {
            return Err(Error::Invalid("the cosine band only applies to dense retrieval".into()))
        }
        (Retriever::Dense { .. }, None) => {
            return Err(Error::Invalid("dense retrieval requires a cosine band".into()))
        }
        _ => {}
    }

    let mut out = Sourcing::default();
    for (i, seed) in seeds.examples().iter().enumerate() {
        let hits = match retriever {
            Retriever::Sparse(index) => search_sparse(index, &seed.text, params.k_retrieve),
            Retriever::Dense { index, queries } => {
                let q = queries
                    .get(&seed.id)
                    .ok_or_else(|| Error::MissingQueryEmbedding(seed.id.clone()))?;
                search_dense(index, q, params.k_retrieve)?
            }
        };
        let survivors: Vec<&RetrievalHit> = hits
            .iter()
            .filter(|h| params.band.map_or(true, |b| b.contains(h.score)))
            .collect();
        if survivors.is_empty() {
            out.warnings
                .push(format!("seed `{}`: no retrieved document survived filtering", seed.id));
        } else if survivors.len() < params.k_expand {
            out.warnings.push(format!(
                "seed `{}`: only {} of {} requested documents survived filtering",
                seed.id,
                survivors.len(),
                params.k_expand
            ));
        }
        let mut rng = stream_rng(params.rng_seed ^ SOURCING_STREAM_SALT, i as u64);
        let mut picked = partial_shuffle_indices(survivors.len(), params.k_expand.min(survivors.len()), &mut rng);
        picked.sort_unstable();
        let docs = picked
            .into_iter()
            .map(|j| {
                let hit = survivors[j];
                let doc = corpus.get(&hit.doc_id).ok_or_else(|| {
                    Error::Invalid(format!("retrieved document `{}` is not in the corpus", hit.doc_id))
                })?;
                Ok(TripletDoc {
                    doc_id: hit.doc_id.clone(),
                    score: hit.score,
                    text: doc.text.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.triplets.push(RetrievedTriplet {
            seed_id: seed.id.clone(),
            label: seed.label.clone(),
            docs,
        });
        out.rankings.push(RankedHits {
            seed_id: seed.id.clone(),
            hits,
        });
    }
    for w in &out.warnings {
        log::warn!("{w}");
    }
    Ok(out)
}

/// Builds (document, exemplar, label) demonstrations from each seed's rank
/// 1..=`top_m` documents. With a band only in-band documents qualify; without
/// one (sparse retrieval) every top-ranked document does.
pub fn build_retricl(
    seeds: &SeedSet,
    rankings: &[RankedHits],
    corpus: &Corpus,
    band: Option<BandParams>,
    top_m: usize,
) -> Result<Vec<IclPair>> {
    assert!(top_m >= 1, "top_m must be at least 1");
    let by_seed: HashMap<&str, &RankedHits> =
        rankings.iter().map(|r| (r.seed_id.as_str(), r)).collect();
    let mut pool = Vec::new();
    for seed in seeds.examples() {
        let Some(ranked) = by_seed.get(seed.id.as_str()) else {
            continue;
        };
        for hit in ranked.hits.iter().filter(|h| h.rank <= top_m) {
            if band.is_some_and(|b| !b.contains(hit.score)) {
                continue;
            }
            let doc = corpus.get(&hit.doc_id).ok_or_else(|| {
                Error::Invalid(format!("retrieved document `{}` is not in the corpus", hit.doc_id))
            })?;
            pool.push(IclPair {
                doc_text: doc.text.clone(),
                exemplar_text: seed.text.clone(),
                label: seed.label.clone(),
            });
        }
    }
    Ok(pool)
}

/// Draws `n_shots` items uniformly without replacement. The draw depends only
/// on `(rng_seed, draw_index)`: a ChaCha8 generator seeded with `rng_seed` on
/// stream `draw_index`, driving a partial Fisher-Yates shuffle.
pub fn sample_icl_shots<T: Clone>(
    pool: &[T],
    n_shots: usize,
    rng_seed: u64,
    draw_index: u64,
) -> Result<Vec<T>> {
    if n_shots > pool.len() {
        return Err(Error::NotEnoughShots {
            requested: n_shots,
            available: pool.len(),
        });
    }
    let mut rng = stream_rng(rng_seed, draw_index);
    Ok(partial_shuffle_indices(pool.len(), n_shots, &mut rng)
        .into_iter()
        .map(|i| pool[i].clone())
        .collect())
}

/// Like [`sample_icl_shots`] but restricted to seed examples carrying `label`.
pub fn sample_shots_for_label(
    pool: &[SeedExample],
    label: &str,
    n_shots: usize,
    rng_seed: u64,
    draw_index: u64,
) -> Result<Vec<SeedExample>> {
    let same: Vec<SeedExample> = pool.iter().filter(|s| s.label == label).cloned().collect();
    sample_icl_shots(&same, n_shots, rng_seed, draw_index)
}

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn partial_shuffle_indices(len: usize, n: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..len).collect();
    for i in 0..n {
        let j = rng.gen_range(i..len);
        idx.swap(i, j);
    }
    idx.truncate(n);
    idx
}
