use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{rank_top_k, RetrievalHit};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::jsonl::write_atomic;
use crate::tokenize::{Tokenizer, TokenizerSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1 > 0.0) {
            return Err(Error::Invalid(format!("BM25 k1 must be > 0, got {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::Invalid(format!("BM25 b must be in [0, 1], got {}", self.b)));
        }
        Ok(())
    }
}

/// Okapi BM25 inverted index. Document ordinals index `doc_ids` and
/// `doc_lengths`; postings are sorted by ordinal.
#[derive(Debug, Clone)]
pub struct SparseIndex {
    params: Bm25Params,
    tokenizer_spec: TokenizerSpec,
    tokenizer: Tokenizer,
    doc_ids: Vec<String>,
    doc_lengths: Vec<u32>,
    avg_doc_length: f64,
    postings: BTreeMap<String, Vec<(u32, u32)>>,
}

#[derive(Serialize, Deserialize)]
struct SparseIndexFile {
    params: Bm25Params,
    tokenizer: TokenizerSpec,
    doc_ids: Vec<String>,
    doc_lengths: Vec<u32>,
    avg_doc_length: f64,
    postings: BTreeMap<String, Vec<(u32, u32)>>,
}

pub fn build_sparse_index(
    corpus: &Corpus,
    params: Bm25Params,
    tok: &TokenizerSpec,
) -> Result<SparseIndex> {
    params.validate()?;
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let tokenizer = Tokenizer::new(tok)?;
    let mut postings: BTreeMap<String, Vec<(u32, u32)>> = BTreeMap::new();
    let mut doc_ids = Vec::with_capacity(corpus.len());
    let mut doc_lengths = Vec::with_capacity(corpus.len());
    for (ord, doc) in corpus.docs().iter().enumerate() {
        let terms = tokenizer.terms(&doc.text);
        doc_lengths.push(terms.len() as u32);
        doc_ids.push(doc.id.clone());
        let mut tf: BTreeMap<String, u32> = BTreeMap::new();
        for term in terms {
            *tf.entry(term).or_default() += 1;
        }
        for (term, count) in tf {
            postings.entry(term).or_default().push((ord as u32, count));
        }
    }
    let total: u64 = doc_lengths.iter().map(|&l| u64::from(l)).sum();
    let avg_doc_length = total as f64 / doc_lengths.len() as f64;
    Ok(SparseIndex {
        params,
        tokenizer_spec: tok.clone(),
        tokenizer,
        doc_ids,
        doc_lengths,
        avg_doc_length,
        postings,
    })
}

impl SparseIndex {
    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn doc_length(&self, doc_id: &str) -> Option<u32> {
        self.doc_ids
            .iter()
            .position(|id| id == doc_id)
            .map(|i| self.doc_lengths[i])
    }

    /// Doc ids and term frequencies for `term` (already lowercased).
    pub fn postings(&self, term: &str) -> Vec<(&str, u32)> {
        self.postings
            .get(term)
            .map(|list| {
                list.iter()
                    .map(|&(ord, tf)| (self.doc_ids[ord as usize].as_str(), tf))
                    .collect()
            })
            .unwrap_or_default()
    }

    /// `ln(1 + (N - df + 0.5) / (df + 0.5))`
    pub fn idf(&self, term: &str) -> f64 {
        let df = self.postings.get(term).map_or(0, Vec::len) as f64;
        let n = self.doc_ids.len() as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    pub fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = SparseIndexFile {
            params: self.params,
            tokenizer: self.tokenizer_spec.clone(),
            doc_ids: self.doc_ids.clone(),
            doc_lengths: self.doc_lengths.clone(),
            avg_doc_length: self.avg_doc_length,
            postings: self.postings.clone(),
        };
        let bytes = serde_json::to_vec(&file).expect("index serializes");
        write_atomic(path, &bytes)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
        let file: SparseIndexFile = serde_json::from_slice(&raw).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: e.to_string(),
        })?;
        Ok(Self {
            tokenizer: Tokenizer::new(&file.tokenizer)?,
            params: file.params,
            tokenizer_spec: file.tokenizer,
            doc_ids: file.doc_ids,
            doc_lengths: file.doc_lengths,
            avg_doc_length: file.avg_doc_length,
            postings: file.postings,
        })
    }
}

/// Top-`k` BM25 hits for `query_text`. Each query token contributes once per
/// occurrence; documents scoring zero are never returned.
pub fn search_sparse(index: &SparseIndex, query_text: &str, k: usize) -> Vec<RetrievalHit> {
    assert!(k >= 1, "k must be at least 1");
    let Bm25Params { k1, b } = index.params;
    let avgdl = if index.avg_doc_length > 0.0 {
        index.avg_doc_length
    } else {
        1.0
    };
    let mut acc = vec![0.0f64; index.doc_ids.len()];
    let mut touched = vec![false; index.doc_ids.len()];
    for term in index.tokenizer.terms(query_text) {
        let Some(list) = index.postings.get(&term) else {
            continue;
        };
        let idf = index.idf(&term);
        for &(ord, tf) in list {
            let ord = ord as usize;
            let tf = f64::from(tf);
            let dl = f64::from(index.doc_lengths[ord]);
            let norm = k1 * (1.0 - b + b * dl / avgdl);
            acc[ord] += idf * (tf * (k1 + 1.0)) / (tf + norm);
            touched[ord] = true;
        }
    }
    let scored = acc
        .iter()
        .zip(&touched)
        .enumerate()
        .filter(|(_, (&s, &t))| t && s > 0.0)
        .map(|(ord, (&s, _))| (s, index.doc_ids[ord].as_str()))
        .collect();
    rank_top_k(scored, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;

    fn corpus(texts: &[&str]) -> Corpus {
        Corpus::new(
            texts
                .iter()
                .enumerate()
                .map(|(i, t)| Document {
                    id: format!("d{}", i + 1),
                    text: (*t).to_owned(),
                    meta: Default::default(),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_doc_average_length() {
        let idx = build_sparse_index(&corpus(&["one two three"]), Bm25Params::default(), &TokenizerSpec::default()).unwrap();
        assert_eq!(idx.avg_doc_length(), 3.0);
        assert_eq!(idx.doc_count(), 1);
    }

    #[test]
    fn postings_list_matching_docs() {
        let idx = build_sparse_index(
            &corpus(&["cat sat", "dog ran", "cat ran fast"]),
            Bm25Params::default(),
            &TokenizerSpec::default(),
        )
        .unwrap();
        assert_eq!(idx.postings("cat"), vec![("d1", 1), ("d3", 1)]);
        assert_eq!(idx.params(), Bm25Params { k1: 1.2, b: 0.75 });
    }

    #[test]
    fn empty_corpus_rejected() {
        let err = build_sparse_index(&Corpus::default(), Bm25Params::default(), &TokenizerSpec::default()).unwrap_err();
        assert!(matches!(err, Error::EmptyCorpus));
    }

    #[test]
    fn bad_params_rejected() {
        let c = corpus(&["a"]);
        assert!(build_sparse_index(&c, Bm25Params { k1: 0.0, b: 0.5 }, &TokenizerSpec::default()).is_err());
        assert!(build_sparse_index(&c, Bm25Params { k1: 1.0, b: 1.5 }, &TokenizerSpec::default()).is_err());
    }

    #[test]
    fn unseen_terms_give_no_hits() {
        let idx = build_sparse_index(&corpus(&["cat sat"]), Bm25Params::default(), &TokenizerSpec::default()).unwrap();
        assert!(search_sparse(&idx, "zebra", 5).is_empty());
    }

    #[test]
    fn k_larger_than_matches_returns_all_matches() {
        let idx = build_sparse_index(
            &corpus(&["cat sat", "dog ran", "cat ran fast"]),
            Bm25Params::default(),
            &TokenizerSpec::default(),
        )
        .unwrap();
        assert_eq!(search_sparse(&idx, "cat", 500).len(), 2);
    }

    #[test]
    fn save_and_load_preserve_results() {
        let idx = build_sparse_index(
            &corpus(&["cat sat", "dog ran", "cat ran fast"]),
            Bm25Params::default(),
            &TokenizerSpec::default(),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.json");
        idx.save(&path).unwrap();
        let back = SparseIndex::load(&path).unwrap();
        assert_eq!(search_sparse(&idx, "cat ran", 3), search_sparse(&back, "cat ran", 3));
    }
}
