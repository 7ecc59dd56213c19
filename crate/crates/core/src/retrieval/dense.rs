use std::collections::HashMap;

use super::{rank_top_k, Embeddings, RetrievalHit};
use crate::corpus::Corpus;
use crate::error::{Error, Result};

/// Unit-normalized document vectors, stored contiguously in corpus order.
#[derive(Debug, Clone)]
pub struct DenseIndex {
    dim: usize,
    ids: Vec<String>,
    vectors: Vec<f32>,
}

impl DenseIndex {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn vector(&self, doc_id: &str) -> Option<&[f32]> {
        let i = self.ids.iter().position(|id| id == doc_id)?;
        Some(&self.vectors[i * self.dim..(i + 1) * self.dim])
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }
}

pub(crate) fn unit(id: &str, v: &[f32]) -> Result<Vec<f64>> {
    let norm = v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::ZeroVector(id.to_owned()));
    }
    Ok(v.iter().map(|&x| f64::from(x) / norm).collect())
}

pub fn build_dense_index(corpus: &Corpus, embeddings: &Embeddings) -> Result<DenseIndex> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let dim = embeddings.dim();
    let mut by_id: HashMap<&str, &[f32]> = HashMap::with_capacity(embeddings.len());
    for (id, v) in embeddings.iter() {
        if v.len() != dim {
            return Err(Error::DimMismatch {
                id: id.to_owned(),
                expected: dim,
                found: v.len(),
            });
        }
        if corpus.get(id).is_none() {
            return Err(Error::ExtraEmbedding(id.to_owned()));
        }
        if by_id.insert(id, v).is_some() {
            return Err(Error::DuplicateId(id.to_owned()));
        }
    }
    let mut ids = Vec::with_capacity(corpus.len());
    let mut vectors = Vec::with_capacity(corpus.len() * dim);
    for doc in corpus.docs() {
        let v = by_id
            .get(doc.id.as_str())
            .ok_or_else(|| Error::MissingEmbedding(doc.id.clone()))?;
        vectors.extend(unit(&doc.id, v)?.into_iter().map(|x| x as f32));
        ids.push(doc.id.clone());
    }
    Ok(DenseIndex { dim, ids, vectors })
}

/// Exhaustive cosine search. Scores are clamped to [-1, 1].
pub fn search_dense(index: &DenseIndex, query: &[f32], k: usize) -> Result<Vec<RetrievalHit>> {
    assert!(k >= 1, "k must be at least 1");
    if query.len() != index.dim {
        return Err(Error::DimMismatch {
            id: "<query>".into(),
            expected: index.dim,
            found: query.len(),
        });
    }
    let q = unit("<query>", query)?;
    let scored = index
        .vectors
        .chunks_exact(index.dim)
        .zip(&index.ids)
        .map(|(v, id)| {
            let dot: f64 = v.iter().zip(&q).map(|(&a, &b)| f64::from(a) * b).sum();
            (dot.clamp(-1.0, 1.0), id.as_str())
        })
        .collect();
    Ok(rank_top_k(scored, k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;

    fn setup(vecs: &[(&str, Vec<f32>)]) -> (Corpus, Embeddings) {
        let corpus = Corpus::new(
            vecs.iter()
                .map(|(id, _)| Document {
                    id: (*id).to_owned(),
                    text: format!("text {id}"),
                    meta: Default::default(),
                })
                .collect(),
        )
        .unwrap();
        let emb = Embeddings::new(vecs.iter().map(|(id, v)| ((*id).to_owned(), v.clone())).collect()).unwrap();
        (corpus, emb)
    }

    #[test]
    fn normalizes_on_build() {
        let (c, e) = setup(&[("a", vec![3.0, 4.0]), ("b", vec![1.0, 0.0])]);
        let idx = build_dense_index(&c, &e).unwrap();
        assert_eq!(idx.len(), 2);
        let a = idx.vector("a").unwrap();
        assert!((a[0] - 0.6).abs() < 1e-6 && (a[1] - 0.8).abs() < 1e-6);
        let b = idx.vector("b").unwrap();
        assert!((b[0] - 1.0).abs() < 1e-6 && b[1].abs() < 1e-6);
    }

    #[test]
    fn self_query_and_orthogonal_query() {
        let (c, e) = setup(&[("a", vec![3.0, 4.0]), ("b", vec![-4.0, 3.0])]);
        let idx = build_dense_index(&c, &e).unwrap();
        let hits = search_dense(&idx, &[3.0, 4.0], 2).unwrap();
        assert_eq!(hits[0].doc_id, "a");
        assert!((hits[0].score - 1.0).abs() < 1e-6);
        assert!(hits[1].score.abs() < 1e-6);
    }

    #[test]
    fn hand_computed_ranking() {
        // cosines against (1, 0): a = 1/sqrt(2), b = 0.6, c = -1
        let (c, e) = setup(&[("a", vec![1.0, 1.0]), ("b", vec![3.0, 4.0]), ("c", vec![-2.0, 0.0])]);
        let idx = build_dense_index(&c, &e).unwrap();
        let hits = search_dense(&idx, &[1.0, 0.0], 3).unwrap();
        let ids: Vec<_> = hits.iter().map(|h| h.doc_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert!((hits[0].score - 0.5f64.sqrt()).abs() < 1e-6);
        assert!((hits[1].score - 0.6).abs() < 1e-6);
        assert!((hits[2].score + 1.0).abs() < 1e-6);
    }

    #[test]
    fn sidecar_mismatches_are_named() {
        let (c, _) = setup(&[("a", vec![1.0]), ("b", vec![1.0])]);
        let missing = Embeddings::new(vec![("a".into(), vec![1.0])]).unwrap();
        assert!(matches!(build_dense_index(&c, &missing), Err(Error::MissingEmbedding(id)) if id == "b"));
        let extra = Embeddings::new(vec![("a".into(), vec![1.0]), ("b".into(), vec![1.0]), ("z".into(), vec![1.0])]).unwrap();
        assert!(matches!(build_dense_index(&c, &extra), Err(Error::ExtraEmbedding(id)) if id == "z"));
        let zero = Embeddings::new(vec![("a".into(), vec![0.0]), ("b".into(), vec![1.0])]).unwrap();
        assert!(matches!(build_dense_index(&c, &zero), Err(Error::ZeroVector(id)) if id == "a"));
    }

    #[test]
    fn bad_queries_rejected() {
        let (c, e) = setup(&[("a", vec![1.0, 0.0])]);
        let idx = build_dense_index(&c, &e).unwrap();
        assert!(search_dense(&idx, &[1.0], 1).is_err());
        assert!(search_dense(&idx, &[0.0, 0.0], 1).is_err());
    }
}
