//! Self-BLEU: the mean sentence BLEU of each text scored against every other
//! text as a reference. Lower means a more lexically diverse dataset.
//!
//! Sentence BLEU follows the common toolkit convention: clipped (modified)
//! n-gram precision, brevity penalty against the closest reference length
//! (ties to the shorter), uniform weights over orders 1..=n, no smoothing —
//! a zero precision at any order makes the score 0.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;

use crate::error::{Error, Result};
use crate::icl::stream_rng;
use crate::tokenize::Tokenizer;

pub const MAX_ORDER: usize = 5;
pub const DEFAULT_SAMPLE_SIZE: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelfBleuParams {
    pub n_max: usize,
    /// Score a seeded uniform sample of this many hypotheses (all texts
    /// still serve as references). `None` scores every text.
    pub sample_size: Option<usize>,
    pub rng_seed: u64,
}

impl Default for SelfBleuParams {
    fn default() -> Self {
        Self {
            n_max: MAX_ORDER,
            sample_size: Some(DEFAULT_SAMPLE_SIZE),
            rng_seed: 0,
        }
    }
}

type Gram<'a> = &'a [&'a str];

/// Best and second-best count of an n-gram across texts, with the owners, so
/// the best count among "all texts but i" is an O(1) lookup.
#[derive(Clone, Copy)]
struct TopTwo {
    best: (u32, usize),
    second: u32,
}

impl TopTwo {
    fn push(&mut self, count: u32, owner: usize) {
        if count > self.best.0 {
            self.second = self.best.0;
            self.best = (count, owner);
        } else if count > self.second {
            self.second = count;
        }
    }

    fn excluding(&self, owner: usize) -> u32 {
        if self.best.1 == owner {
            self.second
        } else {
            self.best.0
        }
    }
}

fn ngram_counts<'a>(tokens: &'a [&'a str], n: usize) -> HashMap<Gram<'a>, u32> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for g in tokens.windows(n) {
            *counts.entry(g).or_insert(0) += 1;
        }
    }
    counts
}

/// Cumulative BLEU-1..=`n_max` of one hypothesis from its clipped precision
/// fractions and lengths.
pub(crate) fn cumulative_bleu(precisions: &[(u64, u64)], hyp_len: usize, ref_len: usize) -> Vec<f64> {
    let bp = if hyp_len == 0 {
        0.0
    } else if hyp_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };
    let mut out = Vec::with_capacity(precisions.len());
    let mut log_sum = 0.0;
    let mut zero = false;
    for (i, &(num, den)) in precisions.iter().enumerate() {
        if num == 0 || den == 0 {
            zero = true;
        } else {
            log_sum += (num as f64 / den as f64).ln();
        }
        let n = (i + 1) as f64;
        out.push(if zero { 0.0 } else { bp * (log_sum / n).exp() });
    }
    out
}

/// Reference length closest to `hyp_len`, preferring the shorter on ties.
pub(crate) fn closest_ref_len(hyp_len: usize, ref_lens: impl Iterator<Item = usize>) -> usize {
    ref_lens
        .min_by_key(|&r| (r.abs_diff(hyp_len), r))
        .unwrap_or(0)
}

/// Mean cumulative BLEU-n for n in 1..=`n_max`, keyed by n.
pub fn self_bleu(texts: &[String], tok: &Tokenizer, params: &SelfBleuParams) -> Result<BTreeMap<usize, f64>> {
    if texts.len() < 2 {
        return Err(Error::Invalid(format!("self-BLEU needs at least 2 texts, got {}", texts.len())));
    }
    if !(1..=MAX_ORDER).contains(&params.n_max) {
        return Err(Error::Invalid(format!("self-BLEU order must be in 1..={MAX_ORDER}, got {}", params.n_max)));
    }
    let tokenized: Vec<Vec<&str>> = texts.iter().map(|t| tok.tokens(t)).collect();
    let lens: Vec<usize> = tokenized.iter().map(Vec::len).collect();

    let per_order: Vec<Vec<HashMap<Gram<'_>, u32>>> = (1..=params.n_max)
        .map(|n| tokenized.iter().map(|t| ngram_counts(t, n)).collect())
        .collect();
    let best: Vec<HashMap<Gram<'_>, TopTwo>> = per_order
        .iter()
        .map(|texts| {
            let mut best: HashMap<Gram<'_>, TopTwo> = HashMap::new();
            for (owner, counts) in texts.iter().enumerate() {
                for (&g, &c) in counts {
                    best.entry(g)
                        .or_insert(TopTwo {
                            best: (0, usize::MAX),
                            second: 0,
                        })
                        .push(c, owner);
                }
            }
            best
        })
        .collect();

    let hyps = hypothesis_sample(texts.len(), params.sample_size, params.rng_seed);
    let mut sums = vec![0.0; params.n_max];
    for &h in &hyps {
        let precisions: Vec<(u64, u64)> = (0..params.n_max)
            .map(|o| {
                let mut num = 0u64;
                let mut den = 0u64;
                for (g, &c) in &per_order[o][h] {
                    num += u64::from(c.min(best[o][g].excluding(h)));
                    den += u64::from(c);
                }
                (num, den)
            })
            .collect();
        let ref_len = closest_ref_len(
            lens[h],
            lens.iter().enumerate().filter(|&(j, _)| j != h).map(|(_, &l)| l),
        );
        for (s, b) in sums.iter_mut().zip(cumulative_bleu(&precisions, lens[h], ref_len)) {
            *s += b;
        }
    }
    Ok(sums
        .into_iter()
        .enumerate()
        .map(|(i, s)| (i + 1, s / hyps.len() as f64))
        .collect())
}

/// Indices of the texts scored as hypotheses, in ascending order.
fn hypothesis_sample(n: usize, sample_size: Option<usize>, seed: u64) -> Vec<usize> {
    match sample_size {
        Some(s) if s < n => {
            let mut rng = stream_rng(seed, 0);
            let mut idx: Vec<usize> = (0..n).collect();
            for i in 0..s {
                let j = rng.gen_range(i..n);
                idx.swap(i, j);
            }
            idx.truncate(s.max(1));
            idx.sort_unstable();
            idx
        }
        _ => (0..n).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strings(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    fn exact() -> SelfBleuParams {
        SelfBleuParams {
            sample_size: None,
            ..SelfBleuParams::default()
        }
    }

    #[test]
    fn identical_copies_score_one() {
        let texts = strings(&["a b c d e f", "a b c d e f", "a b c d e f"]);
        let s = self_bleu(&texts, &Tokenizer::whitespace(), &exact()).unwrap();
        for n in 1..=5 {
            assert!((s[&n] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn disjoint_vocabularies_score_zero() {
        let texts = strings(&["a b c", "d e f"]);
        let s = self_bleu(&texts, &Tokenizer::whitespace(), &exact()).unwrap();
        assert!(s.values().all(|&v| v == 0.0));
    }

    #[test]
    fn hand_computed_pair() {
        // hyp "the cat sat" vs ref "the dog sat": p1 = 2/3, p2 = 0 -> BLEU-1 = 2/3, BLEU-2 = 0
        let texts = strings(&["the cat sat", "the dog sat"]);
        let s = self_bleu(
            &texts,
            &Tokenizer::whitespace(),
            &SelfBleuParams {
                n_max: 2,
                ..exact()
            },
        )
        .unwrap();
        assert!((s[&1] - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(s[&2], 0.0);
    }

    #[test]
    fn brevity_penalty_uses_closest_shorter_reference() {
        assert_eq!(closest_ref_len(4, [2, 6].into_iter()), 2);
        assert_eq!(closest_ref_len(4, [3, 6].into_iter()), 3);
        let b = cumulative_bleu(&[(2, 2)], 2, 4);
        assert!((b[0] - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn too_few_texts() {
        assert!(self_bleu(&strings(&["x"]), &Tokenizer::whitespace(), &exact()).is_err());
    }

    #[test]
    fn sample_is_seeded_subset() {
        let a = hypothesis_sample(50, Some(10), 7);
        assert_eq!(a, hypothesis_sample(50, Some(10), 7));
        assert_eq!(a.len(), 10);
        assert_eq!(hypothesis_sample(5, Some(10), 7), vec![0, 1, 2, 3, 4]);
    }
}
