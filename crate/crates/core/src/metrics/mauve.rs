//! MAUVE-style divergence-frontier score between two embedding sets.
//!
//! Both sets are quantized jointly with k-means; the cluster histograms P
//! (gold) and Q (synthetic) are compared through the mixtures
//! `R = λP + (1-λ)Q`. Each λ gives the frontier point
//! `(exp(-c·KL(Q‖R)), exp(-c·KL(P‖R)))` (natural-log KL) and the score is the
//! area under the frontier closed by the endpoints (1, 0) and (0, 1).

use std::cmp::Ordering;

use crate::error::{Error, Result};

use super::kmeans::kmeans;

#[derive(Debug, Clone, PartialEq)]
pub struct MauveParams {
    /// Cluster count; `None` means `max(2, (|gold| + |synth|) / 20)`.
    pub num_buckets: Option<usize>,
    pub scale_c: f64,
    pub grid_points: usize,
    pub kmeans_n_init: usize,
    pub kmeans_max_iter: usize,
    pub rng_seed: u64,
}

impl Default for MauveParams {
    fn default() -> Self {
        Self {
            num_buckets: None,
            scale_c: 5.0,
            grid_points: 25,
            kmeans_n_init: 5,
            kmeans_max_iter: 300,
            rng_seed: 25,
        }
    }
}

pub fn default_num_buckets(n_gold: usize, n_synth: usize) -> usize {
    ((n_gold + n_synth) / 20).max(2)
}

/// KL(p ‖ q) with natural log; terms where p is 0 contribute nothing.
pub fn kl_nats(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / qi).ln())
        .sum()
}

/// `n` evenly spaced mixture weights from 1e-6 to 1 - 1e-6.
pub fn mixture_weights(n: usize) -> Vec<f64> {
    let (lo, hi) = (1e-6, 1.0 - 1e-6);
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Frontier points ordered by increasing mixture weight, endpoints included.
pub fn divergence_curve(p: &[f64], q: &[f64], weights: &[f64], scale_c: f64) -> Vec<(f64, f64)> {
    let mut curve = vec![(1.0, 0.0)];
    for &w in weights {
        let r: Vec<f64> = p.iter().zip(q).map(|(pi, qi)| w * pi + (1.0 - w) * qi).collect();
        curve.push(((-scale_c * kl_nats(q, &r)).exp(), (-scale_c * kl_nats(p, &r)).exp()));
    }
    curve.push((0.0, 1.0));
    curve
}

/// Trapezoidal area under `y(x)` where x is the second coordinate of each
/// curve point, taken as a magnitude.
pub fn frontier_area(curve: &[(f64, f64)]) -> f64 {
    curve
        .windows(2)
        .map(|w| (w[1].1 - w[0].1) * (w[0].0 + w[1].0) / 2.0)
        .sum::<f64>()
        .abs()
}

/// Normalized cluster histograms of the gold and synthetic points.
pub fn quantize(gold: &[Vec<f32>], synth: &[Vec<f32>], params: &MauveParams) -> Result<(Vec<f64>, Vec<f64>)> {
    if gold.is_empty() || synth.is_empty() {
        return Err(Error::Invalid("MAUVE needs non-empty gold and synthetic sets".into()));
    }
    let dim = gold[0].len();
    for (i, v) in gold.iter().chain(synth).enumerate() {
        if v.len() != dim {
            return Err(Error::DimMismatch {
                id: format!("vector {i}"),
                expected: dim,
                found: v.len(),
            });
        }
    }
    let k = params
        .num_buckets
        .unwrap_or_else(|| default_num_buckets(gold.len(), synth.len()));
    if k < 2 {
        return Err(Error::Invalid(format!("MAUVE needs at least 2 buckets, got {k}")));
    }
    // Cluster the points in a canonical order so the quantization depends only
    // on the joint multiset, which keeps the score symmetric in its inputs.
    let joint: Vec<(bool, &Vec<f32>)> = gold
        .iter()
        .map(|v| (true, v))
        .chain(synth.iter().map(|v| (false, v)))
        .collect();
    let mut order: Vec<usize> = (0..joint.len()).collect();
    order.sort_by(|&a, &b| lex_cmp(joint[a].1, joint[b].1));
    let points: Vec<Vec<f64>> = order
        .iter()
        .map(|&i| joint[i].1.iter().map(|&x| f64::from(x)).collect())
        .collect();
    let fit = kmeans(&points, k, params.kmeans_n_init, params.kmeans_max_iter, params.rng_seed);
    let k = fit.centroids.len();
    let mut p = vec![0.0; k];
    let mut q = vec![0.0; k];
    for (&i, &c) in order.iter().zip(&fit.assignments) {
        if joint[i].0 {
            p[c] += 1.0;
        } else {
            q[c] += 1.0;
        }
    }
    let (ng, ns) = (gold.len() as f64, synth.len() as f64);
    p.iter_mut().for_each(|x| *x /= ng);
    q.iter_mut().for_each(|x| *x /= ns);
    Ok((p, q))
}

fn lex_cmp(a: &[f32], b: &[f32]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Divergence-frontier score in (0, 1]; 1 means indistinguishable.
pub fn mauve_score(gold: &[Vec<f32>], synth: &[Vec<f32>], params: &MauveParams) -> Result<f64> {
    let (p, q) = quantize(gold, synth, params)?;
    let curve = divergence_curve(&p, &q, &mixture_weights(params.grid_points), params.scale_c);
    Ok(frontier_area(&curve))
}
