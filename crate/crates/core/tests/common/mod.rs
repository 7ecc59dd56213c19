//! Independent reference implementations and fixture helpers shared by the
//! integration tests. Oracles recompute every quantity from scratch with the
//! most direct formulation available; none of them call into the library's
//! scoring code.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn toy_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/toy")
}

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden")
}

/// Standard normal draw (Box-Muller).
pub fn normal(r: &mut impl Rng) -> f64 {
    let u1: f64 = r.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = r.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Lowercase ASCII words drawn from a small vocabulary, so whitespace
/// splitting and word segmentation agree.
pub fn random_text(r: &mut impl Rng, vocab: usize, min_words: usize, max_words: usize) -> String {
    let n = r.gen_range(min_words..=max_words);
    (0..n)
        .map(|_| word(r.gen_range(0..vocab)))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn word(i: usize) -> String {
    let mut s = String::new();
    let mut i = i;
    loop {
        s.push((b'a' + (i % 26) as u8) as char);
        i /= 26;
        if i == 0 {
            break;
        }
    }
    format!("w{s}")
}

// ---------------------------------------------------------------- retrieval

/// Scores every document against the query with Okapi BM25 and ranks by
/// score descending, then id ascending. Zero-score documents are dropped.
pub fn bm25_oracle(docs: &[(String, String)], query: &str, k1: f64, b: f64, k: usize) -> Vec<(String, f64)> {
    let tokenized: Vec<Vec<String>> = docs
        .iter()
        .map(|(_, t)| t.split_whitespace().map(str::to_lowercase).collect())
        .collect();
    let n = docs.len() as f64;
    let total: usize = tokenized.iter().map(Vec::len).sum();
    let avgdl = if total == 0 { 1.0 } else { total as f64 / n };
    let q: Vec<String> = query.split_whitespace().map(str::to_lowercase).collect();
    let mut scored = Vec::new();
    for (d, toks) in tokenized.iter().enumerate() {
        let dl = toks.len() as f64;
        let mut score = 0.0f64;
        let mut hit = false;
        for term in &q {
            let tf = toks.iter().filter(|t| *t == term).count();
            if tf == 0 {
                continue;
            }
            hit = true;
            let df = tokenized.iter().filter(|ts| ts.contains(term)).count() as f64;
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            let tf = tf as f64;
            let norm = k1 * (1.0 - b + b * dl / avgdl);
            score += idf * (tf * (k1 + 1.0)) / (tf + norm);
        }
        if hit && score > 0.0 {
            scored.push((docs[d].0.clone(), score));
        }
    }
    rank(scored, k)
}

/// Cosine of the query against every document vector. Document vectors are
/// stored unit-normalized in single precision; products accumulate in f64.
pub fn cosine_oracle(docs: &[(String, Vec<f32>)], query: &[f32], k: usize) -> Vec<(String, f64)> {
    let unit64 = |v: &[f32]| -> Vec<f64> {
        let n = v.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
        v.iter().map(|&x| f64::from(x) / n).collect()
    };
    let q = unit64(query);
    let scored = docs
        .iter()
        .map(|(id, v)| {
            let stored: Vec<f32> = unit64(v).into_iter().map(|x| x as f32).collect();
            let mut dot = 0.0f64;
            for i in 0..q.len() {
                dot += f64::from(stored[i]) * q[i];
            }
            (id.clone(), dot.max(-1.0).min(1.0))
        })
        .collect();
    rank(scored, k)
}

fn rank(mut scored: Vec<(String, f64)>, k: usize) -> Vec<(String, f64)> {
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

// ---------------------------------------------------------------- self-BLEU

/// Mean sentence BLEU-1..=n_max of every text against all the others, by
/// direct counting against each reference in turn.
pub fn self_bleu_oracle(texts: &[String], n_max: usize) -> Vec<f64> {
    let toks: Vec<Vec<&str>> = texts.iter().map(|t| t.split_whitespace().collect()).collect();
    let mut sums = vec![0.0; n_max];
    for h in 0..toks.len() {
        let refs: Vec<&Vec<&str>> = toks.iter().enumerate().filter(|&(j, _)| j != h).map(|(_, t)| t).collect();
        let hyp = &toks[h];
        let mut p = Vec::new();
        for n in 1..=n_max {
            let hyp_counts = grams(hyp, n);
            let mut clipped = 0usize;
            for (g, &c) in &hyp_counts {
                let max_ref = refs.iter().map(|r| *grams(r, n).get(g).unwrap_or(&0)).max().unwrap_or(0);
                clipped += c.min(max_ref);
            }
            let total: usize = hyp_counts.values().sum();
            p.push((clipped, total));
        }
        let c = hyp.len();
        let mut r = usize::MAX;
        for rf in &refs {
            let l = rf.len();
            if r == usize::MAX || l.abs_diff(c) < r.abs_diff(c) || (l.abs_diff(c) == r.abs_diff(c) && l < r) {
                r = l;
            }
        }
        let bp = if c == 0 {
            0.0
        } else if c > r {
            1.0
        } else {
            (1.0 - r as f64 / c as f64).exp()
        };
        for n in 1..=n_max {
            let used = &p[..n];
            let score = if used.iter().any(|&(m, t)| m == 0 || t == 0) {
                0.0
            } else {
                let prod: f64 = used.iter().map(|&(m, t)| m as f64 / t as f64).product();
                bp * prod.powf(1.0 / n as f64)
            };
            sums[n - 1] += score;
        }
    }
    sums.into_iter().map(|s| s / toks.len() as f64).collect()
}

fn grams<'a>(toks: &[&'a str], n: usize) -> BTreeMap<Vec<&'a str>, usize> {
    let mut m = BTreeMap::new();
    if toks.len() >= n {
        for i in 0..=toks.len() - n {
            *m.entry(toks[i..i + n].to_vec()).or_insert(0) += 1;
        }
    }
    m
}

// ---------------------------------------------------------------- MAUVE

/// Divergence-frontier area with a farthest-first seeded Lloyd clustering.
/// Intended for well-separated data, where every reasonable clustering
/// recovers the same partition.
pub fn mauve_oracle(gold: &[Vec<f32>], synth: &[Vec<f32>], k: usize, c: f64, grid: usize) -> f64 {
    let pts: Vec<Vec<f64>> = gold
        .iter()
        .chain(synth)
        .map(|v| v.iter().map(|&x| f64::from(x)).collect())
        .collect();
    let assign = lloyd_farthest_first(&pts, k);
    let mut p = vec![0.0; k];
    let mut q = vec![0.0; k];
    for (i, &a) in assign.iter().enumerate() {
        if i < gold.len() {
            p[a] += 1.0 / gold.len() as f64;
        } else {
            q[a] += 1.0 / synth.len() as f64;
        }
    }
    let kl = |a: &[f64], b: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..a.len() {
            if a[i] > 0.0 {
                s += a[i] * a[i].ln() - a[i] * b[i].ln();
            }
        }
        s
    };
    // (x, y) = (exp(-c KL(Q||R)), exp(-c KL(P||R))), closed by (1,0) and (0,1).
    let mut pts_xy = vec![(1.0, 0.0)];
    for i in 0..grid {
        let lam = 1e-6 + (1.0 - 2e-6) * i as f64 / (grid - 1) as f64;
        let r: Vec<f64> = (0..k).map(|j| lam * p[j] + (1.0 - lam) * q[j]).collect();
        pts_xy.push(((-c * kl(&q, &r)).exp(), (-c * kl(&p, &r)).exp()));
    }
    pts_xy.push((0.0, 1.0));
    let mut area = 0.0;
    for w in pts_xy.windows(2) {
        area += 0.5 * (w[0].0 + w[1].0) * (w[1].1 - w[0].1);
    }
    area.abs()
}

fn lloyd_farthest_first(pts: &[Vec<f64>], k: usize) -> Vec<usize> {
    let d2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut centers = vec![pts[0].clone()];
    while centers.len() < k {
        let far = (0..pts.len())
            .max_by(|&a, &b| {
                let da = centers.iter().map(|c| d2(&pts[a], c)).fold(f64::INFINITY, f64::min);
                let db = centers.iter().map(|c| d2(&pts[b], c)).fold(f64::INFINITY, f64::min);
                da.partial_cmp(&db).unwrap()
            })
            .unwrap();
        centers.push(pts[far].clone());
    }
    let mut assign = vec![usize::MAX; pts.len()];
    loop {
        let next: Vec<usize> = pts
            .iter()
            .map(|p| {
                (0..k)
                    .min_by(|&a, &b| d2(p, &centers[a]).partial_cmp(&d2(p, &centers[b])).unwrap())
                    .unwrap()
            })
            .collect();
        if next == assign {
            return assign;
        }
        assign = next;
        for (j, c) in centers.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = pts.iter().zip(&assign).filter(|(_, &a)| a == j).map(|(p, _)| p).collect();
            if members.is_empty() {
                continue;
            }
            for d in 0..c.len() {
                c[d] = members.iter().map(|m| m[d]).sum::<f64>() / members.len() as f64;
            }
        }
    }
}

/// Isotropic Gaussian blobs: `sizes[i]` points around `centers[i]`.
pub fn blobs(r: &mut impl Rng, centers: &[Vec<f64>], sizes: &[usize], sigma: f64) -> Vec<Vec<f32>> {
    let mut out = Vec::new();
    for (c, &n) in centers.iter().zip(sizes) {
        for _ in 0..n {
            out.push(c.iter().map(|&x| (x + sigma * normal(r)) as f32).collect());
        }
    }
    out
}

// ---------------------------------------------------------------- misc

pub fn read_lines(path: &Path) -> Vec<serde_json::Value> {
    std::fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()))
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

pub fn seed_labels(path: &Path) -> HashMap<String, String> {
    read_lines(path)
        .into_iter()
        .map(|v| (v["id"].as_str().unwrap().to_owned(), v["label"].as_str().unwrap().to_owned()))
        .collect()
}
