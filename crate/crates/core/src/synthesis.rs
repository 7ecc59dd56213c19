//! Dataset synthesis: renders one task-inversion prompt per (seed, document)
//! pair — or per FewGen draw — and collects teacher completions with bounded
//! concurrency and order-restored assembly.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{LabelSet, SeedExample};
use crate::error::{Error, Result};
use crate::icl::{sample_icl_shots, sample_shots_for_label, IclPair, RetrievedTriplet};
use crate::llm::{complete_with_policy, Completion, GenerationParams, LlmClient, LlmError, ResponseCache, RetryPolicy};
use crate::prompt::{render_prompt, PromptMode, Shots, TaskTemplates};
use crate::tokenize::{truncate_document, Tokenizer};

pub const DEFAULT_MAX_DOC_TOKENS: usize = 500;
pub const DEFAULT_FEWGEN_SHOTS: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticExample {
    pub text: String,
    pub label: String,
    pub seed_id: String,
    pub doc_id: Option<String>,
    pub prompt_hash: String,
    pub draw_index: u64,
}

/// A generation that produced no example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub seed_id: String,
    pub doc_id: Option<String>,
    pub error_kind: String,
    pub attempts: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SynthesisOutput {
    pub examples: Vec<SyntheticExample>,
    pub failures: Vec<Failure>,
}

/// Knobs shared by every synthesis entry point.
#[derive(Debug, Clone)]
pub struct SynthesisConfig {
    pub params: GenerationParams,
    pub retry: RetryPolicy,
    pub n_shots: usize,
    /// Draw shots only from the target label's demonstrations.
    pub match_label: bool,
    /// Documents (query and shot) are cut to this many tokens; `None` keeps
    /// them whole.
    pub max_doc_tokens: Option<usize>,
    pub tokenizer: Tokenizer,
    pub max_in_flight: usize,
    pub rng_seed: u64,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            params: GenerationParams::default(),
            retry: RetryPolicy::default(),
            n_shots: 0,
            match_label: false,
            max_doc_tokens: Some(DEFAULT_MAX_DOC_TOKENS),
            tokenizer: Tokenizer::unicode_word(),
            max_in_flight: 8,
            rng_seed: 0,
        }
    }
}

impl SynthesisConfig {
    fn truncate(&self, text: &str) -> String {
        match self.max_doc_tokens {
            Some(n) => truncate_document(text, n, &self.tokenizer),
            None => text.to_owned(),
        }
    }

    /// Sampling parameters for one draw; the per-draw seed keeps repeated
    /// prompts (FewGen) distinct in the response cache.
    pub fn params_for(&self, draw_index: u64) -> GenerationParams {
        self.params.with_seed(mix64(self.rng_seed ^ mix64(draw_index)))
    }
}

/// Where per-generation demonstrations come from.
#[derive(Debug, Clone, Copy)]
pub enum ShotPool<'a> {
    /// (document, exemplar) pairs for retrieval-augmented in-context learning.
    Retricl(&'a [IclPair]),
    /// Seed exemplars without documents.
    NonRetricl(&'a [SeedExample]),
}

/// One rendered request, before it is sent.
#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub seed_id: String,
    pub doc_id: Option<String>,
    pub label: String,
    pub prompt: String,
    pub params: GenerationParams,
    pub draw_index: u64,
}

impl Job {
    pub fn prompt_hash(&self) -> String {
        prompt_hash(&self.prompt, &self.params)
    }
}

/// Content hash of an exact prompt plus its sampling parameters.
pub fn prompt_hash(prompt: &str, params: &GenerationParams) -> String {
    let mut h = Sha256::new();
    h.update(prompt.as_bytes());
    h.update([0u8]);
    h.update(serde_json::to_vec(params).expect("params serialize"));
    hex::encode(h.finalize())
}

fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Renders the prompts for every (triplet, document) pair in triplet order,
/// then document order. `draw_index` is the pair's position in that order.
pub fn plan_synthesis(
    triplets: &[RetrievedTriplet],
    pool: ShotPool<'_>,
    templates: &TaskTemplates,
    cfg: &SynthesisConfig,
) -> Result<Vec<Job>> {
    let (mode, available) = match pool {
        ShotPool::Retricl(p) => (PromptMode::Retricl, p.len()),
        ShotPool::NonRetricl(p) => (PromptMode::NonRetricl, p.len()),
    };
    if cfg.n_shots > available {
        return Err(Error::NotEnoughShots {
            requested: cfg.n_shots,
            available,
        });
    }
    let template = templates.template(mode);
    let mut jobs = Vec::new();
    let mut draw_index = 0u64;
    for triplet in triplets {
        for doc in &triplet.docs {
            let doc_text = cfg.truncate(&doc.text);
            let prompt = match pool {
                ShotPool::Retricl(pairs) => {
                    let shots = if cfg.match_label {
                        let same: Vec<IclPair> =
                            pairs.iter().filter(|p| p.label == triplet.label).cloned().collect();
                        sample_icl_shots(&same, cfg.n_shots, cfg.rng_seed, draw_index)?
                    } else {
                        sample_icl_shots(pairs, cfg.n_shots, cfg.rng_seed, draw_index)?
                    };
                    let shots: Vec<IclPair> = shots
                        .into_iter()
                        .map(|p| IclPair {
                            doc_text: cfg.truncate(&p.doc_text),
                            ..p
                        })
                        .collect();
                    render_prompt(
                        mode,
                        template,
                        &templates.verbalizer,
                        &triplet.label,
                        Some(&doc_text),
                        Shots::Icl(&shots),
                    )?
                }
                ShotPool::NonRetricl(seeds) => {
                    let shots = if cfg.match_label {
                        sample_shots_for_label(seeds, &triplet.label, cfg.n_shots, cfg.rng_seed, draw_index)?
                    } else {
                        sample_icl_shots(seeds, cfg.n_shots, cfg.rng_seed, draw_index)?
                    };
                    render_prompt(
                        mode,
                        template,
                        &templates.verbalizer,
                        &triplet.label,
                        Some(&doc_text),
                        Shots::Seeds(&shots),
                    )?
                }
            };
            jobs.push(Job {
                seed_id: triplet.seed_id.clone(),
                doc_id: Some(doc.doc_id.clone()),
                label: triplet.label.clone(),
                prompt,
                params: cfg.params_for(draw_index),
                draw_index,
            });
            draw_index += 1;
        }
    }
    Ok(jobs)
}

/// Renders `m` FewGen prompts: `m / C` per label, with the remainder handed
/// out one each to the first labels in declaration order. Jobs are ordered
/// label by label.
pub fn plan_fewgen(
    labels: &LabelSet,
    m: usize,
    seeds: &[SeedExample],
    templates: &TaskTemplates,
    cfg: &SynthesisConfig,
) -> Result<Vec<Job>> {
    if cfg.n_shots > seeds.len() {
        return Err(Error::NotEnoughShots {
            requested: cfg.n_shots,
            available: seeds.len(),
        });
    }
    let per_label = fewgen_counts(labels.len(), m);
    let mut jobs = Vec::with_capacity(m);
    let mut draw_index = 0u64;
    for (label, count) in labels.iter().zip(per_label) {
        for _ in 0..count {
            let shots = if cfg.match_label {
                sample_shots_for_label(seeds, label, cfg.n_shots, cfg.rng_seed, draw_index)?
            } else {
                sample_icl_shots(seeds, cfg.n_shots, cfg.rng_seed, draw_index)?
            };
            let prompt = render_prompt(
                PromptMode::Fewgen,
                &templates.fewgen,
                &templates.verbalizer,
                label,
                None,
                Shots::Seeds(&shots),
            )?;
            jobs.push(Job {
                seed_id: format!("fewgen:{label}"),
                doc_id: None,
                label: label.to_owned(),
                prompt,
                params: cfg.params_for(draw_index),
                draw_index,
            });
            draw_index += 1;
        }
    }
    Ok(jobs)
}

/// Examples per label when `m` draws are spread over `classes` labels.
pub fn fewgen_counts(classes: usize, m: usize) -> Vec<usize> {
    if classes == 0 {
        return Vec::new();
    }
    (0..classes)
        .map(|i| m / classes + usize::from(i < m % classes))
        .collect()
}

/// Sends every job with at most `max_in_flight` outstanding requests. Results
/// come back in job order regardless of completion order.
pub fn run_jobs(
    llm: &dyn LlmClient,
    cache: Option<&ResponseCache>,
    retry: &RetryPolicy,
    max_in_flight: usize,
    jobs: &[Job],
) -> Vec<Result<Completion, LlmError>> {
    let workers = max_in_flight.max(1).min(jobs.len());
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<Completion, LlmError>>>> =
        Mutex::new((0..jobs.len()).map(|_| None).collect());
    thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                let result = complete_with_policy(llm, cache, &job.prompt, &job.params, retry);
                slots.lock().expect("result slots poisoned")[i] = Some(result);
            });
        }
    });
    slots
        .into_inner()
        .expect("result slots poisoned")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}

/// Splits completions into examples and failures. Empty post-processed
/// completions are failures of kind `empty_completion`, so
/// `examples + failures == jobs` always holds.
pub fn collect(jobs: Vec<Job>, results: Vec<Result<Completion, LlmError>>) -> SynthesisOutput {
    let mut out = SynthesisOutput::default();
    for (job, result) in jobs.into_iter().zip(results) {
        let hash = job.prompt_hash();
        match result {
            Ok(c) if !c.text.is_empty() => out.examples.push(SyntheticExample {
                text: c.text,
                label: job.label,
                seed_id: job.seed_id,
                doc_id: job.doc_id,
                prompt_hash: hash,
                draw_index: job.draw_index,
            }),
            Ok(c) => out.failures.push(Failure {
                seed_id: job.seed_id,
                doc_id: job.doc_id,
                error_kind: "empty_completion".into(),
                attempts: c.attempts,
            }),
            Err(e) => {
                log::warn!("generation {} for seed {} failed: {e}", job.draw_index, job.seed_id);
                out.failures.push(Failure {
                    seed_id: job.seed_id,
                    doc_id: job.doc_id,
                    error_kind: e.kind().into(),
                    attempts: e.attempts(),
                })
            }
        }
    }
    out
}

/// One generation per (triplet, document) pair, with shots drawn from `pool`.
pub fn synthesize_dataset(
    triplets: &[RetrievedTriplet],
    pool: ShotPool<'_>,
    templates: &TaskTemplates,
    llm: &dyn LlmClient,
    cache: Option<&ResponseCache>,
    cfg: &SynthesisConfig,
) -> Result<SynthesisOutput> {
    let jobs = plan_synthesis(triplets, pool, templates, cfg)?;
    let results = run_jobs(llm, cache, &cfg.retry, cfg.max_in_flight, &jobs);
    Ok(collect(jobs, results))
}

/// The FewGen baseline: `m` label-conditioned generations with shots drawn
/// from the seed set.
pub fn fewgen_dataset(
    labels: &LabelSet,
    m: usize,
    seeds: &[SeedExample],
    templates: &TaskTemplates,
    llm: &dyn LlmClient,
    cache: Option<&ResponseCache>,
    cfg: &SynthesisConfig,
) -> Result<SynthesisOutput> {
    let jobs = plan_fewgen(labels, m, seeds, templates, cfg)?;
    let results = run_jobs(llm, cache, &cfg.retry, cfg.max_in_flight, &jobs);
    Ok(collect(jobs, results))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::icl::TripletDoc;
    use crate::llm::MockLlm;

    fn triplet(seed: &str, label: &str, n: usize) -> RetrievedTriplet {
        RetrievedTriplet {
            seed_id: seed.into(),
            label: label.into(),
            docs: (0..n)
                .map(|i| TripletDoc {
                    doc_id: format!("{seed}-d{i}"),
                    score: 0.5,
                    text: format!("document {i} for {seed}"),
                })
                .collect(),
        }
    }

    #[test]
    fn fewgen_remainder_goes_to_first_labels() {
        assert_eq!(fewgen_counts(2, 4), vec![2, 2]);
        assert_eq!(fewgen_counts(3, 7), vec![3, 2, 2]);
        assert_eq!(fewgen_counts(4, 0), vec![0, 0, 0, 0]);
    }

    #[test]
    fn one_example_per_doc_in_order() {
        let templates = TaskTemplates::builtin("polarity").unwrap();
        let triplets = vec![triplet("s1", "positive", 2), triplet("s2", "negative", 3)];
        let out = synthesize_dataset(
            &triplets,
            ShotPool::Retricl(&[]),
            &templates,
            &MockLlm::new(1),
            None,
            &SynthesisConfig::default(),
        )
        .unwrap();
        assert_eq!(out.examples.len(), 5);
        assert!(out.failures.is_empty());
        let labels: Vec<_> = out.examples.iter().map(|e| e.label.as_str()).collect();
        assert_eq!(labels, ["positive", "positive", "negative", "negative", "negative"]);
        let draws: Vec<_> = out.examples.iter().map(|e| e.draw_index).collect();
        assert_eq!(draws, [0, 1, 2, 3, 4]);
    }

    #[test]
    fn too_few_shots_is_an_error() {
        let templates = TaskTemplates::builtin("polarity").unwrap();
        let cfg = SynthesisConfig {
            n_shots: 2,
            ..SynthesisConfig::default()
        };
        let err = plan_synthesis(&[triplet("s", "positive", 1)], ShotPool::Retricl(&[]), &templates, &cfg)
            .unwrap_err();
        assert!(matches!(err, Error::NotEnoughShots { requested: 2, available: 0 }));
    }

    #[test]
    fn concurrency_does_not_change_output() {
        let templates = TaskTemplates::builtin("polarity").unwrap();
        let triplets: Vec<_> = (0..6).map(|i| triplet(&format!("s{i}"), "negative", 4)).collect();
        let run = |max_in_flight| {
            let cfg = SynthesisConfig {
                max_in_flight,
                ..SynthesisConfig::default()
            };
            synthesize_dataset(&triplets, ShotPool::Retricl(&[]), &templates, &MockLlm::new(3), None, &cfg).unwrap()
        };
        assert_eq!(run(1), run(7));
    }
}
