//! Seed-set bootstrap: grows a labelled seed set from FewGen generations
//! when no human-written exemplars exist.

use std::collections::HashSet;

use crate::corpus::{LabelSet, SeedExample, SeedSet};
use crate::error::{Error, Result};
use crate::icl::sample_shots_for_label;
use crate::llm::{GenerationParams, LlmClient, ResponseCache};
use crate::prompt::{render_prompt, PromptMode, Shots, TaskTemplates};
use crate::synthesis::{run_jobs, Job, SynthesisConfig};

pub const DEFAULT_PER_CLASS_BINARY: usize = 100;
pub const DEFAULT_PER_CLASS_MULTICLASS: usize = 50;
pub const DEFAULT_GOLD_SHOTS: usize = 3;

/// Default seeds per class: 100 for binary tasks, 50 otherwise.
pub fn default_per_class(classes: usize) -> usize {
    if classes <= 2 {
        DEFAULT_PER_CLASS_BINARY
    } else {
        DEFAULT_PER_CLASS_MULTICLASS
    }
}

#[derive(Debug, Clone)]
pub struct BootstrapConfig {
    pub per_class: usize,
    /// Same-class gold exemplars shown in each prompt; 0 is pure zero-shot.
    pub gold_shots_per_class: usize,
    /// Generations tried per class before giving up on reaching `per_class`
    /// unique texts.
    pub max_attempts_per_class: usize,
    pub synthesis: SynthesisConfig,
}

impl BootstrapConfig {
    pub fn new(per_class: usize) -> Self {
        Self {
            per_class,
            gold_shots_per_class: DEFAULT_GOLD_SHOTS,
            max_attempts_per_class: per_class.saturating_mul(10).max(10),
            synthesis: SynthesisConfig {
                params: GenerationParams::bootstrap(),
                ..SynthesisConfig::default()
            },
        }
    }
}

/// Runs FewGen per class until `per_class` non-empty, unique generations are
/// collected. Ids are `boot-<label>-<n>`.
pub fn bootstrap_seed(
    labels: &LabelSet,
    gold: &[SeedExample],
    templates: &TaskTemplates,
    llm: &dyn LlmClient,
    cache: Option<&ResponseCache>,
    cfg: &BootstrapConfig,
) -> Result<SeedSet> {
    if cfg.per_class == 0 {
        return Err(Error::Invalid("bootstrap per_class must be at least 1".into()));
    }
    let syn = &cfg.synthesis;
    let mut seen = HashSet::new();
    let mut examples = Vec::with_capacity(cfg.per_class * labels.len());
    let mut draw_index = 0u64;
    for label in labels.iter() {
        let mut kept = 0usize;
        let mut attempts = 0usize;
        while kept < cfg.per_class {
            let round = (cfg.per_class - kept).min(cfg.max_attempts_per_class - attempts);
            if round == 0 {
                return Err(Error::Bootstrap {
                    label: label.to_owned(),
                    attempts,
                    reason: format!("only {kept} unique generations"),
                });
            }
            let mut jobs = Vec::with_capacity(round);
            for _ in 0..round {
                let shots =
                    sample_shots_for_label(gold, label, cfg.gold_shots_per_class, syn.rng_seed, draw_index)?;
                let prompt = render_prompt(
                    PromptMode::Fewgen,
                    &templates.fewgen,
                    &templates.verbalizer,
                    label,
                    None,
                    Shots::Seeds(&shots),
                )?;
                jobs.push(Job {
                    seed_id: format!("boot:{label}"),
                    doc_id: None,
                    label: label.to_owned(),
                    prompt,
                    params: syn.params_for(draw_index),
                    draw_index,
                });
                draw_index += 1;
            }
            for result in run_jobs(llm, cache, &syn.retry, syn.max_in_flight, &jobs) {
                attempts += 1;
                let completion = result.map_err(|e| Error::Bootstrap {
                    label: label.to_owned(),
                    attempts,
                    reason: e.to_string(),
                })?;
                if kept < cfg.per_class && !completion.text.is_empty() && seen.insert(completion.text.clone()) {
                    examples.push(SeedExample {
                        id: format!("boot-{label}-{kept}"),
                        text: completion.text,
                        label: label.to_owned(),
                    });
                    kept += 1;
                }
            }
        }
    }
    SeedSet::new(examples, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{LlmError, MockLlm};

    #[test]
    fn two_classes_three_each() {
        let templates = TaskTemplates::builtin("sst2").unwrap();
        let labels = templates.verbalizer.label_set();
        let cfg = BootstrapConfig {
            gold_shots_per_class: 0,
            ..BootstrapConfig::new(3)
        };
        let seeds = bootstrap_seed(&labels, &[], &templates, &MockLlm::new(5), None, &cfg).unwrap();
        assert_eq!(seeds.len(), 6);
        let texts: HashSet<_> = seeds.examples().iter().map(|s| &s.text).collect();
        assert_eq!(texts.len(), 6);
        assert!(seeds.examples().iter().all(|s| s.id.starts_with("boot-")));
        assert!(seeds.examples().iter().all(|s| s.text.starts_with("gen-")));
    }

    #[test]
    fn zero_per_class_rejected() {
        let templates = TaskTemplates::builtin("sst2").unwrap();
        let labels = templates.verbalizer.label_set();
        assert!(bootstrap_seed(&labels, &[], &templates, &MockLlm::new(0), None, &BootstrapConfig::new(0)).is_err());
    }

    struct Constant;
    impl LlmClient for Constant {
        fn complete(&self, _: &str, _: &GenerationParams) -> std::result::Result<String, LlmError> {
            Ok("same".into())
        }
        fn model(&self) -> &str {
            "constant"
        }
    }

    #[test]
    fn duplicates_exhaust_attempt_budget() {
        let templates = TaskTemplates::builtin("sst2").unwrap();
        let labels = templates.verbalizer.label_set();
        let cfg = BootstrapConfig {
            gold_shots_per_class: 0,
            max_attempts_per_class: 5,
            ..BootstrapConfig::new(2)
        };
        let err = bootstrap_seed(&labels, &[], &templates, &Constant, None, &cfg).unwrap_err();
        assert!(matches!(err, Error::Bootstrap { attempts: 5, .. }), "{err}");
    }
}
