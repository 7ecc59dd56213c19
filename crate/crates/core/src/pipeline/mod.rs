//! Staged, resumable orchestration of the whole workflow. Each stage reads
//! its inputs from configured files or earlier stages' artifacts, writes its
//! own artifacts atomically into the output directory and records content
//! hashes in `manifest.json`; rerunning a stage whose inputs are unchanged
//! does nothing.

pub mod config;
pub mod manifest;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde_json::json;

use crate::bootstrap::{bootstrap_seed, default_per_class, BootstrapConfig};
use crate::cartography::{ambiguity_filter, compute_data_map, example_id, read_dynamics, DataMapPoint};
use crate::corpus::{Corpus, SeedSet};
use crate::error::{Error, Result};
use crate::icl::{build_retricl, content_source, IclPair, RankedHits, RetrievedTriplet, Retriever, SourcingParams};
use crate::jsonl::{read_jsonl, write_atomic, write_jsonl};
use crate::llm::{HttpLlm, LlmClient, MockLlm, MockStyle, ResponseCache, RetryPolicy, Throttle, Throttled};
use crate::metrics::{
    entity_metrics, label_preservation, mauve_score, read_entities, self_bleu, HttpClassifier, MauveParams,
    MetricReport, SelfBleuParams,
};
use crate::prompt::{PromptMode, TaskTemplates};
use crate::retrieval::{
    build_dense_index, build_sparse_index, read_embeddings, write_embeddings_binary, Bm25Params, Embeddings,
    SparseIndex,
};
use crate::synthesis::{fewgen_dataset, synthesize_dataset, ShotPool, SynthesisConfig, SynthesisOutput, SyntheticExample};
use crate::tokenize::Tokenizer;

pub use config::{LlmProvider, Overrides, RetrievalMode, RunConfig};
pub use manifest::{hash_bytes, hash_file, Manifest, RunLock, StageRecord};

/// Artifact paths, relative to the output directory.
pub mod artifacts {
    pub const SPARSE_INDEX: &str = "index/sparse.json";
    pub const DENSE_INDEX: &str = "index/dense.bin";
    pub const TRIPLETS: &str = "triplets.jsonl";
    pub const RETRIEVED: &str = "retrieved.jsonl";
    pub const ICL_POOL: &str = "icl_pool.jsonl";
    pub const DATASET: &str = "dataset.jsonl";
    pub const FAILURES: &str = "failures.jsonl";
    pub const BOOTSTRAP_SEEDS: &str = "seeds.bootstrap.jsonl";
    pub const REPORT: &str = "report.json";
    pub const DATAMAP: &str = "datamap.jsonl";
    pub const FILTERED: &str = "dataset.filtered.jsonl";
    pub const CACHE: &str = "cache/responses.jsonl";
    pub const CONFIG_ECHO: &str = "run_config.toml";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Index,
    Source,
    Icl,
    Synthesize,
    Fewgen,
    Bootstrap,
    Evaluate,
    Datamap,
    Filter,
    All,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::Index,
        Stage::Source,
        Stage::Icl,
        Stage::Synthesize,
        Stage::Fewgen,
        Stage::Bootstrap,
        Stage::Evaluate,
        Stage::Datamap,
        Stage::Filter,
        Stage::All,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Index => "index",
            Stage::Source => "source",
            Stage::Icl => "icl",
            Stage::Synthesize => "synthesize",
            Stage::Fewgen => "fewgen",
            Stage::Bootstrap => "bootstrap",
            Stage::Evaluate => "evaluate",
            Stage::Datamap => "datamap",
            Stage::Filter => "filter",
            Stage::All => "all",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown stage `{s}`")))
    }
}

/// What one stage did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageReport {
    pub stage: Stage,
    /// Inputs were unchanged since the last run, so nothing was redone.
    pub skipped: bool,
    pub outputs: Vec<PathBuf>,
    pub notes: Vec<String>,
}

enum Input {
    File { name: String, path: PathBuf },
    Artifact { rel: &'static str, from: Stage },
}

struct Produced {
    outputs: Vec<&'static str>,
    notes: Vec<String>,
}

pub struct Pipeline {
    cfg: RunConfig,
    templates: TaskTemplates,
    llm: Arc<dyn LlmClient>,
    no_cache: bool,
}

impl Pipeline {
    /// Builds the teacher client named by `cfg.llm`.
    pub fn new(cfg: RunConfig, no_cache: bool) -> Result<Self> {
        let llm: Arc<dyn LlmClient> = match cfg.llm.provider {
            LlmProvider::Mock => {
                let style = if cfg.llm.mock_style == "remix" {
                    MockStyle::Remix
                } else {
                    MockStyle::Hash
                };
                Arc::new(MockLlm::with_style(cfg.llm.mock_seed, style))
            }
            LlmProvider::Http => {
                let base = cfg.llm.base_url.clone().expect("validated");
                let model = cfg.llm.model.clone().expect("validated");
                let client = match &cfg.llm.api_key_env {
                    Some(var) => HttpLlm::from_env(base, model, var),
                    None => HttpLlm::new(base, model, None),
                };
                let throttle = Arc::new(Throttle::new(cfg.llm.rpm, cfg.llm.max_in_flight));
                Arc::new(Throttled::new(client, throttle))
            }
        };
        Ok(Self {
            templates: cfg.templates()?,
            cfg,
            llm,
            no_cache,
        })
    }

    pub fn from_file(path: impl AsRef<Path>, overrides: &Overrides, no_cache: bool) -> Result<Self> {
        Self::new(RunConfig::load(path, overrides)?, no_cache)
    }

    /// Replaces the teacher client (the response cache still applies).
    pub fn with_llm(mut self, llm: Arc<dyn LlmClient>) -> Self {
        self.llm = llm;
        self
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn output_dir(&self) -> &Path {
        &self.cfg.output_dir
    }

    fn out(&self, rel: &str) -> PathBuf {
        self.cfg.output_dir.join(rel)
    }

    /// The stages `all` expands to for this configuration.
    pub fn plan(&self) -> Vec<Stage> {
        let mut plan = Vec::new();
        if self.cfg.data.seeds.is_none() {
            plan.push(Stage::Bootstrap);
        }
        match self.cfg.synthesis.mode {
            PromptMode::Fewgen => plan.push(Stage::Fewgen),
            PromptMode::Retricl => plan.extend([Stage::Index, Stage::Source, Stage::Icl, Stage::Synthesize]),
            PromptMode::NonRetricl => plan.extend([Stage::Index, Stage::Source, Stage::Synthesize]),
        }
        plan.push(Stage::Evaluate);
        if self.cfg.cartography.dynamics.is_some() {
            plan.extend([Stage::Datamap, Stage::Filter]);
        }
        plan
    }

    /// Runs `stage` (or every planned stage for [`Stage::All`]) while holding
    /// the output directory's lock.
    pub fn run(&self, stage: Stage) -> Result<Vec<StageReport>> {
        let out = &self.cfg.output_dir;
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let _lock = RunLock::acquire(out)?;
        write_atomic(self.out(artifacts::CONFIG_ECHO), self.cfg.normalized().as_bytes())?;
        let mut manifest = Manifest::load(out)?;
        let stages = if stage == Stage::All { self.plan() } else { vec![stage] };
        let mut reports = Vec::with_capacity(stages.len());
        for st in stages {
            let report = self.run_one(st, &mut manifest)?;
            for note in &report.notes {
                log::debug!("{st}: {note}");
            }
            reports.push(report);
        }
        Ok(reports)
    }

    fn run_one(&self, stage: Stage, m: &mut Manifest) -> Result<StageReport> {
        match stage {
            Stage::Index => self.index(m),
            Stage::Source => self.source(m),
            Stage::Icl => self.icl(m),
            Stage::Synthesize if self.cfg.synthesis.mode == PromptMode::Fewgen => self.fewgen(m, Stage::Synthesize),
            Stage::Synthesize => self.synthesize(m),
            Stage::Fewgen => self.fewgen(m, Stage::Fewgen),
            Stage::Bootstrap => self.bootstrap(m),
            Stage::Evaluate => self.evaluate(m),
            Stage::Datamap => self.datamap(m),
            Stage::Filter => self.filter(m),
            Stage::All => unreachable!("expanded by run"),
        }
    }

    fn execute(
        &self,
        m: &mut Manifest,
        stage: Stage,
        inputs: Vec<Input>,
        fingerprint: serde_json::Value,
        force: bool,
        body: impl FnOnce() -> Result<Produced>,
    ) -> Result<StageReport> {
        let out = &self.cfg.output_dir;
        let mut hashes = BTreeMap::new();
        for input in inputs {
            match input {
                Input::File { name, path } => {
                    hashes.insert(name, hash_file(&path)?);
                }
                Input::Artifact { rel, from } => {
                    let path = out.join(rel);
                    if !path.is_file() {
                        return Err(Error::MissingArtifact {
                            stage: stage.to_string(),
                            path,
                            run_first: from.to_string(),
                        });
                    }
                    hashes.insert(rel.to_owned(), hash_file(&path)?);
                }
            }
        }
        let key = stage_key(stage, &self.cfg.synthesis.mode);
        let fingerprint = hash_bytes(&serde_json::to_vec(&fingerprint).expect("fingerprint serializes"));
        if !force && m.is_current(key, &fingerprint, &hashes, out) {
            let outputs = m.stages[key].outputs.keys().map(|r| out.join(r)).collect();
            return Ok(StageReport {
                stage,
                skipped: true,
                outputs,
                notes: vec!["inputs unchanged; nothing to do".into()],
            });
        }
        let produced = body()?;
        let mut outputs = BTreeMap::new();
        for rel in &produced.outputs {
            outputs.insert((*rel).to_owned(), hash_file(&out.join(rel))?);
        }
        m.stages.insert(
            key.to_owned(),
            StageRecord {
                fingerprint,
                inputs: hashes,
                outputs,
            },
        );
        m.save(out)?;
        Ok(StageReport {
            stage,
            skipped: false,
            outputs: produced.outputs.iter().map(|r| out.join(r)).collect(),
            notes: produced.notes,
        })
    }

    fn file(name: &str, path: &Path) -> Input {
        Input::File {
            name: name.to_owned(),
            path: path.to_owned(),
        }
    }

    fn corpus_path(&self) -> &Path {
        self.cfg.data.corpus.as_deref().expect("validated: corpus set outside fewgen mode")
    }

    fn seeds_input(&self) -> Input {
        match &self.cfg.data.seeds {
            Some(p) => Self::file("seeds", p),
            None => Input::Artifact {
                rel: artifacts::BOOTSTRAP_SEEDS,
                from: Stage::Bootstrap,
            },
        }
    }

    fn load_seeds(&self) -> Result<SeedSet> {
        let labels = self.templates.verbalizer.label_set();
        match &self.cfg.data.seeds {
            Some(p) => SeedSet::from_jsonl(p, &labels),
            None => SeedSet::from_jsonl(self.out(artifacts::BOOTSTRAP_SEEDS), &labels),
        }
    }

    /// Template files that affect prompts for `mode`, as hashed inputs.
    fn template_inputs(&self, mode: PromptMode) -> Vec<Input> {
        let mut inputs = Vec::new();
        if let Some(dir) = &self.cfg.data.templates {
            inputs.push(Self::file("templates.verbalizer", &dir.join("verbalizer.toml")));
            inputs.push(Self::file("templates.mode", &dir.join(format!("{mode}.toml"))));
        }
        if let Some(v) = &self.cfg.data.verbalizer {
            inputs.push(Self::file("verbalizer", v));
        }
        inputs
    }

    fn retriever_fingerprint(&self) -> serde_json::Value {
        let r = &self.cfg.retrieval;
        json!({"mode": r.mode, "k1": r.k1, "b": r.b, "tokenizer": r.tokenizer})
    }

    fn llm_fingerprint(&self) -> serde_json::Value {
        let l = &self.cfg.llm;
        json!({
            "model": self.llm.model(),
            "provider": l.provider,
            "base_url": l.base_url,
            "mock_seed": l.mock_seed,
            "mock_style": l.mock_style,
        })
    }

    fn index(&self, m: &mut Manifest) -> Result<StageReport> {
        let r = &self.cfg.retrieval;
        let mut inputs = vec![Self::file("corpus", self.corpus_path())];
        if let Some(vocab) = &r.tokenizer.vocab_path {
            inputs.push(Self::file("vocab", vocab));
        }
        if r.mode == RetrievalMode::Dense {
            inputs.push(Self::file("embeddings", r.embeddings.as_deref().expect("validated")));
        }
        self.execute(m, Stage::Index, inputs, self.retriever_fingerprint(), false, || {
            let corpus = Corpus::from_jsonl(self.corpus_path())?;
            match r.mode {
                RetrievalMode::Sparse => {
                    let index = build_sparse_index(&corpus, Bm25Params { k1: r.k1, b: r.b }, &r.tokenizer)?;
                    index.save(self.out(artifacts::SPARSE_INDEX))?;
                    Ok(Produced {
                        outputs: vec![artifacts::SPARSE_INDEX],
                        notes: vec![format!("BM25 index over {} documents", index.doc_count())],
                    })
                }
                RetrievalMode::Dense => {
                    let emb = read_embeddings(r.embeddings.as_deref().expect("validated"))?;
                    let index = build_dense_index(&corpus, &emb)?;
                    let normalized = Embeddings::new(
                        index
                            .ids()
                            .iter()
                            .map(|id| (id.clone(), index.vector(id).expect("indexed id").to_vec()))
                            .collect(),
                    )?;
                    let path = self.out(artifacts::DENSE_INDEX);
                    if let Some(dir) = path.parent() {
                        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                    }
                    write_embeddings_binary(&path, &normalized)?;
                    Ok(Produced {
                        outputs: vec![artifacts::DENSE_INDEX],
                        notes: vec![format!("dense index of {} × {}", index.len(), index.dim())],
                    })
                }
            }
        })
    }

    fn source(&self, m: &mut Manifest) -> Result<StageReport> {
        let r = &self.cfg.retrieval;
        let index_rel = match r.mode {
            RetrievalMode::Sparse => artifacts::SPARSE_INDEX,
            RetrievalMode::Dense => artifacts::DENSE_INDEX,
        };
        let mut inputs = vec![
            Self::file("corpus", self.corpus_path()),
            self.seeds_input(),
            Input::Artifact {
                rel: index_rel,
                from: Stage::Index,
            },
        ];
        if r.mode == RetrievalMode::Dense {
            inputs.push(Self::file("query_embeddings", r.query_embeddings.as_deref().expect("validated")));
        }
        let fp = json!({
            "retriever": self.retriever_fingerprint(),
            "k_retrieve": r.k_retrieve,
            "k_expand": r.k_expand,
            "band": r.band,
            "rng_seed": self.cfg.rng_seed,
        });
        self.execute(m, Stage::Source, inputs, fp, false, || {
            let corpus = Corpus::from_jsonl(self.corpus_path())?;
            let seeds = self.load_seeds()?;
            let params = SourcingParams {
                k_retrieve: r.k_retrieve,
                k_expand: r.k_expand,
                band: r.band,
                rng_seed: self.cfg.rng_seed,
            };
            let sourcing = match r.mode {
                RetrievalMode::Sparse => {
                    let index = SparseIndex::load(self.out(artifacts::SPARSE_INDEX))?;
                    content_source(&seeds, &corpus, &Retriever::Sparse(&index), &params)?
                }
                RetrievalMode::Dense => {
                    let stored = read_embeddings(self.out(artifacts::DENSE_INDEX))?;
                    let index = build_dense_index(&corpus, &stored)?;
                    let queries = read_embeddings(r.query_embeddings.as_deref().expect("validated"))?;
                    content_source(
                        &seeds,
                        &corpus,
                        &Retriever::Dense {
                            index: &index,
                            queries: &queries,
                        },
                        &params,
                    )?
                }
            };
            write_jsonl(self.out(artifacts::TRIPLETS), &sourcing.triplets)?;
            write_jsonl(self.out(artifacts::RETRIEVED), &sourcing.rankings)?;
            let docs: usize = sourcing.triplets.iter().map(|t| t.docs.len()).sum();
            let mut notes = vec![format!("{} seeds, {docs} grounding documents", sourcing.triplets.len())];
            notes.extend(sourcing.warnings);
            Ok(Produced {
                outputs: vec![artifacts::TRIPLETS, artifacts::RETRIEVED],
                notes,
            })
        })
    }

    fn icl(&self, m: &mut Manifest) -> Result<StageReport> {
        let r = &self.cfg.retrieval;
        let inputs = vec![
            Self::file("corpus", self.corpus_path()),
            self.seeds_input(),
            Input::Artifact {
                rel: artifacts::RETRIEVED,
                from: Stage::Source,
            },
        ];
        let fp = json!({"band": r.band, "top_m": r.top_m});
        self.execute(m, Stage::Icl, inputs, fp, false, || {
            let corpus = Corpus::from_jsonl(self.corpus_path())?;
            let seeds = self.load_seeds()?;
            let rankings: Vec<RankedHits> = read_values(&self.out(artifacts::RETRIEVED))?;
            let band = match r.mode {
                RetrievalMode::Dense => r.band,
                RetrievalMode::Sparse => None,
            };
            let pool = build_retricl(&seeds, &rankings, &corpus, band, r.top_m)?;
            write_jsonl(self.out(artifacts::ICL_POOL), &pool)?;
            Ok(Produced {
                outputs: vec![artifacts::ICL_POOL],
                notes: vec![format!("{} demonstration pairs", pool.len())],
            })
        })
    }

    fn synthesis_config(&self, params: crate::llm::GenerationParams) -> Result<SynthesisConfig> {
        Ok(SynthesisConfig {
            params,
            retry: RetryPolicy::default(),
            n_shots: self.cfg.synthesis.n_shots,
            match_label: self.cfg.synthesis.match_label,
            max_doc_tokens: Some(self.cfg.synthesis.max_doc_tokens),
            tokenizer: Tokenizer::new(&self.cfg.retrieval.tokenizer)?,
            max_in_flight: self.cfg.llm.max_in_flight,
            rng_seed: self.cfg.rng_seed,
        })
    }

    fn cache(&self) -> Result<Option<ResponseCache>> {
        if self.no_cache {
            return Ok(None);
        }
        let path = self.out(artifacts::CACHE);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        ResponseCache::open(path).map(Some)
    }

    fn synthesis_fingerprint(&self) -> serde_json::Value {
        let s = &self.cfg.synthesis;
        json!({
            "task": self.cfg.task,
            "mode": s.mode,
            "n_shots": s.n_shots,
            "match_label": s.match_label,
            "max_doc_tokens": s.max_doc_tokens,
            "fewgen_m": s.fewgen_m,
            "tokenizer": self.cfg.retrieval.tokenizer,
            "generation": self.cfg.generation,
            "llm": self.llm_fingerprint(),
            "rng_seed": self.cfg.rng_seed,
        })
    }

    fn write_dataset(&self, out: SynthesisOutput) -> Result<Produced> {
        write_jsonl(self.out(artifacts::DATASET), &out.examples)?;
        write_jsonl(self.out(artifacts::FAILURES), &out.failures)?;
        let mut notes = vec![format!("{} examples, {} failures", out.examples.len(), out.failures.len())];
        if !out.failures.is_empty() {
            let mut kinds: BTreeMap<&str, usize> = BTreeMap::new();
            for f in &out.failures {
                *kinds.entry(f.error_kind.as_str()).or_default() += 1;
            }
            notes.push(format!("failure kinds: {kinds:?}"));
        }
        Ok(Produced {
            outputs: vec![artifacts::DATASET, artifacts::FAILURES],
            notes,
        })
    }

    fn synthesize(&self, m: &mut Manifest) -> Result<StageReport> {
        let mode = self.cfg.synthesis.mode;
        let mut inputs = vec![Input::Artifact {
            rel: artifacts::TRIPLETS,
            from: Stage::Source,
        }];
        match mode {
            PromptMode::Retricl if self.cfg.synthesis.n_shots > 0 => inputs.push(Input::Artifact {
                rel: artifacts::ICL_POOL,
                from: Stage::Icl,
            }),
            PromptMode::NonRetricl => inputs.push(self.seeds_input()),
            _ => {}
        }
        inputs.extend(self.template_inputs(mode));
        self.execute(m, Stage::Synthesize, inputs, self.synthesis_fingerprint(), self.no_cache, || {
            let triplets: Vec<RetrievedTriplet> = read_values(&self.out(artifacts::TRIPLETS))?;
            let cfg = self.synthesis_config(self.cfg.generation.clone())?;
            let cache = self.cache()?;
            let out = match mode {
                PromptMode::Retricl => {
                    let pool: Vec<IclPair> = if self.cfg.synthesis.n_shots > 0 {
                        read_values(&self.out(artifacts::ICL_POOL))?
                    } else {
                        Vec::new()
                    };
                    synthesize_dataset(&triplets, ShotPool::Retricl(&pool), &self.templates, &*self.llm, cache.as_ref(), &cfg)?
                }
                PromptMode::NonRetricl => {
                    let seeds = self.load_seeds()?;
                    synthesize_dataset(
                        &triplets,
                        ShotPool::NonRetricl(seeds.examples()),
                        &self.templates,
                        &*self.llm,
                        cache.as_ref(),
                        &cfg,
                    )?
                }
                PromptMode::Fewgen => unreachable!("fewgen mode runs the fewgen stage"),
            };
            self.write_dataset(out)
        })
    }

    fn fewgen(&self, m: &mut Manifest, stage: Stage) -> Result<StageReport> {
        let m_total = self.cfg.synthesis.fewgen_m.ok_or_else(|| {
            Error::config("synthesis.fewgen_m", "required for the fewgen stage")
        })?;
        let mut inputs = Vec::new();
        if self.cfg.synthesis.n_shots > 0 {
            inputs.push(self.seeds_input());
        }
        inputs.extend(self.template_inputs(PromptMode::Fewgen));
        let mut fp = self.synthesis_fingerprint();
        fp["mode"] = json!("fewgen");
        self.execute(m, stage, inputs, fp, self.no_cache, || {
            let seeds = if self.cfg.synthesis.n_shots > 0 {
                self.load_seeds()?.examples().to_vec()
            } else {
                Vec::new()
            };
            let cfg = self.synthesis_config(self.cfg.generation.clone())?;
            let cache = self.cache()?;
            let labels = self.templates.verbalizer.label_set();
            let out = fewgen_dataset(&labels, m_total, &seeds, &self.templates, &*self.llm, cache.as_ref(), &cfg)?;
            self.write_dataset(out)
        })
    }

    fn bootstrap(&self, m: &mut Manifest) -> Result<StageReport> {
        let section = self.cfg.bootstrap.clone().unwrap_or_else(|| config::BootstrapSection {
            per_class: None,
            gold_shots_per_class: 0,
            max_attempts_per_class: None,
            generation: crate::llm::GenerationParams::bootstrap(),
        });
        let mut inputs = Vec::new();
        if section.gold_shots_per_class > 0 {
            let gold = self
                .cfg
                .data
                .gold
                .as_deref()
                .ok_or_else(|| Error::config("data.gold", "required when bootstrap.gold_shots_per_class > 0"))?;
            inputs.push(Self::file("gold", gold));
        }
        inputs.extend(self.template_inputs(PromptMode::Fewgen));
        let fp = json!({
            "bootstrap": section,
            "task": self.cfg.task,
            "llm": self.llm_fingerprint(),
            "rng_seed": self.cfg.rng_seed,
        });
        self.execute(m, Stage::Bootstrap, inputs, fp, self.no_cache, || {
            let labels = self.templates.verbalizer.label_set();
            let gold = match (&self.cfg.data.gold, section.gold_shots_per_class) {
                (Some(p), n) if n > 0 => SeedSet::from_jsonl(p, &labels)?.examples().to_vec(),
                _ => Vec::new(),
            };
            let per_class = section.per_class.unwrap_or_else(|| default_per_class(labels.len()));
            let mut cfg = BootstrapConfig::new(per_class);
            cfg.gold_shots_per_class = section.gold_shots_per_class;
            if let Some(n) = section.max_attempts_per_class {
                cfg.max_attempts_per_class = n;
            }
            cfg.synthesis = SynthesisConfig {
                match_label: true,
                ..self.synthesis_config(section.generation.clone())?
            };
            let cache = self.cache()?;
            let seeds = bootstrap_seed(&labels, &gold, &self.templates, &*self.llm, cache.as_ref(), &cfg)?;
            write_jsonl(self.out(artifacts::BOOTSTRAP_SEEDS), seeds.examples())?;
            Ok(Produced {
                outputs: vec![artifacts::BOOTSTRAP_SEEDS],
                notes: vec![format!("{} seeds ({per_class} per class)", seeds.len())],
            })
        })
    }

    fn dataset_input(&self) -> Input {
        Input::Artifact {
            rel: artifacts::DATASET,
            from: if self.cfg.synthesis.mode == PromptMode::Fewgen {
                Stage::Fewgen
            } else {
                Stage::Synthesize
            },
        }
    }

    fn evaluate(&self, m: &mut Manifest) -> Result<StageReport> {
        let ev = &self.cfg.evaluate;
        let mut inputs = vec![self.dataset_input()];
        for (name, path) in [
            ("entities", &ev.entities),
            ("gold_entities", &ev.gold_entities),
            ("embeddings", &ev.embeddings),
            ("gold_embeddings", &ev.gold_embeddings),
            ("evaluate.vocab", &ev.tokenizer.vocab_path),
        ] {
            if let Some(p) = path {
                inputs.push(Self::file(name, p));
            }
        }
        let fp = json!({
            "self_bleu_n": ev.self_bleu_n,
            "self_bleu_sample": ev.self_bleu_sample,
            "tokenizer": ev.tokenizer,
            "tag_set": ev.tag_set,
            "kl_alpha": ev.kl_alpha,
            "kl_direction": ev.kl_direction,
            "mauve_buckets": ev.mauve_buckets,
            "mauve_scale": ev.mauve_scale,
            "oracle_url": ev.oracle_url,
            "rng_seed": self.cfg.rng_seed,
        });
        self.execute(m, Stage::Evaluate, inputs, fp, false, || {
            let dataset: Vec<SyntheticExample> = read_values(&self.out(artifacts::DATASET))?;
            let ids: Vec<String> = dataset.iter().map(example_id).collect();
            let mut report = MetricReport::default();
            let mut notes = Vec::new();
            if dataset.len() >= 2 {
                let texts: Vec<String> = dataset.iter().map(|e| e.text.clone()).collect();
                let params = SelfBleuParams {
                    n_max: ev.self_bleu_n,
                    sample_size: (ev.self_bleu_sample > 0).then_some(ev.self_bleu_sample),
                    rng_seed: self.cfg.rng_seed,
                };
                report.self_bleu = self_bleu(&texts, &Tokenizer::new(&ev.tokenizer)?, &params)?;
            } else {
                notes.push("fewer than 2 examples; Self-BLEU skipped".into());
            }
            if let Some(path) = &ev.entities {
                let synth = read_entities(path, &ev.tag_set)?;
                check_ids(path, synth.iter().map(|r| r.example_id.as_str()), &ids)?;
                let gold = ev
                    .gold_entities
                    .as_ref()
                    .map(|p| read_entities(p, &ev.tag_set))
                    .transpose()?;
                entity_metrics(&mut report, &synth, gold.as_deref(), ev.kl_alpha, ev.kl_direction);
            }
            if let (Some(sp), Some(gp)) = (&ev.embeddings, &ev.gold_embeddings) {
                let synth = read_embeddings(sp)?;
                check_ids(sp, synth.iter().map(|(id, _)| id), &ids)?;
                let gold = read_embeddings(gp)?;
                let params = MauveParams {
                    num_buckets: ev.mauve_buckets,
                    scale_c: ev.mauve_scale,
                    rng_seed: self.cfg.rng_seed,
                    ..MauveParams::default()
                };
                report.mauve = Some(mauve_score(gold.vectors(), synth.vectors(), &params)?);
            }
            if let Some(url) = &ev.oracle_url {
                if dataset.is_empty() {
                    notes.push("empty dataset; label preservation skipped".into());
                } else {
                    report.label_preservation = Some(label_preservation(&dataset, &HttpClassifier::new(url.clone()))?);
                }
            }
            let mut bytes = serde_json::to_vec_pretty(&report).expect("report serializes");
            bytes.push(b'\n');
            write_atomic(self.out(artifacts::REPORT), &bytes)?;
            notes.push(format!("self-BLEU {:?}", report.self_bleu));
            Ok(Produced {
                outputs: vec![artifacts::REPORT],
                notes,
            })
        })
    }

    fn datamap(&self, m: &mut Manifest) -> Result<StageReport> {
        let dynamics = self
            .cfg
            .cartography
            .dynamics
            .clone()
            .ok_or_else(|| Error::config("cartography.dynamics", "required for the datamap stage"))?;
        let inputs = vec![self.dataset_input(), Self::file("dynamics", &dynamics)];
        self.execute(m, Stage::Datamap, inputs, json!({}), false, || {
            let dataset: Vec<SyntheticExample> = read_values(&self.out(artifacts::DATASET))?;
            let gold: HashMap<String, String> = dataset.iter().map(|e| (example_id(e), e.label.clone())).collect();
            let records = read_dynamics(&dynamics)?;
            let points = compute_data_map(&records, &gold)?;
            write_jsonl(self.out(artifacts::DATAMAP), &points)?;
            Ok(Produced {
                outputs: vec![artifacts::DATAMAP],
                notes: vec![datamap_summary(&points)],
            })
        })
    }

    fn filter(&self, m: &mut Manifest) -> Result<StageReport> {
        let inputs = vec![
            self.dataset_input(),
            Input::Artifact {
                rel: artifacts::DATAMAP,
                from: Stage::Datamap,
            },
        ];
        let drop_frac = self.cfg.cartography.drop_frac;
        self.execute(m, Stage::Filter, inputs, json!({"drop_frac": drop_frac}), false, || {
            let dataset: Vec<SyntheticExample> = read_values(&self.out(artifacts::DATASET))?;
            let points: Vec<DataMapPoint> = read_values(&self.out(artifacts::DATAMAP))?;
            let kept = ambiguity_filter(&dataset, &points, drop_frac)?;
            write_jsonl(self.out(artifacts::FILTERED), &kept)?;
            Ok(Produced {
                outputs: vec![artifacts::FILTERED],
                notes: vec![format!("kept {} of {} examples", kept.len(), dataset.len())],
            })
        })
    }
}

/// The synthesize stage in fewgen mode shares the fewgen stage's record.
fn stage_key(stage: Stage, mode: &PromptMode) -> &'static str {
    match (stage, mode) {
        (Stage::Synthesize, PromptMode::Fewgen) => Stage::Fewgen.as_str(),
        _ => stage.as_str(),
    }
}

fn read_values<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    Ok(read_jsonl(path)?.into_iter().map(|(_, v)| v).collect())
}

/// A sidecar must describe exactly the dataset's examples.
fn check_ids<'a>(path: &Path, found: impl Iterator<Item = &'a str>, expected: &[String]) -> Result<()> {
    let found: Vec<&str> = found.collect();
    let want: HashSet<&str> = expected.iter().map(String::as_str).collect();
    if let Some(extra) = found.iter().find(|id| !want.contains(*id)) {
        return Err(Error::Invalid(format!(
            "{}: id `{extra}` is not a dataset example (ids are draw indices)",
            path.display()
        )));
    }
    let have: HashSet<&str> = found.iter().copied().collect();
    if let Some(missing) = expected.iter().find(|id| !have.contains(id.as_str())) {
        return Err(Error::Invalid(format!("{}: no record for example `{missing}`", path.display())));
    }
    Ok(())
}

/// A small text table of data-map statistics.
pub fn datamap_summary(points: &[DataMapPoint]) -> String {
    if points.is_empty() {
        return "no data map points".into();
    }
    let n = points.len() as f64;
    let stat = |f: fn(&DataMapPoint) -> f64| {
        let vals: Vec<f64> = points.iter().map(f).collect();
        let mean = vals.iter().sum::<f64>() / n;
        let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        format!("{mean:>8.4} {min:>8.4} {max:>8.4}")
    };
    format!(
        "{} examples\n{:<12} {:>8} {:>8} {:>8}\n{:<12} {}\n{:<12} {}\n{:<12} {}",
        points.len(),
        "",
        "mean",
        "min",
        "max",
        "confidence",
        stat(|p| p.confidence),
        "variability",
        stat(|p| p.variability),
        "correctness",
        stat(|p| p.correctness),
    )
}
