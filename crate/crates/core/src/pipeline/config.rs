//! Declarative run configuration (TOML). Unknown keys are rejected and every
//! cross-field violation is reported with its dotted field path.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::icl::BandParams;
use crate::llm::GenerationParams;
use crate::metrics::{KlDirection, DEFAULT_KL_ALPHA, DEFAULT_TAG_SET};
use crate::prompt::{PromptMode, TaskTemplates};
use crate::retrieval::Bm25Params;
use crate::tokenize::TokenizerSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Built-in task name, or any name when `data.templates` is given.
    pub task: String,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub data: DataConfig,
    #[serde(default)]
    pub retrieval: RetrievalConfig,
    #[serde(default)]
    pub synthesis: SynthesisSection,
    #[serde(default)]
    pub llm: LlmConfig,
    #[serde(default)]
    pub generation: GenerationParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<BootstrapSection>,
    #[serde(default)]
    pub evaluate: EvaluateConfig,
    #[serde(default)]
    pub cartography: CartographyConfig,
    /// Normalized rendering of the file as written (paths unresolved), so the
    /// echo does not depend on where the run happens.
    #[serde(skip)]
    echo: Option<String>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    /// Labelled seed set; when absent the bootstrap stage creates one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<PathBuf>,
    /// Human-written examples (same format as seeds) used as bootstrap shots.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<PathBuf>,
    /// Directory holding `verbalizer.toml` and one template file per mode;
    /// overrides the built-in task.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub templates: Option<PathBuf>,
    /// Replaces the task's label → verbalization table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verbalizer: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrievalMode {
    #[default]
    Sparse,
    Dense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrievalConfig {
    #[serde(default)]
    pub mode: RetrievalMode,
    #[serde(default = "default_k1")]
    pub k1: f64,
    #[serde(default = "default_b")]
    pub b: f64,
    #[serde(default)]
    pub tokenizer: TokenizerSpec,
    /// Cosine band; dense retrieval only. Defaults to (0.4, 0.9) when dense.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band: Option<BandParams>,
    #[serde(default = "default_k_retrieve")]
    pub k_retrieve: usize,
    #[serde(default = "default_k_expand")]
    pub k_expand: usize,
    #[serde(default = "default_top_m")]
    pub top_m: usize,
    /// Corpus document vectors (dense).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<PathBuf>,
    /// Seed query vectors (dense).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_embeddings: Option<PathBuf>,
}

fn default_k1() -> f64 {
    Bm25Params::default().k1
}
fn default_b() -> f64 {
    Bm25Params::default().b
}
fn default_k_retrieve() -> usize {
    500
}
fn default_k_expand() -> usize {
    1
}
fn default_top_m() -> usize {
    2
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            mode: RetrievalMode::default(),
            k1: default_k1(),
            b: default_b(),
            tokenizer: TokenizerSpec::default(),
            band: None,
            k_retrieve: default_k_retrieve(),
            k_expand: default_k_expand(),
            top_m: default_top_m(),
            embeddings: None,
            query_embeddings: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisSection {
    #[serde(default = "default_mode")]
    pub mode: PromptMode,
    #[serde(default)]
    pub n_shots: usize,
    #[serde(default)]
    pub match_label: bool,
    #[serde(default = "default_max_doc_tokens")]
    pub max_doc_tokens: usize,
    /// Total FewGen generations (fewgen mode / stage).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fewgen_m: Option<usize>,
}

fn default_mode() -> PromptMode {
    PromptMode::Retricl
}
fn default_max_doc_tokens() -> usize {
    crate::synthesis::DEFAULT_MAX_DOC_TOKENS
}

impl Default for SynthesisSection {
    fn default() -> Self {
        Self {
            mode: default_mode(),
            n_shots: 0,
            match_label: false,
            max_doc_tokens: default_max_doc_tokens(),
            fewgen_m: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LlmProvider {
    /// Offline deterministic teacher.
    #[default]
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmConfig {
    #[serde(default)]
    pub provider: LlmProvider,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default = "default_rpm")]
    pub rpm: usize,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub mock_seed: u64,
    /// `hash` (opaque `gen-…` strings) or `remix` (sentences of prompt words).
    #[serde(default = "default_mock_style")]
    pub mock_style: String,
}

fn default_rpm() -> usize {
    1600
}
fn default_max_in_flight() -> usize {
    8
}
fn default_mock_style() -> String {
    "hash".into()
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            provider: LlmProvider::default(),
            base_url: None,
            model: None,
            api_key_env: None,
            rpm: default_rpm(),
            max_in_flight: default_max_in_flight(),
            mock_seed: 0,
            mock_style: default_mock_style(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapSection {
    /// Defaults to 100 for binary tasks and 50 otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_class: Option<usize>,
    #[serde(default = "default_gold_shots")]
    pub gold_shots_per_class: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_attempts_per_class: Option<usize>,
    #[serde(default = "GenerationParams::bootstrap")]
    pub generation: GenerationParams,
}

fn default_gold_shots() -> usize {
    crate::bootstrap::DEFAULT_GOLD_SHOTS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateConfig {
    #[serde(default = "default_bleu_n")]
    pub self_bleu_n: usize,
    /// Hypotheses scored for Self-BLEU; 0 scores every text.
    #[serde(default = "default_bleu_sample")]
    pub self_bleu_sample: usize,
    #[serde(default)]
    pub tokenizer: TokenizerSpec,
    /// `entities.jsonl` for the synthetic dataset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entities: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_entities: Option<PathBuf>,
    #[serde(default = "default_tag_set")]
    pub tag_set: Vec<String>,
    #[serde(default = "default_alpha")]
    pub kl_alpha: f64,
    #[serde(default)]
    pub kl_direction: KlDirection,
    /// Embeddings of the synthetic texts (MAUVE).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_embeddings: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mauve_buckets: Option<usize>,
    #[serde(default = "default_mauve_scale")]
    pub mauve_scale: f64,
    /// Base URL of a `/classify` oracle for label preservation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_url: Option<String>,
}

fn default_bleu_n() -> usize {
    crate::metrics::bleu::MAX_ORDER
}
fn default_bleu_sample() -> usize {
    crate::metrics::bleu::DEFAULT_SAMPLE_SIZE
}
fn default_tag_set() -> Vec<String> {
    DEFAULT_TAG_SET.iter().map(|s| s.to_string()).collect()
}
fn default_alpha() -> f64 {
    DEFAULT_KL_ALPHA
}
fn default_mauve_scale() -> f64 {
    5.0
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            self_bleu_n: default_bleu_n(),
            self_bleu_sample: default_bleu_sample(),
            tokenizer: TokenizerSpec::default(),
            entities: None,
            gold_entities: None,
            tag_set: default_tag_set(),
            kl_alpha: default_alpha(),
            kl_direction: KlDirection::default(),
            embeddings: None,
            gold_embeddings: None,
            mauve_buckets: None,
            mauve_scale: default_mauve_scale(),
            oracle_url: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CartographyConfig {
    /// Training dynamics of a student trained on `dataset.jsonl`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dynamics: Option<PathBuf>,
    #[serde(default = "default_drop_frac")]
    pub drop_frac: f64,
}

fn default_drop_frac() -> f64 {
    crate::cartography::DEFAULT_DROP_FRAC
}

impl Default for CartographyConfig {
    fn default() -> Self {
        Self {
            dynamics: None,
            drop_frac: default_drop_frac(),
        }
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Overrides {
    pub output_dir: Option<PathBuf>,
    pub rng_seed: Option<u64>,
}

impl RunConfig {
    pub fn from_toml(src: &str) -> Result<Self> {
        toml::from_str(src).map_err(|e| {
            let msg = e.message().to_owned();
            let field = field_of(&msg).unwrap_or("<root>").to_owned();
            Error::config(field, msg)
        })
    }

    /// Reads, applies overrides, resolves relative paths against the config
    /// file's directory and validates.
    pub fn load(path: impl AsRef<Path>, overrides: &Overrides) -> Result<Self> {
        let path = path.as_ref();
        let src = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&src)?;
        if let Some(dir) = &overrides.output_dir {
            cfg.output_dir = dir.clone();
        }
        if let Some(seed) = overrides.rng_seed {
            cfg.rng_seed = seed;
        }
        let mut raw = cfg.clone();
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        raw.retrieval.band = cfg.retrieval.band;
        cfg.echo = Some(raw.normalized());
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        for p in [
            &mut self.data.corpus,
            &mut self.data.seeds,
            &mut self.data.gold,
            &mut self.data.templates,
            &mut self.data.verbalizer,
            &mut self.retrieval.embeddings,
            &mut self.retrieval.query_embeddings,
            &mut self.retrieval.tokenizer.vocab_path,
            &mut self.evaluate.entities,
            &mut self.evaluate.gold_entities,
            &mut self.evaluate.embeddings,
            &mut self.evaluate.gold_embeddings,
            &mut self.evaluate.tokenizer.vocab_path,
            &mut self.cartography.dynamics,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    /// Cross-field checks. Fills the dense default band.
    pub fn validate(&mut self) -> Result<()> {
        let r = &mut self.retrieval;
        let fewgen = self.synthesis.mode == PromptMode::Fewgen;
        if r.band.is_some() && fewgen {
            return Err(Error::config("retrieval.band", "band is dense-only and unused in fewgen mode"));
        }
        if r.band.is_some() && r.mode == RetrievalMode::Sparse {
            return Err(Error::config("retrieval.band", "band is dense-only; remove it or use mode = \"dense\""));
        }
        if let Some(b) = r.band {
            BandParams::new(b.s_lo, b.s_hi).map_err(|e| Error::config("retrieval.band", e.to_string()))?;
        }
        if !fewgen {
            if self.data.corpus.is_none() {
                return Err(Error::config("data.corpus", "required unless synthesis.mode = \"fewgen\""));
            }
            if r.mode == RetrievalMode::Dense {
                if r.embeddings.is_none() {
                    return Err(Error::config("retrieval.embeddings", "retrieval.embeddings required for dense retrieval"));
                }
                if r.query_embeddings.is_none() {
                    return Err(Error::config(
                        "retrieval.query_embeddings",
                        "retrieval.query_embeddings required for dense retrieval",
                    ));
                }
                r.band.get_or_insert_with(BandParams::default);
            }
        } else if self.synthesis.fewgen_m.is_none() {
            return Err(Error::config("synthesis.fewgen_m", "required in fewgen mode"));
        }
        Bm25Params { k1: r.k1, b: r.b }
            .validate()
            .map_err(|e| Error::config("retrieval.k1", e.to_string()))?;
        if r.k_expand == 0 {
            return Err(Error::config("retrieval.k_expand", "must be at least 1"));
        }
        if r.k_retrieve < r.k_expand {
            return Err(Error::config("retrieval.k_retrieve", "must be >= retrieval.k_expand"));
        }
        if r.top_m == 0 {
            return Err(Error::config("retrieval.top_m", "must be at least 1"));
        }
        if self.data.seeds.is_none() && self.bootstrap.is_none() {
            return Err(Error::config("data.seeds", "required unless a [bootstrap] section is present"));
        }
        if let Some(b) = &self.bootstrap {
            if b.per_class == Some(0) {
                return Err(Error::config("bootstrap.per_class", "must be at least 1"));
            }
            if b.gold_shots_per_class > 0 && self.data.gold.is_none() {
                return Err(Error::config("data.gold", "required when bootstrap.gold_shots_per_class > 0"));
            }
            b.generation
                .validate()
                .map_err(|m| Error::config("bootstrap.generation", m))?;
        }
        self.generation.validate().map_err(|m| Error::config("generation", m))?;
        let llm = &self.llm;
        if llm.provider == LlmProvider::Http {
            if llm.base_url.is_none() {
                return Err(Error::config("llm.base_url", "required for the http provider"));
            }
            if llm.model.is_none() {
                return Err(Error::config("llm.model", "required for the http provider"));
            }
        }
        if !["hash", "remix"].contains(&llm.mock_style.as_str()) {
            return Err(Error::config("llm.mock_style", "must be \"hash\" or \"remix\""));
        }
        if llm.rpm == 0 {
            return Err(Error::config("llm.rpm", "must be at least 1"));
        }
        if llm.max_in_flight == 0 {
            return Err(Error::config("llm.max_in_flight", "must be at least 1"));
        }
        let ev = &self.evaluate;
        if !(1..=crate::metrics::bleu::MAX_ORDER).contains(&ev.self_bleu_n) {
            return Err(Error::config("evaluate.self_bleu_n", "must be in 1..=5"));
        }
        if !(ev.kl_alpha > 0.0) {
            return Err(Error::config("evaluate.kl_alpha", "must be positive"));
        }
        if ev.mauve_buckets.is_some_and(|k| k < 2) {
            return Err(Error::config("evaluate.mauve_buckets", "must be at least 2"));
        }
        if ev.embeddings.is_some() != ev.gold_embeddings.is_some() {
            return Err(Error::config("evaluate.gold_embeddings", "MAUVE needs both evaluate.embeddings and evaluate.gold_embeddings"));
        }
        if ev.gold_entities.is_some() && ev.entities.is_none() {
            return Err(Error::config("evaluate.entities", "required when evaluate.gold_entities is set"));
        }
        if !(0.0..1.0).contains(&self.cartography.drop_frac) {
            return Err(Error::config("cartography.drop_frac", "must be in [0, 1)"));
        }
        let templates = self.templates()?;
        let labels = templates.verbalizer.label_set();
        if let Some(n) = self.synthesis.fewgen_m {
            if n > 0 && labels.is_empty() {
                return Err(Error::config("data.verbalizer", "no labels"));
            }
        }
        self.check_files()
    }

    fn check_files(&self) -> Result<()> {
        let files = [
            ("data.corpus", &self.data.corpus),
            ("data.seeds", &self.data.seeds),
            ("data.gold", &self.data.gold),
            ("data.verbalizer", &self.data.verbalizer),
            ("retrieval.embeddings", &self.retrieval.embeddings),
            ("retrieval.query_embeddings", &self.retrieval.query_embeddings),
            ("retrieval.tokenizer.vocab_path", &self.retrieval.tokenizer.vocab_path),
            ("evaluate.entities", &self.evaluate.entities),
            ("evaluate.gold_entities", &self.evaluate.gold_entities),
            ("evaluate.embeddings", &self.evaluate.embeddings),
            ("evaluate.gold_embeddings", &self.evaluate.gold_embeddings),
            ("evaluate.tokenizer.vocab_path", &self.evaluate.tokenizer.vocab_path),
            ("cartography.dynamics", &self.cartography.dynamics),
        ];
        for (field, path) in files {
            if let Some(p) = path {
                if !p.is_file() {
                    return Err(Error::config(field, format!("file {} does not exist", p.display())));
                }
            }
        }
        if let Some(dir) = &self.data.templates {
            if !dir.is_dir() {
                return Err(Error::config("data.templates", format!("directory {} does not exist", dir.display())));
            }
        }
        Ok(())
    }

    /// Templates and verbalizer for this run.
    pub fn templates(&self) -> Result<TaskTemplates> {
        let mut t = match &self.data.templates {
            Some(dir) => TaskTemplates::from_dir(dir),
            None => TaskTemplates::builtin(&self.task),
        }
        .map_err(|e| Error::config("task", e.to_string()))?;
        if let Some(path) = &self.data.verbalizer {
            t.verbalizer = crate::prompt::Verbalizer::from_file(path)
                .map_err(|e| Error::config("data.verbalizer", e.to_string()))?;
        }
        Ok(t)
    }

    /// Canonical TOML rendering with every default filled in.
    pub fn normalized(&self) -> String {
        match &self.echo {
            Some(echo) => echo.clone(),
            None => toml::to_string(self).expect("config serializes"),
        }
    }
}

/// Best-effort extraction of the offending key from a TOML error message.
fn field_of(msg: &str) -> Option<&str> {
    let start = msg.find('`')? + 1;
    let len = msg[start..].find('`')?;
    Some(&msg[start..start + len])
}
