//! Retrieval-grounded synthetic dataset generation for text classification.
//!
//! The workflow: index an unlabelled corpus ([`retrieval`]), retrieve grounding
//! documents for each labelled seed ([`icl::content_source`]), build in-context
//! demonstrations ([`icl::build_retricl`]), render task-inversion prompts
//! ([`prompt`]) and ask a teacher model to rewrite each document into an
//! example of the seed's class ([`synthesis`]). The resulting dataset can be
//! scored with intrinsic metrics ([`metrics`]) and pruned with training-
//! dynamics data maps ([`cartography`]). [`pipeline`] strings the stages
//! together behind a config file, with caching and resumable artifacts.

pub mod bootstrap;
pub mod cartography;
pub mod corpus;
pub mod error;
pub mod icl;
pub mod jsonl;
pub mod llm;
pub mod metrics;
pub mod pipeline;
pub mod prompt;
pub mod retrieval;
pub mod synthesis;
pub mod tokenize;

pub use corpus::{Corpus, Document, LabelSet, SeedExample, SeedSet};
pub use error::{Error, Result};
pub use icl::{BandParams, IclPair, RetrievedTriplet};
pub use llm::{GenerationParams, LlmClient, LlmError, MockLlm};
pub use pipeline::{Pipeline, RunConfig, Stage};
pub use prompt::{render_prompt, PromptMode, PromptTemplate, TaskTemplates, Verbalizer};
pub use synthesis::{SynthesisConfig, SyntheticExample};
pub use tokenize::{Tokenizer, TokenizerSpec};
