use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use unicode_segmentation::UnicodeSegmentation;

use super::{GenerationParams, LlmClient, LlmError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MockStyle {
    /// `gen-<16 hex digits>`
    #[default]
    Hash,
    /// A short sentence of words drawn from the prompt.
    Remix,
}

/// Deterministic offline teacher: the completion is a pure function of the
/// prompt, the generation parameters and the client seed.
#[derive(Debug, Clone)]
pub struct MockLlm {
    seed: u64,
    style: MockStyle,
}

impl MockLlm {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            style: MockStyle::Hash,
        }
    }

    pub fn with_style(seed: u64, style: MockStyle) -> Self {
        Self { seed, style }
    }

    fn digest(&self, prompt: &str, params: &GenerationParams) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(serde_json::to_vec(params).expect("params serialize"));
        h.update(prompt.as_bytes());
        h.finalize().into()
    }
}

impl LlmClient for MockLlm {
    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<String, LlmError> {
        let digest = self.digest(prompt, params);
        match self.style {
            MockStyle::Hash => Ok(format!("gen-{}", hex::encode(&digest[..8]))),
            MockStyle::Remix => {
                let mut rng = ChaCha8Rng::from_seed(digest);
                let words: Vec<&str> = prompt.unicode_words().collect();
                if words.is_empty() {
                    return Ok(format!("gen-{}", hex::encode(&digest[..8])));
                }
                let n = rng.gen_range(6..=16);
                let picked: Vec<&str> = (0..n).map(|_| *words.choose(&mut rng).unwrap()).collect();
                Ok(format!("{}.", picked.join(" ")))
            }
        }
    }

    fn model(&self) -> &str {
        "mock"
    }
}
