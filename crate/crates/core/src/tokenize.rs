//! Pluggable tokenization used for token budgets, BM25 terms and BLEU n-grams.

use std::collections::HashSet;
use std::fs;
use std::ops::Range;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use unicode_segmentation::UnicodeSegmentation;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenizerKind {
    Whitespace,
    #[default]
    UnicodeWord,
    ExternalVocab,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenizerSpec {
    #[serde(default)]
    pub kind: TokenizerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab_path: Option<PathBuf>,
}

impl TokenizerSpec {
    pub fn whitespace() -> Self {
        Self {
            kind: TokenizerKind::Whitespace,
            vocab_path: None,
        }
    }

    pub fn unicode_word() -> Self {
        Self::default()
    }
}

/// A ready-to-use tokenizer. Tokens are reported as byte spans into the input
/// so callers can cut text at token boundaries without re-joining.
#[derive(Debug, Clone)]
pub struct Tokenizer {
    kind: TokenizerKind,
    vocab: HashSet<String>,
    longest_piece: usize,
}

impl Tokenizer {
    pub fn new(spec: &TokenizerSpec) -> Result<Self> {
        match spec.kind {
            TokenizerKind::ExternalVocab => {
                let path = spec.vocab_path.as_ref().ok_or_else(|| {
                    Error::Invalid("external-vocab tokenizer requires vocab_path".into())
                })?;
                let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                Ok(Self::with_vocab(raw.lines().map(str::to_owned)))
            }
            kind => Ok(Self {
                kind,
                vocab: HashSet::new(),
                longest_piece: 0,
            }),
        }
    }

    pub fn unicode_word() -> Self {
        Self {
            kind: TokenizerKind::UnicodeWord,
            vocab: HashSet::new(),
            longest_piece: 0,
        }
    }

    pub fn whitespace() -> Self {
        Self {
            kind: TokenizerKind::Whitespace,
            vocab: HashSet::new(),
            longest_piece: 0,
        }
    }

    /// Greedy longest-match over a fixed vocabulary; characters with no
    /// matching piece become single-character tokens.
    pub fn with_vocab(pieces: impl IntoIterator<Item = String>) -> Self {
        let vocab: HashSet<String> = pieces
            .into_iter()
            .map(|p| p.trim().to_owned())
            .filter(|p| !p.is_empty())
            .collect();
        let longest_piece = vocab.iter().map(|p| p.chars().count()).max().unwrap_or(0);
        Self {
            kind: TokenizerKind::ExternalVocab,
            vocab,
            longest_piece,
        }
    }

    pub fn kind(&self) -> TokenizerKind {
        self.kind
    }

    pub fn spans(&self, text: &str) -> Vec<Range<usize>> {
        match self.kind {
            TokenizerKind::Whitespace => whitespace_spans(text),
            TokenizerKind::UnicodeWord => text
                .unicode_word_indices()
                .map(|(start, w)| start..start + w.len())
                .collect(),
            TokenizerKind::ExternalVocab => {
                let mut spans = Vec::new();
                for chunk in whitespace_spans(text) {
                    self.greedy_pieces(text, chunk, &mut spans);
                }
                spans
            }
        }
    }

    pub fn tokens<'a>(&self, text: &'a str) -> Vec<&'a str> {
        self.spans(text).into_iter().map(|r| &text[r]).collect()
    }

    /// Lowercased tokens, used as retrieval terms.
    pub fn terms(&self, text: &str) -> Vec<String> {
        self.spans(text)
            .into_iter()
            .map(|r| text[r].to_lowercase())
            .collect()
    }

    pub fn count(&self, text: &str) -> usize {
        match self.kind {
            TokenizerKind::UnicodeWord => text.unicode_words().count(),
            _ => self.spans(text).len(),
        }
    }

    fn greedy_pieces(&self, text: &str, chunk: Range<usize>, out: &mut Vec<Range<usize>>) {
        let mut pos = chunk.start;
        while pos < chunk.end {
            let rest = &text[pos..chunk.end];
            // candidate end offsets, longest first
            let ends: Vec<usize> = rest
                .char_indices()
                .map(|(i, c)| i + c.len_utf8())
                .take(self.longest_piece.max(1))
                .collect();
            let end = ends
                .iter()
                .rev()
                .copied()
                .find(|&e| self.vocab.contains(&rest[..e]))
                .unwrap_or(ends[0]);
            out.push(pos..pos + end);
            pos += end;
        }
    }
}

fn whitespace_spans(text: &str) -> Vec<Range<usize>> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                spans.push(s..i);
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push(s..text.len());
    }
    spans
}

/// Cuts `text` after its `max_tokens`-th token. Text already within budget is
/// returned unchanged, including any trailing punctuation.
pub fn truncate_document(text: &str, max_tokens: usize, tok: &Tokenizer) -> String {
    assert!(max_tokens >= 1, "max_tokens must be at least 1");
    let spans = tok.spans(text);
    if spans.len() <= max_tokens {
        return text.to_owned();
    }
    text[..spans[max_tokens - 1].end].to_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn words(n: usize) -> String {
        (0..n).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn empty_string_has_no_tokens() {
        for tok in [Tokenizer::unicode_word(), Tokenizer::whitespace()] {
            assert_eq!(tok.count(""), 0);
        }
        assert_eq!(Tokenizer::with_vocab(["ab".to_owned()]).count(""), 0);
    }

    #[test]
    fn under_budget_passes_through() {
        let text = format!("{}.", words(120));
        assert_eq!(truncate_document(&text, 500, &Tokenizer::unicode_word()), text);
    }

    #[test]
    fn over_budget_keeps_first_tokens() {
        let tok = Tokenizer::unicode_word();
        let text = words(600);
        let out = truncate_document(&text, 500, &tok);
        assert_eq!(tok.count(&out), 500);
        assert_eq!(out, words(500));
    }

    #[test]
    fn budget_of_one_is_first_token() {
        let tok = Tokenizer::unicode_word();
        assert_eq!(truncate_document("  Hello, big world", 1, &tok), "  Hello");
        let ws = Tokenizer::whitespace();
        assert_eq!(truncate_document("Hello, big world", 1, &ws), "Hello,");
    }

    #[test]
    fn vocab_tokenizer_is_greedy_longest_match() {
        let tok = Tokenizer::with_vocab(["un", "unbreak", "able", "break"].map(String::from));
        assert_eq!(tok.tokens("unbreakable xz"), vec!["unbreak", "able", "x", "z"]);
    }

    proptest! {
        #[test]
        fn truncation_is_bounded_prefix_and_idempotent(text in "[a-zA-Z0-9 ,.'\n-]{0,200}", max in 1usize..30) {
            for tok in [Tokenizer::unicode_word(), Tokenizer::whitespace()] {
                let once = truncate_document(&text, max, &tok);
                prop_assert!(tok.count(&once) <= max);
                prop_assert!(text.starts_with(&once));
                prop_assert_eq!(truncate_document(&once, max, &tok), once.clone());
            }
        }
    }
}
