//! Task-inversion prompt templates, label verbalizers and rendering.
//!
//! Templates use a tiny placeholder grammar: `{{label}}` (the verbalized
//! label), `{{document}}`, `{{exemplar}}`, `{{instruction}}` and `{{shots}}`.
//! Rendering is a single left-to-right pass, so placeholder-like text inside
//! substituted values is never expanded.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{LabelSet, SeedExample};
use crate::error::{Error, Result};
use crate::icl::IclPair;

pub const PLACEHOLDERS: [&str; 5] = ["label", "document", "exemplar", "instruction", "shots"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    Retricl,
    NonRetricl,
    Fewgen,
}

impl PromptMode {
    pub const ALL: [PromptMode; 3] = [PromptMode::Retricl, PromptMode::NonRetricl, PromptMode::Fewgen];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptMode::Retricl => "retricl",
            PromptMode::NonRetricl => "non_retricl",
            PromptMode::Fewgen => "fewgen",
        }
    }
}

impl fmt::Display for PromptMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PromptMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown prompt mode `{s}`")))
    }
}

/// Total, injective map from labels to their descriptive text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verbalizer {
    entries: Vec<(String, String)>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VerbalizerFile {
    labels: Vec<VerbalizerEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VerbalizerEntry {
    label: String,
    verbalization: String,
}

impl Verbalizer {
    pub fn new(entries: Vec<(String, String)>) -> Result<Self> {
        let mut labels = HashSet::new();
        let mut texts = HashSet::new();
        for (label, text) in &entries {
            if label.is_empty() || text.is_empty() {
                return Err(Error::Template("empty label or verbalization".into()));
            }
            if !labels.insert(label) {
                return Err(Error::Template(format!("label `{label}` verbalized twice")));
            }
            if !texts.insert(text) {
                return Err(Error::Template(format!("verbalization `{text}` is not unique")));
            }
        }
        Ok(Self { entries })
    }

    pub fn from_toml(src: &str) -> Result<Self> {
        let file: VerbalizerFile =
            toml::from_str(src).map_err(|e| Error::Template(format!("verbalizer: {e}")))?;
        Self::new(
            file.labels
                .into_iter()
                .map(|e| (e.label, e.verbalization))
                .collect(),
        )
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let src = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&src)
    }

    pub fn verbalize(&self, label: &str) -> Result<&str> {
        self.entries
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::Template(format!("no verbalization for label `{label}`")))
    }

    /// Labels in declaration order.
    pub fn label_set(&self) -> LabelSet {
        LabelSet::new(self.entries.iter().map(|(l, _)| l.clone())).expect("labels validated")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptTemplate {
    pub instruction: String,
    pub icl_block: String,
    pub query_block: String,
    #[serde(default = "default_separator")]
    pub shot_separator: String,
}

fn default_separator() -> String {
    "\n\n".to_owned()
}

impl PromptTemplate {
    pub fn from_toml(src: &str) -> Result<Self> {
        let t: PromptTemplate =
            toml::from_str(src).map_err(|e| Error::Template(format!("template: {e}")))?;
        t.validate()?;
        Ok(t)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let src = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&src)
    }

    /// Every placeholder must be a known name; the instruction may only
    /// reference `{{label}}`.
    pub fn validate(&self) -> Result<()> {
        for (field, text) in [
            ("instruction", &self.instruction),
            ("icl_block", &self.icl_block),
            ("query_block", &self.query_block),
        ] {
            for name in placeholders(text)? {
                if !PLACEHOLDERS.contains(&name) {
                    return Err(Error::Template(format!("{field}: unknown placeholder `{{{{{name}}}}}`")));
                }
                if field == "instruction" && name != "label" {
                    return Err(Error::Template(format!("instruction may only use {{{{label}}}}, found `{name}`")));
                }
            }
        }
        Ok(())
    }
}

fn placeholders(text: &str) -> Result<Vec<&str>> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find("{{") {
        let after = &rest[start + 2..];
        let end = after
            .find("}}")
            .ok_or_else(|| Error::Template("unterminated `{{`".into()))?;
        out.push(&after[..end]);
        rest = &after[end + 2..];
    }
    Ok(out)
}

/// Substitutes each `{{name}}` with its bound value in one pass.
fn fill(block: &str, bindings: &[(&str, &str)]) -> Result<String> {
    let mut out = String::with_capacity(block.len());
    let mut rest = block;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after
            .find("}}")
            .ok_or_else(|| Error::Template("unterminated `{{`".into()))?;
        let name = &after[..end];
        let value = bindings
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::Template(format!("unbound placeholder `{{{{{name}}}}}`")))?;
        out.push_str(value);
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

/// In-context demonstrations for one prompt.
#[derive(Debug, Clone, Copy)]
pub enum Shots<'a> {
    Icl(&'a [IclPair]),
    Seeds(&'a [SeedExample]),
}

impl Shots<'_> {
    pub fn len(&self) -> usize {
        match self {
            Shots::Icl(s) => s.len(),
            Shots::Seeds(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Renders one task-inversion prompt: the shot blocks joined by the
/// template's separator, followed by the query block. A query block that
/// contains `{{shots}}` receives the joined shots (plus a trailing separator)
/// in place instead.
pub fn render_prompt(
    mode: PromptMode,
    template: &PromptTemplate,
    verbalizer: &Verbalizer,
    label: &str,
    doc: Option<&str>,
    shots: Shots<'_>,
) -> Result<String> {
    match (mode, doc) {
        (PromptMode::Fewgen, Some(_)) => {
            return Err(Error::Template("fewgen prompts take no document".into()))
        }
        (PromptMode::Retricl | PromptMode::NonRetricl, None) => {
            return Err(Error::Template(format!("{mode} prompts need a document")))
        }
        _ => {}
    }
    match (mode, shots) {
        (PromptMode::Retricl, Shots::Seeds(s)) if !s.is_empty() => {
            return Err(Error::Template("retricl shots must be (document, exemplar) pairs".into()))
        }
        (PromptMode::NonRetricl | PromptMode::Fewgen, Shots::Icl(s)) if !s.is_empty() => {
            return Err(Error::Template(format!("{mode} shots must be seed examples")))
        }
        _ => {}
    }

    let mut blocks = Vec::with_capacity(shots.len());
    match shots {
        Shots::Icl(pairs) => {
            for pair in pairs {
                let verbal = verbalizer.verbalize(&pair.label)?;
                let instruction = fill(&template.instruction, &[("label", verbal)])?;
                blocks.push(fill(
                    &template.icl_block,
                    &[
                        ("instruction", &instruction),
                        ("label", verbal),
                        ("document", &pair.doc_text),
                        ("exemplar", &pair.exemplar_text),
                    ],
                )?);
            }
        }
        Shots::Seeds(seeds) => {
            for seed in seeds {
                let verbal = verbalizer.verbalize(&seed.label)?;
                let instruction = fill(&template.instruction, &[("label", verbal)])?;
                blocks.push(fill(
                    &template.icl_block,
                    &[
                        ("instruction", &instruction),
                        ("label", verbal),
                        ("exemplar", &seed.text),
                    ],
                )?);
            }
        }
    }

    let verbal = verbalizer.verbalize(label)?;
    let instruction = fill(&template.instruction, &[("label", verbal)])?;
    let mut shot_text = blocks.join(&template.shot_separator);
    let inline_shots = template.query_block.contains("{{shots}}");
    if inline_shots && !blocks.is_empty() {
        shot_text.push_str(&template.shot_separator);
    }
    let mut bindings: Vec<(&str, &str)> = vec![("instruction", &instruction), ("label", verbal)];
    if let Some(doc) = doc {
        bindings.push(("document", doc));
    }
    if inline_shots {
        bindings.push(("shots", &shot_text));
    }
    let query = fill(&template.query_block, &bindings)?;
    if inline_shots || blocks.is_empty() {
        Ok(query)
    } else {
        Ok(format!("{shot_text}{}{query}", template.shot_separator))
    }
}

/// Verbalizer plus one template per mode for a classification task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskTemplates {
    pub verbalizer: Verbalizer,
    pub retricl: PromptTemplate,
    pub non_retricl: PromptTemplate,
    pub fewgen: PromptTemplate,
}

macro_rules! builtin {
    ($($name:literal),* $(,)?) => {
        &[$((
            $name,
            include_str!(concat!("../templates/", $name, "/verbalizer.toml")),
            include_str!(concat!("../templates/", $name, "/retricl.toml")),
            include_str!(concat!("../templates/", $name, "/non_retricl.toml")),
            include_str!(concat!("../templates/", $name, "/fewgen.toml")),
        )),*]
    };
}

const BUILTIN: &[(&str, &str, &str, &str, &str)] = builtin!(
    "hyperpartisan",
    "toi_headlines",
    "ag_news",
    "category",
    "humor",
    "polarity",
    "imdb",
    "sst2",
);

impl TaskTemplates {
    pub fn builtin_names() -> impl Iterator<Item = &'static str> {
        BUILTIN.iter().map(|b| b.0)
    }

    pub fn builtin(task: &str) -> Result<Self> {
        let (_, verbalizer, retricl, non_retricl, fewgen) = BUILTIN
            .iter()
            .find(|b| b.0 == task)
            .ok_or_else(|| Error::Template(format!("no built-in task `{task}`")))?;
        Ok(Self {
            verbalizer: Verbalizer::from_toml(verbalizer)?,
            retricl: PromptTemplate::from_toml(retricl)?,
            non_retricl: PromptTemplate::from_toml(non_retricl)?,
            fewgen: PromptTemplate::from_toml(fewgen)?,
        })
    }

    /// Loads `verbalizer.toml`, `retricl.toml`, `non_retricl.toml` and
    /// `fewgen.toml` from `dir`.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        Ok(Self {
            verbalizer: Verbalizer::from_file(dir.join("verbalizer.toml"))?,
            retricl: PromptTemplate::from_file(dir.join("retricl.toml"))?,
            non_retricl: PromptTemplate::from_file(dir.join("non_retricl.toml"))?,
            fewgen: PromptTemplate::from_file(dir.join("fewgen.toml"))?,
        })
    }

    pub fn template(&self, mode: PromptMode) -> &PromptTemplate {
        match mode {
            PromptMode::Retricl => &self.retricl,
            PromptMode::NonRetricl => &self.non_retricl,
            PromptMode::Fewgen => &self.fewgen,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (PromptTemplate, Verbalizer) {
        let t = PromptTemplate {
            instruction: "Write about {{label}}.".into(),
            icl_block: "Doc: {{document}}\n{{instruction}}\nOut: {{exemplar}}".into(),
            query_block: "Doc: {{document}}\n{{instruction}}\nOut:".into(),
            shot_separator: "\n\n".into(),
        };
        let v = Verbalizer::new(vec![("a".into(), "apples".into()), ("b".into(), "bananas".into())]).unwrap();
        (t, v)
    }

    #[test]
    fn zero_shots_is_query_only() {
        let (t, v) = toy();
        let p = render_prompt(PromptMode::Retricl, &t, &v, "a", Some("D"), Shots::Icl(&[])).unwrap();
        assert_eq!(p, "Doc: D\nWrite about apples.\nOut:");
    }

    #[test]
    fn shots_use_their_own_label() {
        let (t, v) = toy();
        let shot = IclPair {
            doc_text: "S".into(),
            exemplar_text: "E".into(),
            label: "b".into(),
        };
        let p = render_prompt(PromptMode::Retricl, &t, &v, "a", Some("D"), Shots::Icl(&[shot])).unwrap();
        assert_eq!(p, "Doc: S\nWrite about bananas.\nOut: E\n\nDoc: D\nWrite about apples.\nOut:");
    }

    #[test]
    fn placeholder_text_in_values_is_not_expanded() {
        let (t, v) = toy();
        let p = render_prompt(PromptMode::Retricl, &t, &v, "a", Some("{{label}}"), Shots::Icl(&[])).unwrap();
        assert!(p.starts_with("Doc: {{label}}\n"));
    }

    #[test]
    fn mode_preconditions() {
        let (t, v) = toy();
        assert!(render_prompt(PromptMode::Fewgen, &t, &v, "a", Some("D"), Shots::Seeds(&[])).is_err());
        assert!(render_prompt(PromptMode::Retricl, &t, &v, "a", None, Shots::Icl(&[])).is_err());
        let seed = SeedExample {
            id: "s".into(),
            text: "x".into(),
            label: "a".into(),
        };
        assert!(render_prompt(PromptMode::Retricl, &t, &v, "a", Some("D"), Shots::Seeds(&[seed])).is_err());
    }

    #[test]
    fn unbound_placeholder_is_named() {
        let (t, v) = toy();
        let err = render_prompt(PromptMode::Fewgen, &t, &v, "a", None, Shots::Seeds(&[])).unwrap_err();
        assert!(err.to_string().contains("{{document}}"), "{err}");
    }

    #[test]
    fn inline_shots_placeholder() {
        let (mut t, v) = toy();
        t.query_block = "Examples:\n{{shots}}Now: {{instruction}}".into();
        t.icl_block = "{{instruction}} {{exemplar}}".into();
        let seed = SeedExample {
            id: "s".into(),
            text: "x".into(),
            label: "b".into(),
        };
        let p = render_prompt(PromptMode::Fewgen, &t, &v, "a", None, Shots::Seeds(&[seed])).unwrap();
        assert_eq!(p, "Examples:\nWrite about bananas. x\n\nNow: Write about apples.");
        let p = render_prompt(PromptMode::Fewgen, &t, &v, "a", None, Shots::Seeds(&[])).unwrap();
        assert_eq!(p, "Examples:\nNow: Write about apples.");
    }

    #[test]
    fn unknown_placeholder_rejected() {
        let err = PromptTemplate::from_toml("instruction = \"x\"\nicl_block = \"{{foo}}\"\nquery_block = \"q\"\n").unwrap_err();
        assert!(err.to_string().contains("foo"));
    }

    #[test]
    fn verbalizer_must_be_injective() {
        assert!(Verbalizer::new(vec![("a".into(), "x".into()), ("b".into(), "x".into())]).is_err());
    }

    #[test]
    fn all_builtins_load() {
        let names: Vec<_> = TaskTemplates::builtin_names().collect();
        assert_eq!(names.len(), 8);
        for name in names {
            let t = TaskTemplates::builtin(name).unwrap();
            assert!(t.verbalizer.label_set().len() >= 2);
        }
        let toi = TaskTemplates::builtin("toi_headlines").unwrap();
        assert_eq!(toi.verbalizer.verbalize("sports").unwrap(), "sports in India");
    }
}
