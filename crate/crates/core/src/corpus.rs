//! Corpus and seed-set ingestion from JSONL files.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl::parse_lines;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedExample {
    pub id: String,
    pub text: String,
    pub label: String,
}

/// The declared label set, in declaration order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    labels: Vec<String>,
}

impl LabelSet {
    pub fn new<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        let mut seen = HashSet::new();
        for label in &labels {
            if label.is_empty() {
                return Err(Error::Invalid("empty label".into()));
            }
            if !seen.insert(label) {
                return Err(Error::DuplicateId(label.clone()));
            }
        }
        Ok(Self { labels })
    }

    pub fn contains(&self, label: &str) -> bool {
        self.labels.iter().any(|l| l == label)
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.labels.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    docs: Vec<Document>,
    by_id: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(docs: Vec<Document>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(docs.len());
        for (i, doc) in docs.iter().enumerate() {
            validate_record(&doc.id, &doc.text)?;
            if by_id.insert(doc.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(doc.id.clone()));
            }
        }
        Ok(Self { docs, by_id })
    }

    pub fn from_jsonl(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file, path)
    }

    pub fn from_reader(reader: impl Read, origin: &Path) -> Result<Self> {
        let rows: Vec<(usize, Document)> = parse_lines(reader, origin)?;
        for (line, doc) in &rows {
            validate_record(&doc.id, &doc.text).map_err(|e| at_line(origin, *line, e))?;
        }
        Self::new(rows.into_iter().map(|(_, d)| d).collect())
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.by_id.get(id).map(|&i| &self.docs[i])
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SeedSet {
    examples: Vec<SeedExample>,
}

impl SeedSet {
    pub fn new(examples: Vec<SeedExample>, labels: &LabelSet) -> Result<Self> {
        let mut seen = HashSet::new();
        for ex in &examples {
            validate_record(&ex.id, &ex.text)?;
            if !labels.contains(&ex.label) {
                return Err(Error::UnknownLabel {
                    label: ex.label.clone(),
                    line: 0,
                });
            }
            if !seen.insert(ex.id.as_str()) {
                return Err(Error::DuplicateId(ex.id.clone()));
            }
        }
        Ok(Self { examples })
    }

    pub fn from_jsonl(path: impl AsRef<Path>, labels: &LabelSet) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file, path, labels)
    }

    pub fn from_reader(reader: impl Read, origin: &Path, labels: &LabelSet) -> Result<Self> {
        let rows: Vec<(usize, SeedExample)> = parse_lines(reader, origin)?;
        for (line, ex) in &rows {
            validate_record(&ex.id, &ex.text).map_err(|e| at_line(origin, *line, e))?;
            if !labels.contains(&ex.label) {
                return Err(Error::UnknownLabel {
                    label: ex.label.clone(),
                    line: *line,
                });
            }
        }
        Self::new(rows.into_iter().map(|(_, e)| e).collect(), labels)
    }

    pub fn examples(&self) -> &[SeedExample] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

fn validate_record(id: &str, text: &str) -> Result<()> {
    if id.is_empty() {
        return Err(Error::Invalid("empty id".into()));
    }
    if text.trim().is_empty() {
        return Err(Error::Invalid(format!("record `{id}` has empty text")));
    }
    Ok(())
}

fn at_line(origin: &Path, line: usize, err: Error) -> Error {
    match err {
        Error::Invalid(message) => Error::Parse {
            path: origin.to_path_buf(),
            line,
            message,
        },
        other => other,
    }
}
