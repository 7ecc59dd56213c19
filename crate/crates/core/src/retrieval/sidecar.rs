//! Embedding sidecars: JSONL (`{"id","vec"}` per line) or the binary layout
//! of a `{"dim","count"}` JSON header line followed by `count` records of
//! `u32` LE id length, id bytes and `dim` LE `f32` values.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl::{parse_lines, write_atomic};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Embeddings {
    dim: usize,
    ids: Vec<String>,
    vectors: Vec<Vec<f32>>,
    by_id: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct Record {
    id: String,
    vec: Vec<f32>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BinaryHeader {
    dim: usize,
    count: usize,
}

impl Embeddings {
    pub fn new(records: Vec<(String, Vec<f32>)>) -> Result<Self> {
        let dim = records.first().map_or(0, |(_, v)| v.len());
        let mut out = Self {
            dim,
            ..Self::default()
        };
        for (id, v) in records {
            if v.len() != dim {
                return Err(Error::DimMismatch {
                    id,
                    expected: dim,
                    found: v.len(),
                });
            }
            if out.by_id.insert(id.clone(), out.ids.len()).is_some() {
                return Err(Error::DuplicateId(id));
            }
            out.ids.push(id);
            out.vectors.push(v);
        }
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.by_id.get(id).map(|&i| self.vectors[i].as_slice())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.ids
            .iter()
            .map(String::as_str)
            .zip(self.vectors.iter().map(Vec::as_slice))
    }

    pub fn vectors(&self) -> &[Vec<f32>] {
        &self.vectors
    }
}

/// Reads either sidecar layout, telling them apart by the first line.
pub fn read_embeddings(path: impl AsRef<Path>) -> Result<Embeddings> {
    let path = path.as_ref();
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(raw.as_slice());
    let mut first = String::new();
    reader
        .read_line(&mut first)
        .map_err(|e| Error::io(path, e))?;
    if let Ok(header) = serde_json::from_str::<BinaryHeader>(first.trim()) {
        return read_binary(reader, header, path);
    }
    let rows: Vec<(usize, Record)> = parse_lines(raw.as_slice(), path)?;
    Embeddings::new(rows.into_iter().map(|(_, r)| (r.id, r.vec)).collect())
}

fn read_binary(mut reader: impl Read, header: BinaryHeader, path: &Path) -> Result<Embeddings> {
    let corrupt = |message: String| Error::Parse {
        path: path.to_path_buf(),
        line: 2,
        message,
    };
    let mut records = Vec::with_capacity(header.count);
    let mut u32_buf = [0u8; 4];
    for n in 0..header.count {
        reader
            .read_exact(&mut u32_buf)
            .map_err(|_| corrupt(format!("record {n}: truncated id length")))?;
        let len = u32::from_le_bytes(u32_buf) as usize;
        let mut id = vec![0u8; len];
        reader
            .read_exact(&mut id)
            .map_err(|_| corrupt(format!("record {n}: truncated id")))?;
        let id = String::from_utf8(id).map_err(|_| corrupt(format!("record {n}: id is not UTF-8")))?;
        let mut v = Vec::with_capacity(header.dim);
        for _ in 0..header.dim {
            reader
                .read_exact(&mut u32_buf)
                .map_err(|_| corrupt(format!("record {n}: truncated vector")))?;
            v.push(f32::from_le_bytes(u32_buf));
        }
        records.push((id, v));
    }
    let mut rest = Vec::new();
    reader.read_to_end(&mut rest).map_err(|e| Error::io(path, e))?;
    if !rest.is_empty() {
        return Err(corrupt(format!("{} trailing bytes after {} records", rest.len(), header.count)));
    }
    let emb = Embeddings::new(records)?;
    if emb.dim != header.dim && header.count > 0 {
        return Err(corrupt("header dim disagrees with records".into()));
    }
    Ok(Embeddings {
        dim: header.dim,
        ..emb
    })
}

pub fn write_embeddings_jsonl(path: impl AsRef<Path>, emb: &Embeddings) -> Result<()> {
    let records: Vec<Record> = emb
        .iter()
        .map(|(id, v)| Record {
            id: id.to_owned(),
            vec: v.to_vec(),
        })
        .collect();
    crate::jsonl::write_jsonl(path, &records)
}

pub fn write_embeddings_binary(path: impl AsRef<Path>, emb: &Embeddings) -> Result<()> {
    let mut buf = serde_json::to_vec(&BinaryHeader {
        dim: emb.dim,
        count: emb.len(),
    })
    .expect("header serializes");
    buf.push(b'\n');
    for (id, v) in emb.iter() {
        buf.extend_from_slice(&(id.len() as u32).to_le_bytes());
        buf.extend_from_slice(id.as_bytes());
        for x in v {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    write_atomic(path, &buf)
}
