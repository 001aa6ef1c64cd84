//! Exact cosine nearest-neighbour search over unit-norm embeddings.
//!
//! Search is a brute-force scan; ties go to the earliest inserted item.
//!
//! Persisted layout (all little-endian):
//!
//! ```text
//! magic  b"TWIX"
//! u32    format version (1)
//! u32    dimension
//! u64    item count
//! f32    count * dimension vector components, row-major
//! ```
//!
//! Item metadata (id, handle, created_at) lives in a JSON-lines sidecar at
//! `<path>.meta.jsonl`, one line per item in index order.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Timestamp, Tweet};
use crate::providers::{embed_batch, EmbeddingProvider};

pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;
const MAGIC: &[u8; 4] = b"TWIX";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("dimension mismatch: expected {expected}, got {got} (item {id})")]
    DimensionMismatch { expected: usize, got: usize, id: String },
    #[error("vector for item {id} has norm {norm}, expected 1")]
    NotUnitNorm { id: String, norm: f64 },
    #[error("duplicate item id {0}")]
    DuplicateId(String),
    #[error("zero vector")]
    ZeroVector,
    #[error("empty index")]
    Empty,
    #[error("index file {}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error("index io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemMeta {
    pub id: String,
    pub handle: String,
    pub created_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedItem {
    pub meta: ItemMeta,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SearchFilter {
    pub handle: Option<String>,
    /// Keep only items with `created_at` strictly before this instant.
    pub before: Option<Timestamp>,
}

impl SearchFilter {
    pub fn accepts(&self, meta: &ItemMeta) -> bool {
        self.handle.as_deref().is_none_or(|h| meta.handle == h)
            && self.before.is_none_or(|t| meta.created_at < t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hit {
    pub id: String,
    pub score: f64,
    /// Insertion position in the index.
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    dim: usize,
    meta: Vec<ItemMeta>,
    data: Vec<f64>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine similarity `u·v / (|u||v|)`.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, RetrievalError> {
    if u.len() != v.len() {
        return Err(RetrievalError::DimensionMismatch {
            expected: u.len(),
            got: v.len(),
            id: "<query>".into(),
        });
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(RetrievalError::ZeroVector);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Validates dimensions, unit norms and id uniqueness.
pub fn build_index(items: Vec<EmbeddedItem>) -> Result<VectorIndex, RetrievalError> {
    let dim = items.first().map(|i| i.vector.len()).ok_or(RetrievalError::Empty)?;
    let mut seen = HashSet::with_capacity(items.len());
    let mut meta = Vec::with_capacity(items.len());
    let mut data = Vec::with_capacity(items.len() * dim);
    for item in items {
        if item.vector.len() != dim {
            return Err(RetrievalError::DimensionMismatch {
                expected: dim,
                got: item.vector.len(),
                id: item.meta.id,
            });
        }
        let n = norm(&item.vector);
        if (n - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(RetrievalError::NotUnitNorm {
                id: item.meta.id,
                norm: n,
            });
        }
        if !seen.insert(item.meta.id.clone()) {
            return Err(RetrievalError::DuplicateId(item.meta.id));
        }
        data.extend_from_slice(&item.vector);
        meta.push(item.meta);
    }
    Ok(VectorIndex { dim, meta, data })
}

impl VectorIndex {
    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.meta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meta.is_empty()
    }

    pub fn meta(&self, position: usize) -> &ItemMeta {
        &self.meta[position]
    }

    pub fn vector(&self, position: usize) -> &[f64] {
        &self.data[position * self.dim..(position + 1) * self.dim]
    }

    pub fn position_of(&self, id: &str) -> Option<usize> {
        self.meta.iter().position(|m| m.id == id)
    }

    /// Exact maximum-dot-product item among those passing `filter`; `None`
    /// if nothing passes. Ties keep the earliest inserted item.
    pub fn nearest(&self, query: &[f64], filter: &SearchFilter) -> Result<Option<Hit>, RetrievalError> {
        if query.len() != self.dim {
            return Err(RetrievalError::DimensionMismatch {
                expected: self.dim,
                got: query.len(),
                id: "<query>".into(),
            });
        }
        let mut best: Option<(usize, f64)> = None;
        for (pos, meta) in self.meta.iter().enumerate() {
            if !filter.accepts(meta) {
                continue;
            }
            let score = dot(query, self.vector(pos));
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((pos, score));
            }
        }
        Ok(best.map(|(pos, score)| Hit {
            id: self.meta[pos].id.clone(),
            score,
            position: pos,
        }))
    }

    fn meta_path(path: &Path) -> PathBuf {
        let mut p = path.as_os_str().to_owned();
        p.push(".meta.jsonl");
        PathBuf::from(p)
    }

    /// Writes the vector file and its metadata sidecar. Components are
    /// stored as f32.
    pub fn save(&self, path: &Path) -> Result<(), RetrievalError> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        out.write_all(MAGIC)?;
        out.write_all(&FORMAT_VERSION.to_le_bytes())?;
        out.write_all(&(self.dim as u32).to_le_bytes())?;
        out.write_all(&(self.meta.len() as u64).to_le_bytes())?;
        for &x in &self.data {
            out.write_all(&(x as f32).to_le_bytes())?;
        }
        out.flush()?;
        let mut side = std::io::BufWriter::new(std::fs::File::create(Self::meta_path(path))?);
        for m in &self.meta {
            serde_json::to_writer(&mut side, m).map_err(std::io::Error::other)?;
            side.write_all(b"\n")?;
        }
        side.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<VectorIndex, RetrievalError> {
        let bad = |message: String| RetrievalError::Format {
            path: path.to_path_buf(),
            message,
        };
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        if bytes.len() < 20 || &bytes[..4] != MAGIC {
            return Err(bad("missing header".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let dim = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let count = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = &bytes[20..];
        if body.len() != count * dim * 4 {
            return Err(bad(format!(
                "expected {} vector bytes, found {}",
                count * dim * 4,
                body.len()
            )));
        }
        let data: Vec<f64> = body
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
            .collect();
        let side = std::fs::read_to_string(Self::meta_path(path))?;
        let meta: Vec<ItemMeta> = side
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()
            .map_err(|e| bad(format!("metadata: {e}")))?;
        if meta.len() != count {
            return Err(bad(format!("{count} vectors but {} metadata rows", meta.len())));
        }
        let items = meta
            .into_iter()
            .enumerate()
            .map(|(i, m)| EmbeddedItem {
                meta: m,
                vector: data[i * dim..(i + 1) * dim].to_vec(),
            })
            .collect::<Vec<_>>();
        if items.is_empty() {
            return Ok(VectorIndex {
                dim,
                meta: Vec::new(),
                data: Vec::new(),
            });
        }
        build_index(items)
    }
}

/// Embeds `tweets` (unit-normalized) and indexes them in the given order.
pub fn index_tweets(
    tweets: &[&Tweet],
    provider: &dyn EmbeddingProvider,
) -> crate::Result<VectorIndex> {
    if tweets.is_empty() {
        return Err(RetrievalError::Empty.into());
    }
    let texts: Vec<String> = tweets.iter().map(|t| t.text.clone()).collect();
    let vectors = embed_batch(provider, &texts)?;
    let items = tweets
        .iter()
        .zip(vectors)
        .map(|(t, vector)| EmbeddedItem {
            meta: ItemMeta {
                id: t.tweet_id.clone(),
                handle: t.handle.clone(),
                created_at: t.created_at,
            },
            vector,
        })
        .collect();
    Ok(build_index(items)?)
}
