//! Segment-level speaker embeddings and their on-disk format.
//!
//! Binary file: magic `EMB1`, little-endian `u32` count `n`, `u32` dimension
//! `d`, then `n * d` little-endian `f32` values row-major. A JSON sidecar
//! (same path, `.json` extension) holds one `{"start", "end", "channel"}`
//! object per vector.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CountError;

const MAGIC: &[u8; 4] = b"EMB1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMeta {
    pub start: f64,
    pub end: f64,
    pub channel: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    dim: usize,
    vectors: Vec<Vec<f32>>,
    meta: Vec<EmbeddingMeta>,
    /// Fixed-length segment bins each vector was tagged with, if resegmented.
    bins: Vec<Vec<u32>>,
}

impl EmbeddingSet {
    pub fn new(
        dim: usize,
        vectors: Vec<Vec<f32>>,
        meta: Vec<EmbeddingMeta>,
    ) -> Result<Self, CountError> {
        if dim < 2 {
            return Err(CountError::InvalidInput(format!("embedding dimension {dim} < 2")));
        }
        if vectors.len() != meta.len() {
            return Err(CountError::InvalidInput(format!(
                "{} vectors but {} sidecar entries",
                vectors.len(),
                meta.len()
            )));
        }
        for (i, v) in vectors.iter().enumerate() {
            if v.len() != dim {
                return Err(CountError::DimensionMismatch {
                    index: i,
                    expected: dim,
                    found: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(CountError::InvalidInput(format!("vector {i} has non-finite values")));
            }
        }
        for (i, m) in meta.iter().enumerate() {
            if !(m.start.is_finite() && m.end.is_finite() && m.end > m.start) {
                return Err(CountError::InvalidInput(format!(
                    "span {i} ({}, {}) is empty or invalid",
                    m.start, m.end
                )));
            }
        }
        let bins = vec![Vec::new(); vectors.len()];
        Ok(Self {
            dim,
            vectors,
            meta,
            bins,
        })
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            vectors: Vec::new(),
            meta: Vec::new(),
            bins: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[Vec<f32>] {
        &self.vectors
    }

    pub fn meta(&self) -> &[EmbeddingMeta] {
        &self.meta
    }

    pub fn bins(&self) -> &[Vec<u32>] {
        &self.bins
    }

    /// Distinct segment bins across the set.
    pub fn distinct_bins(&self) -> BTreeSet<u32> {
        self.bins.iter().flatten().copied().collect()
    }

    /// Subset of embeddings recorded on the given channels.
    pub fn filter_channels(&self, channels: &[String]) -> EmbeddingSet {
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| channels.contains(&self.meta[i].channel))
            .collect();
        EmbeddingSet {
            dim: self.dim,
            vectors: keep.iter().map(|&i| self.vectors[i].clone()).collect(),
            meta: keep.iter().map(|&i| self.meta[i].clone()).collect(),
            bins: keep.iter().map(|&i| self.bins[i].clone()).collect(),
        }
    }
}

/// Tags every embedding with the fixed `seg_len_s` bins its span touches.
/// Vectors are carried over unchanged.
pub fn resegment_embeddings(emb: &EmbeddingSet, seg_len_s: f64) -> EmbeddingSet {
    let mut out = emb.clone();
    out.bins = emb
        .meta
        .iter()
        .map(|m| {
            let first = (m.start / seg_len_s).floor().max(0.0) as u32;
            let last = ((m.end / seg_len_s).ceil() as u32).saturating_sub(1).max(first);
            (first..=last).collect()
        })
        .collect();
    out
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn write_embeddings(path: impl AsRef<Path>, emb: &EmbeddingSet) -> Result<(), CountError> {
    let path = path.as_ref();
    let mut bytes = Vec::with_capacity(12 + emb.len() * emb.dim * 4);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(emb.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&(emb.dim as u32).to_le_bytes());
    for v in &emb.vectors {
        for x in v {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
    }
    std::fs::write(path, bytes)?;
    std::fs::write(
        sidecar_path(path),
        serde_json::to_string_pretty(&emb.meta).map_err(|e| CountError::Format(e.to_string()))? + "\n",
    )?;
    Ok(())
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingSet, CountError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(CountError::Format(format!(
            "{}: missing EMB1 header",
            path.display()
        )));
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = 12 + n * d * 4;
    if bytes.len() != expected {
        return Err(CountError::Format(format!(
            "{}: expected {expected} bytes for {n}x{d}, found {}",
            path.display(),
            bytes.len()
        )));
    }
    let vectors = bytes[12..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect::<Vec<f32>>()
        .chunks(d.max(1))
        .map(<[f32]>::to_vec)
        .collect::<Vec<_>>();
    let sidecar = sidecar_path(path);
    let meta: Vec<EmbeddingMeta> = serde_json::from_str(&std::fs::read_to_string(&sidecar)?)
        .map_err(|e| CountError::Format(format!("{}: {e}", sidecar.display())))?;
    if n == 0 {
        if !meta.is_empty() {
            return Err(CountError::InvalidInput("sidecar lists spans for an empty set".into()));
        }
        return Ok(EmbeddingSet::empty(d));
    }
    EmbeddingSet::new(d, vectors, meta)
}
