//! Exact cosine k-NN index over skeleton embeddings.
//!
//! On-disk layout (all integers little-endian):
//!
//! ```text
//! "SKIX" | version u8 | dim u32 | count u64
//! count × ( id u64 | dim × f32 | text_len u32 | text UTF-8 )
//! crc32 u32 over every preceding byte
//! ```

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

pub const MAGIC: &[u8; 4] = b"SKIX";
pub const FORMAT_VERSION: u8 = 1;

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("dimension mismatch: index has {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("vector norm {0} is not 1")]
    NotUnitNorm(f64),
    #[error("index is empty")]
    EmptyIndex,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("unsupported index format version {0}")]
    VersionMismatch(u8),
    #[error("corrupt index: {0}")]
    CorruptIndex(&'static str),
    #[cfg(feature = "std")]
    #[error("index io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub example_id: u64,
    pub vector: Vec<f32>,
    pub skeleton_text: String,
}

impl IndexEntry {
    /// Normalizes `vector` and stores it at `f32` precision.
    pub fn from_f64(example_id: u64, vector: &[f64], skeleton_text: impl Into<String>) -> Self {
        let n = libm::sqrt(vector.iter().map(|x| x * x).sum::<f64>());
        let scale = if n > 0.0 { 1.0 / n } else { 0.0 };
        IndexEntry {
            example_id,
            vector: vector.iter().map(|x| (x * scale) as f32).collect(),
            skeleton_text: skeleton_text.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub example_id: u64,
    pub similarity: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SkeletonIndex {
    dim: Option<usize>,
    entries: Vec<IndexEntry>,
}

fn norm32(v: &[f32]) -> f64 {
    libm::sqrt(v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>())
}

/// Cosine similarity computed in `f64`; zero vectors have similarity 0.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum();
    let n = norm32(a) * norm32(b);
    if n == 0.0 {
        0.0
    } else {
        dot / n
    }
}

impl SkeletonIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    /// The first insert fixes the index dimension.
    pub fn add(&mut self, entry: IndexEntry) -> Result<(), IndexError> {
        if let Some(d) = self.dim {
            if entry.vector.len() != d {
                return Err(IndexError::DimensionMismatch { expected: d, got: entry.vector.len() });
            }
        }
        let n = norm32(&entry.vector);
        if (n - 1.0).abs() > 1e-6 {
            return Err(IndexError::NotUnitNorm(n));
        }
        self.dim = Some(entry.vector.len());
        self.entries.push(entry);
        Ok(())
    }

    pub fn search_knn(&self, query: &[f32], k: usize) -> Result<Vec<Neighbor>, IndexError> {
        self.search_knn_filtered(query, k, |_| true)
    }

    /// Top-`k` by cosine similarity among entries accepted by `keep`, in
    /// non-increasing similarity; ties go to the lower example id, then to
    /// insertion order.
    pub fn search_knn_filtered(
        &self,
        query: &[f32],
        k: usize,
        keep: impl Fn(&IndexEntry) -> bool,
    ) -> Result<Vec<Neighbor>, IndexError> {
        if k == 0 {
            return Err(IndexError::InvalidK);
        }
        let dim = self.dim.ok_or(IndexError::EmptyIndex)?;
        if query.len() != dim {
            return Err(IndexError::DimensionMismatch { expected: dim, got: query.len() });
        }
        let qn = norm32(query);
        let mut scored: Vec<(f64, u64, usize)> = self
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| keep(e))
            .map(|(pos, e)| {
                let dot: f64 = query.iter().zip(&e.vector).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum();
                let n = qn * norm32(&e.vector);
                let sim = if n == 0.0 { 0.0 } else { dot / n };
                (sim, e.example_id, pos)
            })
            .collect();
        let by_rank = |a: &(f64, u64, usize), b: &(f64, u64, usize)| {
            b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
        };
        if scored.len() > k {
            scored.select_nth_unstable_by(k - 1, by_rank);
            scored.truncate(k);
        }
        scored.sort_by(by_rank);
        Ok(scored.into_iter().map(|(similarity, example_id, _)| Neighbor { example_id, similarity }).collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let dim = self.dim.unwrap_or(0);
        let mut out = Vec::with_capacity(17 + self.entries.len() * (12 + dim * 4 + 32) + 4);
        out.extend_from_slice(MAGIC);
        out.push(FORMAT_VERSION);
        out.extend_from_slice(&(dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u64).to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&e.example_id.to_le_bytes());
            for x in &e.vector {
                out.extend_from_slice(&x.to_le_bytes());
            }
            out.extend_from_slice(&(e.skeleton_text.len() as u32).to_le_bytes());
            out.extend_from_slice(e.skeleton_text.as_bytes());
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IndexError> {
        if bytes.len() < 5 || &bytes[..4] != MAGIC {
            return Err(IndexError::CorruptIndex("bad magic"));
        }
        if bytes[4] != FORMAT_VERSION {
            return Err(IndexError::VersionMismatch(bytes[4]));
        }
        if bytes.len() < 21 {
            return Err(IndexError::CorruptIndex("truncated header"));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        if crc32fast::hash(body) != stored {
            return Err(IndexError::CorruptIndex("checksum mismatch"));
        }

        let mut r = Reader { buf: body, pos: 5 };
        let dim = r.u32()? as usize;
        let count = r.u64()?;
        let mut index = SkeletonIndex::new();
        for _ in 0..count {
            let example_id = r.u64()?;
            let vector = (0..dim).map(|_| r.f32()).collect::<Result<Vec<_>, _>>()?;
            let len = r.u32()? as usize;
            let text = core::str::from_utf8(r.take(len)?).map_err(|_| IndexError::CorruptIndex("invalid UTF-8"))?;
            index.dim = Some(dim);
            index.entries.push(IndexEntry { example_id, vector, skeleton_text: String::from(text) });
        }
        if r.pos != body.len() {
            return Err(IndexError::CorruptIndex("trailing bytes"));
        }
        Ok(index)
    }

    #[cfg(feature = "std")]
    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<(), IndexError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    #[cfg(feature = "std")]
    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, IndexError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IndexError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or(IndexError::CorruptIndex("truncated"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32, IndexError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64, IndexError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f32(&mut self) -> Result<f32, IndexError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}
