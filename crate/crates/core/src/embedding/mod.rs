//! Dense document embeddings: the EMB1 file format and the provider contract
//! through which external sentence encoders supply vectors.
//!
//! An EMB1 file is the magic `EMB1`, then `n_rows` and `dim` as little-endian
//! `u32`, then `n_rows * dim` little-endian `f32` values in row-major order.
//! Row ids live next to it in `<name>.ids.txt`, one id per line.

mod provider;

use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use thiserror::Error;

pub use provider::{
    fetch_embeddings, known_model_dim, CommandProvider, EmbedInput, EmbeddingProvider,
    HashingProvider, ProviderSpec,
};

pub const MAGIC: [u8; 4] = *b"EMB1";
pub const HEADER_LEN: usize = 12;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("not an EMB1 file (magic {0:02x?})")]
    BadMagic([u8; 4]),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("id/row mismatch: {ids} ids for {rows} rows")]
    IdMismatch { ids: usize, rows: usize },
    #[error("embedding dimension must be positive")]
    ZeroDim,
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("value buffer holds {values} floats, expected {rows}x{dim}")]
    Shape {
        values: usize,
        rows: usize,
        dim: usize,
    },
    #[error("cosine distance is undefined for a zero vector")]
    ZeroVector,
    #[error("vector lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("provider error: {0}")]
    Provider(String),
    #[error("provider returned rows out of alignment: {0}")]
    Alignment(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// An `n_rows x dim` float matrix whose row `i` belongs to `ids[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    ids: Vec<String>,
    dim: usize,
    values: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn new(ids: Vec<String>, dim: usize, values: Vec<f32>) -> Result<Self, EmbeddingError> {
        if dim == 0 {
            return Err(EmbeddingError::ZeroDim);
        }
        if values.len() != ids.len() * dim {
            return Err(EmbeddingError::Shape {
                values: values.len(),
                rows: ids.len(),
                dim,
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite {
                row: pos / dim,
                col: pos % dim,
            });
        }
        Ok(EmbeddingMatrix { ids, dim, values })
    }

    pub fn from_rows(ids: Vec<String>, rows: &[Vec<f32>]) -> Result<Self, EmbeddingError> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.len() != ids.len() {
            return Err(EmbeddingError::IdMismatch {
                ids: ids.len(),
                rows: rows.len(),
            });
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(EmbeddingError::LengthMismatch(dim, bad.len()));
        }
        EmbeddingMatrix::new(ids, dim, rows.concat())
    }

    pub fn n_rows(&self) -> usize {
        self.ids.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Copies the values into an `f64` array for the numeric stages.
    pub fn to_array(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.n_rows(), self.dim), |(i, j)| {
            f64::from(self.values[i * self.dim + j])
        })
    }

    /// Stacks matrices of equal dimension, keeping row order.
    pub fn concat(parts: &[&EmbeddingMatrix]) -> Result<Self, EmbeddingError> {
        let dim = parts.first().map_or(0, |m| m.dim);
        let mut ids = Vec::new();
        let mut values = Vec::new();
        for m in parts {
            if m.dim != dim {
                return Err(EmbeddingError::LengthMismatch(dim, m.dim));
            }
            ids.extend(m.ids.iter().cloned());
            values.extend_from_slice(&m.values);
        }
        EmbeddingMatrix::new(ids, dim, values)
    }

    /// Writes the EMB1 payload to `path` and the ids to [`ids_path`]`(path)`.
    pub fn write(&self, path: &Path) -> Result<(), EmbeddingError> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(&MAGIC)?;
        out.write_all(&(self.n_rows() as u32).to_le_bytes())?;
        out.write_all(&(self.dim as u32).to_le_bytes())?;
        for v in &self.values {
            out.write_all(&v.to_le_bytes())?;
        }
        out.flush()?;

        let mut ids = BufWriter::new(File::create(ids_path(path))?);
        for id in &self.ids {
            writeln!(ids, "{id}")?;
        }
        ids.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, EmbeddingError> {
        let mut bytes = Vec::new();
        File::open(path)?.read_to_end(&mut bytes)?;
        if bytes.len() < HEADER_LEN {
            return Err(EmbeddingError::Truncated {
                expected: HEADER_LEN,
                found: bytes.len(),
            });
        }
        let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
        if magic != MAGIC {
            return Err(EmbeddingError::BadMagic(magic));
        }
        let n_rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let expected = HEADER_LEN + n_rows * dim * 4;
        if bytes.len() != expected {
            return Err(EmbeddingError::Truncated {
                expected,
                found: bytes.len(),
            });
        }
        let values = bytes[HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();

        let ids_text = fs::read_to_string(ids_path(path))?;
        let ids: Vec<String> = ids_text.lines().map(str::to_string).collect();
        if ids.len() != n_rows {
            return Err(EmbeddingError::IdMismatch {
                ids: ids.len(),
                rows: n_rows,
            });
        }
        EmbeddingMatrix::new(ids, dim, values)
    }
}

/// Sibling ids file of an EMB1 path: `corpus.emb` -> `corpus.ids.txt`.
pub fn ids_path(path: &Path) -> PathBuf {
    path.with_extension("ids.txt")
}

/// `1 - cos(u, v)`, in `[0, 2]`.
pub fn cosine_distance(u: &[f64], v: &[f64]) -> Result<f64, EmbeddingError> {
    Ok(1.0 - cosine_similarity(u, v)?)
}

pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64, EmbeddingError> {
    if u.len() != v.len() {
        return Err(EmbeddingError::LengthMismatch(u.len(), v.len()));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(EmbeddingError::ZeroVector);
    }
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}
