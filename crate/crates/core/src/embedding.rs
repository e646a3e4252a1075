//! Label similarity from a word-vector table.
//!
//! The table is read from the plain word2vec/GloVe text layout: an optional
//! `"<count> <dim>"` header, then `token v1 v2 ... vdim` per line.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use thiserror::Error;

use crate::graph::normalize_label;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("cannot read embedding table: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: expected {expected} components, found {found}")]
    DimensionMismatch { line: usize, expected: usize, found: usize },
    #[error("line {line}: {value:?} is not a finite number")]
    BadValue { line: usize, value: String },
    #[error("embedding table has no vectors")]
    EmptyTable,
}

/// Source of the similarity score between two labels, in `[-1, 1]`.
pub trait LabelSimilarity: Sync {
    fn similarity(&self, a: &str, b: &str) -> f64;
}

/// Exact-match similarity: 1 for equal normalized labels, else 0. Used when
/// no embedding table is configured.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactMatch;

impl LabelSimilarity for ExactMatch {
    fn similarity(&self, a: &str, b: &str) -> f64 {
        if normalize_label(a) == normalize_label(b) {
            1.0
        } else {
            0.0
        }
    }
}

/// Immutable token → vector table with lowercase keys.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dimension: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, EmbeddingError> {
        Self::from_reader(BufReader::new(File::open(path)?))
    }

    pub fn from_reader(reader: impl BufRead) -> Result<Self, EmbeddingError> {
        let mut dimension: Option<usize> = None;
        let mut vectors: HashMap<String, Vec<f64>> = HashMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let mut fields = line.split_whitespace();
            let Some(token) = fields.next() else {
                continue;
            };
            let rest: Vec<&str> = fields.collect();
            if i == 0 && rest.len() == 1 && token.parse::<usize>().is_ok() {
                if let Ok(dim) = rest[0].parse::<usize>() {
                    dimension = Some(dim);
                    continue;
                }
            }
            let expected = *dimension.get_or_insert(rest.len());
            if rest.len() != expected || expected == 0 {
                return Err(EmbeddingError::DimensionMismatch { line: lineno, expected, found: rest.len() });
            }
            let vector = rest
                .iter()
                .map(|v| match v.parse::<f64>() {
                    Ok(x) if x.is_finite() => Ok(x),
                    _ => Err(EmbeddingError::BadValue { line: lineno, value: v.to_string() }),
                })
                .collect::<Result<Vec<_>, _>>()?;
            let key = token.to_lowercase();
            if vectors.contains_key(&key) {
                log::warn!("embedding table line {lineno}: duplicate token {key:?}, keeping first");
                continue;
            }
            vectors.insert(key, vector);
        }
        match dimension {
            Some(dimension) if !vectors.is_empty() => Ok(Self { dimension, vectors }),
            _ => Err(EmbeddingError::EmptyTable),
        }
    }

    /// Build from in-memory rows; every row must have the same length.
    pub fn from_entries<K, I>(entries: I) -> Result<Self, EmbeddingError>
    where
        K: AsRef<str>,
        I: IntoIterator<Item = (K, Vec<f64>)>,
    {
        let mut dimension = None;
        let mut vectors = HashMap::new();
        for (i, (token, vector)) in entries.into_iter().enumerate() {
            let expected = *dimension.get_or_insert(vector.len());
            if vector.len() != expected || expected == 0 {
                return Err(EmbeddingError::DimensionMismatch { line: i + 1, expected, found: vector.len() });
            }
            if let Some(bad) = vector.iter().find(|x| !x.is_finite()) {
                return Err(EmbeddingError::BadValue { line: i + 1, value: bad.to_string() });
            }
            vectors.entry(token.as_ref().to_lowercase()).or_insert(vector);
        }
        match dimension {
            Some(dimension) if !vectors.is_empty() => Ok(Self { dimension, vectors }),
            _ => Err(EmbeddingError::EmptyTable),
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(&token.to_lowercase()).map(Vec::as_slice)
    }

    /// Vector for a label; multi-word labels average the tokens present.
    pub fn embed_label(&self, label: &str) -> Option<Vec<f64>> {
        let normalized = normalize_label(label);
        let mut sum = vec![0.0; self.dimension];
        let mut found = 0usize;
        for token in normalized.split(' ') {
            if let Some(v) = self.vectors.get(token) {
                sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
                found += 1;
            }
        }
        if found == 0 {
            return None;
        }
        if found > 1 {
            let n = found as f64;
            sum.iter_mut().for_each(|s| *s /= n);
        }
        Some(sum)
    }

    /// Cosine similarity of the embedded labels. Equal normalized labels
    /// score exactly 1; when either side has no usable vector the score falls
    /// back to exact match.
    pub fn label_similarity(&self, a: &str, b: &str) -> f64 {
        let (na, nb) = (normalize_label(a), normalize_label(b));
        if na == nb {
            return 1.0;
        }
        match (self.embed_label(&na), self.embed_label(&nb)) {
            (Some(u), Some(v)) => cosine(&u, &v).unwrap_or(0.0),
            _ => 0.0,
        }
    }
}

impl LabelSimilarity for EmbeddingTable {
    fn similarity(&self, a: &str, b: &str) -> f64 {
        self.label_similarity(a, b)
    }
}

/// Cosine of two equal-length vectors; `None` if either has zero norm.
pub fn cosine(u: &[f64], v: &[f64]) -> Option<f64> {
    let dot: f64 = u.iter().zip(v).map(|(x, y)| x * y).sum();
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return None;
    }
    Some((dot / (nu * nv)).clamp(-1.0, 1.0))
}
