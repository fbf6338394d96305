//! Reader for GloVe-style text vectors: one token followed by `dim`
//! space-separated floats per line.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use super::{EncoderError, Vocabulary, PAD, UNK};
use crate::numerics::Matrix;

#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    /// `|V| × dim`; rows of tokens absent from the file are zero.
    pub matrix: Matrix,
    /// Vocabulary tokens found in the file.
    pub found: usize,
    /// `(line, token)` of every ignored duplicate line.
    pub duplicates: Vec<(usize, String)>,
}

pub fn load_embeddings(
    path: impl AsRef<Path>,
    vocab: &Vocabulary,
    dim: usize,
) -> Result<EmbeddingTable, EncoderError> {
    let file = File::open(path)?;
    parse_embeddings(BufReader::new(file), vocab, dim)
}

pub fn parse_embeddings<R: BufRead>(
    reader: R,
    vocab: &Vocabulary,
    dim: usize,
) -> Result<EmbeddingTable, EncoderError> {
    let mut matrix = Matrix::zeros(vocab.len(), dim);
    let mut seen = HashSet::new();
    let mut duplicates = Vec::new();
    let mut found = 0;
    let mut values = Vec::with_capacity(dim);
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| EncoderError::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(' ');
        let token = parts.next().unwrap_or_default();
        values.clear();
        for p in parts {
            let v: f64 = p.parse().map_err(|_| EncoderError::Parse {
                line: lineno,
                message: format!("bad float {p:?}"),
            })?;
            if !v.is_finite() {
                return Err(EncoderError::Parse {
                    line: lineno,
                    message: format!("non-finite value {p:?}"),
                });
            }
            values.push(v);
        }
        if values.len() != dim {
            return Err(EncoderError::DimMismatch {
                line: lineno,
                expected: dim,
                found: values.len(),
            });
        }
        if !seen.insert(token.to_string()) {
            log::warn!("duplicate embedding for {token:?} on line {lineno}; keeping the first");
            duplicates.push((lineno, token.to_string()));
            continue;
        }
        if let Some(idx) = vocab.get(token) {
            if idx == PAD || idx == UNK {
                continue;
            }
            matrix.row_mut(idx).copy_from_slice(&values);
            found += 1;
        }
    }
    Ok(EmbeddingTable {
        matrix,
        found,
        duplicates,
    })
}
