//! Frozen pretrained word vectors in the word2vec/fastText text format.

use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const DEFAULT_DIM: usize = 300;

/// Token to row lookup over a `V x D` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct WordTable {
    vocab: HashMap<String, usize>,
    words: Vec<String>,
    matrix: Vec<f64>,
    dim: usize,
}

impl WordTable {
    pub fn new(dim: usize) -> Self {
        WordTable {
            vocab: HashMap::new(),
            words: Vec::new(),
            matrix: Vec::new(),
            dim,
        }
    }

    /// Adds a word unless it is already present. Returns whether it was added.
    pub fn insert(&mut self, word: &str, vector: &[f64]) -> Result<bool> {
        if vector.len() != self.dim {
            return Err(Error::Dimension(format!(
                "vector for {word:?} has {} values, table dimension is {}",
                vector.len(),
                self.dim
            )));
        }
        if let Some(bad) = vector.iter().find(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!("non-finite value {bad} for {word:?}")));
        }
        if self.vocab.contains_key(word) {
            return Ok(false);
        }
        self.vocab.insert(word.to_string(), self.words.len());
        self.words.push(word.to_string());
        self.matrix.extend_from_slice(vector);
        Ok(true)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn index(&self, word: &str) -> Option<usize> {
        self.vocab.get(word).copied()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn vector(&self, word: &str) -> Option<&[f64]> {
        self.index(word)
            .map(|i| &self.matrix[i * self.dim..(i + 1) * self.dim])
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    /// Stacks the vectors of `tokens` as the columns of a `D x M` matrix.
    /// Unknown words become zero columns.
    pub fn embed_sentence<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Tensor> {
        if tokens.is_empty() {
            return Err(Error::EmptySentence);
        }
        let m = tokens.len();
        let mut x = Tensor::zeros(&[self.dim, m]);
        for (j, tok) in tokens.iter().enumerate() {
            if let Some(v) = self.vector(tok.as_ref()) {
                for (i, &val) in v.iter().enumerate() {
                    x.set(i, j, val);
                }
            }
        }
        Ok(x)
    }
}

/// Reads `token f1 … fD` lines, consuming an optional `count dim` header.
pub fn load_vectors(path: impl AsRef<Path>, expected_dim: usize) -> Result<WordTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut table = WordTable::new(expected_dim);
    let mut saw_line = false;
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let lineno = k + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let first_content = !saw_line;
        saw_line = true;
        if first_content && is_header(&fields) {
            continue;
        }
        let values = &fields[1..];
        if values.len() != expected_dim {
            return Err(Error::format(
                path,
                lineno,
                format!("expected {expected_dim} values, found {}", values.len()),
            ));
        }
        let vector = values
            .iter()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::format(path, lineno, format!("bad number: {e}")))?;
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::format(path, lineno, "non-finite value"));
        }
        table.insert(fields[0], &vector)?;
    }
    if table.is_empty() {
        return Err(Error::format(path, 0, "no word vectors found"));
    }
    Ok(table)
}

fn is_header(fields: &[&str]) -> bool {
    fields.len() == 2 && fields.iter().all(|f| f.parse::<u64>().is_ok())
}
