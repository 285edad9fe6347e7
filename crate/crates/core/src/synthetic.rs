//! Small clustered corpora with random word vectors, for smoke tests and
//! demonstrations.
//!
//! Every cluster is one document with its own vocabulary arranged in a ring.
//! Sentence `k` of a cluster draws its words from a short arc starting at
//! ring position `k·stride`, so neighbouring sentences share most of their words
//! while different clusters share none.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::corpus::{Corpus, DEFAULT_MAX_LEN};
use crate::error::Result;
use crate::wordvec::WordTable;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub clusters: usize,
    pub sentences_per_cluster: usize,
    pub words_per_cluster: usize,
    pub sentence_len: usize,
    /// Length of the arc a sentence samples from.
    pub arc: usize,
    /// Ring positions between the arcs of consecutive sentences.
    pub stride: usize,
    pub dim: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            clusters: 5,
            sentences_per_cluster: 40,
            words_per_cluster: 24,
            sentence_len: 8,
            arc: 3,
            stride: 1,
            dim: 16,
            seed: 7,
        }
    }
}

pub fn word(cluster: usize, position: usize) -> String {
    format!("c{cluster}w{position}")
}

/// Corpus text (blank line between clusters) and the matching word table.
pub fn generate(spec: &SyntheticSpec) -> Result<(String, WordTable)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut table = WordTable::new(spec.dim);
    for c in 0..spec.clusters {
        for p in 0..spec.words_per_cluster {
            let v: Vec<f64> = (0..spec.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            table.insert(&word(c, p), &v)?;
        }
    }
    let mut text = String::new();
    for c in 0..spec.clusters {
        if c > 0 {
            text.push('\n');
        }
        for k in 0..spec.sentences_per_cluster {
            let words: Vec<String> = (0..spec.sentence_len)
                .map(|_| {
                    let p = (k * spec.stride + rng.random_range(0..spec.arc)) % spec.words_per_cluster;
                    word(c, p)
                })
                .collect();
            text.push_str(&words.join(" "));
            text.push('\n');
        }
    }
    Ok((text, table))
}

/// Parsed corpus and word table.
pub fn corpus(spec: &SyntheticSpec) -> Result<(Corpus, WordTable)> {
    let (text, table) = generate(spec)?;
    Ok((Corpus::parse(&text, DEFAULT_MAX_LEN), table))
}

/// The table in the whitespace-separated text format, with a header line.
pub fn vectors_text(table: &WordTable) -> String {
    let mut out = format!("{} {}\n", table.len(), table.dim());
    for w in table.words() {
        out.push_str(w);
        for x in table.vector(w).expect("listed word") {
            out.push(' ');
            out.push_str(&x.to_string());
        }
        out.push('\n');
    }
    out
}
