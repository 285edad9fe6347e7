//! Plain-text corpora: one sentence per line, blank lines between documents.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

pub const DEFAULT_MAX_LEN: usize = 64;

/// Lowercases, splits on whitespace, and peels leading and trailing ASCII
/// punctuation off each word as single-character tokens.
pub fn tokenize(line: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in line.split_whitespace() {
        let lower = word.to_lowercase();
        let chars: Vec<char> = lower.chars().collect();
        let lead = chars.iter().take_while(|c| c.is_ascii_punctuation()).count();
        let trail = chars[lead..]
            .iter()
            .rev()
            .take_while(|c| c.is_ascii_punctuation())
            .count();
        for c in &chars[..lead] {
            out.push(c.to_string());
        }
        if lead + trail < chars.len() {
            out.push(chars[lead..chars.len() - trail].iter().collect());
        }
        for c in &chars[chars.len() - trail..] {
            out.push(c.to_string());
        }
    }
    out
}

/// [`tokenize`] for raw bytes that may not be valid UTF-8.
pub fn tokenize_bytes(line: &[u8]) -> Result<Vec<String>> {
    let s = std::str::from_utf8(line)
        .map_err(|e| Error::Input(format!("invalid UTF-8: {e}")))?;
    Ok(tokenize(s))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sentence {
    pub tokens: Vec<String>,
    /// 1-based line number in the source file.
    pub source_line: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Corpus {
    pub documents: Vec<Vec<Sentence>>,
}

impl Corpus {
    /// Splits `text` into documents at blank lines. Lines that tokenize to
    /// nothing are dropped; long sentences keep their first `max_len` tokens.
    pub fn parse(text: &str, max_len: usize) -> Corpus {
        let mut documents = Vec::new();
        let mut current: Vec<Sentence> = Vec::new();
        for (k, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                if !current.is_empty() {
                    documents.push(std::mem::take(&mut current));
                }
                continue;
            }
            let mut tokens = tokenize(line);
            if tokens.is_empty() {
                continue;
            }
            tokens.truncate(max_len);
            current.push(Sentence {
                tokens,
                source_line: k + 1,
            });
        }
        if !current.is_empty() {
            documents.push(current);
        }
        Corpus { documents }
    }

    pub fn sentence_count(&self) -> usize {
        self.documents.iter().map(Vec::len).sum()
    }

    pub fn sentences(&self) -> impl Iterator<Item = &Sentence> {
        self.documents.iter().flatten()
    }
}

pub fn load_corpus(path: impl AsRef<Path>, max_len: usize) -> Result<Corpus> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8(bytes)
        .map_err(|e| Error::Input(format!("{}: invalid UTF-8: {e}", path.display())))?;
    Ok(Corpus::parse(&text, max_len))
}

/// A run of consecutive sentences inside one document.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Window {
    pub document: usize,
    pub start: usize,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContiguousBatch {
    pub sentences: Vec<Sentence>,
    /// `true` where a document boundary precedes the sentence.
    pub doc_break_before: Vec<bool>,
    /// Corpus-wide sentence indices, in batch order.
    pub ids: Vec<usize>,
    pub window: Window,
}

impl ContiguousBatch {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }
}

/// Cuts every document into non-overlapping windows of `n` sentences and
/// serves them in a freshly shuffled order each epoch.
///
/// Tail windows shorter than `n` are kept when they hold at least two
/// sentences.
#[derive(Clone, Debug)]
pub struct Batcher<'c> {
    corpus: &'c Corpus,
    windows: Vec<Window>,
    offsets: Vec<usize>,
    order: Vec<usize>,
    cursor: usize,
    epoch: u64,
}

impl<'c> Batcher<'c> {
    pub fn new(corpus: &'c Corpus, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Usage(format!("batch size {n} must be at least 2")));
        }
        let mut windows = Vec::new();
        for (doc, sentences) in corpus.documents.iter().enumerate() {
            let mut start = 0;
            while start < sentences.len() {
                let len = n.min(sentences.len() - start);
                if len >= 2 {
                    windows.push(Window {
                        document: doc,
                        start,
                        len,
                    });
                }
                start += n;
            }
        }
        if windows.is_empty() {
            return Err(Error::InsufficientData(
                "no document holds two or more sentences".into(),
            ));
        }
        let mut offsets = Vec::with_capacity(corpus.documents.len());
        let mut acc = 0;
        for d in &corpus.documents {
            offsets.push(acc);
            acc += d.len();
        }
        Ok(Batcher {
            corpus,
            windows,
            offsets,
            order: Vec::new(),
            cursor: 0,
            epoch: 0,
        })
    }

    pub fn windows(&self) -> &[Window] {
        &self.windows
    }

    /// Number of completed epochs.
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    /// All windows of one epoch in shuffled order.
    pub fn shuffled_epoch<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Window> {
        let mut w = self.windows.clone();
        w.shuffle(rng);
        w
    }

    pub fn materialize(&self, w: Window) -> ContiguousBatch {
        let doc = &self.corpus.documents[w.document];
        let sentences = doc[w.start..w.start + w.len].to_vec();
        let mut doc_break_before = vec![false; w.len];
        doc_break_before[0] = w.start == 0;
        let base = self.offsets[w.document] + w.start;
        ContiguousBatch {
            sentences,
            doc_break_before,
            ids: (base..base + w.len).collect(),
            window: w,
        }
    }

    /// Next batch of the endless epoch stream.
    pub fn next_batch<R: Rng + ?Sized>(&mut self, rng: &mut R) -> ContiguousBatch {
        if self.cursor == self.order.len() {
            if !self.order.is_empty() {
                self.epoch += 1;
            }
            self.order = (0..self.windows.len()).collect();
            self.order.shuffle(rng);
            self.cursor = 0;
        }
        let w = self.windows[self.order[self.cursor]];
        self.cursor += 1;
        self.materialize(w)
    }
}
