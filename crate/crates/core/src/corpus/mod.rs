//! Corpus ingestion: JSONL documents, truncation, vocabulary, pretrained
//! vectors and batching.

pub mod synthetic;
mod vectors;
mod vocab;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use vectors::{load_word_vectors, parse_word_vectors, random_embeddings, WordVectors, INIT_RANGE};
pub use vocab::{build_vocab, Vocabulary, BOS, EOS, PAD, RESERVED, UNK};

/// One pre-tokenized, sentence-split document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Document {
    pub id: String,
    pub sentences: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<Vec<Vec<String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<u8>>,
}

impl Document {
    pub fn new(id: impl Into<String>, sentences: Vec<Vec<String>>) -> Self {
        Self {
            id: id.into(),
            sentences,
            summary: None,
            labels: None,
        }
    }

    /// Convenience constructor from whitespace-separated sentence strings.
    pub fn from_text(id: impl Into<String>, sentences: &[&str]) -> Self {
        Self::new(id, sentences.iter().map(|s| tokens(s)).collect())
    }

    pub fn with_summary(mut self, summary: &[&str]) -> Self {
        self.summary = Some(summary.iter().map(|s| tokens(s)).collect());
        self
    }

    pub fn with_labels(mut self, labels: Vec<u8>) -> Self {
        self.labels = Some(labels);
        self
    }

    pub fn num_sentences(&self) -> usize {
        self.sentences.len()
    }

    /// Checks the structural invariants of a loaded document.
    pub fn validate(&self) -> Result<()> {
        if self.sentences.is_empty() {
            return Err(Error::precondition(format!("document `{}` has no sentences", self.id)));
        }
        if self.sentences.iter().any(Vec::is_empty) {
            return Err(Error::precondition(format!(
                "document `{}` has an empty sentence",
                self.id
            )));
        }
        if let Some(labels) = &self.labels {
            if labels.len() != self.sentences.len() {
                return Err(Error::precondition(format!(
                    "document `{}` has {} labels for {} sentences",
                    self.id,
                    labels.len(),
                    self.sentences.len()
                )));
            }
            if labels.iter().any(|l| *l > 1) {
                return Err(Error::precondition(format!(
                    "document `{}` has a label outside {{0, 1}}",
                    self.id
                )));
            }
        }
        Ok(())
    }

    /// Keeps the first `max_sentences` sentences and the first
    /// `max_words` tokens of each. Labels follow their sentences.
    pub fn truncate(&mut self, max_sentences: usize, max_words: usize) {
        self.sentences.truncate(max_sentences);
        for s in &mut self.sentences {
            s.truncate(max_words);
        }
        if let Some(labels) = &mut self.labels {
            labels.truncate(max_sentences);
        }
    }
}

/// Splits on whitespace.
pub fn tokens(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_owned).collect()
}

/// Truncation limits and sizes that govern ingestion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub max_sentences: usize,
    pub max_words_per_sentence: usize,
    pub vocab_cap: usize,
    pub embedding_dim: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            max_sentences: 100,
            max_words_per_sentence: 50,
            vocab_cap: 150_000,
            embedding_dim: 100,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("max_sentences", self.max_sentences),
            ("max_words_per_sentence", self.max_words_per_sentence),
            ("vocab_cap", self.vocab_cap),
            ("embedding_dim", self.embedding_dim),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// Documents read from a corpus file.
#[derive(Clone, Debug, Default)]
pub struct Corpus {
    pub documents: Vec<Document>,
    /// Lines whose document had no non-empty sentence.
    pub skipped: usize,
}

pub fn load_corpus(path: &Path, config: &CorpusConfig) -> Result<Corpus> {
    let file = File::open(path)?;
    parse_corpus(BufReader::new(file), path, config)
}

/// Reads JSONL documents from `reader`; `path` is only used in errors.
pub fn parse_corpus(reader: impl BufRead, path: &Path, config: &CorpusConfig) -> Result<Corpus> {
    config.validate()?;
    let mut corpus = Corpus::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: PathBuf::from(path),
            line: i + 1,
            message,
        };
        let mut doc: Document = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        if let Some(labels) = &doc.labels {
            if labels.len() != doc.sentences.len() {
                return Err(parse_err(format!(
                    "{} labels for {} sentences",
                    labels.len(),
                    doc.sentences.len()
                )));
            }
        }
        drop_empty_sentences(&mut doc);
        if doc.sentences.is_empty() {
            corpus.skipped += 1;
            continue;
        }
        doc.truncate(config.max_sentences, config.max_words_per_sentence);
        doc.validate().map_err(|e| parse_err(e.to_string()))?;
        corpus.documents.push(doc);
    }
    Ok(corpus)
}

fn drop_empty_sentences(doc: &mut Document) {
    if doc.sentences.iter().all(|s| !s.is_empty()) {
        return;
    }
    let keep: Vec<bool> = doc.sentences.iter().map(|s| !s.is_empty()).collect();
    doc.sentences.retain(|s| !s.is_empty());
    if let Some(labels) = &mut doc.labels {
        let mut it = keep.iter();
        labels.retain(|_| *it.next().unwrap());
    }
}

pub fn write_corpus(path: &Path, docs: &[Document]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for doc in docs {
        serde_json::to_writer(&mut out, doc)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Maps every token to its vocabulary index; unknown tokens map to UNK.
pub fn encode(doc: &Document, vocab: &Vocabulary) -> Vec<Vec<usize>> {
    doc.sentences.iter().map(|s| vocab.encode(s)).collect()
}

/// Shuffled index batches covering `0..n` once.
pub fn batches(n: usize, batch_size: usize, rng: &mut impl Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}
