//! ROUGE-1, ROUGE-2 and ROUGE-L with length-limited candidates.
//!
//! Tokens are compared verbatim: no stemming, no stopword removal. F1 is the
//! plain harmonic mean. Multi-sentence inputs are flattened in order.

use std::collections::HashMap;
use std::fmt;
use std::hash::Hash;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

impl RougeScore {
    /// Builds a score from a match count; an empty denominator yields 0 for
    /// that component.
    pub fn from_counts(matches: usize, candidate_total: usize, reference_total: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        Self::new(ratio(matches, reference_total), ratio(matches, candidate_total))
    }

    pub fn new(recall: f64, precision: f64) -> Self {
        let f1 = if recall + precision == 0.0 {
            0.0
        } else {
            2.0 * recall * precision / (recall + precision)
        };
        Self { recall, precision, f1 }
    }

    pub fn get(&self, flavor: Flavor) -> f64 {
        match flavor {
            Flavor::Recall => self.recall,
            Flavor::Precision => self.precision,
            Flavor::F1 => self.f1,
        }
    }
}

/// Which component of a [`RougeScore`] to report.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flavor {
    Recall,
    Precision,
    F1,
}

impl FromStr for Flavor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "recall" => Ok(Flavor::Recall),
            "precision" => Ok(Flavor::Precision),
            "f1" => Ok(Flavor::F1),
            _ => Err(Error::Config(format!("unknown flavor `{s}` (recall|precision|f1)"))),
        }
    }
}

impl fmt::Display for Flavor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Flavor::Recall => "recall",
            Flavor::Precision => "precision",
            Flavor::F1 => "f1",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RougeVariant {
    #[serde(rename = "r1")]
    Rouge1,
    #[serde(rename = "r2")]
    Rouge2,
    #[serde(rename = "rl")]
    RougeL,
}

impl FromStr for RougeVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "r1" => Ok(RougeVariant::Rouge1),
            "r2" => Ok(RougeVariant::Rouge2),
            "rl" => Ok(RougeVariant::RougeL),
            _ => Err(Error::Config(format!("unknown metric `{s}` (r1|r2|rl)"))),
        }
    }
}

impl fmt::Display for RougeVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RougeVariant::Rouge1 => "r1",
            RougeVariant::Rouge2 => "r2",
            RougeVariant::RougeL => "rl",
        })
    }
}

/// Candidate length budget.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum LengthLimit {
    None,
    /// UTF-8 bytes of the space-joined text.
    Bytes(usize),
    Words(usize),
}

impl FromStr for LengthLimit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad length limit `{s}` (none|bytes:N|words:N)"));
        if s == "none" {
            return Ok(LengthLimit::None);
        }
        let (kind, n) = s.split_once(':').ok_or_else(bad)?;
        let n: usize = n.parse().map_err(|_| bad())?;
        if n == 0 {
            return Err(bad());
        }
        match kind {
            "bytes" => Ok(LengthLimit::Bytes(n)),
            "words" => Ok(LengthLimit::Words(n)),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for LengthLimit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LengthLimit::None => f.write_str("none"),
            LengthLimit::Bytes(n) => write!(f, "bytes:{n}"),
            LengthLimit::Words(n) => write!(f, "words:{n}"),
        }
    }
}

impl TryFrom<String> for LengthLimit {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<LengthLimit> for String {
    fn from(l: LengthLimit) -> Self {
        l.to_string()
    }
}

/// Byte length of `tokens` joined by single spaces.
pub fn joined_bytes<S: AsRef<str>>(tokens: impl IntoIterator<Item = S>) -> usize {
    let mut total = 0;
    let mut count = 0usize;
    for t in tokens {
        total += t.as_ref().len();
        count += 1;
    }
    total + count.saturating_sub(1)
}

/// Flattens sentences and cuts the token stream to the limit. A byte limit
/// keeps every whole token whose end, in the space-joined string, falls
/// within the budget.
pub fn truncate<S: AsRef<str>>(candidate: &[Vec<S>], limit: LengthLimit) -> Vec<String> {
    let flat = candidate.iter().flatten().map(|t| t.as_ref().to_owned());
    match limit {
        LengthLimit::None => flat.collect(),
        LengthLimit::Words(w) => flat.take(w).collect(),
        LengthLimit::Bytes(b) => {
            let mut used = 0;
            let mut out = Vec::new();
            for t in flat {
                let next = if out.is_empty() { t.len() } else { used + 1 + t.len() };
                if next > b {
                    break;
                }
                used = next;
                out.push(t);
            }
            out
        }
    }
}

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for g in tokens.windows(n) {
            *counts.entry(g).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram overlap. Panics if `n == 0`.
pub fn rouge_n<T: Eq + Hash>(candidate: &[T], reference: &[T], n: usize) -> RougeScore {
    assert!(n >= 1, "rouge_n needs n >= 1");
    let cand = ngram_counts(candidate, n);
    let refc = ngram_counts(reference, n);
    let matches = cand.iter().map(|(g, c)| refc.get(g).map_or(0, |r| (*c).min(*r))).sum();
    let total = |len: usize| (len + 1).saturating_sub(n);
    RougeScore::from_counts(matches, total(candidate.len()), total(reference.len()))
}

/// Length of the longest common subsequence.
pub fn lcs_len<T: Eq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l<T: Eq>(candidate: &[T], reference: &[T]) -> RougeScore {
    RougeScore::from_counts(lcs_len(candidate, reference), candidate.len(), reference.len())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeSummary {
    pub rouge1: RougeScore,
    pub rouge2: RougeScore,
    #[serde(rename = "rougeL")]
    pub rouge_l: RougeScore,
}

impl RougeSummary {
    pub fn get(&self, variant: RougeVariant) -> RougeScore {
        match variant {
            RougeVariant::Rouge1 => self.rouge1,
            RougeVariant::Rouge2 => self.rouge2,
            RougeVariant::RougeL => self.rouge_l,
        }
    }
}

/// Scores a candidate, truncated to `limit`, against the untruncated
/// flattened reference.
pub fn evaluate_summary<S: AsRef<str>, R: AsRef<str>>(
    candidate: &[Vec<S>],
    reference: &[Vec<R>],
    limit: LengthLimit,
) -> Result<RougeSummary> {
    let reference: Vec<&str> = reference.iter().flatten().map(AsRef::as_ref).collect();
    if reference.is_empty() {
        return Err(Error::precondition("empty reference summary"));
    }
    let cand = truncate(candidate, limit);
    let cand: Vec<&str> = cand.iter().map(String::as_str).collect();
    Ok(RougeSummary {
        rouge1: rouge_n(&cand, &reference, 1),
        rouge2: rouge_n(&cand, &reference, 2),
        rouge_l: rouge_l(&cand, &reference),
    })
}
