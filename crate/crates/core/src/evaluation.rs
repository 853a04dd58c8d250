//! Sentence selection at test time and corpus-level ROUGE reports.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{encode, Document, Vocabulary};
use crate::diffcore::ParameterStore;
use crate::error::{Error, Result};
use crate::model::SummaRunner;
use crate::rouge::{evaluate_summary, joined_bytes, Flavor, LengthLimit, RougeSummary, RougeVariant};

/// How sentences are picked from a scored document.
///
/// String form: `prob`, `prob:bytes:75`, `prob:words:75`, `topk:3`, `lead:3`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SelectionPolicy {
    /// Most probable first, until the limit is exceeded. The overflowing
    /// sentence is kept; metric-side truncation trims it.
    ByProbability(LengthLimit),
    TopK(usize),
    Lead(usize),
}

impl SelectionPolicy {
    pub fn needs_probabilities(&self) -> bool {
        !matches!(self, SelectionPolicy::Lead(_))
    }
}

impl FromStr for SelectionPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let count = |v: &str| -> Result<usize> {
            match v.parse::<usize>() {
                Ok(n) if n >= 1 => Ok(n),
                _ => Err(Error::Config(format!("policy `{s}` needs a positive count"))),
            }
        };
        match s.split_once(':') {
            None if s == "prob" => Ok(SelectionPolicy::ByProbability(LengthLimit::None)),
            Some(("prob", limit)) => Ok(SelectionPolicy::ByProbability(limit.parse()?)),
            Some(("topk", k)) => Ok(SelectionPolicy::TopK(count(k)?)),
            Some(("lead", n)) => Ok(SelectionPolicy::Lead(count(n)?)),
            _ => Err(Error::Config(format!(
                "unknown policy `{s}` (prob[:limit]|topk:K|lead:N)"
            ))),
        }
    }
}

impl fmt::Display for SelectionPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SelectionPolicy::ByProbability(LengthLimit::None) => write!(f, "prob"),
            SelectionPolicy::ByProbability(limit) => write!(f, "prob:{limit}"),
            SelectionPolicy::TopK(k) => write!(f, "topk:{k}"),
            SelectionPolicy::Lead(n) => write!(f, "lead:{n}"),
        }
    }
}

impl TryFrom<String> for SelectionPolicy {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SelectionPolicy> for String {
    fn from(p: SelectionPolicy) -> String {
        p.to_string()
    }
}

/// Sentence indices by descending probability, ties to the lower index.
fn ranked(probabilities: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..probabilities.len()).collect();
    order.sort_by(|&a, &b| probabilities[b].total_cmp(&probabilities[a]).then(a.cmp(&b)));
    order
}

/// Selected sentence indices in document order. `Lead` ignores the
/// probabilities.
pub fn select(probabilities: &[f64], doc: &Document, policy: SelectionPolicy) -> Result<Vec<usize>> {
    let n = doc.num_sentences();
    if policy.needs_probabilities() && probabilities.len() != n {
        return Err(Error::precondition(format!(
            "{} probabilities for {n} sentences in `{}`",
            probabilities.len(),
            doc.id
        )));
    }
    let mut chosen = match policy {
        SelectionPolicy::Lead(k) => (0..k.min(n)).collect(),
        SelectionPolicy::TopK(k) => ranked(probabilities).into_iter().take(k).collect(),
        SelectionPolicy::ByProbability(limit) => {
            let mut chosen = Vec::new();
            let mut words = 0;
            let mut bytes = 0;
            for i in ranked(probabilities) {
                let exceeded = match limit {
                    LengthLimit::None => false,
                    LengthLimit::Words(w) => words > w,
                    LengthLimit::Bytes(b) => bytes > b,
                };
                if exceeded {
                    break;
                }
                let sentence = &doc.sentences[i];
                words += sentence.len();
                // Joined byte length does not depend on sentence order.
                if !sentence.is_empty() {
                    bytes += joined_bytes(sentence) + usize::from(bytes > 0);
                }
                chosen.push(i);
            }
            chosen
        }
    };
    chosen.sort_unstable();
    Ok(chosen)
}

/// Anything that assigns a summary-membership probability to each sentence.
pub trait SentenceScorer {
    fn probabilities(&self, doc: &Document) -> Result<Vec<f64>>;
}

/// A trained model together with its parameters and vocabulary.
pub struct ModelScorer<'a> {
    pub model: &'a SummaRunner,
    pub store: &'a ParameterStore,
    pub vocab: &'a Vocabulary,
}

impl SentenceScorer for ModelScorer<'_> {
    fn probabilities(&self, doc: &Document) -> Result<Vec<f64>> {
        Ok(self.model.predict(self.store, &encode(doc, self.vocab))?.probabilities)
    }
}

fn probabilities_for(scorer: Option<&dyn SentenceScorer>, doc: &Document, policy: SelectionPolicy) -> Result<Vec<f64>> {
    match scorer {
        _ if !policy.needs_probabilities() => Ok(Vec::new()),
        Some(s) => s.probabilities(doc),
        None => Err(Error::Config(format!("policy `{policy}` needs a model"))),
    }
}

/// Selected sentences, in document order.
pub fn extract(doc: &Document, selected: &[usize]) -> Vec<Vec<String>> {
    selected.iter().map(|&i| doc.sentences[i].clone()).collect()
}

fn require_summaries(docs: &[Document]) -> Result<()> {
    let ids: Vec<String> = docs
        .iter()
        .filter(|d| d.summary.as_ref().is_none_or(|s| s.iter().all(Vec::is_empty)))
        .map(|d| d.id.clone())
        .collect();
    if ids.is_empty() {
        Ok(())
    } else {
        Err(Error::MissingData {
            what: "reference summaries",
            ids,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DocumentScore {
    pub id: String,
    pub selected: Vec<usize>,
    pub rouge1: f64,
    pub rouge2: f64,
    #[serde(rename = "rougeL")]
    pub rouge_l: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub policy: SelectionPolicy,
    pub limit: LengthLimit,
    pub flavor: Flavor,
    pub documents: usize,
    pub rouge1: f64,
    pub rouge2: f64,
    #[serde(rename = "rougeL")]
    pub rouge_l: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub per_document: Option<Vec<DocumentScore>>,
}

impl EvaluationReport {
    pub fn get(&self, variant: RougeVariant) -> f64 {
        match variant {
            RougeVariant::Rouge1 => self.rouge1,
            RougeVariant::Rouge2 => self.rouge2,
            RougeVariant::RougeL => self.rouge_l,
        }
    }

    /// Aligned plain-text rendering.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "policy {}  limit {}  flavor {}  documents {}\n",
            self.policy, self.limit, self.flavor, self.documents
        );
        out.push_str(&format!("{:<8} {:>8}\n", "metric", "score"));
        for (name, v) in [
            ("rouge-1", self.rouge1),
            ("rouge-2", self.rouge2),
            ("rouge-l", self.rouge_l),
        ] {
            out.push_str(&format!("{name:<8} {:>8.4}\n", v * 100.0));
        }
        out
    }
}

fn score_document(doc: &Document, selected: &[usize], limit: LengthLimit) -> Result<RougeSummary> {
    let reference = doc.summary.as_deref().unwrap_or_default();
    evaluate_summary(&extract(doc, selected), reference, limit)
}

/// Mean ROUGE over `docs`: select under `policy`, truncate to `limit`, score
/// against the reference and report `flavor`.
pub fn evaluate_corpus(
    scorer: Option<&dyn SentenceScorer>,
    docs: &[Document],
    policy: SelectionPolicy,
    limit: LengthLimit,
    flavor: Flavor,
    per_document: bool,
) -> Result<EvaluationReport> {
    require_summaries(docs)?;
    let mut rows = Vec::with_capacity(docs.len());
    for doc in docs {
        let probs = probabilities_for(scorer, doc, policy)?;
        let selected = select(&probs, doc, policy)?;
        let s = score_document(doc, &selected, limit)?;
        rows.push(DocumentScore {
            id: doc.id.clone(),
            selected,
            rouge1: s.rouge1.get(flavor),
            rouge2: s.rouge2.get(flavor),
            rouge_l: s.rouge_l.get(flavor),
        });
    }
    let mean = |f: fn(&DocumentScore) -> f64| {
        if rows.is_empty() {
            0.0
        } else {
            rows.iter().map(f).sum::<f64>() / rows.len() as f64
        }
    };
    Ok(EvaluationReport {
        policy,
        limit,
        flavor,
        documents: docs.len(),
        rouge1: mean(|r| r.rouge1),
        rouge2: mean(|r| r.rouge2),
        rouge_l: mean(|r| r.rouge_l),
        per_document: per_document.then_some(rows),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KSearch {
    pub best_k: usize,
    /// Mean score for every k tried, in the order given.
    pub scores: Vec<(usize, f64)>,
}

/// Picks the top-k size with the best mean full-length score on `docs`.
/// Ties go to the smaller k.
pub fn tune_k(
    scorer: &dyn SentenceScorer,
    docs: &[Document],
    ks: &[usize],
    variant: RougeVariant,
    flavor: Flavor,
) -> Result<KSearch> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::precondition("k range must be non-empty and positive"));
    }
    require_summaries(docs)?;
    let probs: Vec<Vec<f64>> = docs.iter().map(|d| scorer.probabilities(d)).collect::<Result<_>>()?;
    let mut scores = Vec::with_capacity(ks.len());
    for &k in ks {
        let mut total = 0.0;
        for (doc, p) in docs.iter().zip(&probs) {
            let selected = select(p, doc, SelectionPolicy::TopK(k))?;
            total += score_document(doc, &selected, LengthLimit::None)?
                .get(variant)
                .get(flavor);
        }
        scores.push((
            k,
            if docs.is_empty() {
                0.0
            } else {
                total / docs.len() as f64
            },
        ));
    }
    let (best_k, _) = scores
        .iter()
        .copied()
        .reduce(|best, cur| {
            if cur.1 > best.1 || (cur.1 == best.1 && cur.0 < best.0) {
                cur
            } else {
                best
            }
        })
        .expect("non-empty");
    Ok(KSearch { best_k, scores })
}
