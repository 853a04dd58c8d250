//! Greedy conversion of reference summaries into 0/1 sentence labels.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::rouge::{rouge_n, RougeScore};

/// Score maximized by the greedy search.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMetric {
    #[default]
    Rouge1F1,
    Rouge2F1,
    MeanR1R2F1,
    Rouge1Recall,
}

impl OracleMetric {
    pub fn score(self, candidate: &[&str], reference: &[&str]) -> f64 {
        let r = |n| -> RougeScore { rouge_n(candidate, reference, n) };
        match self {
            OracleMetric::Rouge1F1 => r(1).f1,
            OracleMetric::Rouge2F1 => r(2).f1,
            OracleMetric::MeanR1R2F1 => (r(1).f1 + r(2).f1) / 2.0,
            OracleMetric::Rouge1Recall => r(1).recall,
        }
    }
}

impl FromStr for OracleMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rouge1_f1" => Ok(OracleMetric::Rouge1F1),
            "rouge2_f1" => Ok(OracleMetric::Rouge2F1),
            "mean_r1_r2_f1" => Ok(OracleMetric::MeanR1R2F1),
            "rouge1_recall" => Ok(OracleMetric::Rouge1Recall),
            _ => Err(Error::Config(format!(
                "unknown oracle metric `{s}` (rouge1_f1|rouge2_f1|mean_r1_r2_f1|rouge1_recall)"
            ))),
        }
    }
}

impl fmt::Display for OracleMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OracleMetric::Rouge1F1 => "rouge1_f1",
            OracleMetric::Rouge2F1 => "rouge2_f1",
            OracleMetric::MeanR1R2F1 => "mean_r1_r2_f1",
            OracleMetric::Rouge1Recall => "rouge1_recall",
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub metric: OracleMetric,
    pub max_selected: Option<usize>,
}

/// One accepted greedy addition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OracleStep {
    pub sentence: usize,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleLabels {
    pub labels: Vec<u8>,
    pub steps: Vec<OracleStep>,
}

impl OracleLabels {
    pub fn final_score(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.score)
    }
}

/// Tokens of the selected sentences, in document order.
fn render<'a>(doc: &'a Document, selected: &[bool]) -> Vec<&'a str> {
    doc.sentences
        .iter()
        .zip(selected)
        .filter(|(_, keep)| **keep)
        .flat_map(|(s, _)| s.iter().map(String::as_str))
        .collect()
}

/// Adds one sentence at a time, each time the one whose addition gives the
/// highest score, until no addition strictly improves the score.
pub fn greedy_labels(doc: &Document, config: &OracleConfig) -> Result<OracleLabels> {
    let summary = doc
        .summary
        .as_ref()
        .ok_or_else(|| Error::precondition(format!("document `{}` has no reference summary", doc.id)))?;
    let reference: Vec<&str> = summary.iter().flatten().map(String::as_str).collect();

    let n = doc.sentences.len();
    let cap = config.max_selected.unwrap_or(n);
    let mut selected = vec![false; n];
    let mut steps = Vec::new();
    let mut current = 0.0;

    while steps.len() < cap {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..n {
            if selected[j] {
                continue;
            }
            selected[j] = true;
            let score = config.metric.score(&render(doc, &selected), &reference);
            selected[j] = false;
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((j, score));
            }
        }
        match best {
            Some((j, score)) if score > current => {
                selected[j] = true;
                current = score;
                steps.push(OracleStep { sentence: j, score });
            }
            _ => break,
        }
    }

    Ok(OracleLabels {
        labels: selected.into_iter().map(u8::from).collect(),
        steps,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct LabelStats {
    pub documents: usize,
    pub mean_selected: f64,
    pub mean_score: f64,
}

/// Labels every document, preserving order.
pub fn label_corpus(docs: &[Document], config: &OracleConfig) -> Result<(Vec<Document>, LabelStats)> {
    let missing: Vec<String> = docs
        .iter()
        .filter(|d| d.summary.is_none())
        .map(|d| d.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingData {
            what: "reference summary",
            ids: missing,
        });
    }
    let mut out = Vec::with_capacity(docs.len());
    let (mut selected, mut score) = (0usize, 0.0);
    for doc in docs {
        let result = greedy_labels(doc, config)?;
        selected += result.steps.len();
        score += result.final_score();
        let mut labeled = doc.clone();
        labeled.labels = Some(result.labels);
        out.push(labeled);
    }
    let n = docs.len();
    let stats = LabelStats {
        documents: n,
        mean_selected: if n == 0 { 0.0 } else { selected as f64 / n as f64 },
        mean_score: if n == 0 { 0.0 } else { score / n as f64 },
    };
    Ok((out, stats))
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;

    fn worked_doc() -> Document {
        Document::from_text("w", &["a b", "c d", "a b c"]).with_summary(&["a b c d"])
    }

    #[test]
    fn worked_example() {
        let out = greedy_labels(&worked_doc(), &OracleConfig::default()).unwrap();
        assert_eq!(out.labels, vec![0, 1, 1]);
        assert_eq!(out.steps.len(), 2);
        assert_eq!(out.steps[0].sentence, 2);
        assert_abs_diff_eq!(out.steps[0].score, 6.0 / 7.0, epsilon = 1e-12);
        assert_eq!(out.steps[1].sentence, 1);
        assert_abs_diff_eq!(out.steps[1].score, 8.0 / 9.0, epsilon = 1e-12);
    }

    #[test]
    fn single_perfect_match() {
        let doc = Document::from_text("p", &["x y z", "q r", "s"]).with_summary(&["x y z"]);
        let out = greedy_labels(&doc, &OracleConfig::default()).unwrap();
        assert_eq!(out.labels, vec![1, 0, 0]);
    }

    #[test]
    fn no_overlap_selects_nothing() {
        let doc = Document::from_text("n", &["a", "b"]).with_summary(&["z"]);
        let out = greedy_labels(&doc, &OracleConfig::default()).unwrap();
        assert_eq!(out.labels, vec![0, 0]);
        assert!(out.steps.is_empty());
    }

    #[test]
    fn ties_go_to_earliest_sentence() {
        let doc = Document::from_text("t", &["b", "a", "a"]).with_summary(&["a"]);
        let out = greedy_labels(&doc, &OracleConfig::default()).unwrap();
        assert_eq!(out.labels, vec![0, 1, 0]);
    }

    #[test]
    fn max_selected_caps_steps() {
        let config = OracleConfig {
            max_selected: Some(1),
            ..Default::default()
        };
        let out = greedy_labels(&worked_doc(), &config).unwrap();
        assert_eq!(out.labels, vec![0, 0, 1]);
    }

    #[test]
    fn missing_summary() {
        let doc = Document::from_text("m", &["a"]);
        assert!(greedy_labels(&doc, &OracleConfig::default()).is_err());
        let err = label_corpus(&[worked_doc(), doc], &OracleConfig::default()).unwrap_err();
        assert!(err.to_string().contains('m'));
        assert!(matches!(err, Error::MissingData { ref ids, .. } if ids == &["m"]));
    }

    #[test]
    fn corpus_stats() {
        let docs = vec![
            worked_doc(),
            Document::from_text("p", &["x y z", "q r", "s"]).with_summary(&["x y z"]),
            Document::from_text("n", &["a", "b"]).with_summary(&["z"]),
        ];
        let (out, stats) = label_corpus(&docs, &OracleConfig::default()).unwrap();
        assert_eq!(out.iter().map(|d| d.id.as_str()).collect::<Vec<_>>(), ["w", "p", "n"]);
        assert_eq!(out[0].labels, Some(vec![0, 1, 1]));
        assert_eq!(out[1].labels, Some(vec![1, 0, 0]));
        assert_eq!(out[2].labels, Some(vec![0, 0]));
        assert_eq!(stats.documents, 3);
        assert_abs_diff_eq!(stats.mean_selected, 1.0);
        assert_abs_diff_eq!(stats.mean_score, (8.0 / 9.0 + 1.0 + 0.0) / 3.0, epsilon = 1e-12);

        let (empty, stats) = label_corpus(&[], &OracleConfig::default()).unwrap();
        assert!(empty.is_empty());
        assert_eq!(stats, LabelStats::default());
    }

    #[test]
    fn metric_names_round_trip() {
        for m in [
            OracleMetric::Rouge1F1,
            OracleMetric::Rouge2F1,
            OracleMetric::MeanR1R2F1,
            OracleMetric::Rouge1Recall,
        ] {
            assert_eq!(m.to_string().parse::<OracleMetric>().unwrap(), m);
        }
    }
}
