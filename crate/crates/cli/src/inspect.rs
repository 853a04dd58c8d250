//! Per-sentence factor tables for a single document.

use serde::{Deserialize, Serialize};
use summarunner::corpus::Document;
use summarunner::model::SentenceScoreBreakdown;

/// The six additive terms of a sentence logit. Novelty is stored as the
/// magnitude that gets subtracted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Factors {
    pub content: f64,
    pub salience: f64,
    pub novelty: f64,
    pub abs_pos: f64,
    pub rel_pos: f64,
    pub bias: f64,
}

impl Factors {
    pub const NAMES: [&'static str; 6] = ["content", "salience", "novelty", "abs_pos", "rel_pos", "bias"];

    fn to_array(self) -> [f64; 6] {
        [
            self.content,
            self.salience,
            self.novelty,
            self.abs_pos,
            self.rel_pos,
            self.bias,
        ]
    }

    fn from_array(a: [f64; 6]) -> Self {
        Self {
            content: a[0],
            salience: a[1],
            novelty: a[2],
            abs_pos: a[3],
            rel_pos: a[4],
            bias: a[5],
        }
    }

    pub fn logit(&self) -> f64 {
        self.content + self.salience - self.novelty + self.abs_pos + self.rel_pos + self.bias
    }
}

impl From<&SentenceScoreBreakdown> for Factors {
    fn from(b: &SentenceScoreBreakdown) -> Self {
        Self {
            content: b.content,
            salience: b.salience,
            novelty: b.novelty,
            abs_pos: b.abs_pos,
            rel_pos: b.rel_pos,
            bias: b.bias,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InspectRow {
    pub sentence: usize,
    pub text: String,
    pub raw: Factors,
    /// Each factor min-max scaled over the document's sentences.
    pub normalized: Factors,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Inspection {
    pub id: String,
    pub rows: Vec<InspectRow>,
}

/// Scales to [0, 1]; a constant column maps to all zeros.
pub fn min_max(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    values
        .iter()
        .map(|&v| if range > 0.0 { (v - lo) / range } else { 0.0 })
        .collect()
}

pub fn inspect(doc: &Document, breakdowns: &[SentenceScoreBreakdown]) -> Inspection {
    let raw: Vec<Factors> = breakdowns.iter().map(Factors::from).collect();
    let columns: Vec<Vec<f64>> = (0..6)
        .map(|c| min_max(&raw.iter().map(|f| f.to_array()[c]).collect::<Vec<_>>()))
        .collect();
    let rows = raw
        .iter()
        .zip(breakdowns)
        .enumerate()
        .map(|(j, (r, b))| InspectRow {
            sentence: j,
            text: doc.sentences[j].join(" "),
            raw: *r,
            normalized: Factors::from_array(std::array::from_fn(|c| columns[c][j])),
            probability: b.probability,
        })
        .collect();
    Inspection {
        id: doc.id.clone(),
        rows,
    }
}

const TEXT_WIDTH: usize = 40;

/// Aligned plain-text table: raw factor values, then the normalized ones in
/// parentheses, then the probability.
pub fn render(inspection: &Inspection) -> String {
    let mut out = format!("document {}\n", inspection.id);
    out.push_str(&format!("{:>3}", "#"));
    for name in Factors::NAMES {
        out.push_str(&format!(" {name:>18}"));
    }
    out.push_str(&format!(" {:>8}  text\n", "prob"));
    for row in &inspection.rows {
        out.push_str(&format!("{:>3}", row.sentence));
        for (r, n) in row.raw.to_array().iter().zip(row.normalized.to_array()) {
            out.push_str(&format!(" {r:>10.4} ({n:>5.3})"));
        }
        let mut text: String = row.text.chars().take(TEXT_WIDTH).collect();
        if row.text.chars().count() > TEXT_WIDTH {
            text.push_str("...");
        }
        out.push_str(&format!(" {:>8.4}  {text}\n", row.probability));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn breakdown(values: [f64; 6]) -> SentenceScoreBreakdown {
        let f = Factors::from_array(values);
        SentenceScoreBreakdown {
            content: f.content,
            salience: f.salience,
            novelty: f.novelty,
            abs_pos: f.abs_pos,
            rel_pos: f.rel_pos,
            bias: f.bias,
            probability: 1.0 / (1.0 + (-f.logit()).exp()),
        }
    }

    #[test]
    fn min_max_scaling() {
        assert_eq!(min_max(&[1.0, 3.0, 2.0]), vec![0.0, 1.0, 0.5]);
        assert_eq!(min_max(&[0.7, 0.7]), vec![0.0, 0.0]);
        assert_eq!(min_max(&[]), Vec::<f64>::new());
    }

    #[test]
    fn zero_model_table() {
        let doc = Document::from_text("z", &["a b", "c", "d e f"]);
        let b = vec![breakdown([0.0; 6]); 3];
        let ins = inspect(&doc, &b);
        for row in &ins.rows {
            assert_eq!(row.raw, Factors::default());
            assert_eq!(row.normalized, Factors::default());
            assert_eq!(row.probability, 0.5);
        }
        let table = render(&ins);
        assert_eq!(table.lines().count(), 5);
        assert!(table.contains("d e f"));
    }

    #[test]
    fn columns_are_normalized_independently() {
        let doc = Document::from_text("d", &["a", "b"]);
        let b = vec![
            breakdown([1.0, 0.0, 0.0, 2.0, 0.5, 0.1]),
            breakdown([3.0, 0.0, 0.6, 1.0, 0.5, 0.1]),
        ];
        let ins = inspect(&doc, &b);
        assert_eq!(ins.rows[0].normalized.content, 0.0);
        assert_eq!(ins.rows[1].normalized.content, 1.0);
        assert_eq!(ins.rows[0].normalized.abs_pos, 1.0);
        assert_eq!(ins.rows[1].normalized.novelty, 1.0);
        assert_eq!(ins.rows[1].normalized.rel_pos, 0.0);
        for (row, bd) in ins.rows.iter().zip(&b) {
            let p = 1.0 / (1.0 + (-row.raw.logit()).exp());
            assert!((p - bd.probability).abs() < 1e-12);
        }
    }
}
