//! Two-level bidirectional GRU encoder with an interpretable sentence
//! scorer.
//!
//! Word-level GRUs read each sentence in both directions; the average of the
//! concatenated states is the sentence input to a second bidirectional GRU
//! over sentences. Each sentence is then revisited in order and scored by a
//! logistic layer whose logit is a sum of six named terms:
//!
//! ```text
//! content + salience - novelty + abs_pos + rel_pos + bias
//! ```
//!
//! where novelty compares the sentence with a running, probability-weighted
//! sum of the sentences scored so far.

mod gru;
pub(crate) mod init;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::diffcore::{sigmoid, Graph, ParamId, ParameterStore, Tensor, Var};
use crate::error::{Error, Result};
use init::{Init, Registrar};

pub use gru::{gru_step, run_gru, GruContext, GruParams, GruVars};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embedding_dim: usize,
    /// Per direction.
    pub hidden_dim: usize,
    pub position_embedding_dim: usize,
    pub max_abs_positions: usize,
    pub num_rel_segments: usize,
    pub decoder_enabled: bool,
    /// Defaults to `hidden_dim`.
    #[serde(default)]
    pub decoder_hidden_dim: Option<usize>,
    /// Defaults to `hidden_dim`.
    #[serde(default)]
    pub decoder_ff_dim: Option<usize>,
}

impl ModelConfig {
    pub fn new(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            embedding_dim: 100,
            hidden_dim: 200,
            position_embedding_dim: 50,
            max_abs_positions: 100,
            num_rel_segments: 10,
            decoder_enabled: false,
            decoder_hidden_dim: None,
            decoder_ff_dim: None,
        }
    }

    pub fn decoder_hidden(&self) -> usize {
        self.decoder_hidden_dim.unwrap_or(self.hidden_dim)
    }

    pub fn decoder_ff(&self) -> usize {
        self.decoder_ff_dim.unwrap_or(self.hidden_dim)
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("vocab_size", self.vocab_size),
            ("embedding_dim", self.embedding_dim),
            ("hidden_dim", self.hidden_dim),
            ("position_embedding_dim", self.position_embedding_dim),
            ("max_abs_positions", self.max_abs_positions),
            ("num_rel_segments", self.num_rel_segments),
            ("decoder_hidden_dim", self.decoder_hidden()),
            ("decoder_ff_dim", self.decoder_ff()),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// Pre-sigmoid contributions of each scoring term for one sentence.
/// `novelty` is the magnitude that gets subtracted.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SentenceScoreBreakdown {
    pub content: f64,
    pub salience: f64,
    pub novelty: f64,
    pub abs_pos: f64,
    pub rel_pos: f64,
    pub bias: f64,
    pub probability: f64,
}

impl SentenceScoreBreakdown {
    pub fn logit(&self) -> f64 {
        self.content + self.salience - self.novelty + self.abs_pos + self.rel_pos + self.bias
    }

    /// `σ(logit)`, recomputed from the terms.
    pub fn reassembled(&self) -> f64 {
        sigmoid(self.logit())
    }
}

/// Segment of sentence `j` (1-based) when `n` sentences are split into
/// `segments` equal parts: `floor((j - 1) * segments / n)`.
pub fn rel_segment(j: usize, n: usize, segments: usize) -> Result<usize> {
    if j == 0 || j > n {
        return Err(Error::Index {
            what: "document sentences",
            index: j,
            len: n,
        });
    }
    Ok((j - 1) * segments / n)
}

#[derive(Clone, Debug)]
pub struct ModelParams {
    pub embedding: ParamId,
    pub word_fwd: GruParams,
    pub word_bwd: GruParams,
    pub sent_fwd: GruParams,
    pub sent_bwd: GruParams,
    pub doc_w: ParamId,
    pub doc_b: ParamId,
    pub sent_w: ParamId,
    pub sent_b: ParamId,
    pub content: ParamId,
    pub salience: ParamId,
    pub novelty: ParamId,
    pub abs_pos_table: ParamId,
    pub abs_pos_weight: ParamId,
    pub rel_pos_table: ParamId,
    pub rel_pos_weight: ParamId,
    pub bias: ParamId,
}

impl ModelParams {
    pub fn ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.embedding];
        for gru in [&self.word_fwd, &self.word_bwd, &self.sent_fwd, &self.sent_bwd] {
            ids.extend(gru.ids());
        }
        ids.extend([
            self.doc_w,
            self.doc_b,
            self.sent_w,
            self.sent_b,
            self.content,
            self.salience,
            self.novelty,
            self.abs_pos_table,
            self.abs_pos_weight,
            self.rel_pos_table,
            self.rel_pos_weight,
            self.bias,
        ]);
        ids
    }
}

#[derive(Clone, Debug)]
pub struct EncodedDocument {
    /// Average-pooled word-level states, one per sentence.
    pub pooled: Vec<Var>,
    /// Sentence representations after the projection.
    pub sentence_reps: Vec<Var>,
    pub doc_rep: Var,
}

/// Graph nodes of the six terms for one sentence.
#[derive(Clone, Copy, Debug)]
pub struct TermVars {
    pub content: Var,
    pub salience: Var,
    pub novelty: Var,
    pub abs_pos: Var,
    pub rel_pos: Var,
    pub bias: Var,
}

#[derive(Clone, Debug)]
pub struct ScoredSentences {
    pub probabilities: Vec<Var>,
    pub terms: Vec<TermVars>,
    /// Running summary states `s_1 ..= s_{N+1}`.
    pub summary_states: Vec<Var>,
}

#[derive(Clone, Debug)]
pub struct ForwardPass {
    pub encoded: EncodedDocument,
    pub scored: ScoredSentences,
}

impl ForwardPass {
    pub fn probabilities(&self) -> &[Var] {
        &self.scored.probabilities
    }

    /// Summary state after the last sentence.
    pub fn s_last(&self) -> Var {
        *self.scored.summary_states.last().expect("s_1 always present")
    }

    pub fn breakdowns(&self, g: &Graph) -> Vec<SentenceScoreBreakdown> {
        self.scored
            .terms
            .iter()
            .zip(&self.scored.probabilities)
            .map(|(t, p)| SentenceScoreBreakdown {
                content: g.scalar(t.content),
                salience: g.scalar(t.salience),
                novelty: g.scalar(t.novelty),
                abs_pos: g.scalar(t.abs_pos),
                rel_pos: g.scalar(t.rel_pos),
                bias: g.scalar(t.bias),
                probability: g.scalar(*p),
            })
            .collect()
    }
}

/// Values of a forward pass, detached from the graph.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub probabilities: Vec<f64>,
    pub breakdowns: Vec<SentenceScoreBreakdown>,
}

#[derive(Clone, Debug)]
pub struct SummaRunner {
    pub config: ModelConfig,
    pub params: ModelParams,
}

impl SummaRunner {
    /// Registers freshly initialized parameters in `store`.
    pub fn new(config: ModelConfig, store: &mut ParameterStore, rng: &mut dyn RngCore) -> Result<Self> {
        config.validate()?;
        let params = Self::register(&config, &mut Registrar::fresh(store, rng))?;
        Ok(Self { config, params })
    }

    /// Binds to parameters already in `store` (e.g. from a checkpoint).
    pub fn bind(config: ModelConfig, store: &mut ParameterStore) -> Result<Self> {
        config.validate()?;
        let params = Self::register(&config, &mut Registrar::bind(store))?;
        Ok(Self { config, params })
    }

    fn register(c: &ModelConfig, reg: &mut Registrar<'_>) -> Result<ModelParams> {
        let (e, h) = (c.embedding_dim, c.hidden_dim);
        Ok(ModelParams {
            embedding: reg.param("embedding", &[c.vocab_size, e], Init::Embedding)?,
            word_fwd: GruParams::register(reg, "word_fwd", e, h, None)?,
            word_bwd: GruParams::register(reg, "word_bwd", e, h, None)?,
            sent_fwd: GruParams::register(reg, "sent_fwd", 2 * h, h, None)?,
            sent_bwd: GruParams::register(reg, "sent_bwd", 2 * h, h, None)?,
            doc_w: reg.param("doc.w", &[h, 2 * h], Init::Glorot)?,
            doc_b: reg.param("doc.b", &[h], Init::Zeros)?,
            sent_w: reg.param("sent_proj.w", &[h, 2 * h], Init::Glorot)?,
            sent_b: reg.param("sent_proj.b", &[h], Init::Zeros)?,
            content: reg.param("score.content", &[h], Init::Glorot)?,
            salience: reg.param("score.salience", &[h, h], Init::Glorot)?,
            novelty: reg.param("score.novelty", &[h, h], Init::Glorot)?,
            abs_pos_table: reg.param(
                "score.abs_pos_table",
                &[c.max_abs_positions, c.position_embedding_dim],
                Init::Embedding,
            )?,
            abs_pos_weight: reg.param("score.abs_pos_weight", &[c.position_embedding_dim], Init::Glorot)?,
            rel_pos_table: reg.param(
                "score.rel_pos_table",
                &[c.num_rel_segments, c.position_embedding_dim],
                Init::Embedding,
            )?,
            rel_pos_weight: reg.param("score.rel_pos_weight", &[c.position_embedding_dim], Init::Glorot)?,
            bias: reg.param("score.bias", &[1], Init::Zeros)?,
        })
    }

    fn bidirectional(
        &self,
        g: &mut Graph,
        store: &ParameterStore,
        fwd: &GruParams,
        bwd: &GruParams,
        xs: &[Var],
    ) -> Result<Vec<Var>> {
        let f = run_gru(g, store, fwd, xs, false)?;
        let b = run_gru(g, store, bwd, xs, true)?;
        f.into_iter().zip(b).map(|(f, b)| g.concat(f, b)).collect()
    }

    /// Word-level and sentence-level encoding plus the document vector.
    pub fn encode_document(
        &self,
        g: &mut Graph,
        store: &ParameterStore,
        sentences: &[Vec<usize>],
    ) -> Result<EncodedDocument> {
        if sentences.is_empty() {
            return Err(Error::precondition("document has no sentences"));
        }
        let p = &self.params;
        let mut pooled = Vec::with_capacity(sentences.len());
        for words in sentences {
            if words.is_empty() {
                return Err(Error::precondition("empty sentence"));
            }
            let xs = words
                .iter()
                .map(|&w| g.param_row(store, p.embedding, w))
                .collect::<Result<Vec<_>>>()?;
            let states = self.bidirectional(g, store, &p.word_fwd, &p.word_bwd, &xs)?;
            pooled.push(g.mean_pool(&states)?);
        }

        let states = self.bidirectional(g, store, &p.sent_fwd, &p.sent_bwd, &pooled)?;

        let sent_w = g.param(store, p.sent_w);
        let sent_b = g.param(store, p.sent_b);
        let sentence_reps = states
            .iter()
            .map(|&s| {
                let a = g.matvec(sent_w, s)?;
                let z = g.add(a, sent_b)?;
                Ok(g.tanh(z))
            })
            .collect::<Result<Vec<_>>>()?;

        let mean = g.mean_pool(&states)?;
        let doc_w = g.param(store, p.doc_w);
        let doc_b = g.param(store, p.doc_b);
        let a = g.matvec(doc_w, mean)?;
        let z = g.add(a, doc_b)?;
        let doc_rep = g.tanh(z);

        Ok(EncodedDocument {
            pooled,
            sentence_reps,
            doc_rep,
        })
    }

    /// Sequential scoring pass over sentence representations `h` given the
    /// document vector `d`.
    pub fn score_sentences(&self, g: &mut Graph, store: &ParameterStore, h: &[Var], d: Var) -> Result<ScoredSentences> {
        if h.is_empty() {
            return Err(Error::precondition("no sentences to score"));
        }
        let p = &self.params;
        let n = h.len();
        let content_w = g.param(store, p.content);
        let salience_w = g.param(store, p.salience);
        let novelty_w = g.param(store, p.novelty);
        let abs_w = g.param(store, p.abs_pos_weight);
        let rel_w = g.param(store, p.rel_pos_weight);
        let bias = g.param(store, p.bias);
        let sal_d = g.matvec(salience_w, d)?;

        let mut s = g.constant(Tensor::zeros(&[self.config.hidden_dim]));
        let mut summary_states = vec![s];
        let mut probabilities = Vec::with_capacity(n);
        let mut terms = Vec::with_capacity(n);
        for (j, &hj) in h.iter().enumerate() {
            let content = g.dot(content_w, hj)?;
            let salience = g.dot(hj, sal_d)?;
            let squashed = g.tanh(s);
            let red = g.matvec(novelty_w, squashed)?;
            let novelty = g.dot(hj, red)?;
            let abs_row = j.min(self.config.max_abs_positions - 1);
            let pa = g.param_row(store, p.abs_pos_table, abs_row)?;
            let abs_pos = g.dot(abs_w, pa)?;
            let seg = rel_segment(j + 1, n, self.config.num_rel_segments)?;
            let pr = g.param_row(store, p.rel_pos_table, seg)?;
            let rel_pos = g.dot(rel_w, pr)?;

            let mut logit = g.add(content, salience)?;
            logit = g.sub(logit, novelty)?;
            logit = g.add(logit, abs_pos)?;
            logit = g.add(logit, rel_pos)?;
            logit = g.add(logit, bias)?;
            let prob = g.sigmoid(logit);

            let weighted = g.mul_scalar(hj, prob)?;
            s = g.add(s, weighted)?;
            summary_states.push(s);
            probabilities.push(prob);
            terms.push(TermVars {
                content,
                salience,
                novelty,
                abs_pos,
                rel_pos,
                bias,
            });
        }
        Ok(ScoredSentences {
            probabilities,
            terms,
            summary_states,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParameterStore, sentences: &[Vec<usize>]) -> Result<ForwardPass> {
        let encoded = self.encode_document(g, store, sentences)?;
        let scored = self.score_sentences(g, store, &encoded.sentence_reps, encoded.doc_rep)?;
        Ok(ForwardPass { encoded, scored })
    }

    /// Forward pass without keeping the graph.
    pub fn predict(&self, store: &ParameterStore, sentences: &[Vec<usize>]) -> Result<Prediction> {
        let mut g = Graph::new();
        let fp = self.forward(&mut g, store, sentences)?;
        Ok(Prediction {
            probabilities: fp.probabilities().iter().map(|&p| g.scalar(p)).collect(),
            breakdowns: fp.breakdowns(&g),
        })
    }
}

#[cfg(test)]
mod tests;
