//! Extractive and abstractive training.
//!
//! Extractive training minimizes the summed binary cross-entropy of the
//! sentence labels. Abstractive training instead couples the classifier to a
//! GRU decoder that reads only the final summary state and is trained with
//! teacher forcing to reproduce the reference summary word by word; the
//! decoder is discarded after training.

use std::fmt;
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{batches, encode, Document, Vocabulary, BOS};
use crate::diffcore::{Graph, ParamId, ParameterStore, Tensor, Var};
use crate::error::{Error, Result};
use crate::model::init::{Init, Registrar};
use crate::model::{gru_step, GruParams, GruVars, SummaRunner};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    #[default]
    Extractive,
    Abstractive,
}

impl FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "extractive" => Ok(TrainMode::Extractive),
            "abstractive" => Ok(TrainMode::Abstractive),
            _ => Err(Error::Config(format!("unknown mode `{s}` (extractive|abstractive)"))),
        }
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrainMode::Extractive => "extractive",
            TrainMode::Abstractive => "abstractive",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Global gradient-norm ceiling.
    pub clip_norm: f64,
    pub adadelta_rho: f64,
    pub adadelta_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::Extractive,
            batch_size: 64,
            max_epochs: 50,
            patience: 3,
            clip_norm: 5.0,
            adadelta_rho: 0.95,
            adadelta_eps: 1e-6,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return Err(Error::Config("clip_norm must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.adadelta_rho) || self.adadelta_eps.is_nan() || self.adadelta_eps <= 0.0 {
            return Err(Error::Config("adadelta needs 0 <= rho < 1 and eps > 0".into()));
        }
        Ok(())
    }
}

/// One document prepared for training.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub id: String,
    pub sentences: Vec<Vec<usize>>,
    pub labels: Option<Vec<u8>>,
    /// Flattened reference summary.
    pub reference: Option<Vec<usize>>,
}

impl Example {
    pub fn from_document(doc: &Document, vocab: &Vocabulary) -> Self {
        Self {
            id: doc.id.clone(),
            sentences: encode(doc, vocab),
            labels: doc.labels.clone(),
            reference: doc
                .summary
                .as_ref()
                .map(|s| s.iter().flat_map(|t| vocab.encode(t)).collect()),
        }
    }
}

/// Decoder weights: a GRU whose gates also see the summary state, a tanh
/// feed-forward layer and a vocabulary softmax.
#[derive(Clone, Debug)]
pub struct DecoderParams {
    pub gru: GruParams,
    pub ff_h: ParamId,
    pub ff_x: ParamId,
    pub ff_c: ParamId,
    pub ff_b: ParamId,
    pub out_w: ParamId,
    pub out_b: ParamId,
}

#[derive(Clone, Debug)]
pub struct Decoder {
    pub params: DecoderParams,
    /// Shared with the encoder.
    pub embedding: ParamId,
}

impl Decoder {
    pub fn new(model: &SummaRunner, store: &mut ParameterStore, rng: &mut dyn RngCore) -> Result<Self> {
        Self::register(model, &mut Registrar::fresh(store, rng))
    }

    pub fn bind(model: &SummaRunner, store: &mut ParameterStore) -> Result<Self> {
        Self::register(model, &mut Registrar::bind(store))
    }

    fn register(model: &SummaRunner, reg: &mut Registrar<'_>) -> Result<Self> {
        let c = &model.config;
        let (e, h, dh, ff) = (c.embedding_dim, c.hidden_dim, c.decoder_hidden(), c.decoder_ff());
        let params = DecoderParams {
            gru: GruParams::register(reg, "decoder.gru", e, dh, Some(h))?,
            ff_h: reg.param("decoder.ff.w_h", &[ff, dh], Init::Glorot)?,
            ff_x: reg.param("decoder.ff.w_x", &[ff, e], Init::Glorot)?,
            ff_c: reg.param("decoder.ff.w_c", &[ff, h], Init::Glorot)?,
            ff_b: reg.param("decoder.ff.b", &[ff], Init::Zeros)?,
            out_w: reg.param("decoder.out.w", &[c.vocab_size, ff], Init::Glorot)?,
            out_b: reg.param("decoder.out.b", &[c.vocab_size], Init::Zeros)?,
        };
        Ok(Self {
            params,
            embedding: model.params.embedding,
        })
    }

    /// Every parameter owned by the decoder alone.
    pub fn param_ids(&self) -> Vec<ParamId> {
        let p = &self.params;
        let mut ids = p.gru.ids();
        ids.extend([p.ff_h, p.ff_x, p.ff_c, p.ff_b, p.out_w, p.out_b]);
        ids
    }
}

/// Summed cross-entropy of the sentence labels.
pub fn extractive_loss(
    g: &mut Graph,
    model: &SummaRunner,
    store: &ParameterStore,
    sentences: &[Vec<usize>],
    labels: &[u8],
) -> Result<Var> {
    if labels.len() != sentences.len() {
        return Err(Error::precondition(format!(
            "{} labels for {} sentences",
            labels.len(),
            sentences.len()
        )));
    }
    let fp = model.forward(g, store, sentences)?;
    let mut total: Option<Var> = None;
    for (&p, &y) in fp.probabilities().iter().zip(labels) {
        let l = g.bce_loss(p, f64::from(y))?;
        total = Some(match total {
            Some(t) => g.add(t, l)?,
            None => l,
        });
    }
    Ok(total.expect("at least one sentence"))
}

/// Teacher-forced negative log-likelihood of `reference` given the summary
/// state `s_last`. The input at step k is the embedding of word k-1, with
/// BOS before the first word.
pub fn decoder_forward(
    g: &mut Graph,
    decoder: &Decoder,
    store: &ParameterStore,
    s_last: Var,
    reference: &[usize],
) -> Result<Var> {
    if reference.is_empty() {
        return Err(Error::precondition("empty reference summary"));
    }
    let p = &decoder.params;
    let gru = GruVars::load(g, store, &p.gru);
    let ff_h = g.param(store, p.ff_h);
    let ff_x = g.param(store, p.ff_x);
    let ff_c = g.param(store, p.ff_c);
    let ff_b = g.param(store, p.ff_b);
    let out_w = g.param(store, p.out_w);
    let out_b = g.param(store, p.out_b);
    let ctx_ff = g.matvec(ff_c, s_last)?;

    let mut h = g.constant(Tensor::zeros(&[p.gru.hidden_dim]));
    let mut prev = BOS;
    let mut total: Option<Var> = None;
    for &w in reference {
        let x = g.param_row(store, decoder.embedding, prev)?;
        h = gru_step(g, &gru, x, h, Some(s_last))?;
        let a = g.matvec(ff_h, h)?;
        let b = g.matvec(ff_x, x)?;
        let mut f = g.add(a, b)?;
        f = g.add(f, ctx_ff)?;
        f = g.add(f, ff_b)?;
        let f = g.tanh(f);
        let logits = g.matvec(out_w, f)?;
        let logits = g.add(logits, out_b)?;
        let nll = g.softmax_nll(logits, w)?;
        total = Some(match total {
            Some(t) => g.add(t, nll)?,
            None => nll,
        });
        prev = w;
    }
    Ok(total.expect("non-empty reference"))
}

/// Encoder forward pass followed by the decoder loss on the reference.
pub fn abstractive_loss(
    g: &mut Graph,
    model: &SummaRunner,
    decoder: &Decoder,
    store: &ParameterStore,
    sentences: &[Vec<usize>],
    reference: &[usize],
) -> Result<Var> {
    let fp = model.forward(g, store, sentences)?;
    decoder_forward(g, decoder, store, fp.s_last(), reference)
}

/// Rescales all gradients so their global L2 norm is at most `clip_norm`.
/// Returns the norm before clipping.
pub fn clip_gradients(store: &mut ParameterStore, clip_norm: f64) -> f64 {
    let norm = store.grad_norm();
    if norm > clip_norm {
        let scale = clip_norm / norm;
        for p in store.iter_mut() {
            p.grad.data_mut().iter_mut().for_each(|g| *g *= scale);
        }
    }
    norm
}

/// One adadelta update of every parameter from its gradient buffer.
pub fn adadelta_step(store: &mut ParameterStore, rho: f64, eps: f64) {
    for p in store.iter_mut() {
        let value = p.value.data_mut();
        let grad = p.grad.data();
        let eg = p.sq_grad_avg.data_mut();
        let ed = p.sq_update_avg.data_mut();
        for i in 0..value.len() {
            let g = grad[i];
            eg[i] = rho * eg[i] + (1.0 - rho) * g * g;
            let delta = -((ed[i] + eps).sqrt() / (eg[i] + eps).sqrt()) * g;
            ed[i] = rho * ed[i] + (1.0 - rho) * delta * delta;
            value[i] += delta;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Stops after `patience` consecutive epochs without a strictly lower
/// validation loss.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: None,
            stale: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, loss: f64) -> StopDecision {
        match self.best {
            Some((_, best)) if loss >= best => {
                self.stale += 1;
                if self.stale >= self.patience {
                    StopDecision::Stop
                } else {
                    StopDecision::Continue
                }
            }
            _ => {
                self.best = Some((epoch, loss));
                self.stale = 0;
                StopDecision::Improved
            }
        }
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean per-document training loss over the epoch's batches.
    pub train_loss: f64,
    pub valid_loss: f64,
    /// Per-word decoder perplexity (abstractive mode only).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub train_perplexity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub valid_perplexity: Option<f64>,
    pub grad_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub mode: TrainMode,
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_valid_loss: f64,
    pub stopped_epoch: usize,
    pub stopped_early: bool,
    #[serde(default)]
    pub best_checkpoint: Option<String>,
}

/// Sum of losses and reference words over a set of examples, no gradients.
fn evaluate_loss(
    model: &SummaRunner,
    decoder: Option<&Decoder>,
    store: &ParameterStore,
    examples: &[Example],
    mode: TrainMode,
) -> Result<(f64, usize)> {
    let mut total = 0.0;
    let mut words = 0;
    for ex in examples {
        let mut g = Graph::new();
        let loss = example_loss(&mut g, model, decoder, store, ex, mode)?;
        total += g.scalar(loss);
        words += ex.reference.as_ref().map_or(0, Vec::len);
    }
    Ok((total, words))
}

/// Loss of one example under the given mode.
pub fn example_loss(
    g: &mut Graph,
    model: &SummaRunner,
    decoder: Option<&Decoder>,
    store: &ParameterStore,
    ex: &Example,
    mode: TrainMode,
) -> Result<Var> {
    match mode {
        TrainMode::Extractive => {
            let labels = ex
                .labels
                .as_ref()
                .ok_or_else(|| Error::precondition(format!("`{}` has no labels", ex.id)))?;
            extractive_loss(g, model, store, &ex.sentences, labels)
        }
        TrainMode::Abstractive => {
            let decoder = decoder.ok_or_else(|| Error::Config("abstractive mode needs a decoder".into()))?;
            let reference = ex
                .reference
                .as_ref()
                .ok_or_else(|| Error::precondition(format!("`{}` has no reference", ex.id)))?;
            abstractive_loss(g, model, decoder, store, &ex.sentences, reference)
        }
    }
}

fn check_data(examples: &[Example], mode: TrainMode, which: &str) -> Result<()> {
    let missing: Vec<String> = examples
        .iter()
        .filter(|ex| match mode {
            TrainMode::Extractive => ex.labels.is_none(),
            TrainMode::Abstractive => ex.reference.as_ref().is_none_or(Vec::is_empty),
        })
        .map(|ex| ex.id.clone())
        .collect();
    if !missing.is_empty() {
        let what = match mode {
            TrainMode::Extractive => "labels",
            TrainMode::Abstractive => "reference summaries",
        };
        return Err(Error::Config(format!(
            "{mode} training needs {what}; missing in {which} documents: {}",
            missing.join(", ")
        )));
    }
    Ok(())
}

/// Runs minibatch adadelta with early stopping on validation loss.
///
/// `on_improve` is called with the store whenever validation loss reaches a
/// new minimum; on return the store holds the best parameters.
pub fn train(
    model: &SummaRunner,
    decoder: Option<&Decoder>,
    store: &mut ParameterStore,
    train_set: &[Example],
    valid_set: &[Example],
    config: &TrainConfig,
    mut on_improve: impl FnMut(&EpochStats, &ParameterStore) -> Result<()>,
) -> Result<TrainReport> {
    config.validate()?;
    if train_set.is_empty() || valid_set.is_empty() {
        return Err(Error::Config("training and validation sets must be non-empty".into()));
    }
    if config.mode == TrainMode::Abstractive && decoder.is_none() {
        return Err(Error::Config("abstractive mode needs a decoder".into()));
    }
    check_data(train_set, config.mode, "training")?;
    check_data(valid_set, config.mode, "validation")?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best_snapshot = store.snapshot();
    let mut epochs = Vec::new();
    let mut stopped_early = false;
    let abstractive = config.mode == TrainMode::Abstractive;

    for epoch in 1..=config.max_epochs {
        let mut epoch_loss = 0.0;
        let mut epoch_words = 0;
        let mut last_norm = 0.0;
        for batch in batches(train_set.len(), config.batch_size, &mut rng) {
            store.zero_grad();
            let weight = 1.0 / batch.len() as f64;
            for &i in &batch {
                let ex = &train_set[i];
                let mut g = Graph::new();
                let loss = example_loss(&mut g, model, decoder, store, ex, config.mode)?;
                g.backward(loss)?;
                g.accumulate_param_grads(store, weight);
                epoch_loss += g.scalar(loss);
                epoch_words += ex.reference.as_ref().map_or(0, Vec::len);
            }
            last_norm = clip_gradients(store, config.clip_norm);
            adadelta_step(store, config.adadelta_rho, config.adadelta_eps);
        }
        store.zero_grad();

        let (valid_total, valid_words) = evaluate_loss(model, decoder, store, valid_set, config.mode)?;
        let stats = EpochStats {
            epoch,
            train_loss: epoch_loss / train_set.len() as f64,
            valid_loss: valid_total / valid_set.len() as f64,
            train_perplexity: abstractive.then(|| (epoch_loss / epoch_words as f64).exp()),
            valid_perplexity: abstractive.then(|| (valid_total / valid_words as f64).exp()),
            grad_norm: last_norm,
        };
        let decision = stopper.observe(epoch, stats.valid_loss);
        if decision == StopDecision::Improved {
            best_snapshot = store.snapshot();
            on_improve(&stats, store)?;
        }
        epochs.push(stats);
        if decision == StopDecision::Stop {
            stopped_early = true;
            break;
        }
    }

    store.restore(&best_snapshot)?;
    let (best_epoch, best_valid_loss) = stopper.best().expect("at least one epoch");
    Ok(TrainReport {
        mode: config.mode,
        stopped_epoch: epochs.len(),
        epochs,
        best_epoch,
        best_valid_loss,
        stopped_early,
        best_checkpoint: None,
    })
}

/// Fraction of labeled sentences whose prediction at threshold 0.5
/// (P >= 0.5 means selected) matches the label.
pub fn label_accuracy(model: &SummaRunner, store: &ParameterStore, examples: &[Example]) -> Result<f64> {
    let (mut correct, mut total) = (0usize, 0usize);
    for ex in examples {
        let labels = ex
            .labels
            .as_ref()
            .ok_or_else(|| Error::precondition(format!("`{}` has no labels", ex.id)))?;
        let probs = model.predict(store, &ex.sentences)?.probabilities;
        correct += probs
            .iter()
            .zip(labels)
            .filter(|(&p, &y)| (p >= 0.5) == (y == 1))
            .count();
        total += labels.len();
    }
    Ok(if total == 0 { 0.0 } else { correct as f64 / total as f64 })
}
