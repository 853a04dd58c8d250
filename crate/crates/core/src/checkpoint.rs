//! Single-file JSON checkpoints.
//!
//! Layout:
//!
//! ```json
//! {
//!   "format": "summarunner-checkpoint",
//!   "version": 1,
//!   "config": { ...ModelConfig... },
//!   "vocab": ["<pad>", "<unk>", "<bos>", "<eos>", ...],
//!   "params": [{ "name": "embedding", "shape": [V, E], "values": [...] }, ...]
//! }
//! ```
//!
//! Values are row-major. Floats are written in shortest round-trip form, so
//! a save/load cycle reproduces every parameter bit for bit.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Vocabulary;
use crate::diffcore::{ParameterStore, Tensor};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, SummaRunner};

pub const FORMAT: &str = "summarunner-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SavedParam {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub params: Vec<SavedParam>,
}

impl Checkpoint {
    /// Copies the model's parameters out of `store`. Parameters that belong
    /// to no model component (the training decoder) are left out.
    pub fn capture(model: &SummaRunner, vocab: &Vocabulary, store: &ParameterStore) -> Result<Self> {
        if vocab.len() != model.config.vocab_size {
            return Err(Error::Checkpoint(format!(
                "vocabulary has {} entries, model expects {}",
                vocab.len(),
                model.config.vocab_size
            )));
        }
        let mut params = Vec::new();
        for id in model.params.ids() {
            let p = store.get(id);
            if !p.value.is_finite() {
                return Err(Error::Checkpoint(format!("parameter `{}` is not finite", p.name)));
            }
            params.push(SavedParam {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
                values: p.value.data().to_vec(),
            });
        }
        Ok(Self {
            format: FORMAT.into(),
            version: VERSION,
            config: model.config.clone(),
            vocab: vocab.clone(),
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        Self::from_json(value)
    }

    /// Checks the format tag and version before decoding the rest.
    pub fn from_json(value: serde_json::Value) -> Result<Self> {
        let format = value.get("format").and_then(|v| v.as_str());
        if format != Some(FORMAT) {
            return Err(Error::Checkpoint(format!("not a {FORMAT} file")));
        }
        let version = value.get("version").and_then(|v| v.as_u64());
        if version != Some(u64::from(VERSION)) {
            return Err(Error::Checkpoint(format!(
                "unsupported version {}, expected {VERSION}",
                version.map_or_else(|| "?".to_string(), |v| v.to_string())
            )));
        }
        Ok(serde_json::from_value(value)?)
    }

    /// Rebuilds the parameter store and binds a model to it.
    pub fn into_model(self) -> Result<(SummaRunner, ParameterStore, Vocabulary)> {
        if self.vocab.len() != self.config.vocab_size {
            return Err(Error::Checkpoint(format!(
                "vocabulary has {} entries, config says {}",
                self.vocab.len(),
                self.config.vocab_size
            )));
        }
        let mut store = ParameterStore::new();
        for p in self.params {
            let t = Tensor::new(p.shape, p.values).map_err(|e| Error::Checkpoint(format!("`{}`: {e}", p.name)))?;
            store.add(p.name, t)?;
        }
        let model = SummaRunner::bind(self.config, &mut store)?;
        if store.len() != model.params.ids().len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint holds {} tensors, model uses {}",
                store.len(),
                model.params.ids().len()
            )));
        }
        Ok((model, store, self.vocab))
    }
}
