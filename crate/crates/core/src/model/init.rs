use rand::{Rng, RngCore};

use crate::corpus::random_embeddings;
use crate::diffcore::{ParamId, ParameterStore, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub(crate) enum Init {
    /// Uniform in ±sqrt(6 / (fan_in + fan_out)).
    Glorot,
    /// Same range as word vectors without a pretrained entry.
    Embedding,
    Zeros,
}

fn glorot(shape: &[usize], rng: &mut dyn RngCore) -> Tensor {
    let (fan_out, fan_in) = match shape {
        [n] => (1, *n),
        [rows, cols] => (*rows, *cols),
        _ => unreachable!("parameters are vectors or matrices"),
    };
    let r = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let len = shape.iter().product();
    let data = (0..len).map(|_| rng.gen_range(-r..=r)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape and data agree")
}

/// Either registers fresh parameters (drawing from `rng`) or binds to
/// parameters already present in the store by name.
pub(crate) struct Registrar<'a> {
    store: &'a mut ParameterStore,
    rng: Option<&'a mut dyn RngCore>,
}

impl<'a> Registrar<'a> {
    pub(crate) fn fresh(store: &'a mut ParameterStore, rng: &'a mut dyn RngCore) -> Self {
        Self { store, rng: Some(rng) }
    }

    pub(crate) fn bind(store: &'a mut ParameterStore) -> Self {
        Self { store, rng: None }
    }

    pub(crate) fn param(&mut self, name: &str, shape: &[usize], init: Init) -> Result<ParamId> {
        match self.rng.as_deref_mut() {
            Some(rng) => {
                let value = match init {
                    Init::Glorot => glorot(shape, rng),
                    Init::Embedding => {
                        let (rows, cols) = match shape {
                            [n] => (1, *n),
                            [r, c] => (*r, *c),
                            _ => unreachable!("parameters are vectors or matrices"),
                        };
                        let m = random_embeddings(rows, cols, rng);
                        Tensor::new(shape.to_vec(), m.into_data())?
                    }
                    Init::Zeros => Tensor::zeros(shape),
                };
                self.store.add(name, value)
            }
            None => {
                let id = self
                    .store
                    .id(name)
                    .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{name}`")))?;
                let found = self.store.value(id).shape();
                if found != shape {
                    return Err(Error::Checkpoint(format!(
                        "parameter `{name}` has shape {found:?}, expected {shape:?}"
                    )));
                }
                Ok(id)
            }
        }
    }
}
