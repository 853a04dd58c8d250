//! Flat run configuration, read from TOML and overridden from the command
//! line.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use summarunner::corpus::CorpusConfig;
use summarunner::evaluation::SelectionPolicy;
use summarunner::model::ModelConfig;
use summarunner::oracle::{OracleConfig, OracleMetric};
use summarunner::rouge::{Flavor, LengthLimit, RougeVariant};
use summarunner::training::{TrainConfig, TrainMode};

pub const RUN_CONFIG_FILE: &str = "run_config.toml";

/// Selection policy as configured. `prob` takes its length limit from the
/// evaluation limit; `topk:auto` picks k on a validation corpus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PolicySpec {
    Prob,
    TopK(usize),
    AutoK,
    Lead(usize),
}

impl PolicySpec {
    /// The concrete policy, or `None` for `topk:auto`.
    pub fn resolve(self, limit: LengthLimit) -> Option<SelectionPolicy> {
        match self {
            PolicySpec::Prob => Some(SelectionPolicy::ByProbability(limit)),
            PolicySpec::TopK(k) => Some(SelectionPolicy::TopK(k)),
            PolicySpec::Lead(n) => Some(SelectionPolicy::Lead(n)),
            PolicySpec::AutoK => None,
        }
    }

    pub fn needs_model(self) -> bool {
        !matches!(self, PolicySpec::Lead(_))
    }
}

impl FromStr for PolicySpec {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prob" => Ok(PolicySpec::Prob),
            "topk:auto" => Ok(PolicySpec::AutoK),
            _ => match s.parse::<SelectionPolicy>()? {
                SelectionPolicy::TopK(k) => Ok(PolicySpec::TopK(k)),
                SelectionPolicy::Lead(n) => Ok(PolicySpec::Lead(n)),
                SelectionPolicy::ByProbability(_) => {
                    bail!("use `prob` with --limit instead of `{s}`")
                }
            },
        }
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicySpec::Prob => write!(f, "prob"),
            PolicySpec::TopK(k) => write!(f, "topk:{k}"),
            PolicySpec::AutoK => write!(f, "topk:auto"),
            PolicySpec::Lead(n) => write!(f, "lead:{n}"),
        }
    }
}

impl TryFrom<String> for PolicySpec {
    type Error = anyhow::Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<PolicySpec> for String {
    fn from(p: PolicySpec) -> String {
        p.to_string()
    }
}

/// Every setting a subcommand may read. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,

    pub max_sentences: usize,
    pub max_words_per_sentence: usize,
    pub vocab_cap: usize,
    /// word2vec text file used to initialize embeddings.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub word_vectors: Option<PathBuf>,

    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub position_embedding_dim: usize,
    pub max_abs_positions: usize,
    pub num_rel_segments: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decoder_hidden_dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decoder_ff_dim: Option<usize>,

    pub mode: TrainMode,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub clip_norm: f64,
    pub adadelta_rho: f64,
    pub adadelta_eps: f64,

    pub oracle_metric: OracleMetric,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_max_selected: Option<usize>,

    pub policy: PolicySpec,
    pub limit: LengthLimit,
    pub flavor: Flavor,
    pub metric: RougeVariant,
    /// Largest k tried by `topk:auto`.
    pub max_k: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let corpus = CorpusConfig::default();
        let model = ModelConfig::new(0);
        let train = TrainConfig::default();
        Self {
            seed: 0,
            max_sentences: corpus.max_sentences,
            max_words_per_sentence: corpus.max_words_per_sentence,
            vocab_cap: corpus.vocab_cap,
            word_vectors: None,
            embedding_dim: model.embedding_dim,
            hidden_dim: model.hidden_dim,
            position_embedding_dim: model.position_embedding_dim,
            max_abs_positions: model.max_abs_positions,
            num_rel_segments: model.num_rel_segments,
            decoder_hidden_dim: None,
            decoder_ff_dim: None,
            mode: train.mode,
            batch_size: train.batch_size,
            max_epochs: train.max_epochs,
            patience: train.patience,
            clip_norm: train.clip_norm,
            adadelta_rho: train.adadelta_rho,
            adadelta_eps: train.adadelta_eps,
            oracle_metric: OracleMetric::default(),
            oracle_max_selected: None,
            policy: PolicySpec::Prob,
            limit: LengthLimit::None,
            flavor: Flavor::F1,
            metric: RougeVariant::Rouge1,
            max_k: 5,
        }
    }
}

impl RunConfig {
    /// Builds the configuration from an optional TOML file, then `key=value`
    /// overrides applied in order. Values are parsed as TOML, falling back to
    /// a bare string.
    pub fn resolve(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut table = match file {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                text.parse::<toml::Table>()
                    .with_context(|| format!("parsing {}", path.display()))?
            }
            None => toml::Table::new(),
        };
        for (key, value) in overrides {
            table.insert(key.clone(), parse_value(value));
        }
        let config: RunConfig = table.try_into().context("invalid configuration")?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.corpus().validate()?;
        self.model(4).validate()?;
        self.train().validate()?;
        if self.max_k == 0 {
            bail!("max_k must be positive");
        }
        if self.oracle_max_selected == Some(0) {
            bail!("oracle_max_selected must be positive");
        }
        Ok(())
    }

    pub fn corpus(&self) -> CorpusConfig {
        CorpusConfig {
            max_sentences: self.max_sentences,
            max_words_per_sentence: self.max_words_per_sentence,
            vocab_cap: self.vocab_cap,
            embedding_dim: self.embedding_dim,
        }
    }

    pub fn model(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            embedding_dim: self.embedding_dim,
            hidden_dim: self.hidden_dim,
            position_embedding_dim: self.position_embedding_dim,
            max_abs_positions: self.max_abs_positions,
            num_rel_segments: self.num_rel_segments,
            decoder_enabled: self.mode == TrainMode::Abstractive,
            decoder_hidden_dim: self.decoder_hidden_dim,
            decoder_ff_dim: self.decoder_ff_dim,
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            mode: self.mode,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            clip_norm: self.clip_norm,
            adadelta_rho: self.adadelta_rho,
            adadelta_eps: self.adadelta_eps,
            seed: self.seed,
        }
    }

    pub fn oracle(&self) -> OracleConfig {
        OracleConfig {
            metric: self.oracle_metric,
            max_selected: self.oracle_max_selected,
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Writes the configuration to `dir/run_config.toml`.
    pub fn write_to(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(RUN_CONFIG_FILE);
        fs::write(&path, self.to_toml()?).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Splits `key=value`.
pub fn parse_assignment(s: &str) -> std::result::Result<(String, String), String> {
    match s.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(format!("expected key=value, got `{s}`")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        let config = RunConfig::default();
        let text = config.to_toml().unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn file_then_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        fs::write(&path, "hidden_dim = 8\nseed = 3\nlimit = \"bytes:75\"\n").unwrap();
        let config = RunConfig::resolve(
            Some(&path),
            &set(&[("seed", "9"), ("policy", "lead:3"), ("mode", "abstractive")]),
        )
        .unwrap();
        assert_eq!(config.hidden_dim, 8);
        assert_eq!(config.seed, 9);
        assert_eq!(config.limit, LengthLimit::Bytes(75));
        assert_eq!(config.policy, PolicySpec::Lead(3));
        assert_eq!(config.mode, TrainMode::Abstractive);
        assert!(config.model(10).decoder_enabled);
    }

    #[test]
    fn bad_configs_are_rejected() {
        for bad in [
            vec![("hidden_dimm", "3")],
            vec![("batch_size", "0")],
            vec![("policy", "topk:0")],
            vec![("limit", "pages:3")],
            vec![("clip_norm", "-1.0")],
        ] {
            assert!(RunConfig::resolve(None, &set(&bad)).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn policy_specs() {
        for s in ["prob", "topk:2", "topk:auto", "lead:3"] {
            assert_eq!(s.parse::<PolicySpec>().unwrap().to_string(), s);
        }
        assert!("prob:bytes:75".parse::<PolicySpec>().is_err());
        assert_eq!(
            PolicySpec::Prob.resolve(LengthLimit::Words(75)),
            Some(SelectionPolicy::ByProbability(LengthLimit::Words(75)))
        );
        assert_eq!(PolicySpec::AutoK.resolve(LengthLimit::None), None);
    }

    #[test]
    fn assignments() {
        assert_eq!(parse_assignment("a = 1").unwrap(), ("a".into(), "1".into()));
        assert!(parse_assignment("novalue").is_err());
        assert_eq!(parse_value("bytes:75"), toml::Value::String("bytes:75".into()));
        assert_eq!(parse_value("4"), toml::Value::Integer(4));
    }
}
