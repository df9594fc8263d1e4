//! Flat `key = value` engine configuration.
//!
//! One file drives every command; command-line flags override individual
//! keys. Unknown keys are rejected. The canonical rendering (all keys, fixed
//! order) is hashed into a fingerprint and echoed into artifact metadata.

use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use serde_json::{Map, Value};
use thiserror::Error;

use crate::codeswitch::SwitchConfig;
use crate::encoder::Dims;
use crate::fingerprint::short_hash;
use crate::ranker::RankConfig;
use crate::responseset::{IntentSource, ResponseSetConfig};
use crate::textproc::{ClauseSplitter, DEFAULT_CONJUNCTIONS};
use crate::trainer::TrainConfig;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value {value:?} for `{key}`")]
    InvalidValue { key: String, value: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("io error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub seed: u64,
    pub p_switch: f64,
    pub conjunctions: Vec<String>,
    pub vocab_min_count: usize,
    pub dims: Dims,
    pub train: TrainConfig,
    pub min_count: usize,
    pub max_size: usize,
    pub k_intents: usize,
    pub intent_source: IntentSource,
    pub rank: RankConfig,
    pub bind: String,
    pub port: u16,
    pub ui_dir: String,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            p_switch: 0.3,
            conjunctions: DEFAULT_CONJUNCTIONS.iter().map(|s| s.to_string()).collect(),
            vocab_min_count: 1,
            dims: Dims::default(),
            train: TrainConfig::default(),
            min_count: 1,
            max_size: 5000,
            k_intents: 8,
            intent_source: IntentSource::Kmeans,
            rank: RankConfig::default(),
            bind: "127.0.0.1".into(),
            port: 8080,
            ui_dir: "webui/dist".into(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::InvalidValue {
        key: key.into(),
        value: value.into(),
    })
}

impl EngineConfig {
    pub const KEYS: [&'static str; 26] = [
        "seed",
        "p_switch",
        "conjunctions",
        "vocab_min_count",
        "d_emb",
        "d_hid",
        "d_out",
        "lr",
        "beta1",
        "beta2",
        "eps",
        "epochs",
        "batch_size",
        "lambda_tr",
        "shuffle",
        "min_count",
        "max_size",
        "k_intents",
        "intent_source",
        "alpha",
        "n1",
        "n2",
        "jaccard_threshold",
        "bind",
        "port",
        "ui_dir",
    ];

    /// Sets one key from its textual value. The seed is shared by synthesis,
    /// initialization, shuffling and clustering.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        match key {
            "seed" => {
                self.seed = parse(key, v)?;
                self.train.seed = self.seed;
            }
            "p_switch" => self.p_switch = parse(key, v)?,
            "conjunctions" => {
                self.conjunctions = v
                    .split(',')
                    .map(|s| s.trim().to_lowercase())
                    .filter(|s| !s.is_empty())
                    .collect()
            }
            "vocab_min_count" => self.vocab_min_count = parse(key, v)?,
            "d_emb" => self.dims.d_emb = parse(key, v)?,
            "d_hid" => self.dims.d_hid = parse(key, v)?,
            "d_out" => self.dims.d_out = parse(key, v)?,
            "lr" => self.train.lr = parse(key, v)?,
            "beta1" => self.train.beta1 = parse(key, v)?,
            "beta2" => self.train.beta2 = parse(key, v)?,
            "eps" => self.train.eps = parse(key, v)?,
            "epochs" => self.train.epochs = parse(key, v)?,
            "batch_size" => self.train.batch_size = parse(key, v)?,
            "lambda_tr" => self.train.lambda_tr = parse(key, v)?,
            "shuffle" => self.train.shuffle = parse(key, v)?,
            "min_count" => self.min_count = parse(key, v)?,
            "max_size" => self.max_size = parse(key, v)?,
            "k_intents" => self.k_intents = parse(key, v)?,
            "intent_source" => {
                self.intent_source = match v {
                    "kmeans" => IntentSource::Kmeans,
                    "sentiment" => IntentSource::Sentiment,
                    _ => {
                        return Err(ConfigError::InvalidValue {
                            key: key.into(),
                            value: v.into(),
                        })
                    }
                }
            }
            "alpha" => self.rank.alpha = parse(key, v)?,
            "n1" => self.rank.n1 = parse(key, v)?,
            "n2" => self.rank.n2 = parse(key, v)?,
            "jaccard_threshold" => self.rank.jaccard_threshold = parse(key, v)?,
            "bind" => self.bind = v.to_owned(),
            "port" => self.port = parse(key, v)?,
            "ui_dir" => self.ui_dir = v.to_owned(),
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. `#` starts a comment line.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| ConfigError::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn Display| ConfigError::Invalid(e.to_string());
        self.switch_config().validate().map_err(|e| invalid(&e))?;
        self.train.validate().map_err(|e| invalid(&e))?;
        self.rank.validate().map_err(|e| invalid(&e))?;
        if self.dims.d_emb == 0 || self.dims.d_hid == 0 || self.dims.d_out == 0 {
            return Err(ConfigError::Invalid("dims must be ≥ 1".into()));
        }
        if self.vocab_min_count == 0 || self.min_count == 0 {
            return Err(ConfigError::Invalid("min counts must be ≥ 1".into()));
        }
        let k = match self.intent_source {
            IntentSource::Kmeans => self.k_intents,
            IntentSource::Sentiment => 7,
        };
        if k == 0 || self.max_size < k {
            return Err(ConfigError::Invalid("need max_size ≥ k_intents ≥ 1".into()));
        }
        Ok(())
    }

    /// Every key with its current value, in fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let t = &self.train;
        let r = &self.rank;
        let intent = match self.intent_source {
            IntentSource::Kmeans => "kmeans",
            IntentSource::Sentiment => "sentiment",
        };
        vec![
            ("seed", self.seed.to_string()),
            ("p_switch", self.p_switch.to_string()),
            ("conjunctions", self.conjunctions.join(",")),
            ("vocab_min_count", self.vocab_min_count.to_string()),
            ("d_emb", self.dims.d_emb.to_string()),
            ("d_hid", self.dims.d_hid.to_string()),
            ("d_out", self.dims.d_out.to_string()),
            ("lr", t.lr.to_string()),
            ("beta1", t.beta1.to_string()),
            ("beta2", t.beta2.to_string()),
            ("eps", t.eps.to_string()),
            ("epochs", t.epochs.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("lambda_tr", t.lambda_tr.to_string()),
            ("shuffle", t.shuffle.to_string()),
            ("min_count", self.min_count.to_string()),
            ("max_size", self.max_size.to_string()),
            ("k_intents", self.k_intents.to_string()),
            ("intent_source", intent.to_string()),
            ("alpha", r.alpha.to_string()),
            ("n1", r.n1.to_string()),
            ("n2", r.n2.to_string()),
            ("jaccard_threshold", r.jaccard_threshold.to_string()),
            ("bind", self.bind.clone()),
            ("port", self.port.to_string()),
            ("ui_dir", self.ui_dir.clone()),
        ]
    }

    pub fn render(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn fingerprint(&self) -> String {
        short_hash(self.render().as_bytes())
    }

    pub fn to_json(&self) -> Value {
        let map: Map<String, Value> = self
            .entries()
            .into_iter()
            .map(|(k, v)| (k.to_owned(), Value::String(v)))
            .collect();
        Value::Object(map)
    }

    pub fn switch_config(&self) -> SwitchConfig {
        SwitchConfig {
            p_switch: self.p_switch,
            rng_seed: self.seed,
        }
    }

    pub fn clause_splitter(&self) -> ClauseSplitter {
        ClauseSplitter::new(&self.conjunctions)
    }

    pub fn response_set_config(&self) -> ResponseSetConfig {
        ResponseSetConfig {
            min_count: self.min_count,
            max_size: self.max_size,
            k_intents: self.k_intents,
            seed: self.seed,
            intent_source: self.intent_source,
        }
    }

    /// Provenance block written into every artifact.
    pub fn metadata(&self, inputs: &[(&str, String)]) -> Value {
        let inputs: Map<String, Value> = inputs
            .iter()
            .map(|(k, v)| (k.to_string(), Value::String(v.clone())))
            .collect();
        serde_json::json!({
            "version": 1,
            "config_fingerprint": self.fingerprint(),
            "config": self.to_json(),
            "inputs": inputs,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_through_render() {
        let cfg = EngineConfig::default();
        assert_eq!(EngineConfig::parse(&cfg.render()).unwrap(), cfg);
        let keys: Vec<&str> = cfg.entries().into_iter().map(|(k, _)| k).collect();
        assert_eq!(keys, EngineConfig::KEYS);
    }

    #[test]
    fn overrides_and_comments() {
        let cfg = EngineConfig::parse("# demo\nalpha = 0.7\n\nconjunctions = and, aur\nseed=9\n").unwrap();
        assert_eq!(cfg.rank.alpha, 0.7);
        assert_eq!(cfg.conjunctions, ["and", "aur"]);
        assert_eq!(cfg.train.seed, 9);
        assert_ne!(cfg.fingerprint(), EngineConfig::default().fingerprint());
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert_eq!(EngineConfig::parse("colour = red"), Err(ConfigError::UnknownKey("colour".into())));
        assert!(matches!(EngineConfig::parse("n1 = many"), Err(ConfigError::InvalidValue { .. })));
        assert!(matches!(EngineConfig::parse("alpha"), Err(ConfigError::Syntax { line: 1 })));
        assert!(matches!(EngineConfig::parse("n1 = 2\nn2 = 3"), Err(ConfigError::Invalid(_))));
        assert!(matches!(EngineConfig::parse("p_switch = 2"), Err(ConfigError::Invalid(_))));
        assert!(matches!(EngineConfig::parse("k_intents = 0"), Err(ConfigError::Invalid(_))));
    }
}
