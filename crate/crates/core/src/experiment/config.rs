//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::autodiff::AdamConfig;
use crate::model::{DecoderKind, Estimator, ModelConfig, WeightingMode};
use crate::sampler::{SamplePlan, SamplerMode};
use crate::train::{Baseline, Inference, TrainConfig};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{path}: {msg}")]
    Read { path: String, msg: String },
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("unknown key `{0}`")]
    UnknownOverride(String),
    #[error("line {line}: `{key}` is set twice")]
    Duplicate { line: usize, key: String },
    #[error("`{key} = {value}`: {reason}")]
    Invalid {
        key: String,
        value: String,
        reason: String,
    },
}

/// Every accepted key with its default and a one-line description.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("edges", "", "edge TSV; empty generates the planted synthetic task into the run directory"),
    ("features", "", "dense node-feature file (`N D` header); empty means one-hot"),
    ("split", "0.6,0.2,0.2", "train/valid/test fractions"),
    ("predict_relations", "", "relation labels scored as positives; empty means all (or the planted target relation for synthetic data)"),
    ("hidden_dim", "128", "embedding width of every layer"),
    ("num_layers", "2", "encoder layers"),
    ("num_bases", "30", "basis matrices per layer; >= relation count disables the decomposition"),
    ("decoder", "dedicom", "distmult | dedicom"),
    ("weighting", "degree-normalized", "degree-normalized | relation-weighted"),
    ("sampler", "learned", "none | uniform | inverse-frequency | learned"),
    ("estimator", "relational-mc", "relational-mc | uniform-mc"),
    ("fanouts", "7,3", "per-hop fanout s_k"),
    ("caps", "7,3", "per-hop cap multipliers c_k (times batch size)"),
    ("inference", "sampled", "sampled | full"),
    ("batch_size", "100", "positive target edges per batch"),
    ("learning_rate", "0.001", "Adam step size"),
    ("logit_learning_rate", "", "Adam step size of the relation logits l; empty means learning_rate"),
    ("beta1", "0.99", "Adam first-moment decay"),
    ("beta2", "0.999", "Adam second-moment decay"),
    ("eps", "1e-8", "Adam epsilon"),
    ("weight_decay", "0", "L2 coefficient added to gradients"),
    ("max_epochs", "300", "epoch limit"),
    ("patience", "100", "epochs without validation PR-AUC improvement before stopping"),
    ("reinforce_baseline", "off", "off | moving-average"),
    ("baseline_decay", "0.9", "decay of the moving-average baseline"),
    ("timing", "wall", "wall | off (off writes 0 into every timing field)"),
    ("seed", "0", "master seed"),
    ("checkpoint", "", "checkpoint read by eval and sample-stats; empty means <run_dir>/best.ckpt"),
    ("synthetic.num_nodes", "1000", "nodes of the planted task"),
    ("synthetic.num_noise_relations", "5", "abundant uninformative relations"),
    ("synthetic.edges_per_noise_relation", "2000", "edges of each noise relation"),
    ("synthetic.informative_relation_edges", "600", "edges of the rare informative relation"),
    ("synthetic.target_relation_edges", "400", "edges of the predicted relation"),
    ("synthetic.feature_dim", "0", "width of fixed random node features written with the planted task; 0 means one-hot"),
    ("bench.num_nodes", "2000", "nodes of the dense benchmark graph"),
    ("bench.num_relations", "3", "relations of the dense benchmark graph"),
    ("bench.mean_degree", "50", "mean node degree of the dense benchmark graph"),
    ("bench.repetitions", "5", "timed repetitions after one warmup"),
    ("verify.level", "all", "all | gradcheck | enumeration | frequency | oracle"),
    ("verify.seeds", "10", "random instances per verification check"),
    ("stats.batches", "50", "batches sampled by sample-stats"),
];

fn default_of(key: &str) -> Option<&'static str> {
    KEYS.iter().find(|(k, _, _)| *k == key).map(|(_, d, _)| *d)
}

/// Resolved configuration: defaults overlaid with file values and overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            values: KEYS
                .iter()
                .map(|(k, d, _)| (k.to_string(), d.to_string()))
                .collect(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut seen = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                text: raw.to_string(),
            })?;
            let key = key.trim();
            if default_of(key).is_none() {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                });
            }
            if seen.insert(key.to_string(), line).is_some() {
                return Err(ConfigError::Duplicate {
                    line,
                    key: key.to_string(),
                });
            }
            cfg.values.insert(key.to_string(), value.trim().to_string());
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        if default_of(key).is_none() {
            return Err(ConfigError::UnknownOverride(key.to_string()));
        }
        self.values.insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    /// Applies `key=value` strings.
    pub fn apply_overrides<'a>(&mut self, items: impl IntoIterator<Item = &'a str>) -> Result<(), ConfigError> {
        for item in items {
            let (k, v) = item.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: 0,
                text: item.to_string(),
            })?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values
            .get(key)
            .map(String::as_str)
            .unwrap_or_else(|| panic!("`{key}` is not a configuration key"))
    }

    /// Every key in table order, one `key = value` line each.
    pub fn resolved(&self) -> String {
        let mut out = String::new();
        for (k, _, doc) in KEYS {
            let _ = writeln!(out, "# {doc}\n{k} = {}", self.get(k));
        }
        out
    }

    fn invalid(&self, key: &str, reason: impl Into<String>) -> ConfigError {
        ConfigError::Invalid {
            key: key.to_string(),
            value: self.get(key).to_string(),
            reason: reason.into(),
        }
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key).parse::<T>().map_err(|e| self.invalid(key, e.to_string()))
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.get(key);
        if v.is_empty() {
            return Ok(Vec::new());
        }
        v.split(',')
            .map(|t| t.trim().parse::<T>().map_err(|e| self.invalid(key, e.to_string())))
            .collect()
    }

    /// `None` for an empty value.
    pub fn optional(&self, key: &str) -> Option<&str> {
        Some(self.get(key)).filter(|v| !v.is_empty())
    }

    fn choice<T>(&self, key: &str, parse: impl Fn(&str) -> Option<T>, options: &str) -> Result<T, ConfigError> {
        parse(self.get(key)).ok_or_else(|| self.invalid(key, format!("expected one of {options}")))
    }

    pub fn seed(&self) -> Result<u64, ConfigError> {
        self.parsed("seed")
    }

    pub fn split_fractions(&self) -> Result<[f64; 3], ConfigError> {
        let v: Vec<f64> = self.list("split")?;
        <[f64; 3]>::try_from(v).map_err(|_| self.invalid("split", "expected three fractions"))
    }

    pub fn model_config(&self) -> Result<ModelConfig, ConfigError> {
        Ok(ModelConfig {
            hidden_dim: self.parsed("hidden_dim")?,
            num_layers: self.parsed("num_layers")?,
            num_bases: self.parsed("num_bases")?,
            decoder: self.choice("decoder", DecoderKind::parse, "distmult, dedicom")?,
        })
    }

    pub fn sample_plan(&self) -> Result<SamplePlan, ConfigError> {
        SamplePlan::new(self.list("fanouts")?, self.list("caps")?).map_err(|e| self.invalid("fanouts", e.to_string()))
    }

    pub fn sampler(&self) -> Result<Option<SamplerMode>, ConfigError> {
        match self.get("sampler") {
            "none" | "full" => Ok(None),
            _ => self
                .choice("sampler", SamplerMode::parse, "none, uniform, inverse-frequency, learned")
                .map(Some),
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig, ConfigError> {
        let baseline = match self.get("reinforce_baseline") {
            "off" => Baseline::Off,
            "moving-average" => Baseline::MovingAverage {
                decay: self.parsed("baseline_decay")?,
            },
            _ => return Err(self.invalid("reinforce_baseline", "expected off or moving-average")),
        };
        let config = TrainConfig {
            model: self.model_config()?,
            sampler: self.sampler()?,
            weighting: self.choice("weighting", WeightingMode::parse, "degree-normalized, relation-weighted")?,
            estimator: self.choice("estimator", Estimator::parse, "relational-mc, uniform-mc")?,
            plan: self.sample_plan()?,
            batch_size: self.parsed("batch_size")?,
            adam: AdamConfig {
                lr: self.parsed("learning_rate")?,
                beta1: self.parsed("beta1")?,
                beta2: self.parsed("beta2")?,
                eps: self.parsed("eps")?,
                weight_decay: self.parsed("weight_decay")?,
            },
            logit_lr: match self.optional("logit_learning_rate") {
                Some(_) => Some(self.parsed("logit_learning_rate")?),
                None => None,
            },
            max_epochs: self.parsed("max_epochs")?,
            patience: self.parsed("patience")?,
            baseline,
            inference: self.choice(
                "inference",
                |s| match s {
                    "sampled" => Some(Inference::Sampled),
                    "full" => Some(Inference::Full),
                    _ => None,
                },
                "sampled, full",
            )?,
            timing: self.choice(
                "timing",
                |s| match s {
                    "wall" => Some(true),
                    "off" => Some(false),
                    _ => None,
                },
                "wall, off",
            )?,
            seed: self.seed()?,
        };
        config.validate().map_err(|e| ConfigError::Invalid {
            key: "(training)".into(),
            value: String::new(),
            reason: e.to_string(),
        })?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve_to_a_valid_training_config() {
        let c = RunConfig::default().train_config().unwrap();
        assert_eq!(c.batch_size, 100);
        assert_eq!(c.max_epochs, 300);
        assert_eq!(c.patience, 100);
        assert_eq!(c.adam.beta1, 0.99);
        assert_eq!(c.plan.fanouts(), &[7, 3]);
    }

    #[test]
    fn parses_comments_and_rejects_unknown_keys() {
        let c = RunConfig::parse("# comment\nseed = 7  # trailing\n\nsampler=uniform\n").unwrap();
        assert_eq!(c.seed().unwrap(), 7);
        assert_eq!(c.sampler().unwrap(), Some(SamplerMode::Uniform));
        assert_eq!(
            RunConfig::parse("seed = 1\nbogus = 2").unwrap_err(),
            ConfigError::UnknownKey {
                line: 2,
                key: "bogus".into()
            }
        );
        assert!(matches!(RunConfig::parse("seed 1"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(RunConfig::parse("seed=1\nseed=2"), Err(ConfigError::Duplicate { line: 2, .. })));
    }

    #[test]
    fn resolved_round_trips() {
        let mut c = RunConfig::default();
        c.apply_overrides(["hidden_dim=16", "sampler = none"]).unwrap();
        assert_eq!(RunConfig::parse(&c.resolved()).unwrap(), c);
    }

    #[test]
    fn invalid_values_name_the_key() {
        let mut c = RunConfig::default();
        c.set("decoder", "mlp").unwrap();
        let err = c.model_config().unwrap_err();
        assert!(err.to_string().contains("decoder"));
        let mut c = RunConfig::default();
        c.set("patience", "400").unwrap();
        assert!(c.train_config().is_err());
    }
}
