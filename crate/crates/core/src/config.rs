//! Flat `key=value` training configuration.
//!
//! Precedence is defaults < config file < explicit overrides; each layer is
//! applied with [`TrainConfig::set`]. Unknown keys are rejected with the
//! closest known key as a suggestion.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{DynamicsConfig, Variant};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown config key `{key}`{}", suggestion.as_ref().map(|s| format!(" (did you mean `{s}`?)")).unwrap_or_default())]
    UnknownKey { key: String, suggestion: Option<String> },
    #[error("line {line}: expected `key=value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    InvalidValue { key: String, value: String, reason: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Every recognised key with its default and a one-line description.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("variant", "lse", "retrieval variant: lse | lsr | hier | nomem"),
    ("hidden_dim", "64", "hidden dimension d (grid {64, 128})"),
    ("num_patterns", "64", "patterns per bank K (grid {64, 256})"),
    ("beta_init", "1.0", "initial inverse temperature (learnable)"),
    ("lambda", "0.3", "Laplacian weight (negative sharpens)"),
    ("alpha", "0.3", "damping, in (0, 1]"),
    ("iterations", "4", "update iterations per layer T"),
    ("num_layers", "2", "stacked layers L"),
    ("groups", "8", "pattern groups G (hier only)"),
    ("heads", "1", "memory heads H (grid {1, 2, 4, 8}); must divide hidden_dim"),
    ("dropout", "0.3", "dropout rate (grid {0.3, 0.5})"),
    ("gate_bias", "2.0", "gate bias initialisation"),
    ("skip_weight", "0.1", "layer skip-connection weight"),
    ("learning_rate", "0.01", "Adam learning rate (grid {0.001, 0.005, 0.01})"),
    ("weight_decay", "5e-4", "L2 weight decay (grid {1e-4, 5e-4, 1e-3})"),
    ("epochs", "300", "maximum training epochs"),
    ("patience", "50", "early-stopping patience in epochs"),
    ("seed", "0", "run seed"),
    ("self_loops", "true", "add self-loops before normalising the Laplacian"),
    ("freeze_beta", "false", "keep log-beta fixed at its initial value"),
    ("freeze_patterns", "false", "keep pattern matrices fixed"),
    ("pattern_sq_norm", "none", "rescale each initial M to this squared spectral norm"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub variant: Variant,
    pub hidden_dim: usize,
    pub num_patterns: usize,
    pub beta_init: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub iterations: usize,
    pub num_layers: usize,
    pub groups: usize,
    pub heads: usize,
    pub dropout: f64,
    pub gate_bias: f64,
    pub skip_weight: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub self_loops: bool,
    pub freeze_beta: bool,
    pub freeze_patterns: bool,
    pub pattern_sq_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Lse,
            hidden_dim: 64,
            num_patterns: 64,
            beta_init: 1.0,
            lambda: 0.3,
            alpha: 0.3,
            iterations: 4,
            num_layers: 2,
            groups: 8,
            heads: 1,
            dropout: 0.3,
            gate_bias: 2.0,
            skip_weight: 0.1,
            learning_rate: 0.01,
            weight_decay: 5e-4,
            epochs: 300,
            patience: 50,
            seed: 0,
            self_loops: true,
            freeze_beta: false,
            freeze_patterns: false,
            pattern_sq_norm: None,
        }
    }
}

fn invalid(key: &str, value: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.into(),
        value: value.into(),
        reason: reason.into(),
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| invalid(key, value, e.to_string()))
}

fn flag(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(invalid(key, value, "expected true or false")),
    }
}

/// Closest known key, if any is reasonably close.
pub fn suggest_key(key: &str) -> Option<String> {
    KEYS.iter()
        .map(|(k, _, _)| (strsim::normalized_damerau_levenshtein(key, k), *k))
        .filter(|(score, _)| *score >= 0.5)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, k)| k.to_string())
}

/// Splits config text into `(key, value)` pairs. Blank lines and `#`
/// comments are skipped.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: i + 1,
            text: raw.to_string(),
        })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            });
        }
        pairs.push((k.to_string(), v.to_string()));
    }
    Ok(pairs)
}

impl TrainConfig {
    /// Applies one `key=value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "variant" => {
                self.variant =
                    Variant::parse(value).ok_or_else(|| invalid(key, value, "expected lse, lsr, hier or nomem"))?
            }
            "hidden_dim" => self.hidden_dim = num(key, value)?,
            "num_patterns" => self.num_patterns = num(key, value)?,
            "beta_init" => self.beta_init = num(key, value)?,
            "lambda" => self.lambda = num(key, value)?,
            "alpha" => self.alpha = num(key, value)?,
            "iterations" => self.iterations = num(key, value)?,
            "num_layers" => self.num_layers = num(key, value)?,
            "groups" => self.groups = num(key, value)?,
            "heads" => self.heads = num(key, value)?,
            "dropout" => self.dropout = num(key, value)?,
            "gate_bias" => self.gate_bias = num(key, value)?,
            "skip_weight" => self.skip_weight = num(key, value)?,
            "learning_rate" => self.learning_rate = num(key, value)?,
            "weight_decay" => self.weight_decay = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "patience" => self.patience = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "self_loops" => self.self_loops = flag(key, value)?,
            "freeze_beta" => self.freeze_beta = flag(key, value)?,
            "freeze_patterns" => self.freeze_patterns = flag(key, value)?,
            "pattern_sq_norm" => {
                self.pattern_sq_norm = if value.eq_ignore_ascii_case("none") {
                    None
                } else {
                    Some(num(key, value)?)
                }
            }
            _ => {
                return Err(ConfigError::UnknownKey {
                    key: key.to_string(),
                    suggestion: suggest_key(key),
                })
            }
        }
        Ok(())
    }

    /// Applies config text on top of `self`, then validates.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (k, v) in parse_pairs(text)? {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |m: String| Err(ConfigError::Invalid(m));
        if self.hidden_dim == 0 || self.num_patterns == 0 {
            return fail("hidden_dim and num_patterns must be positive".into());
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return fail(format!("alpha must lie in (0, 1], got {}", self.alpha));
        }
        if self.iterations == 0 {
            return fail("iterations must be at least 1".into());
        }
        if self.heads == 0 || self.hidden_dim % self.heads != 0 {
            return fail(format!(
                "hidden_dim {} is not divisible by heads {}",
                self.hidden_dim, self.heads
            ));
        }
        if self.variant == Variant::Hier && (self.groups == 0 || self.num_patterns % self.groups != 0) {
            return fail(format!(
                "num_patterns {} is not divisible by groups {}",
                self.num_patterns, self.groups
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if !(self.beta_init > 0.0 && self.beta_init.is_finite()) {
            return fail(format!("beta_init must be positive, got {}", self.beta_init));
        }
        if self.learning_rate < 0.0 || self.weight_decay < 0.0 {
            return fail("learning_rate and weight_decay must be non-negative".into());
        }
        if !self.lambda.is_finite() || !self.skip_weight.is_finite() || !self.gate_bias.is_finite() {
            return fail("lambda, skip_weight and gate_bias must be finite".into());
        }
        if let Some(s) = self.pattern_sq_norm {
            if !(s > 0.0 && s.is_finite()) {
                return fail(format!("pattern_sq_norm must be positive, got {s}"));
            }
        }
        Ok(())
    }

    pub fn dynamics(&self) -> DynamicsConfig {
        DynamicsConfig {
            lambda: self.lambda,
            alpha: self.alpha,
            iterations: self.iterations,
            variant: self.variant,
        }
    }

    /// Effective group count: groups only apply to the hierarchical variant.
    pub fn effective_groups(&self) -> usize {
        if self.variant == Variant::Hier {
            self.groups
        } else {
            1
        }
    }

    /// All keys and their current values, rendered as config text.
    pub fn entries(&self) -> BTreeMap<&'static str, String> {
        let mut m = BTreeMap::new();
        m.insert("variant", self.variant.to_string());
        m.insert("hidden_dim", self.hidden_dim.to_string());
        m.insert("num_patterns", self.num_patterns.to_string());
        m.insert("beta_init", format!("{:?}", self.beta_init));
        m.insert("lambda", format!("{:?}", self.lambda));
        m.insert("alpha", format!("{:?}", self.alpha));
        m.insert("iterations", self.iterations.to_string());
        m.insert("num_layers", self.num_layers.to_string());
        m.insert("groups", self.groups.to_string());
        m.insert("heads", self.heads.to_string());
        m.insert("dropout", format!("{:?}", self.dropout));
        m.insert("gate_bias", format!("{:?}", self.gate_bias));
        m.insert("skip_weight", format!("{:?}", self.skip_weight));
        m.insert("learning_rate", format!("{:?}", self.learning_rate));
        m.insert("weight_decay", format!("{:?}", self.weight_decay));
        m.insert("epochs", self.epochs.to_string());
        m.insert("patience", self.patience.to_string());
        m.insert("seed", self.seed.to_string());
        m.insert("self_loops", self.self_loops.to_string());
        m.insert("freeze_beta", self.freeze_beta.to_string());
        m.insert("freeze_patterns", self.freeze_patterns.to_string());
        m.insert(
            "pattern_sq_norm",
            self.pattern_sq_norm.map_or("none".into(), |v| format!("{v:?}")),
        );
        m
    }

    /// Canonical text form; round-trips through [`TrainConfig::from_text`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    /// Sort/tie-break key: every entry except the seed, in key order.
    pub fn key(&self) -> String {
        self.entries()
            .into_iter()
            .filter(|(k, _)| *k != "seed")
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";")
    }
}

/// Help text listing every key with its default.
pub fn describe_keys() -> String {
    let mut s = String::new();
    for (k, d, help) in KEYS {
        let _ = writeln!(s, "  {k:<16} default {d:<6} {help}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_table() {
        let c = TrainConfig::default();
        let mut from_table = TrainConfig::default();
        for (k, d, _) in KEYS {
            from_table.set(k, d).unwrap();
        }
        assert_eq!(c, from_table);
        assert_eq!((c.hidden_dim, c.num_patterns, c.iterations, c.num_layers, c.groups), (64, 64, 4, 2, 8));
        assert_eq!((c.lambda, c.alpha, c.dropout, c.gate_bias, c.skip_weight), (0.3, 0.3, 0.3, 2.0, 0.1));
        assert_eq!((c.learning_rate, c.weight_decay, c.epochs, c.patience), (0.01, 5e-4, 300, 50));
    }

    #[test]
    fn unknown_key_suggests_closest() {
        let err = TrainConfig::from_text("lamda=0.3\n").unwrap_err();
        assert_eq!(
            err,
            ConfigError::UnknownKey {
                key: "lamda".into(),
                suggestion: Some("lambda".into())
            }
        );
        assert!(err.to_string().contains("did you mean `lambda`"));
        assert!(matches!(
            TrainConfig::from_text("zzzzzzzzzzzz=1"),
            Err(ConfigError::UnknownKey { suggestion: None, .. })
        ));
    }

    #[test]
    fn text_roundtrip_and_comments() {
        let mut c = TrainConfig::default();
        c.apply_text("# comment\nlambda = -0.05\nvariant=hier  # trailing\n\npattern_sq_norm=2\n").unwrap();
        assert_eq!(c.lambda, -0.05);
        assert_eq!(c.variant, Variant::Hier);
        assert_eq!(c.pattern_sq_norm, Some(2.0));
        assert_eq!(TrainConfig::from_text(&c.to_text()).unwrap(), c);
        assert!(matches!(TrainConfig::from_text("lambda"), Err(ConfigError::Syntax { line: 1, .. })));
    }

    #[test]
    fn validation_rules() {
        assert!(TrainConfig::from_text("heads=3").is_err());
        assert!(TrainConfig::from_text("variant=hier\nnum_patterns=10").is_err());
        assert!(TrainConfig::from_text("num_patterns=10").is_ok());
        assert!(TrainConfig::from_text("alpha=0").is_err());
        assert!(TrainConfig::from_text("alpha=abc").is_err());
    }

    #[test]
    fn key_ignores_seed() {
        let a = TrainConfig::default();
        let b = TrainConfig { seed: 9, ..a.clone() };
        assert_eq!(a.key(), b.key());
        assert!(describe_keys().contains("lambda"));
    }
}
