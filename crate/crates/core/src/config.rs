//! Run configuration: a flat `key = value` file with namespaced keys,
//! defaults, command-line overrides and range checks.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    Attention,
    Recurrent,
}

/// How the causal mask enters attention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    /// `-inf` added to future logits before the softmax.
    Additive,
    /// Softmax over all positions, then future weights set to zero. Rows
    /// no longer sum to one.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscrepancyKind {
    Kl,
    Js,
    Euclidean,
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    TwoPhase,
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Sampled99,
    Full,
}

macro_rules! string_enum {
    ($ty:ident { $($name:literal => $var:ident),+ $(,)? }) => {
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($name => Ok($ty::$var),)+
                    other => Err(format!(
                        "unknown value `{other}`, expected one of: {}",
                        [$($name),+].join(", ")
                    )),
                }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                let s = match self { $($ty::$var => $name,)+ };
                f.write_str(s)
            }
        }
    };
}

string_enum!(EncoderKind { "attention" => Attention, "recurrent" => Recurrent });
string_enum!(MaskMode { "additive" => Additive, "literal" => Literal });
string_enum!(Precision { "f32" => F32, "f64" => F64 });
string_enum!(DiscrepancyKind { "kl" => Kl, "js" => Js, "euclidean" => Euclidean, "cosine" => Cosine });
string_enum!(TrainMode { "two_phase" => TwoPhase, "joint" => Joint });
string_enum!(Protocol { "sampled99" => Sampled99, "full" => Full });

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d: usize,
    /// Window length `L`.
    pub max_len: usize,
    /// Future horizon `P`.
    pub horizon: usize,
    pub filter_layers: usize,
    pub attn_layers: usize,
    pub d_ff: usize,
    pub dropout: f64,
    /// Fraction of the lowest frequencies kept by the filter.
    pub q: f64,
    pub learnable_filter: bool,
    pub encoder: EncoderKind,
    pub mask_mode: MaskMode,
    pub precision: Precision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidingConfig {
    pub kind: DiscrepancyKind,
    pub gamma: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    /// Future-encoder learning rate.
    pub lr1: f64,
    /// Past-encoder learning rate.
    pub lr2: f64,
    /// `None` uses every target position of every user each epoch.
    pub targets_per_user: Option<usize>,
    /// Epochs without validation MRR improvement before stopping; 0 disables.
    pub patience: usize,
    /// Drop the future encoder entirely (guiding weight 0, no phase 1).
    pub no_future: bool,
    /// Train only the future encoder and evaluate with its weights.
    pub future_only: bool,
    /// Feed the global window to the future encoder right to left.
    pub r2l: bool,
    /// Weight of the future loss in joint mode.
    pub future_weight: f64,
    /// Validate every this many epochs.
    pub eval_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub protocol: Protocol,
    pub seed: u64,
    /// Cut-off for preference analysis.
    pub top_k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub path: Option<PathBuf>,
    pub min_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub model: ModelConfig,
    pub guiding: GuidingConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub data: DataConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            model: ModelConfig {
                d: 64,
                max_len: 50,
                horizon: 10,
                filter_layers: 1,
                attn_layers: 2,
                d_ff: 64,
                dropout: 0.5,
                q: 0.75,
                learnable_filter: false,
                encoder: EncoderKind::Attention,
                mask_mode: MaskMode::Additive,
                precision: Precision::F32,
            },
            guiding: GuidingConfig {
                kind: DiscrepancyKind::Kl,
                gamma: 0.05,
                beta: 0.01,
            },
            train: TrainConfig {
                mode: TrainMode::TwoPhase,
                epochs: 200,
                batch: 256,
                seed: 42,
                lr1: 1e-3,
                lr2: 1e-3,
                targets_per_user: None,
                patience: 20,
                no_future: false,
                future_only: false,
                r2l: false,
                future_weight: 1.0,
                eval_every: 1,
            },
            eval: EvalConfig {
                protocol: Protocol::Sampled99,
                seed: 2024,
                top_k: 10,
            },
            data: DataConfig {
                path: None,
                min_count: 5,
            },
        }
    }
}

/// Every recognised key, in echo order.
pub const KEYS: &[&str] = &[
    "model.d",
    "model.L",
    "model.P",
    "model.G",
    "model.K",
    "model.d_ff",
    "model.dropout",
    "model.encoder",
    "model.mask_mode",
    "model.precision",
    "filter.q",
    "filter.learnable",
    "guiding.kind",
    "guiding.gamma",
    "guiding.beta",
    "train.mode",
    "train.epochs",
    "train.batch",
    "train.seed",
    "train.lr1",
    "train.lr2",
    "train.targets_per_user",
    "train.patience",
    "train.no_future",
    "train.future_only",
    "train.r2l",
    "train.future_weight",
    "train.eval_every",
    "eval.protocol",
    "eval.seed",
    "eval.top_k",
    "data.path",
    "data.min_count",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e: T::Err| Error::config(key, format!("cannot parse `{value}`: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::config(
            key,
            format!("expected a boolean, got `{value}`"),
        )),
    }
}

impl Config {
    /// Apply one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let m = &mut self.model;
        let t = &mut self.train;
        match key {
            "model.d" => {
                m.d = parse(key, value)?;
            }
            "model.L" => m.max_len = parse(key, value)?,
            "model.P" | "guiding.P" => m.horizon = parse(key, value)?,
            "model.G" => m.filter_layers = parse(key, value)?,
            "model.K" => m.attn_layers = parse(key, value)?,
            "model.d_ff" => m.d_ff = parse(key, value)?,
            "model.dropout" => m.dropout = parse(key, value)?,
            "model.encoder" => m.encoder = parse(key, value)?,
            "model.mask_mode" => m.mask_mode = parse(key, value)?,
            "model.precision" => m.precision = parse(key, value)?,
            "filter.q" => m.q = parse(key, value)?,
            "filter.learnable" => m.learnable_filter = parse_bool(key, value)?,
            "guiding.kind" => self.guiding.kind = parse(key, value)?,
            "guiding.gamma" => self.guiding.gamma = parse(key, value)?,
            "guiding.beta" => self.guiding.beta = parse(key, value)?,
            "train.mode" => t.mode = parse(key, value)?,
            "train.epochs" => t.epochs = parse(key, value)?,
            "train.batch" => t.batch = parse(key, value)?,
            "train.seed" => t.seed = parse(key, value)?,
            "train.lr1" => t.lr1 = parse(key, value)?,
            "train.lr2" => t.lr2 = parse(key, value)?,
            "train.lr" => {
                t.lr1 = parse(key, value)?;
                t.lr2 = t.lr1;
            }
            "train.targets_per_user" => {
                t.targets_per_user = match value.trim() {
                    "all" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "train.patience" => t.patience = parse(key, value)?,
            "train.no_future" => t.no_future = parse_bool(key, value)?,
            "train.future_only" => t.future_only = parse_bool(key, value)?,
            "train.r2l" => t.r2l = parse_bool(key, value)?,
            "train.future_weight" => t.future_weight = parse(key, value)?,
            "train.eval_every" => t.eval_every = parse(key, value)?,
            "eval.protocol" => self.eval.protocol = parse(key, value)?,
            "eval.seed" => self.eval.seed = parse(key, value)?,
            "eval.top_k" => self.eval.top_k = parse(key, value)?,
            "data.path" => self.data.path = Some(PathBuf::from(value.trim())),
            "data.min_count" => self.data.min_count = parse(key, value)?,
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    /// Current value of a key, formatted so that [`Config::set`] accepts it.
    pub fn get(&self, key: &str) -> Option<String> {
        let m = &self.model;
        let t = &self.train;
        Some(match key {
            "model.d" => m.d.to_string(),
            "model.L" => m.max_len.to_string(),
            "model.P" | "guiding.P" => m.horizon.to_string(),
            "model.G" => m.filter_layers.to_string(),
            "model.K" => m.attn_layers.to_string(),
            "model.d_ff" => m.d_ff.to_string(),
            "model.dropout" => m.dropout.to_string(),
            "model.encoder" => m.encoder.to_string(),
            "model.mask_mode" => m.mask_mode.to_string(),
            "model.precision" => m.precision.to_string(),
            "filter.q" => m.q.to_string(),
            "filter.learnable" => m.learnable_filter.to_string(),
            "guiding.kind" => self.guiding.kind.to_string(),
            "guiding.gamma" => self.guiding.gamma.to_string(),
            "guiding.beta" => self.guiding.beta.to_string(),
            "train.mode" => t.mode.to_string(),
            "train.epochs" => t.epochs.to_string(),
            "train.batch" => t.batch.to_string(),
            "train.seed" => t.seed.to_string(),
            "train.lr1" => t.lr1.to_string(),
            "train.lr2" => t.lr2.to_string(),
            "train.targets_per_user" => t.targets_per_user.map_or("all".into(), |k| k.to_string()),
            "train.patience" => t.patience.to_string(),
            "train.no_future" => t.no_future.to_string(),
            "train.future_only" => t.future_only.to_string(),
            "train.r2l" => t.r2l.to_string(),
            "train.future_weight" => t.future_weight.to_string(),
            "train.eval_every" => t.eval_every.to_string(),
            "eval.protocol" => self.eval.protocol.to_string(),
            "eval.seed" => self.eval.seed.to_string(),
            "eval.top_k" => self.eval.top_k.to_string(),
            "data.path" => self.data.path.as_ref()?.display().to_string(),
            "data.min_count" => self.data.min_count.to_string(),
            _ => return None,
        })
    }

    /// Parse `key = value` lines on top of the defaults. `#` starts a comment.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        cfg.apply_str(text)?;
        Ok(cfg)
    }

    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    /// Text form that [`Config::parse_str`] reads back to an equal value.
    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            if let Some(v) = self.get(key) {
                out.push_str(&format!("{key} = {v}\n"));
            }
        }
        out
    }

    /// Range checks. Hard violations are errors; soft ones come back as
    /// warnings for the caller to log.
    pub fn validate(&self) -> Result<Vec<String>> {
        let m = &self.model;
        let g = &self.guiding;
        let t = &self.train;
        let mut warn = Vec::new();
        let bad = |k: &str, msg: &str| Err(Error::config(k, msg));
        if m.d == 0 {
            return bad("model.d", "must be positive");
        }
        if m.max_len == 0 {
            return bad("model.L", "must be positive");
        }
        if m.horizon >= m.max_len {
            return bad("model.P", "horizon P must be smaller than L");
        }
        if m.d_ff == 0 {
            return bad("model.d_ff", "must be positive");
        }
        if !(0.0..1.0).contains(&m.dropout) {
            return bad("model.dropout", "must lie in [0, 1)");
        }
        if m.q.is_nan() || m.q <= 0.0 {
            return bad("filter.q", "must be positive");
        }
        if m.q > 1.0 {
            warn.push(format!(
                "filter.q = {} > 1 keeps every frequency (identity filter)",
                m.q
            ));
        }
        if !(1..=3).contains(&m.filter_layers) {
            warn.push(format!(
                "model.G = {} outside the usual range [1, 3]",
                m.filter_layers
            ));
        }
        if !(1..=5).contains(&m.attn_layers) {
            warn.push(format!(
                "model.K = {} outside the usual range [1, 5]",
                m.attn_layers
            ));
        }
        if g.gamma.is_nan() || g.gamma < 0.0 {
            return bad("guiding.gamma", "must be non-negative");
        }
        if g.beta.is_nan() || g.beta < 0.0 || (g.beta == 0.0 && !t.no_future) {
            return bad(
                "guiding.beta",
                "must be positive (use train.no_future for the unguided model)",
            );
        }
        if t.epochs == 0 {
            return bad("train.epochs", "must be at least 1");
        }
        if t.batch == 0 {
            return bad("train.batch", "must be at least 1");
        }
        if !(t.lr1 > 0.0 && t.lr1.is_finite()) {
            return bad("train.lr1", "must be positive");
        }
        if !(t.lr2 > 0.0 && t.lr2.is_finite()) {
            return bad("train.lr2", "must be positive");
        }
        if t.targets_per_user == Some(0) {
            return bad("train.targets_per_user", "must be at least 1 or `all`");
        }
        if t.eval_every == 0 {
            return bad("train.eval_every", "must be at least 1");
        }
        if !(t.future_weight >= 0.0 && t.future_weight.is_finite()) {
            return bad("train.future_weight", "must be non-negative");
        }
        if t.no_future && t.future_only {
            return bad(
                "train.future_only",
                "cannot be combined with train.no_future",
            );
        }
        if self.eval.top_k == 0 {
            return bad("eval.top_k", "must be positive");
        }
        if self.data.min_count == 0 {
            return bad("data.min_count", "must be at least 1");
        }
        Ok(warn)
    }

    /// Guiding weight actually used in training.
    pub fn effective_beta(&self) -> f64 {
        if self.train.no_future {
            0.0
        } else {
            self.guiding.beta
        }
    }
}

/// Defaults, then the file (if any), then overrides in order; validated.
/// Warnings are logged.
pub fn resolve_config(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Config> {
    let mut cfg = Config::default();
    if let Some(p) = path {
        let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        cfg.apply_str(&text)?;
    }
    for (k, v) in overrides {
        cfg.set(k, v)?;
    }
    for w in cfg.validate()? {
        log::warn!("{w}");
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_defaults() {
        let c = Config::parse_str("").unwrap();
        assert_eq!(c.model.max_len, 50);
        assert_eq!(c.model.horizon, 10);
        assert_eq!(c.model.dropout, 0.5);
        assert_eq!(c.train.lr1, 0.001);
        assert_eq!(c.train.lr2, 0.001);
        assert!(c.validate().unwrap().is_empty());
    }

    #[test]
    fn override_beats_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.conf");
        fs::write(&p, "model.d = 32 # small\n\ntrain.epochs=3\n").unwrap();
        let c = resolve_config(Some(&p), &[("model.d".into(), "64".into())]).unwrap();
        assert_eq!(c.model.d, 64);
        assert_eq!(c.train.epochs, 3);
    }

    #[test]
    fn q_above_one_warns() {
        let c = Config::parse_str("filter.q = 1.5").unwrap();
        let w = c.validate().unwrap();
        assert!(w.iter().any(|s| s.contains("filter.q")));
    }

    #[test]
    fn errors_name_the_key() {
        for (text, key) in [
            ("filter.q = 0", "filter.q"),
            ("guiding.gamma = -1", "guiding.gamma"),
            ("guiding.beta = 0", "guiding.beta"),
            ("model.P = 50", "model.P"),
            ("model.dropout = 1", "model.dropout"),
        ] {
            let e = Config::parse_str(text).unwrap().validate().unwrap_err();
            match e {
                Error::Config { key: k, .. } => assert_eq!(k, key, "{text}"),
                other => panic!("{other}"),
            }
        }
        match Config::parse_str("model.bogus = 1") {
            Err(Error::Config { key, .. }) => assert_eq!(key, "model.bogus"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            Config::parse_str("model.d 4"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn no_future_allows_zero_beta() {
        let c = Config::parse_str("guiding.beta = 0\ntrain.no_future = true").unwrap();
        c.validate().unwrap();
        assert_eq!(c.effective_beta(), 0.0);
    }

    #[test]
    fn kv_round_trip() {
        let mut c = Config::default();
        c.set("guiding.kind", "js").unwrap();
        c.set("train.targets_per_user", "4").unwrap();
        c.set("data.path", "/tmp/x.tsv").unwrap();
        c.set("filter.q", "0.3").unwrap();
        assert_eq!(Config::parse_str(&c.to_kv_string()).unwrap(), c);
    }
}
