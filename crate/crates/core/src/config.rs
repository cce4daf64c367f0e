//! Run configuration: `key = value` files overlaid by command-line flags.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::trainer::{Mode, TrainConfig};
use crate::transport::PriorScope;

/// Where a setting came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Source {
    Default,
    File,
    Flag,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Default => "default",
            Source::File => "file",
            Source::Flag => "flag",
        })
    }
}

/// Every accepted key with a short description.
pub const REGISTRY: &[(&str, &str)] = &[
    ("mode", "training mode: ot, ot+tcl, tot, tot+tcl"),
    ("rho", "temporal transport regularizer"),
    ("sigma", "width of the temporal prior"),
    ("epsilon", "entropic regularizer for plain transport"),
    ("sinkhorn_iters", "Sinkhorn iterations per batch"),
    ("marginal_tolerance", "stop Sinkhorn early below this marginal error (0 = never)"),
    ("prior_scope", "per-video or batch"),
    ("batch", "frames per batch"),
    ("videos_per_batch", "videos sampled per batch"),
    ("tau", "softmax temperature"),
    ("lambda", "positive sampling window in frames"),
    ("alpha", "weight of the temporal coherence loss"),
    ("renormalize_q", "rescale pseudo-label rows to sum to one"),
    ("lr", "ADAM learning rate"),
    ("wd", "ADAM weight decay"),
    ("freeze_iters", "iterations with frozen prototypes"),
    ("epochs", "passes over the video list"),
    ("iterations", "total iterations, overrides epochs"),
    ("seed", "random seed"),
    ("embed_dim", "embedding width"),
    ("hidden_dim", "hidden layer width (default twice the embedding width)"),
    ("normalize", "use cosine scores between embeddings and prototypes"),
    ("background", "name of the background action"),
    ("split_background", "split background runs into start and end actions"),
    ("parallel_activities", "activities trained concurrently"),
];

/// Normalizes `prior-scope` / `Prior_Scope` to `prior_scope`.
pub fn canonical_key(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('-', "_")
}

fn registered(key: &str) -> Result<&'static str> {
    REGISTRY
        .iter()
        .map(|(k, _)| *k)
        .find(|k| *k == key)
        .ok_or_else(|| Error::InvalidConfig(format!("unknown configuration key {key:?}")))
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config(text: &str, path: &Path) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse { path: path.to_path_buf(), line: i + 1, message };
        let (k, v) = line.split_once('=').ok_or_else(|| parse_err(format!("expected `key = value`, got {line:?}")))?;
        let key = canonical_key(k);
        registered(&key).map_err(|_| parse_err(format!("unknown configuration key {key:?}")))?;
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

/// Fully resolved settings of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub background: Option<String>,
    pub split_background: bool,
    pub parallel_activities: usize,
    sources: BTreeMap<&'static str, (String, Source)>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut cfg = Self {
            train: TrainConfig::default(),
            background: None,
            split_background: false,
            parallel_activities: 1,
            sources: BTreeMap::new(),
        };
        for (key, _) in REGISTRY {
            let value = cfg.value_of(key);
            cfg.sources.insert(key, (value, Source::Default));
        }
        cfg
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::InvalidConfig(format!("invalid value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::InvalidConfig(format!("invalid boolean {value:?} for {key}"))),
    }
}

fn optional(value: &str) -> Option<&str> {
    match value {
        "" | "none" | "auto" => None,
        v => Some(v),
    }
}

impl RunConfig {
    /// Defaults, then the file (if any), then flags.
    pub fn resolve(file: Option<&Path>, flags: &[(String, String)]) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(path) = file {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            for (k, v) in parse_config(&text, path)? {
                cfg.set(&k, &v, Source::File)?;
            }
        }
        for (k, v) in flags {
            cfg.set(k, v, Source::Flag)?;
        }
        cfg.train.validate()?;
        if cfg.parallel_activities == 0 {
            return Err(Error::InvalidConfig("parallel_activities must be at least 1".into()));
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str, source: Source) -> Result<()> {
        let key = registered(&canonical_key(key))?;
        let t = &mut self.train;
        match key {
            "mode" => t.mode = value.parse::<Mode>()?,
            "rho" => t.transport.rho = parse_num(key, value)?,
            "sigma" => t.transport.sigma = parse_num(key, value)?,
            "epsilon" => t.transport.epsilon = parse_num(key, value)?,
            "sinkhorn_iters" => t.transport.iterations = parse_num(key, value)?,
            "marginal_tolerance" => t.transport.marginal_tolerance = parse_num(key, value)?,
            "prior_scope" => {
                t.transport.scope = match value {
                    "per-video" | "per_video" | "video" => PriorScope::PerVideo,
                    "batch" => PriorScope::Batch,
                    _ => {
                        return Err(Error::InvalidConfig(format!("invalid prior scope {value:?} (per-video or batch)")))
                    }
                }
            }
            "batch" => t.batch_size = parse_num(key, value)?,
            "videos_per_batch" => t.videos_per_batch = parse_num(key, value)?,
            "tau" => t.loss.temperature = parse_num(key, value)?,
            "lambda" => t.loss.window = parse_num(key, value)?,
            "alpha" => t.loss.alpha = parse_num(key, value)?,
            "renormalize_q" => t.loss.renormalize_q = parse_bool(key, value)?,
            "lr" => t.lr = parse_num(key, value)?,
            "wd" => t.weight_decay = parse_num(key, value)?,
            "freeze_iters" => t.freeze_iters = parse_num(key, value)?,
            "epochs" => t.epochs = parse_num(key, value)?,
            "iterations" => t.iterations = optional(value).map(|v| parse_num(key, v)).transpose()?,
            "seed" => t.seed = parse_num(key, value)?,
            "embed_dim" => t.embed_dim = parse_num(key, value)?,
            "hidden_dim" => t.hidden_dim = optional(value).map(|v| parse_num(key, v)).transpose()?,
            "normalize" => t.normalize = parse_bool(key, value)?,
            "background" => self.background = optional(value).map(str::to_string),
            "split_background" => self.split_background = parse_bool(key, value)?,
            "parallel_activities" => self.parallel_activities = parse_num(key, value)?,
            _ => unreachable!("registry and setter disagree on {key}"),
        }
        let resolved = self.value_of(key);
        self.sources.insert(key, (resolved, source));
        Ok(())
    }

    /// Current value of `key` in config-file syntax.
    pub fn value_of(&self, key: &str) -> String {
        let t = &self.train;
        let opt = |v: Option<usize>| v.map_or_else(|| "auto".to_string(), |v| v.to_string());
        match key {
            "mode" => t.mode.to_string(),
            "rho" => t.transport.rho.to_string(),
            "sigma" => t.transport.sigma.to_string(),
            "epsilon" => t.transport.epsilon.to_string(),
            "sinkhorn_iters" => t.transport.iterations.to_string(),
            "marginal_tolerance" => t.transport.marginal_tolerance.to_string(),
            "prior_scope" => match t.transport.scope {
                PriorScope::PerVideo => "per-video".into(),
                PriorScope::Batch => "batch".into(),
            },
            "batch" => t.batch_size.to_string(),
            "videos_per_batch" => t.videos_per_batch.to_string(),
            "tau" => t.loss.temperature.to_string(),
            "lambda" => t.loss.window.to_string(),
            "alpha" => t.loss.alpha.to_string(),
            "renormalize_q" => t.loss.renormalize_q.to_string(),
            "lr" => t.lr.to_string(),
            "wd" => t.weight_decay.to_string(),
            "freeze_iters" => t.freeze_iters.to_string(),
            "epochs" => t.epochs.to_string(),
            "iterations" => opt(t.iterations),
            "seed" => t.seed.to_string(),
            "embed_dim" => t.embed_dim.to_string(),
            "hidden_dim" => opt(t.hidden_dim),
            "normalize" => t.normalize.to_string(),
            "background" => self.background.clone().unwrap_or_else(|| "none".into()),
            "split_background" => self.split_background.to_string(),
            "parallel_activities" => self.parallel_activities.to_string(),
            _ => String::new(),
        }
    }

    pub fn source_of(&self, key: &str) -> Option<Source> {
        self.sources.get(canonical_key(key).as_str()).map(|(_, s)| *s)
    }

    /// `key = value  # source` for every key, in registry order.
    pub fn describe(&self) -> String {
        REGISTRY
            .iter()
            .map(|(k, _)| {
                let source = self.source_of(k).unwrap_or(Source::Default);
                format!("{k} = {}  # {source}\n", self.value_of(k))
            })
            .collect()
    }
}
