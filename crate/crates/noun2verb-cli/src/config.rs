//! Flat `key = value` training configuration files. `#` starts a comment;
//! unknown keys are rejected so typos fail loudly.

use std::collections::BTreeMap;
use std::path::Path;

use autodiff::OptimizerKind;
use noun2verb::loss::ElboEstimator;
use noun2verb::train::TrainConfig;
use noun2verb::{Error, Result};

/// Settings that live outside [`TrainConfig`]: network shape and the frame
/// cardinality.
#[derive(Debug, Clone, Copy)]
pub struct ModelSettings {
    pub hidden: usize,
    pub frame_cardinality: usize,
}

impl Default for ModelSettings {
    fn default() -> Self {
        ModelSettings {
            hidden: 128,
            frame_cardinality: 16,
        }
    }
}

pub struct ResolvedConfig {
    pub train: TrainConfig,
    pub model: ModelSettings,
    /// Key/value view for the run manifest.
    pub resolved: BTreeMap<String, String>,
}

pub fn parse_file(path: &Path, seed: u64) -> Result<ResolvedConfig> {
    let text = std::fs::read_to_string(path)?;
    let mut pairs = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::format_at(path, lineno + 1, "expected key = value")
        })?;
        pairs.insert(key.trim().to_string(), value.trim().to_string());
    }
    resolve(pairs, seed).map_err(|e| match e {
        Error::Format { msg, .. } => Error::Format {
            path: Some(path.display().to_string()),
            line: None,
            msg,
        },
        other => other,
    })
}

pub fn resolve(pairs: BTreeMap<String, String>, seed: u64) -> Result<ResolvedConfig> {
    let mut train = TrainConfig::with_seed(seed);
    let mut model = ModelSettings::default();
    let mut estimator_kind = String::from("exact");
    let mut samples: usize = 128;
    let mut enumeration_limit: usize = 10_000;

    for (key, value) in &pairs {
        let parse_usize = || -> Result<usize> {
            value
                .parse()
                .map_err(|_| Error::format(format!("{key}: expected an integer, got {value:?}")))
        };
        let parse_f64 = || -> Result<f64> {
            value
                .parse()
                .map_err(|_| Error::format(format!("{key}: expected a number, got {value:?}")))
        };
        match key.as_str() {
            "epochs" => train.epochs = parse_usize()?,
            "sup_batch" => train.sup_batch = parse_usize()?,
            "unsup_batch" => train.unsup_batch = parse_usize()?,
            "lambda" => train.lambda = parse_f64()?,
            "learning_rate" => train.learning_rate = parse_f64()?,
            "optimizer" => {
                train.optimizer = match value.as_str() {
                    "adam" => OptimizerKind::Adam,
                    "sgd" => OptimizerKind::Sgd,
                    other => {
                        return Err(Error::format(format!(
                            "optimizer: expected adam or sgd, got {other:?}"
                        )))
                    }
                }
            }
            "estimator" => {
                if value != "exact" && value != "score" {
                    return Err(Error::format(format!(
                        "estimator: expected exact or score, got {value:?}"
                    )));
                }
                estimator_kind = value.clone();
            }
            "samples" => samples = parse_usize()?,
            "enumeration_limit" => enumeration_limit = parse_usize()?,
            "checkpoint_every" => train.checkpoint_every = Some(parse_usize()?),
            "soft_targets" => {
                train.soft_verb_targets = value.parse().map_err(|_| {
                    Error::format(format!("soft_targets: expected true/false, got {value:?}"))
                })?
            }
            "hidden" => model.hidden = parse_usize()?,
            "k_frames" => model.frame_cardinality = parse_usize()?,
            other => {
                return Err(Error::format(format!("unknown configuration key {other:?}")))
            }
        }
    }
    train.estimator = match estimator_kind.as_str() {
        "score" => ElboEstimator::ScoreFunction { samples },
        _ => ElboEstimator::Exact {
            limit: enumeration_limit,
        },
    };

    let mut resolved = BTreeMap::new();
    resolved.insert("epochs".into(), train.epochs.to_string());
    resolved.insert("sup_batch".into(), train.sup_batch.to_string());
    resolved.insert("unsup_batch".into(), train.unsup_batch.to_string());
    resolved.insert("lambda".into(), train.lambda.to_string());
    resolved.insert("learning_rate".into(), train.learning_rate.to_string());
    resolved.insert(
        "optimizer".into(),
        match train.optimizer {
            OptimizerKind::Adam => "adam".into(),
            OptimizerKind::Sgd => "sgd".into(),
        },
    );
    resolved.insert(
        "estimator".into(),
        match train.estimator {
            ElboEstimator::Exact { limit } => format!("exact(limit={limit})"),
            ElboEstimator::ScoreFunction { samples } => format!("score(samples={samples})"),
        },
    );
    resolved.insert("soft_targets".into(), train.soft_verb_targets.to_string());
    resolved.insert("hidden".into(), model.hidden.to_string());
    resolved.insert("k_frames".into(), model.frame_cardinality.to_string());
    if let Some(k) = train.checkpoint_every {
        resolved.insert("checkpoint_every".into(), k.to_string());
    }
    Ok(ResolvedConfig {
        train,
        model,
        resolved,
    })
}
