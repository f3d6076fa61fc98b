//! Line-oriented `key = value` training configuration.
//!
//! Keys: `model`, `dim`, `lr`, `epochs`, `batch`, `neg_subject`,
//! `neg_object`, `free_samples`, `chains`, `positions`, `l1`, `l2`,
//! `optimizer`, `init_mu`, `init_sigma`, `margin`, `seed`. Blank lines and
//! `#` comments are ignored; unknown or repeated keys are errors.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::trainer::{ModelKind, Preset, TrainConfig};

pub const KEYS: [&str; 17] = [
    "model",
    "dim",
    "lr",
    "epochs",
    "batch",
    "neg_subject",
    "neg_object",
    "free_samples",
    "chains",
    "positions",
    "l1",
    "l2",
    "optimizer",
    "init_mu",
    "init_sigma",
    "margin",
    "seed",
];

/// Parsed `(key, value, line)` entries in file order.
pub fn parse_entries(text: &str) -> Result<Vec<(String, String, usize)>> {
    let mut out: Vec<(String, String, usize)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!("line {}: expected `key = value`", i + 1)));
        };
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(Error::Config(format!("line {}: unknown key `{key}`", i + 1)));
        }
        if out.iter().any(|(k, _, _)| k == key) {
            return Err(Error::Config(format!("line {}: key `{key}` given twice", i + 1)));
        }
        out.push((key.to_string(), value.to_string(), i + 1));
    }
    Ok(out)
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

/// Sets one key on `cfg`. `model` is handled by [`resolve`] and rejected here
/// unless it matches the current model.
pub fn apply(cfg: &mut TrainConfig, key: &str, value: &str) -> Result<()> {
    match key {
        "model" => {
            let m: ModelKind = value.parse()?;
            if m != cfg.model {
                return Err(Error::Config(format!("model `{value}` conflicts with `{}`", cfg.model)));
            }
        }
        "dim" => cfg.dim = parse(key, value)?,
        "lr" => cfg.learning_rate = parse(key, value)?,
        "epochs" => cfg.epochs = parse(key, value)?,
        "batch" => cfg.batch_size = parse(key, value)?,
        "neg_subject" => cfg.neg_subject = parse(key, value)?,
        "neg_object" => cfg.neg_object = parse(key, value)?,
        "free_samples" => cfg.sampler.steps_per_chain = parse(key, value)?,
        "chains" => cfg.sampler.chains_per_batch_triple = parse(key, value)?,
        "positions" => cfg.sampler.positions = value.parse()?,
        "l1" => cfg.l1 = parse(key, value)?,
        "l2" => cfg.l2 = parse(key, value)?,
        "optimizer" => cfg.optimizer = value.parse()?,
        "init_mu" => cfg.init_mu = parse(key, value)?,
        "init_sigma" => cfg.init_sigma = parse(key, value)?,
        "margin" => cfg.margin = parse(key, value)?,
        "seed" => cfg.seed = parse(key, value)?,
        other => return Err(Error::Config(format!("unknown key `{other}`"))),
    }
    Ok(())
}

/// Preset defaults for the chosen model, then file entries, then overrides.
///
/// The model comes from the overrides if present, else from the file, else
/// `default_model`.
pub fn resolve(
    preset: Preset,
    default_model: ModelKind,
    file: &[(String, String)],
    overrides: &[(String, String)],
) -> Result<TrainConfig> {
    let pick = |entries: &[(String, String)]| entries.iter().rev().find(|(k, _)| k == "model").map(|(_, v)| v.clone());
    let model = match pick(overrides).or_else(|| pick(file)) {
        Some(name) => name.parse()?,
        None => default_model,
    };
    let mut cfg = TrainConfig::preset(model, preset)?;
    for (k, v) in file.iter().chain(overrides).filter(|(k, _)| k != "model") {
        apply(&mut cfg, k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Every key in canonical order; parsing the output reproduces `cfg`.
pub fn to_config_string(cfg: &TrainConfig) -> String {
    let mut out = String::new();
    let pairs: [(&str, String); 17] = [
        ("model", cfg.model.to_string()),
        ("dim", cfg.dim.to_string()),
        ("lr", cfg.learning_rate.to_string()),
        ("epochs", cfg.epochs.to_string()),
        ("batch", cfg.batch_size.to_string()),
        ("neg_subject", cfg.neg_subject.to_string()),
        ("neg_object", cfg.neg_object.to_string()),
        ("free_samples", cfg.sampler.steps_per_chain.to_string()),
        ("chains", cfg.sampler.chains_per_batch_triple.to_string()),
        ("positions", cfg.sampler.positions.to_string()),
        ("l1", cfg.l1.to_string()),
        ("l2", cfg.l2.to_string()),
        ("optimizer", cfg.optimizer.to_string()),
        ("init_mu", cfg.init_mu.to_string()),
        ("init_sigma", cfg.init_sigma.to_string()),
        ("margin", cfg.margin.to_string()),
        ("seed", cfg.seed.to_string()),
    ];
    for (k, v) in pairs {
        writeln!(out, "{k} = {v}").expect("writing to a String cannot fail");
    }
    out
}

/// Parses a full config file for `preset`.
pub fn parse_config(text: &str, preset: Preset, default_model: ModelKind) -> Result<TrainConfig> {
    let entries: Vec<(String, String)> = parse_entries(text)?.into_iter().map(|(k, v, _)| (k, v)).collect();
    resolve(preset, default_model, &entries, &[])
}
