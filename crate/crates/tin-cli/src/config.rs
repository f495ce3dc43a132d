//! Line-oriented `key = value` run configuration.
//!
//! Keys mirror the training configuration fields one to one. Absent keys keep
//! their defaults; unknown keys are rejected. `batch_size` additionally
//! accepts `full` for full-batch training.

use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use tin_core::mp::MpVariant;
use tin_core::pipeline::TrainConfig;
use tin_core::sampling::SamplerKind;

pub fn load_config(path: &Path) -> Result<TrainConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let mut cfg = TrainConfig::default();
    for (ix, raw) in text.lines().enumerate() {
        let lineno = ix + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("{}:{lineno}: expected `key = value`, got `{line}`", path.display());
        };
        set_key(&mut cfg, key.trim(), value.trim())
            .with_context(|| format!("{}:{lineno}", path.display()))?;
    }
    Ok(cfg)
}

/// Assign one configuration key from its textual value. Shared between the
/// config file parser and `sweep`, so a sweepable key is exactly a config key.
pub fn set_key(cfg: &mut TrainConfig, key: &str, value: &str) -> Result<()> {
    fn num<T: FromStr>(key: &str, value: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        value
            .parse()
            .map_err(|e| anyhow::anyhow!("key `{key}`: cannot parse `{value}`: {e}"))
    }
    match key {
        "learning_rate" => cfg.learning_rate = num(key, value)?,
        "weight_decay" => cfg.weight_decay = num(key, value)?,
        "epsilon" => cfg.epsilon = num(key, value)?,
        "epochs" => cfg.epochs = num(key, value)?,
        "early_stop" => cfg.early_stop = num(key, value)?,
        "batch_size" => {
            cfg.batch_size = if value == "full" { 0 } else { num(key, value)? }
        }
        "mp_layer" => cfg.mp_layer = num(key, value)?,
        "svd_dim" => cfg.svd_dim = num(key, value)?,
        "delta" => cfg.delta = num(key, value)?,
        "lambda" => cfg.lambda = num(key, value)?,
        "layers" => cfg.layers = num(key, value)?,
        "heads" => cfg.heads = num(key, value)?,
        "hidden_dim" => cfg.hidden_dim = num(key, value)?,
        "text_len" => cfg.text_len = num(key, value)?,
        "vocab_buckets" => cfg.vocab_buckets = num(key, value)?,
        "sampler" => cfg.sampler = SamplerKind::from_str(value)?,
        "b" => cfg.b = num(key, value)?,
        "variant" => cfg.variant = MpVariant::from_str(value)?,
        "seed" => cfg.seed = num(key, value)?,
        other => bail!("unknown config key `{other}`"),
    }
    Ok(())
}
