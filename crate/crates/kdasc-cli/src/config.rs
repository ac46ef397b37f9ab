//! Flat `key = value` run configuration with flag overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use kdasc::error::Error;
use kdasc::nn::TrainConfig;

use crate::TrainFlags;

const KNOWN_KEYS: &[&str] = &[
    "seed",
    "teacher_epochs",
    "student_epochs",
    "batch_size",
    "learning_rate",
    "mixup_alpha",
    "loss_weight_ce",
    "loss_weight_mse",
    "cache_dir",
];

/// Resolved configuration: defaults, then config file, then flags.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub teacher_epochs: usize,
    pub student_epochs: usize,
    pub cache_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: TrainConfig::default(),
            teacher_epochs: 100,
            student_epochs: 200,
            cache_dir: None,
        }
    }
}

fn parse_file(path: &Path) -> Result<BTreeMap<String, String>, Error> {
    let text = std::fs::read_to_string(path)?;
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("{}:{}: expected key = value", path.display(), lineno + 1))
        })?;
        let key = key.trim().to_string();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(Error::Config(format!(
                "{}:{}: unknown key {key}",
                path.display(),
                lineno + 1
            )));
        }
        if map.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(Error::Config(format!(
                "{}:{}: key {key} set twice",
                path.display(),
                lineno + 1
            )));
        }
    }
    Ok(map)
}

fn parse<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>, Error> {
    match map.get(key) {
        None => Ok(None),
        Some(v) => v
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("bad value for {key}: {v}"))),
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<RunConfig, Error> {
        let mut cfg = RunConfig::default();
        let Some(path) = path else { return Ok(cfg) };
        if !path.exists() {
            return Err(Error::Config(format!("config file {} not found", path.display())));
        }
        let map = parse_file(path)?;
        if let Some(v) = parse(&map, "seed")? {
            cfg.train.seed = v;
        }
        if let Some(v) = parse(&map, "teacher_epochs")? {
            cfg.teacher_epochs = v;
        }
        if let Some(v) = parse(&map, "student_epochs")? {
            cfg.student_epochs = v;
        }
        if let Some(v) = parse(&map, "batch_size")? {
            cfg.train.batch_size = v;
        }
        if let Some(v) = parse(&map, "learning_rate")? {
            cfg.train.learning_rate = v;
        }
        if let Some(v) = map.get("mixup_alpha") {
            cfg.train.mixup_alpha = if v == "none" {
                None
            } else {
                Some(v.parse().map_err(|_| {
                    Error::Config(format!("bad value for mixup_alpha: {v}"))
                })?)
            };
        }
        let ce = parse(&map, "loss_weight_ce")?.unwrap_or(cfg.train.loss_weights.0);
        let mse = parse(&map, "loss_weight_mse")?.unwrap_or(cfg.train.loss_weights.1);
        cfg.train.loss_weights = (ce, mse);
        if let Some(v) = map.get("cache_dir") {
            cfg.cache_dir = Some(PathBuf::from(v));
        }
        cfg.train.validate()?;
        Ok(cfg)
    }

    fn with_flags(&self, flags: &TrainFlags, epochs: usize) -> Result<TrainConfig, Error> {
        let mut tc = self.train.clone();
        tc.epochs = flags.epochs.unwrap_or(epochs);
        if let Some(s) = flags.seed {
            tc.seed = s;
        }
        if let Some(b) = flags.batch_size {
            tc.batch_size = b;
        }
        if let Some(lr) = flags.learning_rate {
            tc.learning_rate = lr;
        }
        tc.validate()?;
        Ok(tc)
    }

    /// Phase I config: mixup on, cross entropy only.
    pub fn teacher_config(&self, flags: &TrainFlags) -> Result<TrainConfig, Error> {
        let mut tc = self.with_flags(flags, self.teacher_epochs)?;
        tc.loss_weights = (1.0, 0.0);
        Ok(tc)
    }

    /// Phase II config: no mixup, cross entropy plus embedding MSE at 1:1.
    pub fn student_config(&self, flags: &TrainFlags) -> Result<TrainConfig, Error> {
        let mut tc = self.with_flags(flags, self.student_epochs)?;
        tc.mixup_alpha = None;
        Ok(tc)
    }
}
