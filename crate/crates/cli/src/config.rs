use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tmoe::data::{load_csv, synth_series, Series, SplitSpec, SynthSpec};
use tmoe::model::ModelConfig;
use tmoe::training::TrainConfig;
use tmoe::{Error, Result};

use crate::args::RunArgs;

pub const CONFIG_VERSION: u32 = 1;
pub const SEED_ENV: &str = "TMOE_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// ETT-style CSV. Relative paths are resolved against the config file.
    Path(PathBuf),
    Synth(SynthSpec),
}

/// Declarative description of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub data: Option<DataSource>,
    #[serde(default)]
    pub split: SplitSpec,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    /// Horizons for evaluation and ablations; defaults to `model.horizon`.
    #[serde(default)]
    pub horizons: Vec<usize>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "one")]
    pub train_stride: usize,
    #[serde(default = "one")]
    pub eval_stride: usize,
    /// Whether the file spelled out a `model` section.
    #[serde(skip)]
    pub model_explicit: bool,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn one() -> usize {
    1
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            version: CONFIG_VERSION,
            data: None,
            split: SplitSpec::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            horizons: Vec::new(),
            output_dir: default_output_dir(),
            seed: None,
            train_stride: 1,
            eval_stride: 1,
            model_explicit: false,
        }
    }
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

pub fn read_config(path: &Path) -> Result<RunConfig> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path)?;
    let bad = |e: serde_json::Error| Error::Config(format!("{}: {e}", path.display()));
    let value: serde_json::Value = serde_json::from_str(&text).map_err(bad)?;
    let model_explicit = value.get("model").is_some();
    let mut cfg: RunConfig = serde_json::from_value(value).map_err(bad)?;
    cfg.model_explicit = model_explicit;
    if cfg.version != CONFIG_VERSION {
        return Err(Error::Config(format!(
            "{}: config version {} is not supported (expected {CONFIG_VERSION})",
            path.display(),
            cfg.version
        )));
    }
    if let (Some(DataSource::Path(p)), Some(dir)) = (&cfg.data, path.parent()) {
        if p.is_relative() {
            cfg.data = Some(DataSource::Path(dir.join(p)));
        }
    }
    Ok(cfg)
}

/// Defaults, then the config file, then flags. The seed additionally
/// falls back to `$TMOE_SEED` and finally `train.seed`.
pub fn resolve(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => read_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(p) = &args.data {
        cfg.data = Some(DataSource::Path(p.clone()));
    }
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    if let Some(w) = args.workers {
        cfg.train.workers = w;
    }
    if let Some(e) = args.epochs {
        cfg.train.epochs = e;
    }
    if let Some(lr) = args.lr {
        cfg.train.lr = lr;
    }
    if let Some(b) = args.batch_size {
        cfg.train.batch_size = b;
    }
    if args.max_steps.is_some() {
        cfg.train.max_steps = args.max_steps;
    }
    if let Some(h) = args.horizon {
        cfg.model.horizon = h;
        cfg.horizons = vec![h];
    }
    if cfg.horizons.is_empty() {
        cfg.horizons = vec![cfg.model.horizon];
    }
    let seed = match args.seed.or(cfg.seed) {
        Some(s) => s,
        None => env_seed()?.unwrap_or(cfg.train.seed),
    };
    cfg.seed = Some(seed);
    cfg.train.seed = seed;
    validate(&cfg)?;
    Ok(cfg)
}

pub fn validate(cfg: &RunConfig) -> Result<()> {
    cfg.split.validate()?;
    cfg.train.validate()?;
    cfg.model.validate()?;
    if cfg.horizons.iter().any(|h| *h == 0) {
        return Err(Error::Config("horizons must be positive".into()));
    }
    if cfg.train_stride == 0 || cfg.eval_stride == 0 {
        return Err(Error::Config("window strides must be positive".into()));
    }
    if let Some(DataSource::Synth(s)) = &cfg.data {
        s.validate()?;
    }
    Ok(())
}

impl RunConfig {
    pub fn load_series(&self) -> Result<Series> {
        match &self.data {
            Some(DataSource::Path(p)) => load_csv(p),
            Some(DataSource::Synth(s)) => synth_series(s),
            None => Err(Error::Config("no data source: pass --data or set `data` in the config".into())),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(self.train.seed)
    }
}
