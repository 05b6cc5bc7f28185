use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use flashchan::sim::ChannelParams;
use flashchan::PECycle;
use flashchan_gen::TrainConfig;

use crate::error::{CliError, Result};

/// Flat key-value run configuration shared by every command.
///
/// Input artifacts (`dataset`, `eval_dataset`, `fits`, `checkpoint`,
/// `generated`, `resume`) resolve against the output directory, so commands
/// run with the same `--out` chain without extra keys. `channel_params`
/// resolves against the directory of the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub channel_params: Option<PathBuf>,
    pub stamps: Vec<u32>,
    pub grids_per_stamp: usize,
    pub eval_grids_per_stamp: usize,
    pub block_rows: usize,
    pub block_cols: usize,
    pub tile: usize,

    pub dataset: PathBuf,
    pub eval_dataset: PathBuf,
    pub fits: PathBuf,
    pub checkpoint: PathBuf,
    pub generated: PathBuf,
    pub resume: Option<PathBuf>,
    pub samples: usize,

    pub alpha: f64,
    pub beta: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub pe_max: u32,
    pub width_scale: f64,
    pub progress_every: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::desk_scale();
        RunConfig {
            seed: 0,
            channel_params: None,
            stamps: vec![4000, 7000, 10000],
            grids_per_stamp: 2000,
            eval_grids_per_stamp: 700,
            block_rows: 64,
            block_cols: 64,
            tile: 64,
            dataset: "dataset.flds".into(),
            eval_dataset: "eval.flds".into(),
            fits: "fits.toml".into(),
            checkpoint: "checkpoint.fck".into(),
            generated: "generated.flds".into(),
            resume: None,
            samples: 10,
            alpha: t.alpha,
            beta: t.beta,
            lr: t.lr,
            epochs: t.epochs,
            batch: t.batch,
            pe_max: t.pe_max,
            width_scale: t.width_scale,
            progress_every: 500,
        }
    }
}

impl RunConfig {
    pub fn from_toml(s: &str) -> Result<Self> {
        let c: RunConfig = toml::from_str(s).map_err(|e| CliError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.stamps.is_empty() {
            return bad("stamps must not be empty".into());
        }
        if let Some(&pe) = self.stamps.iter().find(|&&pe| pe > self.pe_max) {
            return bad(format!("stamp {pe} exceeds pe_max {}", self.pe_max));
        }
        if self.tile < 3 || self.block_rows < self.tile || self.block_cols < self.tile {
            return bad(format!(
                "tile {} must be at least 3 and fit the {}×{} block",
                self.tile, self.block_rows, self.block_cols
            ));
        }
        self.train_config()?;
        Ok(())
    }

    pub fn pe_stamps(&self) -> Vec<PECycle> {
        self.stamps.iter().map(|&s| PECycle(s)).collect()
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let c = TrainConfig {
            alpha: self.alpha,
            beta: self.beta,
            lr: self.lr,
            epochs: self.epochs,
            batch: self.batch,
            pe_max: self.pe_max,
            seed: self.seed,
            width_scale: self.width_scale,
            grid: self.tile,
            ..TrainConfig::default()
        };
        c.validate()?;
        Ok(c)
    }
}

/// A configuration together with the directories its paths resolve against.
#[derive(Clone, Debug)]
pub struct Run {
    pub config: RunConfig,
    pub config_dir: PathBuf,
    pub out: PathBuf,
}

impl Run {
    /// Reads `config` (defaults when absent), applies the seed override and
    /// creates the output directory.
    pub fn prepare(config: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<Self> {
        let (mut cfg, config_dir) = match config {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Input { path: p.to_path_buf(), source: e })?;
                let dir = p.parent().map(Path::to_path_buf).unwrap_or_default();
                (RunConfig::from_toml(&text)?, dir)
            }
            None => (RunConfig::default(), PathBuf::new()),
        };
        if let Some(s) = seed {
            cfg.seed = s;
        }
        std::fs::create_dir_all(out)?;
        Ok(Run {
            config: cfg,
            config_dir,
            out: out.to_path_buf(),
        })
    }

    pub fn input(&self, p: &Path) -> PathBuf {
        self.out.join(p)
    }

    pub fn output(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn channel_params(&self) -> Result<ChannelParams> {
        match &self.config.channel_params {
            Some(p) => {
                let path = self.config_dir.join(p);
                if !path.exists() {
                    return Err(CliError::Input {
                        path,
                        source: std::io::Error::new(std::io::ErrorKind::NotFound, "channel parameter file not found"),
                    });
                }
                Ok(ChannelParams::load(&path)?)
            }
            None => Ok(ChannelParams::default()),
        }
    }

    /// Writes the resolved configuration next to the outputs of `command`.
    pub fn record(&self, command: &str) -> Result<()> {
        std::fs::write(self.output(&format!("{command}.config.toml")), self.config.to_toml()?)?;
        Ok(())
    }
}
