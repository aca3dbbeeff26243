//! Config-file resolution and the `run.json` manifest every command writes.

use std::path::{Path, PathBuf};

use serde::Serialize;
use textseek_synth::{GalleryManifest, SynthConfig, ANNOTATION_FILE};
use textseek_train::{TrainConfig, TrainError};

use crate::args::DEFAULT_SEED;
use crate::error::{CliError, Result};

/// Name of the manifest written into the output directory.
pub const RUN_FILE: &str = "run.json";

/// Settings from `--config` and `--seed`, before command-specific flags.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Settings {
    pub seed: u64,
    pub train: TrainConfig,
    pub synth: SynthConfig,
}

impl Settings {
    /// Reads the config file if one is given. An explicit seed wins over
    /// the file's `[train] seed`, which wins over [`DEFAULT_SEED`].
    pub fn resolve(config: Option<&Path>, seed: Option<u64>) -> Result<Self> {
        let mut table = match config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
                    path: path.to_path_buf(),
                    source,
                })?;
                toml::from_str::<toml::Table>(&text)
                    .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
            }
            None => toml::Table::new(),
        };
        let mut section = |name: &str| -> Result<toml::Table> {
            match table.remove(name) {
                None => Ok(toml::Table::new()),
                Some(toml::Value::Table(t)) => Ok(t),
                Some(_) => Err(CliError::Usage(format!("config: [{name}] must be a table"))),
            }
        };
        let train_table = section("train")?;
        let synth_table = section("synth")?;
        if let Some(key) = table.keys().next() {
            return Err(CliError::Usage(format!("config: unknown section {key:?}; expected [train] or [synth]")));
        }
        let file_seed = train_table.get("seed").and_then(toml::Value::as_integer);
        let mut train = TrainConfig::from_toml(&train_table.to_string()).map_err(usage)?;
        let synth: SynthConfig = synth_table
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Usage(format!("config [synth]: {e}")))?;
        synth.validate().map_err(|e| CliError::Usage(format!("config [synth]: {e}")))?;
        let seed = seed
            .or_else(|| file_seed.and_then(|s| u64::try_from(s).ok()))
            .unwrap_or(DEFAULT_SEED);
        train.seed = seed;
        Ok(Settings { seed, train, synth })
    }

    /// The training config with `KEY=VALUE` overrides applied in order.
    pub fn train_with(&self, overrides: &[String]) -> Result<TrainConfig> {
        let mut c = self.train.clone();
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {o:?}")))?;
            c.set(k.trim(), v.trim()).map_err(usage)?;
        }
        Ok(c)
    }
}

fn usage(e: TrainError) -> CliError {
    CliError::Usage(e.to_string())
}

/// The annotation file of a dataset given either as its directory or as
/// the file itself.
pub fn annotation_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(ANNOTATION_FILE)
    } else {
        path.to_path_buf()
    }
}

pub fn load_dataset(path: &Path) -> Result<GalleryManifest> {
    Ok(GalleryManifest::load(&annotation_path(path))?)
}

/// Contents of `run.json`: what ran, with which resolved settings. It holds
/// no timestamps so that repeated runs produce identical files.
#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    pub command: &'a str,
    pub version: &'a str,
    pub seed: u64,
    pub args: Vec<String>,
    pub train: Option<&'a TrainConfig>,
    pub synth: Option<&'a SynthConfig>,
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("output serializes");
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Words of a one-word-per-line file, blank lines skipped.
pub fn read_words(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}
