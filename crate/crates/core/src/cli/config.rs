//! Run configuration: built-in defaults, overridden by an optional config
//! file, overridden by command-line flags.
//!
//! The config file is the top-level subset of TOML: one `key = value` pair
//! per line, `#` starts a comment, strings are double-quoted, numbers are
//! bare. Tables and arrays are not used. Recognized keys:
//!
//! ```text
//! num_classes = 5            # categories C, 2..=255
//! prior_value = 0.001        # initial Dirichlet concentration, > 0
//! background_value = 0.001   # background concentration, > 0
//! sparsification_bins = 20   # >= 2
//! tile_size = 16             # 1..=256
//! threads = 0                # worker threads, 0 = all logical cores
//! seed = 0                   # seed for random orderings
//! scene = "scene.ply"
//! cameras = "cameras.json"
//! labels = "labels"          # directory of view_NNNN.png label images
//! state = "state.cssd"
//! output = "out"
//! ```
//!
//! Relative paths in the file resolve against the file's directory.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::evaluation::DEFAULT_BINS;
use crate::semantic_fusion::{DEFAULT_BACKGROUND, DEFAULT_PRIOR};
use crate::splat_raster::DEFAULT_TILE_SIZE;

/// Values read from a config file; every key is optional.
#[derive(Debug, Default, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub num_classes: Option<usize>,
    pub prior_value: Option<f64>,
    pub background_value: Option<f64>,
    pub sparsification_bins: Option<usize>,
    pub tile_size: Option<u32>,
    pub threads: Option<usize>,
    pub seed: Option<u64>,
    pub scene: Option<PathBuf>,
    pub cameras: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub state: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl ConfigFile {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: ConfigFile = toml::from_str(text)
            .map_err(|e| Error::Format(format!("config file: {}", e.message())))?;
        for p in [
            &mut cfg.scene,
            &mut cfg.cameras,
            &mut cfg.labels,
            &mut cfg.state,
            &mut cfg.output,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }
}

/// Fully resolved settings for one command.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub num_classes: Option<usize>,
    pub prior_value: f64,
    pub background_value: f64,
    pub sparsification_bins: usize,
    pub tile_size: u32,
    pub thread_count: usize,
    pub seed: u64,
    pub scene: Option<PathBuf>,
    pub cameras: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub state: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            num_classes: None,
            prior_value: DEFAULT_PRIOR,
            background_value: DEFAULT_BACKGROUND,
            sparsification_bins: DEFAULT_BINS,
            tile_size: DEFAULT_TILE_SIZE,
            thread_count: 0,
            seed: 0,
            scene: None,
            cameras: None,
            labels: None,
            state: None,
            output: None,
        }
    }
}

/// Overrides supplied on the command line; `None` keeps the lower layer.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub num_classes: Option<usize>,
    pub prior_value: Option<f64>,
    pub background_value: Option<f64>,
    pub sparsification_bins: Option<usize>,
    pub tile_size: Option<u32>,
    pub thread_count: Option<usize>,
    pub seed: Option<u64>,
    pub scene: Option<PathBuf>,
    pub cameras: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub state: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl RunConfig {
    /// Defaults, then `file`, then `flags`; the result is range-checked.
    pub fn resolve(file: &ConfigFile, flags: Overrides) -> Result<Self> {
        let d = RunConfig::default();
        let cfg = RunConfig {
            num_classes: flags.num_classes.or(file.num_classes),
            prior_value: flags
                .prior_value
                .or(file.prior_value)
                .unwrap_or(d.prior_value),
            background_value: flags
                .background_value
                .or(file.background_value)
                .unwrap_or(d.background_value),
            sparsification_bins: flags
                .sparsification_bins
                .or(file.sparsification_bins)
                .unwrap_or(d.sparsification_bins),
            tile_size: flags.tile_size.or(file.tile_size).unwrap_or(d.tile_size),
            thread_count: flags
                .thread_count
                .or(file.threads)
                .unwrap_or(d.thread_count),
            seed: flags.seed.or(file.seed).unwrap_or(d.seed),
            scene: flags.scene.or_else(|| file.scene.clone()),
            cameras: flags.cameras.or_else(|| file.cameras.clone()),
            labels: flags.labels.or_else(|| file.labels.clone()),
            state: flags.state.or_else(|| file.state.clone()),
            output: flags.output.or_else(|| file.output.clone()),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if let Some(c) = self.num_classes {
            if !(2..=255).contains(&c) {
                return bad(format!("num_classes {c} outside 2..=255"));
            }
        }
        if !(self.prior_value > 0.0 && self.prior_value.is_finite()) {
            return bad(format!("prior_value {} must be positive", self.prior_value));
        }
        if !(self.background_value > 0.0 && self.background_value.is_finite()) {
            return bad(format!(
                "background_value {} must be positive",
                self.background_value
            ));
        }
        if self.sparsification_bins < 2 {
            return bad(format!(
                "sparsification_bins {} must be at least 2",
                self.sparsification_bins
            ));
        }
        if !(1..=256).contains(&self.tile_size) {
            return bad(format!("tile_size {} outside 1..=256", self.tile_size));
        }
        Ok(())
    }

    pub fn require_num_classes(&self) -> Result<usize> {
        self.num_classes.ok_or_else(|| {
            Error::InvalidArgument(
                "--num-classes (or num_classes in the config) is required".into(),
            )
        })
    }

    pub fn require<'a>(value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
        value
            .as_deref()
            .ok_or_else(|| Error::InvalidArgument(format!("--{flag} is required")))
    }
}
