//! Pipeline parameters shared by the library entry points and the CLI.
//!
//! Serialized as TOML; every output directory receives a copy of the
//! effective configuration as `config.toml`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::annotation::DEFAULT_ENERGY_QUANTILE;
use crate::cwt::{ScaleGrid, DEFAULT_F_MAX_FRACTION, DEFAULT_F_MIN_FRACTION, DEFAULT_NUM_SCALES};
use crate::dataset::{AugmentConfig, SplitRatios};
use crate::error::{Error, Result};
use crate::render::{Colormap, RenderOptions, DEFAULT_IMAGE_SIZE, DEFAULT_LOG_EPSILON};
use crate::segment::{hop_length, DEFAULT_OVERLAP, DEFAULT_WINDOW_LEN};

pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 12_000.0;
pub const CONFIG_FILE_NAME: &str = "config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Rate assumed for csv/raw inputs; wav files carry their own.
    pub sample_rate_hz: f64,
    pub window_len: usize,
    pub overlap: f64,
    pub num_scales: usize,
    /// Lowest pseudo-frequency; `fs/500` when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f_min_hz: Option<f64>,
    /// Highest pseudo-frequency; `fs/4` when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f_max_hz: Option<f64>,
    /// Square output side in pixels.
    pub image_size: usize,
    pub colormap: Colormap,
    pub log_epsilon: f64,
    pub energy_quantile: f64,
    pub seed: u64,
    pub split: SplitRatios,
    pub augment: AugmentConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            window_len: DEFAULT_WINDOW_LEN,
            overlap: DEFAULT_OVERLAP,
            num_scales: DEFAULT_NUM_SCALES,
            f_min_hz: None,
            f_max_hz: None,
            image_size: DEFAULT_IMAGE_SIZE,
            colormap: Colormap::Grayscale,
            log_epsilon: DEFAULT_LOG_EPSILON,
            energy_quantile: DEFAULT_ENERGY_QUANTILE,
            seed: 0,
            split: SplitRatios::default(),
            augment: AugmentConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to TOML")
    }

    /// Write `config.toml` into `dir`.
    pub fn echo_into(&self, dir: impl AsRef<Path>) -> Result<()> {
        let path = dir.as_ref().join(CONFIG_FILE_NAME);
        fs::write(&path, self.to_toml_string()).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return bad(format!("sample_rate_hz must be positive, got {}", self.sample_rate_hz));
        }
        hop_length(self.window_len, self.overlap).map_err(|e| Error::Config(e.to_string()))?;
        if self.num_scales < 2 {
            return bad(format!("num_scales must be at least 2, got {}", self.num_scales));
        }
        if self.image_size == 0 {
            return bad("image_size must be positive".into());
        }
        if !(self.log_epsilon.is_finite() && self.log_epsilon > 0.0) {
            return bad(format!("log_epsilon must be positive, got {}", self.log_epsilon));
        }
        if !(self.energy_quantile > 0.0 && self.energy_quantile < 1.0) {
            return bad(format!("energy_quantile must lie in (0, 1), got {}", self.energy_quantile));
        }
        self.split.validate()?;
        self.augment.validate()?;
        self.scale_grid(self.sample_rate_hz)?;
        Ok(())
    }

    pub fn frequency_bounds(&self, sample_rate_hz: f64) -> (f64, f64) {
        (
            self.f_min_hz.unwrap_or(sample_rate_hz * DEFAULT_F_MIN_FRACTION),
            self.f_max_hz.unwrap_or(sample_rate_hz * DEFAULT_F_MAX_FRACTION),
        )
    }

    pub fn scale_grid(&self, sample_rate_hz: f64) -> Result<ScaleGrid> {
        let (lo, hi) = self.frequency_bounds(sample_rate_hz);
        Ok(ScaleGrid::new(lo, hi, self.num_scales, sample_rate_hz)?)
    }

    pub fn render_options(&self) -> RenderOptions {
        RenderOptions {
            height: self.image_size,
            width: self.image_size,
            log_epsilon: self.log_epsilon,
            colormap: self.colormap,
        }
    }
}
