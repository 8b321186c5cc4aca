use serde::{Deserialize, Serialize};

use super::loss::LossKind;
use super::optim::AdamConfig;
use crate::dct::DctConfig;
use crate::error::{Error, Result};
use crate::model::ModelConfig;

/// Everything a training run needs besides data and skeleton.
///
/// `model.n_coeffs` is ignored on input; the resolved value comes from
/// `n_coeffs`, which defaults to `n_history + n_future`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub lr_decay_every: usize,
    pub n_history: usize,
    pub n_future: usize,
    pub n_coeffs: Option<usize>,
    pub seed: u64,
    pub loss: LossKind,
    /// Global gradient-norm bound; `None` disables clipping.
    pub grad_clip: Option<f64>,
    /// Window start spacing when cutting sequences.
    pub window_stride: usize,
    /// Check every attention matrix at every step.
    pub monitor_attention: bool,
    pub adam: AdamConfig,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 256,
            lr: 5e-4,
            lr_decay: 0.96,
            lr_decay_every: 2,
            n_history: 10,
            n_future: 10,
            n_coeffs: None,
            seed: 0,
            loss: LossKind::PositionMpjpe,
            grad_clip: Some(1.0),
            window_stride: 1,
            monitor_attention: false,
            adam: AdamConfig::default(),
            model: ModelConfig::default(),
        }
    }
}

pub const PRESETS: &[&str] = &["h36m", "h36m-long", "cmu", "cmu-long"];

impl TrainConfig {
    /// Named starting points: Human3.6M uses batches of 256, CMU of 16;
    /// the `-long` variants predict 25 frames.
    pub fn preset(name: &str) -> Option<Self> {
        let base = Self::default();
        let cfg = match name {
            "h36m" => base,
            "h36m-long" => Self {
                n_future: 25,
                ..base
            },
            "cmu" => Self {
                batch_size: 16,
                ..base
            },
            "cmu-long" => Self {
                batch_size: 16,
                n_future: 25,
                ..base
            },
            _ => return None,
        };
        Some(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn resolved_n_coeffs(&self) -> usize {
        self.n_coeffs.unwrap_or(self.n_history + self.n_future)
    }

    pub fn dct(&self) -> DctConfig {
        DctConfig {
            n_history: self.n_history,
            n_future: self.n_future,
            n_coeffs: self.resolved_n_coeffs(),
        }
    }

    /// The model configuration with `n_coeffs` filled in.
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            n_coeffs: self.resolved_n_coeffs(),
            ..self.model.clone()
        }
    }

    /// Copies `model.n_coeffs` from the resolved value.
    pub fn resolve(mut self) -> Self {
        self.model.n_coeffs = self.resolved_n_coeffs();
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad(format!("lr_decay must be in (0, 1], got {}", self.lr_decay));
        }
        if self.lr_decay_every == 0 {
            return bad("lr_decay_every must be at least 1".into());
        }
        if self.n_future == 0 {
            return bad("n_future must be at least 1".into());
        }
        if self.window_stride == 0 {
            return bad("window_stride must be at least 1".into());
        }
        if let Some(c) = self.grad_clip {
            if c.is_nan() || c <= 0.0 {
                return bad(format!("grad_clip must be positive, got {c}"));
            }
        }
        self.dct().validate()?;
        self.model_config().validate()
    }
}
