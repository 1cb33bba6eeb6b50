//! Training-loop control that does not need a trainer: early stopping with
//! patience and the hyperparameter provenance record stored in model metadata.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MetricMode {
    /// Higher is better (accuracy-like).
    #[default]
    Maximize,
    /// Lower is better (loss-like).
    Minimize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub max_epochs: u32,
    pub patience: u32,
    pub learning_rate: f64,
    pub dropout: f64,
    pub image_size: u32,
    pub optimizer_name: String,
    #[serde(default)]
    pub min_delta: f64,
    #[serde(default)]
    pub mode: MetricMode,
    /// Which validation quantity drove stopping, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monitored_metric: Option<String>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            max_epochs: 200,
            patience: 50,
            learning_rate: 1e-4,
            dropout: 0.20,
            image_size: 224,
            optimizer_name: "Adam".into(),
            min_delta: 0.0,
            mode: MetricMode::Maximize,
            monitored_metric: None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainingError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("epoch {got} observed after epoch {previous}; epochs must increase")]
    OutOfOrder { previous: u32, got: u32 },
    #[error("training already stopped at epoch {0}")]
    AlreadyStopped(u32),
    #[error("metric for epoch {epoch} is not finite")]
    NonFiniteMetric { epoch: u32 },
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), TrainingError> {
        let bad = |m: &str| Err(TrainingError::Config(m.into()));
        if self.max_epochs == 0 || self.patience == 0 || self.image_size == 0 {
            return bad("max_epochs, patience and image_size must be positive");
        }
        if self.patience >= self.max_epochs {
            return bad("patience must be smaller than max_epochs");
        }
        let valid = self.learning_rate > 0.0 && (0.0..1.0).contains(&self.dropout) && self.min_delta >= 0.0;
        if !valid {
            return bad("learning_rate must be positive, dropout in [0, 1), min_delta >= 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Continue,
    Stop,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EarlyStopState {
    pub best_metric: Option<f64>,
    pub best_epoch: Option<u32>,
    pub last_epoch: Option<u32>,
    pub epochs_since_improvement: u32,
    pub stopped_at: Option<u32>,
}

impl EarlyStopState {
    pub fn new() -> Self {
        Self::default()
    }

    fn improves(&self, metric: f64, cfg: &TrainingConfig) -> bool {
        match self.best_metric {
            None => true,
            Some(best) => match cfg.mode {
                MetricMode::Maximize => metric > best + cfg.min_delta,
                MetricMode::Minimize => metric < best - cfg.min_delta,
            },
        }
    }

    /// Records one epoch's validation metric. Epoch numbers start at 1.
    pub fn observe_epoch(&mut self, epoch: u32, metric: f64, cfg: &TrainingConfig) -> Result<Decision, TrainingError> {
        if let Some(at) = self.stopped_at {
            return Err(TrainingError::AlreadyStopped(at));
        }
        if let Some(previous) = self.last_epoch {
            if epoch <= previous {
                return Err(TrainingError::OutOfOrder { previous, got: epoch });
            }
        }
        if !metric.is_finite() {
            return Err(TrainingError::NonFiniteMetric { epoch });
        }
        self.last_epoch = Some(epoch);
        if self.improves(metric, cfg) {
            self.best_metric = Some(metric);
            self.best_epoch = Some(epoch);
        }
        self.epochs_since_improvement = epoch - self.best_epoch.expect("set on first epoch");
        if self.epochs_since_improvement >= cfg.patience || epoch >= cfg.max_epochs {
            self.stopped_at = Some(epoch);
            return Ok(Decision::Stop);
        }
        Ok(Decision::Continue)
    }
}

/// Feeds `metrics[i]` as epoch `i + 1` until the controller stops; returns
/// the final state.
pub fn run_early_stopping(metrics: &[f64], cfg: &TrainingConfig) -> Result<EarlyStopState, TrainingError> {
    cfg.validate()?;
    let mut state = EarlyStopState::new();
    for (i, &m) in metrics.iter().enumerate() {
        if state.observe_epoch(i as u32 + 1, m, cfg)? == Decision::Stop {
            break;
        }
    }
    Ok(state)
}
