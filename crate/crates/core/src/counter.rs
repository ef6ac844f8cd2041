//! Gated edge counter.
//!
//! Each ring is observed for a fixed window and its rising edges are
//! counted; the frequency estimate is `edges / window`. The oscillator's
//! phase when the gate opens is unknown, which is modelled by a uniform
//! offset in `[0, 1)` cycles.

use rand::Rng;

use crate::error::{PufError, Result};
use crate::ro_model::FrequencyBackend;

pub const DEFAULT_WINDOW: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementConfig {
    /// Gate time in seconds.
    pub window: f64,
    /// Fixed start phase in cycles, in `[0, 1)`. `None` draws a fresh phase
    /// for every measurement.
    pub pinned_phase: Option<f64>,
}

impl Default for MeasurementConfig {
    fn default() -> Self {
        MeasurementConfig {
            window: DEFAULT_WINDOW,
            pinned_phase: None,
        }
    }
}

impl MeasurementConfig {
    pub fn with_window(window: f64) -> Self {
        MeasurementConfig {
            window,
            pinned_phase: None,
        }
    }

    pub fn pinned(self, phase: f64) -> Self {
        MeasurementConfig {
            pinned_phase: Some(phase),
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.window.is_finite() && self.window > 0.0) {
            return Err(PufError::InvalidConfig(format!(
                "counting window must be positive, got {}",
                self.window
            )));
        }
        if let Some(phase) = self.pinned_phase {
            if !(0.0..1.0).contains(&phase) {
                return Err(PufError::InvalidConfig(format!(
                    "pinned phase must lie in [0, 1), got {phase}"
                )));
            }
        }
        Ok(())
    }

    /// Frequency resolution of the counter, `1 / window`.
    pub fn resolution(&self) -> f64 {
        1.0 / self.window
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasuredFrequency {
    pub ring_index: usize,
    pub edge_count: u64,
    /// `edge_count / window`, in hertz.
    pub estimate: f64,
    pub window: f64,
}

/// Number of rising edges seen in `window` seconds for a signal at
/// `frequency`, starting `phase` cycles into a period.
pub fn count_edges(frequency: f64, window: f64, phase: f64) -> u64 {
    // frequency and window are validated non-negative, so the floor is too
    (frequency * window + phase).floor() as u64
}

pub fn measure<R: Rng + ?Sized>(
    backend: &FrequencyBackend,
    ring_index: usize,
    cfg: &MeasurementConfig,
    rng: &mut R,
) -> Result<MeasuredFrequency> {
    cfg.validate()?;
    let frequency = backend.true_frequency(ring_index, rng)?;
    let phase = match cfg.pinned_phase {
        Some(phase) => phase,
        None => rng.random::<f64>(),
    };
    let edge_count = count_edges(frequency, cfg.window, phase);
    Ok(MeasuredFrequency {
        ring_index,
        edge_count,
        estimate: edge_count as f64 / cfg.window,
        window: cfg.window,
    })
}

/// Measure every ring once, in index order, each with its own phase.
pub fn measure_all<R: Rng + ?Sized>(
    backend: &FrequencyBackend,
    cfg: &MeasurementConfig,
    rng: &mut R,
) -> Result<Vec<MeasuredFrequency>> {
    (0..backend.ring_count())
        .map(|i| measure(backend, i, cfg, rng))
        .collect()
}
