//! Physical model of a bank of ring oscillators.
//!
//! A ring of `n` stages, each a lumped RC delay with `tau = 0.69 * R * C`,
//! oscillates at `1 / (2 * tau * n)`. Fabrication scatters every ring of a
//! device around that nominal value, and the operating environment adds a
//! linear temperature drift plus per-measurement jitter on top.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{PufError, Result};

/// Delay constant of one RC stage, in units of `R * C`.
pub const STAGE_DELAY_FACTOR: f64 = 0.69;

/// Temperature at which a device runs at its base frequencies, in °C.
pub const REFERENCE_TEMPERATURE: f64 = 25.0;

/// Version tag written into serialized device files.
pub const DEVICE_FILE_VERSION: u32 = 1;

/// Nominal parameters of a single ring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RingSpec {
    /// Per-stage resistance in ohms.
    pub resistance: f64,
    /// Per-stage capacitance in farads.
    pub capacitance: f64,
    /// Number of inverting stages; odd.
    pub stages: u32,
}

impl Default for RingSpec {
    fn default() -> Self {
        RingSpec {
            resistance: 1_000.0,
            capacitance: 1e-6,
            stages: 3,
        }
    }
}

impl RingSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.resistance.is_finite() && self.resistance > 0.0) {
            return Err(PufError::InvalidSpec(format!(
                "resistance must be positive, got {}",
                self.resistance
            )));
        }
        if !(self.capacitance.is_finite() && self.capacitance > 0.0) {
            return Err(PufError::InvalidSpec(format!(
                "capacitance must be positive, got {}",
                self.capacitance
            )));
        }
        if self.stages == 0 || self.stages.is_multiple_of(2) {
            return Err(PufError::InvalidSpec(format!(
                "stage count must be odd and at least 1, got {}",
                self.stages
            )));
        }
        Ok(())
    }
}

/// Oscillation frequency in hertz of an ideal ring: `1 / (2 * 0.69 * R * C * n)`.
///
/// Only the physical parameters are checked here, so an even stage count is
/// accepted (the formula is still defined); [`RingSpec::validate`] is the
/// gate for rings that are actually fabricated.
pub fn nominal_frequency(ring: &RingSpec) -> Result<f64> {
    let RingSpec {
        resistance,
        capacitance,
        stages,
    } = *ring;
    if !(resistance.is_finite() && resistance > 0.0) {
        return Err(PufError::InvalidSpec(format!("non-positive resistance {resistance}")));
    }
    if !(capacitance.is_finite() && capacitance > 0.0) {
        return Err(PufError::InvalidSpec(format!("non-positive capacitance {capacitance}")));
    }
    if stages == 0 {
        return Err(PufError::InvalidSpec("stage count must be at least 1".into()));
    }
    let tau = STAGE_DELAY_FACTOR * resistance * capacitance;
    Ok(1.0 / (2.0 * tau * f64::from(stages)))
}

/// Blueprint shared by every device of one production run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceSpec {
    pub ring_count: usize,
    pub nominal: RingSpec,
    /// Relative standard deviation of the per-ring fabrication offset.
    pub process_sigma: f64,
}

impl Default for DeviceSpec {
    fn default() -> Self {
        DeviceSpec {
            ring_count: 8,
            nominal: RingSpec::default(),
            process_sigma: 0.05,
        }
    }
}

impl DeviceSpec {
    pub fn validate(&self) -> Result<()> {
        self.nominal.validate()?;
        if self.ring_count < 2 {
            return Err(PufError::InvalidSpec(format!(
                "a device needs at least 2 rings, got {}",
                self.ring_count
            )));
        }
        if !(self.process_sigma.is_finite() && self.process_sigma >= 0.0) {
            return Err(PufError::InvalidSpec(format!(
                "process sigma must be non-negative, got {}",
                self.process_sigma
            )));
        }
        Ok(())
    }
}

/// A fabricated device: the frozen per-ring frequencies at the reference
/// temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceInstance {
    pub device_id: String,
    pub fabrication_seed: u64,
    pub spec: DeviceSpec,
    pub base_frequencies: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DeviceFile {
    version: u32,
    #[serde(flatten)]
    device: DeviceInstance,
}

impl DeviceInstance {
    pub fn ring_count(&self) -> usize {
        self.base_frequencies.len()
    }

    /// Versioned JSON document, pretty-printed with a trailing newline.
    pub fn to_json(&self) -> String {
        let doc = DeviceFile {
            version: DEVICE_FILE_VERSION,
            device: self.clone(),
        };
        let mut out = serde_json::to_string_pretty(&doc).expect("device serializes");
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: DeviceFile = serde_json::from_str(text)
            .map_err(|e| PufError::InvalidSpec(format!("malformed device file: {e}")))?;
        if doc.version != DEVICE_FILE_VERSION {
            return Err(PufError::InvalidSpec(format!(
                "unsupported device file version {}",
                doc.version
            )));
        }
        let device = doc.device;
        device.spec.validate()?;
        if device.base_frequencies.len() != device.spec.ring_count {
            return Err(PufError::InvalidSpec(format!(
                "device lists {} frequencies for {} rings",
                device.base_frequencies.len(),
                device.spec.ring_count
            )));
        }
        if let Some(f) = device
            .base_frequencies
            .iter()
            .find(|f| !(f.is_finite() && **f > 0.0))
        {
            return Err(PufError::InvalidSpec(format!("non-positive base frequency {f}")));
        }
        Ok(device)
    }
}

/// Draw a multiplicative factor `1 + N(0, sigma)`, redrawing until positive.
fn positive_factor<R: Rng + ?Sized>(normal: &Normal<f64>, rng: &mut R) -> f64 {
    loop {
        let factor = 1.0 + normal.sample(rng);
        if factor > 0.0 {
            return factor;
        }
    }
}

/// Fabricate a device. The result depends only on `(spec, seed)`.
pub fn fabricate_device(spec: &DeviceSpec, seed: u64) -> Result<DeviceInstance> {
    spec.validate()?;
    let nominal = nominal_frequency(&spec.nominal)?;
    let normal = Normal::new(0.0, spec.process_sigma)
        .map_err(|e| PufError::InvalidSpec(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base_frequencies = (0..spec.ring_count)
        .map(|_| nominal * positive_factor(&normal, &mut rng))
        .collect();
    Ok(DeviceInstance {
        device_id: format!("ro-{seed:016x}"),
        fabrication_seed: seed,
        spec: *spec,
        base_frequencies,
    })
}

/// Operating conditions of a simulated device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    /// Degrees Celsius.
    pub temperature: f64,
    /// Relative standard deviation of the per-measurement jitter.
    pub noise_sigma: f64,
    /// Relative frequency change per °C away from the reference temperature.
    pub temp_coefficient: f64,
}

impl Default for Environment {
    fn default() -> Self {
        Environment {
            temperature: REFERENCE_TEMPERATURE,
            noise_sigma: 0.005,
            temp_coefficient: -0.001,
        }
    }
}

impl Environment {
    /// Reference temperature, no jitter.
    pub fn noise_free() -> Self {
        Environment {
            noise_sigma: 0.0,
            ..Environment::default()
        }
    }

    pub fn drift_factor(&self) -> f64 {
        1.0 + self.temp_coefficient * (self.temperature - REFERENCE_TEMPERATURE)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(PufError::InvalidConfig(format!(
                "noise sigma must be non-negative, got {}",
                self.noise_sigma
            )));
        }
        let drift = self.drift_factor();
        if !(drift.is_finite() && drift > 0.0) {
            return Err(PufError::InvalidConfig(format!(
                "temperature {} °C drives every frequency to or below zero",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// Source of true ring frequencies for the counter.
#[derive(Debug, Clone, PartialEq)]
pub enum FrequencyBackend {
    Simulated {
        device: DeviceInstance,
        environment: Environment,
    },
    /// Fixed frequencies served verbatim, e.g. a recorded bench measurement.
    Replay(Vec<f64>),
}

impl FrequencyBackend {
    pub fn simulated(device: DeviceInstance, environment: Environment) -> Result<Self> {
        environment.validate()?;
        if device.base_frequencies.is_empty() {
            return Err(PufError::InvalidSpec("device has no rings".into()));
        }
        Ok(FrequencyBackend::Simulated {
            device,
            environment,
        })
    }

    pub fn replay(frequencies: Vec<f64>) -> Result<Self> {
        if frequencies.is_empty() {
            return Err(PufError::InvalidConfig("replay needs at least one frequency".into()));
        }
        if let Some(f) = frequencies.iter().find(|f| !(f.is_finite() && **f >= 0.0)) {
            return Err(PufError::InvalidConfig(format!(
                "replay frequencies must be finite and non-negative, got {f}"
            )));
        }
        Ok(FrequencyBackend::Replay(frequencies))
    }

    pub fn ring_count(&self) -> usize {
        match self {
            FrequencyBackend::Simulated { device, .. } => device.ring_count(),
            FrequencyBackend::Replay(freqs) => freqs.len(),
        }
    }

    pub fn device_id(&self) -> &str {
        match self {
            FrequencyBackend::Simulated { device, .. } => &device.device_id,
            FrequencyBackend::Replay(_) => "replay",
        }
    }

    /// Same device with measurement jitter switched off.
    pub fn without_noise(&self) -> Self {
        match self {
            FrequencyBackend::Simulated {
                device,
                environment,
            } => FrequencyBackend::Simulated {
                device: device.clone(),
                environment: Environment {
                    noise_sigma: 0.0,
                    ..*environment
                },
            },
            FrequencyBackend::Replay(freqs) => FrequencyBackend::Replay(freqs.clone()),
        }
    }

    pub fn check_index(&self, ring_index: usize) -> Result<()> {
        let count = self.ring_count();
        if ring_index >= count {
            return Err(PufError::IndexOutOfRange {
                index: ring_index,
                count,
            });
        }
        Ok(())
    }

    /// Instantaneous frequency of one ring. A replayed value is returned
    /// as stored without touching `rng`; a simulated ring gets temperature
    /// drift and one jitter draw.
    pub fn true_frequency<R: Rng + ?Sized>(&self, ring_index: usize, rng: &mut R) -> Result<f64> {
        self.check_index(ring_index)?;
        match self {
            FrequencyBackend::Replay(freqs) => Ok(freqs[ring_index]),
            FrequencyBackend::Simulated {
                device,
                environment,
            } => {
                let drifted = device.base_frequencies[ring_index] * environment.drift_factor();
                if environment.noise_sigma == 0.0 {
                    return Ok(drifted);
                }
                let normal = Normal::new(0.0, environment.noise_sigma)
                    .map_err(|e| PufError::InvalidConfig(e.to_string()))?;
                Ok(drifted * positive_factor(&normal, rng))
            }
        }
    }
}
