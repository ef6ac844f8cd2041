//! Quality statistics over simulated device populations.
//!
//! All three statistics work on full signatures (one bit per unordered ring
//! pair). The reference signature of a device is taken with jitter off and
//! the counter phase pinned, so it is a pure function of the device.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::counter::MeasurementConfig;
use crate::error::{PufError, Result};
use crate::puf_core::{full_signature, Signature};
use crate::ro_model::{fabricate_device, DeviceSpec, Environment, FrequencyBackend};

pub const DEFAULT_REPEATS: usize = 100;

/// Jitter-free, phase-pinned signature. A pinned phase in `cfg` is kept,
/// otherwise the phase is pinned at 0.
pub fn reference_signature(device: &FrequencyBackend, cfg: &MeasurementConfig) -> Result<Signature> {
    let quiet = device.without_noise();
    let pinned = cfg.pinned(cfg.pinned_phase.unwrap_or(0.0));
    // nothing random is left to draw, the stream is a placeholder
    full_signature(&quiet, &pinned, &mut ChaCha8Rng::seed_from_u64(0))
}

/// Mean fractional Hamming distance over every pair of devices.
pub fn uniqueness(population: &[FrequencyBackend], cfg: &MeasurementConfig) -> Result<f64> {
    if population.len() < 2 {
        return Err(PufError::InsufficientPopulation(population.len()));
    }
    let signatures = population
        .par_iter()
        .map(|d| reference_signature(d, cfg))
        .collect::<Result<Vec<_>>>()?;
    uniqueness_of(&signatures)
}

/// [`uniqueness`] over precomputed signatures of equal length.
pub fn uniqueness_of(signatures: &[Signature]) -> Result<f64> {
    let n = signatures.len();
    if n < 2 {
        return Err(PufError::InsufficientPopulation(n));
    }
    let bits = signatures[0].len();
    if bits == 0 || signatures.iter().any(|s| s.len() != bits) {
        return Err(PufError::InvalidConfig(
            "signatures must be non-empty and of equal length".into(),
        ));
    }
    // integer total keeps the result independent of summation order
    let total: usize = (0..n)
        .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
        .map(|(a, b)| signatures[a].hamming_distance(&signatures[b]))
        .sum();
    let comparisons = n * (n - 1) / 2;
    Ok(total as f64 / (comparisons * bits) as f64)
}

/// Mean fraction of bits that agree with the reference signature across
/// `repeats` signatures taken under `cfg` and the device's own jitter.
pub fn reliability<R: Rng + ?Sized>(
    device: &FrequencyBackend,
    repeats: usize,
    cfg: &MeasurementConfig,
    rng: &mut R,
) -> Result<f64> {
    if repeats < 2 {
        return Err(PufError::InvalidConfig(format!(
            "reliability needs at least 2 repeats, got {repeats}"
        )));
    }
    let reference = reference_signature(device, cfg)?;
    if reference.is_empty() {
        return Err(PufError::InvalidConfig("device has fewer than 2 rings".into()));
    }
    let mut stable = 0usize;
    for _ in 0..repeats {
        let sample = full_signature(device, cfg, rng)?;
        stable += reference.len() - reference.hamming_distance(&sample);
    }
    Ok(stable as f64 / (repeats * reference.len()) as f64)
}

/// Fraction of 1-bits in the reference signature.
pub fn uniformity(device: &FrequencyBackend, cfg: &MeasurementConfig) -> Result<f64> {
    let sig = reference_signature(device, cfg)?;
    if sig.is_empty() {
        return Err(PufError::InvalidConfig("device has fewer than 2 rings".into()));
    }
    Ok(sig.ones() as f64 / sig.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationConfig {
    pub devices: usize,
    pub seed: u64,
    pub spec: DeviceSpec,
    pub environment: Environment,
    pub measurement: MeasurementConfig,
    pub repeats: usize,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        PopulationConfig {
            devices: 200,
            seed: 0,
            spec: DeviceSpec::default(),
            environment: Environment::default(),
            measurement: MeasurementConfig::default(),
            repeats: DEFAULT_REPEATS,
        }
    }
}

/// Fabrication seeds of a population, drawn from the master seed.
pub fn population_seeds(seed: u64, devices: usize) -> Vec<u64> {
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    (0..devices).map(|_| master.random()).collect()
}

/// Measurement stream of a device; stream 0 of its seed is spent on
/// fabrication.
pub fn device_rng(fabrication_seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(fabrication_seed);
    rng.set_stream(1);
    rng
}

pub fn fabricate_population(cfg: &PopulationConfig) -> Result<Vec<FrequencyBackend>> {
    population_seeds(cfg.seed, cfg.devices)
        .into_iter()
        .map(|s| FrequencyBackend::simulated(fabricate_device(&cfg.spec, s)?, cfg.environment))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationReport {
    pub device_count: usize,
    pub pair_count: usize,
    pub uniqueness: f64,
    pub reliability: f64,
    pub uniformity: f64,
}

pub fn evaluate_population(cfg: &PopulationConfig) -> Result<PopulationReport> {
    cfg.measurement.validate()?;
    let devices = fabricate_population(cfg)?;
    let seeds = population_seeds(cfg.seed, cfg.devices);
    let signatures = devices
        .par_iter()
        .map(|d| reference_signature(d, &cfg.measurement))
        .collect::<Result<Vec<_>>>()?;
    let uniqueness = uniqueness_of(&signatures)?;
    let per_device = devices
        .par_iter()
        .zip(&seeds)
        .map(|(d, s)| reliability(d, cfg.repeats, &cfg.measurement, &mut device_rng(*s)))
        .collect::<Result<Vec<_>>>()?;
    let reliability = per_device.iter().sum::<f64>() / per_device.len() as f64;
    let ones: usize = signatures.iter().map(Signature::ones).sum();
    let pair_count = signatures[0].len();
    Ok(PopulationReport {
        device_count: devices.len(),
        pair_count,
        uniqueness,
        reliability,
        uniformity: ones as f64 / (pair_count * devices.len()) as f64,
    })
}

impl fmt::Display for PopulationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<12} {:>10}", "metric", "value")?;
        writeln!(f, "{:<12} {:>10}", "devices", self.device_count)?;
        writeln!(f, "{:<12} {:>10}", "pairs", self.pair_count)?;
        writeln!(f, "{:<12} {:>10.6}", "uniqueness", self.uniqueness)?;
        writeln!(f, "{:<12} {:>10.6}", "reliability", self.reliability)?;
        writeln!(f, "{:<12} {:>10.6}", "uniformity", self.uniformity)
    }
}
