//! Emulation of a ring-oscillator PUF and the password vault built on it.
//!
//! * [`ro_model`]: ring frequencies, fabrication spread, environment.
//! * [`counter`]: gated edge counting.
//! * [`puf_core`]: digest-derived challenges and comparison responses.
//! * [`device_service`]: the device daemon (line-delimited JSON over TCP) and its client.
//! * [`vault`]: the 16×16 bucketed table of enrolled responses.
//! * [`vault_service`]: HTTP API over the vault.
//! * [`metrics`]: uniqueness, reliability and uniformity of device populations.

pub mod counter;
pub mod device_service;
pub mod error;
pub mod metrics;
pub mod puf_core;
pub mod ro_model;
pub mod vault;
pub mod vault_service;

pub use error::{PufError, Result};
