//! Challenge-response engine.
//!
//! A challenge is 16 ring-index pairs taken from a 32-hex-character digest;
//! the response is one bit per pair, set when the first ring of the pair
//! counts strictly faster than the second.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::counter::{measure, MeasurementConfig};
use crate::error::{PufError, Result};
use crate::ro_model::FrequencyBackend;

/// Pairs per challenge, and bits per response.
pub const CHALLENGE_LEN: usize = 16;
/// Hex characters in a digest.
pub const DIGEST_LEN: usize = 2 * CHALLENGE_LEN;
/// Rings addressable by one 3-bit selector.
pub const SELECTOR_RINGS: u8 = 8;

/// A 128-bit digest rendered as 32 lowercase hex characters.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Digest(String);

impl Digest {
    pub fn parse(hex: &str) -> Result<Self> {
        if hex.len() != DIGEST_LEN {
            return Err(PufError::InvalidDigest(format!(
                "expected {DIGEST_LEN} hex characters, got {}",
                hex.len()
            )));
        }
        if let Some(c) = hex.chars().find(|c| !matches!(c, '0'..='9' | 'a'..='f')) {
            return Err(PufError::InvalidDigest(format!(
                "unexpected character {c:?}; only lowercase hex is allowed"
            )));
        }
        Ok(Digest(hex.to_owned()))
    }

    /// Lowercase hex rendering of a 16-byte hash output.
    pub fn from_bytes(bytes: &[u8; 16]) -> Self {
        let hex = bytes.iter().map(|b| format!("{b:02x}")).collect();
        Digest(hex)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Numeric value (0-15) of every hex character, in order.
    pub fn nibbles(&self) -> [u8; DIGEST_LEN] {
        let mut out = [0u8; DIGEST_LEN];
        for (slot, c) in out.iter_mut().zip(self.0.chars()) {
            *slot = c.to_digit(16).expect("validated hex") as u8;
        }
        out
    }
}

impl TryFrom<String> for Digest {
    type Error = PufError;

    fn try_from(value: String) -> Result<Self> {
        Digest::parse(&value)
    }
}

impl From<Digest> for String {
    fn from(value: Digest) -> Self {
        value.0
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Two ring indices whose frequencies are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ChallengePair {
    pub first: u8,
    pub second: u8,
}

impl ChallengePair {
    /// Both indices must fit in one hex digit of the wire encoding.
    pub fn new(first: u8, second: u8) -> Result<Self> {
        if first > 15 || second > 15 {
            return Err(PufError::InvalidEncoding(format!(
                "ring indices must be below 16, got ({first}, {second})"
            )));
        }
        Ok(ChallengePair { first, second })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ChallengeSet {
    pairs: [ChallengePair; CHALLENGE_LEN],
}

impl ChallengeSet {
    pub fn new(pairs: [ChallengePair; CHALLENGE_LEN]) -> Self {
        ChallengeSet { pairs }
    }

    pub fn pairs(&self) -> &[ChallengePair; CHALLENGE_LEN] {
        &self.pairs
    }

    /// Two hex digits per pair, first index then second.
    pub fn to_wire(&self) -> String {
        self.pairs
            .iter()
            .flat_map(|p| [p.first, p.second])
            .map(|i| char::from_digit(u32::from(i), 16).expect("index below 16"))
            .collect()
    }

    pub fn from_wire(text: &str) -> Result<Self> {
        if text.len() != DIGEST_LEN {
            return Err(PufError::InvalidEncoding(format!(
                "challenge must be {DIGEST_LEN} hex digits, got {} characters",
                text.len()
            )));
        }
        let mut indices = [0u8; DIGEST_LEN];
        for (slot, c) in indices.iter_mut().zip(text.chars()) {
            *slot = match c {
                '0'..='9' | 'a'..='f' => c.to_digit(16).expect("hex digit") as u8,
                _ => {
                    return Err(PufError::InvalidEncoding(format!(
                        "unexpected character {c:?} in challenge"
                    )))
                }
            };
        }
        let mut pairs = [ChallengePair { first: 0, second: 0 }; CHALLENGE_LEN];
        for (k, pair) in pairs.iter_mut().enumerate() {
            *pair = ChallengePair {
                first: indices[2 * k],
                second: indices[2 * k + 1],
            };
        }
        Ok(ChallengeSet { pairs })
    }
}

/// Challenge taken from a digest: pair `k` is hex digits `2k` and `2k+1`,
/// each reduced modulo 8 to select one of the eight rings.
pub fn derive_pairs(digest: &Digest) -> ChallengeSet {
    let nibbles = digest.nibbles();
    let mut pairs = [ChallengePair { first: 0, second: 0 }; CHALLENGE_LEN];
    for (k, pair) in pairs.iter_mut().enumerate() {
        *pair = ChallengePair {
            first: nibbles[2 * k] % SELECTOR_RINGS,
            second: nibbles[2 * k + 1] % SELECTOR_RINGS,
        };
    }
    ChallengeSet { pairs }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ResponseBits {
    bits: [bool; CHALLENGE_LEN],
}

impl ResponseBits {
    pub fn new(bits: [bool; CHALLENGE_LEN]) -> Self {
        ResponseBits { bits }
    }

    pub fn bits(&self) -> &[bool; CHALLENGE_LEN] {
        &self.bits
    }

    /// Positions where both responses agree.
    pub fn matching_bits(&self, other: &ResponseBits) -> u8 {
        self.bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| a == b)
            .count() as u8
    }

    pub fn to_wire(&self) -> String {
        bit_string(&self.bits)
    }

    pub fn from_wire(text: &str) -> Result<Self> {
        if text.len() != CHALLENGE_LEN {
            return Err(PufError::InvalidEncoding(format!(
                "response must be {CHALLENGE_LEN} bits, got {} characters",
                text.len()
            )));
        }
        let mut bits = [false; CHALLENGE_LEN];
        for (slot, c) in bits.iter_mut().zip(text.chars()) {
            *slot = match c {
                '0' => false,
                '1' => true,
                _ => {
                    return Err(PufError::InvalidEncoding(format!(
                        "unexpected character {c:?} in response bits"
                    )))
                }
            };
        }
        Ok(ResponseBits { bits })
    }
}

fn bit_string(bits: &[bool]) -> String {
    bits.iter().map(|b| if *b { '1' } else { '0' }).collect()
}

/// Compare one pair of rings with fresh measurements. A ring compared with
/// itself is a tie and answers 0 without being measured.
pub fn compare_rings<R: Rng + ?Sized>(
    backend: &FrequencyBackend,
    first: usize,
    second: usize,
    cfg: &MeasurementConfig,
    rng: &mut R,
) -> Result<bool> {
    backend.check_index(first)?;
    backend.check_index(second)?;
    if first == second {
        return Ok(false);
    }
    let a = measure(backend, first, cfg, rng)?;
    let b = measure(backend, second, cfg, rng)?;
    Ok(a.estimate > b.estimate)
}

pub fn respond<R: Rng + ?Sized>(
    backend: &FrequencyBackend,
    challenge: &ChallengeSet,
    cfg: &MeasurementConfig,
    rng: &mut R,
) -> Result<ResponseBits> {
    cfg.validate()?;
    // reject the whole challenge before measuring anything
    for pair in &challenge.pairs {
        backend.check_index(usize::from(pair.first))?;
        backend.check_index(usize::from(pair.second))?;
    }
    let mut bits = [false; CHALLENGE_LEN];
    for (bit, pair) in bits.iter_mut().zip(&challenge.pairs) {
        *bit = compare_rings(
            backend,
            usize::from(pair.first),
            usize::from(pair.second),
            cfg,
            rng,
        )?;
    }
    Ok(ResponseBits { bits })
}

/// One bit per unordered ring pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Signature(pub Vec<bool>);

impl Signature {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn hamming_distance(&self, other: &Signature) -> usize {
        assert_eq!(self.len(), other.len(), "signatures of different lengths");
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count()
    }

    pub fn ones(&self) -> usize {
        self.0.iter().filter(|b| **b).count()
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&bit_string(&self.0))
    }
}

/// Ring pairs `(i, j)` with `i < j`, in lexicographic order.
pub fn signature_pairs(ring_count: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..ring_count).flat_map(move |i| (i + 1..ring_count).map(move |j| (i, j)))
}

/// Comparison bit for every unordered pair of rings on the device.
pub fn full_signature<R: Rng + ?Sized>(
    backend: &FrequencyBackend,
    cfg: &MeasurementConfig,
    rng: &mut R,
) -> Result<Signature> {
    cfg.validate()?;
    signature_pairs(backend.ring_count())
        .map(|(i, j)| compare_rings(backend, i, j, cfg, rng))
        .collect::<Result<Vec<_>>>()
        .map(Signature)
}
