//! Probabilistic uniform quantizer, binary codewords, the memoryless binary symmetric
//! channel, and the decoder together with its closed-form output moments.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Codec parameters of one sensor channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelCodec {
    /// Sensor range `Z`: values are quantized on `[-Z, Z]`.
    pub range: f64,
    /// Word length `L` in bits.
    pub bits: u32,
    /// Per-bit crossover (flip) probability of the channel.
    pub crossover: f64,
}

impl ChannelCodec {
    pub const MAX_BITS: u32 = 62;

    pub fn validate(&self, field: &str) -> Result<()> {
        if !(self.range.is_finite() && self.range > 0.0) {
            return Err(Error::config(format!("{field}.range"), "range must be finite and > 0"));
        }
        if !(1..=Self::MAX_BITS).contains(&self.bits) {
            return Err(Error::config(
                format!("{field}.bits"),
                format!("word length must lie in [1, {}]", Self::MAX_BITS),
            ));
        }
        if !(0.0..=1.0).contains(&self.crossover) {
            return Err(Error::config(format!("{field}.crossover"), "crossover probability must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn level_count(&self) -> u64 {
        1u64 << self.bits
    }

    fn top_index(&self) -> u64 {
        self.level_count() - 1
    }

    /// Quantization step `2Z / (2^L - 1)`.
    pub fn step(&self) -> f64 {
        2.0 * self.range / self.top_index() as f64
    }

    /// Level `-Z + c * step`.
    pub fn level(&self, c: u64) -> f64 {
        -self.range + c as f64 * self.step()
    }

    /// Bound `step^2 / 4` on the truncation-error second moment.
    pub fn truncation_bound(&self) -> f64 {
        let d = self.step();
        d * d / 4.0
    }

    /// Variance of the decoded output contributed by bit flips:
    /// `p (1 - p) 4 Z^2 (2^{2L} - 1) / (3 (2^L - 1)^2)`.
    pub fn flip_variance(&self) -> f64 {
        let p = self.crossover;
        let top = self.top_index() as f64;
        // 2^{2L} - 1 = (2^L - 1)(2^L + 1), which stays exact for large L
        let ratio = (top + 2.0) / top;
        p * (1.0 - p) * 4.0 * self.range * self.range * ratio / 3.0
    }

    /// Mean and variance of the decoded output given the transmitted level.
    pub fn decoded_moments(&self, level: f64) -> (f64, f64) {
        ((1.0 - 2.0 * self.crossover) * level, self.flip_variance())
    }
}

/// Codec parameters for every channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodecConfig {
    pub channels: Vec<ChannelCodec>,
}

impl CodecConfig {
    pub fn validate(&self, channel_count: usize) -> Result<()> {
        if self.channels.len() != channel_count {
            return Err(Error::config(
                "codec.channels",
                format!("{} codecs for {channel_count} channels", self.channels.len()),
            ));
        }
        for (s, c) in self.channels.iter().enumerate() {
            c.validate(&format!("codec.channels[{s}]"))?;
        }
        Ok(())
    }

    pub fn channel(&self, s: usize) -> &ChannelCodec {
        &self.channels[s]
    }
}

/// Fixed-length bit string, least-significant bit first (bit `v` weighs `2^v`).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Codeword {
    bits: Vec<bool>,
}

impl Codeword {
    pub fn from_index(index: u64, len: u32) -> Self {
        Codeword {
            bits: (0..len).map(|v| (index >> v) & 1 == 1).collect(),
        }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Codeword { bits }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn index(&self) -> u64 {
        self.bits
            .iter()
            .enumerate()
            .fold(0u64, |acc, (v, &b)| acc | (u64::from(b) << v))
    }
}

impl fmt::Display for Codeword {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Encoder output.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub code: Codeword,
    /// Chosen quantization level.
    pub level: f64,
    /// The input lay outside `[-Z, Z]` and was clamped first.
    pub clamped: bool,
}

/// Randomized rounding of `y` to one of the two neighbouring levels, unbiased on `[-Z, Z]`.
pub fn encode<R: Rng + ?Sized>(codec: &ChannelCodec, y: f64, rng: &mut R) -> Result<Encoded> {
    if !y.is_finite() {
        return Err(Error::Input(format!("cannot encode non-finite value {y}")));
    }
    let clamped = y.abs() > codec.range;
    let y = y.clamp(-codec.range, codec.range);
    let top = codec.top_index();
    let t = (y + codec.range) / codec.step();
    let lower = (t.floor().max(0.0) as u64).min(top);
    let p = if lower == top { 0.0 } else { (t - lower as f64).clamp(0.0, 1.0) };
    let index = if rng.random::<f64>() < p { lower + 1 } else { lower };
    Ok(Encoded {
        code: Codeword::from_index(index, codec.bits),
        level: codec.level(index),
        clamped,
    })
}

/// Flips every bit independently with the channel's crossover probability.
pub fn transmit_bsc<R: Rng + ?Sized>(codec: &ChannelCodec, code: &Codeword, rng: &mut R) -> Codeword {
    Codeword {
        bits: code
            .bits
            .iter()
            .map(|&b| b ^ (rng.random::<f64>() < codec.crossover))
            .collect(),
    }
}

/// `-Z + sum_v b_v 2^v step`.
pub fn decode(codec: &ChannelCodec, code: &Codeword) -> Result<f64> {
    if code.len() != codec.bits as usize {
        return Err(Error::Input(format!(
            "codeword has {} bits, codec expects {}",
            code.len(),
            codec.bits
        )));
    }
    Ok(codec.level(code.index()))
}
