//! Rate coding at the network boundary: real-valued images in, spike streams
//! out, and spike counts back to a class decision.

use crate::oracle::SpikeTensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A real-valued image volume, row-major per channel like [`SpikeTensor`].
#[derive(Debug, Clone, PartialEq)]
pub struct RealTensor {
    channels: usize,
    height: usize,
    width: usize,
    values: Vec<f32>,
}

impl RealTensor {
    pub fn new(
        channels: usize,
        height: usize,
        width: usize,
        values: Vec<f32>,
    ) -> Result<RealTensor, CodecError> {
        let expected = channels * height * width;
        if values.len() != expected {
            return Err(CodecError::ValueCount { expected, got: values.len() });
        }
        Ok(RealTensor { channels, height, width, values })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> RealTensor {
        RealTensor {
            channels,
            height,
            width,
            values: vec![0.0; channels * height * width],
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn get(&self, channel: usize, row: usize, col: usize) -> f32 {
        self.values[(channel * self.height + row) * self.width + col]
    }

    pub fn set(&mut self, channel: usize, row: usize, col: usize, value: f32) {
        self.values[(channel * self.height + row) * self.width + col] = value;
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }
}

/// How pixel intensities become spike trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderMode {
    /// Per-pixel fixed-point accumulator: add the intensity each step, spike
    /// and subtract one on overflow. Exactly reproducible, seed-independent,
    /// and evenly spaced; `steps * value` spikes up to rounding.
    Deterministic,
    /// Independent spike per step with probability equal to the intensity.
    /// Seeded and reproducible.
    Bernoulli,
}

/// Full encoder configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub mode: EncoderMode,
    pub steps: usize,
    /// Used by [`EncoderMode::Bernoulli`] only.
    pub seed: u64,
}

#[derive(Debug, Error, PartialEq)]
pub enum CodecError {
    #[error("pixel (channel {channel}, row {row}, col {col}) is {value}; intensities must lie in [0, 1]")]
    ValueOutOfRange { channel: usize, row: usize, col: usize, value: f32 },
    #[error("tensor data holds {got} values, dims require {expected}")]
    ValueCount { expected: usize, got: usize },
    #[error("cannot classify an empty count vector")]
    EmptyCounts,
}

/// Fixed-point scale of the deterministic accumulator: intensities quantize
/// to multiples of 2^-32, so spike counts are exact integer arithmetic.
const ACCUM_ONE: u64 = 1 << 32;

/// Encodes an image into one spike volume per time step.
pub fn encode(image: &RealTensor, spec: &EncoderSpec) -> Result<Vec<SpikeTensor>, CodecError> {
    let (c, h, w) = image.dims();
    for channel in 0..c {
        for row in 0..h {
            for col in 0..w {
                let value = image.get(channel, row, col);
                if !(0.0..=1.0).contains(&value) {
                    return Err(CodecError::ValueOutOfRange { channel, row, col, value });
                }
            }
        }
    }
    let mut steps = vec![SpikeTensor::zeros(c, h, w); spec.steps];
    match spec.mode {
        EncoderMode::Deterministic => {
            let mut acc = vec![0u64; c * h * w];
            for volume in steps.iter_mut() {
                let mut i = 0;
                for channel in 0..c {
                    for row in 0..h {
                        for col in 0..w {
                            let level =
                                (image.get(channel, row, col) as f64 * ACCUM_ONE as f64).round()
                                    as u64;
                            acc[i] += level;
                            if acc[i] >= ACCUM_ONE {
                                acc[i] -= ACCUM_ONE;
                                volume.set(channel, row, col, true);
                            }
                            i += 1;
                        }
                    }
                }
            }
        }
        EncoderMode::Bernoulli => {
            // one generator, drawn in (step, channel, row, col) order; the
            // order is part of the format, it makes runs bit-reproducible
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            for volume in steps.iter_mut() {
                for channel in 0..c {
                    for row in 0..h {
                        for col in 0..w {
                            let p = image.get(channel, row, col) as f64;
                            let threshold = (p * 2f64.powi(64)).round() as u128;
                            let spike = (rng.next_u64() as u128) < threshold;
                            volume.set(channel, row, col, spike);
                        }
                    }
                }
            }
        }
    }
    Ok(steps)
}

/// Index of the largest count; ties go to the lowest index.
pub fn classify(counts: &[u64]) -> Result<usize, CodecError> {
    if counts.is_empty() {
        return Err(CodecError::EmptyCounts);
    }
    let mut best = 0usize;
    for (i, &count) in counts.iter().enumerate() {
        if count > counts[best] {
            best = i;
        }
    }
    Ok(best)
}
