//! Integrate-and-fire neuron dynamics.
//!
//! Every accumulator in this codebase funnels through [`if_update`]: the
//! reference evaluator and the cycle-accurate simulator share it, so any
//! divergence between the two is in dataflow, never in neuron arithmetic.

use serde::{Deserialize, Serialize};

/// What happens to the membrane potential when a neuron fires.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResetMode {
    /// Subtract the threshold, keeping the residual above it.
    Subtract,
    /// Clear the potential to zero, discarding the residual.
    ToZero,
}

/// A scalar broadcast to every output channel, or one value per channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Broadcast<T> {
    Scalar(T),
    PerChannel(Vec<T>),
}

impl<T: Copy> Broadcast<T> {
    /// Expands to exactly `n` values. `None` if a per-channel list has the
    /// wrong length.
    pub fn resolve(&self, n: usize) -> Option<Vec<T>> {
        match self {
            Broadcast::Scalar(v) => Some(vec![*v; n]),
            Broadcast::PerChannel(vs) if vs.len() == n => Some(vs.clone()),
            Broadcast::PerChannel(_) => None,
        }
    }
}

impl<T> Default for Broadcast<T>
where
    T: Default,
{
    fn default() -> Self {
        Broadcast::Scalar(T::default())
    }
}

/// Per-layer neuron configuration, resolved to one entry per output channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeuronParams {
    /// Firing thresholds, one per output channel. Must be positive.
    pub thresholds: Vec<i64>,
    /// Constant added to the potential every update, one per output channel.
    pub biases: Vec<i64>,
    /// Membrane potential before the first time step.
    pub initial_potential: i64,
    pub reset: ResetMode,
}

impl NeuronParams {
    /// Uniform parameters across `channels` outputs.
    pub fn uniform(channels: usize, threshold: i64, bias: i64, reset: ResetMode) -> Self {
        NeuronParams {
            thresholds: vec![threshold; channels],
            biases: vec![bias; channels],
            initial_potential: 0,
            reset,
        }
    }

    pub fn channels(&self) -> usize {
        self.thresholds.len()
    }
}

/// One synchronous update of a single integrate-and-fire neuron.
///
/// Adds `weighted_sum + bias` to the potential, emits a spike when the result
/// reaches `threshold`, and applies the reset. No leak, and at most one spike
/// per call. All arithmetic is `i64`; with binary weights the potential is
/// bounded by `steps * (fan_in + |bias|) + threshold`, so overflow would need
/// runs around 2^60 step-updates and is not reachable in practice.
#[inline]
pub fn if_update(
    potential: &mut i64,
    weighted_sum: i64,
    bias: i64,
    threshold: i64,
    reset: ResetMode,
) -> bool {
    debug_assert!(threshold > 0, "firing threshold must be positive");
    let v = *potential + weighted_sum + bias;
    if v >= threshold {
        *potential = match reset {
            ResetMode::Subtract => v - threshold,
            ResetMode::ToZero => 0,
        };
        true
    } else {
        *potential = v;
        false
    }
}

/// The potentials of one layer's neuron grid, indexed `(channel, row, col)`.
#[derive(Debug, Clone)]
pub struct NeuronBank {
    channels: usize,
    width: usize,
    potentials: Vec<i64>,
    thresholds: Vec<i64>,
    biases: Vec<i64>,
    reset: ResetMode,
}

impl NeuronBank {
    /// A grid of `height * width` neurons per channel, all starting at the
    /// configured initial potential.
    pub fn new(params: &NeuronParams, height: usize, width: usize) -> Self {
        let channels = params.channels();
        NeuronBank {
            channels,
            width,
            potentials: vec![params.initial_potential; channels * height * width],
            thresholds: params.thresholds.clone(),
            biases: params.biases.clone(),
            reset: params.reset,
        }
    }

    /// Updates every channel at one spatial position with its weighted sum.
    /// Returns the spike bit per channel.
    pub fn update_position(&mut self, row: usize, col: usize, sums: &[i64]) -> Vec<u8> {
        debug_assert_eq!(sums.len(), self.channels);
        let pos = row * self.width + col;
        let per_channel = self.potentials.len() / self.channels;
        let mut spikes = vec![0u8; self.channels];
        for k in 0..self.channels {
            let idx = k * per_channel + pos;
            let fired = if_update(
                &mut self.potentials[idx],
                sums[k],
                self.biases[k],
                self.thresholds[k],
                self.reset,
            );
            spikes[k] = fired as u8;
        }
        spikes
    }

    pub fn potential(&self, channel: usize, row: usize, col: usize) -> i64 {
        let per_channel = self.potentials.len() / self.channels;
        self.potentials[channel * per_channel + row * self.width + col]
    }
}
