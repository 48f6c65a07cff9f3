//! Reference evaluator: the plain-loop definition of what the hardware must
//! compute. No pipelining, no buffering, no cycle accounting; one layer after
//! another, one time step after another. The cycle-accurate simulator is
//! checked bit-for-bit against this module.

use crate::netmodel::{BinaryKernelSet, NetworkGraph, StreamOrigin};
use crate::neuron::NeuronBank;
use serde::{Deserialize, Serialize};
use thiserror::Error;

// ── Tensors ─────────────────────────────────────────────────────────────────

/// A binary spike volume, one bit per (channel, row, col).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpikeTensor {
    channels: usize,
    height: usize,
    width: usize,
    /// Row-major per channel: index `(c * height + row) * width + col`.
    bits: Vec<u8>,
}

impl SpikeTensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> SpikeTensor {
        SpikeTensor {
            channels,
            height,
            width,
            bits: vec![0; channels * height * width],
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, channel: usize, row: usize, col: usize) -> bool {
        self.bits[self.index(channel, row, col)] != 0
    }

    pub fn set(&mut self, channel: usize, row: usize, col: usize, value: bool) {
        let i = self.index(channel, row, col);
        self.bits[i] = value as u8;
    }

    fn index(&self, channel: usize, row: usize, col: usize) -> usize {
        assert!(
            channel < self.channels && row < self.height && col < self.width,
            "spike index out of range"
        );
        (channel * self.height + row) * self.width + col
    }

    /// The spike word entering at stream position `(row, col)`: one bit per
    /// channel, channel 0 first.
    pub fn column_word(&self, row: usize, col: usize) -> Vec<u8> {
        (0..self.channels)
            .map(|c| self.get(c, row, col) as u8)
            .collect()
    }

    pub fn count_ones(&self, channel: usize) -> u64 {
        let per = self.height * self.width;
        self.bits[channel * per..(channel + 1) * per]
            .iter()
            .map(|&b| b as u64)
            .sum()
    }

    /// Stacks tensors along the channel axis, first input first. All inputs
    /// must share height and width.
    pub fn concat_channels(parts: &[&SpikeTensor]) -> SpikeTensor {
        assert!(!parts.is_empty());
        let (h, w) = (parts[0].height, parts[0].width);
        assert!(
            parts.iter().all(|p| p.height == h && p.width == w),
            "channel concat requires equal spatial dims"
        );
        let channels = parts.iter().map(|p| p.channels).sum();
        let mut bits = Vec::with_capacity(channels * h * w);
        for p in parts {
            bits.extend_from_slice(&p.bits);
        }
        SpikeTensor { channels, height: h, width: w, bits }
    }
}

/// Integer accumulator volume produced by a layer before the neurons.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SumTensor {
    channels: usize,
    height: usize,
    width: usize,
    values: Vec<i64>,
}

impl SumTensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> SumTensor {
        SumTensor {
            channels,
            height,
            width,
            values: vec![0; channels * height * width],
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn get(&self, channel: usize, row: usize, col: usize) -> i64 {
        self.values[(channel * self.height + row) * self.width + col]
    }

    pub fn add(&mut self, channel: usize, row: usize, col: usize, delta: i64) {
        self.values[(channel * self.height + row) * self.width + col] += delta;
    }

    /// All channel values at one position, channel 0 first.
    pub fn at_position(&self, row: usize, col: usize) -> Vec<i64> {
        (0..self.channels).map(|c| self.get(c, row, col)).collect()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("operation expects {expected} kernels, got {got}")]
    KindMismatch { expected: &'static str, got: &'static str },
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("input step {step} is {got:?}, network expects {expected:?}")]
    StepDims {
        step: usize,
        expected: (usize, usize, usize),
        got: (usize, usize, usize),
    },
}

fn check_conv_dims(
    input: &SpikeTensor,
    kernels: &BinaryKernelSet,
) -> Result<(usize, usize), OracleError> {
    if kernels.in_channels() != input.channels() {
        return Err(OracleError::DimMismatch(format!(
            "kernels expect {} input channels, tensor has {}",
            kernels.in_channels(),
            input.channels()
        )));
    }
    if kernels.kernel_height() > input.height() || kernels.kernel_width() > input.width() {
        return Err(OracleError::DimMismatch(format!(
            "kernel {}x{} does not fit input {}x{}",
            kernels.kernel_height(),
            kernels.kernel_width(),
            input.height(),
            input.width()
        )));
    }
    Ok((
        input.height() - kernels.kernel_height() + 1,
        input.width() - kernels.kernel_width() + 1,
    ))
}

/// Dense convolution, stride 1, no padding:
/// `out[k][x][y] = sum over (c, i, j) of weight[k][c][i][j] * in[c][x+i][y+j]`.
pub fn conv2d_ref(
    input: &SpikeTensor,
    kernels: &BinaryKernelSet,
) -> Result<SumTensor, OracleError> {
    if kernels.is_per_channel() {
        return Err(OracleError::KindMismatch { expected: "dense", got: "per-channel" });
    }
    let (out_h, out_w) = check_conv_dims(input, kernels)?;
    let mut out = SumTensor::zeros(kernels.out_channels(), out_h, out_w);
    for k in 0..kernels.out_channels() {
        for x in 0..out_h {
            for y in 0..out_w {
                let mut acc = 0i64;
                for c in 0..kernels.in_channels() {
                    for i in 0..kernels.kernel_height() {
                        for j in 0..kernels.kernel_width() {
                            if input.get(c, x + i, y + j) {
                                acc += kernels.get(k, c, i, j).expect("dense kernel") as i64;
                            }
                        }
                    }
                }
                out.add(k, x, y, acc);
            }
        }
    }
    Ok(out)
}

/// Per-channel convolution: channel k of the output reads only channel k of
/// the input.
pub fn depthwise_ref(
    input: &SpikeTensor,
    kernels: &BinaryKernelSet,
) -> Result<SumTensor, OracleError> {
    if !kernels.is_per_channel() {
        return Err(OracleError::KindMismatch { expected: "per-channel", got: "dense" });
    }
    let (out_h, out_w) = check_conv_dims(input, kernels)?;
    let mut out = SumTensor::zeros(kernels.out_channels(), out_h, out_w);
    for k in 0..kernels.out_channels() {
        for x in 0..out_h {
            for y in 0..out_w {
                let mut acc = 0i64;
                for i in 0..kernels.kernel_height() {
                    for j in 0..kernels.kernel_width() {
                        if input.get(k, x + i, y + j) {
                            acc += kernels.get(k, k, i, j).expect("diagonal weight") as i64;
                        }
                    }
                }
                out.add(k, x, y, acc);
            }
        }
    }
    Ok(out)
}

/// Position-wise dense channel mixing; a convolution with a 1x1 kernel.
pub fn fc_ref(input: &SpikeTensor, kernels: &BinaryKernelSet) -> Result<SumTensor, OracleError> {
    if kernels.kernel_height() != 1 || kernels.kernel_width() != 1 {
        return Err(OracleError::DimMismatch(format!(
            "fully connected kernels must be 1x1, got {}x{}",
            kernels.kernel_height(),
            kernels.kernel_width()
        )));
    }
    conv2d_ref(input, kernels)
}

/// Window summation per channel: depthwise with all-ones kernels. The
/// averaging divisor is folded into the threshold of the consuming layer.
pub fn avgpool_ref(
    input: &SpikeTensor,
    kernels: &BinaryKernelSet,
) -> Result<SumTensor, OracleError> {
    if !kernels.all_ones() {
        return Err(OracleError::KindMismatch {
            expected: "all-ones per-channel",
            got: "mixed-sign",
        });
    }
    depthwise_ref(input, kernels)
}

/// Accumulator volume for one layer, dispatched on its kind.
pub fn layer_sums_ref(
    kind: crate::netmodel::LayerKind,
    input: &SpikeTensor,
    kernels: &BinaryKernelSet,
) -> Result<SumTensor, OracleError> {
    use crate::netmodel::LayerKind;
    match kind {
        LayerKind::Conv => conv2d_ref(input, kernels),
        LayerKind::Depthwise => depthwise_ref(input, kernels),
        LayerKind::FullyConnected => fc_ref(input, kernels),
        LayerKind::AvgPool => avgpool_ref(input, kernels),
    }
}

/// Everything the reference evaluation produces: per-layer per-step spike
/// volumes and the terminal layer's per-channel spike totals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefOutput {
    /// `trace[layer][step]` is that layer's spike output volume.
    pub trace: Vec<Vec<SpikeTensor>>,
    /// Spike totals per output channel of the terminal layer.
    pub counts: Vec<u64>,
}

/// Runs the whole network step by step. Within a step every layer evaluates
/// in index order, reading this step's outputs of its sources; membrane
/// potentials persist across steps.
pub fn snn_forward_ref(
    graph: &NetworkGraph,
    input_steps: &[SpikeTensor],
) -> Result<RefOutput, OracleError> {
    let topo = &graph.topology;
    let expected = topo.input_dims();
    for (step, t) in input_steps.iter().enumerate() {
        if t.dims() != expected {
            return Err(OracleError::StepDims { step, expected, got: t.dims() });
        }
    }

    let mut banks: Vec<NeuronBank> = topo
        .layers
        .iter()
        .map(|node| {
            NeuronBank::new(&node.neuron, node.shape.out_height, node.shape.out_width)
        })
        .collect();
    let mut trace: Vec<Vec<SpikeTensor>> = vec![Vec::new(); topo.layer_count()];
    let mut counts = vec![0u64; topo.output_channels()];

    for input in input_steps {
        let mut outputs: Vec<Option<SpikeTensor>> = vec![None; topo.layer_count()];
        for (idx, node) in topo.layers.iter().enumerate() {
            let parts: Vec<&SpikeTensor> = topo.sources[idx]
                .iter()
                .map(|src| match *src {
                    StreamOrigin::NetworkInput => input,
                    StreamOrigin::Layer(s) => {
                        outputs[s].as_ref().expect("sources precede consumers")
                    }
                })
                .collect();
            let combined;
            let layer_input = if parts.len() == 1 {
                parts[0]
            } else {
                combined = SpikeTensor::concat_channels(&parts);
                &combined
            };
            let sums = layer_sums_ref(node.kind, layer_input, &graph.kernels[idx])?;
            let shape = &node.shape;
            let mut spikes = SpikeTensor::zeros(
                shape.out_channels,
                shape.out_height,
                shape.out_width,
            );
            for x in 0..shape.out_height {
                for y in 0..shape.out_width {
                    let fired = banks[idx].update_position(x, y, &sums.at_position(x, y));
                    for (k, &f) in fired.iter().enumerate() {
                        if f != 0 {
                            spikes.set(k, x, y, true);
                        }
                    }
                }
            }
            if idx == topo.terminal {
                for (k, count) in counts.iter_mut().enumerate() {
                    *count += spikes.count_ones(k);
                }
            }
            trace[idx].push(spikes.clone());
            outputs[idx] = Some(spikes);
        }
    }
    Ok(RefOutput { trace, counts })
}
