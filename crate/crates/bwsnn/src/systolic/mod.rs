//! Cycle-accurate model of one layer module: the input buffer chain, the
//! processing-element crossbar, and the integrate-and-fire block.
//!
//! A module consumes at most one spike vector per cycle (one image position,
//! one bit per input channel) and emits at most one spike vector per cycle
//! (one output position, one bit per output channel). Vectors stream in
//! row-major position order; outputs leave in row-major order too, so modules
//! chain without reordering logic.

mod network;
mod timing;

pub use network::{
    run_network, run_network_observed, CycleEventSink, CycleStats, NoSink, RunOptions,
    RunOutcome, SimError,
};
pub use timing::{
    link_extra_delay, predict_latency, skip_edge_delay, stream_offsets, LatencyPrediction,
    StreamOffsets,
};

use crate::netmodel::{map_kernels, BinaryKernelSet, KernelError, LayerKind, LayerShape};
use crate::neuron::{NeuronBank, NeuronParams};
use std::collections::VecDeque;

// ── Processing elements ─────────────────────────────────────────────────────

/// Product of one stored weight bit and one spike bit.
///
/// The element emits the two-bit word `{not(w) and s, s}` read as two's
/// complement, where `w` is the stored bit (1 encodes weight +1, 0 encodes
/// weight -1) and `s` is the spike. That word equals `s * weight` exactly:
/// spike on a +1 weight gives `{0,1}` = +1, spike on a -1 weight gives
/// `{1,1}` = -2 + 1 = -1, and no spike gives `{0,0}` = 0 either way.
#[inline]
pub fn pe_product(stored_weight_bit: bool, spike: bool) -> i64 {
    let s = spike as i64;
    let high = (!stored_weight_bit && spike) as i64;
    s - 2 * high
}

/// The crossbar with weights baked in as stored bits. Cells without a weight
/// (off-diagonal cells of per-channel layers) are inert and contribute zero.
#[derive(Debug, Clone)]
pub struct PeArray {
    rows: usize,
    cols: usize,
    /// `Some(true)` stores +1, `Some(false)` stores -1, `None` is inert.
    bits: Vec<Option<bool>>,
}

impl PeArray {
    pub fn from_kernels(
        shape: &LayerShape,
        kernels: &BinaryKernelSet,
    ) -> Result<PeArray, KernelError> {
        let matrix = map_kernels(shape, kernels)?;
        let (rows, cols) = (matrix.rows(), matrix.cols());
        let mut bits = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                bits.push(matrix.get(r, c).map(|w| w == 1));
            }
        }
        Ok(PeArray { rows, cols, bits })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn stored_bit(&self, row: usize, col: usize) -> Option<bool> {
        self.bits[row * self.cols + col]
    }
}

// ── Buffer chain ────────────────────────────────────────────────────────────

/// The shift-register chain in front of the crossbar. Cell `d` holds the
/// vector that entered `d` shifts ago; the chain shifts only when a vector
/// actually arrives, so inter-row gaps in a producer's output stream do not
/// disturb window geometry.
#[derive(Debug, Clone)]
pub struct BufferChain {
    cells: VecDeque<Option<Vec<u8>>>,
    capacity: usize,
}

impl BufferChain {
    pub fn new(capacity: usize) -> BufferChain {
        assert!(capacity > 0);
        BufferChain {
            cells: std::iter::repeat_with(|| None).take(capacity).collect(),
            capacity,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, word: Vec<u8>) {
        self.cells.push_front(Some(word));
        self.cells.truncate(self.capacity);
    }

    /// The word that entered `delay` shifts ago; `None` before enough pushes.
    pub fn cell(&self, delay: usize) -> Option<&[u8]> {
        assert!(delay < self.capacity, "tap beyond chain length");
        self.cells[delay].as_deref()
    }
}

/// Chain cell feeding kernel position `(ky, kx)`. The newest cell holds the
/// window's bottom-right corner, so kernel cell `(ky, kx)` reads the vector
/// that entered `(kh - 1 - ky)` rows and `(kw - 1 - kx)` columns earlier.
pub fn tap_delay(shape: &LayerShape, ky: usize, kx: usize) -> usize {
    debug_assert!(ky < shape.kernel_height && kx < shape.kernel_width);
    (shape.kernel_height - 1 - ky) * shape.in_width + (shape.kernel_width - 1 - kx)
}

// ── Layer module ────────────────────────────────────────────────────────────

/// One spike vector on a stream: the spike bits for every channel at one
/// image position of one time step. Tags carry the position so stream
/// alignment is checked, not assumed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpikeVector {
    pub step: u64,
    pub row: usize,
    pub col: usize,
    pub bits: Vec<u8>,
}

/// A weighted-sum vector waiting out the crossbar accumulation latency.
#[derive(Debug, Clone)]
struct PendingSums {
    step: u64,
    row: usize,
    col: usize,
    sums: Vec<i64>,
    countdown: u32,
}

/// Running totals a module keeps about its own traffic.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ModuleStats {
    /// Input vectors consumed (memory words fetched).
    pub fetched: u64,
    /// Output vectors produced.
    pub produced: u64,
}

/// Cycle-accurate state of one layer.
#[derive(Debug, Clone)]
pub struct LayerModule {
    shape: LayerShape,
    chain: BufferChain,
    pe: PeArray,
    neurons: NeuronBank,
    pending: VecDeque<PendingSums>,
    accum_delay: u32,
    /// Time step currently streaming in.
    step_index: u64,
    /// Vectors consumed within the current step, in 0..=positions.
    vectors_this_step: usize,
    stats: ModuleStats,
}

impl LayerModule {
    pub fn new(
        kind: LayerKind,
        shape: &LayerShape,
        kernels: &BinaryKernelSet,
        neuron: &NeuronParams,
        accum_delay: u32,
    ) -> Result<LayerModule, KernelError> {
        if kernels.is_per_channel() != kind.per_channel() {
            return Err(KernelError::ReprMismatch {
                kind,
                per_channel_needed: kind.per_channel(),
            });
        }
        let pe = PeArray::from_kernels(shape, kernels)?;
        Ok(LayerModule {
            shape: *shape,
            chain: BufferChain::new(shape.chain_cells()),
            pe,
            neurons: NeuronBank::new(neuron, shape.out_height, shape.out_width),
            pending: VecDeque::new(),
            accum_delay,
            step_index: 0,
            vectors_this_step: 0,
            stats: ModuleStats::default(),
        })
    }

    pub fn shape(&self) -> &LayerShape {
        &self.shape
    }

    pub fn stats(&self) -> ModuleStats {
        self.stats
    }

    /// True while a weighted sum is still waiting in the accumulation stage.
    pub fn busy(&self) -> bool {
        !self.pending.is_empty()
    }

    /// Advances one clock cycle: consumes at most one input vector, emits at
    /// most one output vector.
    ///
    /// `layer` only labels errors. Position bookkeeping is internal; the
    /// input tags must agree with it, and a full step (`in_height * in_width`
    /// vectors) must stream before the next step's tags appear.
    pub fn step(
        &mut self,
        layer: usize,
        input: Option<SpikeVector>,
    ) -> Result<Option<SpikeVector>, SimError> {
        if let Some(v) = input {
            self.consume(layer, v)?;
        }
        let out = match self.pending.front() {
            Some(front) if front.countdown == 0 => {
                let p = self.pending.pop_front().expect("front exists");
                let spikes = self.neurons.update_position(p.row, p.col, &p.sums);
                self.stats.produced += 1;
                Some(SpikeVector { step: p.step, row: p.row, col: p.col, bits: spikes })
            }
            _ => None,
        };
        for p in &mut self.pending {
            p.countdown -= 1;
        }
        Ok(out)
    }

    fn consume(&mut self, layer: usize, v: SpikeVector) -> Result<(), SimError> {
        let capacity = self.shape.input_positions();
        if v.step == self.step_index && self.vectors_this_step == capacity {
            return Err(SimError::StreamOverrun {
                layer,
                capacity,
                step: self.step_index,
            });
        }
        if v.step == self.step_index + 1 && self.vectors_this_step == capacity {
            self.step_index += 1;
            self.vectors_this_step = 0;
        }
        let expected_row = self.vectors_this_step / self.shape.in_width;
        let expected_col = self.vectors_this_step % self.shape.in_width;
        if v.step != self.step_index || v.row != expected_row || v.col != expected_col {
            return Err(SimError::StreamMisaligned {
                layer,
                expected: (self.step_index, expected_row, expected_col),
                got: (v.step, v.row, v.col),
            });
        }
        if v.bits.len() != self.shape.in_channels {
            return Err(SimError::WordWidth {
                layer,
                expected: self.shape.in_channels,
                got: v.bits.len(),
            });
        }
        self.chain.push(v.bits);
        self.vectors_this_step += 1;
        self.stats.fetched += 1;
        if self.shape.emits_at(expected_row, expected_col) {
            let (out_row, out_col) = self.shape.output_coord(expected_row, expected_col);
            let sums = self.window_sums();
            self.pending.push_back(PendingSums {
                step: self.step_index,
                row: out_row,
                col: out_col,
                sums,
                countdown: self.accum_delay,
            });
        }
        Ok(())
    }

    /// Weighted sums for the window whose bottom-right corner just entered.
    /// Every crossbar row strip reads one chain tap; column strips accumulate
    /// per output channel.
    fn window_sums(&self) -> Vec<i64> {
        let s = &self.shape;
        let mut sums = vec![0i64; s.out_channels];
        for ky in 0..s.kernel_height {
            for kx in 0..s.kernel_width {
                let word = self
                    .chain
                    .cell(tap_delay(s, ky, kx))
                    .expect("chain is full once windows complete");
                for (c, &spike) in word.iter().enumerate() {
                    if spike == 0 {
                        continue;
                    }
                    let row = kx * s.in_channels + c;
                    for (k, sum) in sums.iter_mut().enumerate() {
                        if let Some(bit) = self.pe.stored_bit(row, ky * s.out_channels + k) {
                            *sum += pe_product(bit, true);
                        }
                    }
                }
            }
        }
        sums
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{BinaryKernelSet, LayerKind, LayerShape};
    use crate::neuron::{NeuronParams, ResetMode};
    use crate::oracle::{conv2d_ref, SpikeTensor};
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pe_product_equals_signed_multiply() {
        // all four (weight, spike) combinations
        for (bit, weight) in [(true, 1i64), (false, -1i64)] {
            for (spike, s) in [(true, 1i64), (false, 0i64)] {
                assert_eq!(pe_product(bit, spike), weight * s, "bit={bit} spike={spike}");
            }
        }
    }

    #[test]
    fn chain_shifts_and_taps() {
        let mut chain = BufferChain::new(3);
        assert_eq!(chain.cell(0), None);
        chain.push(vec![1]);
        chain.push(vec![2]);
        assert_eq!(chain.cell(0), Some(&[2u8][..]));
        assert_eq!(chain.cell(1), Some(&[1u8][..]));
        assert_eq!(chain.cell(2), None);
        chain.push(vec![3]);
        chain.push(vec![4]);
        // oldest entry fell off
        assert_eq!(chain.cell(2), Some(&[2u8][..]));
    }

    #[test]
    fn tap_delays_cover_one_window() {
        // kernel 2x3 over width-5 input: taps at the newest cell, the two to
        // its left, and the matching cells one image row up
        let shape = LayerShape::new(1, 4, 5, 2, 3, 1).unwrap();
        let mut delays: Vec<usize> = (0..2)
            .flat_map(|ky| (0..3).map(move |kx| tap_delay(&shape, ky, kx)))
            .collect();
        delays.sort_unstable();
        assert_eq!(delays, vec![0, 1, 2, 5, 6, 7]);
        // bottom-right kernel cell reads the newest vector
        assert_eq!(tap_delay(&shape, 1, 2), 0);
        // top-left kernel cell reads the oldest tap
        assert_eq!(tap_delay(&shape, 0, 0), 7);
        assert_eq!(shape.chain_cells(), 8);
    }

    fn drive_layer(
        module: &mut LayerModule,
        input: &SpikeTensor,
        step: u64,
    ) -> Vec<(u64, usize, usize, Vec<u8>)> {
        let (_, h, w) = input.dims();
        let mut out = Vec::new();
        for r in 0..h {
            for c in 0..w {
                let v = SpikeVector { step, row: r, col: c, bits: input.column_word(r, c) };
                if let Some(o) = module.step(0, Some(v)).unwrap() {
                    out.push((o.step, o.row, o.col, o.bits));
                }
            }
        }
        // drain the accumulation stage
        while module.busy() {
            if let Some(o) = module.step(0, None).unwrap() {
                out.push((o.step, o.row, o.col, o.bits));
            }
        }
        out
    }

    #[test]
    fn single_layer_matches_reference_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for trial in 0..30 {
            let c = rng.random_range(1..4usize);
            let kh = rng.random_range(1..4usize);
            let kw = rng.random_range(1..4usize);
            let h = kh + rng.random_range(0..4usize);
            let w = kw + rng.random_range(0..4usize);
            let k = rng.random_range(1..5usize);
            let shape = LayerShape::new(c, h, w, kh, kw, k).unwrap();
            let weights: Vec<i8> = (0..k * c * kh * kw)
                .map(|_| if rng.random_bool(0.5) { 1 } else { -1 })
                .collect();
            let kernels = BinaryKernelSet::dense(k, c, kh, kw, weights).unwrap();
            // threshold 1: spike exactly when the window sum is positive,
            // making spikes a direct readout of the sums for one step
            let neuron = NeuronParams::uniform(k, 1, 0, ResetMode::ToZero);
            let mut module =
                LayerModule::new(LayerKind::Conv, &shape, &kernels, &neuron, 1).unwrap();

            let mut input = SpikeTensor::zeros(c, h, w);
            for ch in 0..c {
                for r in 0..h {
                    for col in 0..w {
                        input.set(ch, r, col, rng.random_bool(0.5));
                    }
                }
            }
            let produced = drive_layer(&mut module, &input, 0);
            let expect = conv2d_ref(&input, &kernels).unwrap();

            assert_eq!(produced.len(), shape.output_positions(), "trial {trial}");
            let mut n = 0;
            for x in 0..shape.out_height {
                for y in 0..shape.out_width {
                    let (step, row, col, ref bits) = produced[n];
                    assert_eq!((step, row, col), (0, x, y), "row-major output order");
                    for (ch, &b) in bits.iter().enumerate() {
                        let want = (expect.get(ch, x, y) >= 1) as u8;
                        assert_eq!(b, want, "trial {trial} pos ({x},{y}) ch {ch}");
                    }
                    n += 1;
                }
            }
        }
    }

    #[test]
    fn overrun_is_reported_not_wrapped() {
        let shape = LayerShape::new(1, 2, 2, 1, 1, 1).unwrap();
        let kernels = BinaryKernelSet::dense(1, 1, 1, 1, vec![1]).unwrap();
        let neuron = NeuronParams::uniform(1, 1, 0, ResetMode::Subtract);
        let mut module = LayerModule::new(LayerKind::Conv, &shape, &kernels, &neuron, 0).unwrap();
        for (r, c) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            let v = SpikeVector { step: 0, row: r, col: c, bits: vec![1] };
            module.step(0, Some(v)).unwrap();
        }
        // a fifth vector still tagged step 0 overruns the stream
        let extra = SpikeVector { step: 0, row: 0, col: 0, bits: vec![1] };
        assert!(matches!(
            module.step(0, Some(extra)),
            Err(SimError::StreamOverrun { layer: 0, capacity: 4, .. })
        ));
        // the same vector tagged step 1 is a legal new step
        let next = SpikeVector { step: 1, row: 0, col: 0, bits: vec![1] };
        assert!(module.step(0, Some(next)).is_ok());
    }

    #[test]
    fn misaligned_tag_is_rejected() {
        let shape = LayerShape::new(1, 2, 2, 1, 1, 1).unwrap();
        let kernels = BinaryKernelSet::dense(1, 1, 1, 1, vec![1]).unwrap();
        let neuron = NeuronParams::uniform(1, 1, 0, ResetMode::Subtract);
        let mut module = LayerModule::new(LayerKind::Conv, &shape, &kernels, &neuron, 0).unwrap();
        let v = SpikeVector { step: 0, row: 1, col: 0, bits: vec![1] };
        assert!(matches!(
            module.step(0, Some(v)),
            Err(SimError::StreamMisaligned { .. })
        ));
    }

    #[test]
    fn accumulation_delay_shifts_output_cycles() {
        let shape = LayerShape::new(1, 1, 2, 1, 1, 1).unwrap();
        let kernels = BinaryKernelSet::dense(1, 1, 1, 1, vec![1]).unwrap();
        let neuron = NeuronParams::uniform(1, 1, 0, ResetMode::Subtract);
        for delay in 0..4u32 {
            let mut module =
                LayerModule::new(LayerKind::Conv, &shape, &kernels, &neuron, delay).unwrap();
            let v = SpikeVector { step: 0, row: 0, col: 0, bits: vec![1] };
            let mut cycles_until_output = 0u32;
            let mut out = module.step(0, Some(v)).unwrap();
            while out.is_none() {
                cycles_until_output += 1;
                out = module.step(0, None).unwrap();
            }
            assert_eq!(cycles_until_output, delay);
        }
    }
}
