//! Stream timing algebra shared by the simulator and the latency model.
//!
//! With back-to-back streaming, every stream in the network is position
//! synchronous with the source: the vector for input position `(r, c)` of
//! time step `t` occupies cycle `t * H0 * W0 + r * W0 + c + offset`, where
//! `(H0, W0)` is the network input grid and `offset` is a per-stream constant.
//! This module computes those constants. The simulator pads the faster stream
//! of every merge with a delay line so the constants of merging streams agree,
//! then checks the alignment dynamically against vector tags.

use crate::netmodel::{NetworkTopology, SkipEdge, StreamOrigin};
use serde::Serialize;

/// Per-stream cycle offsets for one accumulation-delay setting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamOffsets {
    /// Cycle offset at which each layer's input vectors arrive.
    pub arrival: Vec<u64>,
    /// Cycle offset of each layer's output grid: the output vector for
    /// coordinate `(x, y)` is produced at `x * W0 + y + production[layer]`
    /// within its step. Arrival at the consumer costs one more cycle.
    pub production: Vec<u64>,
    /// Cycle offset at which terminal-layer outputs reach the spike counters.
    pub sink_arrival: u64,
}

/// Offsets for every layer. The recursion follows the dataflow: a layer's
/// input arrives when its slowest source stream arrives, and its output for a
/// window is produced `accum_delay` cycles after the completing input vector,
/// having waited `(kh - 1)` source rows plus `(kw - 1)` source cells for the
/// window to fill.
pub fn stream_offsets(topo: &NetworkTopology, accum_delay: u32) -> StreamOffsets {
    let w0 = topo.layers[0].shape.in_width as u64;
    let n = topo.layer_count();
    let mut arrival = vec![0u64; n];
    let mut production = vec![0u64; n];
    for idx in 0..n {
        arrival[idx] = topo.sources[idx]
            .iter()
            .map(|src| match *src {
                StreamOrigin::NetworkInput => 0,
                StreamOrigin::Layer(s) => production[s] + 1,
            })
            .max()
            .expect("validated layers have at least one source");
        let shape = &topo.layers[idx].shape;
        production[idx] = arrival[idx]
            + (shape.kernel_height as u64 - 1) * w0
            + (shape.kernel_width as u64 - 1)
            + accum_delay as u64;
    }
    let sink_arrival = production[topo.terminal] + 1;
    StreamOffsets { arrival, production, sink_arrival }
}

/// Extra delay cells on the link from `source` to `dest`, beyond the one
/// cycle every link costs. Zero on the critical stream of each merge;
/// positive on streams that would otherwise arrive early (skip edges and
/// short branch chains).
pub fn link_extra_delay(
    offsets: &StreamOffsets,
    source: usize,
    dest_arrival: u64,
) -> u64 {
    dest_arrival - (offsets.production[source] + 1)
}

/// Delay cells needed by one declared skip edge.
pub fn skip_edge_delay(topo: &NetworkTopology, edge: &SkipEdge, accum_delay: u32) -> u64 {
    let offsets = stream_offsets(topo, accum_delay);
    link_extra_delay(&offsets, edge.source, offsets.arrival[edge.dest])
}

/// Closed-form cycle counts for a full run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatencyPrediction {
    pub time_steps: usize,
    /// Cycles from the first input vector to the last counted output spike.
    pub total_cycles: u64,
    /// Cycles until the first output vector reaches the counters.
    pub pipeline_fill_cycles: u64,
    /// Input cycles consumed per time step (the source grid size).
    pub input_cycles_per_step: u64,
    pub accum_delay: u32,
    /// Wall-clock seconds at the given clock.
    pub seconds: f64,
    pub clock_hz: f64,
}

/// Predicts the exact cycle counts the simulator will measure.
///
/// The source streams `steps * H0 * W0` vectors with no inter-step gap. The
/// terminal's last output leaves `sink_arrival` cycles after its final
/// window-completing input position, which sits at `(Ht - 1, Wt - 1)` of the
/// terminal's input grid during the final step.
pub fn predict_latency(
    topo: &NetworkTopology,
    steps: usize,
    accum_delay: u32,
    clock_hz: f64,
) -> LatencyPrediction {
    let s0 = &topo.layers[0].shape;
    let per_step = (s0.in_height * s0.in_width) as u64;
    let (total_cycles, pipeline_fill_cycles) = if steps == 0 {
        (0, 0)
    } else {
        let offsets = stream_offsets(topo, accum_delay);
        let st = &topo.layers[topo.terminal].shape;
        let w0 = s0.in_width as u64;
        let last_window = (st.in_height as u64 - 1) * w0 + (st.in_width as u64 - 1);
        let first_window =
            (st.kernel_height as u64 - 1) * w0 + (st.kernel_width as u64 - 1);
        let tail = offsets.arrival[topo.terminal] + accum_delay as u64 + 1;
        (
            (steps as u64 - 1) * per_step + last_window + tail + 1,
            first_window + tail + 1,
        )
    };
    LatencyPrediction {
        time_steps: steps,
        total_cycles,
        pipeline_fill_cycles,
        input_cycles_per_step: per_step,
        accum_delay,
        seconds: total_cycles as f64 / clock_hz,
        clock_hz,
    }
}
