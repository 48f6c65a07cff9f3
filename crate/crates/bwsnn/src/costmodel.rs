//! Silicon area and latency estimates for a network topology.
//!
//! Area uses three per-structure coefficients (square micrometers in a 28 nm
//! node): 210 per crossbar cell, 15 per buffered spike bit in a shift chain,
//! and 40 per word of a layer's output-side local buffer. Delay lines that
//! align merging streams are costed at the chain rate. Latency comes from the
//! same stream-offset algebra the simulator runs on, so predictions match
//! measured cycle counts exactly, not approximately.

use crate::netmodel::{LayerKind, LayerShape, NetworkTopology, StreamOrigin};
use crate::systolic::{link_extra_delay, predict_latency, stream_offsets, LatencyPrediction};
use serde::Serialize;
use thiserror::Error;

/// Area of one processing element (one stored weight cell).
pub const CROSSBAR_UM2_PER_CELL: u64 = 210;
/// Area of one buffered spike bit in a shift chain or delay line.
pub const CHAIN_UM2_PER_BIT: u64 = 15;
/// Area of one output word in a layer's local buffer.
pub const LOCAL_UM2_PER_WORD: u64 = 40;
/// Process node the coefficients are calibrated for.
pub const BASE_NODE_NM: f64 = 28.0;

/// Area of one layer module, split by structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LayerArea {
    /// Crossbar: `in_channels * out_channels` cells per kernel position.
    pub crossbar_um2: u64,
    /// Input buffer chain: `chain_cells` words of `in_channels` bits.
    pub chain_um2: u64,
    /// Local buffer holding one output word per output position.
    pub local_buffer_um2: u64,
}

impl LayerArea {
    pub fn total_um2(&self) -> u64 {
        self.crossbar_um2 + self.chain_um2 + self.local_buffer_um2
    }
}

/// Area of one layer module. The crossbar is counted at full
/// `in x out` density for every kind; per-channel layers keep their inert
/// cells, trading area for a uniform tile.
pub fn layer_area(shape: &LayerShape) -> LayerArea {
    let cells = shape.in_channels
        * shape.out_channels
        * shape.kernel_height
        * shape.kernel_width;
    LayerArea {
        crossbar_um2: CROSSBAR_UM2_PER_CELL * cells as u64,
        chain_um2: CHAIN_UM2_PER_BIT * (shape.in_channels * shape.chain_cells()) as u64,
        local_buffer_um2: LOCAL_UM2_PER_WORD
            * (shape.out_channels * shape.output_positions()) as u64,
    }
}

/// Options shared by the area and latency models.
#[derive(Debug, Clone, Copy)]
pub struct CostOptions {
    /// Accumulation latency assumed per layer; sizes delay lines and the
    /// latency prediction.
    pub accum_delay: u32,
    pub clock_hz: f64,
    /// Scale totals to another process node, area factor `(node / 28)^2`.
    pub node_nm: Option<f64>,
}

impl Default for CostOptions {
    fn default() -> CostOptions {
        CostOptions { accum_delay: 1, clock_hz: 100e6, node_nm: None }
    }
}

/// One row of the per-layer area table.
#[derive(Debug, Clone, Serialize)]
pub struct LayerAreaRow {
    pub layer: usize,
    pub kind: LayerKind,
    pub crossbar_um2: u64,
    pub chain_um2: u64,
    pub local_buffer_um2: u64,
    pub total_um2: u64,
}

/// Totals rescaled to a different process node.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ScaledArea {
    pub node_nm: f64,
    pub area_factor: f64,
    pub total_um2: f64,
    pub total_mm2: f64,
}

/// Full area report for a topology.
#[derive(Debug, Clone, Serialize)]
pub struct CostReport {
    pub per_layer: Vec<LayerAreaRow>,
    /// Delay lines that align skip edges and short branch chains.
    pub delay_line_um2: u64,
    pub total_um2: u64,
    pub total_mm2: f64,
    /// Present when a target node was requested.
    pub scaled: Option<ScaledArea>,
    /// Reserved for a future energy model; always `None` today.
    pub energy_pj: Option<f64>,
}

/// Area of the whole network: every layer module plus the delay lines the
/// dataflow needs at the configured accumulation latency.
pub fn network_area(topo: &NetworkTopology, opts: &CostOptions) -> CostReport {
    let per_layer: Vec<LayerAreaRow> = topo
        .layers
        .iter()
        .enumerate()
        .map(|(layer, node)| {
            let a = layer_area(&node.shape);
            LayerAreaRow {
                layer,
                kind: node.kind,
                crossbar_um2: a.crossbar_um2,
                chain_um2: a.chain_um2,
                local_buffer_um2: a.local_buffer_um2,
                total_um2: a.total_um2(),
            }
        })
        .collect();

    let offsets = stream_offsets(topo, opts.accum_delay);
    let mut delay_line_um2 = 0u64;
    for (dest, srcs) in topo.sources.iter().enumerate() {
        for src in srcs {
            if let StreamOrigin::Layer(s) = *src {
                let cells = link_extra_delay(&offsets, s, offsets.arrival[dest]);
                let word_bits = topo.layers[s].shape.out_channels as u64;
                delay_line_um2 += CHAIN_UM2_PER_BIT * word_bits * cells;
            }
        }
    }

    let total_um2 =
        per_layer.iter().map(|r| r.total_um2).sum::<u64>() + delay_line_um2;
    let scaled = opts.node_nm.map(|node| {
        let area_factor = (node / BASE_NODE_NM).powi(2);
        let scaled_um2 = total_um2 as f64 * area_factor;
        ScaledArea {
            node_nm: node,
            area_factor,
            total_um2: scaled_um2,
            total_mm2: scaled_um2 / 1e6,
        }
    });
    CostReport {
        per_layer,
        delay_line_um2,
        total_um2,
        total_mm2: total_um2 as f64 / 1e6,
        scaled,
        energy_pj: None,
    }
}

/// Cycle and wall-clock prediction for a run of `steps` time steps.
pub fn latency_model(
    topo: &NetworkTopology,
    steps: usize,
    opts: &CostOptions,
) -> LatencyPrediction {
    predict_latency(topo, steps, opts.accum_delay, opts.clock_hz)
}

// ── Design-space sweep ──────────────────────────────────────────────────────

/// A family of straight convolutional stacks to size against a budget:
/// every combination of `depths` and `hidden_channels`, all layers using the
/// same kernel, ending in `classes` output channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepFamily {
    pub input_channels: usize,
    pub input_height: usize,
    pub input_width: usize,
    pub kernel_height: usize,
    pub kernel_width: usize,
    pub depths: Vec<usize>,
    pub hidden_channels: Vec<usize>,
    pub classes: usize,
}

/// One sized candidate.
#[derive(Debug, Clone, Serialize)]
pub struct SweepEntry {
    /// `d{depth}-c{hidden}`; unique within a family.
    pub label: String,
    pub depth: usize,
    pub hidden_channels: usize,
    pub total_um2: u64,
    pub total_mm2: f64,
    pub input_cycles_per_step: u64,
    pub pipeline_fill_cycles: u64,
    /// Set when a budget was given.
    pub fits_budget: Option<bool>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SweepError {
    #[error("sweep family enumerates no candidates (empty depths or hidden_channels)")]
    EmptyFamily,
    #[error("no candidate in the family fits its input: every stack shrinks {0}x{1} away")]
    NoFeasibleCandidate(usize, usize),
}

/// Sizes every candidate in the family, dropping stacks whose kernels do not
/// fit the input. Entries sort by ascending area, then label, so equal-area
/// candidates keep a stable order.
pub fn sweep(
    family: &SweepFamily,
    budget_um2: Option<u64>,
    opts: &CostOptions,
) -> Result<Vec<SweepEntry>, SweepError> {
    use crate::netmodel::{GraphDecl, LayerDecl};
    use crate::neuron::{NeuronParams, ResetMode};

    if family.depths.is_empty() || family.hidden_channels.is_empty() || family.classes == 0 {
        return Err(SweepError::EmptyFamily);
    }
    let mut entries = Vec::new();
    for &depth in &family.depths {
        if depth == 0 {
            continue;
        }
        for &hidden in &family.hidden_channels {
            if hidden == 0 {
                continue;
            }
            let mut layers = Vec::with_capacity(depth);
            let (mut h, mut w) = (family.input_height, family.input_width);
            let mut feasible = true;
            for i in 0..depth {
                if family.kernel_height > h || family.kernel_width > w {
                    feasible = false;
                    break;
                }
                let in_ch = if i == 0 { family.input_channels } else { hidden };
                let out_ch = if i == depth - 1 { family.classes } else { hidden };
                layers.push(LayerDecl {
                    kind: LayerKind::Conv,
                    in_channels: in_ch,
                    in_height: h,
                    in_width: w,
                    kernel_height: family.kernel_height,
                    kernel_width: family.kernel_width,
                    out_channels: out_ch,
                    out_height: None,
                    out_width: None,
                    neuron: NeuronParams::uniform(out_ch, 1, 0, ResetMode::Subtract),
                });
                h = h - family.kernel_height + 1;
                w = w - family.kernel_width + 1;
            }
            if !feasible {
                continue;
            }
            let decl = GraphDecl { layers, ..Default::default() };
            let topo = NetworkTopology::from_decl(&decl)
                .expect("sweep candidates are straight feasible chains");
            let report = network_area(&topo, opts);
            let latency = latency_model(&topo, 1, opts);
            entries.push(SweepEntry {
                label: format!("d{depth}-c{hidden}"),
                depth,
                hidden_channels: hidden,
                total_um2: report.total_um2,
                total_mm2: report.total_mm2,
                input_cycles_per_step: latency.input_cycles_per_step,
                pipeline_fill_cycles: latency.pipeline_fill_cycles,
                fits_budget: budget_um2.map(|b| report.total_um2 <= b),
            });
        }
    }
    if entries.is_empty() {
        return Err(SweepError::NoFeasibleCandidate(
            family.input_height,
            family.input_width,
        ));
    }
    entries.sort_by(|a, b| {
        a.total_um2
            .cmp(&b.total_um2)
            .then_with(|| a.label.cmp(&b.label))
    });
    Ok(entries)
}
