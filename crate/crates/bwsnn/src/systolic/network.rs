//! Whole-network simulation: one [`LayerModule`](super::LayerModule) per
//! layer, joined by single-vector-per-cycle links. Every link costs one
//! cycle; links that merge early streams into later ones (skip edges, short
//! branch chains) carry extra delay cells so merging vectors arrive on the
//! same cycle. The delay sizes come from the timing algebra and are verified
//! here dynamically: vectors carry their position tags, and any disagreement
//! at a merge is a hard error, not a silent reorder.

use super::timing::{link_extra_delay, predict_latency, stream_offsets};
use super::{LayerModule, SpikeVector};
use crate::netmodel::{validate, NetworkGraph, StreamOrigin};
use crate::oracle::SpikeTensor;
use serde::Serialize;
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("layer {layer}: more than {capacity} input vectors arrived during time step {step}")]
    StreamOverrun { layer: usize, capacity: usize, step: u64 },
    #[error("layer {layer}: expected vector (step {}, row {}, col {}), got (step {}, row {}, col {})",
        expected.0, expected.1, expected.2, got.0, got.1, got.2)]
    StreamMisaligned {
        layer: usize,
        expected: (u64, usize, usize),
        got: (u64, usize, usize),
    },
    #[error("layer {layer}: input word has {got} bits, layer reads {expected} channels")]
    WordWidth { layer: usize, expected: usize, got: usize },
    #[error("cycle {cycle}: layer {layer}: only part of the merged input arrived")]
    PartialMerge { layer: usize, cycle: u64 },
    #[error("cycle {cycle}: layer {layer}: merging streams disagree on position: {tags:?}")]
    MergeSkew {
        layer: usize,
        cycle: u64,
        tags: Vec<(u64, usize, usize)>,
    },
    #[error("input step {step} is {got:?}, network expects {expected:?}")]
    StepDims {
        step: usize,
        expected: (usize, usize, usize),
        got: (usize, usize, usize),
    },
    #[error("network failed validation ({count} violations); first: {first}")]
    InvalidNetwork { count: usize, first: String },
    #[error("simulation passed {0} cycles without draining; dataflow is wedged")]
    Wedged(u64),
    #[error("internal: {0}")]
    Internal(String),
}

/// Knobs for one simulation run.
#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    /// Cycles between a window-completing fetch and the spike leaving the
    /// neuron block (crossbar reduce plus threshold stage).
    pub accum_delay: u32,
    /// Record every layer's spike output volume per step.
    pub record_trace: bool,
    pub clock_hz: f64,
}

impl Default for RunOptions {
    fn default() -> RunOptions {
        RunOptions { accum_delay: 1, record_trace: false, clock_hz: 100e6 }
    }
}

/// Measured cycle counts and traffic totals for one run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CycleStats {
    pub time_steps: usize,
    /// Cycles from the first input vector to the last counted output spike.
    pub total_cycles: u64,
    /// Cycles until the first output vector reached the counters.
    pub pipeline_fill_cycles: u64,
    /// Input vectors streamed per time step.
    pub input_cycles_per_step: u64,
    /// Input vectors each layer consumed over the whole run.
    pub fetches_per_layer: Vec<u64>,
    /// Output vectors each layer produced over the whole run.
    pub outputs_per_layer: Vec<u64>,
    pub accum_delay: u32,
}

/// Everything a run produces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutcome {
    /// Spike totals per terminal output channel.
    pub counts: Vec<u64>,
    pub stats: CycleStats,
    /// `trace[layer][step]`, present when requested.
    pub trace: Option<Vec<Vec<SpikeTensor>>>,
}

/// Observer for per-cycle stream events; useful for CSV dumps and order
/// checks. Default methods ignore everything.
pub trait CycleEventSink {
    fn consumed(&mut self, _cycle: u64, _layer: usize, _vector: &SpikeVector) {}
    fn produced(&mut self, _cycle: u64, _layer: usize, _vector: &SpikeVector) {}
}

/// Sink that discards all events.
pub struct NoSink;

impl CycleEventSink for NoSink {}

enum Feed {
    /// Network input, injected the cycle it is generated.
    Source,
    /// Output of an earlier layer through a delay line of fixed length.
    FromLayer { source: usize, fifo: VecDeque<Option<SpikeVector>> },
}

/// Runs the network for `input_steps.len()` time steps of spike input.
pub fn run_network(
    graph: &NetworkGraph,
    input_steps: &[SpikeTensor],
    opts: &RunOptions,
) -> Result<RunOutcome, SimError> {
    run_network_observed(graph, input_steps, opts, &mut NoSink)
}

/// [`run_network`] with a stream-event observer.
pub fn run_network_observed(
    graph: &NetworkGraph,
    input_steps: &[SpikeTensor],
    opts: &RunOptions,
    events: &mut dyn CycleEventSink,
) -> Result<RunOutcome, SimError> {
    let violations = validate(graph);
    if let Some(first) = violations.first() {
        return Err(SimError::InvalidNetwork {
            count: violations.len(),
            first: first.to_string(),
        });
    }
    let topo = &graph.topology;
    let expected_dims = topo.input_dims();
    for (step, t) in input_steps.iter().enumerate() {
        if t.dims() != expected_dims {
            return Err(SimError::StepDims { step, expected: expected_dims, got: t.dims() });
        }
    }

    let layer_count = topo.layer_count();
    let mut modules = Vec::with_capacity(layer_count);
    for (node, kernels) in topo.layers.iter().zip(&graph.kernels) {
        let module = LayerModule::new(
            node.kind,
            &node.shape,
            kernels,
            &node.neuron,
            opts.accum_delay,
        )
        .map_err(|e| SimError::Internal(format!("module build after validation: {e}")))?;
        modules.push(module);
    }

    let offsets = stream_offsets(topo, opts.accum_delay);
    let mut feeds: Vec<Vec<Feed>> = topo
        .sources
        .iter()
        .enumerate()
        .map(|(dest, srcs)| {
            srcs.iter()
                .map(|src| match *src {
                    StreamOrigin::NetworkInput => Feed::Source,
                    StreamOrigin::Layer(source) => {
                        let extra = link_extra_delay(&offsets, source, offsets.arrival[dest]);
                        Feed::FromLayer {
                            source,
                            fifo: std::iter::repeat_with(|| None)
                                .take(1 + extra as usize)
                                .collect(),
                        }
                    }
                })
                .collect()
        })
        .collect();
    let mut sink_fifo: VecDeque<Option<SpikeVector>> = VecDeque::from([None]);

    let steps = input_steps.len();
    let (_, h0, w0) = expected_dims;
    let per_step = (h0 * w0) as u64;
    let total_feed = steps as u64 * per_step;
    let budget = predict_latency(topo, steps, opts.accum_delay, opts.clock_hz).total_cycles
        + per_step
        + 64;

    let mut counts = vec![0u64; topo.output_channels()];
    let mut first_counted: Option<u64> = None;
    let mut last_counted: Option<u64> = None;
    let mut trace: Option<Vec<Vec<SpikeTensor>>> = opts.record_trace.then(|| {
        topo.layers
            .iter()
            .map(|node| {
                let s = &node.shape;
                vec![SpikeTensor::zeros(s.out_channels, s.out_height, s.out_width); steps]
            })
            .collect()
    });

    let mut cycle: u64 = 0;
    loop {
        let fed_out = cycle >= total_feed;
        if fed_out {
            let links_empty = feeds.iter().flatten().all(|f| match f {
                Feed::Source => true,
                Feed::FromLayer { fifo, .. } => fifo.iter().all(Option::is_none),
            }) && sink_fifo.iter().all(Option::is_none);
            let modules_idle = modules.iter().all(|m| !m.busy());
            if links_empty && modules_idle {
                break;
            }
        }
        if cycle > budget {
            return Err(SimError::Wedged(cycle));
        }

        let source_vector = if fed_out {
            None
        } else {
            let step = (cycle / per_step) as usize;
            let pos = (cycle % per_step) as usize;
            let (row, col) = (pos / w0, pos % w0);
            Some(SpikeVector {
                step: step as u64,
                row,
                col,
                bits: input_steps[step].column_word(row, col),
            })
        };

        // Phase 1: every consumer pops one slot from each of its streams.
        let mut inputs: Vec<Option<SpikeVector>> = Vec::with_capacity(layer_count);
        for (layer, layer_feeds) in feeds.iter_mut().enumerate() {
            let parts: Vec<Option<SpikeVector>> = layer_feeds
                .iter_mut()
                .map(|feed| match feed {
                    Feed::Source => source_vector.clone(),
                    Feed::FromLayer { fifo, .. } => {
                        fifo.pop_front().expect("fixed-length fifo")
                    }
                })
                .collect();
            inputs.push(merge_streams(layer, cycle, parts)?);
        }
        let counted = sink_fifo.pop_front().expect("fixed-length fifo");

        // Phase 2: every module advances one cycle.
        let mut outputs: Vec<Option<SpikeVector>> = Vec::with_capacity(layer_count);
        for (layer, module) in modules.iter_mut().enumerate() {
            let input = inputs[layer].take();
            if let Some(v) = &input {
                events.consumed(cycle, layer, v);
            }
            let out = module.step(layer, input)?;
            if let Some(v) = &out {
                events.produced(cycle, layer, v);
                if let Some(trace) = trace.as_mut() {
                    let volume = &mut trace[layer][v.step as usize];
                    for (ch, &bit) in v.bits.iter().enumerate() {
                        if bit != 0 {
                            volume.set(ch, v.row, v.col, true);
                        }
                    }
                }
            }
            outputs.push(out);
        }

        // Phase 3: route every produced vector into its consumers' links.
        for layer_feeds in feeds.iter_mut() {
            for feed in layer_feeds.iter_mut() {
                if let Feed::FromLayer { source, fifo } = feed {
                    fifo.push_back(outputs[*source].clone());
                }
            }
        }
        sink_fifo.push_back(outputs[topo.terminal].clone());

        // Phase 4: count spikes that reached the sink this cycle.
        if let Some(v) = counted {
            for (ch, &bit) in v.bits.iter().enumerate() {
                counts[ch] += bit as u64;
            }
            first_counted.get_or_insert(cycle);
            last_counted = Some(cycle);
        }

        cycle += 1;
    }

    let stats = CycleStats {
        time_steps: steps,
        total_cycles: last_counted.map_or(0, |c| c + 1),
        pipeline_fill_cycles: first_counted.map_or(0, |c| c + 1),
        input_cycles_per_step: per_step,
        fetches_per_layer: modules.iter().map(|m| m.stats().fetched).collect(),
        outputs_per_layer: modules.iter().map(|m| m.stats().produced).collect(),
        accum_delay: opts.accum_delay,
    };
    Ok(RunOutcome { counts, stats, trace })
}

/// Concatenates the channel words of streams that merge at `layer`. All
/// streams must carry a vector this cycle or none may; mixed arrival means a
/// delay line was sized wrong, and mismatched tags mean streams drifted.
fn merge_streams(
    layer: usize,
    cycle: u64,
    mut parts: Vec<Option<SpikeVector>>,
) -> Result<Option<SpikeVector>, SimError> {
    if parts.len() == 1 {
        return Ok(parts.pop().expect("one element"));
    }
    let present = parts.iter().filter(|p| p.is_some()).count();
    if present == 0 {
        return Ok(None);
    }
    if present < parts.len() {
        return Err(SimError::PartialMerge { layer, cycle });
    }
    let vectors: Vec<SpikeVector> = parts.into_iter().map(|p| p.expect("all present")).collect();
    let tag = (vectors[0].step, vectors[0].row, vectors[0].col);
    if vectors.iter().any(|v| (v.step, v.row, v.col) != tag) {
        return Err(SimError::MergeSkew {
            layer,
            cycle,
            tags: vectors.iter().map(|v| (v.step, v.row, v.col)).collect(),
        });
    }
    let mut bits = Vec::new();
    for v in &vectors {
        bits.extend_from_slice(&v.bits);
    }
    Ok(Some(SpikeVector { step: tag.0, row: tag.1, col: tag.2, bits }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{
        BinaryKernelSet, BranchGroup, GraphDecl, LayerDecl, LayerKind, NetworkGraph,
        NetworkTopology, SkipEdge,
    };
    use crate::neuron::{NeuronParams, ResetMode};
    use crate::oracle::snn_forward_ref;
    use crate::systolic::predict_latency;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[allow(clippy::too_many_arguments)]
    fn layer(
        kind: LayerKind,
        c: usize,
        h: usize,
        w: usize,
        kh: usize,
        kw: usize,
        k: usize,
        threshold: i64,
        bias: i64,
        reset: ResetMode,
    ) -> LayerDecl {
        LayerDecl {
            kind,
            in_channels: c,
            in_height: h,
            in_width: w,
            kernel_height: kh,
            kernel_width: kw,
            out_channels: k,
            out_height: None,
            out_width: None,
            neuron: NeuronParams {
                thresholds: vec![threshold; k],
                biases: vec![bias; k],
                initial_potential: 0,
                reset,
            },
        }
    }

    fn random_kernels(rng: &mut ChaCha8Rng, decl: &LayerDecl) -> BinaryKernelSet {
        let rand_w = |rng: &mut ChaCha8Rng, n: usize| -> Vec<i8> {
            (0..n).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect()
        };
        let (k, c, kh, kw) = (
            decl.out_channels,
            decl.in_channels,
            decl.kernel_height,
            decl.kernel_width,
        );
        match decl.kind {
            LayerKind::Conv | LayerKind::FullyConnected => {
                BinaryKernelSet::dense(k, c, kh, kw, rand_w(rng, k * c * kh * kw)).unwrap()
            }
            LayerKind::Depthwise => {
                BinaryKernelSet::per_channel(k, kh, kw, rand_w(rng, k * kh * kw)).unwrap()
            }
            LayerKind::AvgPool => BinaryKernelSet::pooling(k, kh, kw),
        }
    }

    fn build(decl: GraphDecl, rng: &mut ChaCha8Rng) -> NetworkGraph {
        let kernels = decl.layers.iter().map(|l| random_kernels(rng, l)).collect();
        let topo = NetworkTopology::from_decl(&decl).unwrap();
        NetworkGraph::new(topo, kernels).unwrap()
    }

    fn random_input(rng: &mut ChaCha8Rng, graph: &NetworkGraph, steps: usize) -> Vec<SpikeTensor> {
        let (c, h, w) = graph.topology.input_dims();
        (0..steps)
            .map(|_| {
                let mut t = SpikeTensor::zeros(c, h, w);
                for ch in 0..c {
                    for r in 0..h {
                        for col in 0..w {
                            t.set(ch, r, col, rng.random_bool(0.4));
                        }
                    }
                }
                t
            })
            .collect()
    }

    fn assert_matches_reference(graph: &NetworkGraph, steps: usize, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input = random_input(&mut rng, graph, steps);
        let expect = snn_forward_ref(graph, &input).unwrap();
        let opts = RunOptions { record_trace: true, ..RunOptions::default() };
        let got = run_network(graph, &input, &opts).unwrap();
        assert_eq!(got.counts, expect.counts, "spike totals");
        assert_eq!(got.trace.as_ref().unwrap(), &expect.trace, "full spike trace");
        let predicted = predict_latency(&graph.topology, steps, opts.accum_delay, opts.clock_hz);
        assert_eq!(got.stats.total_cycles, predicted.total_cycles);
        assert_eq!(got.stats.pipeline_fill_cycles, predicted.pipeline_fill_cycles);
    }

    #[test]
    fn conv_chain_matches_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let decl = GraphDecl {
            layers: vec![
                layer(LayerKind::Conv, 2, 7, 6, 3, 2, 3, 2, 0, ResetMode::Subtract),
                layer(LayerKind::Conv, 3, 5, 5, 2, 2, 4, 3, 1, ResetMode::Subtract),
            ],
            ..Default::default()
        };
        let graph = build(decl, &mut rng);
        assert_matches_reference(&graph, 6, 1001);
    }

    #[test]
    fn all_kinds_chain_matches_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(102);
        let decl = GraphDecl {
            layers: vec![
                layer(LayerKind::Conv, 2, 8, 8, 3, 3, 4, 2, 0, ResetMode::ToZero),
                layer(LayerKind::AvgPool, 4, 6, 6, 2, 2, 4, 4, 0, ResetMode::ToZero),
                layer(LayerKind::Depthwise, 4, 5, 5, 2, 2, 4, 2, 1, ResetMode::ToZero),
                layer(LayerKind::FullyConnected, 4, 4, 4, 1, 1, 3, 3, 0, ResetMode::ToZero),
            ],
            ..Default::default()
        };
        let graph = build(decl, &mut rng);
        assert_matches_reference(&graph, 8, 1002);
    }

    #[test]
    fn skip_edge_matches_reference() {
        // skip over a 1x1 layer so both streams into layer 2 stay 6x6
        let mut rng = ChaCha8Rng::seed_from_u64(103);
        let decl = GraphDecl {
            layers: vec![
                layer(LayerKind::Conv, 2, 7, 7, 2, 2, 3, 2, 0, ResetMode::Subtract),
                layer(LayerKind::Conv, 3, 6, 6, 1, 1, 2, 2, 0, ResetMode::Subtract),
                layer(LayerKind::Conv, 5, 6, 6, 2, 2, 2, 3, 0, ResetMode::Subtract),
            ],
            skips: vec![SkipEdge { source: 0, dest: 2, order: 0 }],
            ..Default::default()
        };
        let graph = build(decl, &mut rng);
        assert_eq!(
            graph.topology.sources[2],
            vec![StreamOrigin::Layer(1), StreamOrigin::Layer(0)]
        );
        assert_matches_reference(&graph, 7, 1003);
    }

    #[test]
    fn branch_group_matches_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(104);
        let decl = GraphDecl {
            layers: vec![
                layer(LayerKind::Conv, 1, 6, 6, 2, 2, 2, 2, 0, ResetMode::Subtract),
                layer(LayerKind::Conv, 2, 5, 5, 2, 2, 2, 2, 0, ResetMode::Subtract),
                layer(LayerKind::Conv, 2, 4, 4, 1, 1, 3, 2, 0, ResetMode::Subtract),
                layer(LayerKind::Conv, 2, 5, 5, 2, 2, 3, 2, 0, ResetMode::Subtract),
                layer(LayerKind::Conv, 6, 4, 4, 2, 2, 2, 2, 0, ResetMode::Subtract),
            ],
            branches: vec![BranchGroup {
                fan_out: 0,
                chains: vec![vec![1, 2], vec![3]],
                reconverge: 4,
            }],
            ..Default::default()
        };
        let graph = build(decl, &mut rng);
        assert_matches_reference(&graph, 6, 1004);
    }

    #[test]
    fn accum_delay_changes_cycles_not_results() {
        let mut rng = ChaCha8Rng::seed_from_u64(105);
        let decl = GraphDecl {
            layers: vec![
                layer(LayerKind::Conv, 2, 6, 6, 2, 3, 3, 2, 0, ResetMode::Subtract),
                layer(LayerKind::Conv, 3, 5, 4, 2, 2, 2, 2, 0, ResetMode::Subtract),
            ],
            ..Default::default()
        };
        let graph = build(decl, &mut rng);
        let input = random_input(&mut rng, &graph, 5);
        let expect = snn_forward_ref(&graph, &input).unwrap();
        let mut totals = Vec::new();
        for accum_delay in [0u32, 1, 3] {
            let opts = RunOptions { accum_delay, ..RunOptions::default() };
            let got = run_network(&graph, &input, &opts).unwrap();
            assert_eq!(got.counts, expect.counts, "accum={accum_delay}");
            let predicted =
                predict_latency(&graph.topology, 5, accum_delay, opts.clock_hz);
            assert_eq!(got.stats.total_cycles, predicted.total_cycles);
            totals.push(got.stats.total_cycles);
        }
        assert!(totals[0] < totals[1] && totals[1] < totals[2]);
    }

    #[test]
    fn traffic_totals_match_the_grids() {
        let mut rng = ChaCha8Rng::seed_from_u64(106);
        let decl = GraphDecl {
            layers: vec![
                layer(LayerKind::Conv, 1, 5, 6, 2, 2, 2, 2, 0, ResetMode::Subtract),
                layer(LayerKind::Conv, 2, 4, 5, 2, 3, 1, 2, 0, ResetMode::Subtract),
            ],
            ..Default::default()
        };
        let graph = build(decl, &mut rng);
        let steps = 4usize;
        let input = random_input(&mut rng, &graph, steps);
        let got = run_network(&graph, &input, &RunOptions::default()).unwrap();
        // layer 0 fetches one word per input position per step
        assert_eq!(got.stats.fetches_per_layer[0], (steps * 5 * 6) as u64);
        assert_eq!(got.stats.outputs_per_layer[0], (steps * 4 * 5) as u64);
        assert_eq!(got.stats.fetches_per_layer[1], (steps * 4 * 5) as u64);
        assert_eq!(got.stats.outputs_per_layer[1], (steps * 3 * 3) as u64);
        assert_eq!(got.stats.input_cycles_per_step, 30);
    }

    #[test]
    fn input_stream_is_row_major_and_gap_free() {
        struct OrderCheck {
            consumed0: Vec<(u64, u64, usize, usize)>,
        }
        impl CycleEventSink for OrderCheck {
            fn consumed(&mut self, cycle: u64, layer: usize, v: &SpikeVector) {
                if layer == 0 {
                    self.consumed0.push((cycle, v.step, v.row, v.col));
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(107);
        let decl = GraphDecl {
            layers: vec![layer(LayerKind::Conv, 1, 3, 4, 2, 2, 1, 2, 0, ResetMode::Subtract)],
            ..Default::default()
        };
        let graph = build(decl, &mut rng);
        let steps = 3usize;
        let input = random_input(&mut rng, &graph, steps);
        let mut sink = OrderCheck { consumed0: Vec::new() };
        run_network_observed(&graph, &input, &RunOptions::default(), &mut sink).unwrap();
        let mut n = 0u64;
        for step in 0..steps as u64 {
            for row in 0..3 {
                for col in 0..4 {
                    assert_eq!(sink.consumed0[n as usize], (n, step, row, col));
                    n += 1;
                }
            }
        }
        assert_eq!(n as usize, sink.consumed0.len());
    }

    #[test]
    fn zero_steps_is_a_no_op() {
        let mut rng = ChaCha8Rng::seed_from_u64(108);
        let decl = GraphDecl {
            layers: vec![layer(LayerKind::Conv, 1, 3, 3, 2, 2, 1, 2, 0, ResetMode::Subtract)],
            ..Default::default()
        };
        let graph = build(decl, &mut rng);
        let got = run_network(&graph, &[], &RunOptions::default()).unwrap();
        assert_eq!(got.counts, vec![0]);
        assert_eq!(got.stats.total_cycles, 0);
        assert_eq!(got.stats.pipeline_fill_cycles, 0);
    }

    #[test]
    fn invalid_graph_is_refused() {
        let mut rng = ChaCha8Rng::seed_from_u64(109);
        let decl = GraphDecl {
            layers: vec![layer(LayerKind::Conv, 1, 3, 3, 2, 2, 1, 2, 0, ResetMode::Subtract)],
            ..Default::default()
        };
        let mut graph = build(decl, &mut rng);
        graph.topology.layers[0].neuron.thresholds[0] = -1;
        let err = run_network(&graph, &[], &RunOptions::default()).unwrap_err();
        assert!(matches!(err, SimError::InvalidNetwork { .. }));
    }

    #[test]
    fn wrong_input_dims_are_refused() {
        let mut rng = ChaCha8Rng::seed_from_u64(110);
        let decl = GraphDecl {
            layers: vec![layer(LayerKind::Conv, 1, 3, 3, 2, 2, 1, 2, 0, ResetMode::Subtract)],
            ..Default::default()
        };
        let graph = build(decl, &mut rng);
        let bad = vec![SpikeTensor::zeros(1, 3, 4)];
        assert!(matches!(
            run_network(&graph, &bad, &RunOptions::default()),
            Err(SimError::StepDims { step: 0, .. })
        ));
    }

    #[test]
    fn repeated_runs_are_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(111);
        let decl = GraphDecl {
            layers: vec![
                layer(LayerKind::Conv, 2, 6, 6, 3, 3, 3, 2, 0, ResetMode::Subtract),
                layer(LayerKind::Conv, 3, 4, 4, 2, 2, 2, 2, 0, ResetMode::Subtract),
            ],
            ..Default::default()
        };
        let graph = build(decl, &mut rng);
        let input = random_input(&mut rng, &graph, 5);
        let opts = RunOptions { record_trace: true, ..RunOptions::default() };
        let a = run_network(&graph, &input, &opts).unwrap();
        let b = run_network(&graph, &input, &opts).unwrap();
        assert_eq!(a, b);
    }
}
