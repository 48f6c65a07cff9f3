//! Static description of a network: layer shapes, binary kernels, and the
//! dataflow graph (feed-forward chain plus skip edges and branch groups).
//!
//! Everything here is pure bookkeeping. The reference evaluator and the
//! hardware simulator both consume a validated [`NetworkGraph`]; neither adds
//! structural rules of its own.

mod mapping;

pub use mapping::{map_kernels, WeightMatrix};

use crate::neuron::NeuronParams;
use serde::{Deserialize, Serialize};
use thiserror::Error;

// ── Shapes ──────────────────────────────────────────────────────────────────

/// Dimensions of one layer. Stride is 1 and there is no padding, so the
/// output dims are fully determined: `out = in - kernel + 1` per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub in_channels: usize,
    pub in_height: usize,
    pub in_width: usize,
    pub kernel_height: usize,
    pub kernel_width: usize,
    pub out_channels: usize,
    pub out_height: usize,
    pub out_width: usize,
}

impl LayerShape {
    /// Builds a shape, deriving the output dims. Fails if a kernel axis
    /// exceeds the matching input axis or any dimension is zero.
    pub fn new(
        in_channels: usize,
        in_height: usize,
        in_width: usize,
        kernel_height: usize,
        kernel_width: usize,
        out_channels: usize,
    ) -> Result<LayerShape, ShapeError> {
        for (name, v) in [
            ("in_channels", in_channels),
            ("in_height", in_height),
            ("in_width", in_width),
            ("kernel_height", kernel_height),
            ("kernel_width", kernel_width),
            ("out_channels", out_channels),
        ] {
            if v == 0 {
                return Err(ShapeError::ZeroDimension { layer: None, field: name });
            }
        }
        if kernel_height > in_height {
            return Err(ShapeError::ShapeUnderflow {
                layer: None,
                axis: "height",
                input: in_height,
                kernel: kernel_height,
            });
        }
        if kernel_width > in_width {
            return Err(ShapeError::ShapeUnderflow {
                layer: None,
                axis: "width",
                input: in_width,
                kernel: kernel_width,
            });
        }
        Ok(LayerShape {
            in_channels,
            in_height,
            in_width,
            kernel_height,
            kernel_width,
            out_channels,
            out_height: in_height - kernel_height + 1,
            out_width: in_width - kernel_width + 1,
        })
    }

    /// Input positions per time step, in stream order.
    pub fn input_positions(&self) -> usize {
        self.in_height * self.in_width
    }

    /// Output positions per time step.
    pub fn output_positions(&self) -> usize {
        self.out_height * self.out_width
    }

    /// Crossbar row count: one row per (kernel column, input channel) pair.
    pub fn pe_rows(&self) -> usize {
        self.in_channels * self.kernel_width
    }

    /// Crossbar column count: one column per (kernel row, output channel) pair.
    pub fn pe_cols(&self) -> usize {
        self.out_channels * self.kernel_height
    }

    /// Cells in the input buffer chain. The window spans `kernel_height - 1`
    /// full image rows plus `kernel_width` cells of the current row; each cell
    /// stores one spike word of `in_channels` bits.
    pub fn chain_cells(&self) -> usize {
        (self.kernel_height - 1) * self.in_width + self.kernel_width
    }

    /// True once the input position `(row, col)` completes a kernel window.
    /// The completing position is the window's bottom-right corner.
    pub fn emits_at(&self, row: usize, col: usize) -> bool {
        row + 1 >= self.kernel_height && col + 1 >= self.kernel_width
    }

    /// Output coordinate produced when `(row, col)` completes a window.
    pub fn output_coord(&self, row: usize, col: usize) -> (usize, usize) {
        debug_assert!(self.emits_at(row, col));
        (row + 1 - self.kernel_height, col + 1 - self.kernel_width)
    }
}

/// Functional role of a layer. All kinds share the same crossbar dataflow;
/// they differ only in kernel structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    /// Dense convolution: every (input, output) channel pair has a kernel.
    Conv,
    /// One kernel per channel; output channel k reads only input channel k.
    Depthwise,
    /// 1x1 convolution; position-wise dense channel mixing.
    FullyConnected,
    /// Depthwise with all-ones kernels. The divisor is folded into the
    /// threshold of the consuming layer, so this sums rather than averages.
    AvgPool,
}

impl LayerKind {
    /// Kinds whose kernels hold one filter per channel instead of a dense
    /// (out x in) bank.
    pub fn per_channel(self) -> bool {
        matches!(self, LayerKind::Depthwise | LayerKind::AvgPool)
    }
}

// ── Kernels ─────────────────────────────────────────────────────────────────

/// Binary weights for one layer, each +1 or -1.
///
/// Dense sets store `out * in * kh * kw` weights indexed
/// `(out, in, ky, kx)`. Per-channel sets store `out * kh * kw` weights
/// indexed `(channel, ky, kx)`; weights for cross-channel pairs do not exist
/// and [`BinaryKernelSet::get`] reports them as `None`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryKernelSet {
    out_channels: usize,
    in_channels: usize,
    kernel_height: usize,
    kernel_width: usize,
    per_channel: bool,
    weights: Vec<i8>,
}

impl BinaryKernelSet {
    pub fn dense(
        out_channels: usize,
        in_channels: usize,
        kernel_height: usize,
        kernel_width: usize,
        weights: Vec<i8>,
    ) -> Result<BinaryKernelSet, KernelError> {
        let expected = out_channels * in_channels * kernel_height * kernel_width;
        check_weights(&weights, expected)?;
        Ok(BinaryKernelSet {
            out_channels,
            in_channels,
            kernel_height,
            kernel_width,
            per_channel: false,
            weights,
        })
    }

    pub fn per_channel(
        channels: usize,
        kernel_height: usize,
        kernel_width: usize,
        weights: Vec<i8>,
    ) -> Result<BinaryKernelSet, KernelError> {
        let expected = channels * kernel_height * kernel_width;
        check_weights(&weights, expected)?;
        Ok(BinaryKernelSet {
            out_channels: channels,
            in_channels: channels,
            kernel_height,
            kernel_width,
            per_channel: true,
            weights,
        })
    }

    /// The all-ones per-channel set used by pooling layers.
    pub fn pooling(channels: usize, kernel_height: usize, kernel_width: usize) -> BinaryKernelSet {
        BinaryKernelSet {
            out_channels: channels,
            in_channels: channels,
            kernel_height,
            kernel_width,
            per_channel: true,
            weights: vec![1; channels * kernel_height * kernel_width],
        }
    }

    /// Weight for (output channel, input channel, kernel row, kernel col).
    /// `None` means no weight exists there (per-channel set, `cin != cout`);
    /// the corresponding crossbar cell is inert.
    pub fn get(&self, out_ch: usize, in_ch: usize, ky: usize, kx: usize) -> Option<i8> {
        assert!(
            out_ch < self.out_channels
                && in_ch < self.in_channels
                && ky < self.kernel_height
                && kx < self.kernel_width,
            "kernel index out of range"
        );
        let kk = self.kernel_height * self.kernel_width;
        if self.per_channel {
            if out_ch != in_ch {
                return None;
            }
            Some(self.weights[(out_ch * self.kernel_height + ky) * self.kernel_width + kx])
        } else {
            Some(self.weights[(out_ch * self.in_channels + in_ch) * kk + ky * self.kernel_width + kx])
        }
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn kernel_height(&self) -> usize {
        self.kernel_height
    }

    pub fn kernel_width(&self) -> usize {
        self.kernel_width
    }

    pub fn is_per_channel(&self) -> bool {
        self.per_channel
    }

    /// Number of stored weights.
    pub fn weight_count(&self) -> usize {
        self.weights.len()
    }

    /// Raw weights in storage order. Dense: `(out, in, ky, kx)`; per-channel:
    /// `(channel, ky, kx)`.
    pub fn raw_weights(&self) -> &[i8] {
        &self.weights
    }

    /// True when every stored weight is +1.
    pub fn all_ones(&self) -> bool {
        self.weights.iter().all(|&w| w == 1)
    }
}

fn check_weights(weights: &[i8], expected: usize) -> Result<(), KernelError> {
    if weights.len() != expected {
        return Err(KernelError::WeightCount { expected, got: weights.len() });
    }
    for (index, &value) in weights.iter().enumerate() {
        if value != 1 && value != -1 {
            return Err(KernelError::NonBinaryWeight { index, value });
        }
    }
    Ok(())
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KernelError {
    #[error("weight at flat index {index} is {value}; kernels hold only +1 or -1")]
    NonBinaryWeight { index: usize, value: i8 },
    #[error("kernel data holds {got} weights, expected {expected}")]
    WeightCount { expected: usize, got: usize },
    #[error("kernel set is {got}, layer requires {expected}")]
    ShapeMismatch { expected: String, got: String },
    #[error("{kind:?} layer requires {} kernels", repr_name(.per_channel_needed))]
    ReprMismatch { kind: LayerKind, per_channel_needed: bool },
    #[error("pooling kernels must be all +1")]
    PoolWeightNotOne,
    #[error("weight set has {got} layer entries, network has {expected}")]
    LayerCount { expected: usize, got: usize },
    #[error("layer {layer}: {source}")]
    AtLayer { layer: usize, source: Box<KernelError> },
}

impl KernelError {
    pub(crate) fn at_layer(self, layer: usize) -> KernelError {
        KernelError::AtLayer { layer, source: Box::new(self) }
    }
}

fn repr_name(per_channel: &bool) -> &'static str {
    if *per_channel {
        "per-channel"
    } else {
        "dense"
    }
}

// ── Graph declaration ───────────────────────────────────────────────────────

/// Where a layer's input stream comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StreamOrigin {
    NetworkInput,
    Layer(usize),
}

/// Extra forward edge: `source`'s output is concatenated onto `dest`'s input
/// behind `dest`'s regular sources. When several skips target one layer they
/// are ordered by ascending `order` (ties by source index).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipEdge {
    pub source: usize,
    pub dest: usize,
    #[serde(default)]
    pub order: u32,
}

/// A fan-out region: `fan_out`'s output feeds the first layer of every chain,
/// and `reconverge` concatenates the chains' final outputs in chain order.
/// The chains must partition the layers strictly between `fan_out` and
/// `reconverge`, each listed in ascending index order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchGroup {
    pub fan_out: usize,
    pub chains: Vec<Vec<usize>>,
    pub reconverge: usize,
}

/// One layer as declared by the user: dimensions plus neuron parameters.
/// Output dims are optional; [`infer_shapes`] fills them in.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerDecl {
    pub kind: LayerKind,
    pub in_channels: usize,
    pub in_height: usize,
    pub in_width: usize,
    pub kernel_height: usize,
    pub kernel_width: usize,
    pub out_channels: usize,
    pub out_height: Option<usize>,
    pub out_width: Option<usize>,
    pub neuron: NeuronParams,
}

/// A declared network before shape inference.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GraphDecl {
    pub layers: Vec<LayerDecl>,
    pub skips: Vec<SkipEdge>,
    pub branches: Vec<BranchGroup>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ShapeError {
    #[error("network has no layers")]
    EmptyNetwork,
    #[error("{}: {field} must be nonzero", layer_label(.layer))]
    ZeroDimension { layer: Option<usize>, field: &'static str },
    #[error(
        "{}: kernel {axis} {kernel} exceeds input {axis} {input}",
        layer_label(.layer)
    )]
    ShapeUnderflow {
        layer: Option<usize>,
        axis: &'static str,
        input: usize,
        kernel: usize,
    },
    #[error("layer {layer}: declares {declared} input channels but its sources supply {expected}")]
    ChannelMismatch { layer: usize, expected: usize, declared: usize },
    #[error("layer {layer}: declares {declared:?} input but its sources supply {expected:?}")]
    SpatialMismatch {
        layer: usize,
        expected: (usize, usize),
        declared: (usize, usize),
    },
    #[error("sources feeding layer {layer} disagree on spatial size: {shapes:?}")]
    UnalignableStreams { layer: usize, shapes: Vec<(usize, usize)> },
    #[error("bad edge: {0}")]
    BadEdge(String),
}

fn layer_label(layer: &Option<usize>) -> String {
    match layer {
        Some(i) => format!("layer {i}"),
        None => "layer".to_string(),
    }
}

/// Resolves every layer's ordered input sources from the declared skip edges
/// and branch groups. Index 0 always reads the network input; by default each
/// later layer reads its predecessor.
pub fn normalize_sources(
    layer_count: usize,
    skips: &[SkipEdge],
    branches: &[BranchGroup],
) -> Result<Vec<Vec<StreamOrigin>>, ShapeError> {
    if layer_count == 0 {
        return Err(ShapeError::EmptyNetwork);
    }
    let mut sources: Vec<Vec<StreamOrigin>> = (0..layer_count)
        .map(|i| {
            if i == 0 {
                vec![StreamOrigin::NetworkInput]
            } else {
                vec![StreamOrigin::Layer(i - 1)]
            }
        })
        .collect();

    // Branch groups rewrite the base edge of every layer they claim.
    let mut claimed = vec![false; layer_count];
    for group in branches {
        let bad = |msg: String| Err(ShapeError::BadEdge(msg));
        if group.fan_out >= layer_count || group.reconverge >= layer_count {
            return bad(format!(
                "branch group {}..{} references a layer outside 0..{}",
                group.fan_out, group.reconverge, layer_count
            ));
        }
        if group.fan_out + 1 >= group.reconverge {
            return bad(format!(
                "branch group must span at least one layer between fan-out {} and reconvergence {}",
                group.fan_out, group.reconverge
            ));
        }
        if group.chains.len() < 2 {
            return bad("branch group needs at least two chains".to_string());
        }
        let mut seen = vec![false; layer_count];
        for chain in &group.chains {
            if chain.is_empty() {
                return bad("branch chains must not be empty".to_string());
            }
            let mut prev: Option<usize> = None;
            for &idx in chain {
                if idx <= group.fan_out || idx >= group.reconverge {
                    return bad(format!(
                        "chain layer {idx} lies outside branch region {}..{}",
                        group.fan_out, group.reconverge
                    ));
                }
                if seen[idx] || claimed[idx] {
                    return bad(format!("layer {idx} appears in more than one chain"));
                }
                if let Some(p) = prev {
                    if idx <= p {
                        return bad(format!(
                            "chain indices must ascend; {idx} follows {p}"
                        ));
                    }
                }
                seen[idx] = true;
                prev = Some(idx);
            }
            sources[chain[0]] = vec![StreamOrigin::Layer(group.fan_out)];
            for pair in chain.windows(2) {
                sources[pair[1]] = vec![StreamOrigin::Layer(pair[0])];
            }
        }
        for idx in group.fan_out + 1..group.reconverge {
            if !seen[idx] {
                return bad(format!(
                    "layer {idx} sits inside branch region {}..{} but belongs to no chain",
                    group.fan_out, group.reconverge
                ));
            }
            claimed[idx] = true;
        }
        sources[group.reconverge] = group
            .chains
            .iter()
            .map(|chain| StreamOrigin::Layer(*chain.last().expect("chains checked non-empty")))
            .collect();
        claimed[group.reconverge] = true;
    }

    // Skip edges append extra streams behind the base sources.
    let mut extra: Vec<Vec<&SkipEdge>> = vec![Vec::new(); layer_count];
    for edge in skips {
        if edge.source >= layer_count || edge.dest >= layer_count {
            return Err(ShapeError::BadEdge(format!(
                "skip edge {} -> {} references a layer outside 0..{}",
                edge.source, edge.dest, layer_count
            )));
        }
        if edge.source >= edge.dest {
            return Err(ShapeError::BadEdge(format!(
                "skip edge {} -> {} must point strictly forward",
                edge.source, edge.dest
            )));
        }
        extra[edge.dest].push(edge);
    }
    for (dest, mut edges) in extra.into_iter().enumerate() {
        edges.sort_by_key(|e| (e.order, e.source));
        for edge in edges {
            let origin = StreamOrigin::Layer(edge.source);
            if sources[dest].contains(&origin) {
                return Err(ShapeError::BadEdge(format!(
                    "skip edge {} -> {dest} duplicates an existing stream",
                    edge.source
                )));
            }
            sources[dest].push(origin);
        }
    }
    Ok(sources)
}

/// Fills in the derived output dims of every layer and checks that chained
/// dimensions line up. Idempotent: output dims are recomputed from scratch,
/// so running it twice changes nothing.
pub fn infer_shapes(decl: &GraphDecl) -> Result<GraphDecl, ShapeError> {
    if decl.layers.is_empty() {
        return Err(ShapeError::EmptyNetwork);
    }
    let mut out = decl.clone();
    let mut shapes = Vec::with_capacity(out.layers.len());
    for (idx, layer) in out.layers.iter_mut().enumerate() {
        let shape = LayerShape::new(
            layer.in_channels,
            layer.in_height,
            layer.in_width,
            layer.kernel_height,
            layer.kernel_width,
            layer.out_channels,
        )
        .map_err(|e| e.with_layer(idx))?;
        layer.out_height = Some(shape.out_height);
        layer.out_width = Some(shape.out_width);
        shapes.push(shape);
    }

    let sources = normalize_sources(out.layers.len(), &out.skips, &out.branches)?;
    for (idx, srcs) in sources.iter().enumerate() {
        if srcs == &[StreamOrigin::NetworkInput] {
            continue;
        }
        let mut channels = 0usize;
        let mut spatial: Vec<(usize, usize)> = Vec::new();
        for src in srcs {
            match *src {
                StreamOrigin::NetworkInput => {
                    return Err(ShapeError::BadEdge(format!(
                        "layer {idx} cannot mix the network input with layer streams"
                    )))
                }
                StreamOrigin::Layer(s) => {
                    channels += shapes[s].out_channels;
                    spatial.push((shapes[s].out_height, shapes[s].out_width));
                }
            }
        }
        spatial.dedup();
        if spatial.len() > 1 {
            return Err(ShapeError::UnalignableStreams { layer: idx, shapes: spatial });
        }
        if channels != shapes[idx].in_channels {
            return Err(ShapeError::ChannelMismatch {
                layer: idx,
                expected: channels,
                declared: shapes[idx].in_channels,
            });
        }
        let expected = spatial[0];
        let declared = (shapes[idx].in_height, shapes[idx].in_width);
        if expected != declared {
            return Err(ShapeError::SpatialMismatch { layer: idx, expected, declared });
        }
    }
    terminal_layer(out.layers.len(), &sources)?;
    Ok(out)
}

impl ShapeError {
    fn with_layer(self, idx: usize) -> ShapeError {
        match self {
            ShapeError::ZeroDimension { field, .. } => {
                ShapeError::ZeroDimension { layer: Some(idx), field }
            }
            ShapeError::ShapeUnderflow { axis, input, kernel, .. } => {
                ShapeError::ShapeUnderflow { layer: Some(idx), axis, input, kernel }
            }
            other => other,
        }
    }
}

fn terminal_layer(
    layer_count: usize,
    sources: &[Vec<StreamOrigin>],
) -> Result<usize, ShapeError> {
    let mut consumed = vec![false; layer_count];
    for srcs in sources {
        for src in srcs {
            if let StreamOrigin::Layer(s) = *src {
                consumed[s] = true;
            }
        }
    }
    let unconsumed: Vec<usize> =
        (0..layer_count).filter(|&i| !consumed[i]).collect();
    match unconsumed.as_slice() {
        [one] => Ok(*one),
        _ => Err(ShapeError::BadEdge(format!(
            "network must have exactly one terminal layer, found {unconsumed:?}"
        ))),
    }
}

// ── Built topology and graph ────────────────────────────────────────────────

/// One layer inside a built topology.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNode {
    pub kind: LayerKind,
    pub shape: LayerShape,
    pub neuron: NeuronParams,
}

/// A shape-checked network without weights. Cost and latency models operate
/// on this; attach kernels to get a runnable [`NetworkGraph`].
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTopology {
    pub layers: Vec<LayerNode>,
    /// Ordered input streams per layer; concatenation follows this order.
    pub sources: Vec<Vec<StreamOrigin>>,
    pub skips: Vec<SkipEdge>,
    pub branches: Vec<BranchGroup>,
    /// The single layer nothing consumes; its spikes are the network output.
    pub terminal: usize,
}

impl NetworkTopology {
    pub fn from_decl(decl: &GraphDecl) -> Result<NetworkTopology, ShapeError> {
        let decl = infer_shapes(decl)?;
        let sources = normalize_sources(decl.layers.len(), &decl.skips, &decl.branches)?;
        let terminal = terminal_layer(decl.layers.len(), &sources)?;
        let layers = decl
            .layers
            .iter()
            .map(|l| LayerNode {
                kind: l.kind,
                shape: LayerShape {
                    in_channels: l.in_channels,
                    in_height: l.in_height,
                    in_width: l.in_width,
                    kernel_height: l.kernel_height,
                    kernel_width: l.kernel_width,
                    out_channels: l.out_channels,
                    out_height: l.out_height.expect("filled by infer_shapes"),
                    out_width: l.out_width.expect("filled by infer_shapes"),
                },
                neuron: l.neuron.clone(),
            })
            .collect();
        Ok(NetworkTopology {
            layers,
            sources,
            skips: decl.skips.clone(),
            branches: decl.branches.clone(),
            terminal,
        })
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    /// Channels, height, width accepted by layer 0.
    pub fn input_dims(&self) -> (usize, usize, usize) {
        let s = &self.layers[0].shape;
        (s.in_channels, s.in_height, s.in_width)
    }

    /// Channel count of the terminal layer; one spike counter per channel.
    pub fn output_channels(&self) -> usize {
        self.layers[self.terminal].shape.out_channels
    }
}

/// A topology with one kernel set per layer: everything needed to run.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGraph {
    pub topology: NetworkTopology,
    pub kernels: Vec<BinaryKernelSet>,
}

impl NetworkGraph {
    /// Attaches kernels, checking each set against its layer's shape and kind.
    pub fn new(
        topology: NetworkTopology,
        kernels: Vec<BinaryKernelSet>,
    ) -> Result<NetworkGraph, KernelError> {
        if kernels.len() != topology.layers.len() {
            return Err(KernelError::LayerCount {
                expected: topology.layers.len(),
                got: kernels.len(),
            });
        }
        for (idx, (node, set)) in topology.layers.iter().zip(&kernels).enumerate() {
            check_kernel_set(node, set).map_err(|e| e.at_layer(idx))?;
        }
        Ok(NetworkGraph { topology, kernels })
    }

    pub fn layer_count(&self) -> usize {
        self.topology.layer_count()
    }
}

fn check_kernel_set(node: &LayerNode, set: &BinaryKernelSet) -> Result<(), KernelError> {
    let s = &node.shape;
    if set.is_per_channel() != node.kind.per_channel() {
        return Err(KernelError::ReprMismatch {
            kind: node.kind,
            per_channel_needed: node.kind.per_channel(),
        });
    }
    let expected = (s.out_channels, s.in_channels, s.kernel_height, s.kernel_width);
    let got = (
        set.out_channels(),
        set.in_channels(),
        set.kernel_height(),
        set.kernel_width(),
    );
    if expected != got {
        return Err(KernelError::ShapeMismatch {
            expected: format!("{expected:?} (out, in, kh, kw)"),
            got: format!("{got:?}"),
        });
    }
    if node.kind == LayerKind::AvgPool && !set.all_ones() {
        return Err(KernelError::PoolWeightNotOne);
    }
    Ok(())
}

// ── Validation ──────────────────────────────────────────────────────────────

/// One broken invariant, tied to a layer and field where possible.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub layer: Option<usize>,
    pub field: &'static str,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.layer {
            Some(i) => write!(f, "layer {i} [{}]: {}", self.field, self.message),
            None => write!(f, "network [{}]: {}", self.field, self.message),
        }
    }
}

fn violation(layer: Option<usize>, field: &'static str, message: String) -> Violation {
    Violation { layer, field, message }
}

/// Checks every structural invariant and returns the full list of
/// violations. An empty result means the graph is runnable. Unlike the
/// builder path, this tolerates arbitrarily inconsistent hand-built graphs.
pub fn validate(graph: &NetworkGraph) -> Vec<Violation> {
    let mut out = Vec::new();
    let topo = &graph.topology;
    if topo.layers.is_empty() {
        out.push(violation(None, "layers", "network has no layers".into()));
        return out;
    }

    for (idx, node) in topo.layers.iter().enumerate() {
        let s = &node.shape;
        let li = Some(idx);
        for (field, v) in [
            ("in_channels", s.in_channels),
            ("in_height", s.in_height),
            ("in_width", s.in_width),
            ("kernel_height", s.kernel_height),
            ("kernel_width", s.kernel_width),
            ("out_channels", s.out_channels),
        ] {
            if v == 0 {
                out.push(violation(li, field, "dimension must be nonzero".into()));
            }
        }
        if s.kernel_height > s.in_height || s.kernel_width > s.in_width {
            out.push(violation(
                li,
                "kernel_height",
                format!(
                    "kernel {}x{} does not fit input {}x{}",
                    s.kernel_height, s.kernel_width, s.in_height, s.in_width
                ),
            ));
        } else {
            if s.out_height != s.in_height - s.kernel_height + 1 {
                out.push(violation(
                    li,
                    "out_height",
                    format!(
                        "must be in_height - kernel_height + 1 = {}, got {}",
                        s.in_height - s.kernel_height + 1,
                        s.out_height
                    ),
                ));
            }
            if s.out_width != s.in_width - s.kernel_width + 1 {
                out.push(violation(
                    li,
                    "out_width",
                    format!(
                        "must be in_width - kernel_width + 1 = {}, got {}",
                        s.in_width - s.kernel_width + 1,
                        s.out_width
                    ),
                ));
            }
        }
        match node.kind {
            LayerKind::Depthwise | LayerKind::AvgPool => {
                if s.out_channels != s.in_channels {
                    out.push(violation(
                        li,
                        "out_channels",
                        format!(
                            "{:?} layer maps channels one-to-one; out_channels {} != in_channels {}",
                            node.kind, s.out_channels, s.in_channels
                        ),
                    ));
                }
            }
            LayerKind::FullyConnected => {
                if s.kernel_height != 1 || s.kernel_width != 1 {
                    out.push(violation(
                        li,
                        "kernel_height",
                        format!(
                            "fully connected layer uses a 1x1 kernel, got {}x{}",
                            s.kernel_height, s.kernel_width
                        ),
                    ));
                }
            }
            LayerKind::Conv => {}
        }
        if node.neuron.thresholds.len() != s.out_channels {
            out.push(violation(
                li,
                "thresholds",
                format!(
                    "{} thresholds for {} output channels",
                    node.neuron.thresholds.len(),
                    s.out_channels
                ),
            ));
        }
        if node.neuron.biases.len() != s.out_channels {
            out.push(violation(
                li,
                "biases",
                format!(
                    "{} biases for {} output channels",
                    node.neuron.biases.len(),
                    s.out_channels
                ),
            ));
        }
        for (k, &t) in node.neuron.thresholds.iter().enumerate() {
            if t <= 0 {
                out.push(violation(
                    li,
                    "thresholds",
                    format!("threshold for channel {k} is {t}; must be positive"),
                ));
                break;
            }
        }
    }

    if graph.kernels.len() != topo.layers.len() {
        out.push(violation(
            None,
            "kernels",
            format!(
                "{} kernel sets for {} layers",
                graph.kernels.len(),
                topo.layers.len()
            ),
        ));
    }
    for (idx, (node, set)) in topo.layers.iter().zip(&graph.kernels).enumerate() {
        if let Err(e) = check_kernel_set(node, set) {
            out.push(violation(Some(idx), "kernels", e.to_string()));
        }
        if let Some((index, &value)) = set
            .raw_weights()
            .iter()
            .enumerate()
            .find(|(_, &w)| w != 1 && w != -1)
        {
            out.push(violation(
                Some(idx),
                "kernels",
                format!("weight at flat index {index} is {value}; must be +1 or -1"),
            ));
        }
    }

    // Dataflow: recompute sources from the declared edges and compare.
    match normalize_sources(topo.layers.len(), &topo.skips, &topo.branches) {
        Err(e) => out.push(violation(None, "edges", e.to_string())),
        Ok(expected) => {
            if expected != topo.sources {
                out.push(violation(
                    None,
                    "sources",
                    "stored source lists disagree with the declared edges".into(),
                ));
            }
            match terminal_layer(topo.layers.len(), &expected) {
                Err(e) => out.push(violation(None, "terminal", e.to_string())),
                Ok(t) if t != topo.terminal => out.push(violation(
                    None,
                    "terminal",
                    format!("terminal layer is {t}, graph says {}", topo.terminal),
                )),
                Ok(_) => {}
            }
            for (idx, srcs) in expected.iter().enumerate() {
                if srcs == &[StreamOrigin::NetworkInput] {
                    continue;
                }
                let mut channels = 0usize;
                let mut spatial: Vec<(usize, usize)> = Vec::new();
                let mut ok = true;
                for src in srcs {
                    match *src {
                        StreamOrigin::NetworkInput => ok = false,
                        StreamOrigin::Layer(s) if s < idx => {
                            let sh = &topo.layers[s].shape;
                            channels += sh.out_channels;
                            spatial.push((sh.out_height, sh.out_width));
                        }
                        StreamOrigin::Layer(s) => {
                            out.push(violation(
                                Some(idx),
                                "sources",
                                format!("source layer {s} does not precede consumer"),
                            ));
                            ok = false;
                        }
                    }
                }
                if !ok {
                    continue;
                }
                spatial.dedup();
                if spatial.len() > 1 {
                    out.push(violation(
                        Some(idx),
                        "sources",
                        format!("input streams disagree on spatial size: {spatial:?}"),
                    ));
                    continue;
                }
                let s = &topo.layers[idx].shape;
                if channels != s.in_channels {
                    out.push(violation(
                        Some(idx),
                        "in_channels",
                        format!("sources supply {channels} channels, layer declares {}", s.in_channels),
                    ));
                }
                if spatial[0] != (s.in_height, s.in_width) {
                    out.push(violation(
                        Some(idx),
                        "in_height",
                        format!(
                            "sources supply {}x{}, layer declares {}x{}",
                            spatial[0].0, spatial[0].1, s.in_height, s.in_width
                        ),
                    ));
                }
            }
        }
    }
    out
}
