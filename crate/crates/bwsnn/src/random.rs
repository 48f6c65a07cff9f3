//! Randomized network, kernel, and input generation.
//!
//! Everything here is valid by construction: generated declarations build
//! into checked topologies, and generated kernels fit their layers. The
//! differential test suites lean on this to compare the cycle simulator
//! against the reference evaluator across a broad corpus, and the CLI uses
//! it to bootstrap weight files for networks that have none yet.

use crate::netmodel::{
    BinaryKernelSet, BranchGroup, GraphDecl, LayerDecl, LayerKind, NetworkTopology, SkipEdge,
};
use crate::neuron::{NeuronParams, ResetMode};
use crate::oracle::SpikeTensor;
use rand::{Rng, RngExt};

/// Bounds for [`random_graph`].
#[derive(Debug, Clone, Copy)]
pub struct RandomNetConfig {
    /// Upper bound on layer count; skip shapes need at least 3, branch
    /// shapes at least 4.
    pub max_layers: usize,
    pub max_channels: usize,
    /// Upper bound on input height and width.
    pub max_side: usize,
    pub max_kernel: usize,
    pub allow_skips: bool,
    pub allow_branches: bool,
}

impl Default for RandomNetConfig {
    fn default() -> RandomNetConfig {
        RandomNetConfig {
            max_layers: 4,
            max_channels: 8,
            max_side: 10,
            max_kernel: 3,
            allow_skips: true,
            allow_branches: true,
        }
    }
}

fn random_kind<R: Rng>(rng: &mut R) -> LayerKind {
    match rng.random_range(0..4u32) {
        0 => LayerKind::Conv,
        1 => LayerKind::Depthwise,
        2 => LayerKind::FullyConnected,
        _ => LayerKind::AvgPool,
    }
}

fn random_neuron<R: Rng>(
    rng: &mut R,
    kind: LayerKind,
    in_channels: usize,
    out_channels: usize,
    kernel: (usize, usize),
    reset: ResetMode,
) -> NeuronParams {
    let fan_in = if kind.per_channel() {
        kernel.0 * kernel.1
    } else {
        in_channels * kernel.0 * kernel.1
    };
    let max_threshold = fan_in.max(1) as i64;
    let thresholds = if rng.random_bool(0.5) {
        vec![rng.random_range(1..=max_threshold); out_channels]
    } else {
        (0..out_channels)
            .map(|_| rng.random_range(1..=max_threshold))
            .collect()
    };
    let biases = if rng.random_bool(0.25) {
        (0..out_channels).map(|_| rng.random_range(-1..=2i64)).collect()
    } else {
        vec![0; out_channels]
    };
    let initial_potential =
        if rng.random_bool(0.2) { rng.random_range(-1..=2) } else { 0 };
    // mostly the network-wide mode, occasionally flipped per layer
    let reset = if rng.random_bool(0.15) {
        match reset {
            ResetMode::Subtract => ResetMode::ToZero,
            ResetMode::ToZero => ResetMode::Subtract,
        }
    } else {
        reset
    };
    NeuronParams { thresholds, biases, initial_potential, reset }
}

/// Rolls one layer on top of `(channels, height, width)`, honoring an
/// optional forced kernel, and returns the declaration plus the dims it
/// produces. Per-channel kinds keep their channel count; a forced 1x1
/// kernel also pins fully connected layers to legality.
fn roll_layer<R: Rng>(
    rng: &mut R,
    cfg: &RandomNetConfig,
    reset: ResetMode,
    dims: (usize, usize, usize),
    kind: LayerKind,
    forced_kernel: Option<(usize, usize)>,
) -> (LayerDecl, (usize, usize, usize)) {
    let (c, h, w) = dims;
    let (kh, kw) = forced_kernel.unwrap_or_else(|| {
        if kind == LayerKind::FullyConnected {
            (1, 1)
        } else {
            (
                rng.random_range(1..=cfg.max_kernel.min(h)),
                rng.random_range(1..=cfg.max_kernel.min(w)),
            )
        }
    });
    let k = if kind.per_channel() { c } else { rng.random_range(1..=cfg.max_channels) };
    let decl = LayerDecl {
        kind,
        in_channels: c,
        in_height: h,
        in_width: w,
        kernel_height: kh,
        kernel_width: kw,
        out_channels: k,
        out_height: None,
        out_width: None,
        neuron: random_neuron(rng, kind, c, k, (kh, kw), reset),
    };
    (decl, (k, h - kh + 1, w - kw + 1))
}

/// Generates a random, structurally valid network declaration. The shape
/// family (plain chain, skip connection, branch and reconverge) is chosen
/// at random within what `cfg` allows.
pub fn random_graph<R: Rng>(rng: &mut R, cfg: &RandomNetConfig) -> GraphDecl {
    let reset =
        if rng.random_bool(0.5) { ResetMode::Subtract } else { ResetMode::ToZero };
    let mut templates = vec![0u32];
    if cfg.allow_skips && cfg.max_layers >= 3 {
        templates.push(1);
    }
    if cfg.allow_branches && cfg.max_layers >= 4 {
        templates.push(2);
    }
    let template = templates[rng.random_range(0..templates.len())];
    let mut dims = (
        rng.random_range(1..=cfg.max_channels),
        rng.random_range(3..=cfg.max_side.max(3)),
        rng.random_range(3..=cfg.max_side.max(3)),
    );
    let mut layers = Vec::new();
    let mut skips = Vec::new();
    let mut branches = Vec::new();

    match template {
        0 => {
            let n = rng.random_range(1..=cfg.max_layers);
            for _ in 0..n {
                let kind = random_kind(rng);
                let (decl, next) = roll_layer(rng, cfg, reset, dims, kind, None);
                layers.push(decl);
                dims = next;
            }
        }
        1 => {
            // source layer, one or two spatial-preserving middles, then a
            // destination that concatenates the middles' and the source's
            // channels
            let kind = random_kind(rng);
            let (source, after_source) = roll_layer(rng, cfg, reset, dims, kind, None);
            let source_channels = after_source.0;
            layers.push(source);
            dims = after_source;
            let middles = rng.random_range(1..=(cfg.max_layers - 2).min(2));
            for _ in 0..middles {
                let kind = random_kind(rng);
                let (decl, next) =
                    roll_layer(rng, cfg, reset, dims, kind, Some((1, 1)));
                layers.push(decl);
                dims = next;
            }
            let merged = (dims.0 + source_channels, dims.1, dims.2);
            let kind = random_kind(rng);
            let (dest, _) = roll_layer(rng, cfg, reset, merged, kind, None);
            layers.push(dest);
            skips.push(SkipEdge {
                source: 0,
                dest: layers.len() - 1,
                order: rng.random_range(0..8),
            });
        }
        _ => {
            // fan out, two single-layer chains sharing kernel dims so their
            // outputs align, then reconvergence
            let kind = random_kind(rng);
            let (fan, after_fan) = roll_layer(rng, cfg, reset, dims, kind, None);
            layers.push(fan);
            dims = after_fan;
            let kernel = (
                rng.random_range(1..=cfg.max_kernel.min(dims.1)),
                rng.random_range(1..=cfg.max_kernel.min(dims.2)),
            );
            let mut arm_channels = 0;
            let mut arm_dims = dims;
            for _ in 0..2 {
                // fully connected demands 1x1, so only draw it when the
                // shared arm kernel happens to be 1x1
                let kind = loop {
                    let k = random_kind(rng);
                    if k != LayerKind::FullyConnected || kernel == (1, 1) {
                        break k;
                    }
                };
                let (arm, next) = roll_layer(rng, cfg, reset, dims, kind, Some(kernel));
                arm_channels += next.0;
                arm_dims = next;
                layers.push(arm);
            }
            let merged = (arm_channels, arm_dims.1, arm_dims.2);
            let kind = random_kind(rng);
            let (out, _) = roll_layer(rng, cfg, reset, merged, kind, None);
            layers.push(out);
            branches.push(BranchGroup {
                fan_out: 0,
                chains: vec![vec![1], vec![2]],
                reconverge: 3,
            });
        }
    }
    GraphDecl { layers, skips, branches }
}

/// Random kernels fitting every layer of a topology: signs are fair coin
/// flips, pooling layers get their mandatory all-ones kernels.
pub fn random_kernels<R: Rng>(rng: &mut R, topo: &NetworkTopology) -> Vec<BinaryKernelSet> {
    topo.layers
        .iter()
        .map(|node| {
            let s = &node.shape;
            let flip = |rng: &mut R, n: usize| -> Vec<i8> {
                (0..n).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect()
            };
            match node.kind {
                LayerKind::AvgPool => BinaryKernelSet::pooling(
                    s.out_channels,
                    s.kernel_height,
                    s.kernel_width,
                ),
                LayerKind::Depthwise => {
                    let n = s.out_channels * s.kernel_height * s.kernel_width;
                    BinaryKernelSet::per_channel(
                        s.out_channels,
                        s.kernel_height,
                        s.kernel_width,
                        flip(rng, n),
                    )
                    .expect("per-channel dims fit the layer")
                }
                LayerKind::Conv | LayerKind::FullyConnected => {
                    let n = s.out_channels
                        * s.in_channels
                        * s.kernel_height
                        * s.kernel_width;
                    BinaryKernelSet::dense(
                        s.out_channels,
                        s.in_channels,
                        s.kernel_height,
                        s.kernel_width,
                        flip(rng, n),
                    )
                    .expect("dense dims fit the layer")
                }
            }
        })
        .collect()
}

/// A spike volume per step with independent per-position spike probability
/// `density`.
pub fn random_spike_steps<R: Rng>(
    rng: &mut R,
    dims: (usize, usize, usize),
    steps: usize,
    density: f64,
) -> Vec<SpikeTensor> {
    let (c, h, w) = dims;
    (0..steps)
        .map(|_| {
            let mut volume = SpikeTensor::zeros(c, h, w);
            for channel in 0..c {
                for row in 0..h {
                    for col in 0..w {
                        volume.set(channel, row, col, rng.random_bool(density));
                    }
                }
            }
            volume
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{validate, NetworkGraph};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_networks_always_validate() {
        let cfg = RandomNetConfig::default();
        for seed in 0..150u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let decl = random_graph(&mut rng, &cfg);
            let topo = NetworkTopology::from_decl(&decl)
                .unwrap_or_else(|e| panic!("seed {seed}: {e}"));
            let kernels = random_kernels(&mut rng, &topo);
            let graph = NetworkGraph::new(topo, kernels)
                .unwrap_or_else(|e| panic!("seed {seed}: {e}"));
            let violations = validate(&graph);
            assert!(violations.is_empty(), "seed {seed}: {violations:?}");
        }
    }

    #[test]
    fn corpus_covers_the_interesting_shapes() {
        let cfg = RandomNetConfig::default();
        let mut saw_skip = false;
        let mut saw_branch = false;
        let mut saw_deep = false;
        let mut saw_depthwise = false;
        let mut saw_pool = false;
        let mut saw_subtract = false;
        let mut saw_zero = false;
        for seed in 0..200u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let decl = random_graph(&mut rng, &cfg);
            saw_skip |= !decl.skips.is_empty();
            saw_branch |= !decl.branches.is_empty();
            saw_deep |= decl.layers.len() >= 3;
            for layer in &decl.layers {
                saw_depthwise |= layer.kind == LayerKind::Depthwise;
                saw_pool |= layer.kind == LayerKind::AvgPool;
                saw_subtract |= layer.neuron.reset == ResetMode::Subtract;
                saw_zero |= layer.neuron.reset == ResetMode::ToZero;
            }
        }
        assert!(
            saw_skip && saw_branch && saw_deep && saw_depthwise && saw_pool,
            "shape coverage: skip={saw_skip} branch={saw_branch} deep={saw_deep} \
             depthwise={saw_depthwise} pool={saw_pool}"
        );
        assert!(saw_subtract && saw_zero, "both reset modes should appear");
    }

    #[test]
    fn same_seed_same_network() {
        let cfg = RandomNetConfig::default();
        let a = random_graph(&mut ChaCha8Rng::seed_from_u64(42), &cfg);
        let b = random_graph(&mut ChaCha8Rng::seed_from_u64(42), &cfg);
        assert_eq!(a, b);
    }

    #[test]
    fn spike_density_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let silent = random_spike_steps(&mut rng, (2, 3, 3), 4, 0.0);
        assert!(silent.iter().all(|s| (0..2).all(|c| s.count_ones(c) == 0)));
        let saturated = random_spike_steps(&mut rng, (2, 3, 3), 4, 1.0);
        assert!(saturated.iter().all(|s| (0..2).all(|c| s.count_ones(c) == 9)));
    }
}
