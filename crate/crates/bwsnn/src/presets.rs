//! Built-in network descriptions.

use crate::netmodel::{GraphDecl, LayerDecl, LayerKind};
use crate::neuron::{NeuronParams, ResetMode};

/// The five-layer convolutional classifier this accelerator was sized
/// around: 3-channel 16x16 input, four 16-channel 3x3 stages, and a 6-class
/// head. Shipped as `configs/ref5.json`; thresholds here are demo values,
/// weights come from a weight file.
pub fn reference_decl() -> GraphDecl {
    let conv = |c, h, k, threshold| LayerDecl {
        kind: LayerKind::Conv,
        in_channels: c,
        in_height: h,
        in_width: h,
        kernel_height: 3,
        kernel_width: 3,
        out_channels: k,
        out_height: None,
        out_width: None,
        neuron: NeuronParams {
            thresholds: vec![threshold; k],
            biases: vec![0; k],
            initial_potential: 0,
            reset: ResetMode::Subtract,
        },
    };
    GraphDecl {
        layers: vec![
            conv(3, 16, 16, 9),
            conv(16, 14, 16, 48),
            conv(16, 12, 16, 48),
            conv(16, 10, 16, 48),
            conv(16, 8, 6, 32),
        ],
        ..Default::default()
    }
}
