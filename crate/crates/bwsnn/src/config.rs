//! JSON configuration files: network descriptions and sweep families.
//!
//! Both formats carry a `schema` tag so a file is never silently parsed as
//! the wrong thing, and both reject unknown keys so typos fail loudly
//! instead of being ignored.
//!
//! A network file (`"schema": "bwsnn-network-v1"`) lists layers in
//! evaluation order; `threshold` and `bias` accept either a single number
//! broadcast to every output channel or an array with one entry per output
//! channel. `reset_mode` applies network-wide unless a layer overrides it
//! with its own `reset`. Skip edges and branch groups use layer indices.
//! Output dimensions are always inferred, never declared.

use crate::costmodel::SweepFamily;
use crate::netmodel::{BranchGroup, GraphDecl, LayerDecl, LayerKind, SkipEdge};
use crate::neuron::{Broadcast, NeuronParams, ResetMode};
use serde::Deserialize;
use thiserror::Error;

pub const NETWORK_SCHEMA: &str = "bwsnn-network-v1";
pub const SWEEP_SCHEMA: &str = "bwsnn-sweep-v1";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("config is not valid JSON for this schema: {0}")]
    Parse(String),
    #[error("expected a {expected} file, found schema {got:?}")]
    WrongSchema { expected: &'static str, got: String },
    #[error("layer {layer}: {field} lists {got} values, layer has {expected} output channels")]
    BroadcastLength { layer: usize, field: &'static str, expected: usize, got: usize },
}

fn default_reset() -> ResetMode {
    ResetMode::Subtract
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkFile {
    schema: String,
    #[serde(default = "default_reset")]
    reset_mode: ResetMode,
    layers: Vec<LayerEntry>,
    #[serde(default)]
    skip_edges: Vec<SkipEdge>,
    #[serde(default)]
    branch_groups: Vec<BranchGroup>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerEntry {
    kind: LayerKind,
    in_channels: usize,
    in_height: usize,
    in_width: usize,
    kernel_height: usize,
    kernel_width: usize,
    out_channels: usize,
    threshold: Broadcast<i64>,
    #[serde(default)]
    bias: Broadcast<i64>,
    #[serde(default)]
    initial_potential: i64,
    /// Overrides the network-wide `reset_mode` for this layer.
    #[serde(default)]
    reset: Option<ResetMode>,
}

fn resolve(
    layer: usize,
    field: &'static str,
    broadcast: &Broadcast<i64>,
    channels: usize,
) -> Result<Vec<i64>, ConfigError> {
    broadcast.resolve(channels).ok_or_else(|| {
        let got = match broadcast {
            Broadcast::Scalar(_) => 1,
            Broadcast::PerChannel(vs) => vs.len(),
        };
        ConfigError::BroadcastLength { layer, field, expected: channels, got }
    })
}

/// Parses a network description. Shape and topology checking happen later
/// when the declaration is built into a topology.
pub fn parse_network(text: &str) -> Result<GraphDecl, ConfigError> {
    let file: NetworkFile =
        serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    if file.schema != NETWORK_SCHEMA {
        return Err(ConfigError::WrongSchema { expected: NETWORK_SCHEMA, got: file.schema });
    }
    let mut layers = Vec::with_capacity(file.layers.len());
    for (i, entry) in file.layers.iter().enumerate() {
        let neuron = NeuronParams {
            thresholds: resolve(i, "threshold", &entry.threshold, entry.out_channels)?,
            biases: resolve(i, "bias", &entry.bias, entry.out_channels)?,
            initial_potential: entry.initial_potential,
            reset: entry.reset.unwrap_or(file.reset_mode),
        };
        layers.push(LayerDecl {
            kind: entry.kind,
            in_channels: entry.in_channels,
            in_height: entry.in_height,
            in_width: entry.in_width,
            kernel_height: entry.kernel_height,
            kernel_width: entry.kernel_width,
            out_channels: entry.out_channels,
            out_height: None,
            out_width: None,
            neuron,
        });
    }
    Ok(GraphDecl { layers, skips: file.skip_edges, branches: file.branch_groups })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepFile {
    schema: String,
    input_channels: usize,
    input_height: usize,
    input_width: usize,
    kernel_height: usize,
    kernel_width: usize,
    depths: Vec<usize>,
    hidden_channels: Vec<usize>,
    classes: usize,
}

/// Parses a sweep family description.
pub fn parse_sweep(text: &str) -> Result<SweepFamily, ConfigError> {
    let file: SweepFile =
        serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    if file.schema != SWEEP_SCHEMA {
        return Err(ConfigError::WrongSchema { expected: SWEEP_SCHEMA, got: file.schema });
    }
    Ok(SweepFamily {
        input_channels: file.input_channels,
        input_height: file.input_height,
        input_width: file.input_width,
        kernel_height: file.kernel_height,
        kernel_width: file.kernel_width,
        depths: file.depths,
        hidden_channels: file.hidden_channels,
        classes: file.classes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::NetworkTopology;

    const TWO_LAYER: &str = r#"{
        "schema": "bwsnn-network-v1",
        "reset_mode": "to_zero",
        "layers": [
            {
                "kind": "conv",
                "in_channels": 1, "in_height": 6, "in_width": 6,
                "kernel_height": 3, "kernel_width": 3,
                "out_channels": 4,
                "threshold": [3, 3, 4, 4],
                "bias": 1
            },
            {
                "kind": "fully_connected",
                "in_channels": 4, "in_height": 4, "in_width": 4,
                "kernel_height": 1, "kernel_width": 1,
                "out_channels": 2,
                "threshold": 5,
                "initial_potential": 2,
                "reset": "subtract"
            }
        ]
    }"#;

    #[test]
    fn parses_layers_broadcasts_and_overrides() {
        let decl = parse_network(TWO_LAYER).unwrap();
        assert_eq!(decl.layers.len(), 2);
        let first = &decl.layers[0];
        assert_eq!(first.kind, LayerKind::Conv);
        assert_eq!(first.neuron.thresholds, vec![3, 3, 4, 4]);
        assert_eq!(first.neuron.biases, vec![1; 4]);
        assert_eq!(first.neuron.reset, ResetMode::ToZero);
        let second = &decl.layers[1];
        assert_eq!(second.neuron.thresholds, vec![5, 5]);
        assert_eq!(second.neuron.biases, vec![0, 0]);
        assert_eq!(second.neuron.initial_potential, 2);
        assert_eq!(second.neuron.reset, ResetMode::Subtract, "layer override wins");
        // the declaration builds into a topology cleanly
        let topo = NetworkTopology::from_decl(&decl).unwrap();
        assert_eq!(topo.layers[1].shape.out_height, 4);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = TWO_LAYER.replace("\"bias\": 1", "\"bias\": 1, \"stride\": 2");
        let err = parse_network(&text).unwrap_err();
        assert!(matches!(err, ConfigError::Parse(ref m) if m.contains("stride")), "{err}");
    }

    #[test]
    fn schema_tag_is_enforced() {
        let text = TWO_LAYER.replace("bwsnn-network-v1", "bwsnn-network-v2");
        assert_eq!(
            parse_network(&text).unwrap_err(),
            ConfigError::WrongSchema {
                expected: NETWORK_SCHEMA,
                got: "bwsnn-network-v2".to_string()
            }
        );
        // a sweep file is not a network file
        assert!(matches!(
            parse_network(
                r#"{"schema": "bwsnn-sweep-v1", "layers": []}"#
            ),
            Err(ConfigError::WrongSchema { .. })
        ));
    }

    #[test]
    fn per_channel_lists_must_match_output_channels() {
        let text = TWO_LAYER.replace("[3, 3, 4, 4]", "[3, 3]");
        assert_eq!(
            parse_network(&text).unwrap_err(),
            ConfigError::BroadcastLength {
                layer: 0,
                field: "threshold",
                expected: 4,
                got: 2
            }
        );
    }

    #[test]
    fn skip_edges_and_branches_parse() {
        let text = r#"{
            "schema": "bwsnn-network-v1",
            "layers": [
                {"kind": "conv", "in_channels": 1, "in_height": 5, "in_width": 5,
                 "kernel_height": 2, "kernel_width": 2, "out_channels": 2, "threshold": 2},
                {"kind": "fully_connected", "in_channels": 2, "in_height": 4, "in_width": 4,
                 "kernel_height": 1, "kernel_width": 1, "out_channels": 3, "threshold": 2},
                {"kind": "conv", "in_channels": 5, "in_height": 4, "in_width": 4,
                 "kernel_height": 2, "kernel_width": 2, "out_channels": 2, "threshold": 2}
            ],
            "skip_edges": [{"source": 0, "dest": 2, "order": 7}]
        }"#;
        let decl = parse_network(text).unwrap();
        assert_eq!(decl.skips, vec![SkipEdge { source: 0, dest: 2, order: 7 }]);
        assert!(decl.branches.is_empty());
        assert!(NetworkTopology::from_decl(&decl).is_ok());
        // default reset mode is subtract
        assert_eq!(decl.layers[0].neuron.reset, ResetMode::Subtract);
    }

    #[test]
    fn sweep_family_parses() {
        let text = r#"{
            "schema": "bwsnn-sweep-v1",
            "input_channels": 3, "input_height": 16, "input_width": 16,
            "kernel_height": 3, "kernel_width": 3,
            "depths": [3, 4, 5],
            "hidden_channels": [16, 32, 48],
            "classes": 6
        }"#;
        let family = parse_sweep(text).unwrap();
        assert_eq!(family.depths, vec![3, 4, 5]);
        assert_eq!(family.classes, 6);
        assert!(matches!(
            parse_sweep(&text.replace("sweep", "network")),
            Err(ConfigError::WrongSchema { .. })
        ));
        let extra = text.replace("\"classes\": 6", "\"classes\": 6, \"budget\": 2.0");
        assert!(matches!(parse_sweep(&extra), Err(ConfigError::Parse(_))));
    }
}
