//! Simulator and hardware cost model for a binary-weight spiking network
//! accelerator built from per-layer systolic modules.

pub mod codec;
pub mod config;
pub mod costmodel;
pub mod inputs;
pub mod netmodel;
pub mod neuron;
pub mod oracle;
pub mod presets;
pub mod random;
pub mod systolic;
pub mod weights;
