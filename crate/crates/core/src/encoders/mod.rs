//! Program and summary encoders: BiGGNN with max-pool readout, multi-head
//! self-attention over the token sequence with mean-pool readout, and the
//! concatenated joint encoding. GGNN and GCN cells are kept as baselines.

mod analysis;
mod cells;
mod input;
mod model;

pub use analysis::{perturbation_effect, PerturbationEffect};
pub use cells::{
    aggregate_directional, baseline_gcn_layer, baseline_ggnn_hop, biggnn_hop, fuse_gated, graph_readout,
    gru_cell, multi_head_attention, sequence_readout, AttentionVars, Direction, GruVars, Linear,
};
pub use input::{receptive_field, EncoderInput};
pub use model::{
    biggnn_node_states, encode_all, encode_batch, encode_from_initial, encode_joint, init_node_states,
    parameter_layout, Encoded, EncoderConfig, EncoderParams, LinearIds,
};

#[cfg(test)]
mod tests;
