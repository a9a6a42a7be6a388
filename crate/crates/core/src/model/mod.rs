//! The forecasting network: embeddings, the four attention branches, the
//! encoder block and the regression head.

mod config;
mod layers;
mod network;
mod params;

pub use config::{Aggregation, ModelConfig};
pub use layers::{
    differential_weights, lambda_value, spatial_cluster_attention, spatial_differential_attention,
    temporal_aggregation_attention, temporal_self_attention, AggregationWeights, AttentionWeights,
    ClusterWeights, DifferentialWeights, Trace,
};
pub use network::{
    aggregate_stream, embed, encoder_layer, sinusoidal_encoding, AdFormer, EmbeddingWeights,
    ForwardOutput, LayerWeights, TimeInputs,
};
pub use params::{
    check_layout, init_parameters, init_separation_matrix, parameter_layout, ModelParameters,
};
