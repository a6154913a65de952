//! Edge-centric graph neural network precoder.

mod checkpoint;
mod forward;
mod graph;
mod params;

pub use checkpoint::{
    checkpoint_from_str, checkpoint_to_string, ensure_architecture, load_checkpoint, save_checkpoint,
    CHECKPOINT_FORMAT, CHECKPOINT_VERSION,
};
pub use forward::{forward, layer_forward, Activation};
pub use graph::{aggregate_node_messages, build_edge_graph, EdgeGraph, Node};
pub use params::{
    init_params, init_params_with_depth, layer_dims, Aggregation, GnnParams, LayerParams, DEFAULT_HIDDEN_WIDTH,
    DEFAULT_LEAKY_SLOPE, EDGE_IO_WIDTH, NUM_LAYERS,
};

pub(crate) use forward::{forward_trace, message_coefficients, ForwardTrace};
