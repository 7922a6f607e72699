//! Multi-frame windowed attention network for video super-resolution.

mod config;
mod forward;
mod gradcheck;
mod layers;
mod weights;
mod window;

pub use config::ModelConfig;
pub use forward::{model_forward, network_graph, network_output, NetworkInput};
pub use gradcheck::{model_grad_check, GradCheckReport, GroupError};
pub use layers::{
    attention_graph, conv3x3, im2col_map, mfsab_forward, mfsab_graph, multi_frame_attention, pixel_shuffle,
    pixel_shuffle_map, AttentionNodes, AttentionVars, AttentionWeights, BlockVars, ParamVars,
};
pub use weights::{param_specs, ModelWeights};
pub use window::{
    bias_gather_map, bias_table_len, reflect, relative_position_index, window_merge, window_partition, WindowBatch,
    WindowGeometry,
};
