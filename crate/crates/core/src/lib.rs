pub mod numerics;
pub mod seq_model;
pub mod act_space;
pub mod latent_policy;
pub mod dialog_data;
pub mod eval_metrics;
pub mod pipeline;
