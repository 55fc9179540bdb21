//! Channel-level artifact detector: a small CNN embeds each local segment,
//! a transformer encoder mixes the tokens, and two outputs parameterize a
//! Dirichlet trained with the belief-matching objective.

mod label;
mod loss;
mod model;
mod train;

pub use label::{label_windows, LabeledWindow, WindowLabel, POSITIVE_COVERAGE};
pub use loss::{bm_loss, class_index, dirichlet_kl, elbo, elbo_grad, sample_loss, UNIFORM_PRIOR};
pub use model::{
    build_model, positional_encoding, ChannelModel, ChannelModelConfig, ChannelScorer,
    DirichletOutput,
};
pub use train::{
    balanced_class_weights, train_channel_detector, train_step, EpochLog, TrainLog, TrainRecipe,
};
