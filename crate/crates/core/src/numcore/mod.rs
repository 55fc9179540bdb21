//! Minimal tensor and reverse-mode differentiation engine covering exactly
//! the layers the channel model needs, plus Adam and the gamma-family
//! special functions used by the Dirichlet loss.

mod graph;
mod ops;
mod params;
mod special;
mod tensor;

pub use graph::{BmTargets, Grads, Graph, Var, LOGIT_CLAMP};
pub use ops::{conv1d, layer_norm, maxpool1d, multi_head_self_attention, AttentionWeights};
pub use params::{AdamConfig, Param, ParamId, ParamStore};
pub use special::{digamma, log_gamma, trigamma};
pub use tensor::Tensor;

pub(crate) use graph::{dirichlet_kl_unchecked, elbo_and_grad};
