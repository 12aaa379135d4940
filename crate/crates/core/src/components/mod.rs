//! Interaction networks. Each exposes a plain forward, a forward that keeps
//! the activations its backward needs, and an exact analytic backward whose
//! parameter gradients come back in the component's own state type.

pub mod activation;
pub mod cin;
pub mod crossnet;
pub mod dnn;
pub mod fm;
pub mod linear;

pub use activation::Activation;
pub use cin::{
    cin_forward, cin_layer, cin_low_rank_materialize, cin_score, CinCache, CinConfig, CinLayer,
    CinState, Filters,
};
pub use crossnet::{cross_bias_free, crossnet_forward, CrossCache, CrossLayer, CrossNetState};
pub use dnn::{dnn_forward, DenseLayer, DnnCache, DnnConfig, DnnState};
pub use fm::{fm_backward, fm_pairwise};
pub use linear::{linear_backward, linear_forward, LinearPart};

use crate::error::Result;

/// Forward/backward contract shared by the dense components.
pub trait Differentiable: Sized {
    type Input;
    type Output;
    type Cache;

    fn forward_cached(&self, input: &Self::Input) -> Result<(Self::Output, Self::Cache)>;

    /// Gradients of `⟨upstream, output⟩` with respect to the parameters
    /// (returned in the component's own shape) and to the input.
    fn backward(&self, cache: &Self::Cache, upstream: &Self::Output)
        -> Result<(Self, Self::Input)>;
}

pub const INIT_STD: f64 = 0.01;
