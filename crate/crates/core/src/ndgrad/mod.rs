//! Dense f64 arrays with reverse-mode automatic differentiation.
//!
//! [`Tensor`] is a row-major value type; [`Graph`] is a define-by-run tape
//! that records every operation and replays it in reverse for gradients.
//! The graph is rebuilt for every training step, which keeps variable-length
//! sequence models straightforward at the cost of some allocation churn.

mod graph;
mod optim;
mod params;
mod tensor;

pub use graph::{Gradients, Graph, LrnParams, NodeId};
pub use optim::{rmsprop_step, sgd_step, Optimizer, RmsPropConfig};
pub use params::ParamSet;
pub use tensor::Tensor;

/// Math shims routed through `libm` so results do not depend on the
/// platform libm or the `std` feature.
pub(crate) mod math {
    #[inline]
    pub fn exp(x: f64) -> f64 {
        libm::exp(x)
    }
    #[inline]
    pub fn ln(x: f64) -> f64 {
        libm::log(x)
    }
    #[inline]
    pub fn sqrt(x: f64) -> f64 {
        libm::sqrt(x)
    }
    #[inline]
    pub fn tanh(x: f64) -> f64 {
        libm::tanh(x)
    }
    #[inline]
    pub fn powf(x: f64, y: f64) -> f64 {
        libm::pow(x, y)
    }
    #[inline]
    pub fn sigmoid(x: f64) -> f64 {
        1.0 / (1.0 + exp(-x))
    }
}
