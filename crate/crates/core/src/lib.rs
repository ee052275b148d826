//! Trajectory forecasting with static scene context, at desk scale.
//!
//! The crate is organized around four layers:
//!
//! * [`ndgrad`] — dense f64 tensors with reverse-mode automatic
//!   differentiation (define-by-run tape) plus SGD/RMSProp steps.
//! * [`scene`] — scenes, trajectories, grid geometry, frame subsampling,
//!   and ground-truth step-likelihood maps.
//! * [`sscn`] / [`pool`] / [`seq2seq`] — the static-context CNN, the
//!   social/reachability pooling tensors, and the attention
//!   encoder-decoder emitting bivariate-Gaussian positions.
//! * [`traineval`] — synthetic scene generators, training loops,
//!   ADE/FDE metrics, and the leave-one-out harness.
//!
//! Everything here is pure computation over `alloc` collections; file
//! formats, PNG decoding, and the CLI live in the companion `trajcast`
//! crate. All math goes through `libm` so results are identical with or
//! without `std`.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod error;
pub mod ndgrad;
pub mod pool;
pub mod scene;
pub mod seq2seq;
pub mod sscn;
pub mod traineval;

pub mod gradcheck;

pub use error::{Error, Result};
pub use ndgrad::{Graph, NodeId, Tensor};
