//! Attention encoder-decoder over subject trajectories.
//!
//! Positions, social tensors, and (in SD-ATT mode) reachability tensors are
//! sigmoid-embedded and fed to an encoder LSTM. A temporal attention window
//! over the last `k` encoder states conditions a decoder LSTM whose output
//! head parameterizes a bivariate Gaussian over the next position. Training
//! minimizes the negative log likelihood of the ground-truth future,
//! teacher-forced; inference feeds back sampled positions.

mod gaussian;
mod model;
mod rollout;

pub use gaussian::{nll, sample, GaussianNodes, GaussianParams};
pub use model::{
    lstm_step, ClassBinding, EncoderState, LstmState, Mode, ModelConfig, TrajBinding, TrajModel,
};
pub use rollout::{
    collect_windows, rollout, DecodeInputs, SceneMaps, SubjectPrediction, WindowGroup,
    WindowRun, WindowSubject, Windows,
};
