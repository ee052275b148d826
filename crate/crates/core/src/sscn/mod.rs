//! Spatially static context network.
//!
//! Three input streams — subject class, local patch, whole-scene context —
//! are merged through dense layers into a single sigmoid neuron estimating
//! the likelihood that a subject of the class ever steps on the patch's
//! center cell. Trained with cross entropy against ground-truth visit
//! frequencies; the trained network paints per-class likelihood maps that
//! static context pooling reads at prediction time.

mod model;
mod train;

pub use model::{SscnBinding, SscnConfig, SscnModel};
pub use train::{
    build_map, dataset_from_scene, train, Dataset, Example, TrainOptions,
};

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::ndgrad::{Graph, NodeId};

/// Predictions are clamped to `[MU_EPS, 1 - MU_EPS]` inside the loss.
pub const MU_EPS: f64 = 1e-7;

/// Mean binary cross entropy between predicted likelihood nodes and fixed
/// targets: `-(1/n) * sum(mu*log(p) + (1-mu)*log(1-p))`.
pub fn bce_loss(g: &mut Graph, preds: &[(NodeId, f64)]) -> Result<NodeId> {
    if preds.is_empty() {
        return Err(Error::contract("bce_loss over an empty batch"));
    }
    let mut terms = Vec::with_capacity(preds.len());
    for &(pred, target) in preds {
        if !(0.0..=1.0).contains(&target) {
            return Err(Error::contract("bce_loss target outside [0,1]"));
        }
        let p = g.clamp(pred, MU_EPS, 1.0 - MU_EPS);
        let log_p = g.log(p);
        let one_minus = g.affine(p, -1.0, 1.0);
        let log_q = g.log(one_minus);
        let a = g.affine(log_p, target, 0.0);
        let b = g.affine(log_q, 1.0 - target, 0.0);
        terms.push(g.add(a, b)?);
    }
    let stacked = g.concat(&terms)?;
    let total = g.sum(stacked);
    Ok(g.affine(total, -1.0 / preds.len() as f64, 0.0))
}
