use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

use super::optim::Optimizer;
use super::tensor::Tensor;

/// A model with named weight tensors.
///
/// Names are stable and returned in a fixed order so checkpoints and
/// optimizer state stay deterministic.
pub trait ParamSet {
    fn param_names(&self) -> Vec<String>;
    fn param(&self, name: &str) -> Option<&Tensor>;
    fn param_mut(&mut self, name: &str) -> Option<&mut Tensor>;

    fn named_params(&self) -> Vec<(String, Tensor)> {
        self.param_names()
            .into_iter()
            .map(|n| {
                let t = self.param(&n).expect("param_names lists a missing tensor");
                (n, t.clone())
            })
            .collect()
    }

    /// Apply one optimizer step per named gradient. Parameters without a
    /// gradient entry are left untouched.
    fn apply_grads(&mut self, opt: &mut Optimizer, grads: &[(String, Tensor)]) -> Result<()>
    where
        Self: Sized,
    {
        for (name, grad) in grads {
            let param = self
                .param_mut(name)
                .ok_or_else(|| Error::contract("gradient for unknown parameter"))?;
            opt.step(name, param, grad)?;
        }
        Ok(())
    }
}
