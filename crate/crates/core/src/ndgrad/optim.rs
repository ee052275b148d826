use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};

use crate::error::{Error, Result};

use super::math;
use super::tensor::Tensor;

/// RMSProp hyperparameters. Epsilon sits inside the square root:
/// `p -= lr * g / sqrt(cache + eps)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmsPropConfig {
    pub decay: f64,
    pub eps: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        RmsPropConfig {
            decay: 0.9,
            eps: 1e-8,
        }
    }
}

/// Plain SGD update. Errors on a non-finite gradient, naming the parameter.
pub fn sgd_step(name: &str, param: &mut Tensor, grad: &Tensor, lr: f64) -> Result<()> {
    check_grad(name, param, grad)?;
    for (p, g) in param.data_mut().iter_mut().zip(grad.data().iter()) {
        *p -= lr * g;
    }
    Ok(())
}

/// RMSProp update against a per-parameter cache of squared gradients.
pub fn rmsprop_step(
    name: &str,
    param: &mut Tensor,
    grad: &Tensor,
    lr: f64,
    cfg: RmsPropConfig,
    cache: &mut Tensor,
) -> Result<()> {
    check_grad(name, param, grad)?;
    for ((p, g), c) in param
        .data_mut()
        .iter_mut()
        .zip(grad.data().iter())
        .zip(cache.data_mut().iter_mut())
    {
        *c = cfg.decay * *c + (1.0 - cfg.decay) * g * g;
        *p -= lr * g / math::sqrt(*c + cfg.eps);
    }
    Ok(())
}

fn check_grad(name: &str, param: &Tensor, grad: &Tensor) -> Result<()> {
    if param.shape() != grad.shape() {
        return Err(Error::shape("optimizer", param.shape(), grad.shape()));
    }
    if !grad.is_finite() {
        return Err(Error::train(format!(
            "non-finite gradient for parameter `{name}`"
        )));
    }
    Ok(())
}

/// Stateful optimizer over named parameters.
#[derive(Debug, Clone)]
pub enum Optimizer {
    Sgd {
        lr: f64,
    },
    RmsProp {
        lr: f64,
        cfg: RmsPropConfig,
        cache: BTreeMap<String, Tensor>,
    },
}

impl Optimizer {
    pub fn sgd(lr: f64) -> Self {
        Optimizer::Sgd { lr }
    }

    pub fn rmsprop(lr: f64) -> Self {
        Optimizer::RmsProp {
            lr,
            cfg: RmsPropConfig::default(),
            cache: BTreeMap::new(),
        }
    }

    pub fn step(&mut self, name: &str, param: &mut Tensor, grad: &Tensor) -> Result<()> {
        match self {
            Optimizer::Sgd { lr } => sgd_step(name, param, grad, *lr),
            Optimizer::RmsProp { lr, cfg, cache } => {
                let cache = cache
                    .entry(name.to_string())
                    .or_insert_with(|| Tensor::zeros(param.shape()));
                rmsprop_step(name, param, grad, *lr, *cfg, cache)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_moves_against_gradient() {
        let mut p = Tensor::scalar(1.0);
        sgd_step("p", &mut p, &Tensor::scalar(2.0), 0.1).unwrap();
        assert!((p.data()[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn rmsprop_zero_gradient_leaves_parameter_unchanged() {
        let mut p = Tensor::scalar(0.7);
        let mut cache = Tensor::zeros(&[1]);
        rmsprop_step(
            "p",
            &mut p,
            &Tensor::scalar(0.0),
            0.003,
            RmsPropConfig::default(),
            &mut cache,
        )
        .unwrap();
        assert_eq!(p.data()[0], 0.7);
    }

    #[test]
    fn rmsprop_single_step_matches_hand_computed_rule() {
        // decay 0.9, eps 1e-8, g = 1, lr = 0.003:
        // cache = 0.1, p -= 0.003 / sqrt(0.1 + 1e-8)
        let mut p = Tensor::scalar(0.0);
        let mut cache = Tensor::zeros(&[1]);
        rmsprop_step(
            "p",
            &mut p,
            &Tensor::scalar(1.0),
            0.003,
            RmsPropConfig::default(),
            &mut cache,
        )
        .unwrap();
        let expected = -0.003 / math::sqrt(0.1 + 1e-8);
        assert!((p.data()[0] - expected).abs() < 1e-15);
        assert!((expected - (-0.009486832506163525)).abs() < 1e-15);
    }

    #[test]
    fn nan_gradient_names_parameter() {
        let mut p = Tensor::scalar(1.0);
        let err = sgd_step("w_enc", &mut p, &Tensor::scalar(f64::NAN), 0.1).unwrap_err();
        match err {
            Error::Train(msg) => assert!(msg.contains("w_enc")),
            other => panic!("expected train error, got {other:?}"),
        }
    }
}
