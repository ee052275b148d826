use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::ndgrad::{Graph, NodeId, Tensor};

const LN_TWO_PI: f64 = 1.8378770664093453;

/// Parameters of a bivariate Gaussian over the next position, in normalized
/// scene coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianParams {
    pub mu: [f64; 2],
    pub sigma: [f64; 2],
    pub rho: f64,
}

impl GaussianParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma[0] > 0.0 && self.sigma[1] > 0.0) {
            return Err(Error::contract("gaussian sigma must be positive"));
        }
        if !(self.rho.abs() < 1.0) {
            return Err(Error::contract("gaussian correlation must be in (-1, 1)"));
        }
        Ok(())
    }
}

/// Negative log density of the bivariate normal at `x`.
pub fn nll(p: &GaussianParams, x: [f64; 2]) -> f64 {
    let zx = (x[0] - p.mu[0]) / p.sigma[0];
    let zy = (x[1] - p.mu[1]) / p.sigma[1];
    let q = 1.0 - p.rho * p.rho;
    let z = zx * zx + zy * zy - 2.0 * p.rho * zx * zy;
    LN_TWO_PI
        + libm::log(p.sigma[0])
        + libm::log(p.sigma[1])
        + 0.5 * libm::log(q)
        + z / (2.0 * q)
}

/// Draw a position: a standard-normal pair pushed through the
/// lower-triangular factor of the covariance, shifted by the mean.
pub fn sample<R: Rng>(p: &GaussianParams, rng: &mut R) -> [f64; 2] {
    let z1: f64 = rng.sample(StandardNormal);
    let z2: f64 = rng.sample(StandardNormal);
    let x = p.mu[0] + p.sigma[0] * z1;
    let y = p.mu[1] + p.sigma[1] * (p.rho * z1 + libm::sqrt(1.0 - p.rho * p.rho) * z2);
    [x, y]
}

/// Graph handles for the five distribution parameters of one step.
#[derive(Debug, Clone, Copy)]
pub struct GaussianNodes {
    pub mu: [NodeId; 2],
    pub sigma: [NodeId; 2],
    pub rho: NodeId,
}

impl GaussianNodes {
    /// Map a raw 5-vector `o` onto valid parameters:
    /// `mu = (o1, o2)`, `sigma = exp(o3, o4)`, `rho = tanh(o5)`.
    pub fn from_raw(g: &mut Graph, raw: NodeId) -> Result<Self> {
        if g.value(raw).shape() != [5] {
            return Err(Error::shape("gaussian_head", g.value(raw).shape(), &[5]));
        }
        let mu_x = g.at(raw, 0)?;
        let mu_y = g.at(raw, 1)?;
        let s_x = g.at(raw, 2)?;
        let s_x = g.exp(s_x);
        let s_y = g.at(raw, 3)?;
        let s_y = g.exp(s_y);
        let r = g.at(raw, 4)?;
        let r = g.tanh(r);
        Ok(GaussianNodes {
            mu: [mu_x, mu_y],
            sigma: [s_x, s_y],
            rho: r,
        })
    }

    /// Concrete values of the current graph state.
    pub fn concrete(&self, g: &Graph) -> Result<GaussianParams> {
        Ok(GaussianParams {
            mu: [g.value(self.mu[0]).item()?, g.value(self.mu[1]).item()?],
            sigma: [g.value(self.sigma[0]).item()?, g.value(self.sigma[1]).item()?],
            rho: g.value(self.rho).item()?,
        })
    }

    /// Negative log likelihood of the fixed position `x` under these
    /// parameter nodes, as a scalar graph node.
    pub fn nll_node(&self, g: &mut Graph, x: [f64; 2]) -> Result<NodeId> {
        let dx = g.affine(self.mu[0], -1.0, x[0]);
        let dy = g.affine(self.mu[1], -1.0, x[1]);
        let zx = g.div(dx, self.sigma[0])?;
        let zy = g.div(dy, self.sigma[1])?;
        let zx2 = g.mul(zx, zx)?;
        let zy2 = g.mul(zy, zy)?;
        let zxzy = g.mul(zx, zy)?;
        let cross = g.mul(self.rho, zxzy)?;
        let cross = g.affine(cross, -2.0, 0.0);
        let z = g.add(zx2, zy2)?;
        let z = g.add(z, cross)?;
        let rho2 = g.mul(self.rho, self.rho)?;
        let q = g.affine(rho2, -1.0, 1.0);
        let log_sx = g.log(self.sigma[0]);
        let log_sy = g.log(self.sigma[1]);
        let log_q = g.log(q);
        let half_log_q = g.affine(log_q, 0.5, 0.0);
        let two_q = g.affine(q, 2.0, 0.0);
        let z_over = g.div(z, two_q)?;
        let mut acc = g.affine(log_sx, 1.0, LN_TWO_PI);
        acc = g.add(acc, log_sy)?;
        acc = g.add(acc, half_log_q)?;
        g.add(acc, z_over)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck;
    use crate::traineval::seeded_rng;
    use alloc::vec::Vec;

    #[test]
    fn nll_at_mean_unit_sigma_is_ln_two_pi() {
        let p = GaussianParams {
            mu: [0.3, -0.2],
            sigma: [1.0, 1.0],
            rho: 0.0,
        };
        assert!((nll(&p, p.mu) - LN_TWO_PI).abs() < 1e-9);
        assert!((LN_TWO_PI - 1.837877).abs() < 1e-6);
    }

    #[test]
    fn nll_at_mean_with_correlation() {
        let p = GaussianParams {
            mu: [0.0, 0.0],
            sigma: [1.0, 1.0],
            rho: 0.5,
        };
        // log(2 pi sqrt(1 - 0.25))
        let expected = LN_TWO_PI + 0.5 * libm::log(0.75);
        assert!((nll(&p, [0.0, 0.0]) - expected).abs() < 1e-9);
        assert!((expected - 1.694036).abs() < 1e-6);
    }

    #[test]
    fn graph_nll_matches_pure_nll() {
        let mut g = Graph::new();
        let raw = g.leaf(Tensor::vector(&[0.2, -0.4, -0.3, 0.1, 0.6]));
        let nodes = GaussianNodes::from_raw(&mut g, raw).unwrap();
        let x = [0.05, 0.3];
        let node = nodes.nll_node(&mut g, x).unwrap();
        let params = nodes.concrete(&g).unwrap();
        assert!((g.value(node).item().unwrap() - nll(&params, x)).abs() < 1e-12);
    }

    #[test]
    fn raw_zero_head_gives_unit_gaussian() {
        let mut g = Graph::new();
        let raw = g.leaf(Tensor::zeros(&[5]));
        let nodes = GaussianNodes::from_raw(&mut g, raw).unwrap();
        let p = nodes.concrete(&g).unwrap();
        assert_eq!(p.mu, [0.0, 0.0]);
        assert_eq!(p.sigma, [1.0, 1.0]);
        assert_eq!(p.rho, 0.0);
        p.validate().unwrap();
    }

    #[test]
    fn head_outputs_are_always_valid() {
        let mut rng = seeded_rng(3);
        for _ in 0..50 {
            let raw = Tensor::uniform(&[5], 5.0, &mut rng);
            let mut g = Graph::new();
            let leaf = g.leaf(raw);
            let nodes = GaussianNodes::from_raw(&mut g, leaf).unwrap();
            nodes.concrete(&g).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn nll_gradient_vs_finite_differences() {
        // Gradient with respect to all five raw head outputs.
        let raw = Tensor::vector(&[0.15, -0.2, -0.5, 0.3, 0.4]);
        let err = gradcheck::max_grad_error(&[raw], 1e-5, |g, ids| {
            let nodes = GaussianNodes::from_raw(g, ids[0])?;
            nodes.nll_node(g, [0.3, -0.1])
        })
        .unwrap();
        assert!(err < 1e-4, "nll gradient error {err:.3e}");
    }

    #[test]
    fn degenerate_sigma_collapses_to_mean() {
        let p = GaussianParams {
            mu: [0.4, 0.7],
            sigma: [1e-12, 1e-12],
            rho: 0.0,
        };
        let mut rng = seeded_rng(9);
        let s = sample(&p, &mut rng);
        assert!((s[0] - 0.4).abs() < 1e-9 && (s[1] - 0.7).abs() < 1e-9);
    }

    #[test]
    fn sample_statistics_match_parameters() {
        let p = GaussianParams {
            mu: [0.25, -0.5],
            sigma: [1.0, 2.0],
            rho: 0.8,
        };
        let mut rng = seeded_rng(1234);
        let n = 100_000;
        let draws: Vec<[f64; 2]> = (0..n).map(|_| sample(&p, &mut rng)).collect();
        let mean = |sel: fn(&[f64; 2]) -> f64| draws.iter().map(sel).sum::<f64>() / n as f64;
        let mx = mean(|d| d[0]);
        let my = mean(|d| d[1]);
        assert!((mx - p.mu[0]).abs() < 0.02);
        assert!((my - p.mu[1]).abs() < 0.02);
        let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
        for d in &draws {
            sxx += (d[0] - mx) * (d[0] - mx);
            syy += (d[1] - my) * (d[1] - my);
            sxy += (d[0] - mx) * (d[1] - my);
        }
        let corr = sxy / libm::sqrt(sxx * syy);
        assert!((0.77..=0.83).contains(&corr), "corr {corr}");
    }

    #[test]
    fn uncorrelated_samples_have_near_zero_correlation() {
        let p = GaussianParams {
            mu: [0.0, 0.0],
            sigma: [1.0, 1.0],
            rho: 0.0,
        };
        let mut rng = seeded_rng(77);
        let n = 100_000;
        let draws: Vec<[f64; 2]> = (0..n).map(|_| sample(&p, &mut rng)).collect();
        let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
        for d in &draws {
            sxx += d[0] * d[0];
            syy += d[1] * d[1];
            sxy += d[0] * d[1];
        }
        let corr = sxy / libm::sqrt(sxx * syy);
        assert!(corr.abs() < 0.02, "corr {corr}");
    }
}
