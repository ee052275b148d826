//! Central finite-difference oracles for gradient verification.
//!
//! These helpers never touch the reverse pass: they re-run the forward
//! computation with perturbed inputs, so they stay independent of the
//! gradients they are used to check. Intended for test suites; nothing in
//! the library itself calls into this module.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::Result;
use crate::ndgrad::{Graph, NodeId, ParamSet, Tensor};

/// Relative error as used throughout the gradient suite:
/// `|a - b| / max(1e-8, |a| + |b|)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / f64::max(1e-8, a.abs() + b.abs())
}

/// Max relative error between analytic gradients and central finite
/// differences for a scalar function of the given input tensors.
///
/// `build` must construct the scalar loss from the leaves it is handed, and
/// is re-invoked for every perturbed evaluation.
pub fn max_grad_error(
    inputs: &[Tensor],
    eps: f64,
    build: impl Fn(&mut Graph, &[NodeId]) -> Result<NodeId>,
) -> Result<f64> {
    let eval = |tensors: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = tensors.iter().map(|t| g.leaf(t.clone())).collect();
        let loss = build(&mut g, &ids)?;
        g.value(loss).item()
    };

    let mut g = Graph::new();
    let ids: Vec<NodeId> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let loss = build(&mut g, &ids)?;
    let grads = g.backward(loss)?;

    let mut work = inputs.to_vec();
    let mut worst: f64 = 0.0;
    for (ti, t) in inputs.iter().enumerate() {
        for j in 0..t.numel() {
            let orig = t.data()[j];
            work[ti].data_mut()[j] = orig + eps;
            let plus = eval(&work)?;
            work[ti].data_mut()[j] = orig - eps;
            let minus = eval(&work)?;
            work[ti].data_mut()[j] = orig;
            let fd = (plus - minus) / (2.0 * eps);
            let analytic = grads.get(ids[ti]).map(|g| g.data()[j]).unwrap_or(0.0);
            worst = worst.max(relative_error(analytic, fd));
        }
    }
    Ok(worst)
}

/// Finite-difference check of every graph operation, one entry per op.
///
/// Inputs are seeded random values in `[-1, 1]`, pushed away from the kinks
/// of relu/maxpool/clamp so the central difference is valid, and each op's
/// output is reduced to a scalar through a fixed random projection so
/// asymmetric gradient errors cannot cancel.
pub fn all_op_checks(eps: f64) -> Result<Vec<(&'static str, f64)>> {
    let mut rng = crate::traineval::seeded_rng(0x9d2c5680);
    let mut rand_t = |shape: &[usize]| Tensor::uniform(shape, 1.0, &mut rng);
    // Keep |x| >= 0.05 for ops with kinks or poles.
    let away = |t: &Tensor, floor: f64| {
        t.map(|v| {
            let s = if v < 0.0 { -1.0 } else { 1.0 };
            s * (v.abs() + floor)
        })
    };
    let project = |g: &mut Graph, out: NodeId, w: &Tensor| -> Result<NodeId> {
        let flat = g.flatten(out);
        let wn = g.leaf(w.clone());
        g.dot(flat, wn)
    };

    let mut results = Vec::new();
    let mut check = |name: &'static str,
                     inputs: Vec<Tensor>,
                     build: &dyn Fn(&mut Graph, &[NodeId]) -> Result<NodeId>|
     -> Result<()> {
        let err = max_grad_error(&inputs, eps, build)?;
        results.push((name, err));
        Ok(())
    };

    let a = rand_t(&[3, 4]);
    let b = rand_t(&[3, 4]);
    let w12 = rand_t(&[12]);
    {
        let w = w12.clone();
        check("add", alloc::vec![a.clone(), b.clone()], &move |g, ids| {
            let y = g.add(ids[0], ids[1])?;
            project(g, y, &w)
        })?;
        let w = w12.clone();
        check("sub", alloc::vec![a.clone(), b.clone()], &move |g, ids| {
            let y = g.sub(ids[0], ids[1])?;
            project(g, y, &w)
        })?;
        let w = w12.clone();
        check("mul", alloc::vec![a.clone(), b.clone()], &move |g, ids| {
            let y = g.mul(ids[0], ids[1])?;
            project(g, y, &w)
        })?;
        let w = w12.clone();
        let bb = away(&b, 0.3);
        check("div", alloc::vec![a.clone(), bb], &move |g, ids| {
            let y = g.div(ids[0], ids[1])?;
            project(g, y, &w)
        })?;
        let w = w12.clone();
        check("affine", alloc::vec![a.clone()], &move |g, ids| {
            let y = g.affine(ids[0], -1.7, 0.4);
            project(g, y, &w)
        })?;
    }

    for (name, f) in [
        ("sigmoid", (|g: &mut Graph, x| g.sigmoid(x)) as fn(&mut Graph, NodeId) -> NodeId),
        ("tanh", |g, x| g.tanh(x)),
        ("exp", |g, x| g.exp(x)),
    ] {
        let x = rand_t(&[6]);
        let w = rand_t(&[6]);
        check(name, alloc::vec![x], &move |g, ids| {
            let y = f(g, ids[0]);
            project(g, y, &w)
        })?;
    }
    {
        let x = away(&rand_t(&[6]), 0.05);
        let w = rand_t(&[6]);
        check("relu", alloc::vec![x], &move |g, ids| {
            let y = g.relu(ids[0]);
            project(g, y, &w)
        })?;
    }
    for name in ["log", "sqrt"] {
        let x = rand_t(&[6]).map(|v| v.abs() + 0.2);
        let w = rand_t(&[6]);
        check(name, alloc::vec![x], &move |g, ids| {
            let y = if name == "log" { g.log(ids[0]) } else { g.sqrt(ids[0]) };
            project(g, y, &w)
        })?;
    }
    {
        // Half the points clamped, half pass-through, all >= 0.05 from the bounds.
        let x = rand_t(&[8]).map(|v| v * 2.0).map(|v| {
            if (v.abs() - 0.5).abs() < 0.05 {
                v + 0.1
            } else {
                v
            }
        });
        let w = rand_t(&[8]);
        check("clamp", alloc::vec![x], &move |g, ids| {
            let y = g.clamp(ids[0], -0.5, 0.5);
            project(g, y, &w)
        })?;
    }
    {
        let x = rand_t(&[5]);
        let w = rand_t(&[5]);
        check("softmax", alloc::vec![x], &move |g, ids| {
            let y = g.softmax(ids[0])?;
            project(g, y, &w)
        })?;
    }
    {
        let x = rand_t(&[7]);
        check("sum", alloc::vec![x], &|g, ids| Ok(g.sum(ids[0])))?;
        let x = rand_t(&[7]);
        check("mean", alloc::vec![x], &|g, ids| Ok(g.mean(ids[0])))?;
    }
    {
        let xs = alloc::vec![rand_t(&[3]), rand_t(&[2]), rand_t(&[4])];
        let w = rand_t(&[9]);
        check("concat", xs, &move |g, ids| {
            let y = g.concat(ids)?;
            project(g, y, &w)
        })?;
        let rows = alloc::vec![rand_t(&[4]), rand_t(&[4]), rand_t(&[4])];
        let w = rand_t(&[12]);
        check("stack_rows", rows, &move |g, ids| {
            let y = g.stack_rows(ids)?;
            project(g, y, &w)
        })?;
        let x = rand_t(&[9]);
        let w = rand_t(&[4]);
        check("slice", alloc::vec![x], &move |g, ids| {
            let y = g.slice(ids[0], 2, 4)?;
            project(g, y, &w)
        })?;
        let x = rand_t(&[4]);
        let w = rand_t(&[15]);
        check("scatter_strided", alloc::vec![x], &move |g, ids| {
            let y = g.scatter_strided(ids[0], &[15], 1, 3)?;
            project(g, y, &w)
        })?;
        let table = rand_t(&[5, 3]);
        let w = rand_t(&[3]);
        check("embedding", alloc::vec![table], &move |g, ids| {
            let y = g.embedding(ids[0], 2)?;
            project(g, y, &w)
        })?;
        let x = rand_t(&[10]);
        let w = rand_t(&[10]);
        check("flatten", alloc::vec![x], &move |g, ids| {
            let y = g.flatten(ids[0]);
            project(g, y, &w)
        })?;
    }
    {
        let a = rand_t(&[3, 4]);
        let b = rand_t(&[4, 2]);
        let w = rand_t(&[6]);
        check("matmul", alloc::vec![a.clone(), b.clone()], &move |g, ids| {
            let y = g.matmul(ids[0], ids[1])?;
            project(g, y, &w)
        })?;
        let v = rand_t(&[4]);
        let w = rand_t(&[3]);
        check("matmul_mat_vec", alloc::vec![a.clone(), v], &move |g, ids| {
            let y = g.matmul(ids[0], ids[1])?;
            project(g, y, &w)
        })?;
        let u = rand_t(&[3]);
        let w = rand_t(&[4]);
        check("matmul_vec_mat", alloc::vec![u, a], &move |g, ids| {
            let y = g.matmul(ids[0], ids[1])?;
            project(g, y, &w)
        })?;
    }
    {
        let x = rand_t(&[2, 6, 6]);
        let k = rand_t(&[3, 2, 3, 3]);
        let b = rand_t(&[3]);
        let w = rand_t(&[3 * 4 * 4]);
        check("conv2d", alloc::vec![x, k, b], &move |g, ids| {
            let y = g.conv2d(ids[0], ids[1], ids[2], 1)?;
            project(g, y, &w)
        })?;
        let x = rand_t(&[2, 7, 7]);
        let k = rand_t(&[2, 2, 3, 3]);
        let b = rand_t(&[2]);
        let w = rand_t(&[2 * 3 * 3]);
        check("conv2d_stride2", alloc::vec![x, k, b], &move |g, ids| {
            let y = g.conv2d(ids[0], ids[1], ids[2], 2)?;
            project(g, y, &w)
        })?;
        let x = rand_t(&[2, 6, 6]);
        let w = rand_t(&[2 * 3 * 3]);
        check("maxpool2d", alloc::vec![x], &move |g, ids| {
            let y = g.maxpool2d(ids[0], 2, 2)?;
            project(g, y, &w)
        })?;
        let x = rand_t(&[8, 3, 3]);
        let w = rand_t(&[8 * 3 * 3]);
        check("lrn", alloc::vec![x], &move |g, ids| {
            let y = g.lrn(ids[0], crate::ndgrad::LrnParams::default())?;
            project(g, y, &w)
        })?;
    }
    {
        let a = rand_t(&[6]);
        let b = rand_t(&[6]);
        check("dot", alloc::vec![a, b], &|g, ids| g.dot(ids[0], ids[1]))?;
    }

    Ok(results)
}

/// Max relative error over every named parameter of a model.
///
/// `analytic` runs the model's own forward/backward and returns named
/// gradients; `loss` is a forward-only evaluation used for the finite
/// differences.
pub fn model_grad_error<M: ParamSet>(
    model: &mut M,
    eps: f64,
    analytic: &[(String, Tensor)],
    loss: impl Fn(&M) -> Result<f64>,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for name in model.param_names() {
        let numel = model.param(&name).expect("named param").numel();
        let reported = analytic.iter().find(|(n, _)| *n == name).map(|(_, g)| g);
        for j in 0..numel {
            let orig = model.param(&name).unwrap().data()[j];
            model.param_mut(&name).unwrap().data_mut()[j] = orig + eps;
            let plus = loss(model)?;
            model.param_mut(&name).unwrap().data_mut()[j] = orig - eps;
            let minus = loss(model)?;
            model.param_mut(&name).unwrap().data_mut()[j] = orig;
            let fd = (plus - minus) / (2.0 * eps);
            let an = reported.map(|g| g.data()[j]).unwrap_or(0.0);
            worst = worst.max(relative_error(an, fd));
        }
    }
    Ok(worst)
}
