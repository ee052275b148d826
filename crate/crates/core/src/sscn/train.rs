use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::ndgrad::{Graph, Optimizer, ParamSet, Tensor};
use crate::scene::{build_ground_truth_map, extract_patch, GridSpec, LikelihoodMap, Scene, SubjectClass};
use crate::traineval::seeded_rng;

use super::model::{SscnConfig, SscnModel};
use super::bce_loss;

/// One training triplet: class, pre-resized patch, and the ground-truth
/// visit likelihood of the patch's center cell.
#[derive(Debug, Clone)]
pub struct Example {
    pub class: SubjectClass,
    pub patch: Tensor,
    pub target: f64,
}

/// All triplets of one scene, sharing the scene's resized context raster.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub context: Tensor,
    pub examples: Vec<Example>,
}

/// Build the training set for one scene and class by pairing every grid
/// cell with its ground-truth likelihood. All cells are used, visited or
/// not, without re-weighting.
pub fn dataset_from_scene(
    scene: &Scene,
    class: SubjectClass,
    grid: &GridSpec,
    cfg: &SscnConfig,
) -> Result<Dataset> {
    let map = build_ground_truth_map(scene, class, grid)?;
    let context = scene.image.resize(cfg.d_i, cfg.d_i)?.to_tensor_chw();
    let mut examples = Vec::with_capacity(map.rows * map.cols);
    for r in 0..map.rows {
        for c in 0..map.cols {
            let patch = extract_patch(&scene.image, (r, c), grid)?
                .resize(cfg.d_p, cfg.d_p)?
                .to_tensor_chw();
            examples.push(Example {
                class,
                patch,
                target: map.get(r, c),
            });
        }
    }
    Ok(Dataset { context, examples })
}

/// SSCN training hyperparameters (gradient-descent optimizer).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainOptions {
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            lr: 0.002,
            batch: 32,
            epochs: 20,
            seed: 0,
        }
    }
}

/// Minibatch SGD on the cross-entropy loss over all examples of all
/// datasets. Returns the mean loss of each epoch.
pub fn train(
    model: &mut SscnModel,
    datasets: &[Dataset],
    opts: &TrainOptions,
) -> Result<Vec<f64>> {
    let mut order: Vec<(usize, usize)> = datasets
        .iter()
        .enumerate()
        .flat_map(|(di, d)| (0..d.examples.len()).map(move |ei| (di, ei)))
        .collect();
    if order.is_empty() {
        return Err(Error::contract("sscn training set is empty"));
    }
    if opts.batch == 0 || opts.epochs == 0 {
        return Err(Error::contract("sscn training needs batch >= 1, epochs >= 1"));
    }
    let mut opt = Optimizer::sgd(opts.lr);
    let mut rng = seeded_rng(opts.seed);
    let mut epoch_losses = Vec::with_capacity(opts.epochs);
    for _ in 0..opts.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(opts.batch) {
            let mut g = Graph::new();
            let bind = model.bind(&mut g);
            let mut preds = Vec::with_capacity(chunk.len());
            for &(di, ei) in chunk {
                let ds = &datasets[di];
                let ex = &ds.examples[ei];
                let out = model.forward(&mut g, &bind, ex.class, &ex.patch, &ds.context)?;
                preds.push((out, ex.target));
            }
            let loss = bce_loss(&mut g, &preds)?;
            let lv = g.value(loss).item()?;
            if !lv.is_finite() {
                return Err(Error::train("sscn loss diverged (non-finite)"));
            }
            let grads = g.backward(loss)?;
            let named: Vec<(String, Tensor)> = bind
                .named_nodes()
                .iter()
                .filter_map(|(n, id)| grads.get(*id).map(|t| (n.clone(), t.clone())))
                .collect();
            model.apply_grads(&mut opt, &named)?;
            sum += lv;
            batches += 1;
        }
        epoch_losses.push(sum / batches as f64);
    }
    Ok(epoch_losses)
}

/// Evaluate the network on every grid cell of a scene to produce the
/// class's likelihood map.
pub fn build_map(
    scene: &Scene,
    class: SubjectClass,
    model: &SscnModel,
    grid: &GridSpec,
) -> Result<LikelihoodMap> {
    let (rows, cols) = (
        grid.rows(scene.image.height()),
        grid.cols(scene.image.width()),
    );
    let context = scene.image.resize(model.cfg.d_i, model.cfg.d_i)?.to_tensor_chw();
    let mut values = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let patch = extract_patch(&scene.image, (r, c), grid)?
                .resize(model.cfg.d_p, model.cfg.d_p)?
                .to_tensor_chw();
            let mut g = Graph::new();
            let bind = model.bind(&mut g);
            let out = model.forward(&mut g, &bind, class, &patch, &context)?;
            values.push(g.value(out).item()?);
        }
    }
    LikelihoodMap::new(class, rows, cols, values)
}
