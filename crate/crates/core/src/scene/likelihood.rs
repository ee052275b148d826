use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

use super::{GridSpec, Scene, SubjectClass};

/// Per-class grid of step-likelihood values in `[0,1]` over a scene.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodMap {
    pub class: SubjectClass,
    pub rows: usize,
    pub cols: usize,
    values: Vec<f64>,
}

impl LikelihoodMap {
    pub fn new(class: SubjectClass, rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::data("likelihood map size mismatch"));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::data("likelihood map value outside [0,1]"));
        }
        Ok(LikelihoodMap {
            class,
            rows,
            cols,
            values,
        })
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Ground-truth map for one class: each cell holds the fraction of unique
/// subjects of that class that ever occupy the cell during their track.
/// A subject crossing a cell many times still counts once.
pub fn build_ground_truth_map(
    scene: &Scene,
    class: SubjectClass,
    grid: &GridSpec,
) -> Result<LikelihoodMap> {
    let (w, h) = (scene.image.width(), scene.image.height());
    let (rows, cols) = (grid.rows(h), grid.cols(w));
    let total = scene.subject_count(class);
    if total == 0 {
        return Err(Error::data(format!(
            "no subjects of class {} in scene",
            class.0
        )));
    }
    let mut counts = vec![0usize; rows * cols];
    for track in scene.tracks.values().filter(|t| t.class == class) {
        let mut visited: BTreeSet<(usize, usize)> = BTreeSet::new();
        for p in &track.points {
            visited.insert(grid.cell_of(p.pos, w, h));
        }
        for (r, c) in visited {
            counts[r * cols + c] += 1;
        }
    }
    let values = counts
        .into_iter()
        .map(|c| c as f64 / total as f64)
        .collect();
    LikelihoodMap::new(class, rows, cols, values)
}
