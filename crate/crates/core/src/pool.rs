//! Social and reachability context pooling.
//!
//! The social tensor grids the neighborhood around a subject and sums the
//! encoder hidden states of the neighbors occupying each cell, separated by
//! subject class. The reachability tensor is a window of static-map
//! likelihood values centered on the subject's current position.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndgrad::{Graph, NodeId, Tensor};
use crate::scene::{GridSpec, LikelihoodMap, SubjectClass};

/// Pooling geometry.
///
/// `d_s` is the social neighborhood side in normalized units, split into a
/// `g_s x g_s` grid. `d_r_px` is the reachability window side in pixels,
/// split into `g_p_px` cells.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct PoolConfig {
    pub d_s: f64,
    pub g_s: usize,
    pub d_h: usize,
    pub classes: usize,
    pub d_r_px: u32,
    pub g_p_px: u32,
    pub max_neighbors: usize,
}

impl Default for PoolConfig {
    fn default() -> Self {
        PoolConfig {
            d_s: 0.2,
            g_s: 4,
            d_h: 32,
            classes: 1,
            d_r_px: 60,
            g_p_px: 20,
            max_neighbors: 40,
        }
    }
}

impl PoolConfig {
    pub fn validate(&self) -> Result<()> {
        if self.g_s == 0 || self.d_h == 0 || self.classes == 0 {
            return Err(Error::contract("pool config: zero dimension"));
        }
        if self.d_s <= 0.0 {
            return Err(Error::contract("pool config: d_s must be positive"));
        }
        if self.g_p_px == 0 || self.d_r_px % self.g_p_px != 0 {
            return Err(Error::contract(
                "pool config: d_r_px must be a positive multiple of g_p_px",
            ));
        }
        Ok(())
    }

    /// Side of the reachability tensor in cells.
    pub fn reach_side(&self) -> usize {
        (self.d_r_px / self.g_p_px) as usize
    }

    /// Flattened social tensor length.
    pub fn social_len(&self) -> usize {
        self.g_s * self.g_s * self.d_h * self.classes
    }

    /// Social-grid cell of a neighbor relative to a target, if the neighbor
    /// lies inside the `d_s x d_s` window. Half-open intervals: a neighbor
    /// exactly on a shared boundary belongs to exactly one cell.
    pub fn social_cell(&self, target: [f64; 2], neighbor: [f64; 2]) -> Option<(usize, usize)> {
        let half = self.d_s / 2.0;
        let cell = self.d_s / self.g_s as f64;
        let ox = neighbor[0] - target[0] + half;
        let oy = neighbor[1] - target[1] + half;
        if ox < 0.0 || oy < 0.0 || ox >= self.d_s || oy >= self.d_s {
            return None;
        }
        let col = (ox / cell) as usize;
        let row = (oy / cell) as usize;
        if row >= self.g_s || col >= self.g_s {
            return None; // rounding at the upper edge
        }
        Some((row, col))
    }

    /// Flat offset of `(row, col, 0, class)` in a `[g_s, g_s, d_h, classes]`
    /// tensor; consecutive hidden elements are `classes` apart.
    fn slot_offset(&self, row: usize, col: usize, class: SubjectClass) -> usize {
        ((row * self.g_s + col) * self.d_h) * self.classes + class.index()
    }
}

/// A neighbor's state at one timestep: class, position, and the encoder
/// hidden state from the previous timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborState {
    pub class: SubjectClass,
    pub pos: [f64; 2],
    pub hidden: Vec<f64>,
}

/// Grid-pooled sum of neighbor hidden states, shaped `[g_s, g_s, d_h, C]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SocialTensor {
    g_s: usize,
    d_h: usize,
    classes: usize,
    values: Vec<f64>,
}

impl SocialTensor {
    #[inline]
    pub fn at(&self, row: usize, col: usize, h: usize, class: usize) -> f64 {
        self.values[((row * self.g_s + col) * self.d_h + h) * self.classes + class]
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Build the social tensor for one target from concrete neighbor states.
/// The caller must not include the target itself in `neighbors`.
pub fn social_tensor(
    target: [f64; 2],
    neighbors: &[NeighborState],
    cfg: &PoolConfig,
) -> Result<SocialTensor> {
    cfg.validate()?;
    let mut values = vec![0.0; cfg.social_len()];
    for n in neighbors {
        if n.hidden.len() != cfg.d_h {
            return Err(Error::shape("social_tensor", &[n.hidden.len()], &[cfg.d_h]));
        }
        if n.class.index() >= cfg.classes {
            return Err(Error::contract("social_tensor: class id out of range"));
        }
        if let Some((row, col)) = cfg.social_cell(target, n.pos) {
            let base = cfg.slot_offset(row, col, n.class);
            for (h, &v) in n.hidden.iter().enumerate() {
                values[base + h * cfg.classes] += v;
            }
        }
    }
    Ok(SocialTensor {
        g_s: cfg.g_s,
        d_h: cfg.d_h,
        classes: cfg.classes,
        values,
    })
}

/// Graph version of [`social_tensor`]: same geometry, but neighbor hidden
/// states are graph nodes so gradients flow back into the encoders that
/// produced them.
pub fn social_tensor_node(
    g: &mut Graph,
    target: [f64; 2],
    neighbors: &[(SubjectClass, [f64; 2], NodeId)],
    cfg: &PoolConfig,
) -> Result<NodeId> {
    let shape = [cfg.g_s, cfg.g_s, cfg.d_h, cfg.classes];
    let mut acc = g.leaf(Tensor::zeros(&shape));
    for &(class, pos, hidden) in neighbors {
        if g.value(hidden).shape() != [cfg.d_h] {
            return Err(Error::shape(
                "social_tensor",
                g.value(hidden).shape(),
                &[cfg.d_h],
            ));
        }
        if let Some((row, col)) = cfg.social_cell(target, pos) {
            let offset = cfg.slot_offset(row, col, class);
            let placed = g.scatter_strided(hidden, &shape, offset, cfg.classes)?;
            acc = g.add(acc, placed)?;
        }
    }
    Ok(acc)
}

/// Window of static-map likelihoods around a subject, `[side, side]` with
/// the subject at the center. Cells outside the image read 0 (unreachable).
#[derive(Debug, Clone, PartialEq)]
pub struct ReachabilityTensor {
    side: usize,
    values: Vec<f64>,
}

impl ReachabilityTensor {
    /// Wrap precomputed values (length must be `side * side`).
    pub fn from_values(side: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), side * side, "reachability tensor size");
        ReachabilityTensor { side, values }
    }

    #[inline]
    pub fn side(&self) -> usize {
        self.side
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.side + col]
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Extract the reachability tensor for a target position from a likelihood
/// map built over `grid` on an `image_w x image_h` scene.
pub fn reachability_tensor(
    target: [f64; 2],
    map: &LikelihoodMap,
    grid: &GridSpec,
    image_w: usize,
    image_h: usize,
    cfg: &PoolConfig,
) -> Result<ReachabilityTensor> {
    cfg.validate()?;
    if map.rows != grid.rows(image_h) || map.cols != grid.cols(image_w) {
        return Err(Error::contract(
            "reachability_tensor: map dimensions do not match grid",
        ));
    }
    let side = cfg.reach_side();
    let g_p = cfg.g_p_px as f64;
    let cx = target[0] * image_w as f64;
    let cy = target[1] * image_h as f64;
    let mut values = vec![0.0; side * side];
    for row in 0..side {
        let py = cy + (row as f64 - (side as f64 - 1.0) / 2.0) * g_p;
        for col in 0..side {
            let px = cx + (col as f64 - (side as f64 - 1.0) / 2.0) * g_p;
            let inside =
                px >= 0.0 && py >= 0.0 && px < image_w as f64 && py < image_h as f64;
            if inside {
                let (r, c) = grid.cell_of_px(px, py, image_w, image_h);
                values[row * side + col] = map.get(r, c);
            }
        }
    }
    Ok(ReachabilityTensor { side, values })
}

/// If more than `max_n` subjects share the frame, keep the `max_n` nearest
/// to the target by Euclidean distance, breaking ties by ascending subject
/// id. The result is sorted by `(distance, id)`.
pub fn truncate_neighbors(
    frame_subjects: &[(u64, SubjectClass, [f64; 2])],
    target: [f64; 2],
    max_n: usize,
) -> Vec<(u64, SubjectClass, [f64; 2])> {
    let mut scored: Vec<(f64, u64, SubjectClass, [f64; 2])> = frame_subjects
        .iter()
        .map(|&(id, class, pos)| {
            let dx = pos[0] - target[0];
            let dy = pos[1] - target[1];
            (dx * dx + dy * dy, id, class, pos)
        })
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    scored
        .into_iter()
        .take(max_n)
        .map(|(_, id, class, pos)| (id, class, pos))
        .collect()
}
