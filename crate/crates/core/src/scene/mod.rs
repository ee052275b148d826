//! Scenes, trajectories, grid geometry, and ground-truth likelihood maps.

mod annotations;
mod likelihood;
mod raster;

pub use annotations::parse_annotations;
pub use likelihood::{build_ground_truth_map, LikelihoodMap};
pub use raster::{extract_patch, Raster};

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Semantic class of a moving subject (pedestrian, biker, ...).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct SubjectClass(pub u16);

impl SubjectClass {
    pub const PEDESTRIAN: SubjectClass = SubjectClass(0);

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// One annotated position: time index and scene-normalized coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub frame: u32,
    /// `(x, y)` in `[0,1]^2`, normalized by image width/height.
    pub pos: [f64; 2],
}

/// The full annotated track of one subject.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub class: SubjectClass,
    pub points: Vec<TrajectoryPoint>,
}

impl Track {
    /// Position at `frame`, if annotated.
    pub fn at_frame(&self, frame: u32) -> Option<[f64; 2]> {
        self.points
            .binary_search_by_key(&frame, |p| p.frame)
            .ok()
            .map(|i| self.points[i].pos)
    }
}

/// A static camera scene: one image raster plus per-subject tracks.
///
/// Positions are stored scene-normalized; `frame_stride` records how many
/// raw video frames one time step spans (1 for raw annotations, multiplied
/// by [`subsample`]).
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub image: Raster,
    pub frame_stride: u32,
    pub tracks: BTreeMap<u64, Track>,
}

impl Scene {
    pub fn new(image: Raster, frame_stride: u32, tracks: BTreeMap<u64, Track>) -> Result<Self> {
        for (id, track) in &tracks {
            for pair in track.points.windows(2) {
                if pair[1].frame <= pair[0].frame {
                    return Err(Error::data(format!(
                        "subject {id}: frames not strictly increasing"
                    )));
                }
            }
            for p in &track.points {
                if !(0.0..=1.0).contains(&p.pos[0]) || !(0.0..=1.0).contains(&p.pos[1]) {
                    return Err(Error::data(format!(
                        "subject {id}: position outside the scene at frame {}",
                        p.frame
                    )));
                }
            }
        }
        Ok(Scene {
            image,
            frame_stride,
            tracks,
        })
    }

    /// Number of distinct subjects of a class.
    pub fn subject_count(&self, class: SubjectClass) -> usize {
        self.tracks.values().filter(|t| t.class == class).count()
    }

    /// Subjects present (annotated) at the given frame.
    pub fn subjects_at(&self, frame: u32) -> Vec<(u64, SubjectClass, [f64; 2])> {
        self.tracks
            .iter()
            .filter_map(|(&id, t)| t.at_frame(frame).map(|pos| (id, t.class, pos)))
            .collect()
    }

    /// Order-independent content hash (FNV-1a over tracks and image size).
    /// Used to derive per-fold seeds in leave-one-out evaluation.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |v: u64| {
            for byte in v.to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        eat(self.image.width() as u64);
        eat(self.image.height() as u64);
        eat(self.frame_stride as u64);
        for (&id, track) in &self.tracks {
            eat(id);
            eat(track.class.0 as u64);
            for p in &track.points {
                eat(p.frame as u64);
                eat(p.pos[0].to_bits());
                eat(p.pos[1].to_bits());
            }
        }
        h
    }
}

/// Keep one frame in every `stride`, re-indexing time steps to consecutive
/// integers. Tracks left with no retained frame are dropped.
pub fn subsample(scene: &Scene, stride: u32) -> Result<Scene> {
    if stride == 0 {
        return Err(Error::contract("subsample stride must be >= 1"));
    }
    if stride == 1 {
        return Ok(scene.clone());
    }
    let mut tracks = BTreeMap::new();
    for (&id, track) in &scene.tracks {
        let points: Vec<TrajectoryPoint> = track
            .points
            .iter()
            .filter(|p| p.frame % stride == 0)
            .map(|p| TrajectoryPoint {
                frame: p.frame / stride,
                pos: p.pos,
            })
            .collect();
        if !points.is_empty() {
            tracks.insert(
                id,
                Track {
                    class: track.class,
                    points,
                },
            );
        }
    }
    Ok(Scene {
        image: scene.image.clone(),
        frame_stride: scene.frame_stride * stride,
        tracks,
    })
}

/// Square grid over a scene image. Cell membership uses half-open pixel
/// intervals `[lo, hi)`; the outer image boundary closes the last cell so
/// points at exactly the right/bottom edge stay inside the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct GridSpec {
    pub cell_px: u32,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { cell_px: 60 }
    }
}

impl GridSpec {
    pub fn new(cell_px: u32) -> Result<Self> {
        if cell_px == 0 {
            return Err(Error::contract("grid cell size must be positive"));
        }
        Ok(GridSpec { cell_px })
    }

    pub fn rows(&self, image_h: usize) -> usize {
        image_h.div_ceil(self.cell_px as usize)
    }

    pub fn cols(&self, image_w: usize) -> usize {
        image_w.div_ceil(self.cell_px as usize)
    }

    /// Grid cell of a normalized position.
    pub fn cell_of(&self, pos: [f64; 2], image_w: usize, image_h: usize) -> (usize, usize) {
        let px = pos[0] * image_w as f64;
        let py = pos[1] * image_h as f64;
        self.cell_of_px(px, py, image_w, image_h)
    }

    /// Grid cell of a pixel position.
    pub fn cell_of_px(&self, px: f64, py: f64, image_w: usize, image_h: usize) -> (usize, usize) {
        let cell = self.cell_px as f64;
        // f64 -> usize casts saturate, so negatives clamp to 0.
        let col = ((px / cell) as usize).min(self.cols(image_w) - 1);
        let row = ((py / cell) as usize).min(self.rows(image_h) - 1);
        (row, col)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_scene(points: &[(u64, u16, u32, f64, f64)]) -> Scene {
        let mut tracks: BTreeMap<u64, Track> = BTreeMap::new();
        for &(id, class, frame, x, y) in points {
            tracks
                .entry(id)
                .or_insert_with(|| Track {
                    class: SubjectClass(class),
                    points: Vec::new(),
                })
                .points
                .push(TrajectoryPoint {
                    frame,
                    pos: [x, y],
                });
        }
        Scene::new(Raster::filled(100, 100, 0.5), 1, tracks).unwrap()
    }

    #[test]
    fn subsample_keeps_multiples_and_reindexes() {
        let pts: Vec<(u64, u16, u32, f64, f64)> =
            (0..100).map(|f| (1, 0, f, 0.5, 0.5)).collect();
        let scene = tiny_scene(&pts);
        let sub = subsample(&scene, 10).unwrap();
        let track = &sub.tracks[&1];
        assert_eq!(track.points.len(), 10);
        let frames: Vec<u32> = track.points.iter().map(|p| p.frame).collect();
        assert_eq!(frames, (0..10).collect::<Vec<u32>>());
        assert_eq!(sub.frame_stride, 10);
    }

    #[test]
    fn subsample_stride_one_is_identity() {
        let scene = tiny_scene(&[(1, 0, 0, 0.1, 0.1), (1, 0, 3, 0.2, 0.2)]);
        assert_eq!(subsample(&scene, 1).unwrap(), scene);
    }

    #[test]
    fn subsample_drops_tracks_with_no_retained_frame() {
        let scene = tiny_scene(&[(1, 0, 5, 0.1, 0.1), (2, 0, 10, 0.2, 0.2)]);
        let sub = subsample(&scene, 10).unwrap();
        assert!(!sub.tracks.contains_key(&1));
        assert!(sub.tracks.contains_key(&2));
    }

    #[test]
    fn grid_dims_round_up() {
        let g = GridSpec { cell_px: 60 };
        assert_eq!(g.rows(240), 4);
        assert_eq!(g.rows(250), 5);
        assert_eq!(g.cols(60), 1);
    }

    #[test]
    fn cell_membership_is_half_open() {
        let g = GridSpec { cell_px: 10 };
        // Pixel exactly on a shared boundary belongs to the upper cell.
        assert_eq!(g.cell_of_px(10.0, 0.0, 100, 100), (0, 1));
        assert_eq!(g.cell_of_px(9.999, 0.0, 100, 100), (0, 0));
        // The outer edge stays inside the last cell.
        assert_eq!(g.cell_of_px(100.0, 100.0, 100, 100), (9, 9));
    }
}
