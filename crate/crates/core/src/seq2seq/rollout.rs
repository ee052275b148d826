use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::ndgrad::{Graph, NodeId};
use crate::pool::{reachability_tensor, social_tensor_node, truncate_neighbors, ReachabilityTensor};
use crate::scene::{GridSpec, LikelihoodMap, Scene, SubjectClass};
use crate::traineval::SeededRng;

use super::gaussian::{sample, GaussianParams};
use super::model::{EncoderState, TrajBinding, TrajModel};

/// One subject's slice of a window: `t_obs + n_pred` consecutive positions.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSubject {
    pub id: u64,
    pub class: SubjectClass,
    pub positions: Vec<[f64; 2]>,
}

/// All subjects fully present over one window of consecutive time steps.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowGroup {
    pub start: u32,
    pub subjects: Vec<WindowSubject>,
}

/// Windows extracted from a scene plus the subjects that were too short to
/// appear in any window.
#[derive(Debug, Clone, PartialEq)]
pub struct Windows {
    pub groups: Vec<WindowGroup>,
    pub skipped: Vec<u64>,
}

/// Enumerate window groups of `window_len` consecutive steps starting at
/// multiples of `stride`. A subject joins a group only if annotated at every
/// step of the window.
pub fn collect_windows(scene: &Scene, window_len: usize, stride: usize) -> Result<Windows> {
    if window_len == 0 || stride == 0 {
        return Err(Error::contract("collect_windows: zero length or stride"));
    }
    let Some(max_frame) = scene
        .tracks
        .values()
        .filter_map(|t| t.points.last().map(|p| p.frame))
        .max()
    else {
        return Ok(Windows {
            groups: Vec::new(),
            skipped: Vec::new(),
        });
    };
    let mut groups = Vec::new();
    let mut covered: BTreeMap<u64, bool> = scene.tracks.keys().map(|&id| (id, false)).collect();
    let mut t0 = 0u32;
    while t0 + window_len as u32 - 1 <= max_frame {
        let mut subjects = Vec::new();
        for (&id, track) in &scene.tracks {
            let positions: Option<Vec<[f64; 2]>> = (0..window_len as u32)
                .map(|dt| track.at_frame(t0 + dt))
                .collect();
            if let Some(positions) = positions {
                subjects.push(WindowSubject {
                    id,
                    class: track.class,
                    positions,
                });
                covered.insert(id, true);
            }
        }
        if !subjects.is_empty() {
            groups.push(WindowGroup { start: t0, subjects });
        }
        t0 += stride as u32;
    }
    let skipped = covered
        .into_iter()
        .filter_map(|(id, seen)| (!seen).then_some(id))
        .collect();
    Ok(Windows { groups, skipped })
}

/// Per-class likelihood maps for one scene, with the grid they were built
/// on, ready for reachability lookups.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneMaps {
    pub grid: GridSpec,
    pub image_w: usize,
    pub image_h: usize,
    pub maps: Vec<LikelihoodMap>,
}

impl SceneMaps {
    pub fn map_for(&self, class: SubjectClass) -> Result<&LikelihoodMap> {
        self.maps
            .iter()
            .find(|m| m.class == class)
            .ok_or_else(|| Error::contract(format!("no likelihood map for class {}", class.0)))
    }
}

/// Where the decoder's previous-position input comes from.
pub enum DecodeInputs<'a> {
    /// Ground truth at every step (training).
    TeacherForced,
    /// The model's own sampled prediction (inference).
    Sampled(&'a mut SeededRng),
    /// Pre-recorded positions, one list per subject (testing/replay).
    Replay(&'a [Vec<[f64; 2]>]),
}

/// Predicted future of one subject: distribution parameters and concrete
/// points for each of the `n_pred` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectPrediction {
    pub id: u64,
    pub class: SubjectClass,
    pub gaussians: Vec<GaussianParams>,
    pub points: Vec<[f64; 2]>,
}

/// Result of running the model over one window group.
pub struct WindowRun {
    /// Mean over subjects of the per-trajectory NLL sum. `None` when
    /// `n_pred` is zero.
    pub loss: Option<NodeId>,
    /// Per-subject NLL sums, aligned with the group's subject order.
    pub per_subject_nll: Vec<NodeId>,
    pub predictions: Vec<SubjectPrediction>,
    /// Final encoder hidden-state values, for inspection in tests.
    pub encoder_h: Vec<Vec<f64>>,
}

impl TrajModel {
    /// Encode every subject of the group jointly over `t_obs` steps, then
    /// decode `n_pred` steps per subject.
    ///
    /// The social tensor of subject `i` at step `t` pools the other
    /// subjects' hidden states from step `t - 1`; all subjects advance in
    /// lockstep. During decoding the attention window stays fixed to the
    /// last `k` encoder states and the pooled tensors are not rebuilt.
    pub fn run_window(
        &self,
        g: &mut Graph,
        bind: &TrajBinding,
        group: &WindowGroup,
        maps: Option<&SceneMaps>,
        decode: &mut DecodeInputs,
        n_pred: usize,
    ) -> Result<WindowRun> {
        let cfg = &self.cfg;
        let t_obs = cfg.t_obs;
        if group.subjects.is_empty() {
            return Err(Error::contract("run_window: empty window group"));
        }
        for s in &group.subjects {
            if s.class.index() >= cfg.classes {
                return Err(Error::contract(format!(
                    "subject {} has class {} but the model has {} classes",
                    s.id, s.class.0, cfg.classes
                )));
            }
            if s.positions.len() < t_obs + n_pred {
                return Err(Error::contract(format!(
                    "subject {} window has {} steps, need {}",
                    s.id,
                    s.positions.len(),
                    t_obs + n_pred
                )));
            }
        }
        if cfg.mode == super::Mode::Sdatt && maps.is_none() {
            return Err(Error::contract("SD-ATT rollout requires likelihood maps"));
        }
        if let DecodeInputs::Replay(lists) = decode {
            if lists.len() != group.subjects.len()
                || lists.iter().any(|l| l.len() < n_pred)
            {
                return Err(Error::contract("replay inputs do not cover the window"));
            }
        }

        // Observation phase: joint encoding with social pooling.
        let mut states: Vec<EncoderState> = group
            .subjects
            .iter()
            .map(|_| EncoderState::new(g, cfg.d_h, cfg.k))
            .collect();
        for t in 0..t_obs {
            let prev_h: Vec<NodeId> = states.iter().map(|s| s.lstm.h).collect();
            let mut inputs = Vec::with_capacity(group.subjects.len());
            for (i, subj) in group.subjects.iter().enumerate() {
                let pos = subj.positions[t];
                let others: Vec<(u64, SubjectClass, [f64; 2])> = group
                    .subjects
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, o)| (o.id, o.class, o.positions[t]))
                    .collect();
                let kept = truncate_neighbors(&others, pos, cfg.pool.max_neighbors);
                let by_id: BTreeMap<u64, usize> = group
                    .subjects
                    .iter()
                    .enumerate()
                    .map(|(j, o)| (o.id, j))
                    .collect();
                let neighbor_nodes: Vec<(SubjectClass, [f64; 2], NodeId)> = kept
                    .iter()
                    .map(|&(id, class, p)| (class, p, prev_h[by_id[&id]]))
                    .collect();
                let social = social_tensor_node(g, pos, &neighbor_nodes, &cfg.pool)?;
                let reach: Option<ReachabilityTensor> = match (cfg.mode, maps) {
                    (super::Mode::Sdatt, Some(m)) => Some(reachability_tensor(
                        pos,
                        m.map_for(subj.class)?,
                        &m.grid,
                        m.image_w,
                        m.image_h,
                        &cfg.pool,
                    )?),
                    _ => None,
                };
                let cb = &bind.classes[subj.class.index()];
                inputs.push(self.embed_inputs(g, cb, pos, social, reach.as_ref())?);
            }
            for (i, input) in inputs.into_iter().enumerate() {
                let cb = &bind.classes[group.subjects[i].class.index()];
                self.encoder_step(g, cb, &mut states[i], input)?;
            }
        }

        // Prediction phase: subjects decode independently, teacher-forced
        // or self-conditioned depending on `decode`.
        let mut per_subject_nll = Vec::with_capacity(group.subjects.len());
        let mut predictions = Vec::with_capacity(group.subjects.len());
        for (i, subj) in group.subjects.iter().enumerate() {
            let cb = &bind.classes[subj.class.index()];
            let window: Vec<NodeId> = states[i].history().to_vec();
            let mut s = states[i].lstm;
            let mut x_prev = subj.positions[t_obs - 1];
            let mut gaussians = Vec::with_capacity(n_pred);
            let mut points = Vec::with_capacity(n_pred);
            let mut nll_terms = Vec::with_capacity(n_pred);
            for step in 0..n_pred {
                let (_alpha, ctx) = self.attention(g, cb, &window, s.h)?;
                s = self.decoder_step(g, cb, s, x_prev, ctx)?;
                let head = self.gaussian_head(g, cb, s.h)?;
                let params = head.concrete(g)?;
                let truth = subj.positions[t_obs + step];
                nll_terms.push(head.nll_node(g, truth)?);
                let next = match decode {
                    DecodeInputs::TeacherForced => {
                        points.push(params.mu);
                        truth
                    }
                    DecodeInputs::Sampled(rng) => {
                        let pt = sample(&params, rng);
                        points.push(pt);
                        pt
                    }
                    DecodeInputs::Replay(lists) => {
                        let pt = lists[i][step];
                        points.push(pt);
                        pt
                    }
                };
                gaussians.push(params);
                x_prev = next;
            }
            if !nll_terms.is_empty() {
                let stacked = g.concat(&nll_terms)?;
                per_subject_nll.push(g.sum(stacked));
            }
            predictions.push(SubjectPrediction {
                id: subj.id,
                class: subj.class,
                gaussians,
                points,
            });
        }

        let loss = if per_subject_nll.is_empty() {
            None
        } else {
            let all = g.concat(&per_subject_nll)?;
            let total = g.sum(all);
            Some(g.affine(total, 1.0 / group.subjects.len() as f64, 0.0))
        };
        let encoder_h = states
            .iter()
            .map(|s| g.value(s.lstm.h).data().to_vec())
            .collect();
        Ok(WindowRun {
            loss,
            per_subject_nll,
            predictions,
            encoder_h,
        })
    }
}

/// Inference rollout over one window group: sampled decoding with a seeded
/// RNG. Returns the per-subject predicted distributions and points.
pub fn rollout(
    model: &TrajModel,
    group: &WindowGroup,
    maps: Option<&SceneMaps>,
    rng: &mut SeededRng,
    n_pred: usize,
) -> Result<Vec<SubjectPrediction>> {
    let mut g = Graph::new();
    let bind = model.bind(&mut g);
    let run = model.run_window(
        &mut g,
        &bind,
        group,
        maps,
        &mut DecodeInputs::Sampled(rng),
        n_pred,
    )?;
    Ok(run.predictions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pool::social_tensor_node;
    use crate::seq2seq::{Mode, ModelConfig};
    use crate::traineval::seeded_rng;

    fn two_subject_group(len: usize) -> WindowGroup {
        let a = WindowSubject {
            id: 1,
            class: SubjectClass(0),
            positions: (0..len)
                .map(|t| [0.30 + 0.01 * t as f64, 0.50])
                .collect(),
        };
        let b = WindowSubject {
            id: 2,
            class: SubjectClass(0),
            positions: (0..len)
                .map(|t| [0.32 + 0.01 * t as f64, 0.52])
                .collect(),
        };
        WindowGroup {
            start: 0,
            subjects: alloc::vec![a, b],
        }
    }

    fn tiny_model(mode: Mode, seed: u64) -> TrajModel {
        let mut rng = seeded_rng(seed);
        TrajModel::init(ModelConfig::tiny(mode), &mut rng).unwrap()
    }

    #[test]
    fn zero_n_pred_gives_empty_predictions() {
        let model = tiny_model(Mode::Datt, 1);
        let group = two_subject_group(model.cfg.t_obs);
        let mut rng = seeded_rng(2);
        let preds = rollout(&model, &group, None, &mut rng, 0).unwrap();
        assert_eq!(preds.len(), 2);
        assert!(preds.iter().all(|p| p.points.is_empty()));
    }

    #[test]
    fn rollout_is_deterministic_given_a_seed() {
        let model = tiny_model(Mode::Datt, 3);
        let group = two_subject_group(model.cfg.t_obs + model.cfg.n_pred);
        let run = |seed| {
            let mut rng = seeded_rng(seed);
            rollout(&model, &group, None, &mut rng, model.cfg.n_pred).unwrap()
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10));
    }

    #[test]
    fn teacher_forcing_equals_replaying_ground_truth() {
        // The decoder treats training and inference identically except for
        // where x_prev comes from: replaying the ground-truth positions
        // through the inference path must reproduce the training loss
        // bit for bit.
        let model = tiny_model(Mode::Datt, 4);
        let cfg = &model.cfg;
        let group = two_subject_group(cfg.t_obs + cfg.n_pred);
        let loss_of = |decode: &mut DecodeInputs| {
            let mut g = Graph::new();
            let bind = model.bind(&mut g);
            let run = model
                .run_window(&mut g, &bind, &group, None, decode, cfg.n_pred)
                .unwrap();
            g.value(run.loss.unwrap()).item().unwrap()
        };
        let teacher = loss_of(&mut DecodeInputs::TeacherForced);
        let gt_futures: Vec<Vec<[f64; 2]>> = group
            .subjects
            .iter()
            .map(|s| s.positions[cfg.t_obs..].to_vec())
            .collect();
        let replayed = loss_of(&mut DecodeInputs::Replay(&gt_futures));
        assert_eq!(teacher.to_bits(), replayed.to_bits());
    }

    #[test]
    fn social_tensor_uses_previous_step_hidden_states() {
        // Rebuild subject A's encoding by hand, feeding B's hidden state
        // from t-1 into the social tensor, and check it reproduces the
        // engine's final hidden state exactly.
        let model = tiny_model(Mode::Datt, 5);
        let cfg = model.cfg.clone();
        let group = two_subject_group(cfg.t_obs);

        let mut g = Graph::new();
        let bind = model.bind(&mut g);
        let run = model
            .run_window(
                &mut g,
                &bind,
                &group,
                None,
                &mut DecodeInputs::TeacherForced,
                0,
            )
            .unwrap();

        let mut g2 = Graph::new();
        let bind2 = model.bind(&mut g2);
        let cb = &bind2.classes[0];
        let mut st_a = EncoderState::new(&mut g2, cfg.d_h, cfg.k);
        let mut st_b = EncoderState::new(&mut g2, cfg.d_h, cfg.k);
        for t in 0..cfg.t_obs {
            let (pa, pb) = (group.subjects[0].positions[t], group.subjects[1].positions[t]);
            let prev_a = st_a.lstm.h;
            let prev_b = st_b.lstm.h;
            let sa = social_tensor_node(
                &mut g2,
                pa,
                &[(SubjectClass(0), pb, prev_b)],
                &cfg.pool,
            )
            .unwrap();
            let sb = social_tensor_node(
                &mut g2,
                pb,
                &[(SubjectClass(0), pa, prev_a)],
                &cfg.pool,
            )
            .unwrap();
            let ia = model.embed_inputs(&mut g2, cb, pa, sa, None).unwrap();
            let ib = model.embed_inputs(&mut g2, cb, pb, sb, None).unwrap();
            model.encoder_step(&mut g2, cb, &mut st_a, ia).unwrap();
            model.encoder_step(&mut g2, cb, &mut st_b, ib).unwrap();
        }
        assert_eq!(run.encoder_h[0], g2.value(st_a.lstm.h).data());
        assert_eq!(run.encoder_h[1], g2.value(st_b.lstm.h).data());
    }

    #[test]
    fn short_window_is_a_contract_error() {
        let model = tiny_model(Mode::Datt, 6);
        let group = two_subject_group(model.cfg.t_obs + 1);
        let mut rng = seeded_rng(7);
        let err = rollout(&model, &group, None, &mut rng, model.cfg.n_pred).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn sdatt_without_maps_is_a_contract_error() {
        let model = tiny_model(Mode::Sdatt, 8);
        let group = two_subject_group(model.cfg.t_obs + model.cfg.n_pred);
        let mut rng = seeded_rng(9);
        let err = rollout(&model, &group, None, &mut rng, model.cfg.n_pred).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn one_parameter_set_serves_all_subjects_of_a_class() {
        // Ten subjects, one class: the bound graph still carries exactly
        // one copy of the class's parameters.
        let model = tiny_model(Mode::Datt, 10);
        assert_eq!(model.class_params_len(), 1);
        let mut g = Graph::new();
        let bind = model.bind(&mut g);
        let n_params = bind.named_nodes().len();
        let group = WindowGroup {
            start: 0,
            subjects: (0..10)
                .map(|i| WindowSubject {
                    id: i,
                    class: SubjectClass(0),
                    positions: (0..model.cfg.t_obs)
                        .map(|t| [0.1 + 0.02 * i as f64, 0.2 + 0.01 * t as f64])
                        .collect(),
                })
                .collect(),
        };
        model
            .run_window(
                &mut g,
                &bind,
                &group,
                None,
                &mut DecodeInputs::TeacherForced,
                0,
            )
            .unwrap();
        assert_eq!(bind.named_nodes().len(), n_params);
    }

    #[test]
    fn collect_windows_covers_and_skips() {
        use crate::scene::{Raster, Track, TrajectoryPoint};
        let mut tracks = BTreeMap::new();
        // Subject 1 spans frames 0..10, subject 2 only 0..3.
        for (id, len) in [(1u64, 10u32), (2, 3)] {
            tracks.insert(
                id,
                Track {
                    class: SubjectClass(0),
                    points: (0..len)
                        .map(|f| TrajectoryPoint {
                            frame: f,
                            pos: [0.1 + 0.05 * f as f64, 0.5],
                        })
                        .collect(),
                },
            );
        }
        let scene = Scene::new(Raster::filled(10, 10, 0.5), 1, tracks).unwrap();
        let w = collect_windows(&scene, 10, 10).unwrap();
        assert_eq!(w.groups.len(), 1);
        assert_eq!(w.groups[0].subjects.len(), 1);
        assert_eq!(w.groups[0].subjects[0].id, 1);
        assert_eq!(w.skipped, alloc::vec![2]);
    }
}
