use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndgrad::{Graph, LrnParams, NodeId, ParamSet, Tensor};
use crate::scene::SubjectClass;

/// One convolution layer of a stream: `filters` kernels of `kernel x kernel`
/// at the given stride, each followed by relu, LRN, and 2x2 max pooling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ConvSpec {
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
}

/// Network dimensions. The defaults are desk-scale (64x64 inputs); the
/// full-scale 227/512 input sides are accepted but not exercised in tests.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct SscnConfig {
    pub classes: usize,
    /// Patch input side after resize.
    pub d_p: usize,
    /// Context input side after resize.
    pub d_i: usize,
    pub conv: Vec<ConvSpec>,
    pub pool_window: usize,
    pub pool_stride: usize,
    pub class_embed: usize,
    /// Width of each stream's dense output.
    pub stream_dense: usize,
    /// Widths of the two merged dense layers before the sigmoid neuron.
    pub merged: [usize; 2],
    pub lrn_k: f64,
    pub lrn_n: usize,
    pub lrn_alpha: f64,
    pub lrn_beta: f64,
}

impl Default for SscnConfig {
    fn default() -> Self {
        SscnConfig {
            classes: 1,
            d_p: 64,
            d_i: 64,
            conv: alloc::vec![
                ConvSpec { filters: 8, kernel: 3, stride: 1 },
                ConvSpec { filters: 16, kernel: 3, stride: 1 },
                ConvSpec { filters: 16, kernel: 3, stride: 1 },
            ],
            pool_window: 2,
            pool_stride: 2,
            class_embed: 8,
            stream_dense: 64,
            merged: [128, 64],
            lrn_k: 2.0,
            lrn_n: 5,
            lrn_alpha: 1e-4,
            lrn_beta: 0.75,
        }
    }
}

impl SscnConfig {
    /// A deliberately tiny network for gradient checks.
    pub fn tiny(classes: usize) -> Self {
        SscnConfig {
            classes,
            d_p: 8,
            d_i: 8,
            conv: alloc::vec![ConvSpec { filters: 2, kernel: 3, stride: 1 }],
            pool_window: 2,
            pool_stride: 2,
            class_embed: 3,
            stream_dense: 4,
            merged: [6, 4],
            ..SscnConfig::default()
        }
    }

    pub fn lrn_params(&self) -> LrnParams {
        LrnParams {
            k: self.lrn_k,
            n: self.lrn_n,
            alpha: self.lrn_alpha,
            beta: self.lrn_beta,
        }
    }

    /// (channels, side) after running a stream's conv stack on `side` input.
    fn conv_out(&self, mut side: usize) -> Result<(usize, usize)> {
        let mut channels = 3;
        for spec in &self.conv {
            if spec.kernel > side || spec.stride == 0 {
                return Err(Error::contract(format!(
                    "conv stack shrinks a {side}px side below its {}px kernel",
                    spec.kernel
                )));
            }
            side = (side - spec.kernel) / spec.stride + 1;
            if self.pool_window > side {
                return Err(Error::contract("pooling window larger than feature map"));
            }
            side = (side - self.pool_window) / self.pool_stride + 1;
            channels = spec.filters;
        }
        Ok((channels, side))
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes == 0
            || self.class_embed == 0
            || self.stream_dense == 0
            || self.merged.iter().any(|&m| m == 0)
            || self.conv.is_empty()
        {
            return Err(Error::contract("sscn config: zero-sized layer"));
        }
        self.conv_out(self.d_p)?;
        self.conv_out(self.d_i)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct ConvParams {
    w: Tensor,
    b: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
struct StreamParams {
    conv: Vec<ConvParams>,
    dense_w: Tensor,
    dense_b: Tensor,
}

impl StreamParams {
    fn new(cfg: &SscnConfig, input_side: usize, init: &mut dyn FnMut(&[usize]) -> Tensor) -> Self {
        let mut conv = Vec::new();
        let mut channels = 3;
        for spec in &cfg.conv {
            conv.push(ConvParams {
                w: init(&[spec.filters, channels, spec.kernel, spec.kernel]),
                b: Tensor::zeros(&[spec.filters]),
            });
            channels = spec.filters;
        }
        let (ch, side) = cfg.conv_out(input_side).expect("validated config");
        StreamParams {
            conv,
            dense_w: init(&[cfg.stream_dense, ch * side * side]),
            dense_b: Tensor::zeros(&[cfg.stream_dense]),
        }
    }
}

/// The three-stream network. Weights are plain tensors; every training or
/// inference step binds them onto a fresh graph.
#[derive(Debug, Clone, PartialEq)]
pub struct SscnModel {
    pub cfg: SscnConfig,
    embed: Tensor,
    subj_w: Tensor,
    subj_b: Tensor,
    patch: StreamParams,
    context: StreamParams,
    fc1_w: Tensor,
    fc1_b: Tensor,
    fc2_w: Tensor,
    fc2_b: Tensor,
    out_w: Tensor,
    out_b: Tensor,
}

/// Graph handles for one binding of the model's weights.
pub struct SscnBinding {
    embed: NodeId,
    subj_w: NodeId,
    subj_b: NodeId,
    patch: Vec<(NodeId, NodeId)>,
    patch_dense: (NodeId, NodeId),
    context: Vec<(NodeId, NodeId)>,
    context_dense: (NodeId, NodeId),
    fc1: (NodeId, NodeId),
    fc2: (NodeId, NodeId),
    out: (NodeId, NodeId),
    names: Vec<(String, NodeId)>,
}

impl SscnBinding {
    /// Named parameter nodes, for harvesting gradients after backward.
    pub fn named_nodes(&self) -> &[(String, NodeId)] {
        &self.names
    }
}

impl SscnModel {
    /// All-zero weights: the output is exactly 0.5 for any input.
    pub fn zeros(cfg: SscnConfig) -> Result<Self> {
        cfg.validate()?;
        let mut zero = |shape: &[usize]| Tensor::zeros(shape);
        Ok(Self::build(cfg, &mut zero))
    }

    /// Glorot-initialized weights, zero biases.
    pub fn init<R: Rng>(cfg: SscnConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let mut glorot = |shape: &[usize]| Tensor::glorot(shape, rng);
        Ok(Self::build(cfg, &mut glorot))
    }

    fn build(cfg: SscnConfig, init: &mut dyn FnMut(&[usize]) -> Tensor) -> Self {
        let patch = StreamParams::new(&cfg, cfg.d_p, init);
        let context = StreamParams::new(&cfg, cfg.d_i, init);
        let merged_in = 3 * cfg.stream_dense;
        SscnModel {
            embed: init(&[cfg.classes, cfg.class_embed]),
            subj_w: init(&[cfg.stream_dense, cfg.class_embed]),
            subj_b: Tensor::zeros(&[cfg.stream_dense]),
            patch,
            context,
            fc1_w: init(&[cfg.merged[0], merged_in]),
            fc1_b: Tensor::zeros(&[cfg.merged[0]]),
            fc2_w: init(&[cfg.merged[1], cfg.merged[0]]),
            fc2_b: Tensor::zeros(&[cfg.merged[1]]),
            out_w: init(&[1, cfg.merged[1]]),
            out_b: Tensor::zeros(&[1]),
            cfg,
        }
    }

    /// Insert every weight as a leaf on the graph.
    pub fn bind(&self, g: &mut Graph) -> SscnBinding {
        let mut names: Vec<(String, NodeId)> = Vec::new();
        fn leaf(
            g: &mut Graph,
            names: &mut Vec<(String, NodeId)>,
            name: &str,
            t: &Tensor,
        ) -> NodeId {
            let id = g.leaf(t.clone());
            names.push((String::from(name), id));
            id
        }
        let bind_stream = |g: &mut Graph,
                           names: &mut Vec<(String, NodeId)>,
                           prefix: &str,
                           s: &StreamParams| {
            let conv: Vec<(NodeId, NodeId)> = s
                .conv
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    let w = g.leaf(c.w.clone());
                    names.push((format!("{prefix}.conv{i}.w"), w));
                    let b = g.leaf(c.b.clone());
                    names.push((format!("{prefix}.conv{i}.b"), b));
                    (w, b)
                })
                .collect();
            let dw = g.leaf(s.dense_w.clone());
            names.push((format!("{prefix}.dense.w"), dw));
            let db = g.leaf(s.dense_b.clone());
            names.push((format!("{prefix}.dense.b"), db));
            (conv, (dw, db))
        };

        let embed = leaf(g, &mut names, "subject.embed", &self.embed);
        let subj_w = leaf(g, &mut names, "subject.dense.w", &self.subj_w);
        let subj_b = leaf(g, &mut names, "subject.dense.b", &self.subj_b);
        let (patch, patch_dense) = bind_stream(g, &mut names, "patch", &self.patch);
        let (context, context_dense) = bind_stream(g, &mut names, "context", &self.context);
        let fc1 = (
            leaf(g, &mut names, "merged.fc1.w", &self.fc1_w),
            leaf(g, &mut names, "merged.fc1.b", &self.fc1_b),
        );
        let fc2 = (
            leaf(g, &mut names, "merged.fc2.w", &self.fc2_w),
            leaf(g, &mut names, "merged.fc2.b", &self.fc2_b),
        );
        let out = (
            leaf(g, &mut names, "merged.out.w", &self.out_w),
            leaf(g, &mut names, "merged.out.b", &self.out_b),
        );
        SscnBinding {
            embed,
            subj_w,
            subj_b,
            patch,
            patch_dense,
            context,
            context_dense,
            fc1,
            fc2,
            out,
            names,
        }
    }

    /// Forward pass for one `(class, patch, context)` triplet. Rasters must
    /// already be resized to `d_p`/`d_i` and converted to `[3, d, d]`
    /// tensors; the output is the scalar likelihood in `(0, 1)`.
    pub fn forward(
        &self,
        g: &mut Graph,
        bind: &SscnBinding,
        class: SubjectClass,
        patch: &Tensor,
        context: &Tensor,
    ) -> Result<NodeId> {
        if class.index() >= self.cfg.classes {
            return Err(Error::contract(format!(
                "class id {} out of range (classes = {})",
                class.0, self.cfg.classes
            )));
        }
        check_input("patch", patch, self.cfg.d_p)?;
        check_input("context", context, self.cfg.d_i)?;

        let emb = g.embedding(bind.embed, class.index())?;
        let subj = dense(g, bind.subj_w, bind.subj_b, emb)?;
        let subj = g.relu(subj);

        let p = self.stream(g, &bind.patch, bind.patch_dense, patch)?;
        let c = self.stream(g, &bind.context, bind.context_dense, context)?;

        let merged = g.concat(&[subj, p, c])?;
        let h1 = dense(g, bind.fc1.0, bind.fc1.1, merged)?;
        let h1 = g.relu(h1);
        let h2 = dense(g, bind.fc2.0, bind.fc2.1, h1)?;
        let h2 = g.relu(h2);
        let o = dense(g, bind.out.0, bind.out.1, h2)?;
        Ok(g.sigmoid(o))
    }

    fn stream(
        &self,
        g: &mut Graph,
        conv: &[(NodeId, NodeId)],
        dense_wb: (NodeId, NodeId),
        input: &Tensor,
    ) -> Result<NodeId> {
        // Center pixel values around zero before the first convolution.
        let raw = g.leaf(input.clone());
        let mut x = g.affine(raw, 1.0, -0.5);
        for (spec, &(w, b)) in self.cfg.conv.iter().zip(conv.iter()) {
            x = g.conv2d(x, w, b, spec.stride)?;
            x = g.relu(x);
            x = g.lrn(x, self.cfg.lrn_params())?;
            x = g.maxpool2d(x, self.cfg.pool_window, self.cfg.pool_stride)?;
        }
        let flat = g.flatten(x);
        let d = dense(g, dense_wb.0, dense_wb.1, flat)?;
        Ok(g.relu(d))
    }
}

fn dense(g: &mut Graph, w: NodeId, b: NodeId, x: NodeId) -> Result<NodeId> {
    let wx = g.matmul(w, x)?;
    g.add(wx, b)
}

fn check_input(what: &'static str, t: &Tensor, side: usize) -> Result<()> {
    if t.shape() != [3, side, side] {
        return Err(Error::shape(what, t.shape(), &[3, side, side]));
    }
    Ok(())
}

impl ParamSet for SscnModel {
    fn param_names(&self) -> Vec<String> {
        let mut names = alloc::vec![
            String::from("subject.embed"),
            String::from("subject.dense.w"),
            String::from("subject.dense.b"),
        ];
        for (prefix, stream) in [("patch", &self.patch), ("context", &self.context)] {
            for i in 0..stream.conv.len() {
                names.push(format!("{prefix}.conv{i}.w"));
                names.push(format!("{prefix}.conv{i}.b"));
            }
            names.push(format!("{prefix}.dense.w"));
            names.push(format!("{prefix}.dense.b"));
        }
        for tail in ["fc1.w", "fc1.b", "fc2.w", "fc2.b", "out.w", "out.b"] {
            names.push(format!("merged.{tail}"));
        }
        names
    }

    fn param(&self, name: &str) -> Option<&Tensor> {
        match name {
            "subject.embed" => Some(&self.embed),
            "subject.dense.w" => Some(&self.subj_w),
            "subject.dense.b" => Some(&self.subj_b),
            "merged.fc1.w" => Some(&self.fc1_w),
            "merged.fc1.b" => Some(&self.fc1_b),
            "merged.fc2.w" => Some(&self.fc2_w),
            "merged.fc2.b" => Some(&self.fc2_b),
            "merged.out.w" => Some(&self.out_w),
            "merged.out.b" => Some(&self.out_b),
            _ => {
                let (stream, rest) = name.split_once('.')?;
                let s = match stream {
                    "patch" => &self.patch,
                    "context" => &self.context,
                    _ => return None,
                };
                stream_param(s, rest)
            }
        }
    }

    fn param_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        match name {
            "subject.embed" => Some(&mut self.embed),
            "subject.dense.w" => Some(&mut self.subj_w),
            "subject.dense.b" => Some(&mut self.subj_b),
            "merged.fc1.w" => Some(&mut self.fc1_w),
            "merged.fc1.b" => Some(&mut self.fc1_b),
            "merged.fc2.w" => Some(&mut self.fc2_w),
            "merged.fc2.b" => Some(&mut self.fc2_b),
            "merged.out.w" => Some(&mut self.out_w),
            "merged.out.b" => Some(&mut self.out_b),
            _ => {
                let (stream, rest) = name.split_once('.')?;
                let s = match stream {
                    "patch" => &mut self.patch,
                    "context" => &mut self.context,
                    _ => return None,
                };
                stream_param_mut(s, rest)
            }
        }
    }
}

fn conv_index(rest: &str) -> Option<(usize, bool)> {
    // "conv3.w" -> (3, true)
    let (layer, field) = rest.split_once('.')?;
    let idx: usize = layer.strip_prefix("conv")?.parse().ok()?;
    match field {
        "w" => Some((idx, true)),
        "b" => Some((idx, false)),
        _ => None,
    }
}

fn stream_param<'a>(s: &'a StreamParams, rest: &str) -> Option<&'a Tensor> {
    match rest {
        "dense.w" => Some(&s.dense_w),
        "dense.b" => Some(&s.dense_b),
        _ => {
            let (idx, is_w) = conv_index(rest)?;
            let c = s.conv.get(idx)?;
            Some(if is_w { &c.w } else { &c.b })
        }
    }
}

fn stream_param_mut<'a>(s: &'a mut StreamParams, rest: &str) -> Option<&'a mut Tensor> {
    match rest {
        "dense.w" => Some(&mut s.dense_w),
        "dense.b" => Some(&mut s.dense_b),
        _ => {
            let (idx, is_w) = conv_index(rest)?;
            let c = s.conv.get_mut(idx)?;
            Some(if is_w { &mut c.w } else { &mut c.b })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traineval::seeded_rng;

    fn tiny_inputs(seed: u64) -> (Tensor, Tensor) {
        let mut rng = seeded_rng(seed);
        let make = |rng: &mut crate::traineval::SeededRng| {
            Tensor::uniform(&[3, 8, 8], 0.5, rng).map(|v| v + 0.5)
        };
        (make(&mut rng), make(&mut rng))
    }

    #[test]
    fn zero_weights_output_exactly_half() {
        let model = SscnModel::zeros(SscnConfig::tiny(2)).unwrap();
        let (patch, context) = tiny_inputs(3);
        let mut g = Graph::new();
        let bind = model.bind(&mut g);
        let out = model
            .forward(&mut g, &bind, SubjectClass(0), &patch, &context)
            .unwrap();
        assert_eq!(g.value(out).item().unwrap(), 0.5);
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = seeded_rng(11);
        let model = SscnModel::init(SscnConfig::tiny(1), &mut rng).unwrap();
        let (patch, context) = tiny_inputs(4);
        let run = || {
            let mut g = Graph::new();
            let bind = model.bind(&mut g);
            let out = model
                .forward(&mut g, &bind, SubjectClass(0), &patch, &context)
                .unwrap();
            g.value(out).item().unwrap()
        };
        assert_eq!(run().to_bits(), run().to_bits());
    }

    #[test]
    fn different_patches_change_the_output() {
        let mut rng = seeded_rng(17);
        let model = SscnModel::init(SscnConfig::tiny(1), &mut rng).unwrap();
        let (patch_a, context) = tiny_inputs(5);
        let (patch_b, _) = tiny_inputs(6);
        let eval = |patch: &Tensor| {
            let mut g = Graph::new();
            let bind = model.bind(&mut g);
            let out = model
                .forward(&mut g, &bind, SubjectClass(0), patch, &context)
                .unwrap();
            g.value(out).item().unwrap()
        };
        assert_ne!(eval(&patch_a), eval(&patch_b));
    }

    #[test]
    fn output_strictly_inside_unit_interval() {
        let mut rng = seeded_rng(23);
        let model = SscnModel::init(SscnConfig::tiny(1), &mut rng).unwrap();
        for seed in 0..5 {
            let (patch, context) = tiny_inputs(seed);
            let mut g = Graph::new();
            let bind = model.bind(&mut g);
            let out = model
                .forward(&mut g, &bind, SubjectClass(0), &patch, &context)
                .unwrap();
            let v = g.value(out).item().unwrap();
            assert!(v > 0.0 && v < 1.0);
        }
    }

    #[test]
    fn class_out_of_range_is_a_contract_error() {
        let model = SscnModel::zeros(SscnConfig::tiny(2)).unwrap();
        let (patch, context) = tiny_inputs(8);
        let mut g = Graph::new();
        let bind = model.bind(&mut g);
        let err = model
            .forward(&mut g, &bind, SubjectClass(2), &patch, &context)
            .unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn identical_embedding_rows_give_identical_outputs() {
        let mut rng = seeded_rng(29);
        let mut model = SscnModel::init(SscnConfig::tiny(2), &mut rng).unwrap();
        // Copy class 0's embedding row onto class 1.
        let embed = model.param_mut("subject.embed").unwrap();
        let e = embed.shape()[1];
        let row0: alloc::vec::Vec<f64> = embed.data()[0..e].to_vec();
        embed.data_mut()[e..2 * e].copy_from_slice(&row0);

        let (patch, context) = tiny_inputs(9);
        let eval = |class: u16| {
            let mut g = Graph::new();
            let bind = model.bind(&mut g);
            let out = model
                .forward(&mut g, &bind, SubjectClass(class), &patch, &context)
                .unwrap();
            g.value(out).item().unwrap()
        };
        assert_eq!(eval(0).to_bits(), eval(1).to_bits());
    }

    #[test]
    fn param_names_round_trip() {
        let mut rng = seeded_rng(31);
        let mut model = SscnModel::init(SscnConfig::tiny(1), &mut rng).unwrap();
        for name in model.param_names() {
            assert!(model.param(&name).is_some(), "missing {name}");
            assert!(model.param_mut(&name).is_some(), "missing mut {name}");
        }
        assert!(model.param("patch.conv9.w").is_none());
    }
}
