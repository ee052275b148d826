use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndgrad::{Graph, NodeId, ParamSet, Tensor};
use crate::pool::{PoolConfig, ReachabilityTensor};

use super::gaussian::GaussianNodes;

/// Which context streams feed the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Mode {
    /// Dynamic context only (positions + social tensor).
    Datt,
    /// Dynamic plus static context (adds the reachability tensor).
    Sdatt,
}

/// Encoder-decoder dimensions and sequence geometry.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ModelConfig {
    pub mode: Mode,
    pub d_h: usize,
    /// Temporal attention window length.
    pub k: usize,
    pub t_obs: usize,
    pub n_pred: usize,
    pub pos_embed: usize,
    pub social_embed: usize,
    pub reach_embed: usize,
    pub att_dim: usize,
    pub classes: usize,
    pub pool: PoolConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            mode: Mode::Datt,
            d_h: 32,
            k: 5,
            t_obs: 8,
            n_pred: 12,
            pos_embed: 16,
            social_embed: 16,
            reach_embed: 16,
            att_dim: 32,
            classes: 1,
            pool: PoolConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.n_pred == 0 {
            return Err(Error::contract("model config: k and n_pred must be >= 1"));
        }
        if self.k > self.t_obs {
            return Err(Error::contract("model config: k must not exceed t_obs"));
        }
        if self.d_h == 0
            || self.pos_embed == 0
            || self.social_embed == 0
            || self.att_dim == 0
            || self.classes == 0
            || (self.mode == Mode::Sdatt && self.reach_embed == 0)
        {
            return Err(Error::contract("model config: zero-sized layer"));
        }
        self.pool.validate()?;
        if self.pool.d_h != self.d_h || self.pool.classes != self.classes {
            return Err(Error::contract(
                "model config: pool d_h/classes must match the model",
            ));
        }
        Ok(())
    }

    pub fn enc_input_len(&self) -> usize {
        self.pos_embed
            + self.social_embed
            + if self.mode == Mode::Sdatt {
                self.reach_embed
            } else {
                0
            }
    }

    pub fn dec_input_len(&self) -> usize {
        2 + self.d_h
    }

    /// A tiny configuration for whole-model gradient checks.
    pub fn tiny(mode: Mode) -> Self {
        let d_h = 8;
        ModelConfig {
            mode,
            d_h,
            k: 3,
            t_obs: 4,
            n_pred: 3,
            pos_embed: 4,
            social_embed: 4,
            reach_embed: 4,
            att_dim: 6,
            classes: 1,
            pool: PoolConfig {
                g_s: 2,
                d_h,
                ..PoolConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct ClassParams {
    embed_pos: Tensor,
    embed_social: Tensor,
    embed_reach: Option<Tensor>,
    enc_w: Tensor,
    enc_u: Tensor,
    enc_b: Tensor,
    att_ws: Tensor,
    att_wh: Tensor,
    att_v: Tensor,
    dec_w: Tensor,
    dec_u: Tensor,
    dec_b: Tensor,
    head_w: Tensor,
}

const CLASS_PARAM_NAMES: &[&str] = &[
    "embed.pos",
    "embed.social",
    "embed.reach",
    "enc.w",
    "enc.u",
    "enc.b",
    "att.ws",
    "att.wh",
    "att.v",
    "dec.w",
    "dec.u",
    "dec.b",
    "head.w",
];

impl ClassParams {
    fn field(&self, name: &str) -> Option<&Tensor> {
        match name {
            "embed.pos" => Some(&self.embed_pos),
            "embed.social" => Some(&self.embed_social),
            "embed.reach" => self.embed_reach.as_ref(),
            "enc.w" => Some(&self.enc_w),
            "enc.u" => Some(&self.enc_u),
            "enc.b" => Some(&self.enc_b),
            "att.ws" => Some(&self.att_ws),
            "att.wh" => Some(&self.att_wh),
            "att.v" => Some(&self.att_v),
            "dec.w" => Some(&self.dec_w),
            "dec.u" => Some(&self.dec_u),
            "dec.b" => Some(&self.dec_b),
            "head.w" => Some(&self.head_w),
            _ => None,
        }
    }

    fn field_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        match name {
            "embed.pos" => Some(&mut self.embed_pos),
            "embed.social" => Some(&mut self.embed_social),
            "embed.reach" => self.embed_reach.as_mut(),
            "enc.w" => Some(&mut self.enc_w),
            "enc.u" => Some(&mut self.enc_u),
            "enc.b" => Some(&mut self.enc_b),
            "att.ws" => Some(&mut self.att_ws),
            "att.wh" => Some(&mut self.att_wh),
            "att.v" => Some(&mut self.att_v),
            "dec.w" => Some(&mut self.dec_w),
            "dec.u" => Some(&mut self.dec_u),
            "dec.b" => Some(&mut self.dec_b),
            "head.w" => Some(&mut self.head_w),
            _ => None,
        }
    }
}

/// The attention encoder-decoder. One parameter set per subject class; a
/// single set serves every subject of that class, so all trajectories train
/// the same weights jointly.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajModel {
    pub cfg: ModelConfig,
    classes: Vec<ClassParams>,
}

/// Graph handles for one class's weights.
pub struct ClassBinding {
    pub embed_pos: NodeId,
    pub embed_social: NodeId,
    pub embed_reach: Option<NodeId>,
    pub enc_w: NodeId,
    pub enc_u: NodeId,
    pub enc_b: NodeId,
    pub att_ws: NodeId,
    pub att_wh: NodeId,
    pub att_v: NodeId,
    pub dec_w: NodeId,
    pub dec_u: NodeId,
    pub dec_b: NodeId,
    pub head_w: NodeId,
}

/// Graph handles for the whole model plus name -> node pairs for gradient
/// harvesting.
pub struct TrajBinding {
    pub classes: Vec<ClassBinding>,
    names: Vec<(String, NodeId)>,
}

impl TrajBinding {
    pub fn named_nodes(&self) -> &[(String, NodeId)] {
        &self.names
    }
}

/// LSTM hidden and cell state handles.
#[derive(Debug, Clone, Copy)]
pub struct LstmState {
    pub h: NodeId,
    pub c: NodeId,
}

/// Encoder state for one subject: LSTM state plus the ring of the last `k`
/// hidden states eligible for attention.
pub struct EncoderState {
    pub lstm: LstmState,
    history: Vec<NodeId>,
    k: usize,
}

impl EncoderState {
    pub fn new(g: &mut Graph, d_h: usize, k: usize) -> Self {
        let h = g.leaf(Tensor::zeros(&[d_h]));
        let c = g.leaf(Tensor::zeros(&[d_h]));
        EncoderState {
            lstm: LstmState { h, c },
            history: Vec::new(),
            k,
        }
    }

    pub fn history(&self) -> &[NodeId] {
        &self.history
    }

    fn push_history(&mut self, h: NodeId) {
        if self.history.len() == self.k {
            self.history.remove(0);
        }
        self.history.push(h);
    }
}

impl TrajModel {
    pub fn zeros(cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut zero = |shape: &[usize]| Tensor::zeros(shape);
        Ok(Self::build(cfg, &mut zero, false))
    }

    /// Glorot-initialized weights; LSTM biases start at zero except the
    /// forget gate, which starts at one.
    pub fn init<R: Rng>(cfg: ModelConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let mut glorot = |shape: &[usize]| Tensor::glorot(shape, rng);
        Ok(Self::build(cfg, &mut glorot, true))
    }

    fn build(cfg: ModelConfig, init: &mut dyn FnMut(&[usize]) -> Tensor, forget_one: bool) -> Self {
        let mut classes = Vec::with_capacity(cfg.classes);
        for _ in 0..cfg.classes {
            let mut enc_b = Tensor::zeros(&[4 * cfg.d_h]);
            let mut dec_b = Tensor::zeros(&[4 * cfg.d_h]);
            if forget_one {
                for b in [&mut enc_b, &mut dec_b] {
                    for v in &mut b.data_mut()[cfg.d_h..2 * cfg.d_h] {
                        *v = 1.0;
                    }
                }
            }
            classes.push(ClassParams {
                embed_pos: init(&[cfg.pos_embed, 2]),
                embed_social: init(&[cfg.social_embed, cfg.pool.social_len()]),
                embed_reach: (cfg.mode == Mode::Sdatt).then(|| {
                    let r = cfg.pool.reach_side();
                    init(&[cfg.reach_embed, r * r])
                }),
                enc_w: init(&[4 * cfg.d_h, cfg.enc_input_len()]),
                enc_u: init(&[4 * cfg.d_h, cfg.d_h]),
                enc_b,
                att_ws: init(&[cfg.att_dim, cfg.d_h]),
                att_wh: init(&[cfg.att_dim, cfg.d_h]),
                att_v: init(&[cfg.att_dim]),
                dec_w: init(&[4 * cfg.d_h, cfg.dec_input_len()]),
                dec_u: init(&[4 * cfg.d_h, cfg.d_h]),
                dec_b,
                head_w: init(&[5, cfg.d_h]),
            });
        }
        TrajModel { cfg, classes }
    }

    pub fn bind(&self, g: &mut Graph) -> TrajBinding {
        let mut names = Vec::new();
        let mut bindings = Vec::with_capacity(self.classes.len());
        for (ci, p) in self.classes.iter().enumerate() {
            let mut leaf = |g: &mut Graph, names: &mut Vec<(String, NodeId)>, n: &str, t: &Tensor| {
                let id = g.leaf(t.clone());
                names.push((format!("class{ci}.{n}"), id));
                id
            };
            bindings.push(ClassBinding {
                embed_pos: leaf(g, &mut names, "embed.pos", &p.embed_pos),
                embed_social: leaf(g, &mut names, "embed.social", &p.embed_social),
                embed_reach: p
                    .embed_reach
                    .as_ref()
                    .map(|t| leaf(g, &mut names, "embed.reach", t)),
                enc_w: leaf(g, &mut names, "enc.w", &p.enc_w),
                enc_u: leaf(g, &mut names, "enc.u", &p.enc_u),
                enc_b: leaf(g, &mut names, "enc.b", &p.enc_b),
                att_ws: leaf(g, &mut names, "att.ws", &p.att_ws),
                att_wh: leaf(g, &mut names, "att.wh", &p.att_wh),
                att_v: leaf(g, &mut names, "att.v", &p.att_v),
                dec_w: leaf(g, &mut names, "dec.w", &p.dec_w),
                dec_u: leaf(g, &mut names, "dec.u", &p.dec_u),
                dec_b: leaf(g, &mut names, "dec.b", &p.dec_b),
                head_w: leaf(g, &mut names, "head.w", &p.head_w),
            });
        }
        TrajBinding {
            classes: bindings,
            names,
        }
    }

    /// Sigmoid-embed the encoder inputs and concatenate them. The
    /// reachability branch must be present exactly in SD-ATT mode.
    pub fn embed_inputs(
        &self,
        g: &mut Graph,
        cb: &ClassBinding,
        pos: [f64; 2],
        social: NodeId,
        reach: Option<&ReachabilityTensor>,
    ) -> Result<NodeId> {
        let x = g.leaf(Tensor::vector(&pos));
        let px = g.matmul(cb.embed_pos, x)?;
        let p = g.sigmoid(px);
        let flat = g.flatten(social);
        let ax = g.matmul(cb.embed_social, flat)?;
        let a = g.sigmoid(ax);
        match (self.cfg.mode, reach) {
            (Mode::Datt, None) => g.concat(&[p, a]),
            (Mode::Sdatt, Some(r)) => {
                let embed = cb
                    .embed_reach
                    .ok_or_else(|| Error::contract("missing reachability embedding"))?;
                let rv = g.leaf(Tensor::vector(r.values()));
                let cx = g.matmul(embed, rv)?;
                let c = g.sigmoid(cx);
                g.concat(&[p, a, c])
            }
            (Mode::Datt, Some(_)) => Err(Error::contract(
                "reachability input supplied to a D-ATT model",
            )),
            (Mode::Sdatt, None) => Err(Error::contract(
                "SD-ATT model requires a reachability input",
            )),
        }
    }

    /// One encoder LSTM update; the new hidden state joins the attention
    /// history ring.
    pub fn encoder_step(
        &self,
        g: &mut Graph,
        cb: &ClassBinding,
        state: &mut EncoderState,
        input: NodeId,
    ) -> Result<()> {
        let next = lstm_step(
            g,
            cb.enc_w,
            cb.enc_u,
            cb.enc_b,
            input,
            state.lstm,
            self.cfg.d_h,
        )?;
        state.lstm = next;
        state.push_history(next.h);
        Ok(())
    }

    /// Additive attention over the history window, conditioned on the
    /// previous decoder state. Returns `(alpha, context)`.
    pub fn attention(
        &self,
        g: &mut Graph,
        cb: &ClassBinding,
        history: &[NodeId],
        s_prev: NodeId,
    ) -> Result<(NodeId, NodeId)> {
        if history.is_empty() {
            return Err(Error::contract("attention over an empty history"));
        }
        let start = history.len().saturating_sub(self.cfg.k);
        let window = &history[start..];
        let q = g.matmul(cb.att_ws, s_prev)?;
        let mut scores = Vec::with_capacity(window.len());
        for &h in window {
            let kh = g.matmul(cb.att_wh, h)?;
            let s = g.add(q, kh)?;
            let t = g.tanh(s);
            scores.push(g.dot(cb.att_v, t)?);
        }
        let stacked = g.concat(&scores)?;
        let alpha = g.softmax(stacked)?;
        let rows = g.stack_rows(window)?;
        let context = g.matmul(alpha, rows)?;
        Ok((alpha, context))
    }

    /// One decoder LSTM update on `(x_prev, context)`.
    pub fn decoder_step(
        &self,
        g: &mut Graph,
        cb: &ClassBinding,
        state: LstmState,
        x_prev: [f64; 2],
        context: NodeId,
    ) -> Result<LstmState> {
        let x = g.leaf(Tensor::vector(&x_prev));
        let input = g.concat(&[x, context])?;
        lstm_step(g, cb.dec_w, cb.dec_u, cb.dec_b, input, state, self.cfg.d_h)
    }

    /// Raw 5-vector output of the decoder state mapped onto distribution
    /// parameters.
    pub fn gaussian_head(
        &self,
        g: &mut Graph,
        cb: &ClassBinding,
        s: NodeId,
    ) -> Result<GaussianNodes> {
        let raw = g.matmul(cb.head_w, s)?;
        GaussianNodes::from_raw(g, raw)
    }

    pub fn class_params_len(&self) -> usize {
        self.classes.len()
    }
}

/// Standard LSTM cell with fused gate matrices. Gate order `[i, f, g, o]`.
pub fn lstm_step(
    g: &mut Graph,
    w: NodeId,
    u: NodeId,
    b: NodeId,
    x: NodeId,
    state: LstmState,
    d_h: usize,
) -> Result<LstmState> {
    let wx = g.matmul(w, x)?;
    let uh = g.matmul(u, state.h)?;
    let pre = g.add(wx, uh)?;
    let pre = g.add(pre, b)?;
    let i_raw = g.slice(pre, 0, d_h)?;
    let i = g.sigmoid(i_raw);
    let f_raw = g.slice(pre, d_h, d_h)?;
    let f = g.sigmoid(f_raw);
    let c_raw = g.slice(pre, 2 * d_h, d_h)?;
    let c_hat = g.tanh(c_raw);
    let o_raw = g.slice(pre, 3 * d_h, d_h)?;
    let o = g.sigmoid(o_raw);
    let keep = g.mul(f, state.c)?;
    let write = g.mul(i, c_hat)?;
    let c = g.add(keep, write)?;
    let c_act = g.tanh(c);
    let h = g.mul(o, c_act)?;
    Ok(LstmState { h, c })
}

impl ParamSet for TrajModel {
    fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (ci, p) in self.classes.iter().enumerate() {
            for &n in CLASS_PARAM_NAMES {
                if n == "embed.reach" && p.embed_reach.is_none() {
                    continue;
                }
                names.push(format!("class{ci}.{n}"));
            }
        }
        names
    }

    fn param(&self, name: &str) -> Option<&Tensor> {
        let (class, rest) = name.split_once('.')?;
        let ci: usize = class.strip_prefix("class")?.parse().ok()?;
        self.classes.get(ci)?.field(rest)
    }

    fn param_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        let (class, rest) = name.split_once('.')?;
        let ci: usize = class.strip_prefix("class")?.parse().ok()?;
        self.classes.get_mut(ci)?.field_mut(rest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck;
    use crate::traineval::seeded_rng;

    #[test]
    fn zero_weights_zero_input_give_zero_hidden_state() {
        let cfg = ModelConfig::tiny(Mode::Datt);
        let model = TrajModel::zeros(cfg.clone()).unwrap();
        let mut g = Graph::new();
        let bind = model.bind(&mut g);
        let mut state = EncoderState::new(&mut g, cfg.d_h, cfg.k);
        let input = g.leaf(Tensor::zeros(&[cfg.enc_input_len()]));
        model
            .encoder_step(&mut g, &bind.classes[0], &mut state, input)
            .unwrap();
        assert!(g.value(state.lstm.h).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn history_ring_is_capped_at_k() {
        let cfg = ModelConfig {
            k: 5,
            t_obs: 8,
            ..ModelConfig::tiny(Mode::Datt)
        };
        let model = TrajModel::zeros(cfg.clone()).unwrap();
        let mut g = Graph::new();
        let bind = model.bind(&mut g);
        let mut state = EncoderState::new(&mut g, cfg.d_h, cfg.k);
        for _ in 0..8 {
            let input = g.leaf(Tensor::zeros(&[cfg.enc_input_len()]));
            model
                .encoder_step(&mut g, &bind.classes[0], &mut state, input)
                .unwrap();
        }
        assert_eq!(state.history().len(), 5);
    }

    #[test]
    fn lstm_gradient_vs_finite_differences() {
        let mut rng = seeded_rng(19);
        let d_h = 3;
        let inputs = alloc::vec![
            Tensor::uniform(&[4 * d_h, 2], 0.7, &mut rng),
            Tensor::uniform(&[4 * d_h, d_h], 0.7, &mut rng),
            Tensor::uniform(&[4 * d_h], 0.5, &mut rng),
            Tensor::uniform(&[2], 1.0, &mut rng),
            Tensor::uniform(&[d_h], 1.0, &mut rng),
            Tensor::uniform(&[d_h], 1.0, &mut rng),
            Tensor::uniform(&[2 * d_h], 1.0, &mut rng),
        ];
        let err = gradcheck::max_grad_error(&inputs, 1e-5, |g, ids| {
            let state = LstmState {
                h: ids[4],
                c: ids[5],
            };
            let next = lstm_step(g, ids[0], ids[1], ids[2], ids[3], state, d_h)?;
            let both = g.concat(&[next.h, next.c])?;
            g.dot(both, ids[6])
        })
        .unwrap();
        assert!(err < 1e-4, "lstm gradient error {err:.3e}");
    }

    #[test]
    fn attention_with_k_one_copies_the_last_state() {
        let cfg = ModelConfig {
            k: 1,
            t_obs: 4,
            ..ModelConfig::tiny(Mode::Datt)
        };
        let mut rng = seeded_rng(5);
        let model = TrajModel::init(cfg.clone(), &mut rng).unwrap();
        let mut g = Graph::new();
        let bind = model.bind(&mut g);
        let h1 = g.leaf(Tensor::uniform(&[cfg.d_h], 1.0, &mut rng));
        let h2 = g.leaf(Tensor::uniform(&[cfg.d_h], 1.0, &mut rng));
        let s = g.leaf(Tensor::uniform(&[cfg.d_h], 1.0, &mut rng));
        let (alpha, ctx) = model
            .attention(&mut g, &bind.classes[0], &[h1, h2], s)
            .unwrap();
        assert_eq!(g.value(alpha).data(), &[1.0]);
        assert_eq!(g.value(ctx).data(), g.value(h2).data());
    }

    #[test]
    fn attention_over_identical_states_is_uniform() {
        let cfg = ModelConfig::tiny(Mode::Datt);
        let mut rng = seeded_rng(6);
        let model = TrajModel::init(cfg.clone(), &mut rng).unwrap();
        let mut g = Graph::new();
        let bind = model.bind(&mut g);
        let h = g.leaf(Tensor::uniform(&[cfg.d_h], 1.0, &mut rng));
        let s = g.leaf(Tensor::uniform(&[cfg.d_h], 1.0, &mut rng));
        let (alpha, _) = model
            .attention(&mut g, &bind.classes[0], &[h, h, h], s)
            .unwrap();
        for &a in g.value(alpha).data() {
            assert!((a - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_weights_form_a_probability_vector() {
        let cfg = ModelConfig::tiny(Mode::Datt);
        let mut rng = seeded_rng(7);
        let model = TrajModel::init(cfg.clone(), &mut rng).unwrap();
        for _ in 0..20 {
            let mut g = Graph::new();
            let bind = model.bind(&mut g);
            let hs: Vec<NodeId> = (0..3)
                .map(|_| g.leaf(Tensor::uniform(&[cfg.d_h], 2.0, &mut rng)))
                .collect();
            let s = g.leaf(Tensor::uniform(&[cfg.d_h], 2.0, &mut rng));
            let (alpha, ctx) = model.attention(&mut g, &bind.classes[0], &hs, s).unwrap();
            let a = g.value(alpha).data();
            assert!(a.iter().all(|&v| v >= 0.0));
            assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            // The context is a convex combination: bounded per-dimension by
            // the window's extremes.
            for d in 0..cfg.d_h {
                let lo = hs
                    .iter()
                    .map(|&h| g.value(h).data()[d])
                    .fold(f64::INFINITY, f64::min);
                let hi = hs
                    .iter()
                    .map(|&h| g.value(h).data()[d])
                    .fold(f64::NEG_INFINITY, f64::max);
                let c = g.value(ctx).data()[d];
                assert!(c >= lo - 1e-12 && c <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn embed_lengths_match_mode() {
        let mut rng = seeded_rng(8);
        for (mode, expected) in [(Mode::Datt, 8usize), (Mode::Sdatt, 12usize)] {
            let cfg = ModelConfig::tiny(mode);
            let model = TrajModel::init(cfg.clone(), &mut rng).unwrap();
            let mut g = Graph::new();
            let bind = model.bind(&mut g);
            let social = g.leaf(Tensor::zeros(&[
                cfg.pool.g_s,
                cfg.pool.g_s,
                cfg.d_h,
                cfg.classes,
            ]));
            let reach_values = alloc::vec![0.5; cfg.pool.reach_side() * cfg.pool.reach_side()];
            let reach = crate::pool::ReachabilityTensor::from_values(
                cfg.pool.reach_side(),
                reach_values,
            );
            let r = (mode == Mode::Sdatt).then_some(&reach);
            let out = model
                .embed_inputs(&mut g, &bind.classes[0], [0.5, 0.5], social, r)
                .unwrap();
            assert_eq!(g.value(out).numel(), expected);
        }
    }

    #[test]
    fn embed_zero_weights_give_half_activations() {
        let cfg = ModelConfig::tiny(Mode::Datt);
        let model = TrajModel::zeros(cfg.clone()).unwrap();
        let mut g = Graph::new();
        let bind = model.bind(&mut g);
        let social = g.leaf(Tensor::zeros(&[
            cfg.pool.g_s,
            cfg.pool.g_s,
            cfg.d_h,
            cfg.classes,
        ]));
        let out = model
            .embed_inputs(&mut g, &bind.classes[0], [0.3, 0.9], social, None)
            .unwrap();
        assert!(g.value(out).data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn embed_mode_mismatch_is_a_contract_error() {
        let mut rng = seeded_rng(9);
        let cfg = ModelConfig::tiny(Mode::Datt);
        let model = TrajModel::init(cfg.clone(), &mut rng).unwrap();
        let mut g = Graph::new();
        let bind = model.bind(&mut g);
        let social = g.leaf(Tensor::zeros(&[
            cfg.pool.g_s,
            cfg.pool.g_s,
            cfg.d_h,
            cfg.classes,
        ]));
        let reach = crate::pool::ReachabilityTensor::from_values(3, alloc::vec![0.0; 9]);
        let err = model
            .embed_inputs(&mut g, &bind.classes[0], [0.5, 0.5], social, Some(&reach))
            .unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn zero_decoder_stays_at_zero() {
        let cfg = ModelConfig::tiny(Mode::Datt);
        let model = TrajModel::zeros(cfg.clone()).unwrap();
        let mut g = Graph::new();
        let bind = model.bind(&mut g);
        let s0 = LstmState {
            h: g.leaf(Tensor::zeros(&[cfg.d_h])),
            c: g.leaf(Tensor::zeros(&[cfg.d_h])),
        };
        let ctx = g.leaf(Tensor::zeros(&[cfg.d_h]));
        let s1 = model
            .decoder_step(&mut g, &bind.classes[0], s0, [0.0, 0.0], ctx)
            .unwrap();
        assert!(g.value(s1.h).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn param_names_round_trip() {
        let mut rng = seeded_rng(10);
        let mut model = TrajModel::init(ModelConfig::tiny(Mode::Sdatt), &mut rng).unwrap();
        for name in model.param_names() {
            assert!(model.param(&name).is_some(), "missing {name}");
            assert!(model.param_mut(&name).is_some());
        }
        // D-ATT models have no reach embedding.
        let datt = TrajModel::zeros(ModelConfig::tiny(Mode::Datt)).unwrap();
        assert!(datt.param("class0.embed.reach").is_none());
        assert!(!datt.param_names().iter().any(|n| n.contains("reach")));
    }
}
