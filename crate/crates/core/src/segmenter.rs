//! Minimal query-based instance segmenter with hand-derived gradients.
//!
//! Per-voxel features come from a two-layer MLP over `(x, y, z, r, g, b)`.
//! Learnable queries are refined by dot-product attention over the voxel
//! features, `q <- q + sum_v softmax_v(q.f_v / sqrt(D)) f_v`, then each
//! query emits a heatmap `sigmoid(q.f_v / sqrt(D))` and class logits from an
//! affine head laid out as `[unknown, known_1..known_K, no-object]`.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::assignment::{clamp_prob, Matching, Target, PROB_CLAMP};
use crate::autolabel::objectness_score;
use crate::error::{Error, Result};
use crate::math::{dot, ln, sigmoid, softmax_into, sqrt, standard_normal, tanh};
use crate::openworld::{contrastive_loss, PrototypeBank};
use crate::rng;
use crate::scene::Scene;

pub const INPUT_DIM: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub hidden: usize,
    pub dim: usize,
    pub queries: usize,
    pub rounds: usize,
    /// Grid extent used to map voxel coordinates to `[-1, 1]`.
    pub coord_scale: f64,
    /// Standard deviation of the initial query entries.
    pub query_init_std: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: 64,
            dim: 32,
            queries: 20,
            rounds: 2,
            coord_scale: 16.0,
            query_init_std: 0.3,
            seed: 0,
        }
    }
}

/// All trainable tensors, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub hidden: usize,
    pub dim: usize,
    pub n_queries: usize,
    pub rounds: usize,
    /// Number of known classes `|K^t|`; the head has `known + 2` outputs.
    pub known: usize,
    pub coord_scale: f64,
    /// `hidden x 6`
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `dim x hidden`
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    /// `n_queries x dim`
    pub queries: Vec<f64>,
    /// `(known + 2) x dim`
    pub wc: Vec<f64>,
    pub bc: Vec<f64>,
}

impl ModelParams {
    /// Randomly initialized parameters for `known` classes.
    pub fn init(cfg: &ModelConfig, known: usize) -> Self {
        let mut r = rng::stream(cfg.seed, rng::streams::MODEL_INIT);
        let (h, d, nq) = (cfg.hidden, cfg.dim, cfg.queries);
        let mut normal = |n: usize, std: f64| -> Vec<f64> {
            (0..n).map(|_| standard_normal(&mut r) * std).collect()
        };
        let w1 = normal(h * INPUT_DIM, 1.5 / sqrt(INPUT_DIM as f64));
        let b1 = normal(h, 0.5);
        let w2 = normal(d * h, 1.0 / sqrt(h as f64));
        let queries = normal(nq * d, cfg.query_init_std);
        let wc = normal((known + 2) * d, 0.01);
        ModelParams {
            hidden: h,
            dim: d,
            n_queries: nq,
            rounds: cfg.rounds,
            known,
            coord_scale: cfg.coord_scale,
            w1,
            b1,
            w2,
            b2: vec![0.0; d],
            queries,
            wc,
            bc: vec![0.0; known + 2],
        }
    }

    /// Same shapes, all zeros (gradient / velocity buffers).
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.for_each_block_mut(|b| b.iter_mut().for_each(|x| *x = 0.0));
        z
    }

    pub fn n_classes(&self) -> usize {
        self.known + 2
    }

    pub fn no_object_index(&self) -> usize {
        self.known + 1
    }

    pub fn blocks(&self) -> [&[f64]; 7] {
        [&self.w1, &self.b1, &self.w2, &self.b2, &self.queries, &self.wc, &self.bc]
    }

    pub fn for_each_block_mut(&mut self, mut f: impl FnMut(&mut [f64])) {
        for b in [
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.queries,
            &mut self.wc,
            &mut self.bc,
        ] {
            f(b);
        }
    }

    pub fn num_params(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.blocks().concat()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut off = 0;
        self.for_each_block_mut(|b| {
            b.copy_from_slice(&flat[off..off + b.len()]);
            off += b.len();
        });
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|x| x.is_finite()))
    }

    /// Insert `n_new` zero rows into the class head before the no-object row.
    pub fn widen(&mut self, n_new: usize) {
        let d = self.dim;
        let at = (self.known + 1) * d;
        self.wc.splice(at..at, core::iter::repeat_n(0.0, n_new * d));
        let at_b = self.known + 1;
        self.bc.splice(at_b..at_b, core::iter::repeat_n(0.0, n_new));
        self.known += n_new;
    }

    fn input(&self, pos: [i32; 3], rgb: [f64; 3]) -> [f64; INPUT_DIM] {
        let s = self.coord_scale;
        [
            pos[0] as f64 / s * 2.0 - 1.0,
            pos[1] as f64 / s * 2.0 - 1.0,
            pos[2] as f64 / s * 2.0 - 1.0,
            rgb[0] * 2.0 - 1.0,
            rgb[1] * 2.0 - 1.0,
            rgb[2] * 2.0 - 1.0,
        ]
    }
}

/// One query's output.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Refined query embedding.
    pub query: Vec<f64>,
    pub heatmap: Vec<f64>,
    /// Class-head softmax `[unknown, known.., no-object]`.
    pub probs: Vec<f64>,
    pub objectness: f64,
}

/// Forward activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub n_voxels: usize,
    pub n_queries: usize,
    pub dim: usize,
    pub n_classes: usize,
    inputs: Vec<f64>,
    hidden: Vec<f64>,
    features: Vec<f64>,
    /// Query state entering each refinement round.
    round_queries: Vec<Vec<f64>>,
    /// Attention weights of each round, `n_queries x n_voxels`.
    round_attn: Vec<Vec<f64>>,
    queries: Vec<f64>,
    heat: Vec<f64>,
    probs: Vec<f64>,
}

impl ForwardPass {
    pub fn query(&self, j: usize) -> &[f64] {
        &self.queries[j * self.dim..(j + 1) * self.dim]
    }

    pub fn heat(&self, j: usize) -> &[f64] {
        &self.heat[j * self.n_voxels..(j + 1) * self.n_voxels]
    }

    pub fn probs(&self, j: usize) -> &[f64] {
        &self.probs[j * self.n_classes..(j + 1) * self.n_classes]
    }

    pub fn feature(&self, v: usize) -> &[f64] {
        &self.features[v * self.dim..(v + 1) * self.dim]
    }

    /// `(probs, heatmap)` per query, the shape the matcher consumes.
    pub fn prob_heat_pairs(&self) -> impl Iterator<Item = (&[f64], &[f64])> + Clone {
        (0..self.n_queries).map(|j| (self.probs(j), self.heat(j)))
    }

    pub fn predictions(&self) -> Vec<Prediction> {
        (0..self.n_queries)
            .map(|j| Prediction {
                query: self.query(j).to_vec(),
                heatmap: self.heat(j).to_vec(),
                probs: self.probs(j).to_vec(),
                objectness: objectness_score(self.probs(j), self.heat(j)),
            })
            .collect()
    }
}

/// Run the model on a scene.
pub fn forward(p: &ModelParams, scene: &Scene) -> Result<ForwardPass> {
    let n = scene.n_voxels();
    let (h, d, nq, nc) = (p.hidden, p.dim, p.n_queries, p.n_classes());
    let scale = 1.0 / sqrt(d as f64);

    let mut inputs = Vec::with_capacity(n * INPUT_DIM);
    let mut hidden = vec![0.0; n * h];
    let mut features = vec![0.0; n * d];
    for (v, vox) in scene.voxels.iter().enumerate() {
        let u = p.input(vox.pos, vox.rgb);
        inputs.extend_from_slice(&u);
        let hv = &mut hidden[v * h..(v + 1) * h];
        for (k, hk) in hv.iter_mut().enumerate() {
            *hk = tanh(p.b1[k] + dot(&p.w1[k * INPUT_DIM..(k + 1) * INPUT_DIM], &u));
        }
        let fv = &mut features[v * d..(v + 1) * d];
        for (i, fi) in fv.iter_mut().enumerate() {
            *fi = p.b2[i] + dot(&p.w2[i * h..(i + 1) * h], hv);
        }
    }

    let mut q = p.queries.clone();
    let mut round_queries = Vec::with_capacity(p.rounds);
    let mut round_attn = Vec::with_capacity(p.rounds);
    let mut scores = vec![0.0; n];
    for _ in 0..p.rounds {
        let mut attn = vec![0.0; nq * n];
        let mut next = q.clone();
        for j in 0..nq {
            let qj = &q[j * d..(j + 1) * d];
            for (v, s) in scores.iter_mut().enumerate() {
                *s = scale * dot(qj, &features[v * d..(v + 1) * d]);
            }
            let a = &mut attn[j * n..(j + 1) * n];
            if n > 0 {
                softmax_into(&scores, a);
            }
            let nj = &mut next[j * d..(j + 1) * d];
            for (v, &av) in a.iter().enumerate() {
                let fv = &features[v * d..(v + 1) * d];
                for (x, f) in nj.iter_mut().zip(fv) {
                    *x += av * f;
                }
            }
        }
        round_queries.push(core::mem::replace(&mut q, next));
        round_attn.push(attn);
    }

    let mut heat = vec![0.0; nq * n];
    let mut probs = vec![0.0; nq * nc];
    let mut logits = vec![0.0; nc];
    for j in 0..nq {
        let qj = &q[j * d..(j + 1) * d];
        for v in 0..n {
            heat[j * n + v] = sigmoid(scale * dot(qj, &features[v * d..(v + 1) * d]));
        }
        for (c, l) in logits.iter_mut().enumerate() {
            *l = p.bc[c] + dot(&p.wc[c * d..(c + 1) * d], qj);
        }
        softmax_into(&logits, &mut probs[j * nc..(j + 1) * nc]);
    }

    if !q.iter().chain(&probs).chain(&heat).all(|x| x.is_finite()) {
        return Err(Error::Numeric("non-finite activation in forward pass".into()));
    }

    Ok(ForwardPass {
        n_voxels: n,
        n_queries: nq,
        dim: d,
        n_classes: nc,
        inputs,
        hidden,
        features,
        round_queries,
        round_attn,
        queries: q,
        heat,
        probs,
    })
}

/// Upstream gradients on the forward outputs.
#[derive(Debug, Clone)]
pub struct OutputGrads {
    /// dL/d(heatmap pre-activation), `n_queries x n_voxels`.
    pub heat_logits: Vec<f64>,
    /// dL/d(class logits), `n_queries x n_classes`.
    pub class_logits: Vec<f64>,
    /// dL/d(refined query), `n_queries x dim`.
    pub queries: Vec<f64>,
}

impl OutputGrads {
    pub fn zeros(pass: &ForwardPass) -> Self {
        OutputGrads {
            heat_logits: vec![0.0; pass.n_queries * pass.n_voxels],
            class_logits: vec![0.0; pass.n_queries * pass.n_classes],
            queries: vec![0.0; pass.n_queries * pass.dim],
        }
    }
}

/// Backpropagate output gradients into parameter gradients (accumulated into `grad`).
pub fn backward(p: &ModelParams, pass: &ForwardPass, out: &OutputGrads, grad: &mut ModelParams) {
    let (n, d, nq, nc, h) = (pass.n_voxels, pass.dim, pass.n_queries, pass.n_classes, p.hidden);
    let scale = 1.0 / sqrt(d as f64);
    let feats = &pass.features;
    let mut dfeat = vec![0.0; n * d];
    let mut dq = out.queries.clone();

    // Class head.
    for j in 0..nq {
        let qj = pass.query(j);
        let dqj = &mut dq[j * d..(j + 1) * d];
        for c in 0..nc {
            let g = out.class_logits[j * nc + c];
            if g == 0.0 {
                continue;
            }
            grad.bc[c] += g;
            let wrow = &p.wc[c * d..(c + 1) * d];
            let grow = &mut grad.wc[c * d..(c + 1) * d];
            for i in 0..d {
                grow[i] += g * qj[i];
                dqj[i] += g * wrow[i];
            }
        }
    }

    // Heatmap logits z_jv = scale * q_j . f_v.
    for j in 0..nq {
        let qj = pass.query(j);
        let dz = &out.heat_logits[j * n..(j + 1) * n];
        let dqj = &mut dq[j * d..(j + 1) * d];
        for v in 0..n {
            let g = dz[v] * scale;
            if g == 0.0 {
                continue;
            }
            let fv = &feats[v * d..(v + 1) * d];
            let dfv = &mut dfeat[v * d..(v + 1) * d];
            for i in 0..d {
                dqj[i] += g * fv[i];
                dfv[i] += g * qj[i];
            }
        }
    }

    // Refinement rounds, last to first.
    let mut dalpha = vec![0.0; n];
    for r in (0..pass.round_queries.len()).rev() {
        let q_in = &pass.round_queries[r];
        let attn = &pass.round_attn[r];
        let mut dq_in = dq.clone();
        for j in 0..nq {
            let gj = &dq[j * d..(j + 1) * d];
            let a = &attn[j * n..(j + 1) * n];
            let mut c = 0.0;
            for v in 0..n {
                let fv = &feats[v * d..(v + 1) * d];
                dalpha[v] = dot(gj, fv);
                c += a[v] * dalpha[v];
                let dfv = &mut dfeat[v * d..(v + 1) * d];
                for i in 0..d {
                    dfv[i] += a[v] * gj[i];
                }
            }
            let qj = &q_in[j * d..(j + 1) * d];
            let dqj = &mut dq_in[j * d..(j + 1) * d];
            for v in 0..n {
                let ds = a[v] * (dalpha[v] - c) * scale;
                if ds == 0.0 {
                    continue;
                }
                let fv = &feats[v * d..(v + 1) * d];
                let dfv = &mut dfeat[v * d..(v + 1) * d];
                for i in 0..d {
                    dqj[i] += ds * fv[i];
                    dfv[i] += ds * qj[i];
                }
            }
        }
        dq = dq_in;
    }
    for (g, x) in grad.queries.iter_mut().zip(&dq) {
        *g += x;
    }

    // Encoder.
    let mut dh = vec![0.0; h];
    for v in 0..n {
        let dfv = &dfeat[v * d..(v + 1) * d];
        let hv = &pass.hidden[v * h..(v + 1) * h];
        dh.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..d {
            let g = dfv[i];
            if g == 0.0 {
                continue;
            }
            grad.b2[i] += g;
            let wrow = &p.w2[i * h..(i + 1) * h];
            let grow = &mut grad.w2[i * h..(i + 1) * h];
            for k in 0..h {
                grow[k] += g * hv[k];
                dh[k] += g * wrow[k];
            }
        }
        let u = &pass.inputs[v * INPUT_DIM..(v + 1) * INPUT_DIM];
        for k in 0..h {
            let da = dh[k] * (1.0 - hv[k] * hv[k]);
            grad.b1[k] += da;
            let grow = &mut grad.w1[k * INPUT_DIM..(k + 1) * INPUT_DIM];
            for (gw, ui) in grow.iter_mut().zip(u) {
                *gw += da * ui;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub bce: f64,
    pub dice: f64,
    /// Multiplier on the no-object cross-entropy of unmatched queries.
    pub no_object: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            bce: 5.0,
            dice: 5.0,
            no_object: 0.1,
        }
    }
}

/// Loss value broken down by term.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossParts {
    pub class: f64,
    pub bce: f64,
    pub dice: f64,
    pub no_object: f64,
    pub contrastive: f64,
}

impl LossParts {
    pub fn total(&self) -> f64 {
        self.class + self.bce + self.dice + self.no_object + self.contrastive
    }
}

/// Optional contrastive term on matched queries.
#[derive(Debug, Clone, Copy)]
pub struct Contrastive<'a> {
    pub bank: &'a PrototypeBank,
    pub weight: f64,
}

/// Set-prediction loss for a fixed matching, with output gradients.
///
/// Matched queries get cross-entropy on their target class plus weighted
/// mean BCE and dice on the heatmap; unmatched queries get cross-entropy on
/// no-object. With `contrastive`, matched queries also pay the hinge
/// embedding loss toward their class prototype.
pub fn training_loss(
    pass: &ForwardPass,
    targets: &[Target],
    matching: &Matching,
    w: &LossWeights,
    contrastive: Option<Contrastive<'_>>,
) -> Result<(LossParts, OutputGrads)> {
    let (n, nc, d) = (pass.n_voxels, pass.n_classes, pass.dim);
    let mut parts = LossParts::default();
    let mut g = OutputGrads::zeros(pass);
    let inv_n = 1.0 / n.max(1) as f64;

    let ce = |j: usize, class: usize, weight: f64, g: &mut OutputGrads| -> f64 {
        let pj = pass.probs(j);
        let gl = &mut g.class_logits[j * nc..(j + 1) * nc];
        for (c, x) in gl.iter_mut().enumerate() {
            *x += weight * (pj[c] - if c == class { 1.0 } else { 0.0 });
        }
        -weight * ln(pj[class].max(f64::MIN_POSITIVE))
    };

    for &(j, t) in &matching.pairs {
        let target = &targets[t];
        parts.class += ce(j, target.class_index, 1.0, &mut g);

        let m = pass.heat(j);
        let y = target.mask.bits();
        let dz = &mut g.heat_logits[j * n..(j + 1) * n];
        if w.bce != 0.0 {
            let mut s = 0.0;
            for v in 0..n {
                let p = clamp_prob(m[v]);
                s -= if y[v] { ln(p) } else { ln(1.0 - p) };
                if m[v] > PROB_CLAMP && m[v] < 1.0 - PROB_CLAMP {
                    dz[v] += w.bce * inv_n * (m[v] - if y[v] { 1.0 } else { 0.0 });
                }
            }
            parts.bce += w.bce * s * inv_n;
        }
        if w.dice != 0.0 {
            let mut inter = 0.0;
            let mut denom = 0.0;
            for v in 0..n {
                denom += m[v];
                if y[v] {
                    inter += m[v];
                    denom += 1.0;
                }
            }
            if denom > 0.0 {
                parts.dice += w.dice * (1.0 - 2.0 * inter / denom);
                let d2 = denom * denom;
                for v in 0..n {
                    let yv = if y[v] { 1.0 } else { 0.0 };
                    let dl_dm = -2.0 * (yv * denom - inter) / d2;
                    dz[v] += w.dice * dl_dm * m[v] * (1.0 - m[v]);
                }
            }
        }

        if let Some(c) = contrastive {
            if c.weight != 0.0 && c.bank.get(target.class_index).is_some() {
                let (l, gq) = contrastive_loss(pass.query(j), target.class_index, c.bank)?;
                parts.contrastive += c.weight * l;
                for (a, b) in g.queries[j * d..(j + 1) * d].iter_mut().zip(&gq) {
                    *a += c.weight * b;
                }
            }
        }
    }
    let no_obj = nc - 1;
    for &j in &matching.unmatched {
        parts.no_object += ce(j, no_obj, w.no_object, &mut g);
    }
    if !parts.total().is_finite() {
        return Err(Error::Numeric("non-finite training loss".into()));
    }
    Ok((parts, g))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Momentum,
    #[default]
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub momentum: f64,
    /// Clip the global gradient norm to this value; 0 disables clipping.
    pub clip_norm: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adam,
            lr: 0.003,
            momentum: 0.9,
            clip_norm: 0.0,
        }
    }
}

/// Optimizer state (momentum buffer, or Adam moments).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimizer {
    pub cfg: OptimizerConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Optimizer {
    pub fn new(cfg: OptimizerConfig, params: &ModelParams) -> Self {
        let n = params.num_params();
        Optimizer {
            cfg,
            m: vec![0.0; n],
            v: if cfg.kind == OptimizerKind::Adam { vec![0.0; n] } else { Vec::new() },
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut ModelParams, grad: &ModelParams) {
        let mut g = grad.flatten();
        if self.m.len() != g.len() {
            // Head was widened; restart the state.
            *self = Optimizer::new(self.cfg, params);
        }
        if self.cfg.clip_norm > 0.0 {
            let norm = sqrt(g.iter().map(|x| x * x).sum());
            if norm > self.cfg.clip_norm {
                let s = self.cfg.clip_norm / norm;
                g.iter_mut().for_each(|x| *x *= s);
            }
        }
        let mut flat = params.flatten();
        self.t += 1;
        match self.cfg.kind {
            OptimizerKind::Momentum => {
                for ((p, m), gi) in flat.iter_mut().zip(&mut self.m).zip(&g) {
                    *m = self.cfg.momentum * *m + gi;
                    *p -= self.cfg.lr * *m;
                }
            }
            OptimizerKind::Adam => {
                let (b1, b2, eps) = (0.9, 0.999, 1e-8);
                let c1 = 1.0 - libm::pow(b1, self.t as f64);
                let c2 = 1.0 - libm::pow(b2, self.t as f64);
                for (((p, m), v), gi) in flat.iter_mut().zip(&mut self.m).zip(&mut self.v).zip(&g) {
                    *m = b1 * *m + (1.0 - b1) * gi;
                    *v = b2 * *v + (1.0 - b2) * gi * gi;
                    *p -= self.cfg.lr * (*m / c1) / (sqrt(*v / c2) + eps);
                }
            }
        }
        params.set_flat(&flat);
    }
}
