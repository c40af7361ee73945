//! Component-decomposed field surrogate: node featurizer, per-component
//! slicing attention, global mixer with contact tokens, interface message
//! passing and a one-shot temporal decoder.

use std::collections::HashMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::interface_graph;
use super::sample::LearningSample;
use super::tape::{Mat, Tape, Var};
use super::SurrogateError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrashSolverConfig {
    pub latent_dim: usize,
    pub slices: usize,
    pub encoder_layers: usize,
    pub global_layers: usize,
    pub heads: usize,
    pub part_embedding_dim: usize,
    pub positional_dim: usize,
    pub contact_tokens: usize,
    pub message_rounds: usize,
    pub decoder_hidden: usize,
    pub frames: usize,
    pub components: usize,
    pub parts: usize,
    pub design_dim: usize,
    /// Replaces every nonlinearity with the identity and skips both
    /// attention stages. Used to verify gradients on a model that is
    /// quadratic in each parameter.
    #[serde(default)]
    pub linear_only: bool,
}

impl CrashSolverConfig {
    /// Full-size settings (latent 96, 32 slices, 3 global layers).
    pub fn full(frames: usize, components: usize, parts: usize, design_dim: usize) -> Self {
        CrashSolverConfig {
            latent_dim: 96,
            slices: 32,
            encoder_layers: 2,
            global_layers: 3,
            heads: 4,
            part_embedding_dim: 32,
            positional_dim: 32,
            contact_tokens: 16,
            message_rounds: 2,
            decoder_hidden: 384,
            frames,
            components,
            parts,
            design_dim,
            linear_only: false,
        }
    }

    /// Small settings for tests and desk-scale campaigns.
    pub fn tiny(frames: usize, components: usize, parts: usize, design_dim: usize) -> Self {
        CrashSolverConfig {
            latent_dim: 16,
            slices: 4,
            encoder_layers: 1,
            global_layers: 1,
            heads: 2,
            part_embedding_dim: 4,
            positional_dim: 12,
            contact_tokens: 2,
            message_rounds: 1,
            decoder_hidden: 32,
            frames,
            components,
            parts,
            design_dim,
            linear_only: false,
        }
    }

    pub fn validate(&self) -> Result<(), SurrogateError> {
        let dims = [
            ("latent_dim", self.latent_dim),
            ("slices", self.slices),
            ("heads", self.heads),
            ("part_embedding_dim", self.part_embedding_dim),
            ("positional_dim", self.positional_dim),
            ("contact_tokens", self.contact_tokens),
            ("decoder_hidden", self.decoder_hidden),
            ("frames", self.frames),
            ("components", self.components),
            ("parts", self.parts),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(SurrogateError::Config(format!("{name} must be positive")));
            }
        }
        if !self.latent_dim.is_multiple_of(self.heads) {
            return Err(SurrogateError::Config(format!(
                "heads ({}) must divide latent_dim ({})",
                self.heads, self.latent_dim
            )));
        }
        Ok(())
    }

    fn feature_dim(&self) -> usize {
        3 + 1 + self.positional_dim + self.design_dim + self.part_embedding_dim
    }
}

/// Normalization constants fixed from the training campaign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub tau_median: f64,
    /// Decoder outputs are multiplied by this (mm).
    pub output_scale: f64,
}

impl Default for FeatureStats {
    fn default() -> Self {
        FeatureStats { tau_median: 1.0, output_scale: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateModel {
    pub config: CrashSolverConfig,
    pub stats: FeatureStats,
    pub seed: u64,
    pub names: Vec<String>,
    pub params: Vec<Mat>,
    index: HashMap<String, usize>,
}

struct Init {
    rng: ChaCha8Rng,
    names: Vec<String>,
    params: Vec<Mat>,
}

impl Init {
    fn add(&mut self, name: String, m: Mat) {
        self.names.push(name);
        self.params.push(m);
    }

    fn xavier(&mut self, name: String, fan_in: usize, fan_out: usize) {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out).map(|_| self.rng.random_range(-a..a)).collect();
        self.add(name, Mat::from_vec(fan_in, fan_out, data));
    }

    fn uniform(&mut self, name: String, rows: usize, cols: usize, a: f64) {
        let data = (0..rows * cols).map(|_| self.rng.random_range(-a..a)).collect();
        self.add(name, Mat::from_vec(rows, cols, data));
    }

    fn zeros(&mut self, name: String, rows: usize, cols: usize) {
        self.add(name, Mat::zeros(rows, cols));
    }

    fn attention(&mut self, prefix: &str, d: usize) {
        for w in ["wq", "wk", "wv", "wo"] {
            self.xavier(format!("{prefix}.{w}"), d, d);
        }
        self.xavier(format!("{prefix}.ff1"), d, 2 * d);
        self.zeros(format!("{prefix}.ff1_b"), 1, 2 * d);
        self.xavier(format!("{prefix}.ff2"), 2 * d, d);
        self.zeros(format!("{prefix}.ff2_b"), 1, d);
    }
}

impl SurrogateModel {
    /// Deterministic initialization; the final decoder layer starts at zero.
    pub fn new(config: CrashSolverConfig, stats: FeatureStats, seed: u64) -> Result<Self, SurrogateError> {
        config.validate()?;
        let d = config.latent_dim;
        let mut it = Init { rng: ChaCha8Rng::seed_from_u64(seed), names: Vec::new(), params: Vec::new() };
        it.uniform("part_embedding".into(), config.parts, config.part_embedding_dim, 1.0);
        it.xavier("featurizer.w".into(), config.feature_dim(), d);
        it.zeros("featurizer.b".into(), 1, d);
        it.xavier("slice.w".into(), d, config.slices);
        it.zeros("slice.b".into(), 1, config.slices);
        for l in 0..config.encoder_layers {
            it.attention(&format!("encoder.{l}"), d);
        }
        it.uniform("contact_tokens".into(), config.contact_tokens, d, 0.5);
        for l in 0..config.global_layers {
            it.attention(&format!("global.{l}"), d);
        }
        it.xavier("global.out".into(), d, d);
        it.xavier("interface.msg".into(), d, d);
        it.zeros("interface.msg_b".into(), 1, d);
        it.xavier("interface.update".into(), d, d);
        it.xavier("decoder.w1_latent".into(), d, config.decoder_hidden);
        it.xavier("decoder.w1_time".into(), config.positional_dim, config.decoder_hidden);
        it.zeros("decoder.b1".into(), 1, config.decoder_hidden);
        it.zeros("decoder.w2".into(), config.decoder_hidden, 3);
        it.zeros("decoder.b2".into(), 1, 3);
        let index = it.names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        Ok(SurrogateModel { config, stats, seed, names: it.names, params: it.params, index })
    }

    /// Rebuilds a model from stored tensors, checking names and shapes.
    pub fn from_parts(
        config: CrashSolverConfig,
        stats: FeatureStats,
        seed: u64,
        tensors: Vec<(String, Mat)>,
    ) -> Result<Self, SurrogateError> {
        let mut m = SurrogateModel::new(config, stats, seed)?;
        if tensors.len() != m.params.len() {
            return Err(SurrogateError::Checkpoint(format!(
                "expected {} tensors, found {}",
                m.params.len(),
                tensors.len()
            )));
        }
        for (i, (name, t)) in tensors.into_iter().enumerate() {
            if name != m.names[i] || t.shape() != m.params[i].shape() {
                return Err(SurrogateError::Checkpoint(format!("tensor {i} ({name}) does not match the configuration")));
            }
            m.params[i] = t;
        }
        Ok(m)
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    pub fn param(&self, name: &str) -> Option<&Mat> {
        self.index.get(name).map(|&i| &self.params[i])
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Mat> {
        self.index.get(name).map(|&i| &mut self.params[i])
    }

    /// Predicted displacement frames, each N×3 (mm).
    pub fn forward(&self, sample: &LearningSample) -> Result<Vec<Mat>, SurrogateError> {
        let mut tape = Tape::new();
        let g = self.record(&mut tape, sample)?;
        Ok(g.outputs.iter().map(|v| tape.value(*v).clone()).collect())
    }

    /// Loss and its gradient for every parameter tensor.
    pub fn loss_and_grad(&self, sample: &LearningSample) -> Result<(f64, Vec<Mat>), SurrogateError> {
        let mut tape = Tape::new();
        let g = self.record(&mut tape, sample)?;
        let loss = loss_on_tape(&mut tape, &g.outputs, &sample.target);
        let value = tape.value(loss).data[0];
        let mut grads = tape.backward(loss);
        let out = g
            .params
            .iter()
            .zip(&self.params)
            .map(|(v, p)| grads[v.0].take().unwrap_or_else(|| Mat::zeros(p.rows, p.cols)))
            .collect();
        Ok((value, out))
    }

    pub fn loss(&self, sample: &LearningSample) -> Result<f64, SurrogateError> {
        Ok(loss(&self.forward(sample)?, &sample.target))
    }

    /// Slice-assignment matrix of each component (rows are nodes of that
    /// component in ascending index order).
    pub fn slice_assignments(&self, sample: &LearningSample) -> Result<Vec<Option<Mat>>, SurrogateError> {
        let mut tape = Tape::new();
        let g = self.record(&mut tape, sample)?;
        Ok(g.assignments.iter().map(|a| a.map(|v| tape.value(v).clone())).collect())
    }

    /// Component summaries `z_k` before the global mixer, one row each.
    pub fn component_summaries(&self, sample: &LearningSample) -> Result<Mat, SurrogateError> {
        let mut tape = Tape::new();
        let g = self.record(&mut tape, sample)?;
        Ok(tape.value(g.summaries).clone())
    }

    fn record(&self, t: &mut Tape, s: &LearningSample) -> Result<Recorded, SurrogateError> {
        let cfg = &self.config;
        s.validate(cfg.parts, cfg.components, cfg.design_dim)?;
        if s.n_frames() != cfg.frames {
            return Err(SurrogateError::Shape {
                stage: "decoder",
                detail: format!("sample has {} frames, model decodes {}", s.n_frames(), cfg.frames),
            });
        }
        let n = s.n_nodes();
        let d = cfg.latent_dim;
        let params: Vec<Var> = self.params.iter().map(|p| t.param(p.clone())).collect();
        let p = |name: &str| params[self.index[name]];
        let act = |t: &mut Tape, v: Var| if cfg.linear_only { v } else { t.gelu(v) };

        // (1) node features
        let feats = t.constant(self.node_features(s));
        let emb = t.gather_rows(p("part_embedding"), &s.parts);
        let f = t.concat_cols(&[feats, emb]);
        let h = t.matmul(f, p("featurizer.w"));
        let h = t.add_row(h, p("featurizer.b"));
        let mut h = act(t, h);

        let members: Vec<Vec<usize>> = (0..cfg.components)
            .map(|k| (0..n).filter(|&i| s.components[i] == k).collect())
            .collect();

        // (2) per-component slicing attention with shared weights
        let mut assignments = vec![None; cfg.components];
        if !cfg.linear_only {
            let mut pieces = Vec::new();
            for (k, idx) in members.iter().enumerate() {
                if idx.is_empty() {
                    continue;
                }
                let hk = t.gather_rows(h, idx);
                let logits = t.matmul(hk, p("slice.w"));
                let logits = t.add_row(logits, p("slice.b"));
                let a = t.softmax_rows(logits);
                assignments[k] = Some(a);
                let at = t.transpose(a);
                let ones = ones_col(t, idx.len());
                let sums = t.matmul(at, ones);
                let tok = t.matmul(at, hk);
                let mut tok = t.div_rows(tok, sums);
                for l in 0..cfg.encoder_layers {
                    tok = self.block(t, &params, &format!("encoder.{l}"), tok);
                }
                let back = t.matmul(a, tok);
                let hk = t.add(hk, back);
                pieces.push(t.scatter_add_rows(hk, idx, n));
            }
            let mut acc = pieces[0];
            for &q in &pieces[1..] {
                acc = t.add(acc, q);
            }
            h = acc;
        }

        // (3) component summaries and global mixing with contact tokens
        let mut rows = Vec::with_capacity(cfg.components + 1);
        for idx in &members {
            if idx.is_empty() {
                rows.push(t.constant(Mat::zeros(1, d)));
            } else {
                let hk = t.gather_rows(h, idx);
                rows.push(t.mean_rows(hk));
            }
        }
        let summaries = t.concat_rows(&rows);
        if cfg.linear_only {
            let g = t.matmul(summaries, p("global.out"));
            let back = t.gather_rows(g, &s.components);
            h = t.add(h, back);
        } else {
            let mut z = t.concat_rows(&[summaries, p("contact_tokens")]);
            for l in 0..cfg.global_layers {
                z = self.block(t, &params, &format!("global.{l}"), z);
            }
            let comp: Vec<usize> = (0..cfg.components).collect();
            let z = t.gather_rows(z, &comp);
            let g = t.matmul(z, p("global.out"));
            let back = t.gather_rows(g, &s.components);
            h = t.add(h, back);
        }

        // (4) interface message passing
        let gi = interface_graph(&s.edges, &s.components);
        if !gi.crossings.is_empty() {
            let src: Vec<usize> = gi.crossings.iter().map(|c| c.0).collect();
            let dst: Vec<usize> = gi.crossings.iter().map(|c| c.1).collect();
            let mut deg = vec![0.0; n];
            for &j in &dst {
                deg[j] += 1.0;
            }
            let mut inv = Mat::zeros(n, d);
            for i in 0..n {
                if deg[i] > 0.0 {
                    inv.data[i * d..(i + 1) * d].iter_mut().for_each(|x| *x = 1.0 / deg[i]);
                }
            }
            let inv = t.constant(inv);
            for _ in 0..cfg.message_rounds {
                let m = t.gather_rows(h, &src);
                let m = t.matmul(m, p("interface.msg"));
                let m = t.add_row(m, p("interface.msg_b"));
                let m = act(t, m);
                let agg = t.scatter_add_rows(m, &dst, n);
                let agg = t.mul(agg, inv);
                let upd = t.matmul(agg, p("interface.update"));
                h = t.add(h, upd);
            }
        }

        // (5) one-shot temporal decoder
        let base = t.matmul(h, p("decoder.w1_latent"));
        let base = t.add_row(base, p("decoder.b1"));
        let mut outputs = Vec::with_capacity(s.n_frames());
        for &time in &s.times {
            let e = t.constant(time_embedding(time, cfg.positional_dim));
            let q = t.matmul(e, p("decoder.w1_time"));
            let pre = t.add_row(base, q);
            let hid = act(t, pre);
            let o = t.matmul(hid, p("decoder.w2"));
            let o = t.add_row(o, p("decoder.b2"));
            outputs.push(t.scale(o, self.stats.output_scale));
        }
        Ok(Recorded { params, outputs, assignments, summaries })
    }

    /// Pre-norm-free residual attention block followed by a residual MLP.
    fn block(&self, t: &mut Tape, params: &[Var], prefix: &str, x: Var) -> Var {
        let p = |name: &str| params[self.index[&format!("{prefix}.{name}")]];
        let heads = self.config.heads;
        let dh = self.config.latent_dim / heads;
        let q = t.matmul(x, p("wq"));
        let k = t.matmul(x, p("wk"));
        let v = t.matmul(x, p("wv"));
        let mut outs = Vec::with_capacity(heads);
        for hd in 0..heads {
            let qh = t.slice_cols(q, hd * dh, dh);
            let kh = t.slice_cols(k, hd * dh, dh);
            let vh = t.slice_cols(v, hd * dh, dh);
            let kt = t.transpose(kh);
            let sc = t.matmul(qh, kt);
            let sc = t.scale(sc, 1.0 / (dh as f64).sqrt());
            let w = t.softmax_rows(sc);
            outs.push(t.matmul(w, vh));
        }
        let o = if heads == 1 { outs[0] } else { t.concat_cols(&outs) };
        let o = t.matmul(o, p("wo"));
        let x = t.add(x, o);
        let f = t.matmul(x, p("ff1"));
        let f = t.add_row(f, p("ff1_b"));
        let f = t.gelu(f);
        let f = t.matmul(f, p("ff2"));
        let f = t.add_row(f, p("ff2_b"));
        t.add(x, f)
    }

    /// Constant per-node features: normalized coordinates, thickness,
    /// positional encoding and the broadcast design vector.
    fn node_features(&self, s: &LearningSample) -> Mat {
        let cfg = &self.config;
        let n = s.n_nodes();
        let width = 4 + cfg.positional_dim + cfg.design_dim;
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for i in 0..n {
            for a in 0..3 {
                lo[a] = lo[a].min(s.x0.at(i, a));
                hi[a] = hi[a].max(s.x0.at(i, a));
            }
        }
        let mut out = Mat::zeros(n, width);
        for i in 0..n {
            let row = &mut out.data[i * width..(i + 1) * width];
            let mut xt = [0.0; 3];
            for a in 0..3 {
                let span = hi[a] - lo[a];
                xt[a] = if span > 0.0 { 2.0 * (s.x0.at(i, a) - lo[a]) / span - 1.0 } else { 0.0 };
            }
            row[..3].copy_from_slice(&xt);
            row[3] = s.tau[i] / self.stats.tau_median;
            for j in 0..cfg.positional_dim {
                let axis = j % 3;
                let freq = PI * (1u64 << ((j / 6).min(20))) as f64 / 2.0;
                let arg = freq * xt[axis];
                row[4 + j] = if (j / 3) % 2 == 0 { arg.sin() } else { arg.cos() };
            }
            row[4 + cfg.positional_dim..].copy_from_slice(&s.xi);
        }
        out
    }
}

struct Recorded {
    params: Vec<Var>,
    outputs: Vec<Var>,
    assignments: Vec<Option<Var>>,
    summaries: Var,
}

fn ones_col(t: &mut Tape, n: usize) -> Var {
    t.constant(Mat::filled(n, 1, 1.0))
}

/// Sinusoidal embedding of a normalized time as a `1×dim` row.
pub fn time_embedding(time: f64, dim: usize) -> Mat {
    let mut row = vec![0.0; dim];
    for (j, r) in row.iter_mut().enumerate() {
        let w = PI * (j / 2 + 1) as f64;
        *r = if j % 2 == 0 { (w * time).sin() } else { (w * time).cos() };
    }
    Mat::from_vec(1, dim, row)
}

fn loss_on_tape(t: &mut Tape, outputs: &[Var], target: &[Mat]) -> Var {
    let count: usize = target.iter().map(|m| m.data.len()).sum();
    let mut acc = t.sq_err_sum(outputs[0], &target[0]);
    for (o, u) in outputs.iter().zip(target).skip(1) {
        let e = t.sq_err_sum(*o, u);
        acc = t.add(acc, e);
    }
    t.scale(acc, 1.0 / count as f64)
}

/// Mean squared error over frames, nodes and axes (mm²).
pub fn loss(pred: &[Mat], target: &[Mat]) -> f64 {
    let mut s = 0.0;
    let mut k = 0usize;
    for (p, u) in pred.iter().zip(target) {
        for (a, b) in p.data.iter().zip(&u.data) {
            s += (a - b) * (a - b);
        }
        k += u.data.len();
    }
    if k == 0 {
        0.0
    } else {
        s / k as f64
    }
}
