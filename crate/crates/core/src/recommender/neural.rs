//! Song embeddings with a causal multi-head self-attention aggregator,
//! trained with a sampled-softmax contrastive loss.
//!
//! A seed window `t_0..t_{n-1}` (the last `window` songs) is embedded as
//! `x_i = E[t_i] + P[i]`. Each attention layer adds
//! `W_o · concat_h(softmax_j≤i(q_i·k_j / sqrt(d_h)) v_j)` to its input. The
//! seed embedding is the output at the last position, and the similarity
//! of song `s` is `E[s] · z`. An empty seed uses a learned vector.
//!
//! During training every prefix of a window predicts its next song against
//! `negatives` uniformly sampled songs; the first window of a playlist also
//! predicts its first song from the empty context.

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Scorer;
use crate::corpus::{Playlist, SongId};
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::seed;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NeuralConfig {
    pub dim: usize,
    pub heads: usize,
    /// Attention layers; 0 leaves the aggregator as `E[last] + P[pos]`.
    pub layers: usize,
    pub window: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub negatives: usize,
    pub init_scale: f64,
    /// Stop after this many epochs without validation improvement and keep
    /// the best parameters.
    pub early_stopping_patience: Option<usize>,
    pub seed: u64,
    pub execution: Execution,
}

impl Default for NeuralConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            heads: 2,
            layers: 1,
            window: 50,
            dropout: 0.1,
            learning_rate: 0.005,
            weight_decay: 0.0,
            epochs: 10,
            batch_size: 64,
            negatives: 100,
            init_scale: 0.1,
            early_stopping_patience: None,
            seed: 0,
            execution: Execution::Parallel,
        }
    }
}

impl NeuralConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("neural: {m}")));
        if self.dim == 0 {
            return bad("dim must be >= 1");
        }
        if self.heads == 0 || !self.dim.is_multiple_of(self.heads) {
            return bad("heads must divide dim");
        }
        if self.window < 2 {
            return bad("window must be >= 2");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0,1)");
        }
        if !(self.learning_rate > 0.0) || self.weight_decay < 0.0 {
            return bad("learning_rate must be > 0 and weight_decay >= 0");
        }
        if self.batch_size == 0 || self.negatives == 0 {
            return bad("batch_size and negatives must be >= 1");
        }
        Ok(())
    }
}

/// Offsets of each parameter block in the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Layout {
    n_songs: usize,
    dim: usize,
    window: usize,
    layers: usize,
}

impl Layout {
    fn emb(&self) -> usize {
        0
    }
    fn pos(&self) -> usize {
        self.n_songs * self.dim
    }
    fn empty(&self) -> usize {
        self.pos() + self.window * self.dim
    }
    /// Start of matrix `which` (0 = q, 1 = k, 2 = v, 3 = o) of `layer`.
    fn mat(&self, layer: usize, which: usize) -> usize {
        self.empty() + self.dim + (layer * 4 + which) * self.dim * self.dim
    }
    fn len(&self) -> usize {
        self.mat(self.layers, 0)
    }
}

#[derive(Debug, Clone)]
pub struct NeuralModel {
    config: NeuralConfig,
    layout: Layout,
    params: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradCheckScope {
    All,
    /// Only aggregator parameters (positions, empty context, attention);
    /// song embeddings are held fixed.
    AggregatorOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub initial_val_loss: Option<f64>,
    pub epochs: Vec<EpochLog>,
    pub best_epoch: Option<usize>,
}

impl TrainingLog {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["epoch", "train_loss", "val_loss", "wall_time_s"])?;
        for e in &self.epochs {
            w.write_record([
                e.epoch.to_string(),
                e.train_loss.to_string(),
                e.val_loss.map(|v| v.to_string()).unwrap_or_default(),
                format!("{:.3}", e.wall_time_s),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// One training window of a playlist.
#[derive(Debug, Clone, Copy)]
struct Chunk<'a> {
    tokens: &'a [SongId],
    /// Whether the first token is also predicted from the empty context.
    predict_first: bool,
}

impl Chunk<'_> {
    fn n_predictions(&self) -> usize {
        self.tokens.len() - 1 + usize::from(self.predict_first)
    }
}

/// Windows of at most `window` tokens overlapping by one, so every token
/// after the first is predicted exactly once.
fn chunks(playlists: &[Playlist], window: usize) -> Vec<Chunk<'_>> {
    let mut out = Vec::new();
    for p in playlists {
        let t = &p.tracks;
        if t.is_empty() {
            continue;
        }
        let mut start = 0;
        loop {
            let end = (start + window).min(t.len());
            out.push(Chunk {
                tokens: &t[start..end],
                predict_first: start == 0,
            });
            if end == t.len() {
                break;
            }
            start = end - 1;
        }
    }
    out
}

/// Activations kept for the backward pass.
struct LayerCache {
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// `attn[h][i * n + j]`, zero for `j > i`.
    attn: Vec<Vec<f64>>,
    /// Attention output after dropout.
    ctx: Vec<f64>,
    mask: Option<Vec<f64>>,
}

struct Cache {
    n: usize,
    /// `xs[l]` is the input of layer `l`; `xs[layers]` is the output.
    xs: Vec<Vec<f64>>,
    layers: Vec<LayerCache>,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y = W x` for row-major `d × d` `w`.
#[inline]
fn matvec(w: &[f64], x: &[f64], y: &mut [f64]) {
    let d = x.len();
    for (r, yr) in y.iter_mut().enumerate() {
        *yr = dot(&w[r * d..(r + 1) * d], x);
    }
}

/// `y += Wᵀ x`.
#[inline]
fn matvec_t_acc(w: &[f64], x: &[f64], y: &mut [f64]) {
    let d = x.len();
    for (r, &xr) in x.iter().enumerate() {
        if xr == 0.0 {
            continue;
        }
        for (yc, wc) in y.iter_mut().zip(&w[r * d..(r + 1) * d]) {
            *yc += xr * wc;
        }
    }
}

/// `G += a bᵀ`.
#[inline]
fn outer_acc(g: &mut [f64], a: &[f64], b: &[f64]) {
    let d = b.len();
    for (r, &ar) in a.iter().enumerate() {
        if ar == 0.0 {
            continue;
        }
        for (gc, bc) in g[r * d..(r + 1) * d].iter_mut().zip(b) {
            *gc += ar * bc;
        }
    }
}

fn uniform_fill(rng: &mut ChaCha8Rng, out: &mut [f64], std: f64) {
    let a = std * 3f64.sqrt();
    for v in out {
        *v = rng.random_range(-a..a);
    }
}

impl NeuralModel {
    /// Randomly initialised model.
    pub fn new(n_songs: usize, config: &NeuralConfig) -> Result<Self> {
        config.validate()?;
        let layout = Layout {
            n_songs,
            dim: config.dim,
            window: config.window,
            layers: config.layers,
        };
        let mut params = vec![0.0; layout.len()];
        let mut rng = seed::rng(seed::derive(config.seed, &[seed::label("init")]));
        let d = config.dim;
        uniform_fill(&mut rng, &mut params[layout.emb()..layout.pos()], config.init_scale);
        uniform_fill(&mut rng, &mut params[layout.pos()..layout.empty()], config.init_scale);
        uniform_fill(
            &mut rng,
            &mut params[layout.empty()..layout.empty() + d],
            config.init_scale,
        );
        let std = 1.0 / (d as f64).sqrt();
        for l in 0..config.layers {
            for which in 0..4 {
                let at = layout.mat(l, which);
                uniform_fill(&mut rng, &mut params[at..at + d * d], std);
            }
        }
        Ok(Self {
            config: config.clone(),
            layout,
            params,
        })
    }

    pub fn config(&self) -> &NeuralConfig {
        &self.config
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Row `s` of the song embedding table.
    pub fn embedding(&self, s: SongId) -> &[f64] {
        let d = self.layout.dim;
        &self.params[s.index() * d..(s.index() + 1) * d]
    }

    /// Sets every song embedding to zero.
    pub fn zero_embeddings(&mut self) {
        let end = self.layout.pos();
        self.params[..end].fill(0.0);
    }

    fn forward(&self, tokens: &[SongId], dropout: Option<&mut ChaCha8Rng>) -> Cache {
        let lay = self.layout;
        let d = lay.dim;
        let n = tokens.len();
        let h_count = self.config.heads;
        let dh = d / h_count;
        let scale = 1.0 / (dh as f64).sqrt();
        let p = &self.params;

        let mut x0 = vec![0.0; n * d];
        for (i, t) in tokens.iter().enumerate() {
            let e = &p[t.index() * d..(t.index() + 1) * d];
            let pos = &p[lay.pos() + i * d..lay.pos() + (i + 1) * d];
            for c in 0..d {
                x0[i * d + c] = e[c] + pos[c];
            }
        }
        let mut xs = vec![x0];
        let mut layers = Vec::with_capacity(lay.layers);
        let mut dropout = dropout;
        for l in 0..lay.layers {
            let x = xs.last().unwrap();
            let (wq, wk, wv, wo) = (
                &p[lay.mat(l, 0)..lay.mat(l, 0) + d * d],
                &p[lay.mat(l, 1)..lay.mat(l, 1) + d * d],
                &p[lay.mat(l, 2)..lay.mat(l, 2) + d * d],
                &p[lay.mat(l, 3)..lay.mat(l, 3) + d * d],
            );
            let mut q = vec![0.0; n * d];
            let mut k = vec![0.0; n * d];
            let mut v = vec![0.0; n * d];
            for i in 0..n {
                let xi = &x[i * d..(i + 1) * d];
                matvec(wq, xi, &mut q[i * d..(i + 1) * d]);
                matvec(wk, xi, &mut k[i * d..(i + 1) * d]);
                matvec(wv, xi, &mut v[i * d..(i + 1) * d]);
            }
            let mut attn = vec![vec![0.0; n * n]; h_count];
            let mut ctx = vec![0.0; n * d];
            for (h, a) in attn.iter_mut().enumerate() {
                let hs = h * dh;
                for i in 0..n {
                    let qi = &q[i * d + hs..i * d + hs + dh];
                    let row = &mut a[i * n..i * n + i + 1];
                    let mut max = f64::NEG_INFINITY;
                    for (j, r) in row.iter_mut().enumerate() {
                        *r = dot(qi, &k[j * d + hs..j * d + hs + dh]) * scale;
                        max = max.max(*r);
                    }
                    let mut sum = 0.0;
                    for r in row.iter_mut() {
                        *r = (*r - max).exp();
                        sum += *r;
                    }
                    for r in row.iter_mut() {
                        *r /= sum;
                    }
                    let ci = &mut ctx[i * d + hs..i * d + hs + dh];
                    for (j, &aij) in row.iter().enumerate() {
                        for (c, vj) in ci.iter_mut().zip(&v[j * d + hs..j * d + hs + dh]) {
                            *c += aij * vj;
                        }
                    }
                }
            }
            let mask = match dropout.as_deref_mut() {
                Some(rng) if self.config.dropout > 0.0 => {
                    let keep = 1.0 - self.config.dropout;
                    let m: Vec<f64> = (0..n * d)
                        .map(|_| {
                            if rng.random::<f64>() < keep {
                                1.0 / keep
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    for (c, mv) in ctx.iter_mut().zip(&m) {
                        *c *= mv;
                    }
                    Some(m)
                }
                _ => None,
            };
            let mut out = x.clone();
            let mut tmp = vec![0.0; d];
            for i in 0..n {
                matvec(wo, &ctx[i * d..(i + 1) * d], &mut tmp);
                for (o, t) in out[i * d..(i + 1) * d].iter_mut().zip(&tmp) {
                    *o += t;
                }
            }
            layers.push(LayerCache {
                q,
                k,
                v,
                attn,
                ctx,
                mask,
            });
            xs.push(out);
        }
        Cache { n, xs, layers }
    }

    /// Backpropagates `dz` (gradient w.r.t. the final outputs, `n × d`)
    /// into `grad`.
    fn backward(&self, tokens: &[SongId], cache: &Cache, dz: Vec<f64>, grad: &mut [f64]) {
        let lay = self.layout;
        let d = lay.dim;
        let n = cache.n;
        let h_count = self.config.heads;
        let dh = d / h_count;
        let scale = 1.0 / (dh as f64).sqrt();
        let p = &self.params;

        let mut dx = dz;
        for l in (0..lay.layers).rev() {
            let lc = &cache.layers[l];
            let x = &cache.xs[l];
            let offs = [lay.mat(l, 0), lay.mat(l, 1), lay.mat(l, 2), lay.mat(l, 3)];
            let wo = &p[offs[3]..offs[3] + d * d];

            // residual path
            let mut dx_in = dx.clone();
            let mut dctx = vec![0.0; n * d];
            for i in 0..n {
                let dxi = &dx[i * d..(i + 1) * d];
                outer_acc(
                    &mut grad[offs[3]..offs[3] + d * d],
                    dxi,
                    &lc.ctx[i * d..(i + 1) * d],
                );
                matvec_t_acc(wo, dxi, &mut dctx[i * d..(i + 1) * d]);
            }
            if let Some(mask) = &lc.mask {
                for (g, m) in dctx.iter_mut().zip(mask) {
                    *g *= m;
                }
            }

            let mut dq = vec![0.0; n * d];
            let mut dk = vec![0.0; n * d];
            let mut dv = vec![0.0; n * d];
            let mut da = vec![0.0; n];
            for (h, a) in lc.attn.iter().enumerate() {
                let hs = h * dh;
                for i in 0..n {
                    let dci = &dctx[i * d + hs..i * d + hs + dh];
                    let row = &a[i * n..i * n + i + 1];
                    let mut weighted = 0.0;
                    for (j, &aij) in row.iter().enumerate() {
                        da[j] = dot(dci, &lc.v[j * d + hs..j * d + hs + dh]);
                        weighted += aij * da[j];
                        for (g, c) in dv[j * d + hs..j * d + hs + dh].iter_mut().zip(dci) {
                            *g += aij * c;
                        }
                    }
                    for (j, &aij) in row.iter().enumerate() {
                        let ds = aij * (da[j] - weighted) * scale;
                        if ds == 0.0 {
                            continue;
                        }
                        for c in 0..dh {
                            dq[i * d + hs + c] += ds * lc.k[j * d + hs + c];
                            dk[j * d + hs + c] += ds * lc.q[i * d + hs + c];
                        }
                    }
                }
            }
            for (which, dproj) in [(0, &dq), (1, &dk), (2, &dv)] {
                let w = &p[offs[which]..offs[which] + d * d];
                for i in 0..n {
                    let g = &dproj[i * d..(i + 1) * d];
                    outer_acc(
                        &mut grad[offs[which]..offs[which] + d * d],
                        g,
                        &x[i * d..(i + 1) * d],
                    );
                    matvec_t_acc(w, g, &mut dx_in[i * d..(i + 1) * d]);
                }
            }
            dx = dx_in;
        }
        for (i, t) in tokens.iter().enumerate() {
            let g = &dx[i * d..(i + 1) * d];
            for (e, gi) in grad[t.index() * d..(t.index() + 1) * d].iter_mut().zip(g) {
                *e += gi;
            }
            for (e, gi) in grad[lay.pos() + i * d..lay.pos() + (i + 1) * d]
                .iter_mut()
                .zip(g)
            {
                *e += gi;
            }
        }
    }

    /// Sampled-softmax loss of `positive` against `negatives` for output
    /// `z`; accumulates `weight`-scaled gradients into `grad` (embeddings)
    /// and `dz`.
    fn contrastive(
        &self,
        z: &[f64],
        positive: SongId,
        negatives: &[SongId],
        weight: f64,
        grad: Option<(&mut [f64], &mut [f64])>,
    ) -> f64 {
        let mut logits = Vec::with_capacity(negatives.len() + 1);
        logits.push(dot(self.embedding(positive), z));
        for &s in negatives {
            logits.push(dot(self.embedding(s), z));
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        let lse = max + sum.ln();
        let loss = lse - logits[0];
        if let Some((grad, dz)) = grad {
            let d = self.layout.dim;
            for (c, &l) in logits.iter().enumerate() {
                let song = if c == 0 { positive } else { negatives[c - 1] };
                let g = weight * ((l - lse).exp() - if c == 0 { 1.0 } else { 0.0 });
                let e = self.embedding(song);
                for (dzc, ec) in dz.iter_mut().zip(e) {
                    *dzc += g * ec;
                }
                for (gc, zc) in grad[song.index() * d..(song.index() + 1) * d]
                    .iter_mut()
                    .zip(z)
                {
                    *gc += g * zc;
                }
            }
        }
        loss
    }

    fn empty_vec(&self) -> &[f64] {
        let at = self.layout.empty();
        &self.params[at..at + self.layout.dim]
    }

    /// Sum of losses over the chunk's predictions; with `grad`, accumulates
    /// gradients scaled by `weight`.
    fn chunk_loss(
        &self,
        chunk: &Chunk<'_>,
        pool: &[SongId],
        rng: &mut ChaCha8Rng,
        train: bool,
        weight: f64,
        grad: Option<&mut [f64]>,
    ) -> f64 {
        let d = self.layout.dim;
        let n = chunk.tokens.len();
        let v = self.layout.n_songs;
        let draw = |rng: &mut ChaCha8Rng| {
            if pool.is_empty() {
                SongId(rng.random_range(0..v) as u32)
            } else {
                pool[rng.random_range(0..pool.len())]
            }
        };
        let choices = if pool.is_empty() { v } else { pool.len() };
        let sample = |rng: &mut ChaCha8Rng, positive: SongId| -> Vec<SongId> {
            (0..self.config.negatives)
                .map(|_| loop {
                    let s = draw(rng);
                    if s != positive || choices <= 1 {
                        break s;
                    }
                })
                .collect()
        };
        let mut total = 0.0;
        let negatives_first = chunk.predict_first.then(|| sample(rng, chunk.tokens[0]));
        let negatives: Vec<Vec<SongId>> =
            (1..n).map(|i| sample(rng, chunk.tokens[i])).collect();
        let cache = self.forward(chunk.tokens, if train { Some(rng) } else { None });
        let z = cache.xs.last().unwrap();
        match grad {
            None => {
                if let Some(neg) = &negatives_first {
                    total += self.contrastive(self.empty_vec(), chunk.tokens[0], neg, weight, None);
                }
                for i in 0..n - 1 {
                    total += self.contrastive(
                        &z[i * d..(i + 1) * d],
                        chunk.tokens[i + 1],
                        &negatives[i],
                        weight,
                        None,
                    );
                }
            }
            Some(grad) => {
                if let Some(neg) = &negatives_first {
                    let mut dempty = vec![0.0; d];
                    let empty = self.empty_vec().to_vec();
                    total += self.contrastive(
                        &empty,
                        chunk.tokens[0],
                        neg,
                        weight,
                        Some((&mut *grad, &mut dempty)),
                    );
                    let at = self.layout.empty();
                    for (g, e) in grad[at..at + d].iter_mut().zip(&dempty) {
                        *g += e;
                    }
                }
                let mut dz = vec![0.0; n * d];
                for i in 0..n - 1 {
                    total += self.contrastive(
                        &z[i * d..(i + 1) * d],
                        chunk.tokens[i + 1],
                        &negatives[i],
                        weight,
                        Some((&mut *grad, &mut dz[i * d..(i + 1) * d])),
                    );
                }
                self.backward(chunk.tokens, &cache, dz, grad);
            }
        }
        total
    }

    /// Mean loss and (optionally) its gradient over `chunks`, with one RNG
    /// stream per chunk derived from `stream`. Negatives come uniformly from
    /// `pool`, or from the whole vocabulary when it is empty. Sharded over a fixed number
    /// of shards and reduced in order, so the result is independent of the
    /// execution mode.
    fn batch_loss(
        &self,
        chunks: &[Chunk<'_>],
        pool: &[SongId],
        stream: u64,
        train: bool,
        want_grad: bool,
        exec: Execution,
    ) -> (f64, Option<Vec<f64>>) {
        let n_pred: usize = chunks.iter().map(Chunk::n_predictions).sum();
        if n_pred == 0 {
            return (0.0, want_grad.then(|| vec![0.0; self.params.len()]));
        }
        let weight = 1.0 / n_pred as f64;
        let shards = par::shard_ranges(chunks.len());
        let parts = par::map(exec, &shards, |range| {
            let mut grad = want_grad.then(|| vec![0.0; self.params.len()]);
            let mut loss = 0.0;
            for ci in range.clone() {
                let mut rng = seed::rng(seed::derive(stream, &[ci as u64]));
                loss += self.chunk_loss(&chunks[ci], pool, &mut rng, train, weight, grad.as_deref_mut());
            }
            (loss, grad)
        });
        let mut loss = 0.0;
        let mut grad = want_grad.then(|| vec![0.0; self.params.len()]);
        for (l, g) in parts {
            loss += l;
            if let (Some(acc), Some(g)) = (grad.as_mut(), g) {
                for (a, b) in acc.iter_mut().zip(&g) {
                    *a += b;
                }
            }
        }
        (loss * weight, grad)
    }

    /// Mean sampled-softmax loss over `playlists` with negatives drawn from
    /// the stream `stream` and no dropout.
    pub fn loss(&self, playlists: &[Playlist], stream: u64) -> f64 {
        let ch = chunks(playlists, self.config.window);
        self.batch_loss(&ch, &[], stream, false, false, self.config.execution).0
    }

    /// Analytic gradient of [`NeuralModel::loss`].
    pub fn loss_gradient(&self, playlists: &[Playlist], stream: u64) -> (f64, Vec<f64>) {
        let ch = chunks(playlists, self.config.window);
        let (l, g) = self.batch_loss(&ch, &[], stream, false, true, self.config.execution);
        (l, g.expect("gradient requested"))
    }

    /// Output embedding for a seed (last `window` songs).
    pub fn seed_embedding(&self, seed: &[SongId]) -> Vec<f64> {
        if seed.is_empty() {
            return self.empty_vec().to_vec();
        }
        let start = seed.len().saturating_sub(self.config.window);
        let tokens = &seed[start..];
        let cache = self.forward(tokens, None);
        let d = self.layout.dim;
        let n = tokens.len();
        cache.xs.last().unwrap()[(n - 1) * d..n * d].to_vec()
    }

    pub fn save(&self, path: impl AsRef<Path>, vocabulary: &[String]) -> Result<()> {
        let path = path.as_ref();
        let ckpt = Checkpoint {
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            n_songs: self.layout.n_songs,
            vocabulary: vocabulary.to_vec(),
            params: self.params.clone(),
        };
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(std::io::BufWriter::new(file), &ckpt)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, Vec<String>)> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Schema {
                path: path.to_owned(),
                field: "version".into(),
                message: format!("unsupported checkpoint version {}", ckpt.version),
            });
        }
        let mut model = NeuralModel::new(ckpt.n_songs, &ckpt.config)?;
        if ckpt.params.len() != model.params.len() {
            return Err(Error::Schema {
                path: path.to_owned(),
                field: "params".into(),
                message: format!(
                    "expected {} parameters, found {}",
                    model.params.len(),
                    ckpt.params.len()
                ),
            });
        }
        model.params = ckpt.params;
        Ok((model, ckpt.vocabulary))
    }
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    config: NeuralConfig,
    n_songs: usize,
    vocabulary: Vec<String>,
    params: Vec<f64>,
}

impl Scorer for NeuralModel {
    fn n_songs(&self) -> usize {
        self.layout.n_songs
    }

    fn score_all(&self, seed: &[SongId], out: &mut Vec<f64>) {
        let z = self.seed_embedding(seed);
        let d = self.layout.dim;
        out.clear();
        out.extend(
            self.params[..self.layout.pos()]
                .chunks_exact(d)
                .map(|e| dot(e, &z)),
        );
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64, weight_decay: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * g;
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * g * g;
            let update = (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
            params[i] -= lr * (update + weight_decay * params[i]);
        }
    }
}

/// Trains on `train`, reporting validation loss on `val` after each epoch.
/// Negatives are drawn from the songs that occur in `train`.
pub fn train_neural(
    train: &[Playlist],
    val: &[Playlist],
    n_songs: usize,
    config: &NeuralConfig,
) -> Result<(NeuralModel, TrainingLog)> {
    let mut model = NeuralModel::new(n_songs, config)?;
    if let Some(bad) = train
        .iter()
        .chain(val)
        .flat_map(|p| &p.tracks)
        .find(|s| s.index() >= n_songs)
    {
        return Err(Error::OutOfVocabulary(bad.0));
    }
    let exec = config.execution;
    // songs absent from training (e.g. the target in a clean model) never
    // serve as negatives, so they receive no gradient at all
    let mut pool: Vec<SongId> = train.iter().flat_map(|p| p.tracks.iter().copied()).collect();
    pool.sort_unstable();
    pool.dedup();
    let train_chunks = chunks(train, config.window);
    let val_chunks = chunks(val, config.window);
    let val_stream = seed::derive(config.seed, &[seed::label("val")]);
    let val_loss = |m: &NeuralModel| {
        (!val_chunks.is_empty()).then(|| m.batch_loss(&val_chunks, &pool, val_stream, false, false, exec).0)
    };

    let mut log = TrainingLog {
        initial_val_loss: val_loss(&model),
        epochs: Vec::new(),
        best_epoch: None,
    };
    let mut adam = Adam::new(model.params.len());
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..train_chunks.len()).collect();
    for epoch in 1..=config.epochs {
        let started = Instant::now();
        order.shuffle(&mut seed::rng(seed::derive(config.seed, &[seed::label("epoch"), epoch as u64])));
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for (step, batch) in order.chunks(config.batch_size).enumerate() {
            let picked: Vec<Chunk<'_>> = batch.iter().map(|&i| train_chunks[i]).collect();
            let stream = seed::derive(config.seed, &[epoch as u64, step as u64]);
            let (loss, grad) = model.batch_loss(&picked, &pool, stream, true, true, exec);
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, step, loss });
            }
            adam.step(
                &mut model.params,
                &grad.expect("gradient requested"),
                config.learning_rate,
                config.weight_decay,
            );
            epoch_loss += loss;
            batches += 1;
        }
        let vl = val_loss(&model);
        if let Some(v) = vl {
            if !v.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    step: batches,
                    loss: v,
                });
            }
        }
        log.epochs.push(EpochLog {
            epoch,
            train_loss: epoch_loss / batches.max(1) as f64,
            val_loss: vl,
            wall_time_s: started.elapsed().as_secs_f64(),
        });
        log::debug!("epoch {epoch}: train {:.4} val {:?}", epoch_loss / batches.max(1) as f64, vl);
        if let (Some(patience), Some(v)) = (config.early_stopping_patience, vl) {
            if best.as_ref().is_none_or(|(b, _)| v < *b) {
                best = Some((v, model.params.clone()));
                log.best_epoch = Some(epoch);
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= patience {
                    break;
                }
            }
        }
    }
    if let Some((_, params)) = best {
        model.params = params;
    }
    Ok((model, log))
}

/// Largest relative error between analytic and central finite-difference
/// gradients of the loss on `batch`, over `n_params` randomly chosen
/// parameters within `scope`. Dropout is disabled and negatives are fixed.
pub fn grad_check(
    model: &NeuralModel,
    batch: &[Playlist],
    epsilon: f64,
    n_params: usize,
    scope: GradCheckScope,
    rng_seed: u64,
) -> Result<f64> {
    let stream = seed::derive(rng_seed, &[seed::label("gradcheck")]);
    let mut probe = model.clone();
    probe.config.execution = Execution::Serial;
    let ch = chunks(batch, probe.config.window);
    let (base, grad) = probe.batch_loss(&ch, &[], stream, false, true, Execution::Serial);
    let grad = grad.expect("gradient requested");
    if !base.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("loss or gradient at the check point".into()));
    }

    let lay = probe.layout;
    let d = lay.dim;
    let mut candidates: Vec<usize> = Vec::new();
    if scope == GradCheckScope::All {
        let mut songs: Vec<usize> = batch.iter().flat_map(|p| &p.tracks).map(|s| s.index()).collect();
        songs.sort_unstable();
        songs.dedup();
        for s in songs {
            candidates.extend(s * d..(s + 1) * d);
        }
    }
    let max_len = ch.iter().map(|c| c.tokens.len()).max().unwrap_or(0);
    candidates.extend(lay.pos()..lay.pos() + max_len * d);
    if ch.iter().any(|c| c.predict_first) {
        candidates.extend(lay.empty()..lay.empty() + d);
    }
    candidates.extend(lay.mat(0, 0)..lay.len());
    if candidates.is_empty() {
        return Ok(0.0);
    }
    let mut rng = seed::rng(stream ^ 0x5eed);
    let mut worst: f64 = 0.0;
    for _ in 0..n_params {
        let idx = candidates[rng.random_range(0..candidates.len())];
        let orig = probe.params[idx];
        probe.params[idx] = orig + epsilon;
        let plus = probe.batch_loss(&ch, &[], stream, false, false, Execution::Serial).0;
        probe.params[idx] = orig - epsilon;
        let minus = probe.batch_loss(&ch, &[], stream, false, false, Execution::Serial).0;
        probe.params[idx] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!("loss while perturbing parameter {idx}")));
        }
        let numeric = (plus - minus) / (2.0 * epsilon);
        let analytic = grad[idx];
        let denom = analytic.abs() + numeric.abs();
        let rel = if denom < 1e-10 {
            0.0
        } else {
            (analytic - numeric).abs() / denom
        };
        worst = worst.max(rel);
    }
    Ok(worst)
}
