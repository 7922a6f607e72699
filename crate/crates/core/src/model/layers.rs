//! Graph builders for the network's layers. Each takes pixel rows
//! `[frames·H·W, C]` on a tape and returns the same layout.

use std::collections::HashMap;
use std::sync::Arc;

use super::window::{bias_gather_map, WindowGeometry};
use super::ModelWeights;
use crate::error::{ensure, Error, Result};
use crate::numerics::{Real, RowMap, Tape, Tensor, Var};

const LN_EPS: f64 = 1e-5;

/// Tape handles for a model's parameters, looked up by canonical name.
pub struct ParamVars {
    order: Vec<Var>,
    by_name: HashMap<String, Var>,
}

impl ParamVars {
    /// Registers every tensor of `weights` as a tape parameter.
    pub fn register<T: Real>(tape: &mut Tape<T>, weights: &ModelWeights<T>) -> Self {
        Self::register_with(tape, weights, |_| true)
    }

    /// Registers tensors as parameters where `learnable(name)` holds and as constants elsewhere.
    pub fn register_with<T: Real>(
        tape: &mut Tape<T>,
        weights: &ModelWeights<T>,
        learnable: impl Fn(&str) -> bool,
    ) -> Self {
        let mut order = Vec::with_capacity(weights.len());
        let mut by_name = HashMap::with_capacity(weights.len());
        for (name, t) in weights.entries() {
            let v = if learnable(name) { tape.param(t.clone()) } else { tape.constant(t.clone()) };
            order.push(v);
            by_name.insert(name.clone(), v);
        }
        Self { order, by_name }
    }

    /// Slices a flat `[P]` parameter vector already on the tape into the named
    /// tensors of `cfg`, so one variable drives the whole model.
    pub fn from_flat<T: Real>(tape: &mut Tape<T>, cfg: &super::ModelConfig, flat: Var) -> Result<Self> {
        let specs = super::param_specs(cfg);
        let total: usize = specs.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
        ensure!(tape.value(flat).len() == total, Config, "config expects {} parameters", total);
        let column = tape.reshape(flat, &[total, 1])?;
        let mut order = Vec::with_capacity(specs.len());
        let mut by_name = HashMap::with_capacity(specs.len());
        let mut at = 0;
        for (name, shape) in specs {
            let n: usize = shape.iter().product();
            let slice = tape.row_map(column, Arc::new(RowMap::gather(total, (at..at + n).map(Some))))?;
            let v = tape.reshape(slice, &shape)?;
            order.push(v);
            by_name.insert(name, v);
            at += n;
        }
        Ok(Self { order, by_name })
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.by_name.get(name).copied().ok_or_else(|| Error::Config(format!("missing parameter {name}")))
    }

    /// Handles in canonical order.
    pub fn vars(&self) -> &[Var] {
        &self.order
    }
}

/// im2col gather for a 3×3 zero-padded convolution: output row `p·9 + tap`
/// holds input pixel `p + (dy, dx)`, `tap = (dy+1)·3 + (dx+1)`.
pub fn im2col_map(frames: usize, height: usize, width: usize) -> RowMap {
    let mut index = Vec::with_capacity(frames * height * width * 9);
    for f in 0..frames {
        for y in 0..height {
            for x in 0..width {
                for dy in -1isize..=1 {
                    for dx in -1isize..=1 {
                        let (sy, sx) = (y as isize + dy, x as isize + dx);
                        let inside = sy >= 0 && sx >= 0 && (sy as usize) < height && (sx as usize) < width;
                        index.push(inside.then(|| (f * height + sy as usize) * width + sx as usize));
                    }
                }
            }
        }
    }
    RowMap::gather(frames * height * width, index)
}

/// 3×3 convolution with zero padding applied to each frame independently.
pub fn conv3x3<T: Real>(
    tape: &mut Tape<T>,
    x: Var,
    frames: usize,
    height: usize,
    width: usize,
    weight: Var,
    bias: Var,
) -> Result<Var> {
    let cin = tape.value(x).last_dim();
    let cols = tape.row_map(x, Arc::new(im2col_map(frames, height, width)))?;
    let cols = tape.reshape(cols, &[frames * height * width, 9 * cin])?;
    let y = tape.matmul(cols, weight)?;
    tape.add_tiled(y, bias)
}

/// Element-level gather: channel `c·s² + dy·s + dx` of input pixel `(i, j)`
/// becomes channel `c` of output pixel `(s·i + dy, s·j + dx)`.
pub fn pixel_shuffle_map(height: usize, width: usize, channels: usize, s: usize) -> RowMap {
    let cin = channels * s * s;
    let (oh, ow) = (height * s, width * s);
    let mut index = Vec::with_capacity(oh * ow * channels);
    for oy in 0..oh {
        for ox in 0..ow {
            let (i, dy, j, dx) = (oy / s, oy % s, ox / s, ox % s);
            for c in 0..channels {
                index.push(Some((i * width + j) * cin + c * s * s + dy * s + dx));
            }
        }
    }
    RowMap::gather(height * width * cin, index)
}

/// Pixel shuffle of an `H×W×(C·s²)` tensor into `sH×sW×C`.
pub fn pixel_shuffle<T: Real>(x: &Tensor<T>, s: usize) -> Result<Tensor<T>> {
    ensure!(x.shape().len() == 3, Dimension, "pixel shuffle expects [H, W, C·s²]");
    ensure!(s >= 1, Argument, "scale must be positive");
    let (h, w, cin) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    ensure!(cin % (s * s) == 0, Dimension, "{} channels are not divisible by {}", cin, s * s);
    let c = cin / (s * s);
    let data = pixel_shuffle_map(h, w, c, s).apply(1, x.data());
    Tensor::new(&[h * s, w * s, c], data)
}

/// Tape handles of one attention layer.
#[derive(Clone, Copy, Debug)]
pub struct AttentionVars {
    pub wq: Var,
    pub wk: Var,
    pub wv: Var,
    pub proj_w: Var,
    pub proj_b: Var,
    /// `[heads, table]` relative position bias.
    pub rel_bias: Var,
}

/// Tape handles of one multi-frame self-attention block.
#[derive(Clone, Copy, Debug)]
pub struct BlockVars {
    pub norm1_g: Var,
    pub norm1_b: Var,
    pub attn: AttentionVars,
    pub norm2_g: Var,
    pub norm2_b: Var,
    pub fc1_w: Var,
    pub fc1_b: Var,
    pub fc2_w: Var,
    pub fc2_b: Var,
}

impl BlockVars {
    pub fn lookup(params: &ParamVars, block: usize) -> Result<Self> {
        let p = |s: &str| params.get(&format!("block{block}.{s}"));
        Ok(Self {
            norm1_g: p("norm1.gamma")?,
            norm1_b: p("norm1.beta")?,
            attn: AttentionVars {
                wq: p("attn.wq")?,
                wk: p("attn.wk")?,
                wv: p("attn.wv")?,
                proj_w: p("attn.proj.weight")?,
                proj_b: p("attn.proj.bias")?,
                rel_bias: p("attn.rel_bias")?,
            },
            norm2_g: p("norm2.gamma")?,
            norm2_b: p("norm2.beta")?,
            fc1_w: p("mlp.fc1.weight")?,
            fc1_b: p("mlp.fc1.bias")?,
            fc2_w: p("mlp.fc2.weight")?,
            fc2_b: p("mlp.fc2.bias")?,
        })
    }
}

/// Row map `[windows·T·heads, D] → [windows·heads·T, D]` (and its inverse).
fn head_split_map(windows: usize, tokens: usize, heads: usize, inverse: bool) -> RowMap {
    let n = windows * tokens * heads;
    let index = (0..n).map(|r| {
        if !inverse {
            let (w, rest) = (r / (heads * tokens), r % (heads * tokens));
            let (h, t) = (rest / tokens, rest % tokens);
            Some((w * tokens + t) * heads + h)
        } else {
            let (w, rest) = (r / (tokens * heads), r % (tokens * heads));
            let (t, h) = (rest / heads, rest % heads);
            Some((w * heads + h) * tokens + t)
        }
    });
    RowMap::gather(n, index)
}

/// Output of [`attention_graph`].
pub struct AttentionNodes {
    /// `[windows·T, C]` attended tokens after the output projection.
    pub output: Var,
    /// `[windows·heads, T, T]` attention maps.
    pub attention: Var,
}

/// Multi-head self-attention inside each window of `tokens` rows:
/// `softmax(QKᵀ/√D + B)·V` per head, heads concatenated, then projected.
pub fn attention_graph<T: Real>(
    tape: &mut Tape<T>,
    x: Var,
    windows: usize,
    tokens: usize,
    heads: usize,
    bias_map: &Arc<RowMap>,
    p: &AttentionVars,
) -> Result<AttentionNodes> {
    let c = tape.value(x).last_dim();
    ensure!(heads >= 1 && c % heads == 0, Config, "{} channels are not divisible by {} heads", c, heads);
    ensure!(tape.value(x).len() == windows * tokens * c, Dimension, "token count does not match the window batch");
    let d = c / heads;
    let split = Arc::new(head_split_map(windows, tokens, heads, false));
    let merge = Arc::new(head_split_map(windows, tokens, heads, true));
    let q = tape.matmul(x, p.wq)?;
    let q = tape.scale(q, T::lit(1.0 / (d as f64).sqrt()));
    let k = tape.matmul(x, p.wk)?;
    let v = tape.matmul(x, p.wv)?;
    let per_head = |t: Var, tape: &mut Tape<T>| -> Result<Var> {
        let r = tape.reshape(t, &[windows * tokens * heads, d])?;
        let r = tape.row_map(r, split.clone())?;
        tape.reshape(r, &[windows * heads, tokens, d])
    };
    let (qh, kh, vh) = (per_head(q, tape)?, per_head(k, tape)?, per_head(v, tape)?);
    let logits = tape.bmm(qh, kh, true)?;
    let table = tape.value(p.rel_bias).len();
    let bias = tape.reshape(p.rel_bias, &[table, 1])?;
    let bias = tape.row_map(bias, bias_map.clone())?;
    let logits = tape.add_tiled(logits, bias)?;
    let attention = tape.softmax_rows(logits)?;
    let o = tape.bmm(attention, vh, false)?;
    let o = tape.reshape(o, &[windows * heads * tokens, d])?;
    let o = tape.row_map(o, merge)?;
    let o = tape.reshape(o, &[windows * tokens, c])?;
    let o = tape.matmul(o, p.proj_w)?;
    let output = tape.add_tiled(o, p.proj_b)?;
    Ok(AttentionNodes { output, attention })
}

/// `x + Attn(LN₁(x))`, then `+ MLP(LN₂(·))`, attention over (shifted) multi-frame windows.
pub fn mfsab_graph<T: Real>(
    tape: &mut Tape<T>,
    x: Var,
    geometry: WindowGeometry,
    heads: usize,
    p: &BlockVars,
) -> Result<Var> {
    let h = tape.layer_norm(x, p.norm1_g, p.norm1_b, LN_EPS)?;
    let wins = tape.row_map(h, Arc::new(geometry.partition_map()))?;
    let bias_map = bias_gather_map(geometry.frames, geometry.window, heads);
    let att = attention_graph(tape, wins, geometry.windows(), geometry.tokens_per_window(), heads, &bias_map, &p.attn)?;
    let merged = tape.row_map(att.output, Arc::new(geometry.merge_map()))?;
    let x = tape.add(x, merged)?;
    let h = tape.layer_norm(x, p.norm2_g, p.norm2_b, LN_EPS)?;
    let h = tape.matmul(h, p.fc1_w)?;
    let h = tape.add_tiled(h, p.fc1_b)?;
    let h = tape.gelu(h);
    let h = tape.matmul(h, p.fc2_w)?;
    let h = tape.add_tiled(h, p.fc2_b)?;
    tape.add(x, h)
}

/// Weights of one attention layer as plain tensors.
#[derive(Clone, Debug)]
pub struct AttentionWeights<T: Real = f32> {
    pub wq: Tensor<T>,
    pub wk: Tensor<T>,
    pub wv: Tensor<T>,
    pub proj_w: Tensor<T>,
    pub proj_b: Tensor<T>,
    pub rel_bias: Tensor<T>,
}

impl<T: Real> AttentionWeights<T> {
    fn register(&self, tape: &mut Tape<T>) -> AttentionVars {
        AttentionVars {
            wq: tape.constant(self.wq.clone()),
            wk: tape.constant(self.wk.clone()),
            wv: tape.constant(self.wv.clone()),
            proj_w: tape.constant(self.proj_w.clone()),
            proj_b: tape.constant(self.proj_b.clone()),
            rel_bias: tape.constant(self.rel_bias.clone()),
        }
    }
}

/// Attention over a partitioned window batch. Returns the attended batch and the
/// `[windows, heads, T, T]` attention maps.
pub fn multi_frame_attention<T: Real>(
    batch: &super::WindowBatch<T>,
    weights: &AttentionWeights<T>,
    heads: usize,
) -> Result<(super::WindowBatch<T>, Tensor<T>)> {
    let g = batch.geometry;
    let c = batch.tokens.last_dim();
    let mut tape = Tape::new();
    let x = tape.constant(batch.tokens.clone().reshape(&[g.windows() * g.tokens_per_window(), c])?);
    let vars = weights.register(&mut tape);
    let map = bias_gather_map(g.frames, g.window, heads);
    let nodes = attention_graph(&mut tape, x, g.windows(), g.tokens_per_window(), heads, &map, &vars)?;
    let t = g.tokens_per_window();
    let tokens = tape.value(nodes.output).clone().reshape(&[g.windows(), t, c])?;
    let maps = tape.value(nodes.attention).clone().reshape(&[g.windows(), heads, t, t])?;
    Ok((super::WindowBatch { tokens, geometry: g }, maps))
}

/// One block applied to `[frames, H, W, C]` features.
pub fn mfsab_forward<T: Real>(
    features: &Tensor<T>,
    weights: &ModelWeights<T>,
    block: usize,
    window: usize,
    heads: usize,
    shift: usize,
) -> Result<Tensor<T>> {
    ensure!(features.shape().len() == 4, Dimension, "expected [frames, H, W, C] features");
    let s = features.shape().to_vec();
    let geometry = WindowGeometry::new(s[0], s[1], s[2], window, shift)?;
    let mut tape = Tape::new();
    let params = ParamVars::register_with(&mut tape, weights, |_| false);
    let vars = BlockVars::lookup(&params, block)?;
    let x = tape.constant(features.clone().reshape(&[s[0] * s[1] * s[2], s[3]])?);
    let y = mfsab_graph(&mut tape, x, geometry, heads, &vars)?;
    tape.value(y).clone().reshape(&s)
}
