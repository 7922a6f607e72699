//! Multi-frame window partitioning and relative position indexing.

use std::sync::Arc;

use crate::error::{ensure, Result};
use crate::numerics::{Real, RowMap, Tensor};

/// Reflect (no edge repeat) index into `0..n`.
pub fn reflect(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let j = i % period;
    if j < n {
        j
    } else {
        period - j
    }
}

/// Geometry of a window partition over `frames` feature maps of `height × width`.
///
/// Windows are ordered row-major over the padded grid; inside a window token
/// `f·M² + r·M + c` is pixel `(r, c)` of frame `f`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindowGeometry {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub window: usize,
    pub shift: usize,
}

impl WindowGeometry {
    pub fn new(frames: usize, height: usize, width: usize, window: usize, shift: usize) -> Result<Self> {
        ensure!(window >= 1, Argument, "window size must be positive");
        ensure!(frames >= 1 && height >= 1 && width >= 1, Dimension, "empty feature map");
        Ok(Self { frames, height, width, window, shift })
    }

    pub fn padded(&self) -> (usize, usize) {
        (self.height.div_ceil(self.window) * self.window, self.width.div_ceil(self.window) * self.window)
    }

    pub fn windows(&self) -> usize {
        let (hp, wp) = self.padded();
        (hp / self.window) * (wp / self.window)
    }

    pub fn tokens_per_window(&self) -> usize {
        self.frames * self.window * self.window
    }

    /// Row map from `[frames·H·W]` pixel rows to `[windows·tokens]` rows.
    pub fn partition_map(&self) -> RowMap {
        let (hp, wp) = self.padded();
        let m = self.window;
        let (wx_count, t) = (wp / m, self.tokens_per_window());
        let mut index = Vec::with_capacity(self.windows() * t);
        for wi in 0..self.windows() {
            let (wy, wx) = (wi / wx_count, wi % wx_count);
            for tok in 0..t {
                let (f, p) = (tok / (m * m), tok % (m * m));
                let py = (wy * m + p / m + self.shift) % hp;
                let px = (wx * m + p % m + self.shift) % wp;
                let (y, x) = (reflect(py, self.height), reflect(px, self.width));
                index.push(Some((f * self.height + y) * self.width + x));
            }
        }
        RowMap::gather(self.frames * self.height * self.width, index)
    }

    /// Inverse of [`partition_map`](Self::partition_map) on the unpadded pixels.
    pub fn merge_map(&self) -> RowMap {
        let (hp, wp) = self.padded();
        let m = self.window;
        let wx_count = wp / m;
        let t = self.tokens_per_window();
        let mut index = Vec::with_capacity(self.frames * self.height * self.width);
        for f in 0..self.frames {
            for y in 0..self.height {
                for x in 0..self.width {
                    let ry = (y + hp - self.shift % hp) % hp;
                    let rx = (x + wp - self.shift % wp) % wp;
                    let wi = (ry / m) * wx_count + rx / m;
                    let tok = f * m * m + (ry % m) * m + rx % m;
                    index.push(Some(wi * t + tok));
                }
            }
        }
        RowMap::gather(self.windows() * t, index)
    }
}

/// Windowed tokens `[windows, frames·M², C]` plus the geometry needed to undo the partition.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowBatch<T: Real = f32> {
    pub tokens: Tensor<T>,
    pub geometry: WindowGeometry,
}

/// Partitions `[frames, H, W, C]` features into windows after a cyclic shift by `-shift`.
pub fn window_partition<T: Real>(features: &Tensor<T>, window: usize, shift: usize) -> Result<WindowBatch<T>> {
    ensure!(features.shape().len() == 4, Dimension, "expected [frames, H, W, C] features");
    let s = features.shape();
    let geometry = WindowGeometry::new(s[0], s[1], s[2], window, shift)?;
    let c = s[3];
    let rows = geometry.partition_map().apply(c, features.data());
    let tokens = Tensor::new(&[geometry.windows(), geometry.tokens_per_window(), c], rows)?;
    Ok(WindowBatch { tokens, geometry })
}

pub fn window_merge<T: Real>(batch: &WindowBatch<T>) -> Result<Tensor<T>> {
    let g = batch.geometry;
    let c = batch.tokens.last_dim();
    let data = g.merge_map().apply(c, batch.tokens.data());
    Tensor::new(&[g.frames, g.height, g.width, c], data)
}

/// Number of rows of the relative position bias table: `(2F-1)(2M-1)²`.
pub fn bias_table_len(frames: usize, window: usize) -> usize {
    (2 * frames - 1) * (2 * window - 1) * (2 * window - 1)
}

/// Table row for every ordered token pair `(i, j)` of a window, indexed by
/// `(Δframe, Δrow, Δcol)`, row-major `[tokens × tokens]`.
pub fn relative_position_index(frames: usize, window: usize) -> Vec<usize> {
    let m = window;
    let t = frames * m * m;
    let span = 2 * m - 1;
    let coord = |tok: usize| (tok / (m * m), (tok % (m * m)) / m, tok % m);
    let mut out = Vec::with_capacity(t * t);
    for i in 0..t {
        let (fi, ri, ci) = coord(i);
        for j in 0..t {
            let (fj, rj, cj) = coord(j);
            let df = fi + frames - 1 - fj;
            let dr = ri + m - 1 - rj;
            let dc = ci + m - 1 - cj;
            out.push((df * span + dr) * span + dc);
        }
    }
    out
}

/// Gather map expanding a `[heads, table]` bias table into `[heads, tokens, tokens]`.
pub fn bias_gather_map(frames: usize, window: usize, heads: usize) -> Arc<RowMap> {
    let table = bias_table_len(frames, window);
    let idx = relative_position_index(frames, window);
    Arc::new(RowMap::gather(
        heads * table,
        (0..heads).flat_map(|h| idx.iter().map(move |&i| Some(h * table + i))),
    ))
}
