//! Patch alignment: partition the grid into the attention windows, average the
//! flow inside each patch, round it, and move the whole source patch.

use serde::Serialize;

use super::{apply_plan, check_shapes, round_half_away};
use crate::error::{ensure, Result};
use crate::frame_io::{FlowField, Image};
use crate::numerics::RowMap;

/// Mean displacement of every `patch × patch` cell, row-major over a
/// `ceil(H/patch) × ceil(W/patch)` grid anchored at (0, 0).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PatchFlowGrid {
    pub patch: usize,
    pub rows: usize,
    pub cols: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl PatchFlowGrid {
    pub fn at(&self, row: usize, col: usize) -> (f64, f64) {
        let i = row * self.cols + col;
        (self.u[i], self.v[i])
    }

    /// The integer offset applied to a patch.
    pub fn offset(&self, row: usize, col: usize) -> (isize, isize) {
        let (u, v) = self.at(row, col);
        (round_half_away(u) as isize, round_half_away(v) as isize)
    }
}

pub fn patch_mean_flow(flow: &FlowField, patch: usize) -> Result<PatchFlowGrid> {
    ensure!(patch >= 1, Argument, "patch size must be positive");
    let (h, w) = (flow.height(), flow.width());
    let rows = h.div_ceil(patch);
    let cols = w.div_ceil(patch);
    let mut u = vec![0.0; rows * cols];
    let mut v = vec![0.0; rows * cols];
    for pr in 0..rows {
        for pc in 0..cols {
            let (y0, x0) = (pr * patch, pc * patch);
            let (y1, x1) = ((y0 + patch).min(h), (x0 + patch).min(w));
            let (mut su, mut sv) = (0.0f64, 0.0f64);
            for y in y0..y1 {
                for x in x0..x1 {
                    let (a, b) = flow.at(y, x);
                    su += a as f64;
                    sv += b as f64;
                }
            }
            let n = ((y1 - y0) * (x1 - x0)) as f64;
            u[pr * cols + pc] = su / n;
            v[pr * cols + pc] = sv / n;
        }
    }
    Ok(PatchFlowGrid { patch, rows, cols, u, v })
}

/// Gather plan moving each source patch, its top-left clamped so the block stays inside the grid.
pub fn patch_plan(flow: &FlowField, patch: usize) -> Result<RowMap> {
    let grid = patch_mean_flow(flow, patch)?;
    let (h, w) = (flow.height(), flow.width());
    let mut index = vec![None; h * w];
    for pr in 0..grid.rows {
        for pc in 0..grid.cols {
            let (r, c) = (pr * patch, pc * patch);
            let (ph, pw) = ((h - r).min(patch), (w - c).min(patch));
            let (du, dv) = grid.offset(pr, pc);
            let sr = (r as isize + dv).clamp(0, (h - ph) as isize) as usize;
            let sc = (c as isize + du).clamp(0, (w - pw) as isize) as usize;
            for y in 0..ph {
                for x in 0..pw {
                    index[(r + y) * w + c + x] = Some((sr + y) * w + sc + x);
                }
            }
        }
    }
    Ok(RowMap::gather(h * w, index))
}

pub fn patch_align(img: &Image, flow: &FlowField, patch: usize) -> Result<Image> {
    check_shapes(img, flow)?;
    apply_plan(img, &patch_plan(flow, patch)?)
}
