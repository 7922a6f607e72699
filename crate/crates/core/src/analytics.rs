//! Flow statistics: magnitude maps, movement histograms, total variation, and
//! per-motion-bin error differences.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::frame_io::{FlowField, Image};

/// Integer edges 0, 1, …, 32; magnitudes at or beyond 32 px land in the overflow bin.
pub fn default_bin_edges() -> Vec<f64> {
    (0..=32).map(f64::from).collect()
}

/// Per-pixel Euclidean norm of the flow vectors, row-major.
pub fn flow_magnitude(flow: &FlowField) -> Vec<f64> {
    flow.u().iter().zip(flow.v()).map(|(&u, &v)| (u as f64).hypot(v as f64)).collect()
}

/// `1/(2HW) · (Σ |u[i][j-1] - u[i][j]| + Σ |v[i+1][j] - v[i][j]|)` over in-grid neighbour pairs.
pub fn total_variation(flow: &FlowField) -> Result<f64> {
    let (h, w) = (flow.height(), flow.width());
    ensure!(h >= 2 && w >= 2, Dimension, "total variation needs at least 2×2, got {}×{}", h, w);
    let (u, v) = (flow.u(), flow.v());
    let mut horiz = 0.0f64;
    for i in 0..h {
        for j in 1..w {
            horiz += (u[i * w + j - 1] as f64 - u[i * w + j] as f64).abs();
        }
    }
    let mut vert = 0.0f64;
    for i in 0..h - 1 {
        for j in 0..w {
            vert += (v[(i + 1) * w + j] as f64 - v[i * w + j] as f64).abs();
        }
    }
    Ok((horiz + vert) / (2.0 * (h * w) as f64))
}

fn check_edges(edges: &[f64]) -> Result<()> {
    ensure!(!edges.is_empty(), Argument, "at least one bin edge is required");
    ensure!(edges.iter().all(|e| e.is_finite()), Argument, "bin edges must be finite");
    ensure!(edges.windows(2).all(|p| p[0] < p[1]), Argument, "bin edges must be strictly ascending");
    Ok(())
}

/// Bin index of `m`: `Ok(k)` for `[e_k, e_{k+1})`, `Err(true)` at or past the last
/// edge, `Err(false)` below the first.
fn locate(edges: &[f64], m: f64) -> std::result::Result<usize, bool> {
    if m < edges[0] {
        return Err(false);
    }
    let k = edges.partition_point(|&e| e <= m);
    if k >= edges.len() {
        Err(true)
    } else {
        Ok(k - 1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionHistogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Magnitudes at or beyond the last edge.
    pub overflow: u64,
    /// Magnitudes below the first edge (always 0 when the first edge is 0).
    pub underflow: u64,
}

impl MotionHistogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.overflow + self.underflow
    }

    /// Adds the counts of another histogram over the same edges.
    pub fn merge(&mut self, other: &MotionHistogram) -> Result<()> {
        ensure!(self.edges == other.edges, Argument, "histograms use different edges");
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.overflow += other.overflow;
        self.underflow += other.underflow;
        Ok(())
    }
}

pub fn movement_histogram(magnitudes: &[f64], edges: &[f64]) -> Result<MotionHistogram> {
    check_edges(edges)?;
    let mut h = MotionHistogram {
        edges: edges.to_vec(),
        counts: vec![0; edges.len() - 1],
        overflow: 0,
        underflow: 0,
    };
    for &m in magnitudes {
        match locate(edges, m) {
            Ok(k) => h.counts[k] += 1,
            Err(true) => h.overflow += 1,
            Err(false) => h.underflow += 1,
        }
    }
    Ok(h)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinnedCurve {
    pub edges: Vec<f64>,
    /// Per-bin difference of means; `None` marks an empty bin.
    pub values: Vec<Option<f64>>,
    pub counts: Vec<u64>,
    pub empty: Vec<bool>,
    pub overflow_value: Option<f64>,
    pub overflow_count: u64,
}

/// Per motion bin, `mean(err_a) - mean(err_b)` over the pixels whose magnitude falls in it.
pub fn binned_error_difference(err_a: &[f64], err_b: &[f64], magnitudes: &[f64], edges: &[f64]) -> Result<BinnedCurve> {
    ensure!(
        err_a.len() == err_b.len() && err_a.len() == magnitudes.len(),
        Dimension,
        "error maps ({}, {}) and magnitudes ({}) differ in size",
        err_a.len(),
        err_b.len(),
        magnitudes.len()
    );
    check_edges(edges)?;
    let bins = edges.len() - 1;
    // slot `bins` collects the overflow
    let mut sum_a = vec![0.0f64; bins + 1];
    let mut sum_b = vec![0.0f64; bins + 1];
    let mut counts = vec![0u64; bins + 1];
    for ((&a, &b), &m) in err_a.iter().zip(err_b).zip(magnitudes) {
        let slot = match locate(edges, m) {
            Ok(k) => k,
            Err(true) => bins,
            Err(false) => continue,
        };
        sum_a[slot] += a;
        sum_b[slot] += b;
        counts[slot] += 1;
    }
    let value = |k: usize| (counts[k] > 0).then(|| sum_a[k] / counts[k] as f64 - sum_b[k] / counts[k] as f64);
    Ok(BinnedCurve {
        edges: edges.to_vec(),
        values: (0..bins).map(value).collect(),
        empty: counts[..bins].iter().map(|&c| c == 0).collect(),
        overflow_value: value(bins),
        overflow_count: counts[bins],
        counts: counts[..bins].to_vec(),
    })
}

/// Per-pixel squared error on luma (BT.601) for RGB inputs, on the single channel otherwise.
pub fn squared_error_map(pred: &Image, gt: &Image) -> Result<Vec<f64>> {
    ensure!(pred.same_dims(gt), Dimension, "prediction {:?} vs ground truth {:?}", pred.dims(), gt.dims());
    let (a, b) = (pred.to_luma(), gt.to_luma());
    let c = a.channels();
    Ok(a
        .data()
        .chunks(c)
        .zip(b.data().chunks(c))
        .map(|(p, q)| p.iter().zip(q).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum::<f64>() / c as f64)
        .collect())
}
