use super::Real;
use crate::error::{ensure, Result};

const NONE: u32 = u32::MAX;

/// A fixed linear map between row-major matrices that acts on whole rows:
/// output row `r` is a weighted sum of input rows. Pure gathers (zero or one
/// source row with weight 1) cover windowing, padding, im2col, pixel shuffle and
/// nearest/patch warps; weighted rows cover bilinear warps.
#[derive(Clone, Debug, PartialEq)]
pub struct RowMap {
    src_rows: usize,
    repr: Repr,
}

#[derive(Clone, Debug, PartialEq)]
enum Repr {
    Gather(Vec<u32>),
    Weighted { offsets: Vec<u32>, src: Vec<u32>, weights: Vec<f64> },
}

impl RowMap {
    /// `index[r]` is the source row of output row `r`, `None` yields a zero row.
    pub fn gather(src_rows: usize, index: impl IntoIterator<Item = Option<usize>>) -> Self {
        let idx = index
            .into_iter()
            .map(|i| match i {
                Some(i) => {
                    debug_assert!(i < src_rows);
                    i as u32
                }
                None => NONE,
            })
            .collect();
        Self { src_rows, repr: Repr::Gather(idx) }
    }

    /// Each output row lists `(source_row, weight)` taps.
    pub fn weighted(src_rows: usize, rows: impl IntoIterator<Item = Vec<(usize, f64)>>) -> Self {
        let mut offsets = vec![0u32];
        let mut src = Vec::new();
        let mut weights = Vec::new();
        for taps in rows {
            for (i, w) in taps {
                debug_assert!(i < src_rows);
                src.push(i as u32);
                weights.push(w);
            }
            offsets.push(src.len() as u32);
        }
        Self { src_rows, repr: Repr::Weighted { offsets, src, weights } }
    }

    /// Stacks per-block maps along the diagonal; `None` blocks are the identity on `rows` rows.
    /// Every `Some` block must map `rows` rows to `rows` rows.
    pub fn block_diagonal(rows: usize, blocks: &[Option<RowMap>]) -> Self {
        let total = rows * blocks.len();
        let taps = blocks.iter().enumerate().flat_map(|(b, m)| {
            let base = b * rows;
            (0..rows).map(move |r| match m {
                None => vec![(base + r, 1.0)],
                Some(m) => {
                    debug_assert!(m.src_rows == rows && m.out_rows() == rows);
                    m.row_taps(r).map(|(s, w)| (base + s, w)).collect()
                }
            })
        });
        if blocks.iter().flatten().all(RowMap::is_gather) {
            let index: Vec<Option<usize>> =
                taps.map(|t| t.first().map(|&(s, _)| s)).collect();
            Self::gather(total, index)
        } else {
            Self::weighted(total, taps)
        }
    }

    fn row_taps(&self, r: usize) -> Box<dyn Iterator<Item = (usize, f64)> + '_> {
        match &self.repr {
            Repr::Gather(idx) => Box::new((idx[r] != NONE).then_some((idx[r] as usize, 1.0)).into_iter()),
            Repr::Weighted { offsets, src, weights } => Box::new(
                (offsets[r] as usize..offsets[r + 1] as usize).map(move |t| (src[t] as usize, weights[t])),
            ),
        }
    }

    pub fn src_rows(&self) -> usize {
        self.src_rows
    }

    pub fn out_rows(&self) -> usize {
        match &self.repr {
            Repr::Gather(idx) => idx.len(),
            Repr::Weighted { offsets, .. } => offsets.len() - 1,
        }
    }

    /// True when every output row copies at most one input row verbatim.
    pub fn is_gather(&self) -> bool {
        matches!(self.repr, Repr::Gather(_))
    }

    /// Source row of output row `r` for gather maps.
    pub fn source_of(&self, r: usize) -> Option<usize> {
        match &self.repr {
            Repr::Gather(idx) => (idx[r] != NONE).then_some(idx[r] as usize),
            Repr::Weighted { .. } => None,
        }
    }

    pub fn check_input<T>(&self, width: usize, x: &[T]) -> Result<()> {
        ensure!(
            width > 0 && x.len() == self.src_rows * width,
            Dimension,
            "row map expects {} rows of width {}, got {} values",
            self.src_rows,
            width,
            x.len()
        );
        Ok(())
    }

    pub fn apply<T: Real>(&self, width: usize, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.out_rows() * width];
        match &self.repr {
            Repr::Gather(idx) => {
                for (orow, &s) in out.chunks_mut(width).zip(idx) {
                    if s != NONE {
                        let s = s as usize;
                        orow.copy_from_slice(&x[s * width..(s + 1) * width]);
                    }
                }
            }
            Repr::Weighted { offsets, src, weights } => {
                for (r, orow) in out.chunks_mut(width).enumerate() {
                    for t in offsets[r] as usize..offsets[r + 1] as usize {
                        let s = src[t] as usize;
                        let w = T::lit(weights[t]);
                        for (o, &v) in orow.iter_mut().zip(&x[s * width..(s + 1) * width]) {
                            *o += w * v;
                        }
                    }
                }
            }
        }
        out
    }

    /// `gx += Mᵀ gy`, the adjoint of [`apply`](Self::apply).
    pub fn apply_adjoint_acc<T: Real>(&self, width: usize, gy: &[T], gx: &mut [T]) {
        match &self.repr {
            Repr::Gather(idx) => {
                for (grow, &s) in gy.chunks(width).zip(idx) {
                    if s != NONE {
                        let s = s as usize;
                        for (g, &v) in gx[s * width..(s + 1) * width].iter_mut().zip(grow) {
                            *g += v;
                        }
                    }
                }
            }
            Repr::Weighted { offsets, src, weights } => {
                for (r, grow) in gy.chunks(width).enumerate() {
                    for t in offsets[r] as usize..offsets[r + 1] as usize {
                        let s = src[t] as usize;
                        let w = T::lit(weights[t]);
                        for (g, &v) in gx[s * width..(s + 1) * width].iter_mut().zip(grow) {
                            *g += w * v;
                        }
                    }
                }
            }
        }
    }
}
