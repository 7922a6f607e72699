//! Data-parallel helpers. With the `parallel` feature (default) work is spread
//! over the rayon pool; without it every helper runs as a plain loop. Results
//! are identical either way: each output element is produced by exactly one
//! closure call and reductions happen afterwards in index order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Whether this build dispatches to rayon.
pub const PARALLEL: bool = cfg!(feature = "parallel");

/// Map `f` over `items`, preserving order.
pub fn map<I, R, F>(items: &[I], f: F) -> Vec<R>
where
    I: Sync,
    R: Send,
    F: Fn(&I) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Sequential counterpart of [`map`]; always available so both paths can be compared.
pub fn map_sequential<I, R, F>(items: &[I], f: F) -> Vec<R>
where
    F: Fn(&I) -> R,
{
    items.iter().map(f).collect()
}

/// Run `f(chunk_index, chunk)` over consecutive `chunk`-sized pieces of `out`.
pub fn for_each_chunk<T, F>(out: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    if chunk == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    {
        // Below this many elements the pool hand-off costs more than it saves.
        if out.len() >= 1 << 14 {
            out.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
            return;
        }
    }
    out.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}
