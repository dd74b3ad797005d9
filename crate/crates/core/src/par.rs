//! Execution-mode switch for the data-parallel entry points.
//!
//! Batch conditioning, the gradient checker and the training sweeps are maps
//! over independent items, so they can run on a rayon pool without changing
//! any result: every output slot is produced by exactly one item and no
//! floating-point reduction crosses items. The `parallel` cargo feature
//! controls whether rayon is linked at all; without it every mode degrades to
//! the sequential loop.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    /// Rayon work-stealing over items. Falls back to sequential when the
    /// `parallel` feature is disabled.
    Parallel,
}

impl Default for ExecMode {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            ExecMode::Parallel
        } else {
            ExecMode::Sequential
        }
    }
}

/// Order-preserving indexed map over a slice.
pub fn map_indexed<T, R, F>(mode: ExecMode, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    match mode {
        ExecMode::Sequential => items.iter().enumerate().map(|(i, t)| f(i, t)).collect(),
        ExecMode::Parallel => {
            #[cfg(feature = "parallel")]
            {
                items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect()
            }
            #[cfg(not(feature = "parallel"))]
            {
                items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
            }
        }
    }
}

/// Order-preserving map over index chunks; `f` receives the start index and
/// the chunk length and returns one result per index. Used where per-item
/// setup (e.g. cloning a model) should be amortized over a chunk.
pub fn map_chunked<R, F>(mode: ExecMode, total: usize, chunk: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize, usize) -> Vec<R> + Sync,
{
    let chunk = chunk.max(1);
    let starts: Vec<usize> = (0..total).step_by(chunk).collect();
    let chunks = map_indexed(mode, &starts, |_, &start| {
        f(start, chunk.min(total - start))
    });
    let mut out = Vec::with_capacity(total);
    for c in chunks {
        out.extend(c);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let items: Vec<u64> = (0..100).collect();
        let seq = map_indexed(ExecMode::Sequential, &items, |i, v| i as u64 * v);
        let par = map_indexed(ExecMode::Parallel, &items, |i, v| i as u64 * v);
        assert_eq!(seq, par);
    }

    #[test]
    fn chunked_covers_all_indices() {
        let out = map_chunked(ExecMode::Parallel, 10, 3, |start, len| {
            (start..start + len).collect()
        });
        assert_eq!(out, (0..10).collect::<Vec<_>>());
    }
}
