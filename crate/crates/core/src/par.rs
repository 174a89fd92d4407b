//! Thin switch between rayon and sequential iteration.
//!
//! Callers only ever map over an index range and reduce the collected vector
//! in index order, so the output is identical with and without the
//! `parallel` feature.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub(crate) fn map_range<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..len).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..len).map(f).collect()
    }
}

pub(crate) fn map_slice<S, T, F>(items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
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

/// Splits `total` work items into fixed-size chunks. The chunking depends
/// only on `total`, never on the thread pool.
pub(crate) fn chunks(total: usize, chunk: usize) -> Vec<std::ops::Range<usize>> {
    let chunk = chunk.max(1);
    (0..total.div_ceil(chunk))
        .map(|k| k * chunk..((k + 1) * chunk).min(total))
        .collect()
}
