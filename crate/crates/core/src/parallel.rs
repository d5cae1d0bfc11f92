//! Thin dispatch layer between rayon and sequential loops.
//!
//! Work is always partitioned into fixed-size chunks so that any reduction
//! happens in the same order regardless of thread count or the `parallel`
//! feature. Callers get bitwise-identical results from both code paths.

/// Chunk size (in rows) for row-partitioned dense kernels.
pub const ROW_CHUNK: usize = 64;

#[cfg(feature = "parallel")]
pub fn for_each_chunk_mut<T: Send, F>(data: &mut [T], chunk: usize, f: F)
where
    F: Fn(usize, &mut [T]) + Sync,
{
    use rayon::prelude::*;
    data.par_chunks_mut(chunk)
        .enumerate()
        .for_each(|(ci, slice)| f(ci * chunk, slice));
}

#[cfg(not(feature = "parallel"))]
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    F: Fn(usize, &mut [T]) + Sync,
{
    for (ci, slice) in data.chunks_mut(chunk).enumerate() {
        f(ci * chunk, slice);
    }
}

/// Map `0..n` preserving index order in the output.
#[cfg(feature = "parallel")]
pub fn map_indexed<T: Send, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T + Sync,
{
    (0..n).map(f).collect()
}
