//! Data-parallel helpers with a sequential fallback.
//!
//! Every helper produces output in index order, so results never depend on
//! the thread schedule. Reductions are left to the caller, who sums the
//! collected values sequentially.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub fn num_threads() -> usize {
    #[cfg(feature = "parallel")]
    return rayon::current_num_threads();

    #[cfg(not(feature = "parallel"))]
    return 1;
}

/// `(0..n).map(f).collect()`, fanned out when parallelism is available.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Send + Sync,
{
    #[cfg(feature = "parallel")]
    return (0..n).into_par_iter().map(f).collect();

    #[cfg(not(feature = "parallel"))]
    return (0..n).map(f).collect();
}

/// Fallible variant of [`map_indexed`]. On failure the error from the lowest
/// failing index is returned.
pub fn try_map_indexed<T, E, F>(n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Send + Sync,
{
    let results = map_indexed(n, f);
    results.into_iter().collect()
}

pub fn map_slice<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Send + Sync,
{
    #[cfg(feature = "parallel")]
    return items.par_iter().map(f).collect();

    #[cfg(not(feature = "parallel"))]
    return items.iter().map(f).collect();
}

/// Fallible variant of [`map_slice`]; the first error in slice order wins.
pub fn try_map_slice<T, R, E, F>(items: &[T], f: F) -> Result<Vec<R>, E>
where
    T: Sync,
    R: Send,
    E: Send,
    F: Fn(&T) -> Result<R, E> + Send + Sync,
{
    map_slice(items, f).into_iter().collect()
}

/// Applies `f(index, chunk)` to consecutive chunks of `data` of length `chunk`.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Send + Sync,
{
    assert!(chunk > 0);
    #[cfg(feature = "parallel")]
    data.par_chunks_mut(chunk)
        .enumerate()
        .for_each(|(i, c)| f(i, c));

    #[cfg(not(feature = "parallel"))]
    data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}

/// Zips two mutable slices chunk-wise: `f(index, a_chunk, b_item)`.
pub fn for_each_chunk_zip_mut<T, U, F>(data: &mut [T], chunk: usize, other: &mut [U], f: F)
where
    T: Send,
    U: Send,
    F: Fn(usize, &mut [T], &mut U) + Send + Sync,
{
    assert!(chunk > 0);
    assert_eq!(data.len(), chunk * other.len());
    #[cfg(feature = "parallel")]
    data.par_chunks_mut(chunk)
        .zip(other.par_iter_mut())
        .enumerate()
        .for_each(|(i, (c, o))| f(i, c, o));

    #[cfg(not(feature = "parallel"))]
    data.chunks_mut(chunk)
        .zip(other.iter_mut())
        .enumerate()
        .for_each(|(i, (c, o))| f(i, c, o));
}

/// Configures the global pool. A no-op without the `parallel` feature.
pub fn init_thread_pool(threads: usize) -> bool {
    #[cfg(feature = "parallel")]
    return rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .is_ok();

    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        false
    }
}

/// Runs `f` on a dedicated pool with `threads` workers (or inline without the
/// `parallel` feature). Used by the benches to compare schedules.
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool");
        pool.install(f)
    }

    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        f()
    }
}

/// Fallible [`for_each_chunk_zip_mut`]; stops at the first error reported.
pub fn try_for_each_chunk_zip_mut<T, U, E, F>(data: &mut [T], chunk: usize, other: &mut [U], f: F) -> Result<(), E>
where
    T: Send,
    U: Send,
    E: Send,
    F: Fn(usize, &mut [T], &mut U) -> Result<(), E> + Send + Sync,
{
    assert!(chunk > 0);
    assert_eq!(data.len(), chunk * other.len());
    #[cfg(feature = "parallel")]
    return data
        .par_chunks_mut(chunk)
        .zip(other.par_iter_mut())
        .enumerate()
        .try_for_each(|(i, (c, o))| f(i, c, o));

    #[cfg(not(feature = "parallel"))]
    return data
        .chunks_mut(chunk)
        .zip(other.iter_mut())
        .enumerate()
        .try_for_each(|(i, (c, o))| f(i, c, o));
}
