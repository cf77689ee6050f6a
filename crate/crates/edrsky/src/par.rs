//! Data-parallel kernel helpers with a sequential fallback.
//!
//! Every reduction is chunked with a fixed chunk size and the per-chunk
//! partials are combined in index order, so the parallel and sequential
//! paths produce bit-identical results regardless of thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Chunk size for deterministic reductions.
pub const CHUNK: usize = 4096;

/// Sequential chunked sum.
pub fn sum_by_seq<T, F>(items: &[T], f: F) -> f64
where
    F: Fn(&T) -> f64 + Sync,
{
    items
        .chunks(CHUNK)
        .map(|c| c.iter().map(&f).sum::<f64>())
        .sum()
}

/// Parallel chunked sum; identical chunking and combine order as the
/// sequential path.
#[cfg(feature = "parallel")]
pub fn sum_by_par<T, F>(items: &[T], f: F) -> f64
where
    T: Sync,
    F: Fn(&T) -> f64 + Sync,
{
    items
        .par_chunks(CHUNK)
        .map(|c| c.iter().map(&f).sum::<f64>())
        .collect::<Vec<_>>()
        .iter()
        .sum()
}

/// Feature-selected chunked sum.
pub fn sum_by<T, F>(items: &[T], f: F) -> f64
where
    T: Sync,
    F: Fn(&T) -> f64 + Sync,
{
    #[cfg(feature = "parallel")]
    {
        sum_by_par(items, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        sum_by_seq(items, f)
    }
}

/// Sequential chunked sum over `f(i)` for `i in 0..len`.
pub fn sum_by_indexed_seq<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64,
{
    let mut total = 0.0;
    let mut start = 0;
    while start < len {
        let end = (start + CHUNK).min(len);
        total += (start..end).map(&f).sum::<f64>();
        start = end;
    }
    total
}

/// Feature-selected chunked sum over `f(i)` for `i in 0..len`; identical
/// chunking as the sequential path.
pub fn sum_by_indexed<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    #[cfg(feature = "parallel")]
    {
        let n_chunks = len.div_ceil(CHUNK);
        (0..n_chunks)
            .into_par_iter()
            .map(|c| {
                let start = c * CHUNK;
                let end = (start + CHUNK).min(len);
                (start..end).map(&f).sum::<f64>()
            })
            .collect::<Vec<_>>()
            .iter()
            .sum()
    }
    #[cfg(not(feature = "parallel"))]
    {
        sum_by_indexed_seq(len, f)
    }
}

/// Sequential elementwise map.
pub fn map_seq<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U + Sync,
{
    items.iter().map(&f).collect()
}

/// Parallel elementwise map.
#[cfg(feature = "parallel")]
pub fn map_par<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync,
{
    items.par_iter().map(&f).collect()
}

/// Feature-selected elementwise map.
pub fn map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync,
{
    #[cfg(feature = "parallel")]
    {
        map_par(items, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_seq(items, f)
    }
}

/// Feature-selected indexed map: `f(i)` for `i in 0..len`.
pub fn map_indexed<U, F>(len: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync,
{
    #[cfg(feature = "parallel")]
    {
        // Wrapped so only the reference needs to be Send.
        #[allow(clippy::redundant_closure)]
        (0..len).into_par_iter().map(|i| f(i)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..len).map(f).collect()
    }
}

/// Sequential indexed map, always available for benchmarking.
pub fn map_indexed_seq<U, F>(len: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..len).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seq_and_default_sums_agree_bitwise() {
        let xs: Vec<f64> = (0..20_000).map(|i| (i as f64).sin() * 1e3).collect();
        let a = sum_by_seq(&xs, |x| *x);
        let b = sum_by(&xs, |x| *x);
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
