//! Deterministic data-parallel helpers.
//!
//! The heavy loops in this workspace (normal-equation accumulation over
//! thousands of rows, per-point map operations) are embarrassingly
//! parallel, but estimation results must not depend on thread scheduling.
//! Every helper here therefore works on *fixed* chunk boundaries: each
//! chunk is reduced sequentially in input order, and chunk results are
//! merged left-to-right. The `parallel` feature (on by default) runs the
//! per-chunk work on the rayon pool; disabling it runs the identical
//! chunking on one thread. Both paths produce bit-identical output, which
//! the filter-consistency tests rely on.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Chunk length used by the workspace's accumulation loops. One chunk is
/// large enough to amortize task overhead yet small enough to load-balance
/// a few hundred rows across cores.
pub const DEFAULT_CHUNK: usize = 256;

/// Maps `f` over `items` preserving order.
///
/// With the `parallel` feature the map runs on the rayon pool; element
/// results are identical either way because `f` is applied per element.
pub fn map_collect<T: Sync, U: Send, F: Fn(&T) -> U + Send + Sync>(items: &[T], f: F) -> Vec<U> {
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Maps `f` over indexed elements, preserving order.
pub fn indexed_map_collect<T: Sync, U: Send, F: Fn(usize, &T) -> U + Send + Sync>(
    items: &[T],
    f: F,
) -> Vec<U> {
    #[cfg(feature = "parallel")]
    {
        items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
    }
}

/// Chunked fold-then-merge reduction with deterministic association.
///
/// `fold` must process elements of a chunk in the order given; `merge`
/// combines chunk accumulators and is applied left-to-right over the chunk
/// sequence. The result is bit-identical between the sequential and
/// parallel builds because both use the same `chunk` boundaries and merge
/// order — only *where* each chunk runs differs.
pub fn fold_chunks<T, M, Init, Fold, Merge>(
    items: &[T],
    chunk: usize,
    init: Init,
    fold: Fold,
    merge: Merge,
) -> M
where
    T: Sync,
    M: Send,
    Init: Fn() -> M + Send + Sync,
    Fold: Fn(M, &T) -> M + Send + Sync,
    Merge: Fn(M, M) -> M,
{
    assert!(chunk > 0, "chunk length must be positive");
    let partials: Vec<M> = {
        #[cfg(feature = "parallel")]
        {
            items
                .par_chunks(chunk)
                .map(|c| c.iter().fold(init(), &fold))
                .collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            items
                .chunks(chunk)
                .map(|c| c.iter().fold(init(), &fold))
                .collect()
        }
    };
    partials
        .into_iter()
        .fold(init(), |acc, m| merge(acc, m))
}

/// Same reduction forced onto one thread regardless of features; used by
/// benchmarks to compare against the default dispatch.
pub fn fold_chunks_sequential<T, M, Init, Fold, Merge>(
    items: &[T],
    chunk: usize,
    init: Init,
    fold: Fold,
    merge: Merge,
) -> M
where
    Init: Fn() -> M,
    Fold: Fn(M, &T) -> M,
    Merge: Fn(M, M) -> M,
{
    assert!(chunk > 0, "chunk length must be positive");
    items
        .chunks(chunk)
        .map(|c| c.iter().fold(init(), &fold))
        .fold(init(), |acc, m| merge(acc, m))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        let xs: Vec<i64> = (0..1000).collect();
        let ys = map_collect(&xs, |x| x * 2);
        assert!(ys.iter().enumerate().all(|(i, &y)| y == 2 * i as i64));
        let zs = indexed_map_collect(&xs, |i, x| i as i64 + x);
        assert!(zs.iter().enumerate().all(|(i, &z)| z == 2 * i as i64));
    }

    #[test]
    fn dispatch_is_bit_identical_to_forced_sequential() {
        // Sums of many different-magnitude terms expose any reassociation.
        let xs: Vec<f64> = (0..10_000)
            .map(|i| (i as f64 * 0.7).sin() * 10f64.powi((i % 7) as i32 - 3))
            .collect();
        let par = fold_chunks(&xs, DEFAULT_CHUNK, || 0.0f64, |a, x| a + x, |a, b| a + b);
        let seq = fold_chunks_sequential(&xs, DEFAULT_CHUNK, || 0.0f64, |a, x| a + x, |a, b| a + b);
        assert_eq!(par.to_bits(), seq.to_bits());
    }

    #[test]
    fn empty_and_short_inputs() {
        let none: Vec<f64> = vec![];
        assert_eq!(
            fold_chunks(&none, 8, || 0.0, |a, x| a + x, |a, b| a + b),
            0.0
        );
        let one = [3.5f64];
        assert_eq!(fold_chunks(&one, 8, || 0.0, |a, x| a + x, |a, b| a + b), 3.5);
    }
}
