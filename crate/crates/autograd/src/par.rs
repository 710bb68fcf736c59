//! Thin dispatch layer between rayon and sequential execution.
//!
//! Every helper here partitions work so that each output element is produced
//! by exactly one fixed sequential computation. Results are therefore
//! bitwise identical whether the `parallel` feature is on or off and for any
//! thread count.

/// Number of worker threads the parallel build would fan out to (1 when the
/// feature is off).
pub fn num_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// Splits `data` into chunks of `chunk_rows * row_len` elements and runs `f`
/// on each with the index of its first row. Chunks never split a row.
pub fn for_each_row_chunk<T, F>(data: &mut [T], row_len: usize, chunk_rows: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    assert!(row_len > 0 && chunk_rows > 0);
    debug_assert_eq!(data.len() % row_len, 0);
    let chunk_len = chunk_rows * row_len;
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        data.par_chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(i, chunk)| f(i * chunk_rows, chunk));
    }
    #[cfg(not(feature = "parallel"))]
    {
        for (i, chunk) in data.chunks_mut(chunk_len).enumerate() {
            f(i * chunk_rows, chunk);
        }
    }
}

/// Row count per chunk that yields a few chunks per thread without
/// fragmenting small problems.
pub fn chunk_rows_for(total_rows: usize) -> usize {
    let target_chunks = num_threads() * 4;
    (total_rows.div_ceil(target_chunks)).max(1)
}

/// Maps `f` over an index range, preserving order in the output.
pub fn map_indices<O, F>(n: usize, f: F) -> Vec<O>
where
    O: Send,
    F: Fn(usize) -> O + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Maps `f` over a slice, preserving order in the output.
pub fn map_slice<I, O, F>(items: &[I], f: F) -> Vec<O>
where
    I: Sync,
    O: Send,
    F: Fn(&I) -> O + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}
