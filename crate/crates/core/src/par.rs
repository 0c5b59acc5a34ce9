//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) work is spread over the current
//! rayon pool; without it, or with [`Execution::Sequential`], the same
//! closures run in index order. Results are always returned in index order,
//! so reductions performed by the caller are bit-identical across modes and
//! thread counts.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Whether work will actually be spread over threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// `(0..n).map(f).collect()`, possibly in parallel.
pub fn map_indices<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Applies `f` to every element of `items` in place, possibly in parallel.
pub fn for_each_mut<T, F>(exec: Execution, items: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        items.par_iter_mut().enumerate().for_each(|(i, x)| f(i, x));
        return;
    }
    let _ = exec;
    items.iter_mut().enumerate().for_each(|(i, x)| f(i, x));
}

/// Sums per-chunk partial vectors in chunk order.
///
/// `partial(c)` computes the contribution of chunk `c` into a zeroed buffer
/// of length `len`. Chunks are evaluated `batch` at a time (parallel inside a
/// batch) and folded into the accumulator strictly in index order.
pub fn ordered_chunk_sum<F>(exec: Execution, chunks: usize, len: usize, batch: usize, partial: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    let mut acc = vec![0.0; len];
    let batch = batch.max(1);
    let mut start = 0;
    while start < chunks {
        let end = (start + batch).min(chunks);
        let parts = map_indices(exec, end - start, |k| {
            let mut buf = vec![0.0; len];
            partial(start + k, &mut buf);
            buf
        });
        for part in parts {
            for (a, v) in acc.iter_mut().zip(part) {
                *a += v;
            }
        }
        start = end;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        for exec in [Execution::Sequential, Execution::Parallel] {
            assert_eq!(map_indices(exec, 5, |i| i * i), vec![0, 1, 4, 9, 16]);
        }
    }

    #[test]
    fn chunk_sum_is_mode_independent() {
        let f = |c: usize, buf: &mut [f64]| {
            for (k, b) in buf.iter_mut().enumerate() {
                *b = ((c * 7 + k) as f64).sqrt() * 1e-3;
            }
        };
        let seq = ordered_chunk_sum(Execution::Sequential, 37, 11, 4, f);
        let par = ordered_chunk_sum(Execution::Parallel, 37, 11, 4, f);
        assert_eq!(seq, par);
    }
}
