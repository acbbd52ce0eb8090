//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature the work is spread over the rayon pool unless
//! the caller asks for [`Exec::Sequential`]. Without the feature every call
//! runs on the current thread. Results are always collected in index order,
//! so reductions over the returned vectors are bit-identical either way.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exec {
    #[default]
    Parallel,
    Sequential,
}

impl Exec {
    /// True when work will actually be dispatched to the thread pool.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// Maps `f` over `0..n` and returns the results in index order.
pub fn map_indexed<T, F>(exec: Exec, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if exec == Exec::Parallel {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Applies `f` to disjoint mutable chunks of `data`, passing the chunk index.
pub fn for_each_chunk_mut<T, F>(exec: Exec, data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    let chunk = chunk.max(1);
    #[cfg(feature = "parallel")]
    {
        if exec == Exec::Parallel {
            use rayon::prelude::*;
            data.par_chunks_mut(chunk)
                .enumerate()
                .for_each(|(i, c)| f(i, c));
            return;
        }
    }
    let _ = exec;
    data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequential_and_parallel_agree() {
        let f = |i: usize| (i as f64).sqrt().sin();
        let a = map_indexed(Exec::Parallel, 1000, f);
        let b = map_indexed(Exec::Sequential, 1000, f);
        assert_eq!(a, b);
    }

    #[test]
    fn chunks_cover_everything() {
        let mut v = vec![0usize; 103];
        for_each_chunk_mut(Exec::Parallel, &mut v, 10, |ci, c| {
            for (j, x) in c.iter_mut().enumerate() {
                *x = ci * 10 + j;
            }
        });
        assert!(v.iter().enumerate().all(|(i, &x)| i == x));
    }
}
