//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) independent work items are spread
//! over the rayon pool; without it, or with [`Execution::Sequential`], the
//! same closures run in order on the calling thread. Output order is always
//! the index order, so results are identical in both modes.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// `(0..n).map(f).collect()`, in parallel when enabled.
pub fn map_indexed<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
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

/// Fill `out[i] = f(i)` over a mutable slice.
pub fn fill_indexed<T, F>(exec: Execution, out: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        out.par_iter_mut().enumerate().for_each(|(i, v)| *v = f(i));
        return;
    }
    let _ = exec;
    for (i, v) in out.iter_mut().enumerate() {
        *v = f(i);
    }
}

/// Configure the global pool size. `0` keeps the rayon default.
pub fn set_threads(threads: usize) {
    #[cfg(feature = "parallel")]
    if threads > 0 {
        // a pool may already be installed (tests, repeated CLI calls)
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let _ = threads;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let a = map_indexed(Execution::Parallel, 1000, |i| (i * i) as u64);
        let b = map_indexed(Execution::Sequential, 1000, |i| (i * i) as u64);
        assert_eq!(a, b);
        let mut c = vec![0u64; 1000];
        fill_indexed(Execution::Parallel, &mut c, |i| (i * i) as u64);
        assert_eq!(a, c);
    }
}
