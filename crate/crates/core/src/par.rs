//! Execution-mode switch for the data-parallel loops.
//!
//! Every parallel loop in the crate goes through [`map_indexed`], which
//! collects results in index order so the output is bit-identical between
//! [`Exec::Sequential`] and [`Exec::Parallel`]. Without the `parallel`
//! feature, `Exec::Parallel` silently runs sequentially.

/// How the per-block / per-constraint / per-instance loops execute.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// True when this mode will actually fan out over threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// Maps `f` over `0..len`, in parallel when `exec` allows it and `len >= min_len`.
pub(crate) fn map_indexed<T, F>(exec: Exec, len: usize, min_len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if exec == Exec::Parallel && len >= min_len.max(2) {
            use rayon::prelude::*;
            return (0..len).into_par_iter().map(f).collect();
        }
    }
    let _ = (exec, min_len);
    (0..len).map(f).collect()
}

/// Parallel map over a slice, preserving order.
pub fn map_slice<S, T, F>(exec: Exec, items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    map_indexed(exec, items.len(), 2, |i| f(&items[i]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let seq = map_indexed(Exec::Sequential, 1000, 1, |i| (i as f64).sqrt());
        let par = map_indexed(Exec::Parallel, 1000, 1, |i| (i as f64).sqrt());
        assert_eq!(seq, par);
    }

    #[test]
    fn empty_input() {
        let v: Vec<usize> = map_indexed(Exec::Parallel, 0, 1, |i| i);
        assert!(v.is_empty());
    }
}
