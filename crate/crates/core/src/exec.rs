//! Data-parallel dispatch. With the `parallel` feature the batch helpers run
//! on the rayon pool; without it every path is sequential.

/// How a batch of independent jobs is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Falls back to sequential when built without the `parallel` feature.
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

/// Evaluates `f(0..n)` and returns the results in index order.
pub fn map_indexed<R, F>(exec: Execution, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_modes_preserve_order() {
        let seq = map_indexed(Execution::Sequential, 1000, |i| i * i);
        let par = map_indexed(Execution::Parallel, 1000, |i| i * i);
        assert_eq!(seq, par);
        assert_eq!(seq[31], 961);
    }
}
