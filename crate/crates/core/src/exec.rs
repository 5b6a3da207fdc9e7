//! Coarse-grained data parallelism over independent work units (grid
//! points, Monte-Carlo chunks, benchmark cases).
//!
//! Every unit gets its own RNG stream derived from its index, so results
//! are identical whichever mode runs them. Without the `parallel` feature,
//! [`Execution::Parallel`] falls back to sequential execution.

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

/// `f(index, item)` over `items`, results in input order.
pub fn map_indexed<T, R, F>(items: &[T], exec: Execution, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect()
        }
        _ => items.iter().enumerate().map(|(i, t)| f(i, t)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree_and_keep_order() {
        let items: Vec<u64> = (0..100).collect();
        let seq = map_indexed(&items, Execution::Sequential, |i, v| {
            (i as u64) * 1000 + v * v
        });
        let par = map_indexed(&items, Execution::Parallel, |i, v| {
            (i as u64) * 1000 + v * v
        });
        assert_eq!(seq, par);
        assert_eq!(seq[3], 3009);
    }
}
