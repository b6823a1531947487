//! Data-parallel map with a sequential fallback.
//!
//! Every estimator in this crate reduces per-instance terms with an ordered
//! sum, so results are bit-identical whether the map below runs on rayon or
//! on the current thread. Build with `--no-default-features` to drop the
//! rayon dependency entirely.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `items`, preserving input order in the output.
#[cfg(feature = "parallel")]
pub fn ordered_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    items.par_iter().map(f).collect()
}

/// Maps `f` over `items`, preserving input order in the output.
#[cfg(not(feature = "parallel"))]
pub fn ordered_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

/// Sequential twin of [`ordered_map`], always available. Benchmarks use it
/// as the baseline when comparing against the rayon path.
pub fn ordered_map_seq<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree_in_order() {
        let xs: Vec<u64> = (0..1000).collect();
        let a = ordered_map(&xs, |x| x * 3 + 1);
        let b = ordered_map_seq(&xs, |x| x * 3 + 1);
        assert_eq!(a, b);
    }
}
