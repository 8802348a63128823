//! Data-parallel map helpers. With the `parallel` feature (default) these run
//! on the rayon pool; without it they fall back to sequential loops with
//! identical outputs. Reductions downstream of these maps are always performed
//! in index order, so results do not depend on thread count.

#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Sequential reference path, always available (used by the benches to
/// compare against the parallel path within a single run).
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_matches_sequential() {
        let f = |i: usize| crate::rng::mix(i as u64);
        assert_eq!(map_indexed(1000, f), map_indexed_seq(1000, f));
    }
}
