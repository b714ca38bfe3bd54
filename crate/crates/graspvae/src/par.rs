//! Data-parallel map helpers. With the `parallel` feature (default) the
//! parallel variants run on rayon; without it they fall back to the
//! sequential path. Per-item work is pure, so both variants produce
//! bit-identical results in the same order.

/// Sequential reference implementation, always available (used by the
/// benches to compare against the rayon path).
pub fn map_seq<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    map_seq(items, f)
}
