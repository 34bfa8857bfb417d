//! Data-parallel map helpers.
//!
//! `pmap` fans out over rayon when the `parallel` feature is enabled and
//! degrades to a plain sequential map otherwise. Results are collected in
//! input order, so output is identical regardless of thread count. `pmap_seq`
//! is always sequential; the bench suite uses it as the baseline.

pub fn pmap_seq<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    F: Fn(T) -> U + Sync + Send,
    T: Send,
    U: Send,
{
    items.into_iter().map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn pmap<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    F: Fn(T) -> U + Sync + Send,
    T: Send,
    U: Send,
{
    use rayon::prelude::*;
    items.into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn pmap<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    F: Fn(T) -> U + Sync + Send,
    T: Send,
    U: Send,
{
    pmap_seq(items, f)
}

/// Run `f` on a dedicated thread pool with `jobs` workers (parallel builds
/// only; otherwise the hint is ignored and `f` runs inline).
#[cfg(feature = "parallel")]
pub fn with_jobs<R: Send>(jobs: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    match jobs {
        Some(n) if n > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(f))
            .unwrap_or_else(|_| panic!("failed to build thread pool")),
        _ => f(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_jobs<R: Send>(_jobs: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    f()
}
