//! Data-parallel map helpers. With the default `parallel` feature the maps
//! fan out over the rayon pool; without it they degrade to sequential loops
//! with the same signatures. Results always come back in input order, so
//! callers are deterministic either way.

#[cfg(feature = "parallel")]
pub fn map_collect<T, R, F>(items: &[T], op: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(op).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_collect<T, R, F>(items: &[T], op: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.iter().map(op).collect()
}

/// Always-sequential variant, kept for benchmarking against `map_collect`.
pub fn map_collect_seq<T, R, F>(items: &[T], op: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.iter().map(op).collect()
}

/// Cap the global worker pool at `threads`. Returns false when the cap could
/// not be applied (pool already initialized, or the sequential build).
#[cfg(feature = "parallel")]
pub fn set_thread_cap(threads: usize) -> bool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .is_ok()
}

#[cfg(not(feature = "parallel"))]
pub fn set_thread_cap(_threads: usize) -> bool {
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maps_preserve_input_order() {
        let items: Vec<u64> = (0..257).collect();
        let par = map_collect(&items, |x| x * 3 + 1);
        let seq = map_collect_seq(&items, |x| x * 3 + 1);
        assert_eq!(par, seq);
        assert_eq!(par[10], 31);
    }
}
