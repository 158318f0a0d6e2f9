use rayon::prelude::*;

/// Applies `f` to every item, preserving input order in the output.
///
/// Runs on a pool of `parallelism` threads, or inline when `sequential` is
/// set (order-sensitive gateways) or only one thread is requested.
pub fn map_ordered<T, R, F>(items: &[T], parallelism: usize, sequential: bool, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    if sequential || parallelism <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(parallelism).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(e) => {
            tracing::warn!(error = %e, "thread pool unavailable, running sequentially");
            items.iter().map(f).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let items: Vec<u32> = (0..200).collect();
        let par = map_ordered(&items, 8, false, |x| x * 3);
        let seq = map_ordered(&items, 8, true, |x| x * 3);
        assert_eq!(par, seq);
        assert_eq!(par[199], 597);
    }
}
