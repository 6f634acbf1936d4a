//! Batch execution over independent items.
//!
//! With the `parallel` feature, [`Strategy::Parallel`] runs on a dedicated
//! rayon pool of the requested width. Without it every strategy runs on the
//! calling thread, in order.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Sequential,
    Parallel { threads: usize },
}

impl Strategy {
    pub fn with_width(threads: usize) -> Self {
        if threads <= 1 {
            Strategy::Sequential
        } else {
            Strategy::Parallel { threads }
        }
    }
}

/// Applies `f` to every item; output order matches input order.
pub fn map_ordered<T, R, F>(items: &[T], strategy: Strategy, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match strategy {
        Strategy::Sequential => items.iter().map(f).collect(),
        Strategy::Parallel { threads } => parallel_map(items, threads, f),
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<T, R, F>(items: &[T], threads: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    match rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(e) => {
            log::warn!("falling back to sequential execution: {e}");
            items.iter().map(f).collect()
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, R, F>(items: &[T], _threads: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.iter().map(f).collect()
}

/// Folds items into an accumulator per chunk and merges the partial
/// results. `merge` must be associative with `identity` as neutral element.
pub fn fold_merge<T, A, Id, Fo, Me>(items: &[T], strategy: Strategy, identity: Id, fold: Fo, merge: Me) -> A
where
    T: Sync,
    A: Send,
    Id: Fn() -> A + Sync + Send,
    Fo: Fn(A, &T) -> A + Sync + Send,
    Me: Fn(A, A) -> A + Sync + Send,
{
    match strategy {
        Strategy::Sequential => items.iter().fold(identity(), fold),
        Strategy::Parallel { threads } => parallel_fold(items, threads, identity, fold, merge),
    }
}

#[cfg(feature = "parallel")]
fn parallel_fold<T, A, Id, Fo, Me>(items: &[T], threads: usize, identity: Id, fold: Fo, merge: Me) -> A
where
    T: Sync,
    A: Send,
    Id: Fn() -> A + Sync + Send,
    Fo: Fn(A, &T) -> A + Sync + Send,
    Me: Fn(A, A) -> A + Sync + Send,
{
    use rayon::prelude::*;
    match rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build() {
        Ok(pool) => pool.install(|| items.par_iter().fold(&identity, &fold).reduce(&identity, &merge)),
        Err(_) => items.iter().fold(identity(), fold),
    }
}

#[cfg(not(feature = "parallel"))]
fn parallel_fold<T, A, Id, Fo, Me>(items: &[T], _threads: usize, identity: Id, fold: Fo, _merge: Me) -> A
where
    T: Sync,
    A: Send,
    Id: Fn() -> A + Sync + Send,
    Fo: Fn(A, &T) -> A + Sync + Send,
    Me: Fn(A, A) -> A + Sync + Send,
{
    items.iter().fold(identity(), fold)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved_under_both_strategies() {
        let items: Vec<u32> = (0..500).collect();
        let seq = map_ordered(&items, Strategy::Sequential, |x| x * 3);
        let par = map_ordered(&items, Strategy::Parallel { threads: 4 }, |x| x * 3);
        assert_eq!(seq, par);
        assert_eq!(seq[499], 1497);
    }

    #[test]
    fn fold_merge_agrees() {
        let items: Vec<u64> = (1..=1000).collect();
        let s = fold_merge(&items, Strategy::Sequential, || 0u64, |a, x| a + x, |a, b| a + b);
        let p = fold_merge(&items, Strategy::Parallel { threads: 3 }, || 0u64, |a, x| a + x, |a, b| a + b);
        assert_eq!((s, p), (500_500, 500_500));
    }

    #[test]
    fn width_one_is_sequential() {
        assert_eq!(Strategy::with_width(1), Strategy::Sequential);
        assert_eq!(Strategy::with_width(0), Strategy::Sequential);
        assert_eq!(Strategy::with_width(8), Strategy::Parallel { threads: 8 });
    }
}
