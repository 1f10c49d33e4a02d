//! Ordered maps over trial indices.
//!
//! Results always come back in index order, so reductions over them do not
//! depend on how many workers produced them. With the `parallel` feature the
//! map runs on a rayon pool; without it everything is sequential.

/// Worker count for [`map_trials`]: `None` uses the global pool, `Some(1)`
/// runs on the calling thread.
pub type Threads = Option<usize>;

pub fn map_sequential<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn map_parallel<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn map_trials<T, F>(n: usize, threads: Threads, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match threads {
        Some(1) => map_sequential(n, f),
        Some(k) => match rayon::ThreadPoolBuilder::new().num_threads(k).build() {
            Ok(pool) => pool.install(|| map_parallel(n, f)),
            Err(_) => map_parallel(n, f),
        },
        None => map_parallel(n, f),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn map_trials<T, F>(n: usize, _threads: Threads, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    map_sequential(n, f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_index_order() {
        let want: Vec<usize> = (0..1000).map(|i| i * i).collect();
        assert_eq!(map_sequential(1000, |i| i * i), want);
        for threads in [None, Some(1), Some(3)] {
            assert_eq!(map_trials(1000, threads, |i| i * i), want);
        }
    }

    #[test]
    fn empty_map() {
        assert!(map_trials(0, None, |i| i).is_empty());
    }
}
