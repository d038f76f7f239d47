//! Data-parallel map over independent items.
//!
//! With the `parallel` feature (default) work runs on a rayon pool sized by
//! [`Jobs`]; without it, or with `Jobs::Sequential`, items run in order on
//! the calling thread. Results are always returned in input order, so the
//! two modes produce identical output.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Jobs {
    Sequential,
    /// Rayon's global pool.
    #[default]
    Auto,
    /// A dedicated pool with this many threads.
    Threads(usize),
}

impl Jobs {
    /// `0` means auto, `1` sequential.
    pub fn from_count(n: usize) -> Self {
        match n {
            0 => Jobs::Auto,
            1 => Jobs::Sequential,
            n => Jobs::Threads(n),
        }
    }

    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self != Jobs::Sequential
    }
}

pub fn map<T, R, F>(jobs: Jobs, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        match jobs {
            Jobs::Sequential => {}
            Jobs::Auto => return items.par_iter().map(f).collect(),
            Jobs::Threads(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
                Ok(pool) => return pool.install(|| items.par_iter().map(f).collect()),
                Err(e) => log::warn!("could not build a {n}-thread pool ({e}); running sequentially"),
            },
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = jobs;
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_preserved_in_every_mode() {
        let items: Vec<u64> = (0..500).collect();
        let want: Vec<u64> = items.iter().map(|x| x * x).collect();
        for jobs in [Jobs::Sequential, Jobs::Auto, Jobs::Threads(3)] {
            assert_eq!(map(jobs, &items, |x| x * x), want);
        }
    }

    #[test]
    fn from_count() {
        assert_eq!(Jobs::from_count(0), Jobs::Auto);
        assert_eq!(Jobs::from_count(1), Jobs::Sequential);
        assert_eq!(Jobs::from_count(4), Jobs::Threads(4));
        assert!(!Jobs::Sequential.is_parallel());
    }
}
