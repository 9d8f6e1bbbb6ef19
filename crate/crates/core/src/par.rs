//! Data-parallel map with a sequential fallback.
//!
//! Built with the `parallel` feature (the default), [`Parallelism::Rayon`]
//! fans work out over the rayon pool. Without it every mode runs
//! sequentially, so callers never need their own `cfg` switches.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parallelism {
    #[default]
    Rayon,
    Sequential,
}

impl Parallelism {
    pub fn available() -> bool {
        cfg!(feature = "parallel")
    }
}

/// Order-preserving map.
pub fn par_map<T, U, F>(items: Vec<T>, mode: Parallelism, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    match mode {
        #[cfg(feature = "parallel")]
        Parallelism::Rayon => {
            use rayon::prelude::*;
            items.into_par_iter().map(f).collect()
        }
        _ => items.into_iter().map(f).collect(),
    }
}
