//! Data-parallel execution of independent work items.
//!
//! Every battery in the crate (trajectory pairs, sweep grid points, manifold
//! nodes on one continuation ring) goes through [`Exec`]. Results are always
//! collected in index order, so a run is bit-identical whichever mode is used.
//! Without the `parallel` feature, [`Exec::Parallel`] degrades to the
//! sequential loop.

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// True when work is actually spread over the rayon pool.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Exec::Parallel {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Like [`Exec::map`], failing with the error of the lowest failing index.
    pub fn try_map<T, F>(self, n: usize, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize) -> Result<T> + Sync + Send,
    {
        self.map(n, f).into_iter().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree_and_keep_order() {
        let f = |i: usize| (i as f64).sin() * 1e3;
        let a = Exec::Sequential.map(1000, f);
        let b = Exec::Parallel.map(1000, f);
        assert_eq!(a, b);
    }

    #[test]
    fn try_map_reports_first_error() {
        let r = Exec::Parallel.try_map(100, |i| {
            if i % 30 == 29 {
                Err(crate::Error::pre(format!("item {i}")))
            } else {
                Ok(i)
            }
        });
        let msg = r.unwrap_err().to_string();
        assert!(msg.contains("item 29"), "{msg}");
    }
}
