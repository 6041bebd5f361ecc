//! Serial/parallel dispatch for independent work items.
//!
//! Results always come back in item order, so any reduction done by the
//! caller over the returned vector is independent of the schedule. Without
//! the `parallel` feature, [`Execution::Parallel`] runs serially.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Serial,
    #[default]
    Parallel,
}

impl Execution {
    /// True when this build can actually run work in parallel.
    pub fn is_parallel_available() -> bool {
        cfg!(feature = "parallel")
    }

    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Send + Sync,
    {
        match self {
            Execution::Serial => (0..n).map(f).collect(),
            Execution::Parallel => par_map(n, f),
        }
    }
}

#[cfg(feature = "parallel")]
fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Send + Sync,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Send + Sync,
{
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let s = Execution::Serial.map(1000, |i| i * i);
        let p = Execution::Parallel.map(1000, |i| i * i);
        assert_eq!(s, p);
        assert_eq!(p[999], 999 * 999);
    }
}
