//! Order-preserving parallel map over independent items. The worker count is
//! whatever the caller's rayon pool allows.

use rayon::prelude::*;

use crate::error::Result;

pub fn map<T, U, F>(items: &[T], f: F) -> Result<Vec<U>>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> Result<U> + Sync + Send,
{
    items.par_iter().map(f).collect()
}
