//! Data-parallel helpers with sequential twins.
//!
//! The `parallel` feature (on by default) runs the dispatching helpers on
//! rayon's pool; without it they call the `_seq` twins. Work items only
//! depend on their own index, so both paths produce identical vectors and
//! every downstream result is independent of the feature.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n`, collecting results in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_indexed_seq(n, f)
    }
}

/// Sequential twin of [`map_indexed`].
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Maps `f` over mutable slice elements, collecting results in index order.
pub fn map_mut<T, U, F>(items: &mut [T], f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(usize, &mut T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items
            .par_iter_mut()
            .enumerate()
            .map(|(i, item)| f(i, item))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_mut_seq(items, f)
    }
}

/// Sequential twin of [`map_mut`].
pub fn map_mut_seq<T, U, F>(items: &mut [T], f: F) -> Vec<U>
where
    F: Fn(usize, &mut T) -> U,
{
    items
        .iter_mut()
        .enumerate()
        .map(|(i, item)| f(i, item))
        .collect()
}
