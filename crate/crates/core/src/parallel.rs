//! Batch evaluation of independent work items.
//!
//! The optimizer and the verification oracles hand batches of independent
//! evaluations (line-search trials, finite-difference probes) to a
//! [`BatchEvaluator`]. Results are always returned in input order, so the
//! outcome of a computation never depends on how a batch was scheduled.

use alloc::vec::Vec;

/// Evaluates a function over a batch of inputs, returning results in input
/// order.
pub trait BatchEvaluator {
    fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send;

    /// Number of items worth submitting at once.
    fn width(&self) -> usize {
        1
    }
}

/// In-order evaluation on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl BatchEvaluator for Sequential {
    fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        items.iter().map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn sequential_preserves_order() {
        let out = Sequential.map(&[3, 1, 2], |x| x * 10);
        assert_eq!(out, vec![30, 10, 20]);
        assert_eq!(Sequential.width(), 1);
    }
}
