//! Prediction heads over encoder output.

pub mod flat;
pub mod nested;

pub use flat::{FlatHead, FlatHeads, FlatLoss};
pub use nested::{NestedConfig, NestedHead, NestedLoss};

use ndarray::{ArrayView1, ArrayViewMut1};

/// In-place softmax; returns log of the normalizer.
pub(crate) fn softmax_inplace(mut row: ArrayViewMut1<f64>) -> f64 {
    let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    row.mapv_inplace(|x| (x - max).exp());
    let sum = row.sum();
    row /= sum;
    max + sum.ln()
}

/// Index of the largest value, lowest index on ties.
pub(crate) fn argmax(row: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}
