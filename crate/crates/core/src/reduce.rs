//! Deterministic reductions.
//!
//! Sums use a fixed-shape pairwise tree: the split points depend only on the
//! slice length, never on the worker count, so the sequential and parallel
//! paths produce bitwise-identical results.

/// Leaf size below which a block is summed left-to-right.
const BLOCK: usize = 128;

/// Length above which the parallel path spawns subtasks. Must be a constant
/// so the tree shape is identical in both paths.
#[cfg(feature = "parallel")]
const PAR_CUTOFF: usize = 1 << 15;

fn sum_tree(x: &[f64]) -> f64 {
    if x.len() <= BLOCK {
        let mut acc = 0.0;
        for &v in x {
            acc += v;
        }
        acc
    } else {
        let mid = x.len() / 2;
        sum_tree(&x[..mid]) + sum_tree(&x[mid..])
    }
}

fn dot_tree(x: &[f64], w: &[f64]) -> f64 {
    if x.len() <= BLOCK {
        let mut acc = 0.0;
        for (&a, &b) in x.iter().zip(w) {
            acc += a * b;
        }
        acc
    } else {
        let mid = x.len() / 2;
        dot_tree(&x[..mid], &w[..mid]) + dot_tree(&x[mid..], &w[mid..])
    }
}

/// Pairwise sum, sequential path.
pub fn pairwise_sum_seq(x: &[f64]) -> f64 {
    sum_tree(x)
}

/// Pairwise sum, parallel path. Same tree shape as [`pairwise_sum_seq`].
#[cfg(feature = "parallel")]
pub fn pairwise_sum_par(x: &[f64]) -> f64 {
    if x.len() <= PAR_CUTOFF {
        sum_tree(x)
    } else {
        let mid = x.len() / 2;
        let (a, b) = rayon::join(|| pairwise_sum_par(&x[..mid]), || pairwise_sum_par(&x[mid..]));
        a + b
    }
}

/// Pairwise sum using the default execution mode.
pub fn pairwise_sum(x: &[f64]) -> f64 {
    #[cfg(feature = "parallel")]
    {
        pairwise_sum_par(x)
    }
    #[cfg(not(feature = "parallel"))]
    {
        pairwise_sum_seq(x)
    }
}

/// Pairwise weighted sum `sum_i x[i] * w[i]`, sequential path.
pub fn pairwise_dot_seq(x: &[f64], w: &[f64]) -> f64 {
    assert_eq!(x.len(), w.len());
    dot_tree(x, w)
}

/// Pairwise weighted sum, parallel path. Same tree shape as the sequential one.
#[cfg(feature = "parallel")]
pub fn pairwise_dot_par(x: &[f64], w: &[f64]) -> f64 {
    assert_eq!(x.len(), w.len());
    fn go(x: &[f64], w: &[f64]) -> f64 {
        if x.len() <= PAR_CUTOFF {
            dot_tree(x, w)
        } else {
            let mid = x.len() / 2;
            let (a, b) = rayon::join(|| go(&x[..mid], &w[..mid]), || go(&x[mid..], &w[mid..]));
            a + b
        }
    }
    go(x, w)
}

/// Pairwise weighted sum using the default execution mode.
pub fn pairwise_dot(x: &[f64], w: &[f64]) -> f64 {
    #[cfg(feature = "parallel")]
    {
        pairwise_dot_par(x, w)
    }
    #[cfg(not(feature = "parallel"))]
    {
        pairwise_dot_seq(x, w)
    }
}

/// Maximum over a slice. Max is exact under any association order.
pub fn max(x: &[f64]) -> f64 {
    x.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Minimum over a slice.
pub fn min(x: &[f64]) -> f64 {
    x.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Maximum absolute value over a slice.
pub fn max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
}
