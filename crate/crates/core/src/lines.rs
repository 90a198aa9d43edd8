//! Classical RK4 along grid lines for linear systems whose coefficients are
//! only known at nodes. Half-step coefficients come from four-point Lagrange
//! interpolation along the line.

use std::ops::{Add, Mul};

/// Lagrange weights for the midpoint between nodes `k` and `k + 1` of a
/// line with `n` nodes.
pub(crate) fn half_point_weights(k: usize, n: usize) -> [(usize, f64); 4] {
    debug_assert!(k + 1 < n);
    if n < 4 {
        return [(k, 0.5), (k + 1, 0.5), (k, 0.0), (k + 1, 0.0)];
    }
    if k == 0 {
        [(0, 0.3125), (1, 0.9375), (2, -0.3125), (3, 0.0625)]
    } else if k + 2 >= n {
        [
            (n - 1, 0.3125),
            (n - 2, 0.9375),
            (n - 3, -0.3125),
            (n - 4, 0.0625),
        ]
    } else {
        [
            (k - 1, -0.0625),
            (k, 0.5625),
            (k + 1, 0.5625),
            (k + 2, -0.0625),
        ]
    }
}

/// Interpolates node samples to the midpoint of segment `[k, k + 1]`.
pub(crate) fn interp_half<T>(sample: impl Fn(usize) -> T, k: usize, n: usize) -> T
where
    T: Copy + Add<Output = T> + Mul<f64, Output = T>,
{
    let w = half_point_weights(k, n);
    sample(w[0].0) * w[0].1 + sample(w[1].0) * w[1].1 + sample(w[2].0) * w[2].1 + sample(w[3].0) * w[3].1
}

/// One RK4 step from node `k` to node `k + 1` (or `k - 1` when `step < 0`).
///
/// `rhs(pos, state)` is evaluated at `pos` in {start, mid, end}, identified by
/// [`Stage`], so callers can look coefficients up on the grid.
pub(crate) fn rk4_step<S>(state: &S, step: f64, rhs: impl Fn(Stage, &S) -> S) -> S
where
    S: Clone + Add<Output = S> + Mul<f64, Output = S>,
{
    let k1 = rhs(Stage::Start, state);
    let k2 = rhs(Stage::Mid, &(state.clone() + k1.clone() * (0.5 * step)));
    let k3 = rhs(Stage::Mid, &(state.clone() + k2.clone() * (0.5 * step)));
    let k4 = rhs(Stage::End, &(state.clone() + k3.clone() * step));
    state.clone() + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (step / 6.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Stage {
    Start,
    Mid,
    End,
}
