//! Variable-length window smoothing for model inputs.
//!
//! For every output index `t` a window grows symmetrically outward from the
//! center point. A candidate at index `c` carries the difference norm
//! `e(c) = ||z(c-1) - z(c)||_2` (element-wise absolute difference over
//! channels, reduced with the L2 norm), and is admitted while
//! `e(c) < e_th`, where `e_th = mean + sigma_mult * std` over the diff
//! norms of the points already admitted to this window (population std,
//! recomputed after every admission). Admission is unconditional while the
//! window holds fewer than `min_window` points; this seeds the threshold
//! statistics, which are undefined on an empty set. Candidates are examined
//! left then right per radius and each side stops independently at its
//! first rejection, at the series boundary, or when the window reaches
//! `max_window` points.
//!
//! Admitted points are weighted `gamma = exp(-e(c))`, the center is pinned
//! at weight 1, and the output is the L1-normalized weighted average, so
//! every smoothed value is a convex combination of window values. A left
//! candidate needs an in-range left neighbour for its diff, so index 0 only
//! ever contributes as a window center.

use alloc::vec::Vec;

use crate::math;
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SmoothConfig {
    /// Hard cap on window size in points, center included.
    pub max_window: usize,
    /// Multiplier on the diff-norm standard deviation in the threshold.
    pub sigma_mult: f64,
    /// Window size up to which admission is unconditional.
    pub min_window: usize,
}

impl Default for SmoothConfig {
    fn default() -> Self {
        SmoothConfig {
            max_window: 64,
            sigma_mult: 2.0,
            min_window: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PreprocessError {
    #[error("window threshold over an empty diff set")]
    EmptyWindow,
    #[error("input contains a non-finite value at row {row}, column {col}")]
    NonFiniteInput { row: usize, col: usize },
    #[error("smoothing config requires max_window >= min_window >= 1 and sigma_mult >= 0")]
    InvalidConfig,
}

/// Admission threshold `mean + sigma_mult * std` over a set of diff norms
/// (population standard deviation).
pub fn window_threshold(diff_norms: &[f64], sigma_mult: f64) -> Result<f64, PreprocessError> {
    if diff_norms.is_empty() {
        return Err(PreprocessError::EmptyWindow);
    }
    let n = diff_norms.len() as f64;
    let mean = diff_norms.iter().sum::<f64>() / n;
    let var = diff_norms
        .iter()
        .map(|d| (d - mean) * (d - mean))
        .sum::<f64>()
        / n;
    Ok(mean + sigma_mult * math::sqrt(var))
}

/// Weight trace for one output index.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WindowTrace {
    /// Number of points in the window, center included.
    pub len: usize,
    /// Normalization constant `1 / sum(gamma)`.
    pub alpha: f64,
    /// `(offset, gamma)` pairs sorted by offset; the center is `(0, 1.0)`.
    pub weights: Vec<(i64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SmoothTrace {
    pub windows: Vec<WindowTrace>,
}

/// Test admission of a candidate with diff norm `e` against the stats of the
/// already-admitted set. An empty set (possible only when `min_window` is 1)
/// cannot define a threshold, so growth stops there.
fn admits(diffs: &[f64], e: f64, sigma_mult: f64) -> bool {
    match window_threshold(diffs, sigma_mult) {
        Ok(th) => e < th,
        Err(_) => false,
    }
}

fn diff_norm(z: &Matrix, c: usize) -> f64 {
    let prev = z.row(c - 1);
    let cur = z.row(c);
    let mut acc = 0.0;
    for (a, b) in prev.iter().zip(cur) {
        let d = math::abs(a - b);
        acc += d * d;
    }
    math::sqrt(acc)
}

/// Smooths every channel of `z` with shared adaptive windows and returns the
/// smoothed series together with the per-index window trace.
pub fn smooth(z: &Matrix, cfg: &SmoothConfig) -> Result<(Matrix, SmoothTrace), PreprocessError> {
    if cfg.min_window == 0 || cfg.max_window < cfg.min_window || !(cfg.sigma_mult >= 0.0) {
        return Err(PreprocessError::InvalidConfig);
    }
    for r in 0..z.rows() {
        for (c, v) in z.row(r).iter().enumerate() {
            if !v.is_finite() {
                return Err(PreprocessError::NonFiniteInput { row: r, col: c });
            }
        }
    }

    let t_len = z.rows();
    let cols = z.cols();
    let mut out = Matrix::zeros(t_len, cols);
    let mut trace = SmoothTrace {
        windows: Vec::with_capacity(t_len),
    };

    for t in 0..t_len {
        let mut weights: Vec<(i64, f64)> = Vec::new();
        weights.push((0, 1.0));
        let mut diffs: Vec<f64> = Vec::new();
        let mut count = 1usize;
        let mut left_open = true;
        let mut right_open = true;
        let mut radius = 1usize;

        while (left_open || right_open) && count < cfg.max_window {
            // Left candidate: needs an in-range left neighbour for its diff.
            if left_open {
                if t >= radius + 1 {
                    let c = t - radius;
                    let e = diff_norm(z, c);
                    if count < cfg.min_window || admits(&diffs, e, cfg.sigma_mult) {
                        weights.push((-(radius as i64), math::exp(-e)));
                        diffs.push(e);
                        count += 1;
                    } else {
                        left_open = false;
                    }
                } else {
                    left_open = false;
                }
            }
            if count >= cfg.max_window {
                break;
            }
            if right_open {
                if t + radius < t_len {
                    let c = t + radius;
                    let e = diff_norm(z, c);
                    if count < cfg.min_window || admits(&diffs, e, cfg.sigma_mult) {
                        weights.push((radius as i64, math::exp(-e)));
                        diffs.push(e);
                        count += 1;
                    } else {
                        right_open = false;
                    }
                } else {
                    right_open = false;
                }
            }
            radius += 1;
        }

        weights.sort_by_key(|&(o, _)| o);
        let total: f64 = weights.iter().map(|&(_, g)| g).sum();
        let alpha = 1.0 / total;
        for col in 0..cols {
            let mut acc = 0.0;
            for &(offset, gamma) in &weights {
                let idx = (t as i64 + offset) as usize;
                acc += gamma * z.get(idx, col);
            }
            out.set(t, col, alpha * acc);
        }
        trace.windows.push(WindowTrace {
            len: count,
            alpha,
            weights,
        });
    }

    Ok((out, trace))
}
