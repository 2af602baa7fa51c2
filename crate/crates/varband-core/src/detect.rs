//! Residual scoring against the predictive band and segment flagging.
//!
//! A point is *tentative* when its absolute residual exceeds `band_k`
//! predictive standard deviations. Isolated tentative points are noise;
//! a segment is only emitted when at least `q` tentatives fall inside a
//! candidate window of `tau_max` points opened at the first one, and it is
//! then extended for as long as further tentatives keep arriving within
//! `tau_max` points of the last.

use alloc::vec::Vec;

use crate::dataset::Segment;
use crate::eval::{confusion, metrics, EvalError, MetricSet};
use crate::math;

/// Guard added to the predictive standard deviation in the score
/// denominator so a zero-variance forecast cannot divide by zero.
pub const SCORE_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DetectorConfig {
    /// Band half-width in predictive standard deviations.
    pub band_k: f64,
    /// Minimum tentative points required to confirm a segment.
    pub q: usize,
    /// Candidate window length (and maximum tentative gap) in points.
    pub tau_max: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            band_k: 3.0,
            q: 3,
            tau_max: 9,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DetectError> {
        if self.q == 0 || self.tau_max < self.q || !self.band_k.is_finite() || self.band_k < 0.0 {
            return Err(DetectError::InvalidConfig);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DetectError {
    #[error("series length {y} does not match prediction length {pred}")]
    LengthMismatch { y: usize, pred: usize },
    #[error("detector config requires q >= 1, tau_max >= q, finite band_k >= 0")]
    InvalidConfig,
    #[error("tau grid is empty")]
    EmptyGrid,
}

#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DetectionResult {
    pub scores: Vec<f64>,
    pub tentative: Vec<bool>,
    pub segments: Vec<Segment>,
    pub tau_used: usize,
}

/// Normalized deviation of each observation from the predictive mean:
/// `|y - mean| / (sqrt(var) + SCORE_EPS)`. Negative variances (which only
/// arise from upstream rounding) are clamped to zero.
pub fn score(y: &[f64], mean: &[f64], variance: &[f64]) -> Result<Vec<f64>, DetectError> {
    if y.len() != mean.len() || y.len() != variance.len() {
        return Err(DetectError::LengthMismatch {
            y: y.len(),
            pred: mean.len().min(variance.len()),
        });
    }
    Ok(y.iter()
        .zip(mean)
        .zip(variance)
        .map(|((&yi, &mi), &vi)| math::abs(yi - mi) / (math::sqrt(vi.max(0.0)) + SCORE_EPS))
        .collect())
}

pub fn tentative(scores: &[f64], band_k: f64) -> Vec<bool> {
    scores.iter().map(|&s| s > band_k).collect()
}

/// Applies the confirmation rule to a tentative mask and returns disjoint,
/// sorted anomaly segments. Each returned segment starts and ends on a
/// tentative point and contains at least `q` of them.
pub fn flag(tentative: &[bool], cfg: &DetectorConfig) -> Result<Vec<Segment>, DetectError> {
    cfg.validate()?;
    let n = tentative.len();
    let mut segments = Vec::new();
    let mut i = 0usize;
    while i < n {
        if !tentative[i] {
            i += 1;
            continue;
        }
        let window_end = (i + cfg.tau_max).min(n);
        let count = tentative[i..window_end].iter().filter(|&&t| t).count();
        if count < cfg.q {
            // Not enough support: discard the candidate window entirely.
            i = window_end;
            continue;
        }
        // Confirmed. Extend while tentatives keep arriving within tau_max
        // of the last one.
        let mut last = i;
        loop {
            let search_end = (last + cfg.tau_max + 1).min(n);
            match (last + 1..search_end).find(|&k| tentative[k]) {
                Some(k) => last = k,
                None => break,
            }
        }
        segments.push(Segment::new(i, last));
        i = last + 1;
    }
    Ok(segments)
}

/// Per-tau sweep entry produced by [`tune_tau`].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TauSweepEntry {
    pub tau: usize,
    pub f1: f64,
    pub metrics: MetricSet,
}

/// Sweeps `tau_max` over a grid and returns the smallest value attaining
/// the maximum point-wise F1 against the labelled truth, along with the
/// full sweep for reporting. Grid values below `q` are skipped (a window
/// of fewer than `q` points can never confirm a segment).
pub fn tune_tau(
    tentative_mask: &[bool],
    truth: &[Segment],
    series_len: usize,
    grid: &[usize],
    cfg: &DetectorConfig,
) -> Result<(usize, Vec<TauSweepEntry>), TuneError> {
    let mut sweep = Vec::with_capacity(grid.len());
    let mut best: Option<(usize, f64)> = None;
    for &tau in grid {
        if tau < cfg.q {
            continue;
        }
        let c = DetectorConfig {
            tau_max: tau,
            ..*cfg
        };
        let segments = flag(tentative_mask, &c).map_err(TuneError::Detect)?;
        let m = metrics(&confusion(&segments, truth, series_len).map_err(TuneError::Eval)?);
        sweep.push(TauSweepEntry {
            tau,
            f1: m.f1,
            metrics: m,
        });
        let better = match best {
            None => true,
            Some((_, bf)) => m.f1 > bf,
        };
        if better {
            best = Some((tau, m.f1));
        }
    }
    match best {
        Some((tau, _)) => Ok((tau, sweep)),
        None => Err(TuneError::Detect(DetectError::EmptyGrid)),
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TuneError {
    #[error(transparent)]
    Detect(DetectError),
    #[error(transparent)]
    Eval(EvalError),
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn score_of_perfect_forecast_is_zero() {
        let y = [1.0, -2.0, 0.5];
        let s = score(&y, &y, &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(s, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn score_matches_elementwise_formula() {
        let y = [1.0, 2.0, 3.0];
        let mean = [0.5, 2.0, 5.0];
        let var = [0.25, 1.0, 4.0];
        let s = score(&y, &mean, &var).unwrap();
        for i in 0..3 {
            let expect = (y[i] - mean[i]).abs() / (var[i].sqrt() + SCORE_EPS);
            assert!((s[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn score_single_outlier_marks_one_point() {
        let mut y = vec![0.0; 20];
        y[7] = 10.0;
        let mean = vec![0.0; 20];
        let var = vec![1.0; 20];
        let t = tentative(&score(&y, &mean, &var).unwrap(), 3.0);
        assert_eq!(t.iter().filter(|&&b| b).count(), 1);
        assert!(t[7]);
    }

    #[test]
    fn score_is_translation_equivariant() {
        let y = [1.0, 2.0, 3.0, 10.0];
        let mean = [1.1, 1.9, 3.2, 4.0];
        let var = [0.5, 0.5, 0.5, 0.5];
        let s1 = score(&y, &mean, &var).unwrap();
        let shifted_y: Vec<f64> = y.iter().map(|v| v + 100.0).collect();
        let shifted_m: Vec<f64> = mean.iter().map(|v| v + 100.0).collect();
        let s2 = score(&shifted_y, &shifted_m, &var).unwrap();
        for (a, b) in s1.iter().zip(&s2) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn isolated_tentative_is_discarded() {
        let mut t = vec![false; 30];
        t[10] = true;
        let segs = flag(&t, &DetectorConfig::default()).unwrap();
        assert!(segs.is_empty());
    }

    #[test]
    fn dense_cluster_becomes_one_segment() {
        let mut t = vec![false; 30];
        t[10] = true;
        t[11] = true;
        t[12] = true;
        let segs = flag(
            &t,
            &DetectorConfig {
                band_k: 3.0,
                q: 3,
                tau_max: 9,
            },
        )
        .unwrap();
        assert_eq!(segs, vec![Segment::new(10, 12)]);
    }

    #[test]
    fn saturated_mask_becomes_full_span() {
        let t = vec![true; 25];
        let segs = flag(&t, &DetectorConfig::default()).unwrap();
        assert_eq!(segs, vec![Segment::new(0, 24)]);
    }

    #[test]
    fn invalid_config_rejected() {
        let t = vec![false; 4];
        assert!(flag(
            &t,
            &DetectorConfig {
                band_k: 3.0,
                q: 0,
                tau_max: 5
            }
        )
        .is_err());
        assert!(flag(
            &t,
            &DetectorConfig {
                band_k: 3.0,
                q: 4,
                tau_max: 3
            }
        )
        .is_err());
    }

    #[test]
    fn tune_tau_constant_f1_returns_smallest() {
        // No tentatives at all: F1 is 0 for every tau, so the smallest grid
        // value wins.
        let t = vec![false; 50];
        let truth = [Segment::new(10, 12)];
        let grid: Vec<usize> = (3..=10).collect();
        let (tau, sweep) = tune_tau(&t, &truth, 50, &grid, &DetectorConfig::default()).unwrap();
        assert_eq!(tau, 3);
        assert!(sweep.iter().all(|e| e.f1 == 0.0));
    }

    #[test]
    fn tune_tau_returns_argmax() {
        // Tentatives spaced 4 apart: only tau >= 5 chains them into the true
        // segment, so F1 jumps at tau = 5 and stays flat after.
        let mut t = vec![false; 40];
        for &i in &[10, 14, 18, 22] {
            t[i] = true;
        }
        let truth = [Segment::new(10, 22)];
        let grid: Vec<usize> = (2..=15).collect();
        let cfg = DetectorConfig {
            band_k: 3.0,
            q: 2,
            tau_max: 9,
        };
        let (tau, sweep) = tune_tau(&t, &truth, 40, &grid, &cfg).unwrap();
        assert_eq!(tau, 5);
        let best = sweep.iter().map(|e| e.f1).fold(f64::MIN, f64::max);
        assert_eq!(sweep.iter().find(|e| e.tau == 5).unwrap().f1, best);
    }
}
