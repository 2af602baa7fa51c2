//! Point-wise detection metrics and multi-channel aggregation.
//!
//! Segments are expanded to per-point labels before counting, so a predicted
//! segment only gets credit for the points it actually covers. Degenerate
//! ratios follow the usual conventions: precision with no positive
//! predictions is 0, recall with no true anomalies is 0, and F1 with
//! precision + recall = 0 is 0.

use alloc::string::String;
use alloc::vec;

use crate::dataset::{is_excluded, Segment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Confusion {
    pub true_pos: u64,
    pub false_pos: u64,
    pub false_neg: u64,
    pub true_neg: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.false_neg + self.true_neg
    }

    pub fn add(&mut self, other: &Confusion) {
        self.true_pos += other.true_pos;
        self.false_pos += other.false_pos;
        self.false_neg += other.false_neg;
        self.true_neg += other.true_neg;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricSet {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    /// Forecast mean squared error in normalized units; filled by the
    /// pipeline, absent for confusion-only evaluations.
    pub mse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("segment [{start}, {end}] out of range for series of length {len}")]
    SegmentOutOfRange {
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("aggregate over zero non-excluded channels")]
    AllExcluded,
}

/// Per-channel evaluation record fed to [`aggregate`].
#[derive(Debug, Clone)]
pub struct ChannelEval {
    pub id: String,
    pub confusion: Confusion,
    pub mse: Option<f64>,
}

fn mark(mask: &mut [bool], segments: &[Segment], len: usize) -> Result<(), EvalError> {
    for s in segments {
        if s.start > s.end || s.end >= len {
            return Err(EvalError::SegmentOutOfRange {
                start: s.start,
                end: s.end,
                len,
            });
        }
        for m in &mut mask[s.start..=s.end] {
            *m = true;
        }
    }
    Ok(())
}

/// Point-wise confusion of predicted vs true segments over a series of
/// `series_len` points.
pub fn confusion(
    predicted: &[Segment],
    truth: &[Segment],
    series_len: usize,
) -> Result<Confusion, EvalError> {
    let mut pred = vec![false; series_len];
    let mut real = vec![false; series_len];
    mark(&mut pred, predicted, series_len)?;
    mark(&mut real, truth, series_len)?;
    let mut c = Confusion::default();
    for (p, r) in pred.iter().zip(&real) {
        match (p, r) {
            (true, true) => c.true_pos += 1,
            (true, false) => c.false_pos += 1,
            (false, true) => c.false_neg += 1,
            (false, false) => c.true_neg += 1,
        }
    }
    Ok(c)
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn metrics(c: &Confusion) -> MetricSet {
    let precision = ratio(c.true_pos, c.true_pos + c.false_pos);
    let recall = ratio(c.true_pos, c.true_pos + c.false_neg);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    let accuracy = if c.total() == 0 {
        0.0
    } else {
        (c.true_pos + c.true_neg) as f64 / c.total() as f64
    };
    MetricSet {
        precision,
        recall,
        f1,
        accuracy,
        mse: None,
    }
}

/// Micro-averaged aggregate: confusions are summed point-wise across
/// channels and the metrics recomputed from the pooled counts; MSE is the
/// plain mean of the per-channel MSEs that are present. Channels on the
/// exclusion list are skipped.
pub fn aggregate(channels: &[ChannelEval]) -> Result<MetricSet, EvalError> {
    let mut pooled = Confusion::default();
    let mut mse_sum = 0.0;
    let mut mse_count = 0usize;
    let mut used = 0usize;
    for ch in channels {
        if is_excluded(&ch.id) {
            continue;
        }
        used += 1;
        pooled.add(&ch.confusion);
        if let Some(m) = ch.mse {
            mse_sum += m;
            mse_count += 1;
        }
    }
    if used == 0 {
        return Err(EvalError::AllExcluded);
    }
    let mut out = metrics(&pooled);
    out.mse = if mse_count > 0 {
        Some(mse_sum / mse_count as f64)
    } else {
        None
    };
    Ok(out)
}

/// Mean squared error between forecasts and observations.
pub fn mse(pred: &[f64], obs: &[f64]) -> Option<f64> {
    if pred.is_empty() || pred.len() != obs.len() {
        return None;
    }
    let mut acc = crate::math::KahanSum::default();
    for (p, o) in pred.iter().zip(obs) {
        let d = p - o;
        acc.add(d * d);
    }
    Some(acc.value() / pred.len() as f64)
}
