//! Monte Carlo dropout inference: repeated stochastic forward passes give a
//! predictive mean and a plug-in predictive variance per scored point.
//!
//! Every (window, sample) pair owns an RNG stream split off the caller's
//! generator in a fixed order, so results are reproducible no matter how
//! the passes would be scheduled. Moments come from compensated
//! accumulators; the variance is second moment minus squared mean, clamped
//! at zero against cancellation.
//!
//! When every layer's dropout probability is zero the sampling loop is
//! skipped entirely: the mean is the deterministic forward pass bit for
//! bit and the variance is exactly zero.

use alloc::vec::Vec;

use crate::dataset::WindowBatch;
use crate::ensemble::EnsembleMember;
use crate::math::KahanSum;
use crate::matrix::Matrix;
use crate::nn::{DropoutMasks, NnError, RnnModel};
use crate::rng::SplitRng;

/// Cap on retained raw samples per scored point.
pub const SAMPLE_RESERVOIR: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BayesError {
    #[error("MC dropout needs at least 2 samples, got {0}")]
    InsufficientSamples(usize),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PredictiveDistribution {
    pub mean: Vec<f64>,
    /// Plug-in predictive variance, elementwise >= 0.
    pub variance: Vec<f64>,
    pub num_samples: usize,
    /// The first retained samples, one row per sample index, one column per
    /// scored point. Sample indices are aligned across models evaluated
    /// with the same sample count, which is what the ensemble covariance
    /// estimator needs.
    pub samples: Matrix,
}

impl PredictiveDistribution {
    pub fn into_member(self) -> EnsembleMember {
        EnsembleMember {
            mean: self.mean,
            variance: self.variance,
            samples: Some(self.samples),
        }
    }
}

/// MC-dropout moments with the default sample reservoir.
pub fn mc_predict(
    model: &RnnModel,
    windows: &WindowBatch,
    num_samples: usize,
    rng: &mut SplitRng,
) -> Result<PredictiveDistribution, BayesError> {
    mc_predict_with_reservoir(model, windows, num_samples, SAMPLE_RESERVOIR, rng)
}

pub fn mc_predict_with_reservoir(
    model: &RnnModel,
    windows: &WindowBatch,
    num_samples: usize,
    reservoir: usize,
    rng: &mut SplitRng,
) -> Result<PredictiveDistribution, BayesError> {
    if num_samples < 2 {
        return Err(BayesError::InsufficientSamples(num_samples));
    }
    let n = windows.len();
    let keep = reservoir.min(num_samples);

    if model.layers.iter().all(|l| l.dropout_p == 0.0) {
        // Deterministic model: one pass per window, zero variance.
        let masks = DropoutMasks::ones(model);
        let mut mean = Vec::with_capacity(n);
        let mut samples = Matrix::zeros(keep, n);
        for t in 0..n {
            let y = model.forward(windows.input(t), &masks)?;
            mean.push(y);
            for s in 0..keep {
                samples.set(s, t, y);
            }
        }
        return Ok(PredictiveDistribution {
            mean,
            variance: alloc::vec![0.0; n],
            num_samples,
            samples,
        });
    }

    let mut mean = Vec::with_capacity(n);
    let mut variance = Vec::with_capacity(n);
    let mut samples = Matrix::zeros(keep, n);
    for t in 0..n {
        let mut window_rng = rng.split();
        let x = windows.input(t);
        let mut acc = KahanSum::default();
        let mut acc_sq = KahanSum::default();
        for s in 0..num_samples {
            let mut pass_rng = window_rng.split();
            let masks = DropoutMasks::draw(model, &mut pass_rng);
            let y = model.forward(x, &masks)?;
            acc.add(y);
            acc_sq.add(y * y);
            if s < keep {
                samples.set(s, t, y);
            }
        }
        let m = acc.value() / num_samples as f64;
        let v = acc_sq.value() / num_samples as f64 - m * m;
        mean.push(m);
        variance.push(v.max(0.0));
    }
    Ok(PredictiveDistribution {
        mean,
        variance,
        num_samples,
        samples,
    })
}
