//! Inverse-variance combination of per-model predictive distributions.
//!
//! Each model contributes a mean and variance series. Per timestep the
//! weights are w_j = 1/sigma_j^2 (floored before inversion), the combined
//! mean is phi^-1 * sum_j w_j * mean_j with phi = sum_j w_j, and the
//! combined variance is
//!
//! ```text
//! var = phi^-1 + 2 phi^-2 * sum_{i<j} w_i w_j cov(y_i, y_j)
//! ```
//!
//! The first term is the independent-models variance; the cross term uses
//! pairwise covariances estimated from paired MC samples when every member
//! carries the same number of retained samples, and is zero otherwise.

use alloc::vec;
use alloc::vec::Vec;

use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EnsembleError {
    #[error("ensemble needs at least one member")]
    EmptySet,
    #[error("member series length {got} does not match expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("covariance needs at least 2 paired samples, got {0}")]
    InsufficientSamples(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CombineConfig {
    /// Average each member's variance over the whole series and use one
    /// weight per member instead of per-timestep weights.
    pub global_weights: bool,
    /// Floor applied to variances before inversion.
    pub var_floor: f64,
}

impl Default for CombineConfig {
    fn default() -> Self {
        CombineConfig {
            global_weights: false,
            var_floor: 1e-8,
        }
    }
}

/// One model's contribution to the ensemble.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EnsembleMember {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    /// Paired MC prediction samples, one row per sample, one column per
    /// timestep. Sample s of every member must come from the same draw
    /// index for the pairwise covariances to be meaningful.
    pub samples: Option<Matrix>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EnsembleOutput {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    /// Per-timestep member weights, one row per timestep, one column per
    /// member.
    pub weights: Matrix,
    /// Per-timestep weight normalizer phi.
    pub phi: Vec<f64>,
    /// Per-timestep covariance contribution 2 phi^-2 sum_{i<j} w_i w_j cov_ij.
    pub cross_term: Vec<f64>,
    /// Number of timesteps where a negative total variance was clamped.
    pub clamp_count: usize,
}

/// Plug-in covariance of two paired sample lists.
pub fn estimate_covariance(samples_i: &[f64], samples_j: &[f64]) -> Result<f64, EnsembleError> {
    if samples_i.len() != samples_j.len() {
        return Err(EnsembleError::LengthMismatch {
            expected: samples_i.len(),
            got: samples_j.len(),
        });
    }
    let s = samples_i.len();
    if s < 2 {
        return Err(EnsembleError::InsufficientSamples(s));
    }
    let n = s as f64;
    let mean_i = samples_i.iter().sum::<f64>() / n;
    let mean_j = samples_j.iter().sum::<f64>() / n;
    let mut acc = 0.0;
    for (a, b) in samples_i.iter().zip(samples_j) {
        acc += (a - mean_i) * (b - mean_j);
    }
    Ok(acc / n)
}

/// True when every member carries retained samples with one shared sample
/// count of at least 2 and the right number of timesteps.
fn paired_samples_usable(members: &[EnsembleMember], n: usize) -> bool {
    let mut rows = None;
    for m in members {
        match &m.samples {
            Some(s) if s.cols() == n && s.rows() >= 2 => match rows {
                None => rows = Some(s.rows()),
                Some(r) if r == s.rows() => {}
                Some(_) => return false,
            },
            _ => return false,
        }
    }
    rows.is_some()
}

pub fn combine(
    members: &[EnsembleMember],
    cfg: &CombineConfig,
) -> Result<EnsembleOutput, EnsembleError> {
    let k = members.len();
    if k == 0 {
        return Err(EnsembleError::EmptySet);
    }
    let n = members[0].mean.len();
    for m in members {
        for len in [m.mean.len(), m.variance.len()] {
            if len != n {
                return Err(EnsembleError::LengthMismatch {
                    expected: n,
                    got: len,
                });
            }
        }
    }

    let use_cov = k > 1 && paired_samples_usable(members, n);
    if k > 1 && !use_cov {
        log::warn!("ensemble members lack synchronized samples; assuming zero covariance");
    }

    // Global mode replaces each member's variance series with its average
    // before inversion, yielding one weight per member.
    let global_var: Vec<f64> = if cfg.global_weights {
        members
            .iter()
            .map(|m| m.variance.iter().sum::<f64>() / n.max(1) as f64)
            .collect()
    } else {
        Vec::new()
    };

    let mut mean = vec![0.0; n];
    let mut variance = vec![0.0; n];
    let mut weights = Matrix::zeros(n, k);
    let mut phi_out = vec![0.0; n];
    let mut cross_out = vec![0.0; n];
    let mut clamp_count = 0usize;

    let mut col_i = vec![0.0; 0];
    let mut col_j = vec![0.0; 0];

    for t in 0..n {
        let mut phi = 0.0;
        let mut num = 0.0;
        for (j, m) in members.iter().enumerate() {
            let var_j = if cfg.global_weights {
                global_var[j]
            } else {
                m.variance[t]
            };
            let w = 1.0 / var_j.max(cfg.var_floor);
            weights.set(t, j, w);
            phi += w;
            num += w * m.mean[t];
        }
        let inv_phi = 1.0 / phi;
        mean[t] = inv_phi * num;

        let mut cross = 0.0;
        if use_cov {
            for i in 0..k {
                for j in (i + 1)..k {
                    let si = members[i].samples.as_ref().unwrap();
                    let sj = members[j].samples.as_ref().unwrap();
                    si.copy_col(t, &mut col_i);
                    sj.copy_col(t, &mut col_j);
                    let cov = estimate_covariance(&col_i, &col_j)?;
                    cross += weights.get(t, i) * weights.get(t, j) * cov;
                }
            }
            cross *= 2.0 * inv_phi * inv_phi;
        }

        let mut var = inv_phi + cross;
        if var < 0.0 {
            // Noisy covariance estimates can push the total negative; keep a
            // small positive fraction of the independent term instead.
            var = inv_phi * 0.01;
            clamp_count += 1;
        }
        variance[t] = var;
        phi_out[t] = phi;
        cross_out[t] = cross;
    }
    if clamp_count > 0 {
        log::warn!("clamped negative ensemble variance at {clamp_count} timesteps");
    }

    Ok(EnsembleOutput {
        mean,
        variance,
        weights,
        phi: phi_out,
        cross_term: cross_out,
        clamp_count,
    })
}
