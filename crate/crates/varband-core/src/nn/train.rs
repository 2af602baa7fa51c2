//! Batch loss, exact gradients through the layer stack, Adam, and the
//! training loop.

use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::WindowBatch;
use crate::math;
use crate::matrix::Matrix;
use crate::rng::SplitRng;

use super::{cells, CellParams, DropoutMasks, LayerTrace, ModelTrace, NnError, RnnModel};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// L2 penalty on weight matrices; biases are exempt.
    pub weight_decay: f64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm ceiling.
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 256,
            weight_decay: 1e-4,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: 5.0,
        }
    }
}

/// Mean squared error over a batch plus the weight-decay penalty.
pub fn loss(
    preds: &[f64],
    targets: &[f64],
    params: &[CellParams],
    weight_decay: f64,
) -> Result<f64, NnError> {
    if preds.is_empty() {
        return Err(NnError::EmptyBatch);
    }
    if preds.len() != targets.len() {
        return Err(NnError::ShapeMismatch("batch targets"));
    }
    let mut mse = 0.0;
    for (p, y) in preds.iter().zip(targets) {
        let e = p - y;
        mse += e * e;
    }
    mse /= preds.len() as f64;
    Ok(mse + decay_term(params, weight_decay))
}

fn decay_term(params: &[CellParams], weight_decay: f64) -> f64 {
    if weight_decay == 0.0 {
        return 0.0;
    }
    let mut acc = 0.0;
    for cell in params {
        for (slice, is_weight) in cell.parts() {
            if is_weight {
                for v in slice {
                    acc += v * v;
                }
            }
        }
    }
    weight_decay * acc
}

fn check_features(model: &RnnModel, batch: &WindowBatch) -> Result<(), NnError> {
    if batch.num_features() != model.input_dim {
        return Err(NnError::ShapeMismatch("feature count"));
    }
    Ok(())
}

/// Loss of the selected windows under fixed per-window masks, without
/// computing gradients.
pub fn batch_loss(
    model: &RnnModel,
    batch: &WindowBatch,
    indices: &[usize],
    masks: &[DropoutMasks],
    weight_decay: f64,
) -> Result<f64, NnError> {
    if indices.is_empty() {
        return Err(NnError::EmptyBatch);
    }
    if masks.len() != indices.len() {
        return Err(NnError::ShapeMismatch("masks per window"));
    }
    check_features(model, batch)?;
    let mut preds = Vec::with_capacity(indices.len());
    let mut targets = Vec::with_capacity(indices.len());
    for (&b, m) in indices.iter().zip(masks) {
        preds.push(model.forward(batch.input(b), m)?);
        targets.push(batch.target(b));
    }
    loss(&preds, &targets, &model.params, weight_decay)
}

fn last_row_matrix(dv: &[f64], rows: usize, cols: usize) -> Result<Matrix, NnError> {
    if dv.len() != cols {
        return Err(NnError::ShapeMismatch("dense-to-recurrent gradient"));
    }
    let mut m = Matrix::zeros(rows, cols);
    m.row_mut(rows - 1).copy_from_slice(dv);
    Ok(m)
}

/// Backpropagates d(prediction) through one window's trace, accumulating
/// into `grads`.
fn backward_window(
    model: &RnnModel,
    trace: &ModelTrace,
    masks: &DropoutMasks,
    d_pred: f64,
    grads: &mut [CellParams],
) -> Result<(), NnError> {
    let last_rec = model.last_recurrent();
    let mut dvec: Vec<f64> = vec![d_pred];
    let mut dseq: Option<Matrix> = None;

    for l in (0..model.layers.len()).rev() {
        let mask = &masks.layer_masks[l];
        let in_dim = model.layer_input_dim(l);
        match (&model.params[l], &trace.layers[l]) {
            (p @ CellParams::Dense { .. }, LayerTrace::Dense(tr)) => {
                dvec = cells::dense_backward(p, tr, mask, &dvec, &mut grads[l])?;
            }
            (CellParams::SimpleRnn { w_h, w_y, .. }, LayerTrace::SimpleRnn(tr, proj)) => {
                let dh_ext = if l == last_rec {
                    let pt = proj
                        .as_ref()
                        .ok_or(NnError::ShapeMismatch("projection trace"))?;
                    let dh_last =
                        cells::simple_rnn_project_backward(w_y, pt, mask, &dvec, &mut grads[l])?;
                    last_row_matrix(&dh_last, tr.h.rows(), tr.h.cols())?
                } else {
                    dseq.take()
                        .ok_or(NnError::ShapeMismatch("sequence gradient"))?
                };
                dseq = Some(cells::simple_rnn_backward(
                    w_h,
                    tr,
                    in_dim,
                    mask,
                    &dh_ext,
                    &mut grads[l],
                )?);
            }
            (p @ CellParams::Lstm { .. }, LayerTrace::Lstm(tr)) => {
                let dh_ext = if l == last_rec {
                    last_row_matrix(&dvec, tr.h.rows(), tr.h.cols())?
                } else {
                    dseq.take()
                        .ok_or(NnError::ShapeMismatch("sequence gradient"))?
                };
                dseq = Some(cells::lstm_backward(
                    p,
                    tr,
                    in_dim,
                    mask,
                    model.options.mask_cell_state,
                    &dh_ext,
                    &mut grads[l],
                )?);
            }
            (p @ CellParams::Gru { .. }, LayerTrace::Gru(tr)) => {
                let dh_ext = if l == last_rec {
                    last_row_matrix(&dvec, tr.h.rows(), tr.h.cols())?
                } else {
                    dseq.take()
                        .ok_or(NnError::ShapeMismatch("sequence gradient"))?
                };
                dseq = Some(cells::gru_backward(
                    p,
                    tr,
                    in_dim,
                    mask,
                    &dh_ext,
                    &mut grads[l],
                )?);
            }
            _ => return Err(NnError::KindMismatch("trace and params")),
        }
    }
    Ok(())
}

/// Loss and exact parameter gradients for the selected windows, each under
/// its own fixed mask draw. Gradients include the weight-decay term.
pub fn gradients(
    model: &RnnModel,
    batch: &WindowBatch,
    indices: &[usize],
    masks: &[DropoutMasks],
    weight_decay: f64,
) -> Result<(f64, Vec<CellParams>), NnError> {
    if indices.is_empty() {
        return Err(NnError::EmptyBatch);
    }
    if masks.len() != indices.len() {
        return Err(NnError::ShapeMismatch("masks per window"));
    }
    check_features(model, batch)?;
    let b_count = indices.len() as f64;
    let mut grads = model.zero_grads();
    let mut mse = 0.0;
    for (&b, m) in indices.iter().zip(masks) {
        let trace = model.trace(batch.input(b), m)?;
        let err = trace.prediction - batch.target(b);
        mse += err * err;
        backward_window(model, &trace, m, 2.0 * err / b_count, &mut grads)?;
    }
    mse /= b_count;

    let mut total = mse;
    if weight_decay != 0.0 {
        total += decay_term(&model.params, weight_decay);
        for (g_cell, p_cell) in grads.iter_mut().zip(&model.params) {
            for ((gs, gw), (ps, _)) in g_cell.parts_mut().into_iter().zip(p_cell.parts()) {
                if gw {
                    for (g, p) in gs.iter_mut().zip(ps) {
                        *g += 2.0 * weight_decay * p;
                    }
                }
            }
        }
    }
    Ok((total, grads))
}

/// Scales gradients down to the global-norm ceiling; returns the pre-clip
/// norm.
pub(crate) fn clip_global_norm(grads: &mut [CellParams], max_norm: f64) -> f64 {
    let mut sq = 0.0;
    for cell in grads.iter() {
        for (slice, _) in cell.parts() {
            for v in slice {
                sq += v * v;
            }
        }
    }
    let norm = math::sqrt(sq);
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for cell in grads.iter_mut() {
            for (slice, _) in cell.parts_mut() {
                for v in slice {
                    *v *= scale;
                }
            }
        }
    }
    norm
}

/// First/second moment estimates mirroring the parameter shapes, plus the
/// running bias-correction products.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<CellParams>,
    v: Vec<CellParams>,
    step: u64,
    beta1_pow: f64,
    beta2_pow: f64,
}

impl AdamState {
    pub fn new(model: &RnnModel) -> AdamState {
        AdamState {
            m: model.zero_grads(),
            v: model.zero_grads(),
            step: 0,
            beta1_pow: 1.0,
            beta2_pow: 1.0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update with bias correction. Assumes the same `cfg` across the
/// life of `state` (the correction products accumulate cfg's betas).
pub fn adam_step(
    params: &mut [CellParams],
    grads: &[CellParams],
    state: &mut AdamState,
    cfg: &TrainConfig,
) {
    state.step += 1;
    state.beta1_pow *= cfg.beta1;
    state.beta2_pow *= cfg.beta2;
    let bc1 = 1.0 - state.beta1_pow;
    let bc2 = 1.0 - state.beta2_pow;
    for (c, cell) in params.iter_mut().enumerate() {
        let gp = grads[c].parts();
        let mut mp = state.m[c].parts_mut();
        let mut vp = state.v[c].parts_mut();
        for (k, (ps, _)) in cell.parts_mut().into_iter().enumerate() {
            let gs = gp[k].0;
            let ms = &mut mp[k].0;
            let vs = &mut vp[k].0;
            for i in 0..ps.len() {
                let g = gs[i];
                ms[i] = cfg.beta1 * ms[i] + (1.0 - cfg.beta1) * g;
                vs[i] = cfg.beta2 * vs[i] + (1.0 - cfg.beta2) * g * g;
                let m_hat = ms[i] / bc1;
                let v_hat = vs[i] / bc2;
                ps[i] -= cfg.lr * m_hat / (math::sqrt(v_hat) + cfg.eps);
            }
        }
    }
}

/// Mini-batch training with Adam; one fresh mask draw per window per batch.
/// Returns the trained model and the mean per-epoch training loss.
pub fn train(
    mut model: RnnModel,
    data: &WindowBatch,
    cfg: &TrainConfig,
    rng: &mut SplitRng,
) -> Result<(RnnModel, Vec<f64>), NnError> {
    if data.is_empty() {
        return Err(NnError::EmptyBatch);
    }
    check_features(&model, data)?;
    let batch_size = cfg.batch_size.max(1);
    let mut state = AdamState::new(&model);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..data.len()).collect();

    for _epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(batch_size) {
            let masks: Vec<DropoutMasks> = chunk
                .iter()
                .map(|_| DropoutMasks::draw(&model, rng))
                .collect();
            let (loss, mut grads) = gradients(&model, data, chunk, &masks, cfg.weight_decay)?;
            clip_global_norm(&mut grads, cfg.clip_norm);
            adam_step(&mut model.params, &grads, &mut state, cfg);
            epoch_loss += loss;
            batches += 1;
        }
        history.push(epoch_loss / batches as f64);
    }
    Ok((model, history))
}
