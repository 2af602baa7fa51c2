//! Forward and backward passes for the individual cell kinds.
//!
//! Recurrent forwards cache the masked concatenations and gate activations
//! their backward passes need, so one forward trace supports one exact
//! backward sweep. All hidden and cell states start at zero.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::matrix::Matrix;

use super::{CellParams, NnError};

/// `out = [x, h] ⊙ mask`.
fn masked_concat(x: &[f64], h: &[f64], mask: &[f64], out: &mut [f64]) {
    let d = x.len();
    for (i, o) in out.iter_mut().enumerate() {
        let v = if i < d { x[i] } else { h[i - d] };
        *o = v * mask[i];
    }
}

fn check_seq(x_seq: &[f64], input_dim: usize) -> Result<usize, NnError> {
    if input_dim == 0 || x_seq.is_empty() || x_seq.len() % input_dim != 0 {
        return Err(NnError::ShapeMismatch("input sequence"));
    }
    Ok(x_seq.len() / input_dim)
}

/// `a = W v + b`.
fn affine(w: &Matrix, v: &[f64], b: &[f64], a: &mut [f64]) {
    w.matvec(v, a);
    for (ai, bi) in a.iter_mut().zip(b) {
        *ai += bi;
    }
}

pub(crate) struct SimpleRnnTrace {
    pub zeta_m: Matrix,
    pub h: Matrix,
}

pub(crate) fn simple_rnn_trace(
    w_h: &Matrix,
    b_h: &[f64],
    x_seq: &[f64],
    input_dim: usize,
    mask: &[f64],
) -> Result<SimpleRnnTrace, NnError> {
    let steps = check_seq(x_seq, input_dim)?;
    let u = w_h.rows();
    let zeta = input_dim + u;
    if w_h.cols() != zeta || b_h.len() != u || mask.len() != zeta {
        return Err(NnError::ShapeMismatch("simple rnn"));
    }
    let mut zeta_m = Matrix::zeros(steps, zeta);
    let mut h = Matrix::zeros(steps, u);
    let mut h_prev = vec![0.0; u];
    let mut a = vec![0.0; u];
    for t in 0..steps {
        let x_t = &x_seq[t * input_dim..(t + 1) * input_dim];
        masked_concat(x_t, &h_prev, mask, zeta_m.row_mut(t));
        affine(w_h, zeta_m.row(t), b_h, &mut a);
        for (j, hv) in h.row_mut(t).iter_mut().enumerate() {
            *hv = math::sigmoid(a[j]);
        }
        h_prev.copy_from_slice(h.row(t));
    }
    Ok(SimpleRnnTrace { zeta_m, h })
}

/// Hidden sequence of a simple RNN cell, one row per timestep.
pub fn forward_simple_rnn(
    p: &CellParams,
    x_seq: &[f64],
    input_dim: usize,
    mask: &[f64],
) -> Result<Matrix, NnError> {
    let CellParams::SimpleRnn { w_h, b_h, .. } = p else {
        return Err(NnError::KindMismatch("simple rnn"));
    };
    Ok(simple_rnn_trace(w_h, b_h, x_seq, input_dim, mask)?.h)
}

pub(crate) struct ProjTrace {
    /// Final hidden state after the hidden-part mask.
    pub hm: Vec<f64>,
    pub y: Vec<f64>,
}

/// Output projection `y = W_y (h ⊙ m^h) + b_y` of a tail simple RNN cell.
/// `mask` is the layer's full mask; its hidden part is the last u entries.
pub(crate) fn simple_rnn_project(
    w_y: &Matrix,
    b_y: &[f64],
    h_last: &[f64],
    mask: &[f64],
) -> Result<ProjTrace, NnError> {
    let u = h_last.len();
    if w_y.rows() != u || w_y.cols() != u || b_y.len() != u || mask.len() < u {
        return Err(NnError::ShapeMismatch("rnn projection"));
    }
    let mask_h = &mask[mask.len() - u..];
    let hm: Vec<f64> = h_last.iter().zip(mask_h).map(|(h, m)| h * m).collect();
    let mut y = vec![0.0; u];
    affine(w_y, &hm, b_y, &mut y);
    Ok(ProjTrace { hm, y })
}

pub(crate) fn simple_rnn_backward(
    w_h: &Matrix,
    trace: &SimpleRnnTrace,
    input_dim: usize,
    mask: &[f64],
    dh_ext: &Matrix,
    grads: &mut CellParams,
) -> Result<Matrix, NnError> {
    let CellParams::SimpleRnn {
        w_h: g_w_h,
        b_h: g_b_h,
        ..
    } = grads
    else {
        return Err(NnError::KindMismatch("simple rnn"));
    };
    let steps = trace.h.rows();
    let u = trace.h.cols();
    let mut dx = Matrix::zeros(steps, input_dim);
    let mut carry = vec![0.0; u];
    let mut da = vec![0.0; u];
    let mut dzeta = vec![0.0; input_dim + u];
    for t in (0..steps).rev() {
        let h_t = trace.h.row(t);
        for j in 0..u {
            let dh = dh_ext.get(t, j) + carry[j];
            da[j] = dh * h_t[j] * (1.0 - h_t[j]);
        }
        g_w_h.add_outer(&da, trace.zeta_m.row(t));
        for (g, d) in g_b_h.iter_mut().zip(&da) {
            *g += d;
        }
        dzeta.fill(0.0);
        w_h.matvec_transpose_add(&da, &mut dzeta);
        for (dz, m) in dzeta.iter_mut().zip(mask) {
            *dz *= m;
        }
        dx.row_mut(t).copy_from_slice(&dzeta[..input_dim]);
        carry.copy_from_slice(&dzeta[input_dim..]);
    }
    Ok(dx)
}

/// Gradient of the tail projection; returns d(h_last).
pub(crate) fn simple_rnn_project_backward(
    w_y: &Matrix,
    trace: &ProjTrace,
    mask: &[f64],
    dy: &[f64],
    grads: &mut CellParams,
) -> Result<Vec<f64>, NnError> {
    let CellParams::SimpleRnn {
        w_y: g_w_y,
        b_y: g_b_y,
        ..
    } = grads
    else {
        return Err(NnError::KindMismatch("simple rnn"));
    };
    let u = trace.hm.len();
    let mask_h = &mask[mask.len() - u..];
    g_w_y.add_outer(dy, &trace.hm);
    for (g, d) in g_b_y.iter_mut().zip(dy) {
        *g += d;
    }
    let mut dh = vec![0.0; u];
    w_y.matvec_transpose_add(dy, &mut dh);
    for (d, m) in dh.iter_mut().zip(mask_h) {
        *d *= m;
    }
    Ok(dh)
}

pub(crate) struct LstmTrace {
    pub zeta_m: Matrix,
    pub i: Matrix,
    pub f: Matrix,
    pub o: Matrix,
    /// Candidate cell value tanh(W_c (ζ ⊙ m) + b_c).
    pub g: Matrix,
    pub c: Matrix,
    pub tanh_c: Matrix,
    pub h: Matrix,
}

pub(crate) fn lstm_trace(
    p: &CellParams,
    x_seq: &[f64],
    input_dim: usize,
    mask: &[f64],
    mask_cell_state: bool,
) -> Result<LstmTrace, NnError> {
    let CellParams::Lstm {
        w_i,
        w_f,
        w_o,
        w_c,
        b_i,
        b_f,
        b_o,
        b_c,
    } = p
    else {
        return Err(NnError::KindMismatch("lstm"));
    };
    let steps = check_seq(x_seq, input_dim)?;
    let u = w_i.rows();
    let zeta = input_dim + u;
    for w in [w_i, w_f, w_o, w_c] {
        if w.rows() != u || w.cols() != zeta {
            return Err(NnError::ShapeMismatch("lstm"));
        }
    }
    if [b_i, b_f, b_o, b_c].iter().any(|b| b.len() != u) || mask.len() != zeta {
        return Err(NnError::ShapeMismatch("lstm"));
    }

    let mut tr = LstmTrace {
        zeta_m: Matrix::zeros(steps, zeta),
        i: Matrix::zeros(steps, u),
        f: Matrix::zeros(steps, u),
        o: Matrix::zeros(steps, u),
        g: Matrix::zeros(steps, u),
        c: Matrix::zeros(steps, u),
        tanh_c: Matrix::zeros(steps, u),
        h: Matrix::zeros(steps, u),
    };
    let mask_h = &mask[input_dim..];
    let mut h_prev = vec![0.0; u];
    let mut c_prev = vec![0.0; u];
    let mut a = vec![0.0; u];
    for t in 0..steps {
        let x_t = &x_seq[t * input_dim..(t + 1) * input_dim];
        masked_concat(x_t, &h_prev, mask, tr.zeta_m.row_mut(t));
        let zm = tr.zeta_m.row(t).to_vec();

        affine(w_i, &zm, b_i, &mut a);
        for (j, v) in tr.i.row_mut(t).iter_mut().enumerate() {
            *v = math::sigmoid(a[j]);
        }
        affine(w_f, &zm, b_f, &mut a);
        for (j, v) in tr.f.row_mut(t).iter_mut().enumerate() {
            *v = math::sigmoid(a[j]);
        }
        affine(w_o, &zm, b_o, &mut a);
        for (j, v) in tr.o.row_mut(t).iter_mut().enumerate() {
            *v = math::sigmoid(a[j]);
        }
        affine(w_c, &zm, b_c, &mut a);
        for (j, v) in tr.g.row_mut(t).iter_mut().enumerate() {
            *v = math::tanh(a[j]);
        }
        for j in 0..u {
            let s = if mask_cell_state { mask_h[j] } else { 1.0 };
            let c = tr.f.get(t, j) * c_prev[j] * s + tr.i.get(t, j) * tr.g.get(t, j);
            tr.c.set(t, j, c);
            tr.tanh_c.set(t, j, math::tanh(c));
            tr.h.set(t, j, tr.o.get(t, j) * tr.tanh_c.get(t, j));
        }
        h_prev.copy_from_slice(tr.h.row(t));
        c_prev.copy_from_slice(tr.c.row(t));
    }
    Ok(tr)
}

/// Hidden sequence of an LSTM cell.
pub fn forward_lstm(
    p: &CellParams,
    x_seq: &[f64],
    input_dim: usize,
    mask: &[f64],
    mask_cell_state: bool,
) -> Result<Matrix, NnError> {
    Ok(lstm_trace(p, x_seq, input_dim, mask, mask_cell_state)?.h)
}

pub(crate) fn lstm_backward(
    p: &CellParams,
    trace: &LstmTrace,
    input_dim: usize,
    mask: &[f64],
    mask_cell_state: bool,
    dh_ext: &Matrix,
    grads: &mut CellParams,
) -> Result<Matrix, NnError> {
    let CellParams::Lstm {
        w_i, w_f, w_o, w_c, ..
    } = p
    else {
        return Err(NnError::KindMismatch("lstm"));
    };
    let CellParams::Lstm {
        w_i: g_w_i,
        w_f: g_w_f,
        w_o: g_w_o,
        w_c: g_w_c,
        b_i: g_b_i,
        b_f: g_b_f,
        b_o: g_b_o,
        b_c: g_b_c,
    } = grads
    else {
        return Err(NnError::KindMismatch("lstm"));
    };
    let steps = trace.h.rows();
    let u = trace.h.cols();
    let mask_h = &mask[input_dim..];
    let mut dx = Matrix::zeros(steps, input_dim);
    let mut dh_carry = vec![0.0; u];
    let mut dc_carry = vec![0.0; u];
    let (mut da_i, mut da_f, mut da_o, mut da_g) =
        (vec![0.0; u], vec![0.0; u], vec![0.0; u], vec![0.0; u]);
    let mut dzeta = vec![0.0; input_dim + u];
    for t in (0..steps).rev() {
        for j in 0..u {
            let dh = dh_ext.get(t, j) + dh_carry[j];
            let (i, f, o, g) = (
                trace.i.get(t, j),
                trace.f.get(t, j),
                trace.o.get(t, j),
                trace.g.get(t, j),
            );
            let tc = trace.tanh_c.get(t, j);
            let s = if mask_cell_state { mask_h[j] } else { 1.0 };
            let c_prev = if t == 0 { 0.0 } else { trace.c.get(t - 1, j) };

            let do_ = dh * tc;
            let dc = dc_carry[j] + dh * o * (1.0 - tc * tc);
            let df = dc * c_prev * s;
            let di = dc * g;
            let dg = dc * i;
            dc_carry[j] = dc * f * s;

            da_i[j] = di * i * (1.0 - i);
            da_f[j] = df * f * (1.0 - f);
            da_o[j] = do_ * o * (1.0 - o);
            da_g[j] = dg * (1.0 - g * g);
        }
        let zm = trace.zeta_m.row(t);
        g_w_i.add_outer(&da_i, zm);
        g_w_f.add_outer(&da_f, zm);
        g_w_o.add_outer(&da_o, zm);
        g_w_c.add_outer(&da_g, zm);
        for j in 0..u {
            g_b_i[j] += da_i[j];
            g_b_f[j] += da_f[j];
            g_b_o[j] += da_o[j];
            g_b_c[j] += da_g[j];
        }
        dzeta.fill(0.0);
        w_i.matvec_transpose_add(&da_i, &mut dzeta);
        w_f.matvec_transpose_add(&da_f, &mut dzeta);
        w_o.matvec_transpose_add(&da_o, &mut dzeta);
        w_c.matvec_transpose_add(&da_g, &mut dzeta);
        for (dz, m) in dzeta.iter_mut().zip(mask) {
            *dz *= m;
        }
        dx.row_mut(t).copy_from_slice(&dzeta[..input_dim]);
        dh_carry.copy_from_slice(&dzeta[input_dim..]);
    }
    Ok(dx)
}

pub(crate) struct GruTrace {
    pub zeta_m: Matrix,
    pub z: Matrix,
    pub r: Matrix,
    pub hhat: Matrix,
    /// Previous hidden state under the hidden-part mask.
    pub hm_prev: Matrix,
    /// Reset-gated masked hidden state r ⊙ (h_{t-1} ⊙ m^h).
    pub u_vec: Matrix,
    pub h: Matrix,
}

pub(crate) fn gru_trace(
    p: &CellParams,
    x_seq: &[f64],
    input_dim: usize,
    mask: &[f64],
) -> Result<GruTrace, NnError> {
    let CellParams::Gru {
        w_z,
        w_r,
        w_h,
        u_h,
        b_z,
        b_r,
        b_h,
    } = p
    else {
        return Err(NnError::KindMismatch("gru"));
    };
    let steps = check_seq(x_seq, input_dim)?;
    let u = w_z.rows();
    let zeta = input_dim + u;
    for w in [w_z, w_r, w_h] {
        if w.rows() != u || w.cols() != zeta {
            return Err(NnError::ShapeMismatch("gru"));
        }
    }
    if u_h.rows() != u || u_h.cols() != u || mask.len() != zeta {
        return Err(NnError::ShapeMismatch("gru"));
    }
    if [b_z, b_r, b_h].iter().any(|b| b.len() != u) {
        return Err(NnError::ShapeMismatch("gru"));
    }

    let mut tr = GruTrace {
        zeta_m: Matrix::zeros(steps, zeta),
        z: Matrix::zeros(steps, u),
        r: Matrix::zeros(steps, u),
        hhat: Matrix::zeros(steps, u),
        hm_prev: Matrix::zeros(steps, u),
        u_vec: Matrix::zeros(steps, u),
        h: Matrix::zeros(steps, u),
    };
    let mask_h = &mask[input_dim..];
    let mut h_prev = vec![0.0; u];
    let mut a = vec![0.0; u];
    let mut ru = vec![0.0; u];
    for t in 0..steps {
        let x_t = &x_seq[t * input_dim..(t + 1) * input_dim];
        masked_concat(x_t, &h_prev, mask, tr.zeta_m.row_mut(t));
        let zm = tr.zeta_m.row(t).to_vec();
        for j in 0..u {
            tr.hm_prev.set(t, j, h_prev[j] * mask_h[j]);
        }

        affine(w_z, &zm, b_z, &mut a);
        for (j, v) in tr.z.row_mut(t).iter_mut().enumerate() {
            *v = math::sigmoid(a[j]);
        }
        affine(w_r, &zm, b_r, &mut a);
        for (j, v) in tr.r.row_mut(t).iter_mut().enumerate() {
            *v = math::sigmoid(a[j]);
        }
        for j in 0..u {
            let uv = tr.r.get(t, j) * tr.hm_prev.get(t, j);
            tr.u_vec.set(t, j, uv);
            ru[j] = uv;
        }
        // hhat = tanh(W_h (ζ ⊙ m) + U_h (r ⊙ h_prev ⊙ m^h) + b_h)
        affine(w_h, &zm, b_h, &mut a);
        let mut extra = vec![0.0; u];
        u_h.matvec(&ru, &mut extra);
        for (j, v) in tr.hhat.row_mut(t).iter_mut().enumerate() {
            *v = math::tanh(a[j] + extra[j]);
        }
        for j in 0..u {
            let z = tr.z.get(t, j);
            let h = z * tr.hhat.get(t, j) * mask_h[j] + (1.0 - z) * tr.hm_prev.get(t, j);
            tr.h.set(t, j, h);
        }
        h_prev.copy_from_slice(tr.h.row(t));
    }
    Ok(tr)
}

/// Hidden sequence of a GRU cell.
pub fn forward_gru(
    p: &CellParams,
    x_seq: &[f64],
    input_dim: usize,
    mask: &[f64],
) -> Result<Matrix, NnError> {
    Ok(gru_trace(p, x_seq, input_dim, mask)?.h)
}

pub(crate) fn gru_backward(
    p: &CellParams,
    trace: &GruTrace,
    input_dim: usize,
    mask: &[f64],
    dh_ext: &Matrix,
    grads: &mut CellParams,
) -> Result<Matrix, NnError> {
    let CellParams::Gru {
        w_z, w_r, w_h, u_h, ..
    } = p
    else {
        return Err(NnError::KindMismatch("gru"));
    };
    let CellParams::Gru {
        w_z: g_w_z,
        w_r: g_w_r,
        w_h: g_w_h,
        u_h: g_u_h,
        b_z: g_b_z,
        b_r: g_b_r,
        b_h: g_b_h,
    } = grads
    else {
        return Err(NnError::KindMismatch("gru"));
    };
    let steps = trace.h.rows();
    let u = trace.h.cols();
    let mask_h = &mask[input_dim..];
    let mut dx = Matrix::zeros(steps, input_dim);
    let mut dh_carry = vec![0.0; u];
    let (mut da_z, mut da_r, mut dy_pre, mut dhm) =
        (vec![0.0; u], vec![0.0; u], vec![0.0; u], vec![0.0; u]);
    let mut du = vec![0.0; u];
    let mut dzeta = vec![0.0; input_dim + u];
    for t in (0..steps).rev() {
        for j in 0..u {
            let dh = dh_ext.get(t, j) + dh_carry[j];
            let z = trace.z.get(t, j);
            let hhat = trace.hhat.get(t, j);
            let hm = trace.hm_prev.get(t, j);

            let dz = dh * (hhat * mask_h[j] - hm);
            let dhhat = dh * z * mask_h[j];
            dhm[j] = dh * (1.0 - z);
            dy_pre[j] = dhhat * (1.0 - hhat * hhat);
            da_z[j] = dz * z * (1.0 - z);
        }
        // Reset-gate path: dy_pre flows through U_h into r and hm_prev.
        du.fill(0.0);
        u_h.matvec_transpose_add(&dy_pre, &mut du);
        for j in 0..u {
            let r = trace.r.get(t, j);
            let dr = du[j] * trace.hm_prev.get(t, j);
            dhm[j] += du[j] * r;
            da_r[j] = dr * r * (1.0 - r);
        }
        let zm = trace.zeta_m.row(t);
        g_w_z.add_outer(&da_z, zm);
        g_w_r.add_outer(&da_r, zm);
        g_w_h.add_outer(&dy_pre, zm);
        g_u_h.add_outer(&dy_pre, trace.u_vec.row(t));
        for j in 0..u {
            g_b_z[j] += da_z[j];
            g_b_r[j] += da_r[j];
            g_b_h[j] += dy_pre[j];
        }
        dzeta.fill(0.0);
        w_z.matvec_transpose_add(&da_z, &mut dzeta);
        w_r.matvec_transpose_add(&da_r, &mut dzeta);
        w_h.matvec_transpose_add(&dy_pre, &mut dzeta);
        for (dz, m) in dzeta.iter_mut().zip(mask) {
            *dz *= m;
        }
        dx.row_mut(t).copy_from_slice(&dzeta[..input_dim]);
        for j in 0..u {
            dh_carry[j] = dzeta[input_dim + j] + dhm[j] * mask_h[j];
        }
    }
    Ok(dx)
}

pub(crate) struct DenseTrace {
    /// Masked input x ⊙ m.
    pub xm: Vec<f64>,
    pub out: Vec<f64>,
    pub tanh_act: bool,
}

pub(crate) fn dense_trace(
    w: &Matrix,
    b: &[f64],
    x: &[f64],
    mask: &[f64],
    tanh_act: bool,
) -> Result<DenseTrace, NnError> {
    if w.cols() != x.len() || w.rows() != b.len() || mask.len() != x.len() {
        return Err(NnError::ShapeMismatch("dense"));
    }
    let xm: Vec<f64> = x.iter().zip(mask).map(|(v, m)| v * m).collect();
    let mut out = vec![0.0; b.len()];
    affine(w, &xm, b, &mut out);
    if tanh_act {
        for v in &mut out {
            *v = math::tanh(*v);
        }
    }
    Ok(DenseTrace { xm, out, tanh_act })
}

/// Dense layer `y = act(W (x ⊙ m) + b)`; tanh on hidden layers, identity on
/// the output layer.
pub fn forward_dense(
    p: &CellParams,
    x: &[f64],
    mask: &[f64],
    tanh_act: bool,
) -> Result<Vec<f64>, NnError> {
    let CellParams::Dense { w, b } = p else {
        return Err(NnError::KindMismatch("dense"));
    };
    Ok(dense_trace(w, b, x, mask, tanh_act)?.out)
}

pub(crate) fn dense_backward(
    p: &CellParams,
    trace: &DenseTrace,
    mask: &[f64],
    dy: &[f64],
    grads: &mut CellParams,
) -> Result<Vec<f64>, NnError> {
    let CellParams::Dense { w, .. } = p else {
        return Err(NnError::KindMismatch("dense"));
    };
    let CellParams::Dense { w: g_w, b: g_b } = grads else {
        return Err(NnError::KindMismatch("dense"));
    };
    let da: Vec<f64> = if trace.tanh_act {
        dy.iter()
            .zip(&trace.out)
            .map(|(d, o)| d * (1.0 - o * o))
            .collect()
    } else {
        dy.to_vec()
    };
    g_w.add_outer(&da, &trace.xm);
    for (g, d) in g_b.iter_mut().zip(&da) {
        *g += d;
    }
    let mut dx = vec![0.0; trace.xm.len()];
    w.matvec_transpose_add(&da, &mut dx);
    for (d, m) in dx.iter_mut().zip(mask) {
        *d *= m;
    }
    Ok(dx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitRng;

    fn mat(rows: usize, cols: usize, vals: &[f64]) -> Matrix {
        Matrix::from_vec(rows, cols, vals.to_vec()).unwrap()
    }

    fn rand_mat(rows: usize, cols: usize, rng: &mut SplitRng) -> Matrix {
        let mut m = Matrix::zeros(rows, cols);
        for v in m.data_mut() {
            *v = rng.uniform_range(-0.7, 0.7);
        }
        m
    }

    fn rand_vec(len: usize, rng: &mut SplitRng) -> Vec<f64> {
        (0..len).map(|_| rng.uniform_range(-0.5, 0.5)).collect()
    }

    #[test]
    fn simple_rnn_zero_params_give_half() {
        let p = CellParams::SimpleRnn {
            w_h: Matrix::zeros(2, 5),
            b_h: vec![0.0; 2],
            w_y: Matrix::zeros(2, 2),
            b_y: vec![0.0; 2],
        };
        let mask = vec![1.0; 5];
        let h = forward_simple_rnn(&p, &[0.3, -0.1, 0.9, 0.0, 0.2, 0.5], 3, &mask).unwrap();
        for t in 0..2 {
            for j in 0..2 {
                assert_eq!(h.get(t, j), 0.5);
            }
        }
    }

    #[test]
    fn simple_rnn_all_zero_mask_severs_input() {
        let mut rng = SplitRng::seed_from(10);
        let p = CellParams::SimpleRnn {
            w_h: rand_mat(2, 5, &mut rng),
            b_h: vec![0.4, -0.2],
            w_y: Matrix::zeros(2, 2),
            b_y: vec![0.0; 2],
        };
        let mask = vec![0.0; 5];
        let h = forward_simple_rnn(&p, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 3, &mask).unwrap();
        for t in 0..2 {
            assert!((h.get(t, 0) - math::sigmoid(0.4)).abs() < 1e-15);
            assert!((h.get(t, 1) - math::sigmoid(-0.2)).abs() < 1e-15);
        }
    }

    #[test]
    fn simple_rnn_two_step_scalar_recurrence() {
        let p = CellParams::SimpleRnn {
            w_h: mat(1, 2, &[0.5, -0.3]),
            b_h: vec![0.2],
            w_y: Matrix::zeros(1, 1),
            b_y: vec![0.0],
        };
        let h = forward_simple_rnn(&p, &[0.7, -0.4], 1, &[1.0, 1.0]).unwrap();
        let h1 = math::sigmoid(0.5 * 0.7 + 0.2);
        let h2 = math::sigmoid(0.5 * (-0.4) - 0.3 * h1 + 0.2);
        assert!((h.get(0, 0) - h1).abs() < 1e-12);
        assert!((h.get(1, 0) - h2).abs() < 1e-12);
    }

    /// Plain per-index transcription of the simple RNN equations, no shared
    /// matvec machinery.
    fn naive_simple_rnn(w_h: &Matrix, b_h: &[f64], x: &[f64], d: usize) -> Vec<Vec<f64>> {
        let u = b_h.len();
        let steps = x.len() / d;
        let mut hs: Vec<Vec<f64>> = Vec::new();
        let mut prev = vec![0.0; u];
        for t in 0..steps {
            let mut h = vec![0.0; u];
            for j in 0..u {
                let mut a = b_h[j];
                for k in 0..d {
                    a += w_h.get(j, k) * x[t * d + k];
                }
                for k in 0..u {
                    a += w_h.get(j, d + k) * prev[k];
                }
                h[j] = 1.0 / (1.0 + (-a).exp());
            }
            hs.push(h.clone());
            prev = h;
        }
        hs
    }

    #[test]
    fn simple_rnn_matches_textbook_form_without_dropout() {
        for seed in [1u64, 2, 3] {
            let mut rng = SplitRng::seed_from(seed);
            let (d, u, steps) = (2, 3, 5);
            let w_h = rand_mat(u, d + u, &mut rng);
            let b_h = rand_vec(u, &mut rng);
            let x = rand_vec(steps * d, &mut rng);
            let p = CellParams::SimpleRnn {
                w_h: w_h.clone(),
                b_h: b_h.clone(),
                w_y: Matrix::zeros(u, u),
                b_y: vec![0.0; u],
            };
            let h = forward_simple_rnn(&p, &x, d, &vec![1.0; d + u]).unwrap();
            let naive = naive_simple_rnn(&w_h, &b_h, &x, d);
            for t in 0..steps {
                for j in 0..u {
                    assert!((h.get(t, j) - naive[t][j]).abs() < 1e-12);
                }
            }
        }
    }

    fn zero_lstm(d: usize, u: usize) -> CellParams {
        CellParams::Lstm {
            w_i: Matrix::zeros(u, d + u),
            w_f: Matrix::zeros(u, d + u),
            w_o: Matrix::zeros(u, d + u),
            w_c: Matrix::zeros(u, d + u),
            b_i: vec![0.0; u],
            b_f: vec![0.0; u],
            b_o: vec![0.0; u],
            b_c: vec![0.0; u],
        }
    }

    #[test]
    fn lstm_zero_params_stay_at_zero() {
        let p = zero_lstm(2, 3);
        let h = forward_lstm(&p, &[0.5, -0.5, 1.0, 2.0], 2, &vec![1.0; 5], true).unwrap();
        for t in 0..2 {
            for j in 0..3 {
                assert_eq!(h.get(t, j), 0.0);
            }
        }
    }

    #[test]
    fn lstm_open_input_gate_passes_candidate() {
        let CellParams::Lstm {
            mut b_i,
            mut b_c,
            w_i,
            w_f,
            w_o,
            w_c,
            b_f,
            b_o,
        } = zero_lstm(1, 1)
        else {
            unreachable!()
        };
        b_i[0] = 20.0;
        b_c[0] = 0.7;
        let p = CellParams::Lstm {
            w_i,
            w_f,
            w_o,
            w_c,
            b_i,
            b_f,
            b_o,
            b_c,
        };
        let h = forward_lstm(&p, &[0.0], 1, &[1.0, 1.0], true).unwrap();
        let i = math::sigmoid(20.0);
        let c1 = i * math::tanh(0.7);
        let expect = 0.5 * math::tanh(c1);
        assert!((h.get(0, 0) - expect).abs() < 1e-12);
    }

    /// Direct transcription of the gate equations with the cell-state mask.
    fn naive_lstm(
        p: &CellParams,
        x: &[f64],
        d: usize,
        mask: &[f64],
        mask_cell_state: bool,
    ) -> Vec<Vec<f64>> {
        let CellParams::Lstm {
            w_i,
            w_f,
            w_o,
            w_c,
            b_i,
            b_f,
            b_o,
            b_c,
        } = p
        else {
            unreachable!()
        };
        let u = b_i.len();
        let steps = x.len() / d;
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let gate = |w: &Matrix, b: &[f64], zm: &[f64], j: usize| {
            b[j] + (0..d + u).map(|k| w.get(j, k) * zm[k]).sum::<f64>()
        };
        let mut hs = Vec::new();
        let (mut h, mut c) = (vec![0.0; u], vec![0.0; u]);
        for t in 0..steps {
            let zm: Vec<f64> = (0..d + u)
                .map(|k| if k < d { x[t * d + k] } else { h[k - d] } * mask[k])
                .collect();
            let mut hn = vec![0.0; u];
            let mut cn = vec![0.0; u];
            for j in 0..u {
                let i = sig(gate(w_i, b_i, &zm, j));
                let f = sig(gate(w_f, b_f, &zm, j));
                let o = sig(gate(w_o, b_o, &zm, j));
                let g = gate(w_c, b_c, &zm, j).tanh();
                let s = if mask_cell_state { mask[d + j] } else { 1.0 };
                cn[j] = f * c[j] * s + i * g;
                hn[j] = o * cn[j].tanh();
            }
            h = hn.clone();
            c = cn;
            hs.push(hn);
        }
        hs
    }

    #[test]
    fn lstm_matches_textbook_form_without_dropout() {
        for seed in [4u64, 5, 6] {
            let mut rng = SplitRng::seed_from(seed);
            let (d, u, steps) = (2, 3, 5);
            let p = CellParams::Lstm {
                w_i: rand_mat(u, d + u, &mut rng),
                w_f: rand_mat(u, d + u, &mut rng),
                w_o: rand_mat(u, d + u, &mut rng),
                w_c: rand_mat(u, d + u, &mut rng),
                b_i: rand_vec(u, &mut rng),
                b_f: rand_vec(u, &mut rng),
                b_o: rand_vec(u, &mut rng),
                b_c: rand_vec(u, &mut rng),
            };
            let x = rand_vec(steps * d, &mut rng);
            let mask = vec![1.0; d + u];
            let h = forward_lstm(&p, &x, d, &mask, true).unwrap();
            let naive = naive_lstm(&p, &x, d, &mask, true);
            for t in 0..steps {
                for j in 0..u {
                    assert!((h.get(t, j) - naive[t][j]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn lstm_cell_state_mask_changes_the_carry() {
        // With a dropped hidden unit the masked carry forgets that unit's
        // cell state; flipping the option must change the output.
        let mut rng = SplitRng::seed_from(7);
        let (d, u) = (1, 2);
        let p = CellParams::Lstm {
            w_i: rand_mat(u, d + u, &mut rng),
            w_f: rand_mat(u, d + u, &mut rng),
            w_o: rand_mat(u, d + u, &mut rng),
            w_c: rand_mat(u, d + u, &mut rng),
            b_i: rand_vec(u, &mut rng),
            b_f: vec![1.0; u],
            b_o: rand_vec(u, &mut rng),
            b_c: rand_vec(u, &mut rng),
        };
        let x = rand_vec(6, &mut rng);
        let mask = vec![1.0, 0.0, 1.0];
        let with = forward_lstm(&p, &x, d, &mask, true).unwrap();
        let without = forward_lstm(&p, &x, d, &mask, false).unwrap();
        // The dropped unit's own carry is what changes; the mask also severs
        // it from everything downstream, so look at unit 0 directly.
        let m = (0..6)
            .map(|t| (with.get(t, 0) - without.get(t, 0)).abs())
            .fold(0.0, f64::max);
        assert!(m > 1e-6, "cell-state mask had no effect ({m})");
        // Either way the naive transcription agrees.
        let naive = naive_lstm(&p, &x, d, &mask, false);
        for t in 0..6 {
            for j in 0..u {
                assert!((without.get(t, j) - naive[t][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gru_zero_params_stay_at_zero() {
        let p = CellParams::Gru {
            w_z: Matrix::zeros(3, 5),
            w_r: Matrix::zeros(3, 5),
            w_h: Matrix::zeros(3, 5),
            u_h: Matrix::zeros(3, 3),
            b_z: vec![0.0; 3],
            b_r: vec![0.0; 3],
            b_h: vec![0.0; 3],
        };
        let h = forward_gru(&p, &[1.0, -1.0, 0.5, 0.25], 2, &vec![1.0; 5]).unwrap();
        for t in 0..2 {
            for j in 0..3 {
                assert_eq!(h.get(t, j), 0.0);
            }
        }
    }

    #[test]
    fn gru_single_step_scalar_arithmetic() {
        let p = CellParams::Gru {
            w_z: mat(1, 2, &[0.4, 0.1]),
            w_r: mat(1, 2, &[-0.6, 0.2]),
            w_h: mat(1, 2, &[0.8, -0.5]),
            u_h: mat(1, 1, &[0.9]),
            b_z: vec![0.1],
            b_r: vec![-0.2],
            b_h: vec![0.3],
        };
        let h = forward_gru(&p, &[0.6], 1, &[1.0, 1.0]).unwrap();
        // h0 = 0 so the reset path and the (1-z) term both vanish.
        let z = math::sigmoid(0.4 * 0.6 + 0.1);
        let hhat = math::tanh(0.8 * 0.6 + 0.3);
        assert!((h.get(0, 0) - z * hhat).abs() < 1e-12);
    }

    #[test]
    fn gru_saturated_update_gate_tracks_candidate() {
        let mut rng = SplitRng::seed_from(8);
        let (d, u) = (2, 2);
        let p = CellParams::Gru {
            w_z: Matrix::zeros(u, d + u),
            w_r: rand_mat(u, d + u, &mut rng),
            w_h: rand_mat(u, d + u, &mut rng),
            u_h: rand_mat(u, u, &mut rng),
            b_z: vec![30.0; u],
            b_r: rand_vec(u, &mut rng),
            b_h: rand_vec(u, &mut rng),
        };
        let x = rand_vec(4 * d, &mut rng);
        let tr = gru_trace(&p, &x, d, &vec![1.0; d + u]).unwrap();
        for t in 0..4 {
            for j in 0..u {
                assert!((tr.h.get(t, j) - tr.hhat.get(t, j)).abs() < 1e-9);
            }
        }
    }

    /// Direct transcription of the GRU equations with mask placement as in
    /// the forward implementation.
    fn naive_gru(p: &CellParams, x: &[f64], d: usize, mask: &[f64]) -> Vec<Vec<f64>> {
        let CellParams::Gru {
            w_z,
            w_r,
            w_h,
            u_h,
            b_z,
            b_r,
            b_h,
        } = p
        else {
            unreachable!()
        };
        let u = b_z.len();
        let steps = x.len() / d;
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let mut hs = Vec::new();
        let mut h = vec![0.0; u];
        for t in 0..steps {
            let zm: Vec<f64> = (0..d + u)
                .map(|k| if k < d { x[t * d + k] } else { h[k - d] } * mask[k])
                .collect();
            let mut hn = vec![0.0; u];
            for j in 0..u {
                let lin = |w: &Matrix, b: &[f64]| {
                    b[j] + (0..d + u).map(|k| w.get(j, k) * zm[k]).sum::<f64>()
                };
                let z = sig(lin(w_z, b_z));
                let mut pre = lin(w_h, b_h);
                for k in 0..u {
                    pre += u_h.get(j, k)
                        * (sig({
                            let mut v = b_r[k];
                            for q in 0..d + u {
                                v += w_r.get(k, q) * zm[q];
                            }
                            v
                        }) * h[k]
                            * mask[d + k]);
                }
                let hhat = pre.tanh();
                hn[j] = z * hhat * mask[d + j] + (1.0 - z) * h[j] * mask[d + j];
            }
            hs.push(hn.clone());
            h = hn;
        }
        hs
    }

    #[test]
    fn gru_matches_textbook_form_without_dropout() {
        for seed in [9u64, 10, 11] {
            let mut rng = SplitRng::seed_from(seed);
            let (d, u, steps) = (2, 3, 5);
            let p = CellParams::Gru {
                w_z: rand_mat(u, d + u, &mut rng),
                w_r: rand_mat(u, d + u, &mut rng),
                w_h: rand_mat(u, d + u, &mut rng),
                u_h: rand_mat(u, u, &mut rng),
                b_z: rand_vec(u, &mut rng),
                b_r: rand_vec(u, &mut rng),
                b_h: rand_vec(u, &mut rng),
            };
            let x = rand_vec(steps * d, &mut rng);
            let mask = vec![1.0; d + u];
            let h = forward_gru(&p, &x, d, &mask).unwrap();
            let naive = naive_gru(&p, &x, d, &mask);
            for t in 0..steps {
                for j in 0..u {
                    assert!((h.get(t, j) - naive[t][j]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn dense_identity_passthrough() {
        let p = CellParams::Dense {
            w: mat(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]),
            b: vec![0.0; 3],
        };
        let x = [0.3, -0.7, 0.1];
        let y = forward_dense(&p, &x, &[1.0; 3], false).unwrap();
        assert_eq!(y, x.to_vec());
    }

    #[test]
    fn dense_masked_unit_has_no_influence() {
        let mut rng = SplitRng::seed_from(12);
        let p = CellParams::Dense {
            w: rand_mat(2, 4, &mut rng),
            b: rand_vec(2, &mut rng),
        };
        let mask = [1.0, 0.0, 1.0, 1.0];
        let mut x = [0.2, 0.5, -0.1, 0.9];
        let base = forward_dense(&p, &x, &mask, true).unwrap();
        x[1] = 123.0;
        let moved = forward_dense(&p, &x, &mask, true).unwrap();
        assert_eq!(base, moved);
    }

    #[test]
    fn dense_zero_input_returns_bias() {
        let p = CellParams::Dense {
            w: mat(2, 2, &[3.0, 4.0, 5.0, 6.0]),
            b: vec![0.25, -0.5],
        };
        let y = forward_dense(&p, &[0.0, 0.0], &[1.0, 1.0], false).unwrap();
        assert_eq!(y, vec![0.25, -0.5]);
    }

    #[test]
    fn shape_errors_are_reported() {
        let p = CellParams::Dense {
            w: Matrix::zeros(2, 3),
            b: vec![0.0; 2],
        };
        assert_eq!(
            forward_dense(&p, &[1.0, 2.0], &[1.0, 1.0], false),
            Err(NnError::ShapeMismatch("dense"))
        );
        let r = CellParams::SimpleRnn {
            w_h: Matrix::zeros(2, 5),
            b_h: vec![0.0; 2],
            w_y: Matrix::zeros(2, 2),
            b_y: vec![0.0; 2],
        };
        assert_eq!(
            forward_simple_rnn(&r, &[1.0, 2.0, 3.0], 2, &vec![1.0; 5]),
            Err(NnError::ShapeMismatch("input sequence"))
        );
        assert!(forward_gru(&r, &[1.0, 2.0], 2, &vec![1.0; 5]).is_err());
    }
}
