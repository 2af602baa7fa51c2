//! Recurrent forecasting networks built from scratch: simple RNN, LSTM and
//! GRU cells with variational dropout masks, a dense head, exact
//! backpropagation through time, and Adam.
//!
//! A model is a stack of recurrent layers followed by a dense stack ending
//! in a single linear unit. Recurrent layers pass their full hidden
//! sequence to the next recurrent layer; the last recurrent layer's final
//! hidden state feeds the dense stack. A simple RNN cell in that last
//! position additionally applies its own output projection first.
//!
//! Dropout is variational: one mask vector per layer is drawn per sequence
//! and reused at every timestep. Recurrent masks cover the concatenation
//! [x_t, h_{t-1}]; dense masks cover the layer input. Mask entries are
//! 0 or 1/p_keep (inverted scaling) so the expected forward pass matches
//! the mask-free one; `scaled_masks: false` gives plain 0/1 masks.

mod cells;
mod train;

pub use cells::{forward_dense, forward_gru, forward_lstm, forward_simple_rnn};
pub use train::{adam_step, batch_loss, gradients, loss, train, AdamState, TrainConfig};

use alloc::vec;
use alloc::vec::Vec;

use crate::matrix::Matrix;
use crate::rng::SplitRng;

use cells::{DenseTrace, GruTrace, LstmTrace, SimpleRnnTrace};

/// Hard ceiling on per-layer dropout probability.
pub const MAX_DROPOUT: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum CellKind {
    SimpleRnn,
    Lstm,
    Gru,
    Dense,
}

impl CellKind {
    pub fn is_recurrent(self) -> bool {
        !matches!(self, CellKind::Dense)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LayerSpec {
    pub kind: CellKind,
    pub units: usize,
    pub dropout_p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelOptions {
    /// Scale surviving mask entries by 1/p_keep.
    pub scaled_masks: bool,
    /// Apply the hidden-part mask to the carried LSTM cell state.
    pub mask_cell_state: bool,
}

impl Default for ModelOptions {
    fn default() -> Self {
        ModelOptions {
            scaled_masks: true,
            mask_cell_state: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch in {0}")]
    ShapeMismatch(&'static str),
    #[error("operation expects a {0} cell")]
    KindMismatch(&'static str),
    #[error("invalid model spec: {0}")]
    InvalidSpec(&'static str),
    #[error("empty batch")]
    EmptyBatch,
}

/// Learnable tensors of one layer. The same structure doubles as gradient
/// and optimizer-moment storage, so shapes line up by construction.
///
/// Recurrent weight matrices are `units x (input + units)`, acting on the
/// masked concatenation of input and previous hidden state.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum CellParams {
    SimpleRnn {
        w_h: Matrix,
        b_h: Vec<f64>,
        /// Square output projection, used only when this layer is the last
        /// recurrent one.
        w_y: Matrix,
        b_y: Vec<f64>,
    },
    Lstm {
        w_i: Matrix,
        w_f: Matrix,
        w_o: Matrix,
        w_c: Matrix,
        b_i: Vec<f64>,
        b_f: Vec<f64>,
        b_o: Vec<f64>,
        b_c: Vec<f64>,
    },
    Gru {
        w_z: Matrix,
        w_r: Matrix,
        w_h: Matrix,
        /// Recurrent weights on the reset-gated hidden state.
        u_h: Matrix,
        b_z: Vec<f64>,
        b_r: Vec<f64>,
        b_h: Vec<f64>,
    },
    Dense {
        w: Matrix,
        b: Vec<f64>,
    },
}

impl CellParams {
    /// Flat views of every tensor in a fixed order; the flag marks weight
    /// matrices (true) versus biases (false) for weight decay.
    pub(crate) fn parts(&self) -> Vec<(&[f64], bool)> {
        match self {
            CellParams::SimpleRnn { w_h, b_h, w_y, b_y } => vec![
                (w_h.data(), true),
                (b_h.as_slice(), false),
                (w_y.data(), true),
                (b_y.as_slice(), false),
            ],
            CellParams::Lstm {
                w_i,
                w_f,
                w_o,
                w_c,
                b_i,
                b_f,
                b_o,
                b_c,
            } => vec![
                (w_i.data(), true),
                (w_f.data(), true),
                (w_o.data(), true),
                (w_c.data(), true),
                (b_i.as_slice(), false),
                (b_f.as_slice(), false),
                (b_o.as_slice(), false),
                (b_c.as_slice(), false),
            ],
            CellParams::Gru {
                w_z,
                w_r,
                w_h,
                u_h,
                b_z,
                b_r,
                b_h,
            } => vec![
                (w_z.data(), true),
                (w_r.data(), true),
                (w_h.data(), true),
                (u_h.data(), true),
                (b_z.as_slice(), false),
                (b_r.as_slice(), false),
                (b_h.as_slice(), false),
            ],
            CellParams::Dense { w, b } => vec![(w.data(), true), (b.as_slice(), false)],
        }
    }

    pub(crate) fn parts_mut(&mut self) -> Vec<(&mut [f64], bool)> {
        match self {
            CellParams::SimpleRnn { w_h, b_h, w_y, b_y } => vec![
                (w_h.data_mut(), true),
                (b_h.as_mut_slice(), false),
                (w_y.data_mut(), true),
                (b_y.as_mut_slice(), false),
            ],
            CellParams::Lstm {
                w_i,
                w_f,
                w_o,
                w_c,
                b_i,
                b_f,
                b_o,
                b_c,
            } => vec![
                (w_i.data_mut(), true),
                (w_f.data_mut(), true),
                (w_o.data_mut(), true),
                (w_c.data_mut(), true),
                (b_i.as_mut_slice(), false),
                (b_f.as_mut_slice(), false),
                (b_o.as_mut_slice(), false),
                (b_c.as_mut_slice(), false),
            ],
            CellParams::Gru {
                w_z,
                w_r,
                w_h,
                u_h,
                b_z,
                b_r,
                b_h,
            } => vec![
                (w_z.data_mut(), true),
                (w_r.data_mut(), true),
                (w_h.data_mut(), true),
                (u_h.data_mut(), true),
                (b_z.as_mut_slice(), false),
                (b_r.as_mut_slice(), false),
                (b_h.as_mut_slice(), false),
            ],
            CellParams::Dense { w, b } => {
                vec![(w.data_mut(), true), (b.as_mut_slice(), false)]
            }
        }
    }

    pub(crate) fn zero_like(&self) -> CellParams {
        let mut out = self.clone();
        for (slice, _) in out.parts_mut() {
            slice.fill(0.0);
        }
        out
    }
}

fn init_matrix(rows: usize, cols: usize, fan_in: usize, rng: &mut SplitRng) -> Matrix {
    let bound = 1.0 / crate::math::sqrt(fan_in as f64);
    let mut m = Matrix::zeros(rows, cols);
    for v in m.data_mut() {
        *v = rng.uniform_range(-bound, bound);
    }
    m
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RnnModel {
    pub input_dim: usize,
    pub layers: Vec<LayerSpec>,
    pub params: Vec<CellParams>,
    pub options: ModelOptions,
}

impl RnnModel {
    /// Builds a model with uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weight
    /// init, zero biases, and LSTM forget bias +1.
    pub fn new(
        input_dim: usize,
        layers: Vec<LayerSpec>,
        options: ModelOptions,
        rng: &mut SplitRng,
    ) -> Result<Self, NnError> {
        validate_spec(input_dim, &layers)?;
        let mut params = Vec::with_capacity(layers.len());
        let mut in_dim = input_dim;
        for spec in &layers {
            let u = spec.units;
            let p = match spec.kind {
                CellKind::SimpleRnn => {
                    let zeta = in_dim + u;
                    CellParams::SimpleRnn {
                        w_h: init_matrix(u, zeta, zeta, rng),
                        b_h: vec![0.0; u],
                        w_y: init_matrix(u, u, u, rng),
                        b_y: vec![0.0; u],
                    }
                }
                CellKind::Lstm => {
                    let zeta = in_dim + u;
                    CellParams::Lstm {
                        w_i: init_matrix(u, zeta, zeta, rng),
                        w_f: init_matrix(u, zeta, zeta, rng),
                        w_o: init_matrix(u, zeta, zeta, rng),
                        w_c: init_matrix(u, zeta, zeta, rng),
                        b_i: vec![0.0; u],
                        b_f: vec![1.0; u],
                        b_o: vec![0.0; u],
                        b_c: vec![0.0; u],
                    }
                }
                CellKind::Gru => {
                    let zeta = in_dim + u;
                    CellParams::Gru {
                        w_z: init_matrix(u, zeta, zeta, rng),
                        w_r: init_matrix(u, zeta, zeta, rng),
                        w_h: init_matrix(u, zeta, zeta, rng),
                        u_h: init_matrix(u, u, u, rng),
                        b_z: vec![0.0; u],
                        b_r: vec![0.0; u],
                        b_h: vec![0.0; u],
                    }
                }
                CellKind::Dense => CellParams::Dense {
                    w: init_matrix(u, in_dim, in_dim, rng),
                    b: vec![0.0; u],
                },
            };
            params.push(p);
            in_dim = u;
        }
        Ok(RnnModel {
            input_dim,
            layers,
            params,
            options,
        })
    }

    /// Input dimension of layer `l`.
    pub fn layer_input_dim(&self, l: usize) -> usize {
        if l == 0 {
            self.input_dim
        } else {
            self.layers[l - 1].units
        }
    }

    pub fn last_recurrent(&self) -> usize {
        self.layers
            .iter()
            .rposition(|s| s.kind.is_recurrent())
            .expect("validated")
    }

    pub fn num_params(&self) -> usize {
        self.params
            .iter()
            .map(|p| p.parts().iter().map(|(s, _)| s.len()).sum::<usize>())
            .sum()
    }

    pub fn zero_grads(&self) -> Vec<CellParams> {
        self.params.iter().map(CellParams::zero_like).collect()
    }

    /// Deterministic scalar prediction for one window under the given masks.
    pub fn forward(&self, x_seq: &[f64], masks: &DropoutMasks) -> Result<f64, NnError> {
        Ok(self.trace(x_seq, masks)?.prediction)
    }

    pub(crate) fn trace(&self, x_seq: &[f64], masks: &DropoutMasks) -> Result<ModelTrace, NnError> {
        if masks.layer_masks.len() != self.layers.len() {
            return Err(NnError::ShapeMismatch("mask count"));
        }
        if self.input_dim == 0 || x_seq.len() % self.input_dim != 0 || x_seq.is_empty() {
            return Err(NnError::ShapeMismatch("input sequence"));
        }
        let last_rec = self.last_recurrent();
        let mut traces = Vec::with_capacity(self.layers.len());

        let mut seq = x_seq.to_vec();
        let mut seq_dim = self.input_dim;
        let mut vector: Vec<f64> = Vec::new();

        for (l, spec) in self.layers.iter().enumerate() {
            let mask = &masks.layer_masks[l];
            match (&self.params[l], spec.kind) {
                (CellParams::SimpleRnn { w_h, b_h, w_y, b_y }, CellKind::SimpleRnn) => {
                    let tr = cells::simple_rnn_trace(w_h, b_h, &seq, seq_dim, mask)?;
                    if l == last_rec {
                        let proj =
                            cells::simple_rnn_project(w_y, b_y, tr.h.row(tr.h.rows() - 1), mask)?;
                        vector = proj.y.clone();
                        traces.push(LayerTrace::SimpleRnn(tr, Some(proj)));
                    } else {
                        seq = tr.h.data().to_vec();
                        seq_dim = spec.units;
                        traces.push(LayerTrace::SimpleRnn(tr, None));
                    }
                }
                (p @ CellParams::Lstm { .. }, CellKind::Lstm) => {
                    let tr =
                        cells::lstm_trace(p, &seq, seq_dim, mask, self.options.mask_cell_state)?;
                    if l == last_rec {
                        vector = tr.h.row(tr.h.rows() - 1).to_vec();
                    } else {
                        seq = tr.h.data().to_vec();
                        seq_dim = spec.units;
                    }
                    traces.push(LayerTrace::Lstm(tr));
                }
                (p @ CellParams::Gru { .. }, CellKind::Gru) => {
                    let tr = cells::gru_trace(p, &seq, seq_dim, mask)?;
                    if l == last_rec {
                        vector = tr.h.row(tr.h.rows() - 1).to_vec();
                    } else {
                        seq = tr.h.data().to_vec();
                        seq_dim = spec.units;
                    }
                    traces.push(LayerTrace::Gru(tr));
                }
                (CellParams::Dense { w, b }, CellKind::Dense) => {
                    // Hidden dense layers use tanh; the final output is linear.
                    let tanh_act = l + 1 < self.layers.len();
                    let tr = cells::dense_trace(w, b, &vector, mask, tanh_act)?;
                    vector = tr.out.clone();
                    traces.push(LayerTrace::Dense(tr));
                }
                _ => return Err(NnError::KindMismatch("matching params")),
            }
        }
        debug_assert_eq!(vector.len(), 1);
        Ok(ModelTrace {
            prediction: vector[0],
            layers: traces,
        })
    }
}

fn validate_spec(input_dim: usize, layers: &[LayerSpec]) -> Result<(), NnError> {
    if input_dim == 0 {
        return Err(NnError::InvalidSpec("input_dim must be positive"));
    }
    if layers.is_empty() {
        return Err(NnError::InvalidSpec("model needs layers"));
    }
    let mut seen_dense = false;
    for spec in layers {
        if spec.units == 0 {
            return Err(NnError::InvalidSpec("layer units must be positive"));
        }
        if !(spec.dropout_p >= 0.0 && spec.dropout_p <= MAX_DROPOUT) {
            return Err(NnError::InvalidSpec("dropout_p outside [0, 0.2]"));
        }
        if spec.kind.is_recurrent() {
            if seen_dense {
                return Err(NnError::InvalidSpec("recurrent layer after dense stack"));
            }
        } else {
            seen_dense = true;
        }
    }
    if !layers[0].kind.is_recurrent() {
        return Err(NnError::InvalidSpec("first layer must be recurrent"));
    }
    let last = layers.last().unwrap();
    if last.kind != CellKind::Dense || last.units != 1 {
        return Err(NnError::InvalidSpec("last layer must be Dense with 1 unit"));
    }
    Ok(())
}

/// One mask vector per layer, drawn once per sequence and reused at every
/// timestep. Recurrent layers mask [x_t, h_{t-1}]; dense layers mask their
/// input vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks {
    pub layer_masks: Vec<Vec<f64>>,
}

impl DropoutMasks {
    fn mask_len(model: &RnnModel, l: usize) -> usize {
        let d = model.layer_input_dim(l);
        if model.layers[l].kind.is_recurrent() {
            d + model.layers[l].units
        } else {
            d
        }
    }

    /// All-ones masks: dropout disabled.
    pub fn ones(model: &RnnModel) -> DropoutMasks {
        let layer_masks = (0..model.layers.len())
            .map(|l| vec![1.0; Self::mask_len(model, l)])
            .collect();
        DropoutMasks { layer_masks }
    }

    /// Bernoulli draw per entry; a layer with dropout_p == 0 gets exact
    /// ones without consuming randomness.
    pub fn draw(model: &RnnModel, rng: &mut SplitRng) -> DropoutMasks {
        let layer_masks = (0..model.layers.len())
            .map(|l| {
                let len = Self::mask_len(model, l);
                let p = model.layers[l].dropout_p;
                if p == 0.0 {
                    return vec![1.0; len];
                }
                let keep = 1.0 - p;
                let live = if model.options.scaled_masks {
                    1.0 / keep
                } else {
                    1.0
                };
                (0..len)
                    .map(|_| if rng.uniform() < keep { live } else { 0.0 })
                    .collect()
            })
            .collect();
        DropoutMasks { layer_masks }
    }
}

pub(crate) enum LayerTrace {
    SimpleRnn(SimpleRnnTrace, Option<cells::ProjTrace>),
    Lstm(LstmTrace),
    Gru(GruTrace),
    Dense(DenseTrace),
}

pub(crate) struct ModelTrace {
    pub prediction: f64,
    pub layers: Vec<LayerTrace>,
}

/// Applies the layer stack to one window and returns the scalar prediction.
pub fn forward_model(
    model: &RnnModel,
    x_seq: &[f64],
    masks: &DropoutMasks,
) -> Result<f64, NnError> {
    model.forward(x_seq, masks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: CellKind, units: usize, p: f64) -> LayerSpec {
        LayerSpec {
            kind,
            units,
            dropout_p: p,
        }
    }

    fn zeroed(mut m: RnnModel) -> RnnModel {
        for cp in &mut m.params {
            for (s, _) in cp.parts_mut() {
                s.fill(0.0);
            }
        }
        m
    }

    #[test]
    fn zero_model_predicts_dense_bias() {
        let mut rng = SplitRng::seed_from(1);
        let layers = vec![
            spec(CellKind::SimpleRnn, 1, 0.0),
            spec(CellKind::Dense, 1, 0.0),
        ];
        let mut model =
            zeroed(RnnModel::new(1, layers, ModelOptions::default(), &mut rng).unwrap());
        if let CellParams::Dense { b, .. } = &mut model.params[1] {
            b[0] = 0.37;
        }
        let masks = DropoutMasks::ones(&model);
        let y = model.forward(&[0.4, -0.2, 1.0], &masks).unwrap();
        // Projection of h=sigmoid(0)=0.5 through zero weights leaves only
        // the dense bias.
        assert_eq!(y, 0.37);
    }

    #[test]
    fn deterministic_without_dropout() {
        let mut rng = SplitRng::seed_from(2);
        let layers = vec![
            spec(CellKind::Gru, 3, 0.0),
            spec(CellKind::Lstm, 2, 0.0),
            spec(CellKind::Dense, 1, 0.0),
        ];
        let model = RnnModel::new(2, layers, ModelOptions::default(), &mut rng).unwrap();
        let masks = DropoutMasks::ones(&model);
        let x: Vec<f64> = (0..10).map(|i| (i as f64 * 0.3).sin()).collect();
        let a = model.forward(&x, &masks).unwrap();
        let b = model.forward(&x, &masks).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn model_forward_composes_the_layer_forwards() {
        let mut rng = SplitRng::seed_from(3);
        let layers = vec![
            spec(CellKind::Lstm, 3, 0.0),
            spec(CellKind::Gru, 2, 0.0),
            spec(CellKind::Dense, 2, 0.0),
            spec(CellKind::Dense, 1, 0.0),
        ];
        let model = RnnModel::new(2, layers, ModelOptions::default(), &mut rng).unwrap();
        let masks = DropoutMasks::ones(&model);
        let x: Vec<f64> = (0..8).map(|i| 0.1 * i as f64 - 0.3).collect();
        let got = model.forward(&x, &masks).unwrap();

        // Same computation using only the public per-layer entry points.
        let h1 = forward_lstm(&model.params[0], &x, 2, &masks.layer_masks[0], true).unwrap();
        let h2 = forward_gru(&model.params[1], h1.data(), 3, &masks.layer_masks[1]).unwrap();
        let last = h2.row(h2.rows() - 1);
        let v1 = forward_dense(&model.params[2], last, &masks.layer_masks[2], true).unwrap();
        let v2 = forward_dense(&model.params[3], &v1, &masks.layer_masks[3], false).unwrap();
        assert!((got - v2[0]).abs() < 1e-15);
    }

    #[test]
    fn simple_rnn_tail_applies_projection() {
        let mut rng = SplitRng::seed_from(4);
        let layers = vec![
            spec(CellKind::SimpleRnn, 3, 0.0),
            spec(CellKind::Dense, 1, 0.0),
        ];
        let model = RnnModel::new(1, layers, ModelOptions::default(), &mut rng).unwrap();
        let masks = DropoutMasks::ones(&model);
        let x = [0.5, -0.5, 0.25];
        let got = model.forward(&x, &masks).unwrap();

        let h = forward_simple_rnn(&model.params[0], &x, 1, &masks.layer_masks[0]).unwrap();
        let (CellParams::SimpleRnn { w_y, b_y, .. }, CellParams::Dense { w, b }) =
            (&model.params[0], &model.params[1])
        else {
            panic!("unexpected params");
        };
        let last = h.row(h.rows() - 1);
        let mh = &masks.layer_masks[0][1..];
        let mut proj = b_y.clone();
        for (r, pr) in proj.iter_mut().enumerate() {
            for (c, hv) in last.iter().enumerate() {
                *pr += w_y.get(r, c) * hv * mh[c];
            }
        }
        let manual = w.row(0).iter().zip(&proj).map(|(a, b)| a * b).sum::<f64>() + b[0];
        assert!((got - manual).abs() < 1e-15);
    }

    #[test]
    fn drawn_masks_hold_only_scaled_values() {
        let mut rng = SplitRng::seed_from(5);
        let layers = vec![spec(CellKind::Gru, 6, 0.2), spec(CellKind::Dense, 1, 0.1)];
        let model = RnnModel::new(4, layers, ModelOptions::default(), &mut rng).unwrap();
        let masks = DropoutMasks::draw(&model, &mut rng);
        assert_eq!(masks.layer_masks[0].len(), 4 + 6);
        assert_eq!(masks.layer_masks[1].len(), 6);
        for v in &masks.layer_masks[0] {
            assert!(*v == 0.0 || (*v - 1.0 / 0.8).abs() < 1e-15);
        }
        for v in &masks.layer_masks[1] {
            assert!(*v == 0.0 || (*v - 1.0 / 0.9).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_dropout_draws_exact_ones() {
        let mut rng = SplitRng::seed_from(6);
        let layers = vec![spec(CellKind::Lstm, 3, 0.0), spec(CellKind::Dense, 1, 0.0)];
        let model = RnnModel::new(2, layers, ModelOptions::default(), &mut rng).unwrap();
        let masks = DropoutMasks::draw(&model, &mut rng);
        assert_eq!(masks, DropoutMasks::ones(&model));
    }

    #[test]
    fn spec_validation_rejects_bad_stacks() {
        let mut rng = SplitRng::seed_from(7);
        let opts = ModelOptions::default();
        let bad = vec![
            vec![],
            vec![spec(CellKind::Dense, 1, 0.0)],
            vec![spec(CellKind::SimpleRnn, 2, 0.0)],
            vec![
                spec(CellKind::SimpleRnn, 2, 0.0),
                spec(CellKind::Dense, 2, 0.0),
            ],
            vec![
                spec(CellKind::SimpleRnn, 2, 0.0),
                spec(CellKind::Dense, 2, 0.0),
                spec(CellKind::Gru, 2, 0.0),
                spec(CellKind::Dense, 1, 0.0),
            ],
            vec![spec(CellKind::Gru, 2, 0.5), spec(CellKind::Dense, 1, 0.0)],
            vec![spec(CellKind::Gru, 0, 0.0), spec(CellKind::Dense, 1, 0.0)],
        ];
        for layers in bad {
            assert!(matches!(
                RnnModel::new(2, layers, opts, &mut rng),
                Err(NnError::InvalidSpec(_))
            ),);
        }
    }

    #[test]
    fn checkpoint_shapes_survive_zero_grads() {
        let mut rng = SplitRng::seed_from(8);
        let layers = vec![
            spec(CellKind::SimpleRnn, 2, 0.1),
            spec(CellKind::Lstm, 3, 0.1),
            spec(CellKind::Gru, 2, 0.0),
            spec(CellKind::Dense, 1, 0.0),
        ];
        let model = RnnModel::new(3, layers, ModelOptions::default(), &mut rng).unwrap();
        let grads = model.zero_grads();
        assert_eq!(grads.len(), model.params.len());
        for (g, p) in grads.iter().zip(&model.params) {
            let gp = g.parts();
            let pp = p.parts();
            assert_eq!(gp.len(), pp.len());
            for ((gs, gw), (ps, pw)) in gp.iter().zip(&pp) {
                assert_eq!(gs.len(), ps.len());
                assert_eq!(gw, pw);
                assert!(gs.iter().all(|v| *v == 0.0));
            }
        }
        assert!(model.num_params() > 0);
    }
}
