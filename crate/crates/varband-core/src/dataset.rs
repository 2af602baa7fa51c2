//! Channel data model: scaling, windowing, and the evaluation exclusion list.
//!
//! Loading from disk lives in the companion crate; everything here is pure.

use alloc::string::String;
use alloc::vec::Vec;

use crate::matrix::Matrix;

/// Inclusive index range `[start, end]` of anomalous points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Segment {
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn new(start: usize, end: usize) -> Self {
        Segment { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, t: usize) -> bool {
        t >= self.start && t <= self.end
    }
}

/// One telemetry channel: train/test series plus labelled anomaly spans on
/// the test series. Column `target_col` is the telemetry value the models
/// forecast; the remaining columns are covariates.
#[derive(Debug, Clone)]
pub struct ChannelData {
    pub id: String,
    pub train: Matrix,
    pub test: Matrix,
    pub anomaly_segments: Vec<Segment>,
    pub target_col: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DatasetError {
    #[error("series has {rows} rows, need at least window_len + horizon = {min}")]
    SeriesTooShort { rows: usize, min: usize },
    #[error("window_len and horizon must both be at least 1")]
    InvalidWindow,
    #[error("column {col} out of range for {cols} columns")]
    ColumnMismatch { col: usize, cols: usize },
    #[error("input series has {inputs} rows but target series has {targets}")]
    RowMismatch { inputs: usize, targets: usize },
}

/// Per-column affine map onto `[-1, 1]`, fitted on training data only.
/// Columns with zero range map to the constant 0.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Scaler {
    mins: Vec<f64>,
    maxs: Vec<f64>,
}

pub fn fit_scaler(train: &Matrix) -> Scaler {
    Scaler::fit(train)
}

impl Scaler {
    pub fn fit(train: &Matrix) -> Scaler {
        let cols = train.cols();
        let mut mins = alloc::vec![f64::INFINITY; cols];
        let mut maxs = alloc::vec![f64::NEG_INFINITY; cols];
        for r in 0..train.rows() {
            for (c, &v) in train.row(r).iter().enumerate() {
                if v < mins[c] {
                    mins[c] = v;
                }
                if v > maxs[c] {
                    maxs[c] = v;
                }
            }
        }
        if train.rows() == 0 {
            mins.fill(0.0);
            maxs.fill(0.0);
        }
        Scaler { mins, maxs }
    }

    pub fn num_columns(&self) -> usize {
        self.mins.len()
    }

    fn scale_value(&self, c: usize, v: f64) -> f64 {
        let (lo, hi) = (self.mins[c], self.maxs[c]);
        if hi == lo {
            0.0
        } else {
            2.0 * (v - lo) / (hi - lo) - 1.0
        }
    }

    fn unscale_value(&self, c: usize, v: f64) -> f64 {
        let (lo, hi) = (self.mins[c], self.maxs[c]);
        if hi == lo {
            lo
        } else {
            lo + (v + 1.0) * (hi - lo) / 2.0
        }
    }

    /// Applies the fitted map to any matrix with the same column count.
    /// Values outside the training range land outside `[-1, 1]`; that is
    /// intentional (test anomalies should keep their magnitude).
    pub fn apply(&self, m: &Matrix) -> Result<Matrix, DatasetError> {
        if m.cols() != self.num_columns() {
            return Err(DatasetError::ColumnMismatch {
                col: m.cols(),
                cols: self.num_columns(),
            });
        }
        let mut out = m.clone();
        for r in 0..out.rows() {
            for c in 0..out.cols() {
                out.set(r, c, self.scale_value(c, m.get(r, c)));
            }
        }
        Ok(out)
    }

    /// Inverse of [`Scaler::apply`] on non-degenerate columns.
    pub fn invert(&self, m: &Matrix) -> Result<Matrix, DatasetError> {
        if m.cols() != self.num_columns() {
            return Err(DatasetError::ColumnMismatch {
                col: m.cols(),
                cols: self.num_columns(),
            });
        }
        let mut out = m.clone();
        for r in 0..out.rows() {
            for c in 0..out.cols() {
                out.set(r, c, self.unscale_value(c, m.get(r, c)));
            }
        }
        Ok(out)
    }
}

/// Sliding forecast windows over a series.
///
/// Window `b` is the `window_len` consecutive rows starting at `b`; its
/// target is `series[b + window_len + horizon - 1][target_col]`, i.e. the
/// value `horizon` steps after the window ends. The series is stored once
/// and windows are handed out as row slices.
#[derive(Debug, Clone)]
pub struct WindowBatch {
    series: Matrix,
    window_len: usize,
    horizon: usize,
    target_col: usize,
    targets: Vec<f64>,
}

pub fn make_windows(
    series: &Matrix,
    window_len: usize,
    horizon: usize,
    target_col: usize,
) -> Result<WindowBatch, DatasetError> {
    WindowBatch::new(series.clone(), window_len, horizon, target_col)
}

/// Windows whose inputs come from one series (typically smoothed) and whose
/// targets come from another (typically raw), which must have equal length.
pub fn make_windows_split_target(
    inputs: &Matrix,
    targets: &Matrix,
    window_len: usize,
    horizon: usize,
    target_col: usize,
) -> Result<WindowBatch, DatasetError> {
    if target_col >= targets.cols() {
        return Err(DatasetError::ColumnMismatch {
            col: target_col,
            cols: targets.cols(),
        });
    }
    if inputs.rows() != targets.rows() {
        return Err(DatasetError::RowMismatch {
            inputs: inputs.rows(),
            targets: targets.rows(),
        });
    }
    let mut batch = WindowBatch::new(inputs.clone(), window_len, horizon, 0)?;
    batch.target_col = target_col;
    for (b, t) in batch.targets.iter_mut().enumerate() {
        *t = targets.get(b + window_len + horizon - 1, target_col);
    }
    Ok(batch)
}

impl WindowBatch {
    pub fn new(
        series: Matrix,
        window_len: usize,
        horizon: usize,
        target_col: usize,
    ) -> Result<Self, DatasetError> {
        if window_len == 0 || horizon == 0 {
            return Err(DatasetError::InvalidWindow);
        }
        if target_col >= series.cols() {
            return Err(DatasetError::ColumnMismatch {
                col: target_col,
                cols: series.cols(),
            });
        }
        let min = window_len + horizon;
        if series.rows() < min {
            return Err(DatasetError::SeriesTooShort {
                rows: series.rows(),
                min,
            });
        }
        let count = series.rows() - window_len - horizon + 1;
        let targets = (0..count)
            .map(|b| series.get(b + window_len + horizon - 1, target_col))
            .collect();
        Ok(WindowBatch {
            series,
            window_len,
            horizon,
            target_col,
            targets,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_features(&self) -> usize {
        self.series.cols()
    }

    pub fn target_col(&self) -> usize {
        self.target_col
    }

    /// Input window `b` as `window_len * num_features` row-major values.
    pub fn input(&self, b: usize) -> &[f64] {
        let cols = self.series.cols();
        &self.series.data()[b * cols..(b + self.window_len) * cols]
    }

    pub fn target(&self, b: usize) -> f64 {
        self.targets[b]
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Series index that window `b`'s target refers to.
    pub fn target_index(&self, b: usize) -> usize {
        b + self.window_len + self.horizon - 1
    }

    /// Splits the batch into head/tail window ranges (tail gets
    /// `ceil(len * tail_fraction)` windows, at least 1 when possible).
    /// Used for carving a validation span off the training windows.
    pub fn split_tail(&self, tail_fraction: f64) -> (WindowBatch, WindowBatch) {
        let n = self.len();
        let mut tail = crate::math::ceil((n as f64) * tail_fraction) as usize;
        tail = if n >= 2 { tail.clamp(1, n - 1) } else { 0 };
        let cut = n - tail;
        let head = WindowBatch {
            series: self.series.clone(),
            window_len: self.window_len,
            horizon: self.horizon,
            target_col: self.target_col,
            targets: self.targets[..cut].to_vec(),
        };
        let cols = self.series.cols();
        let tail_rows = &self.series.data()[cut * cols..];
        let tail_series =
            Matrix::from_vec(self.series.rows() - cut, cols, tail_rows.to_vec()).expect("shape");
        let tail_batch = WindowBatch {
            series: tail_series,
            window_len: self.window_len,
            horizon: self.horizon,
            target_col: self.target_col,
            targets: self.targets[cut..].to_vec(),
        };
        (head, tail_batch)
    }
}

/// Channels excluded from aggregate metrics (spurious or trivially labelled
/// signals). Identifiers are stored without the dash that the on-disk
/// dataset uses, and [`is_excluded`] compares dash-insensitively, so both
/// "M6" and "M-6" match.
pub fn excluded_signals() -> &'static [&'static str] {
    &[
        "P10", "M6", "E3", "A1", "D16", "D1", "D3", "F3", "A6", "P14", "D5", "G6", "P15", "G1",
        "M3", "R1", "D4", "P11", "M2", "D11",
    ]
}

pub fn is_excluded(id: &str) -> bool {
    let mut normalized = String::with_capacity(id.len());
    for ch in id.chars() {
        if ch != '-' {
            normalized.push(ch);
        }
    }
    excluded_signals().iter().any(|&e| e == normalized)
}
