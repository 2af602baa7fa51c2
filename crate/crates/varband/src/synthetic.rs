//! Seeded synthetic telemetry channel for self-contained runs and tests.
//!
//! The channel mimics a periodic instrument reading paired with a clean
//! command-like companion trace: column 0 is a unit sine plus Gaussian
//! noise, column 1 is the same wave led by a few steps and noise-free.
//! The train split is anomaly-free; the test split carries ten injected
//! segments alternating between sign-flipping spike bursts and sustained
//! level shifts, spaced so no two segments come near each other. Only
//! column 0 is corrupted, as the companion trace stays nominal during a
//! measurement fault.

use std::path::Path;

use varband_core::dataset::ChannelData;
use varband_core::{Matrix, Segment, SplitRng};

use crate::loader::{write_matrix, LoadError, LABELS_FILE, TEST_DIR, TRAIN_DIR};

pub const SYNTHETIC_ID: &str = "SYN-1";
pub const TRAIN_LEN: usize = 3000;
pub const TEST_LEN: usize = 2000;
pub const PERIOD: f64 = 25.0;
pub const NOISE_SIGMA: f64 = 0.05;
pub const NUM_SEGMENTS: usize = 10;

/// First injected segment never starts before this index, leaving the
/// window warm-up region anomaly-free.
const FIRST_SLOT: usize = 150;
/// One segment per slot; slots are wide enough that consecutive segments
/// keep a gap of at least 55 points.
const SLOT: usize = 180;
const MAX_JITTER: usize = 100;

fn wave(t: usize) -> f64 {
    (2.0 * std::f64::consts::PI * t as f64 / PERIOD).sin()
}

fn companion(t: usize) -> f64 {
    wave(t + 7)
}

/// Generates the channel for a seed. The same seed always produces the
/// same bytes; the test split continues the train split's phase so the
/// boundary is seamless.
pub fn generate(seed: u64) -> ChannelData {
    let mut rng = SplitRng::seed_from(seed);

    let mut train = Matrix::zeros(TRAIN_LEN, 2);
    for t in 0..TRAIN_LEN {
        train.set(t, 0, wave(t) + NOISE_SIGMA * rng.normal());
        train.set(t, 1, companion(t));
    }

    let mut test = Matrix::zeros(TEST_LEN, 2);
    for i in 0..TEST_LEN {
        let t = TRAIN_LEN + i;
        test.set(i, 0, wave(t) + NOISE_SIGMA * rng.normal());
        test.set(i, 1, companion(t));
    }

    let mut segments = Vec::with_capacity(NUM_SEGMENTS);
    for k in 0..NUM_SEGMENTS {
        let spike = k % 2 == 0;
        let len = if spike {
            rng.uniform_usize(8, 14)
        } else {
            rng.uniform_usize(15, 25)
        };
        let lo = FIRST_SLOT + k * SLOT;
        let start = rng.uniform_usize(lo, lo + MAX_JITTER);
        let seg = Segment {
            start,
            end: start + len - 1,
        };
        if spike {
            let mut sign = if rng.bernoulli(0.5) { 1.0 } else { -1.0 };
            for i in seg.start..=seg.end {
                test.set(i, 0, test.get(i, 0) + sign * rng.uniform_range(0.9, 1.4));
                sign = -sign;
            }
        } else {
            let sign = if rng.bernoulli(0.5) { 1.0 } else { -1.0 };
            let shift = sign * rng.uniform_range(0.8, 1.2);
            for i in seg.start..=seg.end {
                test.set(i, 0, test.get(i, 0) + shift);
            }
        }
        segments.push(seg);
    }

    ChannelData {
        id: SYNTHETIC_ID.to_string(),
        train,
        test,
        anomaly_segments: segments,
        target_col: 0,
    }
}

/// Writes the synthetic channel as a dataset directory in the standard
/// layout, so it flows through the same files and parsers as real data.
pub fn write_dataset(root: &Path, seed: u64) -> Result<(), LoadError> {
    let ch = generate(seed);
    write_matrix(
        &root.join(TRAIN_DIR).join(format!("{SYNTHETIC_ID}.npy")),
        &ch.train,
    )?;
    write_matrix(
        &root.join(TEST_DIR).join(format!("{SYNTHETIC_ID}.npy")),
        &ch.test,
    )?;

    let spans: Vec<String> = ch
        .anomaly_segments
        .iter()
        .map(|s| format!("[{}, {}]", s.start, s.end))
        .collect();
    let csv = format!(
        "chan_id,spacecraft,anomaly_sequences,num_values\n{SYNTHETIC_ID},SMAP,\"[{}]\",{TEST_LEN}\n",
        spans.join(", ")
    );
    Ok(std::fs::write(root.join(LABELS_FILE), csv)?)
}
