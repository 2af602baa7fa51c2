//! Run report schema. The report is one JSON document with stable field
//! order; everything in it is deterministic under a fixed seed except the
//! top-level `timing` object, which callers strip before comparing runs.

use varband_core::eval::MetricSet;
use varband_core::Segment;

/// Full-scale reference numbers from the original evaluation, reproduced
/// in every report for context. They require the large search space
/// (128-256 units, 100 epochs, 1000 MC passes, all channels), so
/// desk-scale runs are not expected to reach them.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PublishedTargets {
    pub smap_f1: f64,
    pub msl_f1: f64,
    pub smap_forecast_mse: f64,
    pub msl_forecast_mse: f64,
}

impl Default for PublishedTargets {
    fn default() -> Self {
        PublishedTargets {
            smap_f1: 0.92,
            msl_f1: 0.84,
            smap_forecast_mse: 0.02,
            msl_forecast_mse: 0.09,
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ChannelArtifacts {
    pub predictions_csv: String,
    pub segments_csv: String,
    pub plot_svg: String,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ChannelReport {
    pub id: String,
    pub spacecraft: Option<String>,
    /// Excluded channels still run but stay out of the aggregate.
    pub excluded: bool,
    pub metrics: MetricSet,
    pub tau_used: usize,
    /// Flagged and labelled spans, both in test-series indexing.
    pub predicted_segments: Vec<Segment>,
    pub true_segments: Vec<Segment>,
    pub artifacts: ChannelArtifacts,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Timing {
    pub total_seconds: f64,
    pub train_seconds_per_epoch: f64,
    pub predictions_per_second: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub config: serde_json::Value,
    pub published_targets: PublishedTargets,
    /// Sorted by channel id.
    pub channels: Vec<ChannelReport>,
    pub aggregate: MetricSet,
    /// Relative to the output directory, sorted.
    pub artifacts: Vec<String>,
    /// Wall-clock measurements; the one non-deterministic field.
    pub timing: Timing,
}

pub fn to_json_bytes(report: &RunReport) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(report).expect("report serialization cannot fail");
    bytes.push(b'\n');
    bytes
}

/// Parses report bytes and drops the `timing` object, for comparing two
/// runs of the same seed.
pub fn comparable(bytes: &[u8]) -> Result<serde_json::Value, serde_json::Error> {
    let mut value: serde_json::Value = serde_json::from_slice(bytes)?;
    if let Some(object) = value.as_object_mut() {
        object.remove("timing");
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use varband_core::eval::{metrics, Confusion};

    fn sample(total_seconds: f64) -> RunReport {
        let m = metrics(&Confusion {
            true_pos: 8,
            false_pos: 2,
            false_neg: 2,
            true_neg: 88,
        });
        RunReport {
            seed: 7,
            config: serde_json::json!({"window.len": 30}),
            published_targets: PublishedTargets::default(),
            channels: vec![ChannelReport {
                id: "SYN-1".into(),
                spacecraft: Some("SMAP".into()),
                excluded: false,
                metrics: m,
                tau_used: 5,
                predicted_segments: vec![Segment { start: 10, end: 14 }],
                true_segments: vec![Segment { start: 10, end: 13 }],
                artifacts: ChannelArtifacts {
                    predictions_csv: "pred_SYN-1.csv".into(),
                    segments_csv: "segments_SYN-1.csv".into(),
                    plot_svg: "plot_SYN-1.svg".into(),
                },
            }],
            aggregate: m,
            artifacts: vec!["report.json".into()],
            timing: Timing {
                total_seconds,
                train_seconds_per_epoch: 0.1,
                predictions_per_second: 1000.0,
            },
        }
    }

    #[test]
    fn serialization_roundtrips() {
        let report = sample(3.0);
        let back: RunReport = serde_json::from_slice(&to_json_bytes(&report)).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn same_report_serializes_to_identical_bytes() {
        assert_eq!(to_json_bytes(&sample(3.0)), to_json_bytes(&sample(3.0)));
    }

    #[test]
    fn comparable_ignores_only_timing() {
        let a = to_json_bytes(&sample(3.0));
        let b = to_json_bytes(&sample(99.0));
        assert_ne!(a, b);
        assert_eq!(comparable(&a).unwrap(), comparable(&b).unwrap());

        let mut other = sample(3.0);
        other.seed = 8;
        assert_ne!(
            comparable(&a).unwrap(),
            comparable(&to_json_bytes(&other)).unwrap()
        );
    }

    #[test]
    fn published_targets_carry_the_reference_numbers() {
        let t = PublishedTargets::default();
        assert_eq!(t.smap_f1, 0.92);
        assert_eq!(t.msl_f1, 0.84);
        assert_eq!(t.smap_forecast_mse, 0.02);
        assert_eq!(t.msl_forecast_mse, 0.09);
    }
}
