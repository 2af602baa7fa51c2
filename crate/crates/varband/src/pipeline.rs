//! Stage orchestration. Each stage reads its inputs from the output
//! directory and writes its results back there, so stages can run one at
//! a time or all together via `run`; a rerun of any stage with the same
//! seed reproduces its files byte for byte.
//!
//! Layout under the output directory:
//!
//! ```text
//! ingest.json                    channel inventory and dataset root
//! dataset/                      synthetic dataset (fixture mode only)
//! channels/<id>/                 per-channel intermediates
//!   scaler.json  train_scaled.npy  test_scaled.npy
//!   train_smooth.npy  test_smooth.npy
//!   model_<slot>.json           searched checkpoints
//!   detect.json                 flagged segments and the tau sweep
//! pred_<id>.csv  segments_<id>.csv  plot_<id>.svg
//! ga_log.jsonl  metrics.csv  evaluate.json  report.json
//! ```
//!
//! Per-channel and per-slot RNG streams are derived by hashing the channel
//! id and stage name into the seed, so `search` rerun in isolation sees
//! the same stream it saw inside a full `run`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use varband_core::bayes::{mc_predict, BayesError};
use varband_core::dataset::{is_excluded, make_windows_split_target, DatasetError, Scaler};
use varband_core::detect::{self, DetectError, DetectorConfig, TauSweepEntry, TuneError};
use varband_core::ensemble::{combine, CombineConfig, EnsembleError, EnsembleMember};
use varband_core::eval::{aggregate, confusion, metrics, ChannelEval, EvalError, MetricSet};
use varband_core::ga::{evolve, train_and_score, FitnessConfig, FitnessData, GaError};
use varband_core::nn::{ModelOptions, NnError};
use varband_core::preprocess::{smooth, PreprocessError};
use varband_core::{Segment, SplitRng};

use crate::checkpoint::{load_model, save_model, CheckpointError};
use crate::config::{ConfigError, PipelineConfig};
use crate::loader::{self, LoadError};
use crate::report::{
    to_json_bytes, ChannelArtifacts, ChannelReport, PublishedTargets, RunReport, Timing,
};
use crate::svg::{render_plot, PlotSeries};
use crate::synthetic;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] LoadError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("artifact {}: {reason}", path.display())]
    Artifact { path: PathBuf, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("windowing: {0}")]
    Dataset(#[from] DatasetError),
    #[error("smoothing: {0}")]
    Preprocess(#[from] PreprocessError),
    #[error("training: {0}")]
    Nn(#[from] NnError),
    #[error("uncertainty: {0}")]
    Bayes(#[from] BayesError),
    #[error("search: {0}")]
    Ga(#[from] GaError),
    #[error("ensemble: {0}")]
    Ensemble(#[from] EnsembleError),
    #[error("detection: {0}")]
    Detect(#[from] DetectError),
    #[error("tau sweep: {0}")]
    Tune(#[from] TuneError),
    #[error("evaluation: {0}")]
    Eval(#[from] EvalError),
    #[error("pipeline self-check failed: {0}")]
    SelfCheck(String),
}

impl PipelineError {
    /// 2 for configuration problems, 3 for unreadable or missing data and
    /// artifacts, 4 for violated internal invariants.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Data(_)
            | PipelineError::Checkpoint(_)
            | PipelineError::Artifact { .. }
            | PipelineError::Io(_)
            | PipelineError::Dataset(_) => 3,
            _ => 4,
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("stage {stage}: {source}")]
pub struct StageError {
    pub stage: &'static str,
    #[source]
    pub source: PipelineError,
}

impl StageError {
    pub fn exit_code(&self) -> i32 {
        self.source.exit_code()
    }
}

fn at<T>(stage: &'static str, result: Result<T, PipelineError>) -> Result<T, StageError> {
    result.map_err(|source| StageError { stage, source })
}

fn artifact(path: &Path, reason: impl Into<String>) -> PipelineError {
    PipelineError::Artifact {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Independent stream per (seed, channel, stage), via FNV-1a.
fn stage_rng(seed: u64, channel: &str, stage: &str) -> SplitRng {
    fn fnv1a(h: u64, bytes: &[u8]) -> u64 {
        bytes
            .iter()
            .fold(h, |h, &b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3))
    }
    let h = fnv1a(0xcbf2_9ce4_8422_2325, channel.as_bytes());
    let h = fnv1a(h, &[0]);
    let h = fnv1a(h, stage.as_bytes());
    SplitRng::seed_from(seed ^ h)
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
struct IngestChannel {
    id: String,
    spacecraft: String,
    excluded: bool,
    train_rows: usize,
    test_rows: usize,
    columns: usize,
    segments: Vec<Segment>,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
struct IngestManifest {
    dataset_root: PathBuf,
    channels: Vec<IngestChannel>,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
struct DetectRecord {
    tau_used: usize,
    /// First scored point's index in the test series (window_len + horizon - 1).
    offset: usize,
    scored_len: usize,
    tentative_count: usize,
    segments_scored: Vec<Segment>,
    segments_series: Vec<Segment>,
    sweep: Vec<TauSweepEntry>,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
struct EvaluateChannel {
    id: String,
    spacecraft: String,
    excluded: bool,
    tau_used: usize,
    metrics: MetricSet,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
struct EvaluateRecord {
    channels: Vec<EvaluateChannel>,
    aggregate: MetricSet,
}

fn channel_dir(cfg: &PipelineConfig, id: &str) -> PathBuf {
    cfg.out_dir.join("channels").join(id)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut bytes = serde_json::to_vec_pretty(value).expect("manifest serialization cannot fail");
    bytes.push(b'\n');
    Ok(std::fs::write(path, bytes)?)
}

fn read_json<T: serde::de::DeserializeOwned>(
    path: &Path,
    missing_hint: &str,
) -> Result<T, PipelineError> {
    if !path.is_file() {
        return Err(artifact(path, format!("not found; {missing_hint}")));
    }
    let bytes = std::fs::read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| artifact(path, e.to_string()))
}

fn read_manifest(cfg: &PipelineConfig) -> Result<IngestManifest, PipelineError> {
    read_json(
        &cfg.out_dir.join("ingest.json"),
        "run the ingest stage first",
    )
}

// ---- ingest ----------------------------------------------------------

fn ingest(cfg: &PipelineConfig) -> Result<(), PipelineError> {
    let root = if cfg.synthetic {
        let root = cfg
            .dataset_root
            .clone()
            .unwrap_or_else(|| cfg.out_dir.join("dataset"));
        synthetic::write_dataset(&root, cfg.seed())?;
        log::info!("wrote the synthetic dataset to {}", root.display());
        root
    } else {
        cfg.dataset_root
            .clone()
            .expect("validate() checked the dataset root")
    };

    let labels = loader::load_labels(&root)?;
    let (smap_total, msl_total) = labels.totals();
    log::info!("label catalog covers {smap_total} SMAP and {msl_total} MSL test points");
    if labels.entries.len() > 50
        && (smap_total, msl_total)
            != (
                crate::labels::SMAP_TOTAL_VALUES,
                crate::labels::MSL_TOTAL_VALUES,
            )
    {
        log::warn!(
            "catalog totals differ from the reference download ({} / {})",
            crate::labels::SMAP_TOTAL_VALUES,
            crate::labels::MSL_TOTAL_VALUES
        );
    }

    let mut ids = if cfg.channels.is_empty() {
        loader::list_channels(&root)?
    } else {
        let mut ids = cfg.channels.clone();
        ids.sort();
        ids.dedup();
        ids
    };
    ids.retain(|id| !id.is_empty());
    if ids.is_empty() {
        return Err(artifact(&root, "no channels to process"));
    }

    let mut channels = Vec::with_capacity(ids.len());
    for id in &ids {
        let data = loader::load_channel(&root, id, &labels)?;
        let entry = labels
            .lookup(id)
            .expect("load_channel checked the catalog row");
        channels.push(IngestChannel {
            id: id.clone(),
            spacecraft: entry.spacecraft.name().to_string(),
            excluded: is_excluded(id),
            train_rows: data.train.rows(),
            test_rows: data.test.rows(),
            columns: data.train.cols(),
            segments: data.anomaly_segments,
        });
    }
    write_json(
        &cfg.out_dir.join("ingest.json"),
        &IngestManifest {
            dataset_root: root,
            channels,
        },
    )
}

// ---- smooth ----------------------------------------------------------

fn smooth_stage(cfg: &PipelineConfig) -> Result<(), PipelineError> {
    let manifest = read_manifest(cfg)?;
    let labels = loader::load_labels(&manifest.dataset_root)?;
    for ch in &manifest.channels {
        let data = loader::load_channel(&manifest.dataset_root, &ch.id, &labels)?;
        let scaler = Scaler::fit(&data.train);
        let train_scaled = scaler.apply(&data.train)?;
        let test_scaled = scaler.apply(&data.test)?;
        let (train_smooth, trace) = smooth(&train_scaled, &cfg.smooth)?;
        let (test_smooth, _) = smooth(&test_scaled, &cfg.smooth)?;
        let mean_window = trace.windows.iter().map(|w| w.len).sum::<usize>() as f64
            / trace.windows.len().max(1) as f64;
        log::info!(
            "channel {}: mean smoothing window {mean_window:.1} over {} train points",
            ch.id,
            train_scaled.rows()
        );

        let dir = channel_dir(cfg, &ch.id);
        write_json(&dir.join("scaler.json"), &scaler)?;
        loader::write_matrix(&dir.join("train_scaled.npy"), &train_scaled)?;
        loader::write_matrix(&dir.join("test_scaled.npy"), &test_scaled)?;
        loader::write_matrix(&dir.join("train_smooth.npy"), &train_smooth)?;
        loader::write_matrix(&dir.join("test_smooth.npy"), &test_smooth)?;
    }
    Ok(())
}

// ---- search ----------------------------------------------------------

fn search_stage(cfg: &PipelineConfig) -> Result<(), PipelineError> {
    let manifest = read_manifest(cfg)?;
    let mut log_lines = Vec::new();
    for ch in &manifest.channels {
        let dir = channel_dir(cfg, &ch.id);
        let inputs = loader::load_matrix(&dir.join("train_smooth.npy"))?;
        let targets = loader::load_matrix(&dir.join("train_scaled.npy"))?;
        let windows = make_windows_split_target(&inputs, &targets, cfg.window_len, cfg.horizon, 0)?;
        let (head, validation) = windows.split_tail(cfg.validation_fraction);
        if head.is_empty() || validation.is_empty() {
            return Err(artifact(
                &dir.join("train_smooth.npy"),
                "too few windows to split into training and validation",
            ));
        }

        let fitness_cfg = FitnessConfig {
            mode: cfg.fitness_mode,
            train: cfg.train,
            detector: cfg.detector,
            mc_samples: cfg.mc_samples,
            options: ModelOptions::default(),
        };
        let data = FitnessData {
            train: &head,
            validation: &validation,
            truth: None,
        };
        let mut rng = stage_rng(cfg.seed(), &ch.id, "search");
        let result = evolve(
            &cfg.ga,
            |genome, genome_rng| train_and_score(genome, &data, &fitness_cfg, genome_rng),
            &mut rng,
        )?;

        for (slot, record) in result.winners.iter().enumerate() {
            save_model(&dir.join(format!("model_{slot}.json")), record)?;
            log::info!(
                "channel {} slot {slot}: fitness {:.6}, genome {:?}",
                ch.id,
                record.fitness,
                record
                    .genome
                    .recurrent
                    .iter()
                    .map(|g| g.units)
                    .collect::<Vec<_>>()
            );
        }
        for entry in &result.log {
            let mut line = serde_json::to_value(entry).expect("log entries always serialize");
            line.as_object_mut()
                .expect("log entries are objects")
                .insert(
                    "channel".to_string(),
                    serde_json::Value::String(ch.id.clone()),
                );
            log_lines.push(serde_json::to_string(&line).expect("json lines always serialize"));
        }
    }
    log_lines.push(String::new());
    Ok(std::fs::write(
        cfg.out_dir.join("ga_log.jsonl"),
        log_lines.join("\n"),
    )?)
}

// ---- predict ---------------------------------------------------------

/// Observed targets, ensemble moments, and the series index of each
/// scored point, as written to `pred_<id>.csv`.
struct Predictions {
    index: Vec<usize>,
    observed: Vec<f64>,
    mean: Vec<f64>,
    variance: Vec<f64>,
}

fn pred_path(cfg: &PipelineConfig, id: &str) -> PathBuf {
    cfg.out_dir.join(format!("pred_{id}.csv"))
}

fn write_predictions(path: &Path, p: &Predictions) -> Result<(), PipelineError> {
    let mut out = String::from("index,observed,mean,variance\n");
    for i in 0..p.index.len() {
        out.push_str(&format!(
            "{},{:?},{:?},{:?}\n",
            p.index[i], p.observed[i], p.mean[i], p.variance[i]
        ));
    }
    Ok(std::fs::write(path, out)?)
}

fn read_predictions(path: &Path) -> Result<Predictions, PipelineError> {
    if !path.is_file() {
        return Err(artifact(path, "not found; run the predict stage first"));
    }
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some("index,observed,mean,variance") {
        return Err(artifact(path, "unexpected header"));
    }
    let mut p = Predictions {
        index: Vec::new(),
        observed: Vec::new(),
        mean: Vec::new(),
        variance: Vec::new(),
    };
    for (n, line) in lines.enumerate() {
        let mut fields = line.split(',');
        let mut next = || {
            fields
                .next()
                .ok_or_else(|| artifact(path, format!("row {}: missing field", n + 2)))
        };
        let bad = |v: &str| artifact(path, format!("row {}: bad number {v:?}", n + 2));
        p.index.push(next()?.parse().map_err(|_| bad(line))?);
        p.observed.push(next()?.parse().map_err(|_| bad(line))?);
        p.mean.push(next()?.parse().map_err(|_| bad(line))?);
        p.variance.push(next()?.parse().map_err(|_| bad(line))?);
    }
    Ok(p)
}

fn predict_stage(cfg: &PipelineConfig) -> Result<(), PipelineError> {
    let manifest = read_manifest(cfg)?;
    for ch in &manifest.channels {
        let dir = channel_dir(cfg, &ch.id);
        let inputs = loader::load_matrix(&dir.join("test_smooth.npy"))?;
        let targets = loader::load_matrix(&dir.join("test_scaled.npy"))?;
        let windows = make_windows_split_target(&inputs, &targets, cfg.window_len, cfg.horizon, 0)?;

        let mut rng = stage_rng(cfg.seed(), &ch.id, "predict");
        let mut members: Vec<EnsembleMember> = Vec::with_capacity(cfg.ga.k);
        for slot in 0..cfg.ga.k {
            let path = dir.join(format!("model_{slot}.json"));
            let record = load_model(&path)?;
            let model = record
                .model
                .ok_or_else(|| artifact(&path, "checkpoint carries no trained weights"))?;
            let mut slot_rng = rng.split();
            let dist = mc_predict(&model, &windows, cfg.mc_samples, &mut slot_rng)?;
            members.push(dist.into_member());
        }
        let ensemble = combine(&members, &CombineConfig::default())?;

        let predictions = Predictions {
            index: (0..windows.len())
                .map(|b| windows.target_index(b))
                .collect(),
            observed: windows.targets().to_vec(),
            mean: ensemble.mean,
            variance: ensemble.variance,
        };
        write_predictions(&pred_path(cfg, &ch.id), &predictions)?;
    }
    Ok(())
}

// ---- detect ----------------------------------------------------------

/// Maps test-series segments into scored-point indexing; spans entirely
/// inside the warm-up prefix drop out.
fn to_scored(segments: &[Segment], offset: usize, scored_len: usize) -> Vec<Segment> {
    segments
        .iter()
        .filter_map(|s| {
            if s.end < offset || scored_len == 0 {
                return None;
            }
            let start = s.start.max(offset) - offset;
            let end = (s.end - offset).min(scored_len - 1);
            (start <= end).then_some(Segment { start, end })
        })
        .collect()
}

fn detect_stage(cfg: &PipelineConfig) -> Result<(), PipelineError> {
    let manifest = read_manifest(cfg)?;
    let offset = cfg.window_len + cfg.horizon - 1;
    for ch in &manifest.channels {
        let predictions = read_predictions(&pred_path(cfg, &ch.id))?;
        let scored_len = predictions.observed.len();
        let scores = detect::score(
            &predictions.observed,
            &predictions.mean,
            &predictions.variance,
        )?;
        let tentative = detect::tentative(&scores, cfg.detector.band_k);
        let truth_scored = to_scored(&ch.segments, offset, scored_len);

        let (tau_used, sweep) = match cfg.tau_grid {
            Some((lo, hi)) if !truth_scored.is_empty() => {
                let grid: Vec<usize> = (lo..=hi).collect();
                detect::tune_tau(&tentative, &truth_scored, scored_len, &grid, &cfg.detector)?
            }
            _ => (cfg.detector.tau_max, Vec::new()),
        };

        let flag_cfg = DetectorConfig {
            tau_max: tau_used,
            ..cfg.detector
        };
        let segments_scored = detect::flag(&tentative, &flag_cfg)?;
        let segments_series: Vec<Segment> = segments_scored
            .iter()
            .map(|s| Segment {
                start: s.start + offset,
                end: s.end + offset,
            })
            .collect();

        let mut csv = String::from("start,end\n");
        for s in &segments_series {
            csv.push_str(&format!("{},{}\n", s.start, s.end));
        }
        std::fs::write(cfg.out_dir.join(format!("segments_{}.csv", ch.id)), csv)?;

        write_json(
            &channel_dir(cfg, &ch.id).join("detect.json"),
            &DetectRecord {
                tau_used,
                offset,
                scored_len,
                tentative_count: tentative.iter().filter(|&&t| t).count(),
                segments_scored,
                segments_series,
                sweep,
            },
        )?;
    }
    Ok(())
}

// ---- evaluate --------------------------------------------------------

fn forecast_mse(p: &Predictions) -> f64 {
    if p.observed.is_empty() {
        return 0.0;
    }
    let sum: f64 = p
        .observed
        .iter()
        .zip(&p.mean)
        .map(|(y, m)| (y - m) * (y - m))
        .sum();
    sum / p.observed.len() as f64
}

fn evaluate_stage(cfg: &PipelineConfig) -> Result<(), PipelineError> {
    let manifest = read_manifest(cfg)?;
    let mut evals = Vec::new();
    let mut rows = Vec::new();
    for ch in &manifest.channels {
        let dir = channel_dir(cfg, &ch.id);
        let record: DetectRecord =
            read_json(&dir.join("detect.json"), "run the detect stage first")?;
        let predictions = read_predictions(&pred_path(cfg, &ch.id))?;
        let truth_scored = to_scored(&ch.segments, record.offset, record.scored_len);
        let conf = confusion(&record.segments_scored, &truth_scored, record.scored_len)?;
        let mse = forecast_mse(&predictions);
        let mut channel_metrics = metrics(&conf);
        channel_metrics.mse = Some(mse);
        evals.push(ChannelEval {
            id: ch.id.clone(),
            confusion: conf,
            mse: Some(mse),
        });
        rows.push(EvaluateChannel {
            id: ch.id.clone(),
            spacecraft: ch.spacecraft.clone(),
            excluded: ch.excluded,
            tau_used: record.tau_used,
            metrics: channel_metrics,
        });
    }

    let aggregate = match aggregate(&evals) {
        Ok(m) => m,
        Err(EvalError::AllExcluded) => {
            return Err(ConfigError::BadValue {
                key: "channels".to_string(),
                reason: "every selected channel is excluded from aggregation".to_string(),
            }
            .into())
        }
        Err(e) => return Err(e.into()),
    };

    let mut csv =
        String::from("id,spacecraft,precision,recall,f1,accuracy,forecast_mse,tau,excluded\n");
    for row in &rows {
        let m = &row.metrics;
        csv.push_str(&format!(
            "{},{},{:?},{:?},{:?},{:?},{:?},{},{}\n",
            row.id,
            row.spacecraft,
            m.precision,
            m.recall,
            m.f1,
            m.accuracy,
            m.mse.unwrap_or(f64::NAN),
            row.tau_used,
            row.excluded
        ));
    }
    csv.push_str(&format!(
        "AGGREGATE,,{:?},{:?},{:?},{:?},{:?},,\n",
        aggregate.precision,
        aggregate.recall,
        aggregate.f1,
        aggregate.accuracy,
        aggregate.mse.unwrap_or(f64::NAN)
    ));
    std::fs::write(cfg.out_dir.join("metrics.csv"), csv)?;

    write_json(
        &cfg.out_dir.join("evaluate.json"),
        &EvaluateRecord {
            channels: rows,
            aggregate,
        },
    )
}

// ---- plot ------------------------------------------------------------

fn plot_stage(cfg: &PipelineConfig) -> Result<(), PipelineError> {
    let manifest = read_manifest(cfg)?;
    for ch in &manifest.channels {
        let predictions = read_predictions(&pred_path(cfg, &ch.id))?;
        let record: DetectRecord = read_json(
            &channel_dir(cfg, &ch.id).join("detect.json"),
            "run the detect stage first",
        )?;
        let series = PlotSeries {
            observed: &predictions.observed,
            mean: &predictions.mean,
            variance: &predictions.variance,
        };
        let svg = render_plot(
            &ch.id,
            &series,
            cfg.detector.band_k,
            &record.segments_scored,
        );
        std::fs::write(cfg.out_dir.join(format!("plot_{}.svg", ch.id)), svg)?;
    }
    Ok(())
}

// ---- full run --------------------------------------------------------

/// Recomputes every channel's confusion from the serialized artifacts and
/// compares against the evaluate stage's numbers.
fn self_check(cfg: &PipelineConfig, evaluated: &EvaluateRecord) -> Result<(), PipelineError> {
    let manifest = read_manifest(cfg)?;
    for (ch, row) in manifest.channels.iter().zip(&evaluated.channels) {
        let record: DetectRecord = read_json(
            &channel_dir(cfg, &ch.id).join("detect.json"),
            "detect output missing during self-check",
        )?;
        let truth = to_scored(&ch.segments, record.offset, record.scored_len);
        let conf = confusion(&record.segments_scored, &truth, record.scored_len)?;
        let recomputed = metrics(&conf);
        if recomputed.f1 != row.metrics.f1 || recomputed.precision != row.metrics.precision {
            return Err(PipelineError::SelfCheck(format!(
                "channel {}: recomputed f1 {} != reported {}",
                ch.id, recomputed.f1, row.metrics.f1
            )));
        }
    }
    Ok(())
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunReport, StageError> {
    let started = Instant::now();
    at("ingest", ingest(cfg))?;
    at("smooth", smooth_stage(cfg))?;

    let search_started = Instant::now();
    at("search", search_stage(cfg))?;
    let search_seconds = search_started.elapsed().as_secs_f64();

    let predict_started = Instant::now();
    at("predict", predict_stage(cfg))?;
    let predict_seconds = predict_started.elapsed().as_secs_f64();

    at("detect", detect_stage(cfg))?;
    at("evaluate", evaluate_stage(cfg))?;
    at("plot", plot_stage(cfg))?;
    at(
        "report",
        assemble_report(cfg, started, search_seconds, predict_seconds),
    )
}

fn assemble_report(
    cfg: &PipelineConfig,
    started: Instant,
    search_seconds: f64,
    predict_seconds: f64,
) -> Result<RunReport, PipelineError> {
    let manifest = read_manifest(cfg)?;
    let evaluated: EvaluateRecord = read_json(
        &cfg.out_dir.join("evaluate.json"),
        "run the evaluate stage first",
    )?;
    self_check(cfg, &evaluated)?;

    let mut channels = Vec::new();
    let mut artifacts = vec!["ga_log.jsonl".to_string(), "metrics.csv".to_string()];
    let mut scored_points = 0usize;
    for (ch, row) in manifest.channels.iter().zip(&evaluated.channels) {
        let record: DetectRecord = read_json(
            &channel_dir(cfg, &ch.id).join("detect.json"),
            "run the detect stage first",
        )?;
        scored_points += record.scored_len;
        let chan_artifacts = ChannelArtifacts {
            predictions_csv: format!("pred_{}.csv", ch.id),
            segments_csv: format!("segments_{}.csv", ch.id),
            plot_svg: format!("plot_{}.svg", ch.id),
        };
        artifacts.push(chan_artifacts.predictions_csv.clone());
        artifacts.push(chan_artifacts.segments_csv.clone());
        artifacts.push(chan_artifacts.plot_svg.clone());
        for slot in 0..cfg.ga.k {
            artifacts.push(format!("channels/{}/model_{slot}.json", ch.id));
        }
        channels.push(ChannelReport {
            id: ch.id.clone(),
            spacecraft: Some(ch.spacecraft.clone()),
            excluded: ch.excluded,
            metrics: row.metrics,
            tau_used: row.tau_used,
            predicted_segments: record.segments_series,
            true_segments: ch.segments.clone(),
            artifacts: chan_artifacts,
        });
    }
    artifacts.sort();
    for rel in &artifacts {
        let path = cfg.out_dir.join(rel);
        if !path.is_file() {
            return Err(PipelineError::SelfCheck(format!(
                "report references {rel} but the file is missing"
            )));
        }
    }

    let total_epochs = {
        let log_text = std::fs::read_to_string(cfg.out_dir.join("ga_log.jsonl"))?;
        let evaluations = log_text.lines().filter(|l| !l.is_empty()).count();
        (evaluations * cfg.train.epochs).max(1)
    };
    let total_predictions = (scored_points * cfg.mc_samples * cfg.ga.k).max(1);
    let timing = Timing {
        total_seconds: started.elapsed().as_secs_f64(),
        train_seconds_per_epoch: search_seconds / total_epochs as f64,
        predictions_per_second: total_predictions as f64 / predict_seconds.max(1e-9),
    };

    let report = RunReport {
        seed: cfg.seed(),
        config: serde_json::to_value(cfg).expect("config serialization cannot fail"),
        published_targets: PublishedTargets::default(),
        channels,
        aggregate: evaluated.aggregate,
        artifacts,
        timing,
    };
    std::fs::write(cfg.out_dir.join("report.json"), to_json_bytes(&report))?;
    Ok(report)
}

/// Runs one named stage; `run` executes everything and writes the report.
pub fn run_named_stage(stage: &str, cfg: &PipelineConfig) -> Result<(), StageError> {
    match stage {
        "ingest" => at("ingest", ingest(cfg)),
        "smooth" => at("smooth", smooth_stage(cfg)),
        "search" => at("search", search_stage(cfg)),
        "predict" => at("predict", predict_stage(cfg)),
        "detect" => at("detect", detect_stage(cfg)),
        "evaluate" => at("evaluate", evaluate_stage(cfg)),
        "plot" => at("plot", plot_stage(cfg)),
        "run" => run_pipeline(cfg).map(|_| ()),
        other => unreachable!("unknown stage {other}"),
    }
}
