//! Filesystem loader for a telemetry dataset laid out as
//! `<root>/train/<id>.npy`, `<root>/test/<id>.npy` and
//! `<root>/labeled_anomalies.csv`. Channels are keyed by file stem; a
//! channel is loadable only if both splits exist, share a column count,
//! and the label catalog has a row for it.

use std::fs;
use std::path::{Path, PathBuf};

use varband_core::dataset::ChannelData;
use varband_core::Matrix;

use crate::labels::{parse_labels_csv, LabelTable, LabelsError};
use crate::npy::{parse_npy, NpyError};

pub const LABELS_FILE: &str = "labeled_anomalies.csv";
pub const TRAIN_DIR: &str = "train";
pub const TEST_DIR: &str = "test";

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("missing file or directory: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("{}: {source}", path.display())]
    Npy { path: PathBuf, source: NpyError },
    #[error(transparent)]
    Labels(#[from] LabelsError),
    #[error("channel {0:?} has no row in the label catalog")]
    UnlabeledChannel(String),
    #[error("channel {id:?}: train has {train} columns, test has {test}")]
    ColumnMismatch {
        id: String,
        train: usize,
        test: usize,
    },
    #[error("channel {id:?}: labels expect {labeled} test values, file has {actual}")]
    LengthMismatch {
        id: String,
        labeled: usize,
        actual: usize,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn load_labels(root: &Path) -> Result<LabelTable, LoadError> {
    let path = root.join(LABELS_FILE);
    if !path.is_file() {
        return Err(LoadError::MissingFile(path));
    }
    Ok(parse_labels_csv(&fs::read_to_string(path)?)?)
}

pub fn load_matrix(path: &Path) -> Result<Matrix, LoadError> {
    if !path.is_file() {
        return Err(LoadError::MissingFile(path.to_path_buf()));
    }
    parse_npy(&fs::read(path)?).map_err(|source| LoadError::Npy {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_matrix(path: &Path, m: &Matrix) -> Result<(), LoadError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(fs::write(path, crate::npy::write_npy(m))?)
}

/// Sorted channel ids present in both the train and test directories.
pub fn list_channels(root: &Path) -> Result<Vec<String>, LoadError> {
    let stems = |dir: &Path| -> Result<Vec<String>, LoadError> {
        if !dir.is_dir() {
            return Err(LoadError::MissingFile(dir.to_path_buf()));
        }
        let mut out = Vec::new();
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "npy") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    out.push(stem.to_string());
                }
            }
        }
        Ok(out)
    };
    let mut train = stems(&root.join(TRAIN_DIR))?;
    let test = stems(&root.join(TEST_DIR))?;
    train.retain(|id| test.contains(id));
    train.sort();
    Ok(train)
}

/// Loads one channel's splits and attaches its label catalog row. The
/// forecast target is always the first column, matching the catalog's
/// convention of labelling the telemetry value channel.
pub fn load_channel(root: &Path, id: &str, labels: &LabelTable) -> Result<ChannelData, LoadError> {
    let entry = labels
        .lookup(id)
        .ok_or_else(|| LoadError::UnlabeledChannel(id.to_string()))?;
    let train = load_matrix(&root.join(TRAIN_DIR).join(format!("{id}.npy")))?;
    let test = load_matrix(&root.join(TEST_DIR).join(format!("{id}.npy")))?;
    if train.cols() != test.cols() {
        return Err(LoadError::ColumnMismatch {
            id: id.to_string(),
            train: train.cols(),
            test: test.cols(),
        });
    }
    if entry.num_values != test.rows() {
        return Err(LoadError::LengthMismatch {
            id: id.to_string(),
            labeled: entry.num_values,
            actual: test.rows(),
        });
    }
    Ok(ChannelData {
        id: id.to_string(),
        train,
        test,
        anomaly_segments: entry.segments.clone(),
        target_col: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::Spacecraft;
    use varband_core::Segment;

    fn write_fixture(root: &Path) {
        let train = Matrix::from_vec(6, 2, (0..12).map(f64::from).collect()).unwrap();
        let test = Matrix::from_vec(4, 2, (0..8).map(|v| f64::from(v) * 0.5).collect()).unwrap();
        write_matrix(&root.join("train/A-1.npy"), &train).unwrap();
        write_matrix(&root.join("test/A-1.npy"), &test).unwrap();
        write_matrix(&root.join("train/B-1.npy"), &train).unwrap();
        write_matrix(&root.join("test/B-1.npy"), &test).unwrap();
        std::fs::write(
            root.join(LABELS_FILE),
            "chan_id,spacecraft,anomaly_sequences,num_values\n\
             A-1,SMAP,\"[[1, 2]]\",4\n\
             B-1,MSL,\"[]\",4\n",
        )
        .unwrap();
    }

    #[test]
    fn loads_a_channel_with_its_labels() {
        let dir = tempfile::tempdir().unwrap();
        write_fixture(dir.path());
        let labels = load_labels(dir.path()).unwrap();
        assert_eq!(labels.entries[0].spacecraft, Spacecraft::Smap);

        let ch = load_channel(dir.path(), "A-1", &labels).unwrap();
        assert_eq!(ch.id, "A-1");
        assert_eq!((ch.train.rows(), ch.train.cols()), (6, 2));
        assert_eq!(ch.test.rows(), 4);
        assert_eq!(ch.anomaly_segments, vec![Segment { start: 1, end: 2 }]);
        assert_eq!(ch.target_col, 0);
    }

    #[test]
    fn lists_channels_present_in_both_splits() {
        let dir = tempfile::tempdir().unwrap();
        write_fixture(dir.path());
        write_matrix(&dir.path().join("train/C-1.npy"), &Matrix::zeros(2, 1)).unwrap();
        assert_eq!(list_channels(dir.path()).unwrap(), vec!["A-1", "B-1"]);
    }

    #[test]
    fn missing_files_name_the_path() {
        let dir = tempfile::tempdir().unwrap();
        write_fixture(dir.path());
        let labels = load_labels(dir.path()).unwrap();
        std::fs::remove_file(dir.path().join("test/A-1.npy")).unwrap();
        match load_channel(dir.path(), "A-1", &labels) {
            Err(LoadError::MissingFile(p)) => assert!(p.ends_with("test/A-1.npy")),
            other => panic!("expected MissingFile, got {other:?}"),
        }
        assert!(matches!(
            load_labels(&dir.path().join("nowhere")),
            Err(LoadError::MissingFile(_))
        ));
    }

    #[test]
    fn unlabeled_channels_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_fixture(dir.path());
        let labels = load_labels(dir.path()).unwrap();
        write_matrix(&dir.path().join("train/Z-1.npy"), &Matrix::zeros(2, 1)).unwrap();
        write_matrix(&dir.path().join("test/Z-1.npy"), &Matrix::zeros(2, 1)).unwrap();
        assert!(matches!(
            load_channel(dir.path(), "Z-1", &labels),
            Err(LoadError::UnlabeledChannel(id)) if id == "Z-1"
        ));
    }

    #[test]
    fn split_column_counts_must_agree() {
        let dir = tempfile::tempdir().unwrap();
        write_fixture(dir.path());
        let labels = load_labels(dir.path()).unwrap();
        write_matrix(&dir.path().join("test/A-1.npy"), &Matrix::zeros(4, 3)).unwrap();
        assert!(matches!(
            load_channel(dir.path(), "A-1", &labels),
            Err(LoadError::ColumnMismatch {
                train: 2,
                test: 3,
                ..
            })
        ));
    }

    #[test]
    fn labeled_length_must_match_the_test_file() {
        let dir = tempfile::tempdir().unwrap();
        write_fixture(dir.path());
        let labels = load_labels(dir.path()).unwrap();
        write_matrix(&dir.path().join("test/B-1.npy"), &Matrix::zeros(9, 2)).unwrap();
        assert!(matches!(
            load_channel(dir.path(), "B-1", &labels),
            Err(LoadError::LengthMismatch {
                labeled: 4,
                actual: 9,
                ..
            })
        ));
    }

    #[test]
    fn corrupt_npy_reports_the_file() {
        let dir = tempfile::tempdir().unwrap();
        write_fixture(dir.path());
        let labels = load_labels(dir.path()).unwrap();
        std::fs::write(dir.path().join("train/A-1.npy"), b"not npy at all").unwrap();
        match load_channel(dir.path(), "A-1", &labels) {
            Err(LoadError::Npy { path, .. }) => assert!(path.ends_with("train/A-1.npy")),
            other => panic!("expected Npy error, got {other:?}"),
        }
    }
}
