//! Evaluation harnesses: dataset ingestion, detection confusion counts,
//! orientation-error statistics and latency benchmarking.

mod bench;
mod dataset;
mod matching;
mod orientation;
mod run;

use std::path::PathBuf;

use thiserror::Error;

pub use bench::{bench_inference, BenchReport, BenchRow, MIN_ITERATIONS};
pub use dataset::{load_labels, parse_label_file, parse_pose_file, Dataset, DatasetEntry, GroundTruthLabel, PoseLabel};
pub use matching::{match_detections, DetectionMetrics, ImageMatch, MATCH_IOU};
pub use orientation::{aggregate_orientation, orientation_error, OrientationStats, HISTOGRAM_BINS};
pub use run::{evaluate_detections, evaluate_orientation, run_eval, EvalReport, OrientationReport};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{path}:{line}: {msg}")]
    Label { path: PathBuf, line: usize, msg: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("dataset {0} contains no images")]
    EmptyDataset(PathBuf),
    #[error("no orientation errors to aggregate")]
    NoSamples,
    #[error("benchmark: {0}")]
    Bench(String),
    #[error(transparent)]
    Image(#[from] crate::imgcore::ImageError),
    #[error(transparent)]
    Nn(#[from] crate::nnexec::NnError),
}
