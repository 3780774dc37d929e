use std::path::Path;

use thiserror::Error;
use tubeloc::darknet::DarknetError;
use tubeloc::evalbench::EvalError;
use tubeloc::imgcore::ImageError;
use tubeloc::nnexec::NnError;
use tubeloc::posecv::PoseError;
use tubeloc::stereo3d::StereoError;

/// Failure of one command; the variant fixes the process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("[{stage}] {msg}")]
    Stage { stage: &'static str, msg: String },
    /// Some inputs failed after their errors were already reported.
    #[error("{failed} of {total} input(s) failed")]
    Partial { code: i32, failed: usize, total: usize },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 1,
            Self::Data(_) => 2,
            Self::Stage { .. } => 3,
            Self::Partial { code, .. } => *code,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::Data(format!("{}: {e}", path.display()))
    }

    /// Prefixes the message with `what` unless it already names it.
    pub fn context(self, what: impl std::fmt::Display) -> Self {
        let what = what.to_string();
        match self {
            Self::Data(msg) if !msg.contains(&what) => Self::Data(format!("{what}: {msg}")),
            Self::Stage { stage, msg } if !msg.contains(&what) => Self::Stage { stage, msg: format!("{what}: {msg}") },
            other => other,
        }
    }

    pub fn in_file(self, path: &Path) -> Self {
        self.context(path.display())
    }

    pub fn stage(stage: &'static str, e: impl std::fmt::Display) -> Self {
        Self::Stage { stage, msg: e.to_string() }
    }
}

impl From<ImageError> for CliError {
    fn from(e: ImageError) -> Self {
        match e {
            ImageError::EmptyDetection | ImageError::EmptyCrop => Self::stage("crop", e),
            _ => Self::Data(e.to_string()),
        }
    }
}

impl From<DarknetError> for CliError {
    fn from(e: DarknetError) -> Self {
        Self::Data(e.to_string())
    }
}

impl From<NnError> for CliError {
    fn from(e: NnError) -> Self {
        match e {
            NnError::Image(e) => e.into(),
            NnError::Darknet(e) => e.into(),
            NnError::Sidecar { .. } => Self::Data(e.to_string()),
            NnError::Calibration(_) => Self::stage("quantize", e),
            _ => Self::stage("detect", e),
        }
    }
}

impl From<PoseError> for CliError {
    fn from(e: PoseError) -> Self {
        let msg = e.to_string();
        // the message already carries its `[stage]` tag
        let msg = msg.strip_prefix(&format!("[{}] ", e.stage())).map(str::to_string).unwrap_or(msg);
        Self::Stage { stage: e.stage(), msg }
    }
}

impl From<StereoError> for CliError {
    fn from(e: StereoError) -> Self {
        match e {
            StereoError::MissingDepth { .. } | StereoError::InvalidDisparity(_) => Self::stage("lift", e),
            _ => Self::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Nn(e) => e.into(),
            EvalError::Image(e) => e.into(),
            EvalError::Bench(_) => Self::stage("bench", e),
            _ => Self::Data(e.to_string()),
        }
    }
}
