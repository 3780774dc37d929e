use thiserror::Error;

use crate::darknet::DarknetError;
use crate::evalbench::EvalError;
use crate::imgcore::ImageError;
use crate::nnexec::NnError;
use crate::posecv::PoseError;
use crate::stereo3d::StereoError;

/// Crate-level error, one variant per module.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Darknet(#[from] DarknetError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Pose(#[from] PoseError),
    #[error(transparent)]
    Stereo(#[from] StereoError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}
