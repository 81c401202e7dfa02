//! Mask-based spatial filtering: covariance estimation, the spatial-prediction
//! multichannel Wiener filter (SP-MWF), reference selection and TF masking.

mod covariance;
mod linalg;
mod mask;
mod spmwf;

use thiserror::Error;

pub use covariance::{estimate_covariances, CovariancePair};
pub use linalg::{cholesky_solve, HermitianSolveError};
pub use mask::{read_mask, write_mask, MaskRole, TfMask};
pub use spmwf::{
    apply_filter, beamform_speaker, mask_postfilter, select_reference, spmwf_weights,
    spmwf_weights_loaded, BeamformConfig, FilterBank, DIAGONAL_LOADING,
};

#[derive(Debug, Error)]
pub enum BeamformError {
    #[error("{role:?} mask is zero at every frame of frequency bin {bin}")]
    EmptyMask { role: MaskRole, bin: usize },
    #[error("noise covariance is singular at frequency bin {bin} after diagonal loading")]
    SingularNoise { bin: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid mask: {0}")]
    InvalidMask(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
