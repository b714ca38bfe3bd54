//! Grasp-space modeling for an underactuated three-fingered gripper.
//!
//! A small expert dataset of grasp primitives (gripper pose, spread angle,
//! tabletop plane) is compressed by a conditional VAE whose latent space can
//! then be sampled or swept to generate new grasp configurations. The crate
//! also estimates the intrinsic dimension of the grasp space with kernel-PCA
//! and ships a synthetic analytic grasp task so the whole pipeline can be
//! trained, evaluated and swept without a physics simulator.

pub mod dense_nn;
pub mod dim_estimator;
pub mod eval_harness;
pub mod grasp_data;
pub mod hgg_vae;
pub mod latent_explorer;
pub mod par;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("degenerate dataset: dimension '{dimension}' has max == min")]
    DegenerateDataset { dimension: String },
    #[error("degenerate orientation: quaternion norm below 1e-9")]
    DegenerateOrientation,
    #[error("shape error: {0}")]
    Shape(String),
    #[error("non-finite value in {context}")]
    NonFinite { context: String },
    #[error("usage error: {0}")]
    Usage(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("correlation undefined: input series is constant")]
    UndefinedCorrelation,
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI; each error family gets its own code.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) => 3,
            Error::Format { .. } => 4,
            Error::Validation(_)
            | Error::DegenerateDataset { .. }
            | Error::DegenerateOrientation => 5,
            Error::Shape(_) | Error::Usage(_) => 2,
            Error::NonFinite { .. } | Error::Numeric(_) | Error::UndefinedCorrelation => 6,
        }
    }
}
