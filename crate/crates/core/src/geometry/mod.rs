//! Camera model, stereo triangulation, SE(3) algebra and pose estimation.

mod camera;
mod se3;
mod solver;

use nalgebra::Vector3;
use thiserror::Error;

use crate::features::BinaryDescriptor;

pub use camera::{project, project_right, triangulate, CameraIntrinsics, StereoRig};
pub use se3::{hat, orthonormalize, se3_exp, se3_log, so3_exp, so3_log, PoseSE3};
pub use solver::{
    estimate_pose, reprojection_jacobian, reprojection_residual, PoseConfig, PoseEstimate,
    MIN_CORRESPONDENCES,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid calibration: {0}")]
    InvalidCalibration(String),
    #[error("disparity must be positive, got {0}")]
    NonPositiveDisparity(f64),
    #[error("triangulated depth {depth} exceeds max depth {max_depth}")]
    TooDeep { depth: f64, max_depth: f64 },
    #[error("point at depth {0} is not in front of the camera")]
    BehindCamera(f64),
    #[error("pose estimation needs at least 6 correspondences, got {0}")]
    TooFewCorrespondences(usize),
    #[error("tracking failure: {inliers} inliers, {required} required")]
    TrackingFailure { inliers: usize, required: usize },
}

/// A triangulated landmark in the world frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MapPoint {
    pub position: Vector3<f64>,
    pub source_frame: u64,
    pub descriptor: BinaryDescriptor,
    pub observations: u32,
}
