//! Per-frame preprocessing, feature extraction and stereo triangulation.

use nalgebra::{Vector2, Vector3};

use super::OdometryError;
use crate::config::PipelineConfig;
use crate::features::{detect_and_describe, Feature, FeatureConfig, SamplingPattern};
use crate::geometry::{triangulate, PoseSE3, StereoRig};
use crate::histeq::HeqConfig;
use crate::image::{build_pyramid, GrayImage};
use crate::matching::{stereo_match, StereoObservation};

/// A stereo pair reduced to left-image features with optional depth.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub id: u64,
    pub timestamp: f64,
    pub features: Vec<Feature>,
    pub stereo: Vec<StereoObservation>,
    /// Triangulated point in the camera frame, indexed like `features`.
    pub points_cam: Vec<Option<Vector3<f64>>>,
    /// World-to-camera; set once the frame is tracked.
    pub pose: PoseSE3,
    pub heq_applied: bool,
    pub dims: (usize, usize),
}

impl Frame {
    pub fn n_points(&self) -> usize {
        self.points_cam.iter().filter(|p| p.is_some()).count()
    }

    pub fn pixel(&self, i: usize) -> Vector2<f64> {
        let kp = &self.features[i].keypoint;
        Vector2::new(kp.x, kp.y)
    }

    /// Indices and world positions of all triangulated features.
    pub fn world_points(&self) -> Vec<(usize, Vector3<f64>)> {
        let to_world = self.pose.inverse();
        self.points_cam
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.map(|p| (i, to_world.transform_point(&p))))
            .collect()
    }
}

/// Applies the contrast policy to both images. The flag is set if either
/// image was equalized.
pub fn preprocess(
    left_raw: &GrayImage,
    right_raw: &GrayImage,
    heq: &HeqConfig,
) -> Result<(GrayImage, GrayImage, bool), OdometryError> {
    if left_raw.dims() != right_raw.dims() {
        return Err(OdometryError::DimensionMismatch {
            left: left_raw.dims(),
            right: right_raw.dims(),
        });
    }
    let (left, a) = heq.apply(left_raw);
    let (right, b) = heq.apply(right_raw);
    Ok((left, right, a || b))
}

fn extract(img: &GrayImage, config: &FeatureConfig, pattern: &SamplingPattern) -> Result<Vec<Feature>, OdometryError> {
    let pyramid = build_pyramid(img, config.pyramid_levels, config.pyramid_scale)?;
    Ok(detect_and_describe(&pyramid, config, pattern))
}

/// Extracts features on both (preprocessed) images, matches them along rows
/// and triangulates every stereo observation. The two extractions run on
/// separate threads; the result does not depend on scheduling.
#[allow(clippy::too_many_arguments)]
pub fn build_frame(
    id: u64,
    timestamp: f64,
    left: &GrayImage,
    right: &GrayImage,
    heq_applied: bool,
    rig: &StereoRig,
    config: &PipelineConfig,
    pattern: &SamplingPattern,
) -> Result<Frame, OdometryError> {
    if left.dims() != right.dims() {
        return Err(OdometryError::DimensionMismatch {
            left: left.dims(),
            right: right.dims(),
        });
    }
    let (left_features, right_features) = std::thread::scope(|s| {
        let handle = s.spawn(|| extract(right, &config.features, pattern));
        let l = extract(left, &config.features, pattern);
        (l, handle.join().expect("feature extraction thread panicked"))
    });
    let features = left_features?;
    let right_features = right_features?;

    let sc = &config.stereo;
    let stereo = stereo_match(
        &features,
        &right_features,
        sc.row_tol,
        sc.d_min,
        sc.d_max_for_width(left.width()),
        sc.max_dist,
    );
    let mut points_cam = vec![None; features.len()];
    for obs in &stereo {
        let kp = &features[obs.left_idx].keypoint;
        points_cam[obs.left_idx] = triangulate(Vector2::new(kp.x, kp.y), obs.disparity, rig).ok();
    }
    Ok(Frame {
        id,
        timestamp,
        features,
        stereo,
        points_cam,
        pose: PoseSE3::identity(),
        heq_applied,
        dims: left.dims(),
    })
}
