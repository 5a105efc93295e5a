//! The two tracking stages, keyframe judgment and relocalization.

use std::collections::VecDeque;

use log::debug;
use nalgebra::{Vector2, Vector3};

use super::{Frame, TrackingError};
use crate::config::{KeyframeConfig, PipelineConfig};
use crate::features::BinaryDescriptor;
use crate::geometry::{estimate_pose, project, MapPoint, PoseEstimate, PoseSE3, MIN_CORRESPONDENCES};
use crate::matching::match_ratio;

/// A tracked frame promoted to anchor map points.
#[derive(Debug, Clone, PartialEq)]
pub struct Keyframe {
    pub frame: Frame,
    /// World-frame points, one per triangulated feature of `frame`.
    pub map_points: Vec<MapPoint>,
}

impl Keyframe {
    pub fn new(frame: Frame) -> Self {
        let map_points = frame
            .world_points()
            .into_iter()
            .map(|(i, position)| MapPoint {
                position,
                source_frame: frame.id,
                descriptor: frame.features[i].descriptor,
                observations: 1,
            })
            .collect();
        Self { frame, map_points }
    }
}

/// Sliding window over the most recent keyframes.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalMap {
    keyframes: VecDeque<Keyframe>,
    capacity: usize,
}

impl LocalMap {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "local map needs room for one keyframe");
        Self {
            keyframes: VecDeque::with_capacity(capacity + 1),
            capacity,
        }
    }

    /// Appends a keyframe, evicting the oldest beyond capacity.
    pub fn insert(&mut self, kf: Keyframe) {
        self.keyframes.push_back(kf);
        while self.keyframes.len() > self.capacity {
            self.keyframes.pop_front();
        }
    }

    pub fn keyframes(&self) -> &VecDeque<Keyframe> {
        &self.keyframes
    }

    pub fn last_keyframe(&self) -> Option<&Keyframe> {
        self.keyframes.back()
    }

    pub fn len(&self) -> usize {
        self.keyframes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keyframes.is_empty()
    }

    pub fn n_points(&self) -> usize {
        self.keyframes.iter().map(|k| k.map_points.len()).sum()
    }

    /// `(keyframe slot, point index, point)` over the whole window.
    pub fn points(&self) -> impl Iterator<Item = (usize, usize, &MapPoint)> {
        self.keyframes
            .iter()
            .enumerate()
            .flat_map(|(k, kf)| kf.map_points.iter().enumerate().map(move |(i, p)| (k, i, p)))
    }

    pub(super) fn bump_observations(&mut self, slot: usize, idx: usize) {
        if let Some(p) = self.keyframes.get_mut(slot).and_then(|k| k.map_points.get_mut(idx)) {
            p.observations += 1;
        }
    }
}

fn solve(
    points: &[Vector3<f64>],
    pixels: &[Vector2<f64>],
    current: &Frame,
    initial: &PoseSE3,
    k: &crate::geometry::CameraIntrinsics,
    config: &PipelineConfig,
) -> Result<PoseEstimate, TrackingError> {
    if points.len() < MIN_CORRESPONDENCES.max(config.pose.min_inliers) {
        return Err(TrackingError::TooFewMatches {
            found: points.len(),
            required: MIN_CORRESPONDENCES.max(config.pose.min_inliers),
        });
    }
    debug!("frame {}: solving pose from {} correspondences", current.id, points.len());
    Ok(estimate_pose(points, pixels, k, initial, &config.pose)?)
}

/// Matches `current` against the triangulated features of `last` and solves
/// for the pose starting from `initial`. With `motion.match_window` set,
/// matches inconsistent with `initial` are dropped first.
pub fn track_last_frame(
    current: &Frame,
    last: &Frame,
    initial: &PoseSE3,
    k: &crate::geometry::CameraIntrinsics,
    config: &PipelineConfig,
) -> Result<PoseEstimate, TrackingError> {
    let train = last.world_points();
    if train.is_empty() {
        return Err(TrackingError::NoMapPoints);
    }
    if current.features.is_empty() {
        return Err(TrackingError::TooFewMatches { found: 0, required: MIN_CORRESPONDENCES });
    }
    let query: Vec<BinaryDescriptor> = current.features.iter().map(|f| f.descriptor).collect();
    let train_desc: Vec<BinaryDescriptor> = train.iter().map(|(i, _)| last.features[*i].descriptor).collect();
    let mut matches = match_ratio(&query, &train_desc, &config.matching);
    if let Some(window) = config.tracking.match_window {
        // Look-alike features anywhere in the image pass the ratio test often
        // enough to swamp the robust solver; true matches stay near the
        // prediction.
        matches.retain(|m| {
            project(&initial.transform_point(&train[m.train_idx].1), k)
                .is_ok_and(|uv| (uv - current.pixel(m.query_idx)).norm() <= window)
        });
    }
    let points: Vec<_> = matches.iter().map(|m| train[m.train_idx].1).collect();
    let pixels: Vec<_> = matches.iter().map(|m| current.pixel(m.query_idx)).collect();
    solve(&points, &pixels, current, initial, k, config)
}

/// Outcome of the local-map stage.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalMapResult {
    pub pose: PoseSE3,
    pub n_inliers: usize,
    pub n_associations: usize,
    /// Too few associations or a failed solve; `pose` is the guess.
    pub degraded: bool,
    /// `(keyframe slot, point index)` of inlier associations.
    pub matched_points: Vec<(usize, usize)>,
}

/// Features bucketed on a square grid for radius queries.
struct FeatureGrid {
    cell: f64,
    cols: usize,
    rows: usize,
    buckets: Vec<Vec<usize>>,
}

impl FeatureGrid {
    fn new(frame: &Frame, cell: f64) -> Self {
        let cols = (frame.dims.0 as f64 / cell).ceil() as usize + 1;
        let rows = (frame.dims.1 as f64 / cell).ceil() as usize + 1;
        let mut buckets = vec![Vec::new(); cols * rows];
        for (i, f) in frame.features.iter().enumerate() {
            let cx = ((f.keypoint.x / cell) as usize).min(cols - 1);
            let cy = ((f.keypoint.y / cell) as usize).min(rows - 1);
            buckets[cy * cols + cx].push(i);
        }
        Self { cell, cols, rows, buckets }
    }

    fn near(&self, p: Vector2<f64>, radius: f64) -> impl Iterator<Item = usize> + '_ {
        let lo = |v: f64| ((v - radius) / self.cell).floor().max(0.0) as usize;
        let hi = |v: f64, n: usize| (((v + radius) / self.cell).floor().max(0.0) as usize).min(n - 1);
        let (x0, x1) = (lo(p.x), hi(p.x, self.cols));
        let (y0, y1) = (lo(p.y), hi(p.y, self.rows));
        (y0..=y1).flat_map(move |y| (x0..=x1).flat_map(move |x| self.buckets[y * self.cols + x].iter().copied()))
    }
}

/// Projects the local map with `pose_guess`, associates each visible point
/// with the best-matching current feature within the search radius, and
/// refines the pose over all associations.
pub fn track_local_map(
    current: &Frame,
    pose_guess: &PoseSE3,
    map: &LocalMap,
    k: &crate::geometry::CameraIntrinsics,
    config: &PipelineConfig,
) -> LocalMapResult {
    let degraded = |n_associations| LocalMapResult {
        pose: *pose_guess,
        n_inliers: 0,
        n_associations,
        degraded: true,
        matched_points: Vec::new(),
    };
    if map.is_empty() || current.features.is_empty() {
        return degraded(0);
    }
    let radius = config.tracking.search_radius;
    let grid = FeatureGrid::new(current, radius.max(1.0));
    let (w, h) = (current.dims.0 as f64, current.dims.1 as f64);

    // Best map point per current feature: (distance, slot, index).
    let mut owner: Vec<Option<(u32, usize, usize)>> = vec![None; current.features.len()];
    for (slot, idx, mp) in map.points() {
        let pc = pose_guess.transform_point(&mp.position);
        let Ok(uv) = project(&pc, k) else {
            continue;
        };
        if uv.x < 0.0 || uv.y < 0.0 || uv.x >= w || uv.y >= h {
            continue;
        }
        let mut best: Option<(u32, usize)> = None;
        for fi in grid.near(uv, radius) {
            if (current.pixel(fi) - uv).norm_squared() > radius * radius {
                continue;
            }
            let d = mp.descriptor.hamming(&current.features[fi].descriptor);
            if best.is_none_or(|(bd, bi)| d < bd || (d == bd && fi < bi)) {
                best = Some((d, fi));
            }
        }
        if let Some((d, fi)) = best {
            if d <= config.matching.max_dist && owner[fi].is_none_or(|(od, _, _)| d < od) {
                owner[fi] = Some((d, slot, idx));
            }
        }
    }

    let mut points = Vec::new();
    let mut pixels = Vec::new();
    let mut sources = Vec::new();
    for (fi, o) in owner.iter().enumerate() {
        if let Some((_, slot, idx)) = *o {
            points.push(map.keyframes()[slot].map_points[idx].position);
            pixels.push(current.pixel(fi));
            sources.push((slot, idx));
        }
    }
    let n_associations = points.len();
    match solve(&points, &pixels, current, pose_guess, k, config) {
        Ok(est) => LocalMapResult {
            pose: est.pose,
            n_inliers: est.n_inliers,
            n_associations,
            degraded: false,
            matched_points: sources
                .into_iter()
                .zip(&est.inliers)
                .filter_map(|(s, &inl)| inl.then_some(s))
                .collect(),
        },
        Err(e) => {
            debug!("frame {}: local map stage degraded: {e}", current.id);
            degraded(n_associations)
        }
    }
}

/// The quantities a keyframe decision is made from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyframeCriteria {
    pub inliers: usize,
    /// Map points of the last keyframe.
    pub reference_points: usize,
    pub interval: u64,
    pub translation: f64,
}

impl KeyframeCriteria {
    pub fn decide(&self, config: &KeyframeConfig) -> bool {
        (self.inliers as f64) < config.ratio * self.reference_points as f64
            || self.interval >= config.max_interval
            || self.translation >= config.min_translation
    }
}

/// Whether the tracked `current` frame should become a keyframe.
pub fn keyframe_decision(current: &Frame, inliers: usize, last_kf: &Keyframe, config: &KeyframeConfig) -> bool {
    keyframe_criteria(current, inliers, last_kf).decide(config)
}

pub fn keyframe_criteria(current: &Frame, inliers: usize, last_kf: &Keyframe) -> KeyframeCriteria {
    KeyframeCriteria {
        inliers,
        reference_points: last_kf.map_points.len(),
        interval: current.id.saturating_sub(last_kf.frame.id),
        translation: (current.pose.center() - last_kf.frame.pose.center()).norm(),
    }
}

/// Brute-force matching against every keyframe of the window; the solve
/// with the most inliers wins.
pub fn relocalize(
    current: &Frame,
    map: &LocalMap,
    k: &crate::geometry::CameraIntrinsics,
    config: &PipelineConfig,
) -> Option<PoseEstimate> {
    if current.features.is_empty() {
        return None;
    }
    let query: Vec<BinaryDescriptor> = current.features.iter().map(|f| f.descriptor).collect();
    let mut best: Option<PoseEstimate> = None;
    for kf in map.keyframes().iter().rev() {
        if kf.map_points.is_empty() {
            continue;
        }
        let train: Vec<BinaryDescriptor> = kf.map_points.iter().map(|p| p.descriptor).collect();
        let matches = match_ratio(&query, &train, &config.matching);
        let points: Vec<_> = matches.iter().map(|m| kf.map_points[m.train_idx].position).collect();
        let pixels: Vec<_> = matches.iter().map(|m| current.pixel(m.query_idx)).collect();
        if let Ok(est) = solve(&points, &pixels, current, &kf.frame.pose, k, config) {
            if best.as_ref().is_none_or(|b| est.n_inliers > b.n_inliers) {
                best = Some(est);
            }
        }
    }
    best
}
