//! The frame-to-frame tracking loop.
//!
//! Each stereo pair is preprocessed, turned into a [`Frame`], tracked first
//! against the previous frame and then against a sliding window of
//! keyframes, and finally judged for keyframe promotion. Frames that cannot
//! be tracked even after relocalization are reported as lost and left out
//! of the trajectory.

mod frame;
mod tracking;

use std::fmt::{self, Write as _};
use std::time::Instant;

use log::{debug, warn};
use thiserror::Error;

use crate::config::PipelineConfig;
use crate::eval::Trajectory;
use crate::features::SamplingPattern;
use crate::geometry::{GeometryError, PoseSE3, StereoRig};
use crate::image::{GrayImage, ImageError};

pub use frame::{build_frame, preprocess, Frame};
pub use tracking::{
    keyframe_criteria, keyframe_decision, relocalize, track_last_frame, track_local_map, Keyframe,
    KeyframeCriteria, LocalMap, LocalMapResult,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdometryError {
    #[error("left image is {left:?} but right image is {right:?}")]
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("timestamp {t} does not increase (previous {previous})")]
    NonMonotonicTimestamp { t: f64, previous: f64 },
    #[error("a sequence needs at least 2 frames, got {0}")]
    TooFewFrames(usize),
}

/// Why a tracking stage produced no pose.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackingError {
    #[error("reference frame has no triangulated points")]
    NoMapPoints,
    #[error("{found} matches, {required} required")]
    TooFewMatches { found: usize, required: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackingStatus {
    Initializing,
    Tracking,
    Lost,
}

impl fmt::Display for TrackingStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Initializing => "initializing",
            Self::Tracking => "tracking",
            Self::Lost => "lost",
        })
    }
}

/// Per-frame outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub id: u64,
    pub timestamp: f64,
    pub status: TrackingStatus,
    pub n_features: usize,
    pub n_stereo: usize,
    /// Inliers of the pose that was kept.
    pub n_inliers: usize,
    pub n_inliers_last_frame: usize,
    pub n_inliers_local_map: usize,
    pub heq_applied: bool,
    pub relocalized: bool,
    pub keyframe: bool,
    pub keyframe_criteria: Option<KeyframeCriteria>,
    /// Moved further than the per-frame sanity gate since the last tracked frame.
    pub motion_flagged: bool,
    pub ms_total: f64,
}

/// Records of every processed frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunReport {
    pub frames: Vec<FrameRecord>,
}

impl RunReport {
    pub fn n_lost(&self) -> usize {
        self.frames.iter().filter(|f| f.status == TrackingStatus::Lost).count()
    }

    pub fn first_lost(&self) -> Option<u64> {
        self.frames
            .iter()
            .find(|f| f.status == TrackingStatus::Lost)
            .map(|f| f.id)
    }

    pub fn n_keyframes(&self) -> usize {
        self.frames.iter().filter(|f| f.keyframe).count()
    }

    /// The report with timings zeroed, for run-to-run comparison.
    pub fn without_timing(&self) -> Self {
        Self {
            frames: self
                .frames
                .iter()
                .map(|f| FrameRecord {
                    ms_total: 0.0,
                    ..f.clone()
                })
                .collect(),
        }
    }

    /// One row per frame: `id,timestamp,status,n_features,n_stereo,n_inliers,heq_applied,ms_total`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("id,timestamp,status,n_features,n_stereo,n_inliers,heq_applied,ms_total\n");
        for f in &self.frames {
            writeln!(
                s,
                "{},{},{},{},{},{},{},{:.3}",
                f.id, f.timestamp, f.status, f.n_features, f.n_stereo, f.n_inliers, f.heq_applied, f.ms_total
            )
            .expect("writing to String");
        }
        s
    }
}

/// Sequential tracker owning all mutable state of a run.
pub struct Tracker {
    rig: StereoRig,
    config: PipelineConfig,
    pattern: SamplingPattern,
    status: TrackingStatus,
    last_frame: Option<Frame>,
    /// Pose of the tracked frame before `last_frame`, for the velocity model.
    previous_pose: Option<PoseSE3>,
    map: LocalMap,
    trajectory: Vec<(f64, PoseSE3)>,
    report: RunReport,
    next_id: u64,
}

impl Tracker {
    pub fn new(rig: StereoRig, config: PipelineConfig) -> Self {
        Self::with_pattern(rig, config, SamplingPattern::builtin())
    }

    pub fn with_pattern(rig: StereoRig, config: PipelineConfig, pattern: SamplingPattern) -> Self {
        let window = config.tracking.window;
        Self {
            rig,
            config,
            pattern,
            status: TrackingStatus::Initializing,
            last_frame: None,
            previous_pose: None,
            map: LocalMap::new(window),
            trajectory: Vec::new(),
            report: RunReport::default(),
            next_id: 0,
        }
    }

    pub fn status(&self) -> TrackingStatus {
        self.status
    }

    pub fn local_map(&self) -> &LocalMap {
        &self.map
    }

    pub fn report(&self) -> &RunReport {
        &self.report
    }

    /// Tracked camera-to-world poses so far.
    pub fn trajectory(&self) -> Trajectory {
        Trajectory::new(
            self.trajectory
                .iter()
                .map(|(t, p)| (*t, p.inverse()))
                .collect(),
        )
        .expect("timestamps are checked on entry")
    }

    pub fn finish(self) -> (Trajectory, RunReport) {
        (self.trajectory(), self.report)
    }

    fn predict(&self, last: &PoseSE3) -> PoseSE3 {
        match (self.config.tracking.constant_velocity, &self.previous_pose) {
            (true, Some(prev)) => last.compose(&prev.inverse()).compose(last),
            _ => *last,
        }
    }

    /// Processes one raw stereo pair and returns its record.
    pub fn process(
        &mut self,
        timestamp: f64,
        left_raw: &GrayImage,
        right_raw: &GrayImage,
    ) -> Result<&FrameRecord, OdometryError> {
        let start = Instant::now();
        if let Some(prev) = self.report.frames.last() {
            if !(timestamp > prev.timestamp) {
                return Err(OdometryError::NonMonotonicTimestamp {
                    t: timestamp,
                    previous: prev.timestamp,
                });
            }
        }
        let id = self.next_id;
        self.next_id += 1;
        let (left, right, heq_applied) = preprocess(left_raw, right_raw, &self.config.heq)?;
        let mut frame = build_frame(id, timestamp, &left, &right, heq_applied, &self.rig, &self.config, &self.pattern)?;

        let mut record = FrameRecord {
            id,
            timestamp,
            status: TrackingStatus::Lost,
            n_features: frame.features.len(),
            n_stereo: frame.stereo.len(),
            n_inliers: 0,
            n_inliers_last_frame: 0,
            n_inliers_local_map: 0,
            heq_applied,
            relocalized: false,
            keyframe: false,
            keyframe_criteria: None,
            motion_flagged: false,
            ms_total: 0.0,
        };

        let Some(last) = self.last_frame.as_ref() else {
            // Bootstrap: the first frame defines the world frame.
            frame.pose = PoseSE3::identity();
            record.status = TrackingStatus::Initializing;
            record.keyframe = true;
            record.n_inliers = frame.n_points();
            self.accept(frame, true);
            record.ms_total = start.elapsed().as_secs_f64() * 1e3;
            self.status = TrackingStatus::Initializing;
            self.report.frames.push(record);
            return Ok(self.report.frames.last().expect("just pushed"));
        };

        let k = self.rig.intrinsics;
        let guess = self.predict(&last.pose);
        let stage1 = track_last_frame(&frame, last, &guess, &k, &self.config);
        if let Err(e) = &stage1 {
            debug!("frame {id}: last-frame stage failed: {e}");
        }
        let guess2 = stage1.as_ref().map_or(guess, |e| e.pose);
        record.n_inliers_last_frame = stage1.as_ref().map_or(0, |e| e.n_inliers);
        let mut stage2 = track_local_map(&frame, &guess2, &self.map, &k, &self.config);
        record.n_inliers_local_map = stage2.n_inliers;

        let mut pose = None;
        if !stage2.degraded {
            pose = Some((stage2.pose, stage2.n_inliers));
        } else if let Ok(e) = &stage1 {
            pose = Some((e.pose, e.n_inliers));
        } else if let Some(e) = relocalize(&frame, &self.map, &k, &self.config) {
            record.relocalized = true;
            stage2 = track_local_map(&frame, &e.pose, &self.map, &k, &self.config);
            pose = Some(if stage2.degraded {
                (e.pose, e.n_inliers)
            } else {
                (stage2.pose, stage2.n_inliers)
            });
        }

        match pose {
            Some((pose, n_inliers)) => {
                for &(slot, idx) in &stage2.matched_points {
                    self.map.bump_observations(slot, idx);
                }
                frame.pose = pose;
                record.status = TrackingStatus::Tracking;
                record.n_inliers = n_inliers;
                let moved = (pose.center() - self.last_frame.as_ref().expect("checked").pose.center()).norm();
                if moved > self.config.tracking.max_frame_translation {
                    warn!("frame {id}: moved {moved:.3} m since the last tracked frame");
                    record.motion_flagged = true;
                }
                let last_kf = self.map.last_keyframe().expect("bootstrap inserts a keyframe");
                let criteria = keyframe_criteria(&frame, n_inliers, last_kf);
                let is_kf = criteria.decide(&self.config.keyframe);
                debug!("frame {id}: keyframe {is_kf} from {criteria:?}");
                record.keyframe_criteria = Some(criteria);
                record.keyframe = is_kf;
                self.accept(frame, is_kf);
                self.status = TrackingStatus::Tracking;
            }
            None => {
                warn!("frame {id}: tracking lost");
                self.status = TrackingStatus::Lost;
            }
        }
        record.ms_total = start.elapsed().as_secs_f64() * 1e3;
        self.report.frames.push(record);
        Ok(self.report.frames.last().expect("just pushed"))
    }

    fn accept(&mut self, frame: Frame, keyframe: bool) {
        self.trajectory.push((frame.timestamp, frame.pose));
        self.previous_pose = self.last_frame.as_ref().map(|f| f.pose);
        if keyframe {
            self.map.insert(Keyframe::new(frame.clone()));
        }
        self.last_frame = Some(frame);
    }
}

/// Runs the tracker over `(timestamp, left, right)` pairs.
pub fn process_sequence<I>(
    source: I,
    rig: &StereoRig,
    config: &PipelineConfig,
) -> Result<(Trajectory, RunReport), OdometryError>
where
    I: IntoIterator<Item = (f64, GrayImage, GrayImage)>,
{
    let mut tracker = Tracker::new(*rig, config.clone());
    for (t, left, right) in source {
        tracker.process(t, &left, &right)?;
    }
    let n = tracker.report().frames.len();
    if n < 2 {
        return Err(OdometryError::TooFewFrames(n));
    }
    Ok(tracker.finish())
}
