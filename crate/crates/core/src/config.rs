//! Pipeline configuration and its `key = value` text form.
//!
//! Every tunable of the pipeline has a dotted key and a default. Parsing
//! starts from the defaults, rejects unknown keys, and [`PipelineConfig::to_text`]
//! writes every key so a resolved file reproduces a run exactly.

use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use crate::features::FeatureConfig;
use crate::geometry::PoseConfig;
use crate::histeq::HeqConfig;
use crate::matching::{MatchConfig, StereoConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Malformed { line: usize },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: invalid value {value:?} for {key}: {reason}")]
    InvalidValue {
        line: usize,
        key: String,
        value: String,
        reason: String,
    },
}

/// When a new keyframe is inserted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyframeConfig {
    /// Insert when inliers fall below this fraction of the last keyframe's points.
    pub ratio: f64,
    pub max_interval: u64,
    /// Meters travelled since the last keyframe.
    pub min_translation: f64,
}

impl Default for KeyframeConfig {
    fn default() -> Self {
        Self {
            ratio: 0.5,
            max_interval: 30,
            min_translation: 0.3,
        }
    }
}

/// Tracking-loop settings beyond the per-module ones.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingConfig {
    /// Number of keyframes in the local map.
    pub window: usize,
    /// Projection search radius for local-map association, pixels.
    pub search_radius: f64,
    /// Predict with the last inter-frame motion instead of the last pose.
    pub constant_velocity: bool,
    /// Consecutive tracked poses further apart than this are flagged.
    pub max_frame_translation: f64,
    /// Last-frame matches whose point projects further than this many
    /// pixels from the match under the predicted pose are dropped.
    pub match_window: Option<f64>,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        Self {
            window: 7,
            search_radius: 8.0,
            constant_velocity: false,
            max_frame_translation: 1.0,
            match_window: Some(64.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PipelineConfig {
    pub heq: HeqConfig,
    pub features: FeatureConfig,
    pub matching: MatchConfig,
    pub stereo: StereoConfig,
    pub pose: PoseConfig,
    pub keyframe: KeyframeConfig,
    pub tracking: TrackingConfig,
}

/// Every recognised key, in serialization order.
pub const KEYS: &[&str] = &[
    "heq.mode",
    "heq.range_threshold",
    "heq.std_threshold",
    "fast.threshold",
    "fast.arc",
    "features.cell_size",
    "features.per_cell",
    "features.rotate_pattern",
    "pyramid.levels",
    "pyramid.scale",
    "match.ratio",
    "match.max_dist",
    "match.cross_check",
    "stereo.row_tol",
    "stereo.d_min",
    "stereo.d_max",
    "pose.huber_px",
    "pose.outlier_px",
    "pose.rounds",
    "pose.iters",
    "pose.min_inliers",
    "keyframe.ratio",
    "keyframe.max_interval",
    "keyframe.min_translation",
    "map.window",
    "map.search_radius",
    "motion.constant_velocity",
    "motion.max_frame_translation",
    "motion.match_window",
];

fn parse_value<T: FromStr>(value: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| e.to_string())
}

fn positive(v: f64) -> Result<f64, String> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err("must be positive".into())
    }
}

impl PipelineConfig {
    /// Parses `key = value` lines over the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut config = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or(ConfigError::Malformed { line })?;
            config.set_at(line, key.trim(), value.trim())?;
        }
        Ok(config)
    }

    /// Sets one key; used for command-line overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        self.set_at(0, key, value)
    }

    fn set_at(&mut self, line: usize, key: &str, value: &str) -> Result<(), ConfigError> {
        if !KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey {
                line,
                key: key.to_string(),
            });
        }
        self.apply(key, value).map_err(|reason| ConfigError::InvalidValue {
            line,
            key: key.to_string(),
            value: value.to_string(),
            reason,
        })
    }

    fn apply(&mut self, key: &str, v: &str) -> Result<(), String> {
        match key {
            "heq.mode" => self.heq.mode = parse_value(v)?,
            "heq.range_threshold" => self.heq.range_threshold = parse_value(v)?,
            "heq.std_threshold" => self.heq.std_threshold = parse_value(v)?,
            "fast.threshold" => {
                let t: u8 = parse_value(v)?;
                if t == 0 {
                    return Err("must be at least 1".into());
                }
                self.features.fast_threshold = t;
            }
            "fast.arc" => {
                let n: usize = parse_value(v)?;
                if !(9..=12).contains(&n) {
                    return Err("must be in 9..=12".into());
                }
                self.features.fast_arc = n;
            }
            "features.cell_size" => {
                let c: usize = parse_value(v)?;
                if c == 0 {
                    return Err("must be positive".into());
                }
                self.features.cell_size = c;
            }
            "features.per_cell" => self.features.per_cell = parse_value(v)?,
            "features.rotate_pattern" => self.features.rotate_pattern = parse_value(v)?,
            "pyramid.levels" => {
                let n: usize = parse_value(v)?;
                if n == 0 {
                    return Err("must be at least 1".into());
                }
                self.features.pyramid_levels = n;
            }
            "pyramid.scale" => {
                let s: f64 = parse_value(v)?;
                if !(s > 1.0 && s.is_finite()) {
                    return Err("must be greater than 1".into());
                }
                self.features.pyramid_scale = s;
            }
            "match.ratio" => {
                let r: f64 = parse_value(v)?;
                if !(r > 0.0 && r <= 1.0) {
                    return Err("must be in (0, 1]".into());
                }
                self.matching.ratio = r;
            }
            "match.max_dist" => self.matching.max_dist = parse_value(v)?,
            "match.cross_check" => self.matching.cross_check = parse_value(v)?,
            "stereo.row_tol" => self.stereo.row_tol = parse_value(v)?,
            "stereo.d_min" => self.stereo.d_min = parse_value(v)?,
            "stereo.d_max" => {
                self.stereo.d_max = if v == "auto" {
                    None
                } else {
                    Some(positive(parse_value(v)?)?)
                }
            }
            "pose.huber_px" => self.pose.huber_px = positive(parse_value(v)?)?,
            "pose.outlier_px" => self.pose.outlier_px = positive(parse_value(v)?)?,
            "pose.rounds" => self.pose.rounds = parse_value(v)?,
            "pose.iters" => self.pose.iters = parse_value(v)?,
            "pose.min_inliers" => self.pose.min_inliers = parse_value(v)?,
            "keyframe.ratio" => self.keyframe.ratio = parse_value(v)?,
            "keyframe.max_interval" => self.keyframe.max_interval = parse_value(v)?,
            "keyframe.min_translation" => self.keyframe.min_translation = parse_value(v)?,
            "map.window" => {
                let k: usize = parse_value(v)?;
                if k == 0 {
                    return Err("must be at least 1".into());
                }
                self.tracking.window = k;
            }
            "map.search_radius" => self.tracking.search_radius = positive(parse_value(v)?)?,
            "motion.constant_velocity" => self.tracking.constant_velocity = parse_value(v)?,
            "motion.max_frame_translation" => {
                self.tracking.max_frame_translation = positive(parse_value(v)?)?
            }
            "motion.match_window" => {
                self.tracking.match_window = if v == "off" {
                    None
                } else {
                    Some(positive(parse_value(v)?)?)
                }
            }
            _ => unreachable!("key list and setter disagree on {key}"),
        }
        Ok(())
    }

    fn get(&self, key: &str) -> String {
        match key {
            "heq.mode" => self.heq.mode.to_string(),
            "heq.range_threshold" => self.heq.range_threshold.to_string(),
            "heq.std_threshold" => self.heq.std_threshold.to_string(),
            "fast.threshold" => self.features.fast_threshold.to_string(),
            "fast.arc" => self.features.fast_arc.to_string(),
            "features.cell_size" => self.features.cell_size.to_string(),
            "features.per_cell" => self.features.per_cell.to_string(),
            "features.rotate_pattern" => self.features.rotate_pattern.to_string(),
            "pyramid.levels" => self.features.pyramid_levels.to_string(),
            "pyramid.scale" => self.features.pyramid_scale.to_string(),
            "match.ratio" => self.matching.ratio.to_string(),
            "match.max_dist" => self.matching.max_dist.to_string(),
            "match.cross_check" => self.matching.cross_check.to_string(),
            "stereo.row_tol" => self.stereo.row_tol.to_string(),
            "stereo.d_min" => self.stereo.d_min.to_string(),
            "stereo.d_max" => self
                .stereo
                .d_max
                .map_or_else(|| "auto".to_string(), |d| d.to_string()),
            "pose.huber_px" => self.pose.huber_px.to_string(),
            "pose.outlier_px" => self.pose.outlier_px.to_string(),
            "pose.rounds" => self.pose.rounds.to_string(),
            "pose.iters" => self.pose.iters.to_string(),
            "pose.min_inliers" => self.pose.min_inliers.to_string(),
            "keyframe.ratio" => self.keyframe.ratio.to_string(),
            "keyframe.max_interval" => self.keyframe.max_interval.to_string(),
            "keyframe.min_translation" => self.keyframe.min_translation.to_string(),
            "map.window" => self.tracking.window.to_string(),
            "map.search_radius" => self.tracking.search_radius.to_string(),
            "motion.constant_velocity" => self.tracking.constant_velocity.to_string(),
            "motion.max_frame_translation" => self.tracking.max_frame_translation.to_string(),
            "motion.match_window" => self
                .tracking
                .match_window
                .map_or_else(|| "off".to_string(), |w| w.to_string()),
            _ => unreachable!("unknown key {key}"),
        }
    }

    /// Every key with its current value, one `key = value` per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for key in KEYS {
            writeln!(s, "{key} = {}", self.get(key)).expect("writing to String");
        }
        s
    }
}
