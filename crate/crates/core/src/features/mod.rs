//! Oriented FAST keypoints and rotated binary descriptors.

mod fast;
mod nms;
mod orientation;
mod pattern;

use std::fmt;

use thiserror::Error;

use crate::image::{gaussian_blur, GrayImage, ImagePyramid};

pub use fast::{fast_detect, segment_test, BORDER as FAST_BORDER, CIRCLE};
pub use nms::{grid_nms, SUPPRESSION_RADIUS};
pub use orientation::{centroid, disk_extents, orientation, patch_moments, PatchMoments};
pub use pattern::{
    rotate_pattern, RotatedPattern, SamplingPattern, TestPair, N_PAIRS, PATTERN_RADIUS,
    PATTERN_SEED,
};

/// Radius of the disk used for the intensity-centroid orientation.
pub const ORIENTATION_RADIUS: usize = 15;
/// Blur applied to a level before descriptor sampling.
pub const DESCRIPTOR_SIGMA: f64 = 2.0;
/// Keypoints closer than this to a level border cannot be described.
pub const EDGE_MARGIN: usize = 15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("patch of radius {radius} at ({x}, {y}) crosses the image border")]
    PatchOutOfBounds { x: usize, y: usize, radius: usize },
    #[error("invalid sampling pattern: {0}")]
    Pattern(String),
    #[error("invalid descriptor hex: {0}")]
    Hex(String),
}

/// An oriented corner. `x`/`y` are in level-0 pixels; `level_x`/`level_y` are
/// the integer pixel at the detection level.
#[derive(Debug, Clone, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub level_x: usize,
    pub level_y: usize,
    pub octave: usize,
    pub score: f32,
    pub angle: f64,
}

impl Keypoint {
    pub fn at_level(level_x: usize, level_y: usize, octave: usize, scale: f64, score: f32) -> Self {
        Self {
            x: to_level0(level_x, scale),
            y: to_level0(level_y, scale),
            level_x,
            level_y,
            octave,
            score,
            angle: 0.0,
        }
    }
}

/// Level-0 coordinate of the center of pixel `i` at a level downscaled by
/// `scale`, with pixel centers at integer coordinates on every level.
pub fn to_level0(i: usize, scale: f64) -> f64 {
    (i as f64 + 0.5) * scale - 0.5
}

/// 256-bit descriptor; bit `i` lives in word `i / 64` at position `i % 64`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct BinaryDescriptor(pub [u64; 4]);

impl BinaryDescriptor {
    pub const BITS: usize = 256;

    #[inline]
    pub fn bit(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn set_bit(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    #[inline]
    pub fn flip_bit(&mut self, i: usize) {
        self.0[i / 64] ^= 1 << (i % 64);
    }

    #[inline]
    pub fn hamming(&self, other: &Self) -> u32 {
        (self.0[0] ^ other.0[0]).count_ones()
            + (self.0[1] ^ other.0[1]).count_ones()
            + (self.0[2] ^ other.0[2]).count_ones()
            + (self.0[3] ^ other.0[3]).count_ones()
    }

    pub fn complement(&self) -> Self {
        Self([!self.0[0], !self.0[1], !self.0[2], !self.0[3]])
    }

    /// 64 lowercase hex digits, bit 0 first (byte `i` holds bits `8i..8i+8`).
    pub fn to_hex(&self) -> String {
        let mut s = String::with_capacity(64);
        for word in self.0 {
            for byte in word.to_le_bytes() {
                s.push_str(&format!("{byte:02x}"));
            }
        }
        s
    }

    pub fn from_hex(s: &str) -> Result<Self, FeatureError> {
        if s.len() != 64 || !s.is_ascii() {
            return Err(FeatureError::Hex(format!("expected 64 hex digits, got {:?}", s)));
        }
        let mut words = [0u64; 4];
        for (w, word) in words.iter_mut().enumerate() {
            let mut bytes = [0u8; 8];
            for (b, byte) in bytes.iter_mut().enumerate() {
                let i = (w * 8 + b) * 2;
                *byte = u8::from_str_radix(&s[i..i + 2], 16)
                    .map_err(|_| FeatureError::Hex(s.to_string()))?;
            }
            *word = u64::from_le_bytes(bytes);
        }
        Ok(Self(words))
    }
}

impl fmt::Debug for BinaryDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BinaryDescriptor({})", self.to_hex())
    }
}

/// Samples the rotated comparison pairs around the keypoint in `smoothed`
/// (the blurred detection level).
pub fn compute_descriptor(
    smoothed: &GrayImage,
    kp: &Keypoint,
    pattern: &RotatedPattern,
) -> Result<BinaryDescriptor, FeatureError> {
    let (cx, cy) = (kp.level_x as isize, kp.level_y as isize);
    let sample = |(dx, dy): (f64, f64)| {
        smoothed.get_checked(cx + dx.round() as isize, cy + dy.round() as isize)
    };
    let mut desc = BinaryDescriptor::default();
    for (i, [a, b]) in pattern.pairs.iter().enumerate() {
        let out_of_bounds = || FeatureError::PatchOutOfBounds {
            x: kp.level_x,
            y: kp.level_y,
            radius: PATTERN_RADIUS as usize,
        };
        let pa = sample(*a).ok_or_else(out_of_bounds)?;
        let pb = sample(*b).ok_or_else(out_of_bounds)?;
        if pa > pb {
            desc.set_bit(i);
        }
    }
    Ok(desc)
}

/// Detector and descriptor settings.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    pub fast_threshold: u8,
    pub fast_arc: usize,
    pub cell_size: usize,
    pub per_cell: usize,
    pub pyramid_levels: usize,
    pub pyramid_scale: f64,
    /// When false the pattern is sampled unrotated (angle still reported).
    pub rotate_pattern: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            fast_threshold: 20,
            fast_arc: 9,
            cell_size: 32,
            per_cell: 5,
            pyramid_levels: 4,
            pyramid_scale: 1.2,
            rotate_pattern: true,
        }
    }
}

/// A described keypoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Feature {
    pub keypoint: Keypoint,
    pub descriptor: BinaryDescriptor,
}

/// Detects, orients and describes keypoints on one pyramid level.
pub fn describe_level(
    level: &GrayImage,
    octave: usize,
    scale: f64,
    config: &FeatureConfig,
    pattern: &SamplingPattern,
) -> Vec<Feature> {
    let (w, h) = level.dims();
    if w <= 2 * EDGE_MARGIN || h <= 2 * EDGE_MARGIN {
        return Vec::new();
    }
    let raw: Vec<Keypoint> = fast_detect(level, config.fast_threshold, config.fast_arc, octave)
        .into_iter()
        .filter(|kp| {
            kp.level_x >= EDGE_MARGIN
                && kp.level_y >= EDGE_MARGIN
                && kp.level_x + EDGE_MARGIN < w
                && kp.level_y + EDGE_MARGIN < h
        })
        .collect();
    if raw.is_empty() {
        return Vec::new();
    }
    let kept = grid_nms(&raw, (w, h), config.cell_size, config.per_cell);
    let smoothed = gaussian_blur(level, DESCRIPTOR_SIGMA).expect("positive sigma");
    let unrotated = pattern.identity();
    kept.into_iter()
        .filter_map(|mut kp| {
            let m = patch_moments(level, kp.level_x, kp.level_y, ORIENTATION_RADIUS).ok()?;
            kp.angle = orientation(&m);
            kp.x = to_level0(kp.level_x, scale);
            kp.y = to_level0(kp.level_y, scale);
            let descriptor = if config.rotate_pattern {
                compute_descriptor(&smoothed, &kp, &rotate_pattern(pattern, kp.angle))
            } else {
                compute_descriptor(&smoothed, &kp, &unrotated)
            }
            .ok()?;
            Some(Feature {
                keypoint: kp,
                descriptor,
            })
        })
        .collect()
}

/// Runs [`describe_level`] on every pyramid level and merges the results,
/// ordered by octave, then y, then x, then descending score.
pub fn detect_and_describe(
    pyramid: &ImagePyramid,
    config: &FeatureConfig,
    pattern: &SamplingPattern,
) -> Vec<Feature> {
    let mut all: Vec<Feature> = pyramid
        .levels()
        .iter()
        .enumerate()
        .flat_map(|(octave, level)| {
            describe_level(level, octave, pyramid.level_scale(octave), config, pattern)
        })
        .collect();
    all.sort_by(|a, b| {
        let (ka, kb) = (&a.keypoint, &b.keypoint);
        ka.octave
            .cmp(&kb.octave)
            .then(ka.level_y.cmp(&kb.level_y))
            .then(ka.level_x.cmp(&kb.level_x))
            .then(kb.score.total_cmp(&ka.score))
    });
    all
}
