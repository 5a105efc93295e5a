//! Stereo visual odometry built on histogram-equalized ORB-style features.
//!
//! The crate is organised bottom-up:
//!
//! * [`image`]: 8-bit rasters, PGM I/O, blur and pyramids
//! * [`histeq`]: global histogram equalization and its contrast trigger
//! * [`features`]: oriented FAST keypoints and rotated binary descriptors
//! * [`matching`]: Hamming matching and rectified stereo correspondence
//! * [`geometry`]: pinhole/stereo camera, SE(3) and reprojection pose solver
//! * [`odometry`]: the frame-to-frame tracking loop
//! * [`eval`]: trajectory formats, alignment and ATE
//! * [`synth`]: synthetic stereo sequences with ground truth

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod features;
pub mod histeq;
pub mod image;
pub mod geometry;
pub mod matching;
pub mod eval;
pub mod odometry;
pub mod synth;
pub mod config;
