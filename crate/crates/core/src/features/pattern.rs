//! The fixed set of 256 intensity-comparison pairs used by the binary descriptor.
//!
//! The committed pattern (`data/brief_pattern.txt`) was drawn once by
//! [`SamplingPattern::generate`] with [`PATTERN_SEED`]; a unit test keeps the
//! file and the generator in agreement.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use rand_xoshiro::Xoshiro256StarStar;

use super::FeatureError;

pub const N_PAIRS: usize = 256;
/// Offsets lie in the disk of this radius, so any rotation keeps them there.
pub const PATTERN_RADIUS: i32 = 15;
pub const PATTERN_SEED: u64 = 0x0_5EED_B12F;

const PATTERN_FILE: &str = include_str!("../../data/brief_pattern.txt");

/// One comparison: bit is set iff `I(first) > I(second)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TestPair {
    pub first: (i32, i32),
    pub second: (i32, i32),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplingPattern {
    pairs: Vec<TestPair>,
}

/// A pattern rotated by a keypoint angle; offsets stay real-valued until sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct RotatedPattern {
    pub pairs: Vec<[(f64, f64); 2]>,
}

impl SamplingPattern {
    /// The pattern shipped with the crate.
    pub fn builtin() -> Self {
        Self::parse(PATTERN_FILE).expect("bundled pattern file is valid")
    }

    pub fn pairs(&self) -> &[TestPair] {
        &self.pairs
    }

    /// Draws pairs from an isotropic Gaussian with sigma = radius / 2,
    /// rejecting points outside the disk and degenerate pairs.
    pub fn generate(seed: u64) -> Self {
        let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
        let normal = Normal::new(0.0, PATTERN_RADIUS as f64 / 2.0).expect("finite sigma");
        let r2 = PATTERN_RADIUS * PATTERN_RADIUS;
        let sample_point = |rng: &mut Xoshiro256StarStar| loop {
            let x = normal.sample(rng).round() as i32;
            let y = normal.sample(rng).round() as i32;
            if x * x + y * y <= r2 {
                return (x, y);
            }
        };
        let mut pairs = Vec::with_capacity(N_PAIRS);
        while pairs.len() < N_PAIRS {
            let first = sample_point(&mut rng);
            let second = sample_point(&mut rng);
            if first != second {
                pairs.push(TestPair { first, second });
            }
        }
        Self { pairs }
    }

    /// Parses the text form: one pair per line, `x1 y1 x2 y2`.
    pub fn parse(text: &str) -> Result<Self, FeatureError> {
        let mut pairs = Vec::with_capacity(N_PAIRS);
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let nums: Result<Vec<i32>, _> = line.split_whitespace().map(str::parse).collect();
            let nums = nums.map_err(|_| FeatureError::Pattern(format!("line {}: not integers", lineno + 1)))?;
            if nums.len() != 4 {
                return Err(FeatureError::Pattern(format!(
                    "line {}: expected 4 integers, found {}",
                    lineno + 1,
                    nums.len()
                )));
            }
            if nums.iter().any(|v| v.abs() > PATTERN_RADIUS) {
                return Err(FeatureError::Pattern(format!(
                    "line {}: offset exceeds radius {PATTERN_RADIUS}",
                    lineno + 1
                )));
            }
            pairs.push(TestPair {
                first: (nums[0], nums[1]),
                second: (nums[2], nums[3]),
            });
        }
        if pairs.len() != N_PAIRS {
            return Err(FeatureError::Pattern(format!(
                "expected {N_PAIRS} pairs, found {}",
                pairs.len()
            )));
        }
        Ok(Self { pairs })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(N_PAIRS * 16);
        for p in &self.pairs {
            writeln!(s, "{} {} {} {}", p.first.0, p.first.1, p.second.0, p.second.1)
                .expect("writing to String");
        }
        s
    }

    pub fn identity(&self) -> RotatedPattern {
        rotate_pattern(self, 0.0)
    }
}

/// Applies the rotation `(x, y) -> (x cos a - y sin a, x sin a + y cos a)` to
/// every offset.
pub fn rotate_pattern(pattern: &SamplingPattern, angle: f64) -> RotatedPattern {
    let (s, c) = angle.sin_cos();
    let rot = |(x, y): (i32, i32)| {
        let (x, y) = (x as f64, y as f64);
        (x * c - y * s, x * s + y * c)
    };
    RotatedPattern {
        pairs: pattern
            .pairs
            .iter()
            .map(|p| [rot(p.first), rot(p.second)])
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    /// `cargo test -p stereo-vo regenerate_pattern_file -- --ignored`
    #[test]
    #[ignore]
    fn regenerate_pattern_file() {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/brief_pattern.txt");
        std::fs::write(path, SamplingPattern::generate(PATTERN_SEED).to_text()).unwrap();
    }

    #[test]
    fn bundled_file_matches_generator() {
        let generated = SamplingPattern::generate(PATTERN_SEED);
        assert_eq!(generated.to_text(), PATTERN_FILE);
        assert_eq!(SamplingPattern::builtin(), generated);
    }

    #[test]
    fn offsets_within_disk() {
        let p = SamplingPattern::builtin();
        assert_eq!(p.pairs().len(), N_PAIRS);
        for pair in p.pairs() {
            for (x, y) in [pair.first, pair.second] {
                assert!(x * x + y * y <= PATTERN_RADIUS * PATTERN_RADIUS);
            }
            assert_ne!(pair.first, pair.second);
        }
    }

    #[test]
    fn zero_rotation_is_identity() {
        let p = SamplingPattern::builtin();
        let r = rotate_pattern(&p, 0.0);
        for (a, b) in p.pairs().iter().zip(&r.pairs) {
            assert_eq!((a.first.0 as f64, a.first.1 as f64), b[0]);
            assert_eq!((a.second.0 as f64, a.second.1 as f64), b[1]);
        }
    }

    #[test]
    fn quarter_turn_swaps_axes() {
        let p = SamplingPattern::builtin();
        let r = rotate_pattern(&p, FRAC_PI_2);
        for (a, b) in p.pairs().iter().zip(&r.pairs) {
            let (x, y) = a.first;
            assert_eq!((b[0].0.round() as i32, b[0].1.round() as i32), (-y, x));
            assert!((b[0].0 + y as f64).abs() < 1e-12);
            assert!((b[0].1 - x as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn rotation_inverts() {
        let p = SamplingPattern::builtin();
        let fwd = rotate_pattern(&p, 0.7);
        for (orig, rotated) in p.pairs().iter().zip(&fwd.pairs) {
            let (s, c) = (-0.7f64).sin_cos();
            let (x, y) = rotated[1];
            let back = (x * c - y * s, x * s + y * c);
            assert_eq!(
                (back.0.round() as i32, back.1.round() as i32),
                orig.second
            );
        }
    }

    #[test]
    fn parse_errors() {
        assert!(SamplingPattern::parse("1 2 3\n").is_err());
        assert!(SamplingPattern::parse("1 2 3 99\n").is_err());
        assert!(SamplingPattern::parse("1 2 3 4\n").is_err());
    }
}
