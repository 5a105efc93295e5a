//! Global histogram equalization and the contrast metric that triggers it.
//!
//! The equalization map is the cumulative gray-level distribution
//! `s_k = sum_{i<=k} n_i / n`, scaled to 8 bits as `y_k = round(255 * s_k)`
//! with ties rounded away from zero.

use std::fmt;
use std::str::FromStr;

use crate::image::GrayImage;

pub const LEVELS: usize = 256;

/// Per-gray-level pixel counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayHistogram {
    counts: [u64; LEVELS],
    total: u64,
}

impl GrayHistogram {
    pub fn from_counts(counts: [u64; LEVELS]) -> Self {
        let total = counts.iter().sum();
        Self { counts, total }
    }

    pub fn counts(&self) -> &[u64; LEVELS] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Relative frequency of gray level `k`.
    pub fn probability(&self, k: usize) -> f64 {
        self.counts[k] as f64 / self.total as f64
    }
}

pub fn compute_histogram(img: &GrayImage) -> GrayHistogram {
    let mut counts = [0u64; LEVELS];
    for &v in img.data() {
        counts[v as usize] += 1;
    }
    GrayHistogram::from_counts(counts)
}

/// Lookup table plus the cumulative distribution it was derived from.
#[derive(Debug, Clone, PartialEq)]
pub struct EqualizationMap {
    pub lut: [u8; LEVELS],
    pub cdf: [f64; LEVELS],
}

pub fn equalization_map(hist: &GrayHistogram) -> EqualizationMap {
    assert!(hist.total > 0, "equalization of an empty histogram");
    let mut cdf = [0.0f64; LEVELS];
    let mut lut = [0u8; LEVELS];
    // Accumulate integer counts so the last occupied bin is exactly 1.0.
    let mut running = 0u64;
    for k in 0..LEVELS {
        running += hist.counts[k];
        cdf[k] = running as f64 / hist.total as f64;
        lut[k] = (255.0 * cdf[k]).round() as u8;
    }
    EqualizationMap { lut, cdf }
}

pub fn apply_equalization(img: &GrayImage, map: &EqualizationMap) -> GrayImage {
    img.map(|v| map.lut[v as usize])
}

/// Equalizes `img` with its own histogram.
pub fn equalize(img: &GrayImage) -> GrayImage {
    apply_equalization(img, &equalization_map(&compute_histogram(img)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContrastReport {
    pub p5: u8,
    pub p95: u8,
    pub dynamic_range: u8,
    pub std_dev: f64,
}

pub fn contrast_report(img: &GrayImage) -> ContrastReport {
    let hist = compute_histogram(img);
    let n = hist.total as f64;
    let percentile = |q: f64| -> u8 {
        let mut running = 0u64;
        for k in 0..LEVELS {
            running += hist.counts[k];
            if running as f64 / n >= q {
                return k as u8;
            }
        }
        255
    };
    let p5 = percentile(0.05);
    let p95 = percentile(0.95);
    let mean = hist
        .counts
        .iter()
        .enumerate()
        .map(|(k, &c)| k as f64 * c as f64)
        .sum::<f64>()
        / n;
    let var = hist
        .counts
        .iter()
        .enumerate()
        .map(|(k, &c)| (k as f64 - mean).powi(2) * c as f64)
        .sum::<f64>()
        / n;
    ContrastReport {
        p5,
        p95,
        dynamic_range: p95 - p5,
        std_dev: var.sqrt(),
    }
}

/// When to equalize an input image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HeqMode {
    Always,
    Never,
    /// Equalize only images whose contrast report falls under the thresholds.
    #[default]
    Auto,
}

impl FromStr for HeqMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "always" => Ok(Self::Always),
            "never" => Ok(Self::Never),
            "auto" => Ok(Self::Auto),
            other => Err(format!("unknown heq mode {other:?} (always|never|auto)")),
        }
    }
}

impl fmt::Display for HeqMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Always => "always",
            Self::Never => "never",
            Self::Auto => "auto",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeqConfig {
    pub mode: HeqMode,
    pub range_threshold: f64,
    pub std_threshold: f64,
}

impl Default for HeqConfig {
    fn default() -> Self {
        Self {
            mode: HeqMode::Auto,
            range_threshold: 100.0,
            std_threshold: 30.0,
        }
    }
}

impl HeqConfig {
    pub fn should_equalize(&self, img: &GrayImage) -> bool {
        match self.mode {
            HeqMode::Always => true,
            HeqMode::Never => false,
            HeqMode::Auto => {
                let r = contrast_report(img);
                (r.dynamic_range as f64) < self.range_threshold || r.std_dev < self.std_threshold
            }
        }
    }

    /// Returns the (possibly equalized) image and whether equalization ran.
    pub fn apply(&self, img: &GrayImage) -> (GrayImage, bool) {
        if self.should_equalize(img) {
            (equalize(img), true)
        } else {
            (img.clone(), false)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn histogram_counts() {
        let img = GrayImage::new(2, 2, vec![0, 0, 255, 255]).unwrap();
        let h = compute_histogram(&img);
        assert_eq!(h.counts()[0], 2);
        assert_eq!(h.counts()[255], 2);
        assert_eq!(h.total(), 4);
        assert_eq!(h.probability(0), 0.5);

        let h = compute_histogram(&GrayImage::filled(10, 10, 7));
        assert_eq!(h.counts()[7], 100);
        assert_eq!(h.counts().iter().sum::<u64>(), 100);
    }

    #[test]
    fn degenerate_histogram_map() {
        let map = equalization_map(&compute_histogram(&GrayImage::filled(5, 5, 40)));
        for k in 0..LEVELS {
            assert_eq!(map.cdf[k], if k < 40 { 0.0 } else { 1.0 });
        }
        assert_eq!(map.lut[40], 255);
        let out = apply_equalization(&GrayImage::filled(5, 5, 40), &map);
        assert!(out.data().iter().all(|&v| v == 255));
    }

    #[test]
    fn half_black_half_white_rounds_up() {
        let img = GrayImage::new(2, 1, vec![0, 255]).unwrap();
        let map = equalization_map(&compute_histogram(&img));
        assert_eq!(map.cdf[0], 0.5);
        assert_eq!(map.lut[0], 128);
        assert_eq!(map.lut[255], 255);
    }

    #[test]
    fn uniform_histogram_map() {
        let map = equalization_map(&GrayHistogram::from_counts([3; LEVELS]));
        for k in 0..LEVELS {
            let expected = (255.0 * (k + 1) as f64 / 256.0).round() as u8;
            assert_eq!(map.lut[k], expected, "k={k}");
        }
        assert_eq!(map.lut[0], 1);
        assert_eq!(map.lut[255], 255);
    }

    #[test]
    fn squashed_image_is_stretched() {
        let img = GrayImage::from_fn(64, 64, |x, y| (110 + (x * 7 + y * 3) % 21) as u8);
        let out = equalize(&img);
        let before = contrast_report(&img).dynamic_range;
        let after = contrast_report(&out).dynamic_range;
        assert!(after >= before, "{after} < {before}");
        assert_eq!(*out.data().iter().max().unwrap(), 255);
    }

    #[test]
    fn contrast_of_constant_and_split() {
        let r = contrast_report(&GrayImage::filled(8, 8, 200));
        assert_eq!((r.p5, r.p95, r.dynamic_range), (200, 200, 0));
        assert_eq!(r.std_dev, 0.0);

        let img = GrayImage::from_fn(8, 8, |x, _| if x < 4 { 0 } else { 255 });
        let r = contrast_report(&img);
        assert_eq!((r.p5, r.p95, r.dynamic_range), (0, 255, 255));
        assert!((r.std_dev - 127.5).abs() < 1e-12);
    }

    #[test]
    fn contrast_of_ramp() {
        // 41 equally populated levels 100..=140; percentiles by direct counting.
        let img = GrayImage::from_fn(41, 10, |x, _| (100 + x) as u8);
        let values: Vec<u8> = {
            let mut v = img.data().to_vec();
            v.sort_unstable();
            v
        };
        let n = values.len();
        let oracle = |q: f64| values[((q * n as f64).ceil() as usize).max(1) - 1];
        let r = contrast_report(&img);
        assert_eq!(r.p5, oracle(0.05));
        assert_eq!(r.p95, oracle(0.95));
        assert_eq!(r.dynamic_range, 36);
    }

    #[test]
    fn heq_mode_parsing() {
        assert_eq!("auto".parse::<HeqMode>().unwrap(), HeqMode::Auto);
        assert_eq!(HeqMode::Never.to_string(), "never");
        assert!("sometimes".parse::<HeqMode>().is_err());
    }

    #[test]
    fn auto_mode_triggers_on_squashed_range() {
        let img = GrayImage::from_fn(40, 40, |x, y| (110 + (x + y) % 21) as u8);
        let cfg = HeqConfig::default();
        assert!(cfg.should_equalize(&img));
        let wide = GrayImage::from_fn(256, 4, |x, _| x as u8);
        assert!(!cfg.should_equalize(&wide));
    }

    proptest! {
        #[test]
        fn lut_monotone_and_tops_out(values in proptest::collection::vec(any::<u8>(), 1..400)) {
            let n = values.len();
            let img = GrayImage::new(n, 1, values).unwrap();
            let map = equalization_map(&compute_histogram(&img));
            prop_assert!(map.lut.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(map.cdf.windows(2).all(|w| w[0] <= w[1]));
            let top = *img.data().iter().max().unwrap() as usize;
            prop_assert_eq!(map.cdf[top], 1.0);
            prop_assert_eq!(map.lut[top], 255);
            for k in 0..LEVELS {
                prop_assert_eq!(map.lut[k], (255.0 * map.cdf[k]).round() as u8);
            }
        }
    }
}
