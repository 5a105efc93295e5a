//! Segment-test corner detection on the 16-pixel Bresenham circle of radius 3.

use crate::image::GrayImage;

use super::Keypoint;

/// Circle offsets, clockwise from twelve o'clock.
pub const CIRCLE: [(isize, isize); 16] = [
    (0, -3),
    (1, -3),
    (2, -2),
    (3, -1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-2, -2),
    (-1, -3),
];

/// Pixels closer than this to any border are never candidates.
pub const BORDER: usize = 3;

/// Circle positions covered by a run of at least `arc` set bits; zero if
/// there is no such run.
#[inline]
fn arc_positions(mask: u16, arc: usize) -> u16 {
    let doubled = mask as u32 | ((mask as u32) << 16);
    let mut starts = doubled;
    for k in 1..arc {
        starts &= doubled >> k;
    }
    let starts = starts & 0xFFFF;
    if starts == 0 {
        return 0;
    }
    let mut covered = 0u32;
    for k in 0..arc {
        covered |= starts << k;
    }
    ((covered | (covered >> 16)) & 0xFFFF) as u16
}

/// Segment-test classification of one pixel. Returns the corner score when
/// the pixel passes, `None` otherwise.
///
/// The score is the summed excess `|I(c) - I(p)| - t` over the pixels of the
/// qualifying arc; if both a bright and a dark arc exist the larger wins.
#[inline]
pub fn segment_test(img: &GrayImage, x: usize, y: usize, threshold: u8, arc: usize) -> Option<f32> {
    let w = img.width();
    let data = img.data();
    let center = data[y * w + x] as i32;
    let t = threshold as i32;
    let hi = center + t;
    let lo = center - t;
    let at = |k: usize| {
        let (dx, dy) = CIRCLE[k];
        data[(y as isize + dy) as usize * w + (x as isize + dx) as usize] as i32
    };

    // Any qualifying arc of length `arc` covers at least arc/4 compass points.
    let need = arc / 4;
    let compass = [at(0), at(4), at(8), at(12)];
    let bright_compass = compass.iter().filter(|&&v| v > hi).count();
    let dark_compass = compass.iter().filter(|&&v| v < lo).count();
    if bright_compass < need && dark_compass < need {
        return None;
    }

    let mut bright = 0u16;
    let mut dark = 0u16;
    let mut values = [0i32; 16];
    for (k, v) in values.iter_mut().enumerate() {
        *v = at(k);
        if *v > hi {
            bright |= 1 << k;
        } else if *v < lo {
            dark |= 1 << k;
        }
    }
    let excess = |run: u16, sign: i32| -> Option<f32> {
        (run != 0).then(|| {
            (0..16)
                .filter(|k| run & (1 << k) != 0)
                .map(|k| sign * (values[k] - center) - t)
                .sum::<i32>() as f32
        })
    };
    match (excess(arc_positions(bright, arc), 1), excess(arc_positions(dark, arc), -1)) {
        (Some(b), Some(d)) => Some(b.max(d)),
        (b, d) => b.or(d),
    }
}

/// Runs the segment test at every pixel at least [`BORDER`] pixels inside the
/// image. Keypoints come back in raster order with `octave` set and angle 0.
pub fn fast_detect(img: &GrayImage, threshold: u8, arc: usize, octave: usize) -> Vec<Keypoint> {
    assert!(threshold >= 1, "FAST threshold must be >= 1");
    assert!((9..=12).contains(&arc), "FAST arc must be in 9..=12");
    let (w, h) = img.dims();
    let mut out = Vec::new();
    if w < 2 * BORDER + 1 || h < 2 * BORDER + 1 {
        return out;
    }
    for y in BORDER..h - BORDER {
        for x in BORDER..w - BORDER {
            if let Some(score) = segment_test(img, x, y, threshold, arc) {
                out.push(Keypoint::at_level(x, y, octave, 1.0, score));
            }
        }
    }
    out
}
