//! Intensity-centroid orientation from first-order patch moments.

use crate::image::GrayImage;

use super::FeatureError;

/// Raw moments of a circular patch, coordinates relative to its center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchMoments {
    pub m00: f64,
    pub m10: f64,
    pub m01: f64,
}

/// Half-widths of each row of the disk `x^2 + y^2 <= r^2`, indexed by `y + r`.
pub fn disk_extents(radius: usize) -> Vec<usize> {
    let r = radius as isize;
    (-r..=r)
        .map(|y| {
            let mut u = 0isize;
            while (u + 1) * (u + 1) + y * y <= r * r {
                u += 1;
            }
            u as usize
        })
        .collect()
}

/// Moments `m_pq = sum x^p y^q I(x, y)` over the disk of `radius` around
/// `(cx, cy)`. Sums are accumulated in integers and are exact.
pub fn patch_moments(
    img: &GrayImage,
    cx: usize,
    cy: usize,
    radius: usize,
) -> Result<PatchMoments, FeatureError> {
    if cx < radius || cy < radius || cx + radius >= img.width() || cy + radius >= img.height() {
        return Err(FeatureError::PatchOutOfBounds { x: cx, y: cy, radius });
    }
    let extents = disk_extents(radius);
    let r = radius as isize;
    let (mut m00, mut m10, mut m01) = (0i64, 0i64, 0i64);
    for (row, &u) in extents.iter().enumerate() {
        let dy = row as isize - r;
        let line = img.row((cy as isize + dy) as usize);
        let u = u as isize;
        let mut row_sum = 0i64;
        for dx in -u..=u {
            let v = line[(cx as isize + dx) as usize] as i64;
            row_sum += v;
            m10 += dx as i64 * v;
        }
        m00 += row_sum;
        m01 += dy as i64 * row_sum;
    }
    Ok(PatchMoments {
        m00: m00 as f64,
        m10: m10 as f64,
        m01: m01 as f64,
    })
}

/// Intensity centroid `(m10/m00, m01/m00)`; `None` for an all-black patch.
pub fn centroid(m: &PatchMoments) -> Option<(f64, f64)> {
    (m.m00 > 0.0).then(|| (m.m10 / m.m00, m.m01 / m.m00))
}

/// `atan2(m01, m10)`, or 0 when both moments vanish.
pub fn orientation(m: &PatchMoments) -> f64 {
    if m.m01 == 0.0 && m.m10 == 0.0 {
        0.0
    } else {
        m.m01.atan2(m.m10)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn brute_force(img: &GrayImage, cx: usize, cy: usize, r: isize) -> (f64, f64, f64) {
        let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
        for y in -r..=r {
            for x in -r..=r {
                if x * x + y * y <= r * r {
                    let v = img.get((cx as isize + x) as usize, (cy as isize + y) as usize) as f64;
                    a += v;
                    b += x as f64 * v;
                    c += y as f64 * v;
                }
            }
        }
        (a, b, c)
    }

    #[test]
    fn constant_patch_is_centered() {
        let img = GrayImage::filled(40, 40, 90);
        let m = patch_moments(&img, 20, 20, 15).unwrap();
        assert_eq!((m.m10, m.m01), (0.0, 0.0));
        assert_eq!(centroid(&m), Some((0.0, 0.0)));
        assert_eq!(orientation(&m), 0.0);
    }

    #[test]
    fn x_ramp_points_along_x() {
        let img = GrayImage::from_fn(40, 40, |x, _| (x as isize - 20 + 128).clamp(0, 255) as u8);
        let m = patch_moments(&img, 20, 20, 15).unwrap();
        assert_eq!(m.m01, 0.0);
        assert!(m.m10 > 0.0);
        assert_eq!(orientation(&m), 0.0);
    }

    #[test]
    fn matches_double_loop() {
        let mut s = 12345u64;
        let img = GrayImage::from_fn(50, 50, |_, _| {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s & 0xFF) as u8
        });
        for &(cx, cy, r) in &[(25, 25, 15), (10, 30, 7), (40, 12, 3)] {
            let m = patch_moments(&img, cx, cy, r).unwrap();
            assert_eq!((m.m00, m.m10, m.m01), brute_force(&img, cx, cy, r as isize));
            assert!(m.m10.abs() <= r as f64 * m.m00);
            assert!(m.m01.abs() <= r as f64 * m.m00);
        }
    }

    #[test]
    fn out_of_bounds_patch_rejected() {
        let img = GrayImage::filled(30, 30, 1);
        assert!(patch_moments(&img, 14, 14, 15).is_err());
        assert!(patch_moments(&img, 15, 15, 15).is_err());
        assert!(patch_moments(&img, 15, 15, 14).is_ok());
    }

    #[test]
    fn centroid_and_angle_algebra() {
        let m = PatchMoments { m00: 100.0, m10: 50.0, m01: -25.0 };
        assert_eq!(centroid(&m), Some((0.5, -0.25)));
        let m = PatchMoments { m00: 0.0, m10: 0.0, m01: 0.0 };
        assert_eq!(centroid(&m), None);
        let m = PatchMoments { m00: 1.0, m10: 3.0, m01: 3.0 };
        assert!((orientation(&m) - FRAC_PI_4).abs() < 1e-15);
        let m = PatchMoments { m00: 1.0, m10: 0.0, m01: 2.0 };
        assert!((orientation(&m) - FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn disk_extents_radius_three() {
        assert_eq!(disk_extents(3), vec![0, 2, 2, 3, 2, 2, 0]);
    }
}
