//! Pinhole intrinsics, rectified stereo rigs and calibration files.

use nalgebra::{Vector2, Vector3};

use super::GeometryError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self, GeometryError> {
        if !(fx > 0.0 && fy > 0.0) || !cx.is_finite() || !cy.is_finite() {
            return Err(GeometryError::InvalidCalibration(format!(
                "focal lengths must be positive (fx={fx}, fy={fy})"
            )));
        }
        Ok(Self { fx, fy, cx, cy })
    }
}

/// Two identical rectified cameras; the right one sits `baseline` meters
/// along the left camera's +x axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StereoRig {
    pub intrinsics: CameraIntrinsics,
    pub baseline: f64,
    /// Triangulated points deeper than this are discarded.
    pub max_depth: f64,
}

impl StereoRig {
    pub fn new(intrinsics: CameraIntrinsics, baseline: f64) -> Result<Self, GeometryError> {
        if !(baseline > 0.0) {
            return Err(GeometryError::InvalidCalibration(format!(
                "baseline must be positive, got {baseline}"
            )));
        }
        Ok(Self {
            intrinsics,
            baseline,
            max_depth: f64::INFINITY,
        })
    }

    pub fn with_max_depth(mut self, max_depth: f64) -> Self {
        self.max_depth = max_depth;
        self
    }

    /// `fx * baseline`, the disparity of a point at unit depth.
    pub fn bf(&self) -> f64 {
        self.intrinsics.fx * self.baseline
    }

    /// Parses `fx fy cx cy baseline [max_depth]` (whitespace separated,
    /// `#` comments allowed), or a KITTI `calib.txt` with `P0:`/`P1:` rows.
    pub fn parse(text: &str) -> Result<Self, GeometryError> {
        if text.lines().any(|l| l.trim_start().starts_with("P0:")) {
            return Self::parse_kitti(text);
        }
        let values: Vec<f64> = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or(""))
            .flat_map(str::split_whitespace)
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| GeometryError::InvalidCalibration(format!("not a number: {t:?}")))
            })
            .collect::<Result<_, _>>()?;
        if values.len() != 5 && values.len() != 6 {
            return Err(GeometryError::InvalidCalibration(format!(
                "expected `fx fy cx cy baseline [max_depth]`, found {} values",
                values.len()
            )));
        }
        let rig = Self::new(
            CameraIntrinsics::new(values[0], values[1], values[2], values[3])?,
            values[4],
        )?;
        Ok(match values.get(5) {
            Some(&d) if d > 0.0 => rig.with_max_depth(d),
            Some(&d) => {
                return Err(GeometryError::InvalidCalibration(format!(
                    "max_depth must be positive, got {d}"
                )))
            }
            None => rig,
        })
    }

    fn parse_kitti(text: &str) -> Result<Self, GeometryError> {
        let row = |key: &str| -> Result<Vec<f64>, GeometryError> {
            let line = text
                .lines()
                .find(|l| l.trim_start().starts_with(key))
                .ok_or_else(|| GeometryError::InvalidCalibration(format!("missing {key}")))?;
            let vals: Vec<f64> = line
                .trim_start()
                .trim_start_matches(key)
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| GeometryError::InvalidCalibration(format!("bad numbers in {key}")))?;
            if vals.len() != 12 {
                return Err(GeometryError::InvalidCalibration(format!(
                    "{key} must hold 12 values"
                )));
            }
            Ok(vals)
        };
        let p0 = row("P0:")?;
        let p1 = row("P1:")?;
        let k = CameraIntrinsics::new(p0[0], p0[5], p0[2], p0[6])?;
        Self::new(k, -p1[3] / p1[0])
    }

    pub fn to_text(&self) -> String {
        let k = &self.intrinsics;
        if self.max_depth.is_finite() {
            format!(
                "{} {} {} {} {} {}\n",
                k.fx, k.fy, k.cx, k.cy, self.baseline, self.max_depth
            )
        } else {
            format!("{} {} {} {} {}\n", k.fx, k.fy, k.cx, k.cy, self.baseline)
        }
    }
}

/// Back-projects a left-image pixel with known disparity into the left
/// camera frame.
pub fn triangulate(
    pixel: Vector2<f64>,
    disparity: f64,
    rig: &StereoRig,
) -> Result<Vector3<f64>, GeometryError> {
    if !(disparity > 0.0) {
        return Err(GeometryError::NonPositiveDisparity(disparity));
    }
    let k = &rig.intrinsics;
    let z = rig.bf() / disparity;
    if z > rig.max_depth {
        return Err(GeometryError::TooDeep {
            depth: z,
            max_depth: rig.max_depth,
        });
    }
    Ok(Vector3::new(
        (pixel.x - k.cx) * z / k.fx,
        (pixel.y - k.cy) * z / k.fy,
        z,
    ))
}

/// Pinhole projection of a camera-frame point.
pub fn project(p: &Vector3<f64>, k: &CameraIntrinsics) -> Result<Vector2<f64>, GeometryError> {
    if !(p.z > 0.0) {
        return Err(GeometryError::BehindCamera(p.z));
    }
    Ok(Vector2::new(
        k.fx * p.x / p.z + k.cx,
        k.fy * p.y / p.z + k.cy,
    ))
}

/// Projection into the right camera of the rig.
pub fn project_right(p: &Vector3<f64>, rig: &StereoRig) -> Result<Vector2<f64>, GeometryError> {
    project(&Vector3::new(p.x - rig.baseline, p.y, p.z), &rig.intrinsics)
}
