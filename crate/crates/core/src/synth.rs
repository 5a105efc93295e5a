//! Synthetic stereo sequences of Gaussian dots with exact ground truth.
//!
//! A scene is a seeded cloud of gray dots. Each dot is rendered with a fixed
//! pixel radius into both views of a rectified rig, far dots first so near
//! ones occlude them. Trajectories are closed-form, so every pose, pixel and
//! disparity is known.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

use crate::eval::{save_kitti_poses, Trajectory};
use crate::geometry::{project, project_right, CameraIntrinsics, PoseSE3, StereoRig};
use crate::image::{save_pgm, GrayImage};

pub const INTENSITY_MIN: u8 = 60;
pub const INTENSITY_MAX: u8 = 220;
/// Points closer than this to a camera are not rendered.
pub const NEAR_PLANE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneSpec {
    pub n_points: usize,
    pub bounds_min: Vector3<f64>,
    pub bounds_max: Vector3<f64>,
    /// Dot radius in pixels; the Gaussian profile has sigma = radius / 2.
    pub dot_radius: f64,
    pub seed: u64,
    /// Mean background gray level.
    pub background: u8,
    /// Peak-to-peak amplitude of a vertical illumination ramp across the
    /// image (darker at the top). Zero gives a flat background.
    pub background_ramp: u8,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            n_points: 2000,
            bounds_min: Vector3::new(-10.0, -2.5, -10.0),
            bounds_max: Vector3::new(10.0, 2.5, 10.0),
            dot_radius: 2.0,
            seed: 7,
            background: 128,
            background_ramp: 80,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenePoint {
    pub position: Vector3<f64>,
    pub intensity: u8,
}

pub fn generate_scene(spec: &SceneSpec) -> Vec<ScenePoint> {
    assert!(spec.n_points >= 1, "scene needs at least one point");
    let mut rng = Xoshiro256StarStar::seed_from_u64(spec.seed);
    (0..spec.n_points)
        .map(|_| {
            let mut position = Vector3::zeros();
            for k in 0..3 {
                let (lo, hi) = (spec.bounds_min[k], spec.bounds_max[k]);
                position[k] = lo + (hi - lo) * rng.random::<f64>();
            }
            ScenePoint {
                position,
                intensity: rng.random_range(INTENSITY_MIN..=INTENSITY_MAX),
            }
        })
        .collect()
}

/// Ground truth for a point visible in both views.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderedPoint {
    pub index: usize,
    pub left: Vector2<f64>,
    pub right: Vector2<f64>,
    pub disparity: f64,
    /// Position in the left camera frame.
    pub camera_point: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StereoRender {
    pub left: GrayImage,
    pub right: GrayImage,
    pub visible: Vec<RenderedPoint>,
}

struct Canvas {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Canvas {
    fn new(width: usize, height: usize, background: u8, ramp: u8) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            let t = if height > 1 { y as f64 / (height - 1) as f64 - 0.5 } else { 0.0 };
            let level = f64::from(background) + f64::from(ramp) * t;
            data.extend(std::iter::repeat_n(level, width));
        }
        Self { width, height, data }
    }

    fn splat(&mut self, center: Vector2<f64>, intensity: f64, sigma: f64, support: f64) {
        let x0 = (center.x - support).floor().max(0.0) as usize;
        let y0 = (center.y - support).floor().max(0.0) as usize;
        let x1 = ((center.x + support).ceil() as isize).min(self.width as isize - 1);
        let y1 = ((center.y + support).ceil() as isize).min(self.height as isize - 1);
        if x1 < 0 || y1 < 0 {
            return;
        }
        let inv = 1.0 / (2.0 * sigma * sigma);
        for y in y0..=y1 as usize {
            for x in x0..=x1 as usize {
                let d2 = (x as f64 - center.x).powi(2) + (y as f64 - center.y).powi(2);
                if d2 > support * support {
                    continue;
                }
                let a = (-d2 * inv).exp();
                let px = &mut self.data[y * self.width + x];
                *px += (intensity - *px) * a;
            }
        }
    }

    fn into_image(self) -> GrayImage {
        let data = self.data.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
        GrayImage::new(self.width, self.height, data).expect("canvas dimensions")
    }
}

fn in_image(p: &Vector2<f64>, dims: (usize, usize)) -> bool {
    p.x >= 0.0 && p.y >= 0.0 && p.x <= (dims.0 - 1) as f64 && p.y <= (dims.1 - 1) as f64
}

/// Renders the cloud seen from a left camera at `camera_to_world`.
pub fn render_stereo(
    cloud: &[ScenePoint],
    camera_to_world: &PoseSE3,
    rig: &StereoRig,
    dims: (usize, usize),
    spec: &SceneSpec,
) -> StereoRender {
    let world_to_camera = camera_to_world.inverse();
    let sigma = spec.dot_radius / 2.0;
    let support = 2.0 * spec.dot_radius;

    let mut order: Vec<(usize, Vector3<f64>)> = cloud
        .iter()
        .enumerate()
        .map(|(i, p)| (i, world_to_camera.transform_point(&p.position)))
        .filter(|(_, pc)| pc.z > NEAR_PLANE)
        .collect();
    // Far to near; ties broken by index for determinism.
    order.sort_by(|a, b| b.1.z.total_cmp(&a.1.z).then(a.0.cmp(&b.0)));

    let mut left = Canvas::new(dims.0, dims.1, spec.background, spec.background_ramp);
    let mut right = Canvas::new(dims.0, dims.1, spec.background, spec.background_ramp);
    let mut visible = Vec::new();
    for (i, pc) in order {
        let intensity = f64::from(cloud[i].intensity);
        let l = project(&pc, &rig.intrinsics).expect("in front of camera");
        let r = project_right(&pc, rig).expect("in front of camera");
        left.splat(l, intensity, sigma, support);
        right.splat(r, intensity, sigma, support);
        if in_image(&l, dims) && in_image(&r, dims) {
            visible.push(RenderedPoint {
                index: i,
                left: l,
                right: r,
                disparity: l.x - r.x,
                camera_point: pc,
            });
        }
    }
    visible.sort_by_key(|p| p.index);
    StereoRender {
        left: left.into_image(),
        right: right.into_image(),
        visible,
    }
}

/// Camera-to-world poses on a horizontal circle, optical axis along the
/// direction of travel. Frame `i` sits at angle `2 pi i / n`.
pub fn trajectory_circle(radius: f64, n_frames: usize, height: f64) -> Vec<PoseSE3> {
    assert!(n_frames >= 2, "trajectory needs at least two frames");
    (0..n_frames)
        .map(|i| {
            let phi = TAU * i as f64 / n_frames as f64;
            let (s, c) = phi.sin_cos();
            let x_axis = Vector3::new(c, 0.0, s);
            let y_axis = Vector3::y();
            let z_axis = Vector3::new(-s, 0.0, c);
            PoseSE3::new(
                Matrix3::from_columns(&[x_axis, y_axis, z_axis]),
                Vector3::new(radius * c, height, radius * s),
            )
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContrastSquash {
    out_lo: u8,
    out_hi: u8,
}

impl ContrastSquash {
    pub fn new(out_lo: u8, out_hi: u8) -> Option<Self> {
        (out_lo < out_hi).then_some(Self { out_lo, out_hi })
    }

    pub fn identity() -> Self {
        Self { out_lo: 0, out_hi: 255 }
    }

    pub fn out_lo(&self) -> u8 {
        self.out_lo
    }

    pub fn out_hi(&self) -> u8 {
        self.out_hi
    }

    pub fn map(&self, g: u8) -> u8 {
        let span = f64::from(self.out_hi - self.out_lo);
        (f64::from(self.out_lo) + f64::from(g) * span / 255.0).round() as u8
    }
}

/// Affine compression of all gray levels into `[out_lo, out_hi]`.
pub fn squash(img: &GrayImage, c: &ContrastSquash) -> GrayImage {
    let lut: Vec<u8> = (0..=255u8).map(|g| c.map(g)).collect();
    img.map(|g| lut[g as usize])
}

/// Everything needed to render a synthetic stereo sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSpec {
    pub scene: SceneSpec,
    pub radius: f64,
    pub n_frames: usize,
    pub height: f64,
    pub dims: (usize, usize),
    pub rig: StereoRig,
    pub squash: Option<ContrastSquash>,
    pub frame_dt: f64,
}

impl Default for SequenceSpec {
    fn default() -> Self {
        let k = CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0).expect("valid intrinsics");
        Self {
            scene: SceneSpec::default(),
            radius: 5.0,
            n_frames: 200,
            height: 0.0,
            dims: (640, 480),
            rig: StereoRig::new(k, 0.5).expect("valid baseline"),
            squash: None,
            frame_dt: 0.1,
        }
    }
}

/// A generated scene plus its trajectory; frames are rendered on demand.
#[derive(Debug, Clone)]
pub struct SyntheticSequence {
    pub spec: SequenceSpec,
    pub cloud: Vec<ScenePoint>,
    /// Camera-to-world poses in the scene frame.
    pub poses: Vec<PoseSE3>,
}

impl SyntheticSequence {
    pub fn new(spec: SequenceSpec) -> Self {
        let cloud = generate_scene(&spec.scene);
        let poses = trajectory_circle(spec.radius, spec.n_frames, spec.height);
        Self { spec, cloud, poses }
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn timestamp(&self, i: usize) -> f64 {
        i as f64 * self.spec.frame_dt
    }

    /// Frame `i` with the squash (if any) applied to both views.
    pub fn render(&self, i: usize) -> StereoRender {
        let mut r = render_stereo(&self.cloud, &self.poses[i], &self.spec.rig, self.spec.dims, &self.spec.scene);
        if let Some(c) = &self.spec.squash {
            r.left = squash(&r.left, c);
            r.right = squash(&r.right, c);
        }
        r
    }

    /// Ground truth relative to the first camera, which is the origin the
    /// tracker starts from.
    pub fn ground_truth(&self) -> Trajectory {
        let first_inv = self.poses[0].inverse();
        Trajectory::new(
            self.poses
                .iter()
                .enumerate()
                .map(|(i, p)| (self.timestamp(i), first_inv.compose(p)))
                .collect(),
        )
        .expect("timestamps increase")
    }

    /// `key = value` description of the sequence, including the seed.
    pub fn metadata(&self) -> String {
        let s = &self.spec;
        let sc = &s.scene;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| writeln!(out, "{k} = {v}").expect("writing to String");
        kv("seed", sc.seed.to_string());
        kv("n_points", sc.n_points.to_string());
        kv(
            "bounds_min",
            format!("{} {} {}", sc.bounds_min.x, sc.bounds_min.y, sc.bounds_min.z),
        );
        kv(
            "bounds_max",
            format!("{} {} {}", sc.bounds_max.x, sc.bounds_max.y, sc.bounds_max.z),
        );
        kv("dot_radius", sc.dot_radius.to_string());
        kv("background", sc.background.to_string());
        kv("background_ramp", sc.background_ramp.to_string());
        kv("radius", s.radius.to_string());
        kv("n_frames", s.n_frames.to_string());
        kv("height", s.height.to_string());
        kv("width_px", s.dims.0.to_string());
        kv("height_px", s.dims.1.to_string());
        kv("frame_dt", s.frame_dt.to_string());
        let (lo, hi) = s.squash.map_or((0, 255), |c| (c.out_lo, c.out_hi));
        kv("squash", format!("{lo} {hi}"));
        out
    }

    /// Writes a KITTI-layout directory: `image_0/`, `image_1/` (PGM),
    /// `times.txt`, `poses_gt.txt`, `calib.txt` and `synth.txt`.
    pub fn write_dataset(&self, dir: &Path) -> io::Result<()> {
        let left_dir = dir.join("image_0");
        let right_dir = dir.join("image_1");
        fs::create_dir_all(&left_dir)?;
        fs::create_dir_all(&right_dir)?;
        let mut times = String::new();
        for i in 0..self.len() {
            let r = self.render(i);
            let name = format!("{i:06}.pgm");
            fs::write(left_dir.join(&name), save_pgm(&r.left))?;
            fs::write(right_dir.join(&name), save_pgm(&r.right))?;
            writeln!(times, "{:.6}", self.timestamp(i)).expect("writing to String");
        }
        fs::write(dir.join("times.txt"), times)?;
        fs::write(dir.join("poses_gt.txt"), save_kitti_poses(&self.ground_truth()))?;
        fs::write(dir.join("calib.txt"), kitti_calibration(&self.spec.rig))?;
        fs::write(dir.join("synth.txt"), self.metadata())?;
        Ok(())
    }
}

/// KITTI `calib.txt` rows `P0:` and `P1:` for a rectified rig.
pub fn kitti_calibration(rig: &StereoRig) -> String {
    let k = &rig.intrinsics;
    let row = |tx: f64| {
        format!(
            "{} 0 {} {} 0 {} {} 0 0 0 1 0",
            k.fx, k.cx, tx, k.fy, k.cy
        )
    };
    format!("P0: {}\nP1: {}\n", row(0.0), row(-k.fx * rig.baseline))
}
