//! Trajectory files, rigid alignment and absolute trajectory error.
//!
//! Poses in a [`Trajectory`] are camera-to-world. Two text formats are
//! supported:
//!
//! * KITTI: 12 reals per line, the row-major `[R | t]`; timestamps are the
//!   line index unless supplied separately.
//! * TUM: `timestamp tx ty tz qx qy qz qw`, `#` comments allowed.

use std::fmt::Write as _;

use log::warn;
use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector3};
use thiserror::Error;

use crate::geometry::{orthonormalize, PoseSE3};

/// Rotations further than this from orthonormal are repaired on load.
pub const ORTHONORMAL_TOL: f64 = 1e-3;
pub const DEFAULT_MAX_DT: f64 = 0.02;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("line {line}: expected {expected} fields, found {found}")]
    FieldCount {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: invalid number {token:?}")]
    Number { line: usize, token: String },
    #[error("line {line}: quaternion norm {norm} is not within 1e-3 of 1")]
    Quaternion { line: usize, norm: f64 },
    #[error("line {line}: timestamp {t} does not increase")]
    NonMonotonic { line: usize, t: f64 },
    #[error("trajectory file is empty")]
    Empty,
    #[error("cannot detect trajectory format: first line has {0} fields (12 = KITTI, 8 = TUM)")]
    UnknownFormat(usize),
    #[error("timestamp count {times} does not match pose count {poses}")]
    TimestampCount { times: usize, poses: usize },
    #[error("no pose pairs within {max_dt} s")]
    NoAssociations { max_dt: f64 },
    #[error("alignment needs at least 3 pairs, got {0}")]
    TooFewPairs(usize),
    #[error("degenerate configuration: positions are collinear, rotation is ill-determined")]
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryFormat {
    Kitti,
    Tum,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    entries: Vec<(f64, PoseSE3)>,
}

impl Trajectory {
    /// Builds a trajectory; timestamps must be strictly increasing.
    pub fn new(entries: Vec<(f64, PoseSE3)>) -> Result<Self, EvalError> {
        for (i, w) in entries.windows(2).enumerate() {
            if !(w[1].0 > w[0].0) {
                return Err(EvalError::NonMonotonic {
                    line: i + 2,
                    t: w[1].0,
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(f64, PoseSE3)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.entries.iter().map(|(_, p)| p.translation).collect()
    }

    /// Sum of distances between consecutive positions.
    pub fn path_length(&self) -> f64 {
        self.entries
            .windows(2)
            .map(|w| (w[1].1.translation - w[0].1.translation).norm())
            .sum()
    }

    /// Replaces the timestamps (e.g. KITTI poses plus a `times.txt`).
    pub fn with_timestamps(self, times: &[f64]) -> Result<Self, EvalError> {
        if times.len() != self.entries.len() {
            return Err(EvalError::TimestampCount {
                times: times.len(),
                poses: self.entries.len(),
            });
        }
        Self::new(
            times
                .iter()
                .zip(self.entries)
                .map(|(&t, (_, p))| (t, p))
                .collect(),
        )
    }

    /// Applies `transform` on the left of every pose.
    pub fn transformed(&self, transform: &PoseSE3) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|(t, p)| (*t, transform.compose(p)))
                .collect(),
        }
    }
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_fields(line: usize, text: &str, expected: usize) -> Result<Vec<f64>, EvalError> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.len() != expected {
        return Err(EvalError::FieldCount {
            line,
            expected,
            found: tokens.len(),
        });
    }
    tokens
        .iter()
        .map(|t| match t.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(EvalError::Number {
                line,
                token: t.to_string(),
            }),
        })
        .collect()
}

/// Field count of the first data line: 12 means KITTI, 8 means TUM.
pub fn detect_format(text: &str) -> Result<TrajectoryFormat, EvalError> {
    let (_, first) = data_lines(text).next().ok_or(EvalError::Empty)?;
    match first.split_whitespace().count() {
        12 => Ok(TrajectoryFormat::Kitti),
        8 => Ok(TrajectoryFormat::Tum),
        n => Err(EvalError::UnknownFormat(n)),
    }
}

pub fn load_trajectory(text: &str) -> Result<(Trajectory, TrajectoryFormat), EvalError> {
    let format = detect_format(text)?;
    let traj = match format {
        TrajectoryFormat::Kitti => load_kitti_poses(text)?,
        TrajectoryFormat::Tum => load_tum_trajectory(text)?,
    };
    Ok((traj, format))
}

pub fn load_kitti_poses(text: &str) -> Result<Trajectory, EvalError> {
    let mut entries = Vec::new();
    for (line, l) in data_lines(text) {
        let v = parse_fields(line, l, 12)?;
        let mut m = [0.0; 12];
        m.copy_from_slice(&v);
        let mut pose = PoseSE3::from_row_major_3x4(&m);
        let err = pose.orthonormality_error();
        if err > ORTHONORMAL_TOL {
            warn!("line {line}: rotation off SO(3) by {err:.2e}, re-orthonormalizing");
            pose.rotation = orthonormalize(&pose.rotation);
        }
        entries.push((entries.len() as f64, pose));
    }
    if entries.is_empty() {
        return Err(EvalError::Empty);
    }
    Trajectory::new(entries)
}

pub fn save_kitti_poses(traj: &Trajectory) -> String {
    let mut s = String::new();
    for (_, pose) in traj.entries() {
        let fields: Vec<String> = pose.to_row_major_3x4().iter().map(|v| format!("{v:e}")).collect();
        s.push_str(&fields.join(" "));
        s.push('\n');
    }
    s
}

pub fn load_tum_trajectory(text: &str) -> Result<Trajectory, EvalError> {
    let mut entries: Vec<(f64, PoseSE3)> = Vec::new();
    for (line, l) in data_lines(text) {
        let v = parse_fields(line, l, 8)?;
        let q = Quaternion::new(v[7], v[4], v[5], v[6]);
        let norm = q.norm();
        if (norm - 1.0).abs() > 1e-3 {
            return Err(EvalError::Quaternion { line, norm });
        }
        let rot = UnitQuaternion::from_quaternion(q).to_rotation_matrix();
        if let Some(&(prev, _)) = entries.last() {
            if !(v[0] > prev) {
                return Err(EvalError::NonMonotonic { line, t: v[0] });
            }
        }
        entries.push((v[0], PoseSE3::new(*rot.matrix(), Vector3::new(v[1], v[2], v[3]))));
    }
    if entries.is_empty() {
        return Err(EvalError::Empty);
    }
    Trajectory::new(entries)
}

pub fn save_tum_trajectory(traj: &Trajectory) -> String {
    let mut s = String::new();
    for (t, pose) in traj.entries() {
        let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(pose.rotation));
        let p = pose.translation;
        writeln!(
            s,
            "{t} {:e} {:e} {:e} {:e} {:e} {:e} {:e}",
            p.x, p.y, p.z, q.i, q.j, q.k, q.w
        )
        .expect("writing to String");
    }
    s
}

/// Parses one timestamp per line (KITTI `times.txt`).
pub fn load_times(text: &str) -> Result<Vec<f64>, EvalError> {
    data_lines(text)
        .map(|(line, l)| parse_fields(line, l, 1).map(|v| v[0]))
        .collect()
}

/// An associated estimate/reference pair, indices into the two trajectories.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosePair {
    pub est_idx: usize,
    pub ref_idx: usize,
    pub dt: f64,
}

/// Greedy nearest-timestamp association: candidate pairs within `max_dt` are
/// taken in order of increasing |dt| while neither side is used yet. Output
/// is sorted by estimate index.
pub fn associate(est: &Trajectory, reference: &Trajectory, max_dt: f64) -> Result<Vec<PosePair>, EvalError> {
    let ref_times: Vec<f64> = reference.entries().iter().map(|e| e.0).collect();
    let mut candidates = Vec::new();
    for (ei, (t, _)) in est.entries().iter().enumerate() {
        let start = ref_times.partition_point(|&r| r < t - max_dt);
        for (ri, &r) in ref_times.iter().enumerate().skip(start) {
            if r > t + max_dt {
                break;
            }
            candidates.push(PosePair {
                est_idx: ei,
                ref_idx: ri,
                dt: (r - t).abs(),
            });
        }
    }
    candidates.sort_by(|a, b| {
        a.dt.total_cmp(&b.dt)
            .then(a.est_idx.cmp(&b.est_idx))
            .then(a.ref_idx.cmp(&b.ref_idx))
    });
    let mut est_used = vec![false; est.len()];
    let mut ref_used = vec![false; reference.len()];
    let mut pairs = Vec::new();
    for c in candidates {
        if !est_used[c.est_idx] && !ref_used[c.ref_idx] {
            est_used[c.est_idx] = true;
            ref_used[c.ref_idx] = true;
            pairs.push(c);
        }
    }
    if pairs.is_empty() {
        return Err(EvalError::NoAssociations { max_dt });
    }
    pairs.sort_by_key(|p| p.est_idx);
    Ok(pairs)
}

/// Result of a closed-form alignment `ref ~ scale * R * est + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alignment {
    pub transform: PoseSE3,
    pub scale: f64,
}

impl Alignment {
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.transform.rotation * p * self.scale + self.transform.translation
    }
}

/// Least-squares rigid (optionally similarity) alignment of `est` onto
/// `reference` by SVD of the cross-covariance, with the determinant-sign
/// correction that excludes reflections.
pub fn align_umeyama(
    est: &[Vector3<f64>],
    reference: &[Vector3<f64>],
    with_scale: bool,
) -> Result<Alignment, EvalError> {
    assert_eq!(est.len(), reference.len(), "paired positions");
    let n = est.len();
    if n < 3 {
        return Err(EvalError::TooFewPairs(n));
    }
    let nf = n as f64;
    let mu_e = est.iter().sum::<Vector3<f64>>() / nf;
    let mu_r = reference.iter().sum::<Vector3<f64>>() / nf;
    let mut cov = Matrix3::zeros();
    let mut var_e = 0.0;
    for (e, r) in est.iter().zip(reference) {
        let de = e - mu_e;
        cov += (r - mu_r) * de.transpose();
        var_e += de.norm_squared();
    }
    cov /= nf;
    var_e /= nf;

    // Collinear or coincident estimates leave the rotation about the line free.
    let spread = {
        let mut c = Matrix3::zeros();
        for e in est {
            let de = e - mu_e;
            c += de * de.transpose();
        }
        c.symmetric_eigenvalues()
    };
    let mut ev: Vec<f64> = spread.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    if ev[0] <= 0.0 || ev[1] <= 1e-12 * ev[0] {
        return Err(EvalError::Degenerate);
    }

    let svd = cov.svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let mut s = Matrix3::identity();
    if (u.determinant() * v_t.determinant()) < 0.0 {
        s[(2, 2)] = -1.0;
    }
    let rotation = u * s * v_t;
    let scale = if with_scale {
        let d = svd.singular_values;
        (d[0] * s[(0, 0)] + d[1] * s[(1, 1)] + d[2] * s[(2, 2)]) / var_e
    } else {
        1.0
    };
    let translation = mu_r - rotation * mu_e * scale;
    Ok(Alignment {
        transform: PoseSE3::new(rotation, translation),
        scale,
    })
}

/// One associated pose after alignment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignedPair {
    pub timestamp: f64,
    pub error: f64,
    pub est_aligned: Vector3<f64>,
    pub reference: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentResult {
    pub alignment: Alignment,
    pub rmse: f64,
    pub per_pose_errors: Vec<f64>,
    pub pairs: Vec<AlignedPair>,
}

impl AlignmentResult {
    pub fn transform(&self) -> &PoseSE3 {
        &self.alignment.transform
    }

    pub fn mean(&self) -> f64 {
        self.per_pose_errors.iter().sum::<f64>() / self.per_pose_errors.len() as f64
    }

    pub fn median(&self) -> f64 {
        let mut v = self.per_pose_errors.clone();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    }

    pub fn max(&self) -> f64 {
        self.per_pose_errors.iter().copied().fold(0.0, f64::max)
    }
}

/// Associates, aligns, and computes translational ATE RMSE.
pub fn ate_rmse(
    est: &Trajectory,
    reference: &Trajectory,
    max_dt: f64,
    with_scale: bool,
) -> Result<AlignmentResult, EvalError> {
    let pairs = associate(est, reference, max_dt)?;
    let e: Vec<_> = pairs.iter().map(|p| est.entries()[p.est_idx].1.translation).collect();
    let r: Vec<_> = pairs.iter().map(|p| reference.entries()[p.ref_idx].1.translation).collect();
    let alignment = align_umeyama(&e, &r, with_scale)?;
    let aligned: Vec<AlignedPair> = pairs
        .iter()
        .zip(e.iter().zip(&r))
        .map(|(p, (e, r))| {
            let ea = alignment.apply(e);
            AlignedPair {
                timestamp: reference.entries()[p.ref_idx].0,
                error: (r - ea).norm(),
                est_aligned: ea,
                reference: *r,
            }
        })
        .collect();
    let per_pose_errors: Vec<f64> = aligned.iter().map(|a| a.error).collect();
    let rmse = (per_pose_errors.iter().map(|e| e * e).sum::<f64>() / per_pose_errors.len() as f64).sqrt();
    Ok(AlignmentResult {
        alignment,
        rmse,
        per_pose_errors,
        pairs: aligned,
    })
}

/// CSV with columns `timestamp, err_m, est_x, est_y, est_z, ref_x, ref_y, ref_z`.
pub fn errors_csv(result: &AlignmentResult) -> String {
    let mut s = String::from("timestamp,err_m,est_x,est_y,est_z,ref_x,ref_y,ref_z\n");
    for p in &result.pairs {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            p.timestamp,
            p.error,
            p.est_aligned.x,
            p.est_aligned.y,
            p.est_aligned.z,
            p.reference.x,
            p.reference.y,
            p.reference.z
        )
        .expect("writing to String");
    }
    s
}

/// Published ATE RMSE values (meters) for the public benchmark sequences,
/// for the reported method and for ORB-SLAM2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PublishedAte {
    pub sequence: &'static str,
    pub reported: f64,
    pub orb_slam2: f64,
}

pub const PUBLISHED_ATE: &[PublishedAte] = &[
    PublishedAte { sequence: "kitti-00", reported: 1.3034, orb_slam2: 1.30345 },
    PublishedAte { sequence: "kitti-01", reported: 10.2217, orb_slam2: 10.8385 },
    PublishedAte { sequence: "kitti-02", reported: 5.74836, orb_slam2: 5.6336 },
    PublishedAte { sequence: "kitti-03", reported: 0.996917, orb_slam2: 0.977166 },
    PublishedAte { sequence: "kitti-04", reported: 0.233628, orb_slam2: 0.163535 },
    PublishedAte { sequence: "kitti-05", reported: 0.805461, orb_slam2: 0.764564 },
    PublishedAte { sequence: "kitti-06", reported: 0.812416, orb_slam2: 1.05377 },
    PublishedAte { sequence: "kitti-07", reported: 0.500916, orb_slam2: 0.489687 },
    PublishedAte { sequence: "kitti-08", reported: 3.08941, orb_slam2: 3.40213 },
    PublishedAte { sequence: "kitti-09", reported: 3.61144, orb_slam2: 3.87987 },
    PublishedAte { sequence: "kitti-10", reported: 0.924477, orb_slam2: 1.02258 },
    PublishedAte { sequence: "MH-01-easy", reported: 0.0410544, orb_slam2: 0.0380801 },
    PublishedAte { sequence: "MH-02-easy", reported: 0.0404337, orb_slam2: 0.0436409 },
    PublishedAte { sequence: "MH-03-med", reported: 0.0507298, orb_slam2: 0.0405288 },
    PublishedAte { sequence: "MH-04-dif", reported: 0.105072, orb_slam2: 0.121237 },
    PublishedAte { sequence: "MH-05-dif", reported: 0.0520933, orb_slam2: 0.0970062 },
    PublishedAte { sequence: "V1-01-easy", reported: 0.0884811, orb_slam2: 0.0885614 },
    PublishedAte { sequence: "V1-02-med", reported: 0.0643252, orb_slam2: 0.0630205 },
    PublishedAte { sequence: "V1-03-dif", reported: 0.0809867, orb_slam2: 0.0650267 },
    PublishedAte { sequence: "V2-01-easy", reported: 0.0625152, orb_slam2: 0.0584563 },
    PublishedAte { sequence: "V2-02-med", reported: 0.0639234, orb_slam2: 0.0573975 },
    PublishedAte { sequence: "V2-03-dif", reported: 0.234987, orb_slam2: 0.236151 },
];

/// Case-insensitive lookup; accepts `00`, `kitti-00`, `MH-04`, `mh-04-dif`.
pub fn published_ate(sequence: &str) -> Option<&'static PublishedAte> {
    let key = sequence.to_ascii_lowercase();
    let key = if key.len() == 2 && key.bytes().all(|b| b.is_ascii_digit()) {
        format!("kitti-{key}")
    } else {
        key
    };
    PUBLISHED_ATE.iter().find(|p| {
        let name = p.sequence.to_ascii_lowercase();
        name == key || name.starts_with(&format!("{key}-"))
    })
}

/// Aligned text table of the evaluation, optionally with published values.
pub fn format_report(result: &AlignmentResult, published: Option<&PublishedAte>) -> String {
    let t = result.transform();
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(t.rotation));
    let mut s = String::new();
    let row = |s: &mut String, k: &str, v: String| {
        writeln!(s, "{k:<22}{v}").expect("writing to String");
    };
    row(&mut s, "pairs", result.per_pose_errors.len().to_string());
    row(&mut s, "ATE RMSE (m)", format!("{:.6}", result.rmse));
    row(&mut s, "mean (m)", format!("{:.6}", result.mean()));
    row(&mut s, "median (m)", format!("{:.6}", result.median()));
    row(&mut s, "max (m)", format!("{:.6}", result.max()));
    row(
        &mut s,
        "align t (m)",
        format!("{:.6} {:.6} {:.6}", t.translation.x, t.translation.y, t.translation.z),
    );
    row(
        &mut s,
        "align q (xyzw)",
        format!("{:.6} {:.6} {:.6} {:.6}", q.i, q.j, q.k, q.w),
    );
    row(&mut s, "align scale", format!("{:.6}", result.alignment.scale));
    if let Some(p) = published {
        writeln!(s).expect("writing to String");
        writeln!(s, "{:<14}{:>14}{:>14}{:>14}", "sequence", "measured", "published", "ORB-SLAM2")
            .expect("writing to String");
        writeln!(
            s,
            "{:<14}{:>14.6}{:>14}{:>14}",
            p.sequence, result.rmse, p.reported, p.orb_slam2
        )
        .expect("writing to String");
    }
    s
}
