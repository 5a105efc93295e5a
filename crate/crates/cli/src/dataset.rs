//! Dataset layout adapters.
//!
//! * KITTI: `image_0/` and `image_1/` with matching frame file names,
//!   `times.txt`, and `calib.txt` holding `P0:`/`P1:` rows.
//! * EuRoC: `cam0/data/` and `cam1/data/` with `cam0/data.csv` listing
//!   `timestamp_ns,filename`. The images must already be rectified; the
//!   calibration comes from `--calib` or `calib.txt` in the dataset root as
//!   `fx fy cx cy baseline`.
//! * Synth: the KITTI layout written by `synth`, with `poses_gt.txt`.
//!
//! Frames may be PGM or PNG.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::warn;
use stereo_vo::eval::{load_kitti_poses, load_times, Trajectory};
use stereo_vo::geometry::StereoRig;
use stereo_vo::image::{load_pgm, GrayImage};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Layout {
    Kitti,
    Euroc,
    Synth,
}

impl FromStr for Layout {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "kitti" => Ok(Self::Kitti),
            "euroc" => Ok(Self::Euroc),
            "synth" => Ok(Self::Synth),
            other => Err(format!("unknown layout {other:?} (kitti|euroc|synth)")),
        }
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Kitti => "kitti",
            Self::Euroc => "euroc",
            Self::Synth => "synth",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FramePaths {
    pub timestamp: f64,
    pub left: PathBuf,
    pub right: PathBuf,
}

/// An opened dataset; images are read on demand.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub rig: StereoRig,
    pub frames: Vec<FramePaths>,
    /// Camera-to-world reference poses, when the dataset ships them.
    pub ground_truth: Option<Trajectory>,
}

impl Dataset {
    pub fn load_pair(&self, i: usize) -> Result<(f64, GrayImage, GrayImage), CliError> {
        let f = &self.frames[i];
        Ok((f.timestamp, load_gray(&f.left)?, load_gray(&f.right)?))
    }
}

/// Reads a PGM with the built-in parser or anything else through `image`.
pub fn load_gray(path: &Path) -> Result<GrayImage, CliError> {
    let fail = |reason: String| CliError::Image {
        path: path.to_path_buf(),
        reason,
    };
    let is_pgm = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    if is_pgm {
        let bytes = fs::read(path).map_err(|e| fail(e.to_string()))?;
        return load_pgm(&bytes).map_err(|e| fail(e.to_string()));
    }
    let img = image::open(path).map_err(|e| fail(e.to_string()))?.into_luma8();
    let (w, h) = img.dimensions();
    GrayImage::new(w as usize, h as usize, img.into_raw()).map_err(|e| fail(e.to_string()))
}

fn require(path: &Path) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::NotFound(path.to_path_buf()))
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    require(path)?;
    fs::read_to_string(path).map_err(CliError::io(path))
}

fn read_rig(calib: Option<&Path>, root: &Path) -> Result<StereoRig, CliError> {
    let path = calib.map_or_else(|| root.join("calib.txt"), Path::to_path_buf);
    if !path.exists() {
        return Err(CliError::Calibration(format!("no calibration file at {}", path.display())));
    }
    let text = fs::read_to_string(&path).map_err(CliError::io(&path))?;
    StereoRig::parse(&text).map_err(|e| CliError::Calibration(format!("{}: {e}", path.display())))
}

fn image_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    require(dir)?;
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(CliError::io(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "pgm"))
        })
        .collect();
    files.sort();
    Ok(files)
}

fn open_kitti(root: &Path, calib: Option<&Path>, need_ground_truth: bool) -> Result<Dataset, CliError> {
    let lefts = image_files(&root.join("image_0"))?;
    let right_dir = root.join("image_1");
    require(&right_dir)?;
    let times_path = root.join("times.txt");
    let times = if times_path.exists() {
        let text = fs::read_to_string(&times_path).map_err(CliError::io(&times_path))?;
        let t = load_times(&text)?;
        if t.len() != lefts.len() {
            return Err(CliError::Usage(format!(
                "{} lists {} timestamps for {} frames",
                times_path.display(),
                t.len(),
                lefts.len()
            )));
        }
        t
    } else {
        warn!("no times.txt in {}; using frame indices as timestamps", root.display());
        (0..lefts.len()).map(|i| i as f64).collect()
    };
    let rig = read_rig(calib, root)?;
    let frames = lefts
        .into_iter()
        .zip(times)
        .map(|(left, timestamp)| FramePaths {
            timestamp,
            right: right_dir.join(left.file_name().expect("listed file")),
            left,
        })
        .collect::<Vec<_>>();

    let gt_path = root.join("poses_gt.txt");
    let ground_truth = if gt_path.exists() {
        let text = fs::read_to_string(&gt_path).map_err(CliError::io(&gt_path))?;
        let times: Vec<f64> = frames.iter().map(|f| f.timestamp).collect();
        Some(load_kitti_poses(&text)?.with_timestamps(&times)?)
    } else if need_ground_truth {
        return Err(CliError::NotFound(gt_path));
    } else {
        None
    };
    Ok(Dataset { rig, frames, ground_truth })
}

fn open_euroc(root: &Path, calib: Option<&Path>) -> Result<Dataset, CliError> {
    let csv_path = root.join("cam0").join("data.csv");
    let text = read_text(&csv_path)?;
    let left_dir = root.join("cam0").join("data");
    let right_dir = root.join("cam1").join("data");
    require(&left_dir)?;
    require(&right_dir)?;
    let mut frames = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (stamp, name) = line
            .split_once(',')
            .ok_or_else(|| CliError::Usage(format!("{}:{}: expected `timestamp,filename`", csv_path.display(), i + 1)))?;
        let ns: u64 = stamp
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{}:{}: bad timestamp {stamp:?}", csv_path.display(), i + 1)))?;
        let name = name.trim();
        frames.push(FramePaths {
            timestamp: ns as f64 * 1e-9,
            left: left_dir.join(name),
            right: right_dir.join(name),
        });
    }
    let rig = read_rig(calib, root)?;
    Ok(Dataset {
        rig,
        frames,
        ground_truth: None,
    })
}

pub fn open_dataset(root: &Path, layout: Layout, calib: Option<&Path>) -> Result<Dataset, CliError> {
    require(root)?;
    match layout {
        Layout::Kitti => open_kitti(root, calib, false),
        Layout::Synth => open_kitti(root, calib, true),
        Layout::Euroc => open_euroc(root, calib),
    }
}
