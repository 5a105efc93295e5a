use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use stereo_vo::eval::{ate_rmse, errors_csv, format_report, save_kitti_poses, save_tum_trajectory, DEFAULT_MAX_DT};
use stereo_vo::histeq::HeqMode;
use stereo_vo::odometry::{OdometryError, RunReport, Tracker};

use crate::config::RunConfig;
use crate::dataset::open_dataset;
use crate::{CliError, RunArgs};

/// What a run produced.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub config: RunConfig,
    pub frames: usize,
    pub tracked: usize,
    pub lost: usize,
    pub first_lost: Option<u64>,
    pub keyframes: usize,
    pub heq_frames: usize,
    /// ATE RMSE against the dataset's ground truth, when it has one.
    pub ate_rmse: Option<f64>,
    pub path_length: Option<f64>,
    pub seconds: f64,
    pub report: RunReport,
    pub out_dir: PathBuf,
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "frames      {}", self.frames)?;
        writeln!(f, "tracked     {}", self.tracked)?;
        match self.first_lost {
            Some(id) => writeln!(f, "lost        {} (first at frame {id})", self.lost)?,
            None => writeln!(f, "lost        0")?,
        }
        writeln!(f, "keyframes   {}", self.keyframes)?;
        writeln!(f, "equalized   {} frames", self.heq_frames)?;
        if let (Some(ate), Some(len)) = (self.ate_rmse, self.path_length) {
            writeln!(f, "ATE RMSE    {ate:.4} m over a {len:.2} m path ({:.2}%)", 100.0 * ate / len)?;
        }
        writeln!(f, "time        {:.1} s", self.seconds)?;
        write!(f, "outputs in  {}", self.out_dir.display())
    }
}

/// Resolves the config file and flags into one [`RunConfig`].
pub fn resolve_config(args: &RunArgs) -> Result<RunConfig, CliError> {
    let mut config = match &args.config {
        Some(path) => {
            if !path.exists() {
                return Err(CliError::NotFound(path.clone()));
            }
            let text = fs::read_to_string(path).map_err(CliError::io(path))?;
            RunConfig::parse(&text).map_err(|source| CliError::Config {
                origin: path.display().to_string(),
                source,
            })?
        }
        None => RunConfig::default(),
    };
    if let Some(d) = &args.dataset {
        config.dataset = Some(d.clone());
    }
    if let Some(l) = args.layout {
        config.layout = l;
    }
    if let Some(o) = &args.out {
        config.out = o.clone();
    }
    if let Some(c) = &args.calib {
        config.calib = Some(c.clone());
    }
    if let Some(h) = &args.heq {
        config.pipeline.heq.mode = parse_heq(h)?;
    }
    Ok(config)
}

pub(crate) fn parse_heq(value: &str) -> Result<HeqMode, CliError> {
    value.parse().map_err(|reason| CliError::Config {
        origin: "--heq".into(),
        source: stereo_vo::config::ConfigError::InvalidValue {
            line: 0,
            key: "heq.mode".into(),
            value: value.into(),
            reason,
        },
    })
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(CliError::io(path))
}

/// Tracks every frame of the dataset and writes `trajectory_kitti.txt`,
/// `trajectory_tum.txt`, `report.csv` and `config.txt` (plus `ate.txt` and
/// `ate_errors.csv` when ground truth is available) to the output directory.
/// Lost frames are reported, not treated as errors.
pub fn cmd_run(args: &RunArgs) -> Result<RunSummary, CliError> {
    let config = resolve_config(args)?;
    let root = config
        .dataset
        .clone()
        .ok_or_else(|| CliError::Usage("no dataset given (--dataset or `dataset =` in the config)".into()))?;
    let dataset = open_dataset(&root, config.layout, config.calib.as_deref())?;
    if dataset.frames.len() < 2 {
        return Err(OdometryError::TooFewFrames(dataset.frames.len()).into());
    }
    fs::create_dir_all(&config.out).map_err(CliError::io(&config.out))?;

    let start = Instant::now();
    let mut tracker = Tracker::new(dataset.rig, config.pipeline.clone());
    for i in 0..dataset.frames.len() {
        let (t, left, right) = dataset.load_pair(i)?;
        let record = tracker.process(t, &left, &right)?;
        info!("frame {}: {} with {} inliers", record.id, record.status, record.n_inliers);
    }
    let seconds = start.elapsed().as_secs_f64();
    let (trajectory, report) = tracker.finish();

    let out = &config.out;
    write(&out.join("trajectory_kitti.txt"), &save_kitti_poses(&trajectory))?;
    write(&out.join("trajectory_tum.txt"), &save_tum_trajectory(&trajectory))?;
    write(&out.join("report.csv"), &report.to_csv())?;
    write(&out.join("config.txt"), &config.to_text())?;

    let mut ate = None;
    let mut path_length = None;
    if let Some(gt) = &dataset.ground_truth {
        match ate_rmse(&trajectory, gt, DEFAULT_MAX_DT, false) {
            Ok(result) => {
                write(&out.join("ate.txt"), &format_report(&result, None))?;
                write(&out.join("ate_errors.csv"), &errors_csv(&result))?;
                ate = Some(result.rmse);
                path_length = Some(gt.path_length());
            }
            Err(e) => warn!("no ATE for this run: {e}"),
        }
    }

    Ok(RunSummary {
        frames: report.frames.len(),
        tracked: trajectory.len(),
        lost: report.n_lost(),
        first_lost: report.first_lost(),
        keyframes: report.n_keyframes(),
        heq_frames: report.frames.iter().filter(|f| f.heq_applied).count(),
        ate_rmse: ate,
        path_length,
        seconds,
        out_dir: out.clone(),
        report,
        config,
    })
}
