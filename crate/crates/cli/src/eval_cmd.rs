use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use stereo_vo::eval::{
    ate_rmse, errors_csv, format_report, load_times, load_trajectory, published_ate, AlignmentResult, PublishedAte,
    Trajectory, TrajectoryFormat,
};

use crate::{CliError, EvalArgs};

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub result: AlignmentResult,
    pub published: Option<&'static PublishedAte>,
    /// The printed report.
    pub report: String,
    pub errors_csv: PathBuf,
    pub aligned_csv: PathBuf,
}

fn read(path: &Path) -> Result<String, CliError> {
    if !path.exists() {
        return Err(CliError::NotFound(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(CliError::io(path))
}

/// Guesses a published sequence from a file name such as `00.txt` or
/// `MH_04_difficult.csv`.
fn guess_sequence(path: &Path) -> Option<&'static PublishedAte> {
    let stem = path.file_stem()?.to_str()?.to_ascii_lowercase().replace('_', "-");
    published_ate(&stem).or_else(|| {
        let parts: Vec<&str> = stem.split('-').collect();
        (parts.len() >= 2).then(|| published_ate(&parts[..2].join("-"))).flatten()
    })
}

/// Gives KITTI-format trajectories real timestamps: from `--times` when
/// given, otherwise from the other trajectory if it is TUM with the same
/// number of poses.
fn attach_times(
    est: (Trajectory, TrajectoryFormat),
    reference: (Trajectory, TrajectoryFormat),
    times: Option<&[f64]>,
) -> Result<(Trajectory, Trajectory), CliError> {
    use TrajectoryFormat::{Kitti, Tum};
    let fix = |t: Trajectory, f: TrajectoryFormat, other: &(Trajectory, TrajectoryFormat)| -> Result<Trajectory, CliError> {
        if f != Kitti {
            return Ok(t);
        }
        if let Some(times) = times {
            return Ok(t.with_timestamps(times)?);
        }
        if other.1 == Tum {
            if other.0.len() != t.len() {
                return Err(CliError::Usage(format!(
                    "KITTI trajectory with {} poses against TUM with {}: pass --times",
                    t.len(),
                    other.0.len()
                )));
            }
            warn!("KITTI poses take the timestamps of the TUM trajectory by index");
            let stamps: Vec<f64> = other.0.entries().iter().map(|(s, _)| *s).collect();
            return Ok(t.with_timestamps(&stamps)?);
        }
        Ok(t)
    };
    let e = fix(est.0.clone(), est.1, &reference)?;
    let r = fix(reference.0.clone(), reference.1, &est)?;
    Ok((e, r))
}

/// Associates, aligns and reports ATE. Writes `<estimate>_ate_errors.csv`
/// (per associated pose) and `<estimate>_aligned.csv` (every estimated
/// position after alignment).
pub fn cmd_eval(args: &EvalArgs) -> Result<EvalOutcome, CliError> {
    let est = load_trajectory(&read(&args.estimate)?)?;
    let reference = load_trajectory(&read(&args.reference)?)?;
    let times = match &args.times {
        Some(p) => Some(load_times(&read(p)?)?),
        None => None,
    };
    let (est, reference) = attach_times(est, reference, times.as_deref())?;
    let result = ate_rmse(&est, &reference, args.max_dt, args.sim3)?;

    let published = match &args.sequence {
        Some(name) => {
            let p = published_ate(name);
            if p.is_none() {
                warn!("no published value for sequence {name:?}");
            }
            p
        }
        None => guess_sequence(&args.reference),
    };

    let out_dir = match &args.out {
        Some(d) => d.clone(),
        None => args
            .estimate
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map_or_else(|| PathBuf::from("."), Path::to_path_buf),
    };
    fs::create_dir_all(&out_dir).map_err(CliError::io(&out_dir))?;
    let stem = args
        .estimate
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("estimate");
    let errors_path = out_dir.join(format!("{stem}_ate_errors.csv"));
    let aligned_path = out_dir.join(format!("{stem}_aligned.csv"));
    fs::write(&errors_path, errors_csv(&result)).map_err(CliError::io(&errors_path))?;
    let mut aligned = String::from("timestamp,x,y,z\n");
    for (t, pose) in est.entries() {
        let p = result.alignment.apply(&pose.translation);
        writeln!(aligned, "{t},{},{},{}", p.x, p.y, p.z).expect("writing to String");
    }
    fs::write(&aligned_path, aligned).map_err(CliError::io(&aligned_path))?;

    let mut report = format_report(&result, published);
    writeln!(report, "\nper-pose errors: {}", errors_path.display()).expect("writing to String");
    writeln!(report, "aligned trajectory: {}", aligned_path.display()).expect("writing to String");
    Ok(EvalOutcome {
        result,
        published,
        report,
        errors_csv: errors_path,
        aligned_csv: aligned_path,
    })
}
