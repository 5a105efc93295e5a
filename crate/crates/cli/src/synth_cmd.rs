use std::fs;
use std::path::PathBuf;

use stereo_vo::synth::{ContrastSquash, SceneSpec, SequenceSpec, SyntheticSequence};

use crate::{CliError, SynthArgs};

#[derive(Debug, Clone)]
pub struct SynthOutcome {
    pub dir: PathBuf,
    pub frames: usize,
    pub path_length: f64,
}

pub fn sequence_spec(args: &SynthArgs) -> Result<SequenceSpec, CliError> {
    let squash = match args.squash.as_deref() {
        None => None,
        Some(&[lo, hi]) => Some(
            ContrastSquash::new(lo, hi).ok_or_else(|| CliError::Usage(format!("--squash needs lo < hi, got {lo} {hi}")))?,
        ),
        Some(other) => return Err(CliError::Usage(format!("--squash takes two levels, got {other:?}"))),
    };
    if args.frames < 2 {
        return Err(CliError::Usage("--frames must be at least 2".into()));
    }
    if args.points == 0 {
        return Err(CliError::Usage("--points must be at least 1".into()));
    }
    if !(args.radius > 0.0) {
        return Err(CliError::Usage("--radius must be positive".into()));
    }
    Ok(SequenceSpec {
        scene: SceneSpec {
            n_points: args.points,
            seed: args.seed,
            ..SceneSpec::default()
        },
        radius: args.radius,
        n_frames: args.frames,
        squash,
        ..SequenceSpec::default()
    })
}

/// Writes a KITTI-layout synthetic dataset with ground truth to `--out`.
pub fn cmd_synth(args: &SynthArgs) -> Result<SynthOutcome, CliError> {
    let seq = SyntheticSequence::new(sequence_spec(args)?);
    fs::create_dir_all(&args.out).map_err(CliError::io(&args.out))?;
    seq.write_dataset(&args.out).map_err(CliError::io(&args.out))?;
    Ok(SynthOutcome {
        dir: args.out.clone(),
        frames: seq.len(),
        path_length: seq.ground_truth().path_length(),
    })
}
