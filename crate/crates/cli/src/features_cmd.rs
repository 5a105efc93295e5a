use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use stereo_vo::config::PipelineConfig;
use stereo_vo::features::{detect_and_describe, Feature, SamplingPattern};
use stereo_vo::histeq::equalize;
use stereo_vo::image::{build_pyramid, save_pgm, GrayImage};

use crate::dataset::load_gray;
use crate::run_cmd::parse_heq;
use crate::{CliError, FeaturesArgs};

#[derive(Debug, Clone)]
pub struct FeaturesOutcome {
    pub n_features: usize,
    pub heq_applied: bool,
    /// Keypoint counts on the raw and on the equalized image.
    pub before_after: Option<(usize, usize)>,
    pub csv: PathBuf,
    pub annotated: PathBuf,
}

fn extract(img: &GrayImage, config: &PipelineConfig) -> Result<Vec<Feature>, CliError> {
    let f = &config.features;
    let pyramid = build_pyramid(img, f.pyramid_levels, f.pyramid_scale).map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(detect_and_describe(&pyramid, f, &SamplingPattern::builtin()))
}

/// Columns `x,y,octave,score,angle,descriptor_hex`.
pub fn features_csv(features: &[Feature]) -> String {
    let mut s = String::from("x,y,octave,score,angle,descriptor_hex\n");
    for f in features {
        let k = &f.keypoint;
        writeln!(s, "{},{},{},{},{},{}", k.x, k.y, k.octave, k.score, k.angle, f.descriptor.to_hex())
            .expect("writing to String");
    }
    s
}

/// Draws a square of the keypoint's scale around each feature plus a tick
/// along its orientation, in whichever of black or white contrasts more.
pub fn annotate(img: &GrayImage, features: &[Feature], pyramid_scale: f64) -> GrayImage {
    let mut out = img.clone();
    let (w, h) = (img.width() as isize, img.height() as isize);
    let mut mark = |x: isize, y: isize| {
        if x >= 0 && y >= 0 && x < w && y < h {
            let v = if img.get(x as usize, y as usize) < 128 { 255 } else { 0 };
            out.set(x as usize, y as usize, v);
        }
    };
    for f in features {
        let k = &f.keypoint;
        let r = (3.0 * pyramid_scale.powi(k.octave as i32)).round() as isize;
        let (cx, cy) = (k.x.round() as isize, k.y.round() as isize);
        for d in -r..=r {
            mark(cx + d, cy - r);
            mark(cx + d, cy + r);
            mark(cx - r, cy + d);
            mark(cx + r, cy + d);
        }
        for step in 0..=r {
            let s = step as f64;
            mark(cx + (s * k.angle.cos()).round() as isize, cy + (s * k.angle.sin()).round() as isize);
        }
    }
    out
}

/// Detects features on one image (equalized per the configured policy) and
/// writes `features.csv` and `features.pgm` into `--out`.
pub fn cmd_features(args: &FeaturesArgs) -> Result<FeaturesOutcome, CliError> {
    if !args.image.exists() {
        return Err(CliError::NotFound(args.image.clone()));
    }
    let mut config = match &args.config {
        Some(path) => {
            if !path.exists() {
                return Err(CliError::NotFound(path.clone()));
            }
            let text = fs::read_to_string(path).map_err(CliError::io(path))?;
            PipelineConfig::parse(&text).map_err(|source| CliError::Config {
                origin: path.display().to_string(),
                source,
            })?
        }
        None => PipelineConfig::default(),
    };
    if let Some(h) = &args.heq {
        config.heq.mode = parse_heq(h)?;
    }
    let raw = load_gray(&args.image)?;
    let (img, heq_applied) = config.heq.apply(&raw);
    let features = extract(&img, &config)?;

    let before_after = if args.before_after {
        Some((extract(&raw, &config)?.len(), extract(&equalize(&raw), &config)?.len()))
    } else {
        None
    };

    fs::create_dir_all(&args.out).map_err(CliError::io(&args.out))?;
    let csv = args.out.join("features.csv");
    let annotated = args.out.join("features.pgm");
    fs::write(&csv, features_csv(&features)).map_err(CliError::io(&csv))?;
    let marked = annotate(&img, &features, config.features.pyramid_scale);
    fs::write(&annotated, save_pgm(&marked)).map_err(CliError::io(&annotated))?;
    Ok(FeaturesOutcome {
        n_features: features.len(),
        heq_applied,
        before_after,
        csv,
        annotated,
    })
}
