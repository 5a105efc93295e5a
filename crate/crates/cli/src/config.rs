//! Run configuration: the pipeline keys plus where the data lives.

use std::fmt::Write as _;
use std::path::PathBuf;

use stereo_vo::config::{ConfigError, PipelineConfig};

use crate::dataset::Layout;

/// Keys handled here rather than by [`PipelineConfig`].
pub const RUN_KEYS: &[&str] = &["dataset", "layout", "out", "calib"];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    pub dataset: Option<PathBuf>,
    pub layout: Layout,
    pub out: PathBuf,
    pub calib: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            pipeline: PipelineConfig::default(),
            dataset: None,
            layout: Layout::Kitti,
            out: PathBuf::from("out"),
            calib: None,
        }
    }
}

impl RunConfig {
    /// Parses `key = value` lines over the defaults. Line numbers in errors
    /// refer to `text`.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut config = Self::default();
        // Run keys are blanked out so the pipeline parser sees the same line numbers.
        let mut pipeline_text = String::with_capacity(text.len());
        for (i, raw) in text.lines().enumerate() {
            let content = raw.split('#').next().unwrap_or("").trim();
            let run_key = content
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .filter(|(k, _)| RUN_KEYS.contains(k));
            match run_key {
                Some((key, value)) => {
                    config.set_run_key(i + 1, key, value)?;
                    pipeline_text.push('\n');
                }
                None => {
                    pipeline_text.push_str(raw);
                    pipeline_text.push('\n');
                }
            }
        }
        config.pipeline = PipelineConfig::parse(&pipeline_text)?;
        Ok(config)
    }

    fn set_run_key(&mut self, line: usize, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "dataset" => self.dataset = Some(PathBuf::from(value)),
            "layout" => {
                self.layout = value.parse().map_err(|reason| ConfigError::InvalidValue {
                    line,
                    key: key.into(),
                    value: value.into(),
                    reason,
                })?
            }
            "out" => self.out = PathBuf::from(value),
            "calib" => self.calib = Some(PathBuf::from(value)),
            _ => unreachable!("not a run key: {key}"),
        }
        Ok(())
    }

    /// Every key, run keys first; feeding the text back reproduces the config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if let Some(d) = &self.dataset {
            writeln!(s, "dataset = {}", d.display()).expect("writing to String");
        }
        writeln!(s, "layout = {}", self.layout).expect("writing to String");
        writeln!(s, "out = {}", self.out.display()).expect("writing to String");
        if let Some(c) = &self.calib {
            writeln!(s, "calib = {}", c.display()).expect("writing to String");
        }
        s.push_str(&self.pipeline.to_text());
        s
    }
}
