//! Run configuration: one JSON document per experiment.

use std::path::{Path, PathBuf};

use rollscan_core::annotations::Category;
use rollscan_core::image::read_json;
use rollscan_core::metrics::MetricConfig;
use rollscan_core::scene::{random_scene, GeneratorConfig, Scene};
use rollscan_core::{FragmentPolicy, ReadoutModel};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Inline scene, used for every capture.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<Scene>,
    /// Scene JSON file, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_file: Option<PathBuf>,
    /// Random crowd generator; each capture gets its own scene.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorConfig>,
    #[serde(default = "ReadoutModel::full_hd_one_frame_per_row")]
    pub readout: ReadoutModel,
    #[serde(default = "one")]
    pub captures: usize,
    #[serde(default)]
    pub metric: MetricConfig,
    /// Mandatory for generator runs (here, on the command line or in the
    /// generator block).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_speed_multipliers")]
    pub speed_multipliers: Vec<f64>,
    #[serde(default)]
    pub fragment_policy: FragmentPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// Write GS/RS images in `roll` and `sweep`.
    #[serde(default = "yes")]
    pub write_images: bool,
    /// Train / val / test fractions for the split manifest.
    #[serde(default = "default_split")]
    pub split: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

fn default_speed_multipliers() -> Vec<f64> {
    vec![1.0, 10.0]
}

fn default_split() -> [f64; 3] {
    [0.8, 0.1, 0.1]
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            scene: None,
            scene_file: None,
            generator: None,
            readout: ReadoutModel::full_hd_one_frame_per_row(),
            captures: 1,
            metric: MetricConfig::default(),
            seed: None,
            speed_multipliers: default_speed_multipliers(),
            fragment_policy: FragmentPolicy::default(),
            workers: None,
            write_images: true,
            split: default_split(),
            output_dir: None,
        }
    }
}

/// GT file formats to emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum OutputFormat {
    Yolo,
    Coco,
    #[default]
    Both,
}

impl OutputFormat {
    pub fn yolo(self) -> bool {
        matches!(self, OutputFormat::Yolo | OutputFormat::Both)
    }

    pub fn coco(self) -> bool {
        matches!(self, OutputFormat::Coco | OutputFormat::Both)
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub format: OutputFormat,
}

/// Where the scenes of a run come from.
#[derive(Debug, Clone)]
pub enum SceneSource {
    Fixed(Scene),
    Generated { generator: GeneratorConfig, seed: u64 },
}

impl SceneSource {
    /// Scene of capture `index`. `speed_multiplier` replaces the generator's
    /// own multiplier when given.
    pub fn scene(&self, index: usize, speed_multiplier: Option<f64>) -> CliResult<Scene> {
        match self {
            SceneSource::Fixed(scene) => Ok(scene.clone()),
            SceneSource::Generated { generator, seed } => {
                let g = match speed_multiplier {
                    Some(m) => generator.with_speed_multiplier(m),
                    None => generator.clone(),
                };
                Ok(random_scene(&g, capture_seed(*seed, index)).map_err(CliError::config)?)
            }
        }
    }
}

/// Per-capture generator seed.
pub fn capture_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add(index as u64)
}

/// A configuration that passed validation, with overrides applied.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub config: RunConfig,
    pub out: PathBuf,
    pub workers: usize,
    pub format: OutputFormat,
    pub source: Option<SceneSource>,
    pub categories: Vec<Category>,
}

impl ResolvedConfig {
    pub fn source(&self) -> CliResult<&SceneSource> {
        self.source
            .as_ref()
            .ok_or_else(|| CliError::Config("one of `scene`, `scene_file` or `generator` is required".into()))
    }

    /// The seed used for splits and generated scenes; 0 for fixed scenes.
    pub fn seed(&self) -> u64 {
        self.config.seed.unwrap_or(0)
    }

    /// Config as recorded in output trees: resolved seed, no output path.
    pub fn echo(&self) -> RunConfig {
        RunConfig {
            output_dir: None,
            workers: None,
            ..self.config.clone()
        }
    }
}

pub fn load_config(path: &Path) -> CliResult<RunConfig> {
    read_json(path).map_err(|e| match e {
        rollscan_core::Error::Io { .. } => CliError::from(e),
        other => CliError::config(other),
    })
}

/// Applies overrides and checks everything a command could trip over later.
/// `config_dir` anchors relative paths inside the file.
pub fn resolve(mut config: RunConfig, config_dir: Option<&Path>, overrides: &Overrides) -> CliResult<ResolvedConfig> {
    if config.schema_version != SCHEMA_VERSION {
        return Err(CliError::Config(format!(
            "schema_version {} is not supported (expected {SCHEMA_VERSION})",
            config.schema_version
        )));
    }
    if let Some(seed) = overrides.seed {
        config.seed = Some(seed);
    }
    if let Some(w) = overrides.workers {
        config.workers = Some(w);
    }
    let workers = match config.workers {
        Some(0) => return Err(CliError::Config("workers must be at least 1".into())),
        Some(w) => w,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let out = overrides
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .ok_or_else(|| CliError::Config("no output directory: pass --out or set `output_dir`".into()))?;

    config.readout.validate().map_err(CliError::config)?;
    config.metric.validate().map_err(CliError::config)?;
    if config.captures == 0 {
        return Err(CliError::Config("captures must be at least 1".into()));
    }
    if config.speed_multipliers.is_empty() {
        return Err(CliError::Config("speed_multipliers must not be empty".into()));
    }
    if let Some(m) = config.speed_multipliers.iter().find(|m| !(m.is_finite() && **m >= 0.0)) {
        return Err(CliError::Config(format!("speed multiplier {m} must be finite and >= 0")));
    }
    let sum: f64 = config.split.iter().sum();
    if config.split.iter().any(|f| !(f.is_finite() && *f >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(CliError::Config(format!("split {:?} must be non-negative and sum to 1", config.split)));
    }

    let sources = [config.scene.is_some(), config.scene_file.is_some(), config.generator.is_some()];
    let source = match sources.iter().filter(|s| **s).count() {
        0 => None,
        1 => Some(build_source(&mut config, config_dir)?),
        _ => {
            return Err(CliError::Config(
                "`scene`, `scene_file` and `generator` are mutually exclusive".into(),
            ))
        }
    };

    Ok(ResolvedConfig {
        config,
        out,
        workers,
        format: overrides.format,
        source,
        categories: rollscan_core::annotations::default_categories(),
    })
}

fn build_source(config: &mut RunConfig, config_dir: Option<&Path>) -> CliResult<SceneSource> {
    let rows = config.readout.sensor_rows;
    if let Some(generator) = &mut config.generator {
        generator.validate().map_err(CliError::config)?;
        if generator.canvas.height != rows {
            return Err(CliError::Config(format!(
                "generator canvas height {} differs from readout sensor_rows {rows}",
                generator.canvas.height
            )));
        }
        let seed = config.seed.or(generator.seed).ok_or_else(|| {
            CliError::Config("generator runs need a seed (config `seed`, generator `seed` or --seed)".into())
        })?;
        config.seed = Some(seed);
        return Ok(SceneSource::Generated {
            generator: generator.clone(),
            seed,
        });
    }
    let scene = match (&config.scene, &config.scene_file) {
        (Some(scene), _) => scene.clone(),
        (None, Some(file)) => {
            let path = match config_dir {
                Some(dir) if file.is_relative() => dir.join(file),
                _ => file.clone(),
            };
            if !path.is_file() {
                return Err(CliError::Config(format!("scene_file {path:?} does not exist")));
            }
            read_json(&path).map_err(CliError::config)?
        }
        (None, None) => unreachable!("caller checked that a source exists"),
    };
    scene.validate().map_err(CliError::config)?;
    scene.check_sensor(&config.readout).map_err(CliError::config)?;
    Ok(SceneSource::Fixed(scene))
}
