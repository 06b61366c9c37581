#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use rollscan::{resolve, OutputFormat, Overrides, ResolvedConfig, RunConfig};
use rollscan_core::scene::{Canvas, GeneratorConfig, SizeRange};
use rollscan_core::ReadoutModel;

/// Every file under `root` as (relative path, bytes), sorted by path.
pub fn tree_bytes(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(PathBuf, Vec<u8>)>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.push((path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out.sort();
    out
}

/// Small crowd generator on a `width` x `height` canvas.
pub fn small_generator(width: usize, height: usize, speed_multiplier: f64) -> GeneratorConfig {
    GeneratorConfig {
        actor_count_range: [1, 4],
        size_range_px: SizeRange {
            width: [4, 10],
            height: [8, 20],
        },
        speed_range_mps: [0.0, 2.0],
        speed_multiplier,
        px_per_meter: 5.0,
        canvas: Canvas { width, height },
        ..GeneratorConfig::default()
    }
}

pub fn generator_config(generator: GeneratorConfig, captures: usize, seed: u64) -> RunConfig {
    RunConfig {
        readout: ReadoutModel::new(generator.canvas.height, generator.canvas.height, 30.0).unwrap(),
        generator: Some(generator),
        captures,
        seed: Some(seed),
        workers: Some(2),
        ..RunConfig::default()
    }
}

pub fn resolved(config: RunConfig, out: &Path) -> ResolvedConfig {
    let overrides = Overrides {
        out: Some(out.to_path_buf()),
        format: OutputFormat::Both,
        ..Overrides::default()
    };
    resolve(config, None, &overrides).unwrap()
}
