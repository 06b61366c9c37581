//! On-disk layout shared by the commands.
//!
//! ```text
//! <root>/images/{gs,rs}/capture_0000.png
//! <root>/labels/{gs,rs}/capture_0000.txt   YOLO, plus classes.txt and images.json
//! <root>/annotations/{gs,rs}.json          COCO
//! <root>/splits.json
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rollscan_core::formats::{read_coco, read_detections, read_yolo, read_yolo_detections, write_coco, write_yolo};
use rollscan_core::image::{read_json, write_json};
use rollscan_core::{DetectionSet, GroundTruthSet, ImageInfo};
use serde::{Deserialize, Serialize};

use crate::config::OutputFormat;
use crate::error::{CliError, CliResult};

pub const IMAGE_INDEX: &str = "images.json";
pub const CLASSES: &str = "classes.txt";

pub fn capture_name(index: usize) -> String {
    format!("capture_{index:04}")
}

pub fn image_info(index: usize, name: &str, width: usize, height: usize) -> ImageInfo {
    ImageInfo {
        id: index as u64,
        file_name: format!("{name}.png"),
        width,
        height,
    }
}

pub fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

pub fn images_dir(root: &Path, set: &str) -> PathBuf {
    root.join("images").join(set)
}

pub fn labels_dir(root: &Path, set: &str) -> PathBuf {
    root.join("labels").join(set)
}

pub fn coco_path(root: &Path, set: &str) -> PathBuf {
    root.join("annotations").join(format!("{set}.json"))
}

/// Writes `gts` as set `set` ("gs" or "rs") in the requested formats.
pub fn write_ground_truth(root: &Path, set: &str, gts: &GroundTruthSet, format: OutputFormat) -> CliResult<()> {
    if format.yolo() {
        let dir = labels_dir(root, set);
        write_yolo(&dir, gts)?;
        let mut classes = String::new();
        for c in &gts.categories {
            classes.push_str(&c.name);
            classes.push('\n');
        }
        let path = dir.join(CLASSES);
        fs::write(&path, classes).map_err(|e| CliError::io(&path, e))?;
        write_json(dir.join(IMAGE_INDEX), &gts.infos().collect::<Vec<_>>())?;
    }
    if format.coco() {
        let path = coco_path(root, set);
        create_dir(path.parent().expect("annotations dir"))?;
        write_coco(&path, gts)?;
    }
    Ok(())
}

/// A COCO file, or a YOLO label directory carrying an `images.json` index.
pub fn read_ground_truth(path: &Path) -> CliResult<GroundTruthSet> {
    if path.is_dir() {
        let index: Vec<ImageInfo> = read_json(path.join(IMAGE_INDEX))?;
        Ok(read_yolo(path, &index)?)
    } else if path.is_file() {
        Ok(read_coco(path)?)
    } else {
        Err(CliError::io(path, std::io::Error::from(std::io::ErrorKind::NotFound)))
    }
}

/// A COCO result list, or a YOLO detection directory matched against the
/// images of `gts`.
pub fn read_detection_input(path: &Path, gts: &GroundTruthSet) -> CliResult<DetectionSet> {
    if path.is_dir() {
        let index: Vec<ImageInfo> = gts.infos().cloned().collect();
        Ok(read_yolo_detections(path, &index)?)
    } else if path.is_file() {
        Ok(read_detections(path)?)
    } else {
        Err(CliError::io(path, std::io::Error::from(std::io::ErrorKind::NotFound)))
    }
}

/// Train / val / test manifest. Recorded for external training runs; nothing
/// here reads it back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub fractions: [f64; 3],
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

pub fn split_manifest(names: &[String], seed: u64, fractions: [f64; 3]) -> SplitManifest {
    let mut shuffled = names.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = shuffled.len();
    let n_train = ((n as f64 * fractions[0]).round() as usize).min(n);
    let n_val = ((n as f64 * fractions[1]).round() as usize).min(n - n_train);
    let mut test = shuffled.split_off(n_train + n_val);
    let mut val = shuffled.split_off(n_train);
    let mut train = shuffled;
    train.sort();
    val.sort();
    test.sort();
    SplitManifest {
        seed,
        fractions,
        train,
        val,
        test,
    }
}

pub fn write_splits(root: &Path, names: &[String], seed: u64, fractions: [f64; 3]) -> CliResult<()> {
    Ok(write_json(root.join("splits.json"), &split_manifest(names, seed, fractions))?)
}
