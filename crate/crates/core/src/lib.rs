//! Rolling-shutter emulation for detection datasets.
//!
//! A capture is a burst of `F` global-shutter frames rendered at
//! `F x` the output frame rate. The global-shutter image is the first frame
//! of the burst; the rolling-shutter image takes each sensor row from the
//! burst frame that was current when that row was read out.
//!
//! Modules:
//!
//! - [`image`]: raster frames, bursts, PNG/PPM and sequence directories.
//! - [`shutter`]: readout model and the row-by-row composition.
//! - [`scene`]: deterministic 2D scenes with analytic per-frame boxes.
//! - [`annotations`]: tracks, the RS ground-truth transform, dataset stats.
//! - [`formats`]: YOLO and COCO files.
//! - [`metrics`]: IoU, matching, AP and the evaluation report.

pub mod annotations;
pub mod bbox;
pub mod error;
pub mod formats;
pub mod image;
pub mod metrics;
pub mod scene;
pub mod shutter;

pub use annotations::{
    dataset_stats, transform_gt_gs, transform_track_to_rs, DatasetStats, DetectionSet, FragmentPolicy,
    GroundTruthSet, ImageInfo, Track,
};
pub use bbox::{BBox, Detection};
pub use error::{Error, Result};
pub use image::{images_equal, load_image, save_image, FrameSequence, ImageBuffer, Rgb};
pub use metrics::{compare_reports, evaluate, iou, EvalReport, MetricConfig};
pub use scene::{GeneratorConfig, Scene};
pub use shutter::{capture_pair, compose_gs, compose_rs, CapturePair, ReadoutModel, ScanDirection};
