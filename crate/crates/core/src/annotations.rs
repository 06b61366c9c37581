//! Ground-truth tracks, the rolling-shutter annotation transform and the
//! per-image annotation containers.
//!
//! A [`Track`] holds one actor's box in every burst frame. The RS transform
//! walks the sensor rows in readout order, asks whether the actor's box in
//! that row's source frame covers the row, and boxes up each contiguous run
//! of covered rows.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bbox::{BBox, Detection};
use crate::error::{Error, Result};
use crate::scene::covered;
use crate::shutter::ReadoutModel;

/// Per-burst-frame ground truth for one actor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub actor_id: u32,
    pub boxes: Vec<BBox>,
}

/// How fragments of one actor's RS footprint are reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FragmentPolicy {
    /// One box per maximal run of occupied rows.
    #[default]
    PerRun,
    /// A single box enclosing every fragment.
    Enclose,
}

/// RS-space ground truth for one track.
///
/// Row `r` is occupied when the box of frame `row_to_frame(r)` would paint a
/// pixel in it: the row center `r + 0.5` lies in `[y_min, y_max)` and some
/// column center on the canvas lies in `[x_min, x_max)`. Each run of occupied
/// rows becomes one box whose x-extent is the union of the per-row extents.
/// A run end keeps the sub-pixel edge of the source box when that edge is
/// what stopped the run, so a motionless track reproduces its
/// [`transform_gt_gs`] box exactly. Results are clamped to the image;
/// the list is empty when the readout never catches the actor.
pub fn transform_track_to_rs(
    track: &Track,
    model: &ReadoutModel,
    image: (usize, usize),
    policy: FragmentPolicy,
) -> Result<Vec<BBox>> {
    model.validate()?;
    let (width, height) = image;
    if height != model.sensor_rows {
        return Err(Error::DimensionMismatch {
            expected: format!("image height {} (sensor_rows)", model.sensor_rows),
            found: format!("image height {height}"),
        });
    }
    if track.boxes.len() < model.frames_per_capture {
        return Err(Error::TrackLength {
            actor_id: track.actor_id,
            len: track.boxes.len(),
            required: model.frames_per_capture,
        });
    }
    // occupied[r] = box of the frame that supplied row r, if the actor is in that row
    let mut occupied: Vec<Option<&BBox>> = vec![None; height];
    for r in model.scan_order() {
        let b = &track.boxes[model.row_to_frame(r)?];
        if paints_row(b, r, width, height) {
            occupied[r] = Some(b);
        }
    }

    let mut fragments = Vec::new();
    let mut r = 0;
    while r < height {
        let Some(first) = occupied[r] else {
            r += 1;
            continue;
        };
        let start = r;
        let (mut x_min, mut x_max) = (first.x_min, first.x_max);
        while r + 1 < height {
            match occupied[r + 1] {
                Some(b) => {
                    x_min = x_min.min(b.x_min);
                    x_max = x_max.max(b.x_max);
                    r += 1;
                }
                None => break,
            }
        }
        let end = r;
        let last = occupied[end].expect("run ends on an occupied row");
        let (top, bottom) = (start as f64, end as f64);
        // a run cut short by the readout rather than by the box ends on the row boundary
        let y_min = if first.y_min > top - 0.5 { first.y_min } else { top };
        let y_max = if last.y_max <= bottom + 1.5 { last.y_max } else { bottom + 1.0 };
        let raw = BBox {
            x_min,
            y_min,
            x_max,
            y_max,
            class_id: first.class_id,
        };
        if let Some(b) = raw.clamp_to(width, height) {
            fragments.push(b);
        }
        r += 1;
    }

    Ok(match policy {
        FragmentPolicy::PerRun => fragments,
        FragmentPolicy::Enclose => fragments.into_iter().reduce(|a, b| a.union(&b)).into_iter().collect(),
    })
}

fn paints_row(b: &BBox, r: usize, width: usize, height: usize) -> bool {
    covered(b.y_min, b.y_max, height).contains(&r) && !covered(b.x_min, b.x_max, width).is_empty()
}

/// GS-space ground truth: each track's frame-0 box, clamped to the image.
/// Tracks whose frame-0 box paints no pixel contribute nothing.
pub fn transform_gt_gs(tracks: &[Track], image: (usize, usize)) -> Result<Vec<BBox>> {
    let mut out = Vec::with_capacity(tracks.len());
    for t in tracks {
        let first = t.boxes.first().ok_or(Error::TrackLength {
            actor_id: t.actor_id,
            len: 0,
            required: 1,
        })?;
        if !covered(first.y_min, first.y_max, image.1).is_empty() && !covered(first.x_min, first.x_max, image.0).is_empty() {
            out.extend(first.clamp_to(image.0, image.1));
        }
    }
    Ok(out)
}

/// RS transform applied to every track of a capture.
pub fn transform_tracks_to_rs(
    tracks: &[Track],
    model: &ReadoutModel,
    image: (usize, usize),
    policy: FragmentPolicy,
) -> Result<Vec<BBox>> {
    let mut out = Vec::new();
    for t in tracks {
        out.extend(transform_track_to_rs(t, model, image, policy)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageInfo {
    pub id: u64,
    pub file_name: String,
    pub width: usize,
    pub height: usize,
}

impl ImageInfo {
    /// File name without its extension; YOLO label files are `<stem>.txt`.
    pub fn stem(&self) -> &str {
        match self.file_name.rfind('.') {
            Some(i) if i > 0 => &self.file_name[..i],
            _ => &self.file_name,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub id: u32,
    pub name: String,
}

pub fn default_categories() -> Vec<Category> {
    vec![Category {
        id: 0,
        name: "pedestrian".into(),
    }]
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedImage {
    pub info: ImageInfo,
    pub boxes: Vec<BBox>,
}

/// Ground-truth boxes keyed by image id.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthSet {
    pub images: BTreeMap<u64, AnnotatedImage>,
    pub categories: Vec<Category>,
}

impl Default for GroundTruthSet {
    fn default() -> Self {
        Self {
            images: BTreeMap::new(),
            categories: default_categories(),
        }
    }
}

impl GroundTruthSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, info: ImageInfo, boxes: Vec<BBox>) {
        self.images.insert(info.id, AnnotatedImage { info, boxes });
    }

    pub fn boxes(&self, image_id: u64) -> &[BBox] {
        self.images.get(&image_id).map(|a| a.boxes.as_slice()).unwrap_or(&[])
    }

    pub fn infos(&self) -> impl Iterator<Item = &ImageInfo> {
        self.images.values().map(|a| &a.info)
    }

    pub fn total_boxes(&self) -> usize {
        self.images.values().map(|a| a.boxes.len()).sum()
    }

    /// Replays the ground truth as detections with the given confidence.
    pub fn as_detections(&self, confidence: f64) -> DetectionSet {
        let detections = self
            .images
            .iter()
            .flat_map(|(&id, a)| {
                a.boxes.iter().map(move |&bbox| Detection {
                    image_id: id,
                    bbox,
                    confidence,
                })
            })
            .collect();
        DetectionSet { detections }
    }
}

/// Predicted boxes, in input order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectionSet {
    pub detections: Vec<Detection>,
}

impl DetectionSet {
    pub fn new(detections: Vec<Detection>) -> Self {
        Self { detections }
    }

    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }

    /// Image ids referenced by detections but absent from `gts`.
    pub fn unknown_images(&self, gts: &GroundTruthSet) -> Vec<u64> {
        let mut ids: Vec<u64> = self
            .detections
            .iter()
            .map(|d| d.image_id)
            .filter(|id| !gts.images.contains_key(id))
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

/// Box statistics of a ground-truth set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub images: usize,
    pub annotated_images: usize,
    pub total_boxes: usize,
    /// Mean box area in px²; `None` without boxes.
    pub mean_box_area: Option<f64>,
    /// Mean count over images holding at least one box; `None` without boxes.
    pub mean_boxes_per_annotated_image: Option<f64>,
}

pub fn dataset_stats(gts: &GroundTruthSet) -> DatasetStats {
    let total_boxes = gts.total_boxes();
    let annotated_images = gts.images.values().filter(|a| !a.boxes.is_empty()).count();
    let area_sum: f64 = gts.images.values().flat_map(|a| a.boxes.iter()).map(BBox::area).sum();
    let (mean_box_area, mean_boxes_per_annotated_image) = if total_boxes == 0 {
        (None, None)
    } else {
        (
            Some(area_sum / total_boxes as f64),
            Some(total_boxes as f64 / annotated_images as f64),
        )
    };
    DatasetStats {
        images: gts.images.len(),
        annotated_images,
        total_boxes,
        mean_box_area,
        mean_boxes_per_annotated_image,
    }
}
