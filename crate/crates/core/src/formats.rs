//! YOLO and COCO annotation files.
//!
//! YOLO: one `<stem>.txt` per image, lines `class cx cy w h` normalized to
//! `[0, 1]` with 6 decimals; detection files append a confidence column.
//! COCO: one JSON with `images`, `annotations` (`bbox` = `[x, y, w, h]` px)
//! and `categories`; detection results are a JSON list of
//! `{image_id, category_id, bbox, score}`.
//!
//! Category ids are written as-is: YOLO class `k` is COCO `category_id` `k`.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::annotations::{Category, DetectionSet, GroundTruthSet, ImageInfo};
use crate::bbox::{BBox, Detection};
use crate::error::{Error, Result};
use crate::image::{read_json, write_json};

pub const YOLO_DECIMALS: usize = 6;

fn yolo_line(b: &BBox, w: usize, h: usize, confidence: Option<f64>) -> String {
    let (w, h) = (w as f64, h as f64);
    let (cx, cy) = b.center();
    let mut line = format!(
        "{} {:.6} {:.6} {:.6} {:.6}",
        b.class_id,
        cx / w,
        cy / h,
        b.width() / w,
        b.height() / h
    );
    if let Some(c) = confidence {
        let _ = write!(line, " {c:.6}");
    }
    line
}

fn write_yolo_files<'a>(
    dir: &Path,
    images: impl Iterator<Item = (&'a ImageInfo, Vec<(BBox, Option<f64>)>)>,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (info, boxes) in images {
        let mut text = String::new();
        for (b, conf) in &boxes {
            text.push_str(&yolo_line(b, info.width, info.height, *conf));
            text.push('\n');
        }
        let path = dir.join(format!("{}.txt", info.stem()));
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Writes one label file per image (empty for images without boxes).
pub fn write_yolo(dir: impl AsRef<Path>, gts: &GroundTruthSet) -> Result<()> {
    write_yolo_files(
        dir.as_ref(),
        gts.images
            .values()
            .map(|a| (&a.info, a.boxes.iter().map(|b| (*b, None)).collect())),
    )
}

/// Writes detections in YOLO form; every referenced image must be in `index`.
pub fn write_yolo_detections(dir: impl AsRef<Path>, dets: &DetectionSet, index: &[ImageInfo]) -> Result<()> {
    let dir = dir.as_ref();
    let mut grouped: BTreeMap<u64, Vec<(BBox, Option<f64>)>> = index.iter().map(|i| (i.id, Vec::new())).collect();
    for d in &dets.detections {
        grouped
            .get_mut(&d.image_id)
            .ok_or_else(|| Error::UnknownImage {
                path: dir.to_path_buf(),
                reference: d.image_id.to_string(),
            })?
            .push((d.bbox, Some(d.confidence)));
    }
    let by_id: HashMap<u64, &ImageInfo> = index.iter().map(|i| (i.id, i)).collect();
    write_yolo_files(dir, grouped.into_iter().map(|(id, boxes)| (by_id[&id], boxes)))
}

struct YoloRecord {
    bbox: BBox,
    confidence: Option<f64>,
}

fn parse_yolo_line(path: &Path, line_no: usize, line: &str, info: &ImageInfo, with_confidence: bool) -> Result<YoloRecord> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    let expected = if with_confidence { 6 } else { 5 };
    if fields.len() != expected {
        return Err(Error::MalformedLine {
            path: path.to_path_buf(),
            line: line_no,
            reason: format!("expected {expected} fields, found {}", fields.len()),
        });
    }
    let field_err = |field: &str, reason: String| Error::MalformedField {
        path: path.to_path_buf(),
        location: format!("line {line_no}"),
        field: field.to_string(),
        reason,
    };
    let class_id: u32 = fields[0]
        .parse()
        .map_err(|e| field_err("class", format!("`{}`: {e}", fields[0])))?;
    let names = ["cx", "cy", "w", "h", "confidence"];
    let mut values = [0.0f64; 5];
    for (i, raw) in fields[1..].iter().enumerate() {
        let v: f64 = raw.parse().map_err(|e| field_err(names[i], format!("`{raw}`: {e}")))?;
        if !v.is_finite() || !(0.0..=1.0).contains(&v) {
            return Err(Error::CoordinateOutOfRange {
                path: path.to_path_buf(),
                line: line_no,
                field: names[i].to_string(),
                value: v,
            });
        }
        values[i] = v;
    }
    let (w, h) = (info.width as f64, info.height as f64);
    let [cx, cy, bw, bh, conf] = values;
    let (half_w, half_h) = (bw * w / 2.0, bh * h / 2.0);
    let bbox = BBox {
        x_min: cx * w - half_w,
        y_min: cy * h - half_h,
        x_max: cx * w + half_w,
        y_max: cy * h + half_h,
        class_id,
    };
    Ok(YoloRecord {
        bbox,
        confidence: with_confidence.then_some(conf),
    })
}

fn read_yolo_files(dir: &Path, index: &[ImageInfo], with_confidence: bool) -> Result<Vec<(ImageInfo, Vec<YoloRecord>)>> {
    let by_stem: HashMap<&str, &ImageInfo> = index.iter().map(|i| (i.stem(), i)).collect();
    let mut found: BTreeMap<u64, Vec<YoloRecord>> = BTreeMap::new();
    let mut entries: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(dir, e))?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .filter(|p| p.file_name().is_some_and(|n| n != "classes.txt"))
        .collect();
    entries.sort();
    for path in entries {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let info = by_stem.get(stem).ok_or_else(|| Error::UnknownImage {
            path: path.clone(),
            reference: stem.to_string(),
        })?;
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            records.push(parse_yolo_line(&path, i + 1, line, info, with_confidence)?);
        }
        found.insert(info.id, records);
    }
    Ok(index
        .iter()
        .map(|info| (info.clone(), found.remove(&info.id).unwrap_or_default()))
        .collect())
}

/// Reads a YOLO label directory. Label files are matched to `index` by file
/// stem; images without a label file get no boxes.
pub fn read_yolo(dir: impl AsRef<Path>, index: &[ImageInfo]) -> Result<GroundTruthSet> {
    let mut gts = GroundTruthSet::new();
    for (info, records) in read_yolo_files(dir.as_ref(), index, false)? {
        gts.insert(info, records.into_iter().map(|r| r.bbox).collect());
    }
    Ok(gts)
}

pub fn read_yolo_detections(dir: impl AsRef<Path>, index: &[ImageInfo]) -> Result<DetectionSet> {
    let mut detections = Vec::new();
    for (info, records) in read_yolo_files(dir.as_ref(), index, true)? {
        detections.extend(records.into_iter().map(|r| Detection {
            image_id: info.id,
            bbox: r.bbox,
            confidence: r.confidence.unwrap_or(1.0),
        }));
    }
    Ok(DetectionSet::new(detections))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoImage {
    pub id: u64,
    pub file_name: String,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoAnnotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u32,
    pub bbox: [f64; 4],
    pub area: f64,
    #[serde(default)]
    pub iscrowd: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoCategory {
    pub id: u32,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoDataset {
    pub images: Vec<CocoImage>,
    pub annotations: Vec<CocoAnnotation>,
    pub categories: Vec<CocoCategory>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoResult {
    pub image_id: u64,
    pub category_id: u32,
    pub bbox: [f64; 4],
    pub score: f64,
}

fn xywh(b: &BBox) -> [f64; 4] {
    [b.x_min, b.y_min, b.width(), b.height()]
}

pub fn to_coco(gts: &GroundTruthSet) -> CocoDataset {
    let mut annotations = Vec::new();
    let mut next_id = 1;
    for a in gts.images.values() {
        for b in &a.boxes {
            annotations.push(CocoAnnotation {
                id: next_id,
                image_id: a.info.id,
                category_id: b.class_id,
                bbox: xywh(b),
                area: b.area(),
                iscrowd: 0,
            });
            next_id += 1;
        }
    }
    CocoDataset {
        images: gts
            .infos()
            .map(|i| CocoImage {
                id: i.id,
                file_name: i.file_name.clone(),
                width: i.width,
                height: i.height,
            })
            .collect(),
        annotations,
        categories: gts
            .categories
            .iter()
            .map(|c| CocoCategory {
                id: c.id,
                name: c.name.clone(),
            })
            .collect(),
    }
}

fn bbox_from_xywh(path: &Path, location: String, raw: [f64; 4], category_id: u32) -> Result<BBox> {
    let [x, y, w, h] = raw;
    for (name, v) in [("w", w), ("h", h)] {
        if v < 0.0 {
            return Err(Error::MalformedField {
                path: path.to_path_buf(),
                location,
                field: format!("bbox.{name}"),
                reason: format!("negative size {v}"),
            });
        }
    }
    Ok(BBox {
        x_min: x,
        y_min: y,
        x_max: x + w,
        y_max: y + h,
        class_id: category_id,
    })
}

pub fn from_coco(path: &Path, coco: &CocoDataset) -> Result<GroundTruthSet> {
    let mut gts = GroundTruthSet {
        images: BTreeMap::new(),
        categories: coco
            .categories
            .iter()
            .map(|c| Category {
                id: c.id,
                name: c.name.clone(),
            })
            .collect(),
    };
    for (i, img) in coco.images.iter().enumerate() {
        if img.width == 0 || img.height == 0 {
            return Err(Error::MalformedField {
                path: path.to_path_buf(),
                location: format!("images[{i}]"),
                field: "width/height".into(),
                reason: format!("{}x{}", img.width, img.height),
            });
        }
        gts.insert(
            ImageInfo {
                id: img.id,
                file_name: img.file_name.clone(),
                width: img.width,
                height: img.height,
            },
            Vec::new(),
        );
    }
    for (i, ann) in coco.annotations.iter().enumerate() {
        let b = bbox_from_xywh(path, format!("annotations[{i}]"), ann.bbox, ann.category_id)?;
        let entry = gts.images.get_mut(&ann.image_id).ok_or_else(|| Error::UnknownImage {
            path: path.to_path_buf(),
            reference: ann.image_id.to_string(),
        })?;
        entry.boxes.push(b);
    }
    Ok(gts)
}

pub fn write_coco(path: impl AsRef<Path>, gts: &GroundTruthSet) -> Result<()> {
    write_json(path, &to_coco(gts))
}

pub fn read_coco(path: impl AsRef<Path>) -> Result<GroundTruthSet> {
    let path = path.as_ref();
    let coco: CocoDataset = read_json(path)?;
    from_coco(path, &coco)
}

pub fn to_coco_results(dets: &DetectionSet) -> Vec<CocoResult> {
    dets.detections
        .iter()
        .map(|d| CocoResult {
            image_id: d.image_id,
            category_id: d.bbox.class_id,
            bbox: xywh(&d.bbox),
            score: d.confidence,
        })
        .collect()
}

pub fn write_detections(path: impl AsRef<Path>, dets: &DetectionSet) -> Result<()> {
    write_json(path, &to_coco_results(dets))
}

/// Reads a COCO-style detection result list.
pub fn read_detections(path: impl AsRef<Path>) -> Result<DetectionSet> {
    let path = path.as_ref();
    let results: Vec<CocoResult> = read_json(path)?;
    let mut detections = Vec::with_capacity(results.len());
    for (i, r) in results.iter().enumerate() {
        let bbox = bbox_from_xywh(path, format!("[{i}]"), r.bbox, r.category_id)?;
        if !(0.0..=1.0).contains(&r.score) {
            return Err(Error::MalformedField {
                path: path.to_path_buf(),
                location: format!("[{i}]"),
                field: "score".into(),
                reason: format!("{} outside [0, 1]", r.score),
            });
        }
        detections.push(Detection {
            image_id: r.image_id,
            bbox,
            confidence: r.score,
        });
    }
    Ok(DetectionSet::new(detections))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn info(id: u64, w: usize, h: usize) -> ImageInfo {
        ImageInfo {
            id,
            file_name: format!("capture_{id:04}.png"),
            width: w,
            height: h,
        }
    }

    fn sample() -> GroundTruthSet {
        let mut gts = GroundTruthSet::new();
        gts.insert(
            info(0, 100, 100),
            vec![
                BBox::new(45.0, 40.0, 55.0, 60.0, 0).unwrap(),
                BBox::new(0.0, 0.0, 12.5, 20.0, 0).unwrap(),
            ],
        );
        gts.insert(info(1, 200, 50), vec![BBox::new(10.0, 5.0, 30.0, 45.0, 0).unwrap()]);
        gts.insert(info(2, 200, 50), vec![]);
        gts
    }

    fn assert_close(a: &GroundTruthSet, b: &GroundTruthSet, tol: f64) {
        assert_eq!(a.images.len(), b.images.len());
        for (id, ea) in &a.images {
            let eb = &b.images[id];
            assert_eq!(ea.info, eb.info);
            assert_eq!(ea.boxes.len(), eb.boxes.len());
            for (x, y) in ea.boxes.iter().zip(&eb.boxes) {
                for (u, v) in [(x.x_min, y.x_min), (x.y_min, y.y_min), (x.x_max, y.x_max), (x.y_max, y.y_max)] {
                    assert!((u - v).abs() <= tol, "{x:?} vs {y:?}");
                }
                assert_eq!(x.class_id, y.class_id);
            }
        }
    }

    #[test]
    fn yolo_hand_conversion() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("capture_0000.txt"), "0 0.5 0.5 0.1 0.2\n").unwrap();
        let gts = read_yolo(dir.path(), &[info(0, 100, 100)]).unwrap();
        let b = gts.boxes(0)[0];
        for (got, want) in [(b.x_min, 45.0), (b.y_min, 40.0), (b.x_max, 55.0), (b.y_max, 60.0)] {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn yolo_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let gts = sample();
        write_yolo(dir.path(), &gts).unwrap();
        let index: Vec<_> = gts.infos().cloned().collect();
        let back = read_yolo(dir.path(), &index).unwrap();
        assert_close(&gts, &back, 1e-5);
        assert_eq!(
            fs::read_to_string(dir.path().join("capture_0000.txt")).unwrap(),
            "0 0.500000 0.500000 0.100000 0.200000\n0 0.062500 0.100000 0.125000 0.200000\n"
        );
        assert_eq!(fs::read_to_string(dir.path().join("capture_0002.txt")).unwrap(), "");
    }

    #[test]
    fn yolo_errors_name_file_and_line() {
        let dir = tempfile::tempdir().unwrap();
        let idx = [info(0, 100, 100)];
        let path = dir.path().join("capture_0000.txt");

        fs::write(&path, "0 0.5 0.5 0.1 0.2\n0 0.5 0.5\n").unwrap();
        assert!(matches!(read_yolo(dir.path(), &idx), Err(Error::MalformedLine { line: 2, .. })));

        fs::write(&path, "0 0.5 abc 0.1 0.2\n").unwrap();
        let err = read_yolo(dir.path(), &idx).unwrap_err();
        assert!(matches!(&err, Error::MalformedField { field, .. } if field == "cy"));
        assert!(err.to_string().contains("line 1"));

        fs::write(&path, "0 0.5 1.5 0.1 0.2\n").unwrap();
        assert!(matches!(
            read_yolo(dir.path(), &idx),
            Err(Error::CoordinateOutOfRange { line: 1, .. })
        ));

        fs::remove_file(&path).unwrap();
        fs::write(dir.path().join("stranger.txt"), "0 0.5 0.5 0.1 0.2\n").unwrap();
        assert!(matches!(read_yolo(dir.path(), &idx), Err(Error::UnknownImage { .. })));
    }

    #[test]
    fn yolo_detections_carry_confidence() {
        let dir = tempfile::tempdir().unwrap();
        let idx = vec![info(0, 100, 100), info(1, 100, 100)];
        let dets = DetectionSet::new(vec![
            Detection::new(1, BBox::new(10.0, 10.0, 20.0, 30.0, 0).unwrap(), 0.75).unwrap(),
            Detection::new(0, BBox::new(0.0, 0.0, 50.0, 50.0, 0).unwrap(), 0.5).unwrap(),
        ]);
        write_yolo_detections(dir.path(), &dets, &idx).unwrap();
        let back = read_yolo_detections(dir.path(), &idx).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back.detections[0].image_id, 0);
        assert_eq!(back.detections[1].confidence, 0.75);

        let orphan = DetectionSet::new(vec![Detection::new(9, dets.detections[0].bbox, 0.1).unwrap()]);
        assert!(matches!(
            write_yolo_detections(dir.path(), &orphan, &idx),
            Err(Error::UnknownImage { .. })
        ));
    }

    #[test]
    fn coco_round_trip_is_exact_and_canonical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gt.json");
        let gts = sample();
        write_coco(&path, &gts).unwrap();
        let back = read_coco(&path).unwrap();
        assert_eq!(back, gts);
        let first = fs::read(&path).unwrap();
        write_coco(&path, &back).unwrap();
        assert_eq!(fs::read(&path).unwrap(), first);
    }

    #[test]
    fn coco_negative_width_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        let mut coco = to_coco(&sample());
        coco.annotations[1].bbox[2] = -4.0;
        fs::write(&path, serde_json::to_string(&coco).unwrap()).unwrap();
        let err = read_coco(&path).unwrap_err();
        assert!(matches!(&err, Error::MalformedField { location, .. } if location == "annotations[1]"));
    }

    #[test]
    fn coco_unknown_image_and_bad_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        let mut coco = to_coco(&sample());
        coco.annotations[0].image_id = 42;
        fs::write(&path, serde_json::to_string(&coco).unwrap()).unwrap();
        assert!(matches!(read_coco(&path), Err(Error::UnknownImage { .. })));

        fs::write(&path, "{\"images\": [").unwrap();
        assert!(matches!(read_coco(&path), Err(Error::Json { .. })));
    }

    #[test]
    fn detection_results_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dets.json");
        let dets = sample().as_detections(0.9);
        write_detections(&path, &dets).unwrap();
        assert_eq!(read_detections(&path).unwrap(), dets);

        fs::write(&path, r#"[{"image_id": 0, "category_id": 0, "bbox": [0, 0, 1, 1], "score": 1.5}]"#).unwrap();
        assert!(matches!(read_detections(&path), Err(Error::MalformedField { .. })));
    }
}
