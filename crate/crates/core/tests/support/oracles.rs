//! Independent reference implementations used by the integration and
//! acceptance tests. Nothing here calls into the code paths it checks.

#![allow(dead_code)]

use std::collections::BTreeMap;

use rollscan_core::image::{ImageBuffer, Rgb};
use rollscan_core::{DetectionSet, GroundTruthSet};

/// Integer pixel box `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

/// Tight boxes of the pixels painted `color`, one per maximal run of rows
/// containing such a pixel.
pub fn row_run_boxes(img: &ImageBuffer, color: Rgb) -> Vec<PixelBox> {
    let mut out = Vec::new();
    let mut current: Option<PixelBox> = None;
    for y in 0..img.height() {
        let cols: Vec<usize> = (0..img.width()).filter(|&x| img.pixel(x, y) == Some(color)).collect();
        match (cols.first(), cols.last()) {
            (Some(&lo), Some(&hi)) => {
                let b = current.get_or_insert(PixelBox {
                    x0: lo,
                    y0: y,
                    x1: hi + 1,
                    y1: y + 1,
                });
                b.x0 = b.x0.min(lo);
                b.x1 = b.x1.max(hi + 1);
                b.y1 = y + 1;
            }
            _ => out.extend(current.take()),
        }
    }
    out.extend(current);
    out
}

/// Composes an RS image by brute force: for every row, render the frame
/// that row comes from and copy that row. `frame_of_row` is written out by
/// hand by each caller.
pub fn compose_by_rendering(
    height: usize,
    frame_of_row: impl Fn(usize) -> usize,
    render: impl Fn(usize) -> ImageBuffer,
) -> ImageBuffer {
    let rows: Vec<Vec<Rgb>> = (0..height)
        .map(|r| {
            let frame = render(frame_of_row(r));
            (0..frame.width()).map(|x| frame.pixel(x, r).unwrap()).collect()
        })
        .collect();
    ImageBuffer::from_rows(rows).unwrap()
}

fn oracle_iou(a: [f64; 4], b: [f64; 4]) -> f64 {
    let ix = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let iy = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = ix * iy;
    let area = |v: [f64; 4]| (v[2] - v[0]) * (v[3] - v[1]);
    let union = area(a) + area(b) - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy)]
struct Pred {
    image: u64,
    class: u32,
    coords: [f64; 4],
    score: f64,
    input_index: usize,
}

fn preds(dets: &DetectionSet) -> Vec<Pred> {
    dets.detections
        .iter()
        .enumerate()
        .map(|(i, d)| Pred {
            image: d.image_id,
            class: d.bbox.class_id,
            coords: [d.bbox.x_min, d.bbox.y_min, d.bbox.x_max, d.bbox.y_max],
            score: d.confidence,
            input_index: i,
        })
        .collect()
}

fn area(c: [f64; 4]) -> f64 {
    (c[2] - c[0]) * (c[3] - c[1])
}

/// Selection-sort style ranking: repeatedly pick the best remaining prediction.
fn rank(mut pool: Vec<Pred>) -> Vec<Pred> {
    let mut out = Vec::with_capacity(pool.len());
    while !pool.is_empty() {
        let mut best = 0;
        for i in 1..pool.len() {
            let (a, b) = (&pool[i], &pool[best]);
            let better = a.score > b.score
                || (a.score == b.score && area(a.coords) > area(b.coords))
                || (a.score == b.score && area(a.coords) == area(b.coords) && a.input_index < b.input_index);
            if better {
                best = i;
            }
        }
        out.push(pool.remove(best));
    }
    out
}

/// Per prediction (keyed by input index): matched or not at `thr`.
fn greedy_hits(preds: &[Pred], gts: &GroundTruthSet, thr: f64) -> BTreeMap<usize, bool> {
    let mut used: BTreeMap<(u64, usize), bool> = BTreeMap::new();
    let mut hits = BTreeMap::new();
    for p in rank(preds.to_vec()) {
        let mut best: Option<(usize, f64)> = None;
        for (g, b) in gts.boxes(p.image).iter().enumerate() {
            if b.class_id != p.class || used.contains_key(&(p.image, g)) {
                continue;
            }
            let v = oracle_iou(p.coords, [b.x_min, b.y_min, b.x_max, b.y_max]);
            if v >= thr && best.is_none_or(|(_, bv)| v > bv) {
                best = Some((g, v));
            }
        }
        if let Some((g, _)) = best {
            used.insert((p.image, g), true);
        }
        hits.insert(p.input_index, best.is_some());
    }
    hits
}

/// 101-point AP from the full PR polyline: at each recall level take the best
/// precision among all points reaching it.
fn oracle_ap(ranked_hits: &[bool], n_gt: usize) -> Option<f64> {
    if n_gt == 0 {
        return if ranked_hits.is_empty() { None } else { Some(0.0) };
    }
    let mut points = Vec::new();
    let mut tp = 0;
    for (k, h) in ranked_hits.iter().enumerate() {
        if *h {
            tp += 1;
        }
        points.push((tp as f64 / n_gt as f64, tp as f64 / (k + 1) as f64));
    }
    let mut total = 0.0;
    for j in 0..=100 {
        let level = j as f64 / 100.0;
        let best = points
            .iter()
            .filter(|(r, _)| *r >= level)
            .map(|(_, p)| *p)
            .fold(0.0, f64::max);
        total += best;
    }
    Some(total / 101.0)
}

fn oracle_map(dets: &DetectionSet, gts: &GroundTruthSet, thr: f64) -> Option<f64> {
    let all = preds(dets);
    let hits = greedy_hits(&all, gts, thr);
    let mut classes: Vec<u32> = all.iter().map(|p| p.class).collect();
    for a in gts.images.values() {
        classes.extend(a.boxes.iter().map(|b| b.class_id));
    }
    classes.sort_unstable();
    classes.dedup();
    let mut aps = Vec::new();
    for c in classes {
        let ranked = rank(all.iter().copied().filter(|p| p.class == c).collect());
        let flags: Vec<bool> = ranked.iter().map(|p| hits[&p.input_index]).collect();
        let n_gt = gts
            .images
            .values()
            .flat_map(|a| a.boxes.iter())
            .filter(|b| b.class_id == c)
            .count();
        if let Some(ap) = oracle_ap(&flags, n_gt) {
            aps.push(ap);
        }
    }
    if aps.is_empty() {
        None
    } else {
        Some(aps.iter().sum::<f64>() / aps.len() as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleReport {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub map50: Option<f64>,
    pub map5095: Option<f64>,
}

/// Full P / R / mAP@0.5 / mAP@0.5:0.95 evaluation, written naively.
pub fn brute_force_evaluate(dets: &DetectionSet, gts: &GroundTruthSet, conf_thr: f64) -> OracleReport {
    let map50 = oracle_map(dets, gts, 0.5);
    let per: Vec<Option<f64>> = (0..10)
        .map(|i| oracle_map(dets, gts, [0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95][i]))
        .collect();
    let map5095 = if per.iter().all(Option::is_some) {
        Some(per.iter().map(|v| v.unwrap()).sum::<f64>() / 10.0)
    } else {
        None
    };
    let kept: Vec<Pred> = preds(dets).into_iter().filter(|p| p.score >= conf_thr).collect();
    let hits = greedy_hits(&kept, gts, 0.5);
    let tp = hits.values().filter(|h| **h).count();
    let n_gt: usize = gts.images.values().map(|a| a.boxes.len()).sum();
    OracleReport {
        precision: if kept.is_empty() { None } else { Some(tp as f64 / kept.len() as f64) },
        recall: if n_gt == 0 { None } else { Some(tp as f64 / n_gt as f64) },
        map50,
        map5095,
    }
}

pub fn close(a: Option<f64>, b: Option<f64>, tol: f64) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => (x - y).abs() <= tol,
        _ => false,
    }
}

/// A random evaluation instance: up to 5 images, up to 5 GT boxes and up to
/// 8 detections per image, 1-2 classes, confidences with frequent ties.
pub fn random_instance(rng: &mut impl rand::Rng) -> (DetectionSet, GroundTruthSet) {
    use rollscan_core::{BBox, Detection, ImageInfo};

    let classes = rng.gen_range(1..=2u32);
    let mut gts = GroundTruthSet::new();
    let mut dets = Vec::new();
    let n_images = rng.gen_range(1..=5u64);
    for id in 0..n_images {
        let n_gt = rng.gen_range(0..=5);
        let mut boxes = Vec::new();
        for _ in 0..n_gt {
            let x = rng.gen_range(0.0..40.0f64);
            let y = rng.gen_range(0.0..40.0f64);
            let w = rng.gen_range(2.0..20.0f64);
            let h = rng.gen_range(2.0..20.0f64);
            boxes.push(BBox::new(x, y, x + w, y + h, rng.gen_range(0..classes)).unwrap());
        }
        let n_det = rng.gen_range(0..=8);
        for _ in 0..n_det {
            let b = if !boxes.is_empty() && rng.gen_bool(0.7) {
                // jitter a GT box so matches land on both sides of the thresholds
                let g = boxes[rng.gen_range(0..boxes.len())];
                let dx = rng.gen_range(-3.0..3.0);
                let dy = rng.gen_range(-3.0..3.0);
                let dw = rng.gen_range(-2.0..2.0);
                let dh = rng.gen_range(-2.0..2.0);
                let class = if rng.gen_bool(0.9) { g.class_id } else { rng.gen_range(0..classes) };
                let x0 = g.x_min + dx;
                let y0 = g.y_min + dy;
                BBox::new(x0, y0, x0 + (g.width() + dw).max(0.5), y0 + (g.height() + dh).max(0.5), class).unwrap()
            } else {
                let x = rng.gen_range(0.0..50.0f64);
                let y = rng.gen_range(0.0..50.0f64);
                BBox::new(x, y, x + rng.gen_range(1.0..15.0), y + rng.gen_range(1.0..15.0), rng.gen_range(0..classes))
                    .unwrap()
            };
            let confidence = if rng.gen_bool(0.3) {
                [0.25, 0.5, 0.75, 1.0][rng.gen_range(0..4)]
            } else {
                rng.gen_range(0.0..=1.0)
            };
            dets.push(Detection::new(id, b, confidence).unwrap());
        }
        gts.insert(
            ImageInfo {
                id,
                file_name: format!("{id}.png"),
                width: 64,
                height: 64,
            },
            boxes,
        );
    }
    (DetectionSet::new(dets), gts)
}
