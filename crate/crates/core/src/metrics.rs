//! Detection scoring: IoU, greedy matching, interpolated AP and the
//! P / R / mAP@0.5 / mAP@0.5:0.95 report.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotations::{DetectionSet, GroundTruthSet};
use crate::bbox::{BBox, Detection};
use crate::error::{Error, Result};

/// Intersection over union; 0 when the union has no area.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let ih = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApInterpolation {
    /// Mean envelope precision at recall 0.00, 0.01, ..., 1.00.
    #[default]
    Point101,
    /// Mean envelope precision at recall 0.0, 0.1, ..., 1.0.
    Point11,
    /// Area under the envelope step curve.
    Continuous,
}

pub const DEFAULT_CONFIDENCE_THRESHOLD: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricConfig {
    /// Thresholds averaged into mAP@0.5:0.95.
    #[serde(default = "coco_iou_thresholds")]
    pub iou_thresholds: Vec<f64>,
    /// Operating point for precision and recall.
    #[serde(default = "default_confidence_threshold")]
    pub confidence_threshold: f64,
    #[serde(default)]
    pub interpolation: ApInterpolation,
}

/// 0.50, 0.55, ..., 0.95.
pub fn coco_iou_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

fn default_confidence_threshold() -> f64 {
    DEFAULT_CONFIDENCE_THRESHOLD
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            iou_thresholds: coco_iou_thresholds(),
            confidence_threshold: DEFAULT_CONFIDENCE_THRESHOLD,
            interpolation: ApInterpolation::Point101,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iou_thresholds.is_empty() {
            return Err(Error::InvalidMetricConfig("iou_thresholds is empty".into()));
        }
        if let Some(t) = self.iou_thresholds.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
            return Err(Error::InvalidMetricConfig(format!("IoU threshold {t} outside (0, 1]")));
        }
        if self.iou_thresholds.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidMetricConfig("iou_thresholds must be strictly increasing".into()));
        }
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return Err(Error::InvalidMetricConfig(format!(
                "confidence_threshold {} outside [0, 1]",
                self.confidence_threshold
            )));
        }
        Ok(())
    }
}

/// Ranking order: confidence descending, then larger box first, then input order.
fn rank_cmp(a: (&Detection, usize), b: (&Detection, usize)) -> Ordering {
    b.0.confidence
        .total_cmp(&a.0.confidence)
        .then_with(|| b.0.bbox.area().total_cmp(&a.0.bbox.area()))
        .then_with(|| a.1.cmp(&b.1))
}

/// Outcome of matching detections to ground truth at one IoU threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    /// Per detection (input order): index of the matched GT box within its image.
    pub detections: Vec<Option<usize>>,
    /// Per image: whether each GT box was matched.
    pub ground_truth: BTreeMap<u64, Vec<bool>>,
}

impl Matching {
    pub fn true_positives(&self) -> usize {
        self.detections.iter().filter(|m| m.is_some()).count()
    }

    pub fn false_positives(&self) -> usize {
        self.detections.len() - self.true_positives()
    }

    pub fn false_negatives(&self) -> usize {
        self.ground_truth.values().flatten().filter(|m| !**m).count()
    }
}

/// Greedy matching within each image and class: detections in ranking order
/// each take the unmatched GT box of highest IoU, provided it reaches `iou_thr`.
/// Equal IoUs go to the earlier GT box.
pub fn match_detections(dets: &DetectionSet, gts: &GroundTruthSet, iou_thr: f64) -> Matching {
    let mut ground_truth: BTreeMap<u64, Vec<bool>> =
        gts.images.iter().map(|(&id, a)| (id, vec![false; a.boxes.len()])).collect();
    let mut detections = vec![None; dets.detections.len()];

    let mut order: Vec<usize> = (0..dets.detections.len()).collect();
    order.sort_by(|&i, &j| rank_cmp((&dets.detections[i], i), (&dets.detections[j], j)));

    for i in order {
        let d = &dets.detections[i];
        let (Some(gt_boxes), Some(taken)) = (gts.images.get(&d.image_id), ground_truth.get_mut(&d.image_id)) else {
            continue;
        };
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gt_boxes.boxes.iter().enumerate() {
            if taken[g] || gt.class_id != d.bbox.class_id {
                continue;
            }
            let v = iou(&d.bbox, gt);
            if v >= iou_thr && best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        if let Some((g, _)) = best {
            taken[g] = true;
            detections[i] = Some(g);
        }
    }
    Matching {
        detections,
        ground_truth,
    }
}

/// AP of a ranked list of match flags (true = true positive) against `n_gt`
/// ground-truth boxes. `None` when there is nothing to score: no GT and no
/// detections. Detections without any GT score 0.
pub fn average_precision(ranked: &[bool], n_gt: usize, interpolation: ApInterpolation) -> Option<f64> {
    if n_gt == 0 {
        return (!ranked.is_empty()).then_some(0.0);
    }
    if ranked.is_empty() {
        return Some(0.0);
    }
    let mut recall = Vec::with_capacity(ranked.len());
    let mut precision = Vec::with_capacity(ranked.len());
    let mut tp = 0usize;
    for (k, &hit) in ranked.iter().enumerate() {
        tp += hit as usize;
        recall.push(tp as f64 / n_gt as f64);
        precision.push(tp as f64 / (k + 1) as f64);
    }
    // non-increasing envelope, right to left
    for k in (0..precision.len() - 1).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    let sampled = |points: usize| {
        let sum: f64 = (0..=points)
            .map(|j| {
                let r = j as f64 / points as f64;
                let i = recall.partition_point(|&x| x < r);
                if i < precision.len() {
                    precision[i]
                } else {
                    0.0
                }
            })
            .sum();
        sum / (points + 1) as f64
    };
    Some(match interpolation {
        ApInterpolation::Point101 => sampled(100),
        ApInterpolation::Point11 => sampled(10),
        ApInterpolation::Continuous => {
            let mut prev = 0.0;
            let mut area = 0.0;
            for (r, p) in recall.iter().zip(&precision) {
                area += (r - prev) * p;
                prev = *r;
            }
            area
        }
    })
}

/// Per-class AP at one IoU threshold, keyed by class id. Classes with neither
/// GT nor detections are absent.
pub fn class_average_precisions(
    dets: &DetectionSet,
    gts: &GroundTruthSet,
    iou_thr: f64,
    interpolation: ApInterpolation,
) -> BTreeMap<u32, f64> {
    let matching = match_detections(dets, gts, iou_thr);
    let mut n_gt: BTreeMap<u32, usize> = BTreeMap::new();
    for b in gts.images.values().flat_map(|a| a.boxes.iter()) {
        *n_gt.entry(b.class_id).or_default() += 1;
    }
    let mut ranked: HashMap<u32, Vec<usize>> = HashMap::new();
    for (i, d) in dets.detections.iter().enumerate() {
        ranked.entry(d.bbox.class_id).or_default().push(i);
    }
    let classes: BTreeSet<u32> = n_gt.keys().chain(ranked.keys()).copied().collect();
    let mut out = BTreeMap::new();
    for c in classes {
        let mut idx = ranked.remove(&c).unwrap_or_default();
        idx.sort_by(|&i, &j| rank_cmp((&dets.detections[i], i), (&dets.detections[j], j)));
        let flags: Vec<bool> = idx.iter().map(|&i| matching.detections[i].is_some()).collect();
        if let Some(ap) = average_precision(&flags, n_gt.get(&c).copied().unwrap_or(0), interpolation) {
            out.insert(c, ap);
        }
    }
    out
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdAp {
    pub iou_threshold: f64,
    /// Class-mean AP; `None` when there is nothing to score.
    pub map: Option<f64>,
}

/// Evaluation summary with the P, R, mAP@0.5 and mAP@0.5:0.95 columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `None` when no detection reaches the confidence threshold.
    pub precision: Option<f64>,
    /// `None` when there is no ground truth.
    pub recall: Option<f64>,
    pub map50: Option<f64>,
    pub map5095: Option<f64>,
    pub per_threshold: Vec<ThresholdAp>,
    /// Per-class AP at IoU 0.5.
    pub per_class_ap50: BTreeMap<u32, f64>,
    pub confidence_threshold: f64,
    pub interpolation: ApInterpolation,
    pub ground_truth_boxes: usize,
    pub detections: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

/// Scores `dets` against `gts`. mAP@0.5 is the class mean at IoU 0.5;
/// mAP@0.5:0.95 the mean of the class means over `config.iou_thresholds`.
/// Precision and recall count detections at or above the confidence
/// threshold, matched at IoU 0.5. Detections on images absent from `gts` are
/// false positives.
pub fn evaluate(dets: &DetectionSet, gts: &GroundTruthSet, config: &MetricConfig) -> Result<EvalReport> {
    config.validate()?;
    let per_class: Vec<BTreeMap<u32, f64>> = std::iter::once(0.5)
        .chain(config.iou_thresholds.iter().copied())
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&t| class_average_precisions(dets, gts, t, config.interpolation))
        .collect();
    let (at50, rest) = per_class.split_first().expect("0.5 is always evaluated");
    let map50 = mean(at50.values().copied());
    let per_threshold: Vec<ThresholdAp> = config
        .iou_thresholds
        .iter()
        .zip(rest)
        .map(|(&t, aps)| ThresholdAp {
            iou_threshold: t,
            map: mean(aps.values().copied()),
        })
        .collect();
    let map5095 = if per_threshold.iter().all(|t| t.map.is_some()) {
        mean(per_threshold.iter().filter_map(|t| t.map))
    } else {
        None
    };

    let confident = DetectionSet::new(
        dets.detections
            .iter()
            .filter(|d| d.confidence >= config.confidence_threshold)
            .copied()
            .collect(),
    );
    let matching = match_detections(&confident, gts, 0.5);
    let tp = matching.true_positives();
    let n_gt = gts.total_boxes();
    Ok(EvalReport {
        precision: (!confident.is_empty()).then(|| tp as f64 / confident.len() as f64),
        recall: (n_gt > 0).then(|| tp as f64 / n_gt as f64),
        map50,
        map5095,
        per_threshold,
        per_class_ap50: at50.clone(),
        confidence_threshold: config.confidence_threshold,
        interpolation: config.interpolation,
        ground_truth_boxes: n_gt,
        detections: dets.len(),
        true_positives: tp,
        false_positives: matching.false_positives(),
        false_negatives: matching.false_negatives(),
    })
}

fn fmt_metric(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

/// Aligned text table, one row per labelled report.
pub fn report_table(rows: &[(&str, &EvalReport)]) -> String {
    let label_w = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0).max("Dataset".len());
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<label_w$}  {:>8}  {:>8}  {:>10}  {:>15}",
        "Dataset", "P", "R", "mAP@0.5", "mAP@0.5:0.95"
    );
    for (label, r) in rows {
        let _ = writeln!(
            out,
            "{:<label_w$}  {:>8}  {:>8}  {:>10}  {:>15}",
            label,
            fmt_metric(r.precision),
            fmt_metric(r.recall),
            fmt_metric(r.map50),
            fmt_metric(r.map5095)
        );
    }
    if let Some((_, r)) = rows.first() {
        let _ = writeln!(
            out,
            "(P/R at confidence >= {}, IoU 0.5; AP interpolation {:?})",
            r.confidence_threshold, r.interpolation
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub metric: String,
    pub a: Option<f64>,
    pub b: Option<f64>,
    /// `a - b`.
    pub delta: Option<f64>,
    /// `|a - b|`, the absolute deviation.
    pub abs_delta: Option<f64>,
    /// `|a - b| / max(a, b)`; 0 when both are 0.
    pub relative_deviation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportComparison {
    pub metrics: Vec<MetricDelta>,
}

fn delta(metric: &str, a: Option<f64>, b: Option<f64>) -> MetricDelta {
    let both = a.zip(b);
    MetricDelta {
        metric: metric.into(),
        a,
        b,
        delta: both.map(|(x, y)| x - y),
        abs_delta: both.map(|(x, y)| (x - y).abs()),
        relative_deviation: both.map(|(x, y)| {
            let m = x.max(y);
            if m == 0.0 {
                0.0
            } else {
                (x - y).abs() / m
            }
        }),
    }
}

pub fn compare_reports(a: &EvalReport, b: &EvalReport) -> ReportComparison {
    ReportComparison {
        metrics: vec![
            delta("P", a.precision, b.precision),
            delta("R", a.recall, b.recall),
            delta("mAP@0.5", a.map50, b.map50),
            delta("mAP@0.5:0.95", a.map5095, b.map5095),
        ],
    }
}

impl ReportComparison {
    pub fn get(&self, metric: &str) -> Option<&MetricDelta> {
        self.metrics.iter().find(|m| m.metric == metric)
    }

    pub fn table(&self, label_a: &str, label_b: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<14}  {:>10}  {:>10}  {:>10}  {:>10}  {:>9}",
            "Metric", label_a, label_b, "a-b", "|a-b|", "rel.dev"
        );
        for m in &self.metrics {
            let _ = writeln!(
                out,
                "{:<14}  {:>10}  {:>10}  {:>10}  {:>10}  {:>9}",
                m.metric,
                fmt_metric(m.a),
                fmt_metric(m.b),
                fmt_metric(m.delta),
                fmt_metric(m.abs_delta),
                m.relative_deviation
                    .map(|r| format!("{:.2}%", r * 100.0))
                    .unwrap_or_else(|| "-".into())
            );
        }
        out
    }
}
