//! The six pipeline commands. Each validates everything it needs before the
//! first write, so a failing run leaves no output tree behind.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{debug, info};
use rayon::prelude::*;
use rollscan_core::annotations::{transform_gt_gs, transform_tracks_to_rs, Track};
use rollscan_core::image::{
    read_json, save_image, save_sequence_with, write_json, SequenceDir, SequenceMetadata,
};
use rollscan_core::metrics::{compare_reports, report_table, ReportComparison};
use rollscan_core::scene::{gt_tracks, render_capture_pair, render_frame, Scene};
use rollscan_core::shutter::compose_rs_with;
use rollscan_core::{evaluate, BBox, EvalReport, GroundTruthSet, ImageInfo, ReadoutModel};
use serde::{Deserialize, Serialize};

use crate::config::{ResolvedConfig, SceneSource};
use crate::dataset::{
    capture_name, create_dir, image_info, images_dir, read_detection_input, read_ground_truth, write_ground_truth,
    write_splits,
};
use crate::error::{CliError, CliResult};

pub const RUN_CONFIG: &str = "run_config.json";
pub const SCENE_FILE: &str = "scene.json";
pub const TRACKS_FILE: &str = "tracks.json";
pub const BURST_DIR: &str = "burst";

fn thread_pool(workers: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {workers} workers: {e}")))
}

/// GS and RS boxes of one capture.
#[derive(Debug, Clone)]
struct CaptureGt {
    info: ImageInfo,
    gs: Vec<BBox>,
    rs: Vec<BBox>,
}

fn gt_sets(captures: &[CaptureGt]) -> (GroundTruthSet, GroundTruthSet) {
    let (mut gs, mut rs) = (GroundTruthSet::new(), GroundTruthSet::new());
    for c in captures {
        gs.insert(c.info.clone(), c.gs.clone());
        rs.insert(c.info.clone(), c.rs.clone());
    }
    (gs, rs)
}

fn capture_names(captures: &[CaptureGt]) -> Vec<String> {
    captures.iter().map(|c| c.info.stem().to_string()).collect()
}

fn scenes(source: &SceneSource, count: usize, speed_multiplier: Option<f64>) -> CliResult<Vec<Scene>> {
    (0..count).map(|i| source.scene(i, speed_multiplier)).collect()
}

/// Image entry, tracks, GS boxes and RS boxes of one capture.
type Annotated = (ImageInfo, Vec<Track>, Vec<BBox>, Vec<BBox>);

fn annotate_scene(index: usize, scene: &Scene, rc: &ResolvedConfig) -> CliResult<Annotated> {
    let model = &rc.config.readout;
    let dims = (scene.width, scene.height);
    let tracks = gt_tracks(scene, model)?;
    let gs = transform_gt_gs(&tracks, dims)?;
    let rs = transform_tracks_to_rs(&tracks, model, dims, rc.config.fragment_policy)?;
    let info = image_info(index, &capture_name(index), scene.width, scene.height);
    Ok((info, tracks, gs, rs))
}

/// Summary of a `synth` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSummary {
    pub captures: usize,
    pub frames_per_capture: usize,
    pub gs_boxes: usize,
}

/// Renders one GS burst per capture.
///
/// ```text
/// <out>/captures/capture_0000/burst/frame_000000.png ... metadata.json
/// <out>/captures/capture_0000/{scene.json, tracks.json}
/// <out>/labels/gs, <out>/annotations/gs.json, splits.json, run_config.json
/// ```
pub fn cmd_synth(rc: &ResolvedConfig) -> CliResult<SynthSummary> {
    let model = rc.config.readout;
    let scenes = scenes(rc.source()?, rc.config.captures, None)?;
    for s in &scenes {
        s.check_sensor(&model).map_err(CliError::config)?;
    }
    let pool = thread_pool(rc.workers)?;
    create_dir(&rc.out)?;
    info!("synth: {} captures of {} frames into {:?}", scenes.len(), model.frames_per_capture, rc.out);

    let captures: Vec<CaptureGt> = pool.install(|| {
        scenes
            .par_iter()
            .enumerate()
            .map(|(i, scene)| {
                let (info, tracks, gs, rs) = annotate_scene(i, scene, rc)?;
                let dir = rc.out.join("captures").join(capture_name(i));
                create_dir(&dir)?;
                write_json(dir.join(SCENE_FILE), scene)?;
                write_json(dir.join(TRACKS_FILE), &tracks)?;
                let meta = SequenceMetadata {
                    frame_rate: model.source_frame_rate(),
                    width: scene.width,
                    height: scene.height,
                    frame_count: model.frames_per_capture,
                };
                save_sequence_with(dir.join(BURST_DIR), &meta, |k| Ok(render_frame(scene, model.frame_time(k))))?;
                debug!("synth: wrote {}", capture_name(i));
                Ok(CaptureGt { info, gs, rs })
            })
            .collect::<CliResult<Vec<_>>>()
    })?;

    let (gs, _) = gt_sets(&captures);
    write_ground_truth(&rc.out, "gs", &gs, rc.format)?;
    write_splits(&rc.out, &capture_names(&captures), rc.seed(), rc.config.split)?;
    write_json(rc.out.join(RUN_CONFIG), &rc.echo())?;
    Ok(SynthSummary {
        captures: captures.len(),
        frames_per_capture: model.frames_per_capture,
        gs_boxes: gs.total_boxes(),
    })
}

/// A burst written by `synth`, checked against the readout model.
struct StoredCapture {
    name: String,
    sequence: SequenceDir,
    tracks: Vec<Track>,
}

fn open_synth_tree(input: &Path, model: &ReadoutModel) -> CliResult<Vec<StoredCapture>> {
    let root = input.join("captures");
    let entries = fs::read_dir(&root).map_err(|e| CliError::io(&root, e))?;
    let mut dirs: Vec<PathBuf> = entries
        .map(|e| e.map(|e| e.path()).map_err(|err| CliError::io(&root, err)))
        .collect::<CliResult<_>>()?;
    dirs.retain(|p| p.is_dir());
    dirs.sort();
    if dirs.is_empty() {
        return Err(CliError::DataMessage(format!("{root:?} holds no capture directories")));
    }
    dirs.iter()
        .map(|dir| {
            let name = dir.file_name().unwrap_or_default().to_string_lossy().into_owned();
            let sequence = SequenceDir::open(dir.join(BURST_DIR)).map_err(CliError::Data)?;
            let meta = sequence.metadata();
            let bad = |reason: String| CliError::DataMessage(format!("burst {name}: {reason}"));
            if meta.height != model.sensor_rows {
                return Err(bad(format!("height {} but sensor_rows is {}", meta.height, model.sensor_rows)));
            }
            if meta.frame_count < model.frames_per_capture {
                return Err(bad(format!(
                    "{} frames but the readout needs {}",
                    meta.frame_count, model.frames_per_capture
                )));
            }
            let tracks: Vec<Track> = read_json(dir.join(TRACKS_FILE)).map_err(|e| match e {
                rollscan_core::Error::Io { .. } => bad(format!("cannot read {TRACKS_FILE}: {e}")),
                other => CliError::Data(other),
            })?;
            if let Some(t) = tracks.iter().find(|t| t.boxes.len() < model.frames_per_capture) {
                return Err(bad(format!(
                    "track of actor {} has {} boxes, readout needs {}",
                    t.actor_id,
                    t.boxes.len(),
                    model.frames_per_capture
                )));
            }
            Ok(StoredCapture {
                name,
                sequence,
                tracks,
            })
        })
        .collect()
}

fn stored_gt(index: usize, c: &StoredCapture, rc: &ResolvedConfig) -> CliResult<CaptureGt> {
    let meta = c.sequence.metadata();
    let dims = (meta.width, meta.height);
    Ok(CaptureGt {
        info: image_info(index, &c.name, meta.width, meta.height),
        gs: transform_gt_gs(&c.tracks, dims)?,
        rs: transform_tracks_to_rs(&c.tracks, &rc.config.readout, dims, rc.config.fragment_policy)?,
    })
}

/// Summary of a `roll` or `annotate` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollSummary {
    pub captures: usize,
    pub gs_boxes: usize,
    pub rs_boxes: usize,
}

fn write_pair_gt(rc: &ResolvedConfig, root: &Path, captures: &[CaptureGt]) -> CliResult<RollSummary> {
    let (gs, rs) = gt_sets(captures);
    write_ground_truth(root, "gs", &gs, rc.format)?;
    write_ground_truth(root, "rs", &rs, rc.format)?;
    write_splits(root, &capture_names(captures), rc.seed(), rc.config.split)?;
    Ok(RollSummary {
        captures: captures.len(),
        gs_boxes: gs.total_boxes(),
        rs_boxes: rs.total_boxes(),
    })
}

/// Composes GS/RS image pairs with GS and RS ground truth. Reads bursts from
/// a `synth` tree when `input` is given, otherwise renders the configured
/// scenes directly.
pub fn cmd_roll(rc: &ResolvedConfig, input: Option<&Path>) -> CliResult<RollSummary> {
    let model = rc.config.readout;
    let pool = thread_pool(rc.workers)?;
    let captures = match input {
        Some(input) => {
            let stored = open_synth_tree(input, &model)?;
            create_dir(&rc.out)?;
            info!("roll: {} bursts from {input:?}", stored.len());
            pool.install(|| {
                stored
                    .par_iter()
                    .enumerate()
                    .map(|(i, c)| {
                        let gt = stored_gt(i, c, rc)?;
                        if rc.config.write_images {
                            let gs = c.sequence.load_frame(0)?;
                            let rs = compose_rs_with(&model, |k| c.sequence.load_frame(k))?;
                            save_pair(&rc.out, &gt.info, &gs, &rs)?;
                        }
                        Ok(gt)
                    })
                    .collect::<CliResult<Vec<_>>>()
            })?
        }
        None => {
            let scenes = scenes(rc.source()?, rc.config.captures, None)?;
            create_dir(&rc.out)?;
            info!("roll: {} rendered captures", scenes.len());
            pool.install(|| render_captures(rc, &rc.out, &scenes))?
        }
    };
    let summary = write_pair_gt(rc, &rc.out, &captures)?;
    write_json(rc.out.join(RUN_CONFIG), &rc.echo())?;
    Ok(summary)
}

fn save_pair(
    root: &Path,
    info: &ImageInfo,
    gs: &rollscan_core::ImageBuffer,
    rs: &rollscan_core::ImageBuffer,
) -> CliResult<()> {
    for (set, img) in [("gs", gs), ("rs", rs)] {
        let dir = images_dir(root, set);
        create_dir(&dir)?;
        save_image(img, dir.join(&info.file_name))?;
    }
    Ok(())
}

fn render_captures(rc: &ResolvedConfig, root: &Path, scenes: &[Scene]) -> CliResult<Vec<CaptureGt>> {
    scenes
        .par_iter()
        .enumerate()
        .map(|(i, scene)| {
            let (info, _, gs, rs) = annotate_scene(i, scene, rc)?;
            if rc.config.write_images {
                let pair = render_capture_pair(scene, &rc.config.readout)?;
                save_pair(root, &info, &pair.gs, &pair.rs)?;
            }
            Ok(CaptureGt { info, gs, rs })
        })
        .collect()
}

/// GS and RS ground truth for a `synth` tree, without touching the images
/// beyond validating the burst directories.
pub fn cmd_annotate(rc: &ResolvedConfig, input: &Path) -> CliResult<RollSummary> {
    let stored = open_synth_tree(input, &rc.config.readout)?;
    let captures = stored
        .iter()
        .enumerate()
        .map(|(i, c)| stored_gt(i, c, rc))
        .collect::<CliResult<Vec<_>>>()?;
    create_dir(&rc.out)?;
    let summary = write_pair_gt(rc, &rc.out, &captures)?;
    write_json(rc.out.join(RUN_CONFIG), &rc.echo())?;
    Ok(summary)
}

fn write_report(dir: &Path, label: &str, report: &EvalReport) -> CliResult<()> {
    write_json(dir.join("report.json"), report)?;
    let path = dir.join("report.txt");
    fs::write(&path, report_table(&[(label, report)])).map_err(|e| CliError::io(&path, e))
}

/// Scores a detection file (COCO results, or a YOLO directory) against
/// ground truth (COCO file, or a YOLO directory with `images.json`).
pub fn cmd_eval(rc: &ResolvedConfig, detections: &Path, gt: &Path) -> CliResult<EvalReport> {
    let gts = read_ground_truth(gt)?;
    let dets = read_detection_input(detections, &gts)?;
    let unknown = dets.unknown_images(&gts);
    if !unknown.is_empty() {
        return Err(CliError::DataMessage(format!(
            "{detections:?} references images missing from the ground truth: {unknown:?}"
        )));
    }
    let report = evaluate(&dets, &gts, &rc.config.metric)?;
    create_dir(&rc.out)?;
    write_report(&rc.out, "detections", &report)?;
    Ok(report)
}

/// Delta table between two saved reports.
pub fn cmd_compare(rc: &ResolvedConfig, a: &Path, b: &Path) -> CliResult<ReportComparison> {
    let ra: EvalReport = read_json(a)?;
    let rb: EvalReport = read_json(b)?;
    let cmp = compare_reports(&ra, &rb);
    create_dir(&rc.out)?;
    write_json(rc.out.join("comparison.json"), &cmp)?;
    let path = rc.out.join("comparison.txt");
    let label = |p: &Path| p.parent().and_then(|d| d.file_name()).map_or_else(|| "A".into(), |n| n.to_string_lossy().into_owned());
    fs::write(&path, cmp.table(&label(a), &label(b))).map_err(|e| CliError::io(&path, e))?;
    Ok(cmp)
}

/// One row of the sweep summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub speed_multiplier: f64,
    pub directory: String,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub map50: Option<f64>,
    pub map5095: Option<f64>,
    /// `1 - map50`: the GS replay scores exactly 1 against GS ground truth.
    pub map50_drop: Option<f64>,
    pub map5095_drop: Option<f64>,
    pub gs_boxes: usize,
    pub rs_boxes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub captures_per_speed: usize,
    pub rows: Vec<SweepRow>,
}

impl SweepSummary {
    pub fn row(&self, speed_multiplier: f64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.speed_multiplier == speed_multiplier)
    }

    pub fn table(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>6}  {:>8}  {:>8}  {:>8}  {:>12}  {:>8}  {:>12}  {:>6}  {:>6}",
            "speed", "P", "R", "mAP@0.5", "mAP@0.5:0.95", "drop@0.5", "drop@0.5:0.95", "GS", "RS"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:>6}  {:>8}  {:>8}  {:>8}  {:>12}  {:>8}  {:>12}  {:>6}  {:>6}",
                format!("{}x", r.speed_multiplier),
                fmt(r.precision),
                fmt(r.recall),
                fmt(r.map50),
                fmt(r.map5095),
                fmt(r.map50_drop),
                fmt(r.map5095_drop),
                r.gs_boxes,
                r.rs_boxes
            );
        }
        out
    }
}

pub fn speed_dir_name(multiplier: f64) -> String {
    format!("speed_{multiplier}")
}

/// For every speed multiplier: generate the captures, compose GS/RS pairs,
/// replay the GS boxes as confidence-1 detections against the RS ground
/// truth, and report. The summary lists every multiplier in config order.
pub fn cmd_sweep(rc: &ResolvedConfig) -> CliResult<SweepSummary> {
    let source = rc.source()?;
    if !matches!(source, SceneSource::Generated { .. }) {
        return Err(CliError::Config("sweep needs a `generator` to rescale speeds".into()));
    }
    let mut names: Vec<String> = rc.config.speed_multipliers.iter().map(|m| speed_dir_name(*m)).collect();
    names.sort();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(CliError::Config("speed_multipliers contains duplicates".into()));
    }
    let plan = rc
        .config
        .speed_multipliers
        .iter()
        .map(|&m| Ok((m, scenes(source, rc.config.captures, Some(m))?)))
        .collect::<CliResult<Vec<_>>>()?;
    let pool = thread_pool(rc.workers)?;
    create_dir(&rc.out)?;

    let mut rows = Vec::with_capacity(plan.len());
    for (m, scenes) in &plan {
        let dir_name = speed_dir_name(*m);
        let root = rc.out.join(&dir_name);
        create_dir(&root)?;
        let captures = pool.install(|| render_captures(rc, &root, scenes))?;
        let summary = write_pair_gt(rc, &root, &captures)?;
        let (gs, rs) = gt_sets(&captures);
        let replay = gs.as_detections(1.0);
        rollscan_core::formats::write_detections(root.join("detections.json"), &replay)?;
        let report = evaluate(&replay, &rs, &rc.config.metric)?;
        write_report(&root, &dir_name, &report)?;
        info!(
            "sweep {m}x: mAP@0.5 {:?}, mAP@0.5:0.95 {:?}",
            report.map50, report.map5095
        );
        rows.push(SweepRow {
            speed_multiplier: *m,
            directory: dir_name,
            precision: report.precision,
            recall: report.recall,
            map50: report.map50,
            map5095: report.map5095,
            map50_drop: report.map50.map(|v| 1.0 - v),
            map5095_drop: report.map5095.map(|v| 1.0 - v),
            gs_boxes: summary.gs_boxes,
            rs_boxes: summary.rs_boxes,
        });
    }
    let summary = SweepSummary {
        captures_per_speed: rc.config.captures,
        rows,
    };
    write_json(rc.out.join("summary.json"), &summary)?;
    let path = rc.out.join("summary.txt");
    fs::write(&path, summary.table()).map_err(|e| CliError::io(&path, e))?;
    write_json(rc.out.join(RUN_CONFIG), &rc.echo())?;
    Ok(summary)
}
