//! Deterministic 2D scenes rendered as high-rate global-shutter bursts with
//! exact analytic ground truth.
//!
//! Actors are hard-edged rectangles or ellipses moving along piecewise-linear
//! trajectories. A pixel is painted when its center lies inside the shape;
//! there is no anti-aliasing, so an integer-aligned rectangle covers exactly
//! the pixels of its box.

use std::collections::HashSet;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotations::Track;
use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::image::{FrameSequence, ImageBuffer, Rgb};
use crate::shutter::{CapturePair, ReadoutModel};

pub const DEFAULT_PX_PER_METER: f64 = 50.0;

/// Coordinates within this distance of an integer snap to it, so analytic
/// boxes of integer motion land exactly on the pixel grid.
const GRID_SNAP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Rectangle,
    Ellipse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    /// Seconds.
    pub t: f64,
    /// Actor center, px.
    pub position: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    #[default]
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trajectory {
    pub waypoints: Vec<Waypoint>,
    #[serde(default)]
    pub interpolation: Interpolation,
}

impl Trajectory {
    pub fn stationary(position: [f64; 2]) -> Self {
        Self {
            waypoints: vec![Waypoint { t: 0.0, position }],
            interpolation: Interpolation::Linear,
        }
    }

    /// Constant velocity (px/s) from `start` over `[0, duration]` seconds.
    pub fn linear(start: [f64; 2], velocity: [f64; 2], duration: f64) -> Self {
        Self {
            waypoints: vec![
                Waypoint { t: 0.0, position: start },
                Waypoint {
                    t: duration,
                    position: [start[0] + velocity[0] * duration, start[1] + velocity[1] * duration],
                },
            ],
            interpolation: Interpolation::Linear,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.waypoints.is_empty() {
            return Err(Error::InvalidScene("trajectory has no waypoints".into()));
        }
        for w in &self.waypoints {
            if !(w.t.is_finite() && w.position.iter().all(|v| v.is_finite())) {
                return Err(Error::InvalidScene(format!("non-finite waypoint {w:?}")));
            }
        }
        if self.waypoints.windows(2).any(|p| p[1].t <= p[0].t) {
            return Err(Error::InvalidScene("waypoint times must be strictly increasing".into()));
        }
        Ok(())
    }

    /// Peak speed over all segments, px/s.
    pub fn max_speed(&self) -> f64 {
        self.waypoints
            .windows(2)
            .map(|p| {
                let dx = p[1].position[0] - p[0].position[0];
                let dy = p[1].position[1] - p[0].position[1];
                dx.hypot(dy) / (p[1].t - p[0].t)
            })
            .fold(0.0, f64::max)
    }
}

/// Piecewise-linear position at time `t`, clamped to the first/last waypoint.
pub fn position_at(traj: &Trajectory, t: f64) -> [f64; 2] {
    let wps = &traj.waypoints;
    let first = wps[0];
    let last = wps[wps.len() - 1];
    if t <= first.t {
        return first.position;
    }
    if t >= last.t {
        return last.position;
    }
    // first segment whose end time exceeds t
    let i = wps.partition_point(|w| w.t <= t);
    let (a, b) = (wps[i - 1], wps[i]);
    let s = (t - a.t) / (b.t - a.t);
    [
        a.position[0] + (b.position[0] - a.position[0]) * s,
        a.position[1] + (b.position[1] - a.position[1]) * s,
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Actor {
    pub id: u32,
    pub shape: Shape,
    /// `[width, height]` in px.
    pub size: [f64; 2],
    pub color: Rgb,
    pub trajectory: Trajectory,
    #[serde(default)]
    pub class_id: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub width: usize,
    pub height: usize,
    pub background: Rgb,
    pub actors: Vec<Actor>,
    #[serde(default = "default_px_per_meter")]
    pub px_per_meter: f64,
    #[serde(default)]
    pub rng_seed: u64,
}

fn default_px_per_meter() -> f64 {
    DEFAULT_PX_PER_METER
}

impl Scene {
    pub fn empty(width: usize, height: usize, background: Rgb) -> Self {
        Self {
            width,
            height,
            background,
            actors: Vec::new(),
            px_per_meter: DEFAULT_PX_PER_METER,
            rng_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidScene(format!("canvas {}x{}", self.width, self.height)));
        }
        if !(self.px_per_meter.is_finite() && self.px_per_meter > 0.0) {
            return Err(Error::InvalidScene(format!("px_per_meter {}", self.px_per_meter)));
        }
        let mut ids = HashSet::new();
        for a in &self.actors {
            if !ids.insert(a.id) {
                return Err(Error::InvalidScene(format!("duplicate actor id {}", a.id)));
            }
            if !(a.size.iter().all(|s| s.is_finite() && *s >= 1.0)) {
                return Err(Error::InvalidScene(format!(
                    "actor {} size {:?}: both sides must be at least 1 px",
                    a.id, a.size
                )));
            }
            a.trajectory.validate()?;
        }
        Ok(())
    }

    /// Validates `model` and checks that it reads out exactly this canvas.
    pub fn check_sensor(&self, model: &ReadoutModel) -> Result<()> {
        model.validate()?;
        if self.height != model.sensor_rows {
            return Err(Error::DimensionMismatch {
                expected: format!("scene height {} (sensor_rows)", model.sensor_rows),
                found: format!("scene height {}", self.height),
            });
        }
        Ok(())
    }
}

fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < GRID_SNAP {
        r
    } else {
        v
    }
}

/// Tight box of the actor's shape at time `t`, before canvas clipping.
pub fn gt_box(actor: &Actor, t: f64) -> BBox {
    let [cx, cy] = position_at(&actor.trajectory, t);
    let [w, h] = actor.size;
    BBox {
        x_min: snap(cx - w / 2.0),
        y_min: snap(cy - h / 2.0),
        x_max: snap(cx + w / 2.0),
        y_max: snap(cy + h / 2.0),
        class_id: actor.class_id,
    }
}

/// [`gt_box`] intersected with the canvas; `None` when fully off-canvas.
pub fn gt_box_clipped(actor: &Actor, t: f64, width: usize, height: usize) -> Option<BBox> {
    gt_box(actor, t).clamp_to(width, height)
}

/// Pixel indices whose centers fall in `[lo, hi)`, limited to `0..n`.
pub(crate) fn covered(lo: f64, hi: f64, n: usize) -> Range<usize> {
    let start = (lo - 0.5).ceil().max(0.0);
    let end = (hi - 0.5).ceil().min(n as f64);
    if end <= start {
        return 0..0;
    }
    start as usize..end as usize
}

/// Paints rows `rows` of the scene at time `t` into `buf`, which holds
/// exactly those rows.
fn paint_rows(scene: &Scene, t: f64, rows: Range<usize>, buf: &mut [Rgb]) {
    let w = scene.width;
    debug_assert_eq!(buf.len(), w * rows.len());
    buf.fill(scene.background);
    for actor in &scene.actors {
        let b = gt_box(actor, t);
        let ys = covered(b.y_min, b.y_max, scene.height);
        let ys = ys.start.max(rows.start)..ys.end.min(rows.end);
        let xs = covered(b.x_min, b.x_max, w);
        if ys.is_empty() || xs.is_empty() {
            continue;
        }
        match actor.shape {
            Shape::Rectangle => {
                for y in ys {
                    let off = (y - rows.start) * w;
                    buf[off + xs.start..off + xs.end].fill(actor.color);
                }
            }
            Shape::Ellipse => {
                let (cx, cy) = b.center();
                let (a, bb) = (b.width() / 2.0, b.height() / 2.0);
                for y in ys {
                    let dy = (y as f64 + 0.5 - cy) / bb;
                    let off = (y - rows.start) * w;
                    for x in xs.clone() {
                        let dx = (x as f64 + 0.5 - cx) / a;
                        if dx * dx + dy * dy <= 1.0 {
                            buf[off + x] = actor.color;
                        }
                    }
                }
            }
        }
    }
}

/// Renders the scene at time `t`: background, then actors in list order.
pub fn render_frame(scene: &Scene, t: f64) -> ImageBuffer {
    let mut img = ImageBuffer::filled(scene.width.max(1), scene.height.max(1), scene.background)
        .expect("non-empty canvas");
    let rows = 0..img.height();
    paint_rows(scene, t, rows, img.pixels_mut());
    img
}

/// Renders the `F` burst frames of one capture at `k / (gs_frame_rate * F)`.
pub fn render_burst(scene: &Scene, model: &ReadoutModel) -> Result<FrameSequence> {
    scene.validate()?;
    scene.check_sensor(model)?;
    let frames: Vec<ImageBuffer> = (0..model.frames_per_capture)
        .into_par_iter()
        .map(|k| render_frame(scene, model.frame_time(k)))
        .collect();
    FrameSequence::new(frames, model.source_frame_rate())
}

/// GS/RS pair rendered row by row without materialising the burst: each RS
/// row is rendered directly at its readout time. Equal to
/// `capture_pair(&render_burst(scene, model)?, model)`.
pub fn render_capture_pair(scene: &Scene, model: &ReadoutModel) -> Result<CapturePair> {
    scene.validate()?;
    scene.check_sensor(model)?;
    let w = scene.width;
    let map = model.frame_map();
    let mut rs = ImageBuffer::filled(w, scene.height, scene.background)?;
    rs.pixels_mut()
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(r, row)| paint_rows(scene, model.frame_time(map[r]), r..r + 1, row));
    Ok(CapturePair {
        gs: render_frame(scene, 0.0),
        rs,
    })
}

/// Each actor's box in every burst frame.
pub fn gt_tracks(scene: &Scene, model: &ReadoutModel) -> Result<Vec<Track>> {
    scene.validate()?;
    model.validate()?;
    Ok(scene
        .actors
        .iter()
        .map(|a| Track {
            actor_id: a.id,
            boxes: (0..model.frames_per_capture)
                .map(|k| gt_box(a, model.frame_time(k)))
                .collect(),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionDirection {
    #[default]
    Any,
    Horizontal,
    Vertical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Canvas {
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizeRange {
    /// Inclusive integer width range, px.
    pub width: [u32; 2],
    /// Inclusive integer height range, px.
    pub height: [u32; 2],
}

/// Parameters of [`random_scene`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    /// Inclusive actor count range.
    pub actor_count_range: [usize; 2],
    pub size_range_px: SizeRange,
    /// Base walking speed range, m/s, before `speed_multiplier`.
    pub speed_range_mps: [f64; 2],
    #[serde(default = "one")]
    pub speed_multiplier: f64,
    #[serde(default = "default_px_per_meter")]
    pub px_per_meter: f64,
    pub canvas: Canvas,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_shapes")]
    pub shapes: Vec<Shape>,
    #[serde(default)]
    pub direction: MotionDirection,
    /// Length of the generated trajectories, seconds.
    #[serde(default = "one")]
    pub duration_s: f64,
    #[serde(default = "default_background")]
    pub background: Rgb,
}

fn one() -> f64 {
    1.0
}

fn default_shapes() -> Vec<Shape> {
    vec![Shape::Rectangle]
}

fn default_background() -> Rgb {
    Rgb([96, 96, 96])
}

impl Default for GeneratorConfig {
    /// Full-HD pedestrian crowd: up to 2 m/s walking speed at 50 px/m, boxes
    /// 50-100 px wide and 110-200 px tall.
    fn default() -> Self {
        Self {
            actor_count_range: [1, 6],
            size_range_px: SizeRange {
                width: [50, 100],
                height: [110, 200],
            },
            speed_range_mps: [0.0, 2.0],
            speed_multiplier: 1.0,
            px_per_meter: DEFAULT_PX_PER_METER,
            canvas: Canvas {
                width: 1920,
                height: 1080,
            },
            seed: None,
            shapes: default_shapes(),
            direction: MotionDirection::Any,
            duration_s: 1.0,
            background: default_background(),
        }
    }
}

impl GeneratorConfig {
    /// Shrinks canvas, actor sizes and the pixel scale by an integer factor,
    /// keeping speeds in m/s (and so displacement per readout, in canvas
    /// fractions) unchanged.
    pub fn downscaled(&self, factor: u32) -> Self {
        assert!(factor >= 1, "downscale factor must be at least 1");
        let f = factor as usize;
        let shrink = |r: [u32; 2]| [(r[0] / factor).max(1), (r[1] / factor).max(1)];
        Self {
            size_range_px: SizeRange {
                width: shrink(self.size_range_px.width),
                height: shrink(self.size_range_px.height),
            },
            px_per_meter: self.px_per_meter / factor as f64,
            canvas: Canvas {
                width: (self.canvas.width / f).max(1),
                height: (self.canvas.height / f).max(1),
            },
            ..self.clone()
        }
    }

    pub fn with_speed_multiplier(&self, multiplier: f64) -> Self {
        Self {
            speed_multiplier: multiplier,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidGenerator(m));
        let [lo, hi] = self.actor_count_range;
        if lo > hi {
            return bad(format!("actor_count_range [{lo}, {hi}] is inverted"));
        }
        for (name, r) in [("width", self.size_range_px.width), ("height", self.size_range_px.height)] {
            if r[0] == 0 || r[0] > r[1] {
                return bad(format!("size_range_px.{name} {r:?} must satisfy 1 <= min <= max"));
            }
        }
        let [s0, s1] = self.speed_range_mps;
        if !(s0.is_finite() && s1.is_finite() && 0.0 <= s0 && s0 <= s1) {
            return bad(format!("speed_range_mps [{s0}, {s1}] must satisfy 0 <= min <= max"));
        }
        if !(self.speed_multiplier.is_finite() && self.speed_multiplier >= 0.0) {
            return bad(format!("speed_multiplier {} must be >= 0", self.speed_multiplier));
        }
        if !(self.px_per_meter.is_finite() && self.px_per_meter > 0.0) {
            return bad(format!("px_per_meter {} must be > 0", self.px_per_meter));
        }
        if self.canvas.width == 0 || self.canvas.height == 0 {
            return bad(format!("canvas {}x{}", self.canvas.width, self.canvas.height));
        }
        if self.shapes.is_empty() {
            return bad("shapes must not be empty".into());
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return bad(format!("duration_s {} must be > 0", self.duration_s));
        }
        Ok(())
    }
}

/// Builds a random crowd scene. The same config and seed always give the same
/// scene, and the random draws do not depend on `speed_multiplier`, so
/// sweeping the multiplier changes only how fast the same actors move.
///
/// Actors get integer sizes and integer-aligned start boxes; a speed drawn in
/// m/s is scaled by `speed_multiplier * px_per_meter`.
pub fn random_scene(params: &GeneratorConfig, seed: u64) -> Result<Scene> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let Canvas { width, height } = params.canvas;
    let count = rng.gen_range(params.actor_count_range[0]..=params.actor_count_range[1]);
    let mut actors = Vec::with_capacity(count);
    for id in 0..count {
        let w = rng.gen_range(params.size_range_px.width[0]..=params.size_range_px.width[1]) as f64;
        let h = rng.gen_range(params.size_range_px.height[0]..=params.size_range_px.height[1]) as f64;
        // integer top-left corner with the center on the canvas
        let x0 = rng.gen_range(0..width) as f64 - (w / 2.0).floor();
        let y0 = rng.gen_range(0..height) as f64 - (h / 2.0).floor();
        let shape = params.shapes[rng.gen_range(0..params.shapes.len())];
        let color = loop {
            let c = Rgb([rng.gen(), rng.gen(), rng.gen()]);
            if c != params.background {
                break c;
            }
        };
        let [s0, s1] = params.speed_range_mps;
        let base_speed = if s1 > s0 { rng.gen_range(s0..=s1) } else { s0 };
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let unit = match params.direction {
            MotionDirection::Any => [angle.cos(), angle.sin()],
            MotionDirection::Horizontal => [sign, 0.0],
            MotionDirection::Vertical => [0.0, sign],
        };
        let speed = base_speed * params.speed_multiplier * params.px_per_meter;
        let start = [x0 + w / 2.0, y0 + h / 2.0];
        let trajectory = if speed > 0.0 {
            Trajectory::linear(start, [unit[0] * speed, unit[1] * speed], params.duration_s)
        } else {
            Trajectory::stationary(start)
        };
        actors.push(Actor {
            id: id as u32,
            shape,
            size: [w, h],
            color,
            trajectory,
            class_id: 0,
        });
    }
    Ok(Scene {
        width,
        height,
        background: params.background,
        actors,
        px_per_meter: params.px_per_meter,
        rng_seed: seed,
    })
}
