//! Rolling-shutter readout model and row-by-row composition.
//!
//! A capture burst of `F` global-shutter frames is turned into one
//! rolling-shutter image by taking each output row from the burst frame that
//! was current when the sensor read that row. The paired global-shutter image
//! is simply frame 0 of the burst.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{FrameSequence, ImageBuffer, Rgb};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanDirection {
    #[default]
    TopToBottom,
    BottomToTop,
}

/// Capture geometry of a rolling-shutter sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutModel {
    /// Sensor rows `H`; must equal the frame height.
    pub sensor_rows: usize,
    /// Burst frames `F` consumed per capture, `1 <= F <= H`.
    pub frames_per_capture: usize,
    #[serde(default)]
    pub scan_direction: ScanDirection,
    /// Output captures per second. The burst source rate is `gs_frame_rate * F`.
    pub gs_frame_rate: f64,
}

impl ReadoutModel {
    pub fn new(sensor_rows: usize, frames_per_capture: usize, gs_frame_rate: f64) -> Result<Self> {
        let model = Self {
            sensor_rows,
            frames_per_capture,
            scan_direction: ScanDirection::TopToBottom,
            gs_frame_rate,
        };
        model.validate()?;
        Ok(model)
    }

    /// One burst frame per sensor row: 1080 rows, 1080 frames, 30 captures/s
    /// (a 32,400 fps source).
    pub fn full_hd_one_frame_per_row() -> Self {
        Self {
            sensor_rows: 1080,
            frames_per_capture: 1080,
            scan_direction: ScanDirection::TopToBottom,
            gs_frame_rate: 30.0,
        }
    }

    pub fn with_direction(mut self, direction: ScanDirection) -> Self {
        self.scan_direction = direction;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.sensor_rows == 0 {
            return Err(Error::InvalidModel("sensor_rows must be at least 1".into()));
        }
        if self.frames_per_capture == 0 {
            return Err(Error::InvalidModel("frames_per_capture must be at least 1".into()));
        }
        if self.frames_per_capture > self.sensor_rows {
            return Err(Error::InvalidModel(format!(
                "frames_per_capture ({}) exceeds sensor_rows ({}); at most one frame per row is supported",
                self.frames_per_capture, self.sensor_rows
            )));
        }
        if !(self.gs_frame_rate.is_finite() && self.gs_frame_rate > 0.0) {
            return Err(Error::InvalidModel(format!(
                "gs_frame_rate must be positive, got {}",
                self.gs_frame_rate
            )));
        }
        Ok(())
    }

    /// Burst frame rate: `gs_frame_rate * frames_per_capture`.
    pub fn source_frame_rate(&self) -> f64 {
        self.gs_frame_rate * self.frames_per_capture as f64
    }

    /// Timestamp of burst frame `k` within a capture, in seconds.
    pub fn frame_time(&self, k: usize) -> f64 {
        k as f64 / self.source_frame_rate()
    }

    /// Burst frame supplying output row `r`.
    ///
    /// Top-to-bottom: `floor(r * F / H)`. Bottom-to-top: `floor((H - 1 - r) * F / H)`.
    pub fn row_to_frame(&self, r: usize) -> Result<usize> {
        let h = self.sensor_rows;
        if r >= h {
            return Err(Error::RowOutOfRange { row: r, height: h });
        }
        Ok(self.frame_for_scan_position(self.scan_position(r)))
    }

    /// Position of row `r` in readout order (0 = read first).
    pub fn scan_position(&self, r: usize) -> usize {
        match self.scan_direction {
            ScanDirection::TopToBottom => r,
            ScanDirection::BottomToTop => self.sensor_rows - 1 - r,
        }
    }

    fn frame_for_scan_position(&self, pos: usize) -> usize {
        ((pos as u128 * self.frames_per_capture as u128) / self.sensor_rows as u128) as usize
    }

    /// Rows in the order the sensor reads them.
    pub fn scan_order(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.sensor_rows).map(move |pos| match self.scan_direction {
            ScanDirection::TopToBottom => pos,
            ScanDirection::BottomToTop => self.sensor_rows - 1 - pos,
        })
    }

    /// `row_to_frame` for every row, indexed by raster row.
    pub fn frame_map(&self) -> Vec<usize> {
        (0..self.sensor_rows)
            .map(|r| self.frame_for_scan_position(self.scan_position(r)))
            .collect()
    }
}

/// Composes the rolling-shutter image of a burst: row `r` of the output is row
/// `r` of frame `row_to_frame(r)`.
pub fn compose_rs(seq: &FrameSequence, model: &ReadoutModel) -> Result<ImageBuffer> {
    model.validate()?;
    if seq.len() < model.frames_per_capture {
        return Err(Error::TooFewFrames {
            required: model.frames_per_capture,
            available: seq.len(),
        });
    }
    compose_rs_with(model, |k| Ok(seq.frames()[k].clone()))
}

/// Streaming form of [`compose_rs`]: `fetch(k)` is called once per burst
/// frame, in increasing order, and only for frames that supply a row.
///
/// Lets a full 1080-frame burst be composed from disk without holding it in
/// memory.
pub fn compose_rs_with<F>(model: &ReadoutModel, mut fetch: F) -> Result<ImageBuffer>
where
    F: FnMut(usize) -> Result<ImageBuffer>,
{
    model.validate()?;
    let h = model.sensor_rows;
    let map = model.frame_map();
    let mut rows_by_frame: Vec<Vec<usize>> = vec![Vec::new(); model.frames_per_capture];
    for (r, &f) in map.iter().enumerate() {
        rows_by_frame[f].push(r);
    }

    let mut width = None;
    let mut pixels: Vec<Rgb> = Vec::new();
    for (f, rows) in rows_by_frame.iter().enumerate() {
        if rows.is_empty() {
            continue;
        }
        let frame = fetch(f)?;
        if frame.height() != h {
            return Err(Error::DimensionMismatch {
                expected: format!("frame height {h} (sensor_rows)"),
                found: format!("frame {f} height {}", frame.height()),
            });
        }
        let w = *width.get_or_insert(frame.width());
        if frame.width() != w {
            return Err(Error::DimensionMismatch {
                expected: format!("frame width {w}"),
                found: format!("frame {f} width {}", frame.width()),
            });
        }
        if pixels.is_empty() {
            pixels = vec![Rgb::default(); w * h];
        }
        for &r in rows {
            pixels[r * w..(r + 1) * w].copy_from_slice(frame.row(r)?);
        }
    }
    let w = width.expect("frames_per_capture >= 1 so frame 0 always supplies a row");
    ImageBuffer::new(w, h, pixels)
}

/// The global-shutter image of a burst: frame 0, unmodified.
pub fn compose_gs(seq: &FrameSequence, _model: &ReadoutModel) -> Result<ImageBuffer> {
    seq.frame(0).cloned().ok_or(Error::EmptySequence)
}

/// A paired global/rolling-shutter capture of one burst.
#[derive(Debug, Clone, PartialEq)]
pub struct CapturePair {
    pub gs: ImageBuffer,
    pub rs: ImageBuffer,
}

pub fn capture_pair(seq: &FrameSequence, model: &ReadoutModel) -> Result<CapturePair> {
    let rs = compose_rs(seq, model)?;
    let gs = compose_gs(seq, model)?;
    Ok(CapturePair { gs, rs })
}

#[cfg(test)]
mod tests {
    use super::*;

    const BG: Rgb = Rgb([0, 0, 0]);
    const BAR: Rgb = Rgb([255, 255, 255]);

    fn model(h: usize, f: usize) -> ReadoutModel {
        ReadoutModel::new(h, f, 30.0).unwrap()
    }

    /// 8x8 frames with a 2-px-wide vertical bar starting at column `k` in frame `k`.
    fn moving_bar(n: usize) -> FrameSequence {
        let frames = (0..n)
            .map(|k| ImageBuffer::from_fn(8, 8, |x, _| if x == k || x == k + 1 { BAR } else { BG }).unwrap())
            .collect();
        FrameSequence::new(frames, 240.0).unwrap()
    }

    #[test]
    fn row_to_frame_examples() {
        let full_hd = ReadoutModel::full_hd_one_frame_per_row();
        assert_eq!(full_hd.row_to_frame(539).unwrap(), 539);
        assert_eq!(full_hd.source_frame_rate(), 32_400.0);
        assert_eq!(model(4, 2).row_to_frame(3).unwrap(), 1);
        assert_eq!(model(7, 3).row_to_frame(0).unwrap(), 0);
        assert!(matches!(model(4, 2).row_to_frame(4), Err(Error::RowOutOfRange { .. })));
    }

    #[test]
    fn bottom_to_top_reverses_the_map() {
        let m = model(4, 2).with_direction(ScanDirection::BottomToTop);
        assert_eq!(m.frame_map(), vec![1, 1, 0, 0]);
        assert_eq!(m.scan_order().collect::<Vec<_>>(), vec![3, 2, 1, 0]);
    }

    #[test]
    fn model_validation() {
        assert!(ReadoutModel::new(0, 1, 30.0).is_err());
        assert!(ReadoutModel::new(4, 0, 30.0).is_err());
        assert!(ReadoutModel::new(4, 5, 30.0).is_err());
        assert!(ReadoutModel::new(4, 4, 0.0).is_err());
        assert!(ReadoutModel::new(4, 4, f64::NAN).is_err());
    }

    #[test]
    fn moving_bar_becomes_a_staircase() {
        let seq = moving_bar(8);
        let rs = compose_rs(&seq, &model(8, 8)).unwrap();
        // hand-drawn: row r holds the bar at columns r and r+1
        let expected = ImageBuffer::from_fn(8, 8, |x, y| if x == y || x == y + 1 { BAR } else { BG }).unwrap();
        assert_eq!(rs, expected);
    }

    #[test]
    fn static_burst_gives_frame_zero() {
        let frame = ImageBuffer::from_fn(5, 6, |x, y| Rgb([x as u8, y as u8, 9])).unwrap();
        let seq = FrameSequence::new(vec![frame.clone(); 6], 180.0).unwrap();
        let pair = capture_pair(&seq, &model(6, 6)).unwrap();
        assert_eq!(pair.rs, frame);
        assert_eq!(pair.gs, pair.rs);
    }

    #[test]
    fn gs_is_frame_zero_only() {
        let seq = moving_bar(8);
        let gs = compose_gs(&seq, &model(8, 8)).unwrap();
        assert_eq!(&gs, seq.frame(0).unwrap());
        assert_ne!(&gs, seq.frame(1).unwrap());

        let single = FrameSequence::new(vec![seq.frame(3).unwrap().clone()], 30.0).unwrap();
        assert_eq!(&compose_gs(&single, &model(8, 1)).unwrap(), seq.frame(3).unwrap());
    }

    #[test]
    fn capture_pair_on_motion_and_short_bursts() {
        let pair = capture_pair(&moving_bar(8), &model(8, 8)).unwrap();
        assert_ne!(pair.gs, pair.rs);
        assert!(matches!(
            capture_pair(&moving_bar(5), &model(8, 8)),
            Err(Error::TooFewFrames { required: 8, available: 5 })
        ));
    }

    #[test]
    fn height_mismatch_is_rejected() {
        assert!(matches!(
            compose_rs(&moving_bar(8), &model(6, 6)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn streaming_fetches_each_supplying_frame_once() {
        let seq = moving_bar(8);
        let m = model(8, 4);
        let mut fetched = Vec::new();
        let rs = compose_rs_with(&m, |k| {
            fetched.push(k);
            Ok(seq.frames()[k].clone())
        })
        .unwrap();
        assert_eq!(fetched, vec![0, 1, 2, 3]);
        assert_eq!(rs, compose_rs(&seq, &m).unwrap());
    }
}
