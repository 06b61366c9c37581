use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box in pixel coordinates. Edges are real-valued; pixel `(i, j)`
/// spans `[i, i+1) x [j, j+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    #[serde(default)]
    pub class_id: u32,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64, class_id: u32) -> Result<Self> {
        let b = Self {
            x_min,
            y_min,
            x_max,
            y_max,
            class_id,
        };
        b.validate()?;
        Ok(b)
    }

    /// From a top-left corner and a size, the COCO `[x, y, w, h]` layout.
    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64, class_id: u32) -> Result<Self> {
        if w < 0.0 || h < 0.0 {
            return Err(Error::InvalidBox(format!("negative size {w}x{h}")));
        }
        Self::new(x, y, x + w, y + h, class_id)
    }

    pub fn validate(&self) -> Result<()> {
        let edges = [self.x_min, self.y_min, self.x_max, self.y_max];
        if edges.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidBox(format!("non-finite edge in {self:?}")));
        }
        if self.x_min > self.x_max || self.y_min > self.y_max {
            return Err(Error::InvalidBox(format!(
                "inverted box ({}, {})-({}, {})",
                self.x_min, self.y_min, self.x_max, self.y_max
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)
    }

    /// Overlap region, `None` when the boxes do not intersect with positive area.
    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let x_min = self.x_min.max(other.x_min);
        let y_min = self.y_min.max(other.y_min);
        let x_max = self.x_max.min(other.x_max);
        let y_max = self.y_max.min(other.y_max);
        (x_max > x_min && y_max > y_min).then_some(BBox {
            x_min,
            y_min,
            x_max,
            y_max,
            class_id: self.class_id,
        })
    }

    /// Clamped to `[0, width] x [0, height]`; `None` when nothing with positive
    /// area remains.
    pub fn clamp_to(&self, width: usize, height: usize) -> Option<BBox> {
        let (w, h) = (width as f64, height as f64);
        let b = BBox {
            x_min: self.x_min.clamp(0.0, w),
            y_min: self.y_min.clamp(0.0, h),
            x_max: self.x_max.clamp(0.0, w),
            y_max: self.y_max.clamp(0.0, h),
            class_id: self.class_id,
        };
        (b.x_max > b.x_min && b.y_max > b.y_min).then_some(b)
    }

    /// Smallest box containing both.
    pub fn union(&self, other: &BBox) -> BBox {
        BBox {
            x_min: self.x_min.min(other.x_min),
            y_min: self.y_min.min(other.y_min),
            x_max: self.x_max.max(other.x_max),
            y_max: self.y_max.max(other.y_max),
            class_id: self.class_id,
        }
    }

    pub fn translate(&self, dx: f64, dy: f64) -> BBox {
        BBox {
            x_min: self.x_min + dx,
            y_min: self.y_min + dy,
            x_max: self.x_max + dx,
            y_max: self.y_max + dy,
            class_id: self.class_id,
        }
    }
}

/// A scored predicted box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub image_id: u64,
    pub bbox: BBox,
    pub confidence: f64,
}

impl Detection {
    pub fn new(image_id: u64, bbox: BBox, confidence: f64) -> Result<Self> {
        bbox.validate()?;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::InvalidBox(format!("confidence {confidence} outside [0, 1]")));
        }
        Ok(Self {
            image_id,
            bbox,
            confidence,
        })
    }
}
