use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Axis-aligned box in pixel coordinates, `[x0, y0, x1, y1]` with `x0 < x1`
/// and `y0 < y1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl From<[f64; 4]> for BBox {
    fn from(v: [f64; 4]) -> Self {
        BBox {
            x0: v[0],
            y0: v[1],
            x1: v[2],
            y1: v[3],
        }
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x0, b.y0, b.x1, b.y1]
    }
}

impl BBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        let b = BBox { x0, y0, x1, y1 };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let v = [self.x0, self.y0, self.x1, self.y1];
        if v.iter().any(|x| !x.is_finite()) || self.x0 >= self.x1 || self.y0 >= self.y1 {
            return Err(invalid(format!("degenerate box {v:?}")));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x0 + self.x1) * 0.5, (self.y0 + self.y1) * 0.5)
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x > self.x0 && x < self.x1 && y > self.y0 && y < self.y1
    }

    pub fn intersection(&self, other: &BBox) -> f64 {
        let w = self.x1.min(other.x1) - self.x0.max(other.x0);
        let h = self.y1.min(other.y1) - self.y0.max(other.y0);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = self.intersection(other);
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    pub fn scale(&self, sx: f64, sy: f64) -> BBox {
        BBox {
            x0: self.x0 * sx,
            y0: self.y0 * sy,
            x1: self.x1 * sx,
            y1: self.y1 * sy,
        }
    }

    /// Clamps into `[0, width] x [0, height]`; may become degenerate.
    pub fn clamp_to(&self, width: f64, height: f64) -> BBox {
        BBox {
            x0: self.x0.clamp(0.0, width),
            y0: self.y0.clamp(0.0, height),
            x1: self.x1.clamp(0.0, width),
            y1: self.y1.clamp(0.0, height),
        }
    }

    pub fn within(&self, width: f64, height: f64) -> bool {
        self.x0 >= 0.0 && self.y0 >= 0.0 && self.x1 <= width && self.y1 <= height
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iou_cases() {
        let a = BBox::new(0.0, 0.0, 10.0, 10.0).unwrap();
        assert_eq!(a.iou(&a), 1.0);
        let b = BBox::new(5.0, 0.0, 15.0, 10.0).unwrap();
        assert!((a.iou(&b) - 50.0 / 150.0).abs() < 1e-12);
        let c = BBox::new(20.0, 20.0, 30.0, 30.0).unwrap();
        assert_eq!(a.iou(&c), 0.0);
    }

    #[test]
    fn rejects_degenerate() {
        assert!(BBox::new(1.0, 0.0, 1.0, 2.0).is_err());
        assert!(BBox::new(0.0, 0.0, f64::NAN, 2.0).is_err());
    }

    #[test]
    fn serializes_as_array() {
        let a = BBox::new(1.0, 2.0, 3.0, 4.5).unwrap();
        let v: [f64; 4] = a.into();
        assert_eq!(v, [1.0, 2.0, 3.0, 4.5]);
        assert_eq!(BBox::from(v), a);
    }
}
