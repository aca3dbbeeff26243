//! Float RGB images in `[0, 1]`, stored height-major with interleaved channels.

use crate::error::{invalid, Result};
use crate::geometry::BBox;

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Image {
            width,
            height,
            data: vec![0.0; width * height * 3],
        }
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        Image { width, height, data }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(invalid(format!(
                "{} values for a {width}x{height} RGB image",
                data.len()
            )));
        }
        Ok(Image { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Mean of the three channels.
    pub fn luminance(&self) -> Vec<f32> {
        self.data.chunks_exact(3).map(|p| (p[0] + p[1] + p[2]) / 3.0).collect()
    }

    /// Bilinear resize with half-pixel centers.
    pub fn resize(&self, width: usize, height: usize) -> Image {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let mut out = Image::new(width, height);
        let sx = self.width as f32 / width as f32;
        let sy = self.height as f32 / height as f32;
        for y in 0..height {
            let fy = ((y as f32 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f32);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(self.height - 1);
            let wy = fy - y0 as f32;
            for x in 0..width {
                let fx = ((x as f32 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f32);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(self.width - 1);
                let wx = fx - x0 as f32;
                let (a, b, c, d) = (self.pixel(x0, y0), self.pixel(x1, y0), self.pixel(x0, y1), self.pixel(x1, y1));
                let mut p = [0.0; 3];
                for k in 0..3 {
                    let top = a[k] * (1.0 - wx) + b[k] * wx;
                    let bot = c[k] * (1.0 - wx) + d[k] * wx;
                    p[k] = top * (1.0 - wy) + bot * wy;
                }
                out.set_pixel(x, y, p);
            }
        }
        out
    }

    /// Resizes so that the longer side equals `long_side`, keeping the aspect ratio.
    pub fn resize_long_side(&self, long_side: usize) -> Image {
        let (w, h) = scaled_dims(self.width, self.height, long_side);
        self.resize(w, h)
    }

    /// Crops the integer pixel region covering `bbox` (clamped to the image).
    pub fn crop(&self, bbox: &BBox) -> Result<Image> {
        let x0 = bbox.x0.floor().max(0.0) as usize;
        let y0 = bbox.y0.floor().max(0.0) as usize;
        let x1 = (bbox.x1.ceil() as usize).min(self.width);
        let y1 = (bbox.y1.ceil() as usize).min(self.height);
        if x0 >= x1 || y0 >= y1 {
            return Err(invalid(format!("crop {bbox:?} is empty inside a {}x{} image", self.width, self.height)));
        }
        let mut out = Image::new(x1 - x0, y1 - y0);
        for y in y0..y1 {
            for x in x0..x1 {
                out.set_pixel(x - x0, y - y0, self.pixel(x, y));
            }
        }
        Ok(out)
    }
}

/// Dimensions after scaling the longer side to `long_side`.
pub fn scaled_dims(width: usize, height: usize, long_side: usize) -> (usize, usize) {
    let scale = long_side as f64 / width.max(height) as f64;
    let w = ((width as f64 * scale).round() as usize).max(1);
    let h = ((height as f64 * scale).round() as usize).max(1);
    (w, h)
}

/// Normalized cross-correlation of two equally sized signals.
pub fn normalized_cross_correlation(a: &[f32], b: &[f32]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ma = a.iter().map(|&v| v as f64).sum::<f64>() / n;
    let mb = b.iter().map(|&v| v as f64).sum::<f64>() / n;
    let (mut num, mut da, mut db) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64 - ma, y as f64 - mb);
        num += x * y;
        da += x * x;
        db += y * y;
    }
    if da == 0.0 || db == 0.0 {
        return if da == db { 1.0 } else { 0.0 };
    }
    num / (da * db).sqrt()
}
