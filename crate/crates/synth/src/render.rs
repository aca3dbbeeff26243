//! Rasterizing words onto procedural backgrounds.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use textseek_core::{BBox, Word};

use crate::error::{Result, SynthError};
use crate::font::{self, ADVANCE, GLYPH_HEIGHT, GLYPH_WIDTH};
use textseek_core::image::Image;

/// Canvas and style parameters for [`render_sample`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    pub min_words: usize,
    pub max_words: usize,
    /// Pixels per font unit; a glyph is `5 x 7` units.
    pub min_scale: f64,
    pub max_scale: f64,
    /// Minimum luminance difference between text and local background.
    pub min_contrast: f64,
    /// Standard deviation of per-pixel Gaussian noise.
    pub noise_std: f64,
    /// Peak-to-peak amplitude of the linear background ramp per channel.
    pub gradient: f64,
    /// Minimum empty space between two words, in pixels.
    pub gap: f64,
    /// Distance kept from the image border, in pixels.
    pub margin: f64,
    pub placement_attempts: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            width: 128,
            height: 128,
            min_words: 1,
            max_words: 3,
            min_scale: 1.6,
            max_scale: 2.6,
            min_contrast: 0.35,
            noise_std: 0.01,
            gradient: 0.15,
            gap: 3.0,
            margin: 2.0,
            placement_attempts: 60,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SynthError::InvalidConfig(m.to_string()));
        if self.width < 64 || self.height < 64 {
            return bad("canvas must be at least 64x64");
        }
        if self.min_words > self.max_words {
            return bad("min_words exceeds max_words");
        }
        if !(self.min_scale > 0.0 && self.min_scale <= self.max_scale) {
            return bad("scales must satisfy 0 < min_scale <= max_scale");
        }
        if !(0.0..=1.0).contains(&self.min_contrast) || self.noise_std < 0.0 || self.gradient < 0.0 || self.gap < 0.0 || self.margin < 0.0 {
            return bad("contrast must lie in [0, 1]; noise, gradient, gap and margin must be non-negative");
        }
        Ok(())
    }
}

/// A word box and its transcript.
#[derive(Debug, Clone, PartialEq)]
pub struct TextInstance {
    pub bbox: BBox,
    pub text: Word,
}

/// Noise-free background: a flat color plus a linear ramp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Background {
    pub base: [f32; 3],
    /// Per-channel change across the full width and height.
    pub ramp_x: [f32; 3],
    pub ramp_y: [f32; 3],
    pub width: usize,
    pub height: usize,
}

impl Background {
    pub fn color_at(&self, x: usize, y: usize) -> [f32; 3] {
        let u = (x as f32 + 0.5) / self.width as f32 - 0.5;
        let v = (y as f32 + 0.5) / self.height as f32 - 0.5;
        let mut c = [0.0; 3];
        for k in 0..3 {
            c[k] = (self.base[k] + self.ramp_x[k] * u + self.ramp_y[k] * v).clamp(0.0, 1.0);
        }
        c
    }
}

/// Everything needed to redraw one placed word.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderTrace {
    pub text: String,
    /// Top-left corner of the first glyph cell, in pixels.
    pub origin: (f64, f64),
    pub scale: f64,
    pub color: [f32; 3],
}

#[derive(Debug, Clone)]
pub struct SceneSample {
    pub image: Image,
    pub instances: Vec<TextInstance>,
    /// One entry per instance, same order.
    pub traces: Vec<RenderTrace>,
    pub background: Background,
}

/// Column range `[first, last]` of lit cells in font units over the whole text.
fn ink_columns(text: &str) -> Option<(usize, usize)> {
    let mut lo = usize::MAX;
    let mut hi = 0;
    for (i, c) in text.chars().enumerate() {
        let g = font::glyph(c)?;
        for col in 0..GLYPH_WIDTH {
            if g.iter().any(|row| row[col]) {
                lo = lo.min(i * ADVANCE + col);
                hi = hi.max(i * ADVANCE + col);
            }
        }
    }
    (lo <= hi).then_some((lo, hi))
}

/// Exact extent of the lit cells of `text` drawn at `origin` and `scale`.
pub fn ink_box(text: &str, origin: (f64, f64), scale: f64) -> Result<BBox> {
    let (lo, hi) = ink_columns(text).ok_or_else(|| unsupported(text))?;
    let bbox = BBox::new(
        origin.0 + lo as f64 * scale,
        origin.1,
        origin.0 + (hi + 1) as f64 * scale,
        origin.1 + GLYPH_HEIGHT as f64 * scale,
    )?;
    Ok(bbox)
}

fn unsupported(text: &str) -> SynthError {
    let c = text.chars().find(|&c| !font::supports(c)).unwrap_or(' ');
    SynthError::UnsupportedChar(c)
}

/// Fraction of each pixel in `[x0, x0 + w) x [y0, y0 + h)` covered by the
/// glyphs of `text`, row-major. Cells are disjoint squares, so per-pixel
/// coverage is the sum of their overlaps.
pub fn coverage(text: &str, origin: (f64, f64), scale: f64, region: (usize, usize, usize, usize)) -> Result<Vec<f32>> {
    let (rx, ry, rw, rh) = region;
    let mut cov = vec![0.0f32; rw * rh];
    for (i, c) in text.chars().enumerate() {
        let g = font::glyph(c).ok_or(SynthError::UnsupportedChar(c))?;
        for (row, line) in g.iter().enumerate() {
            for (col, &lit) in line.iter().enumerate() {
                if !lit {
                    continue;
                }
                let cx0 = origin.0 + (i * ADVANCE + col) as f64 * scale;
                let cy0 = origin.1 + row as f64 * scale;
                let (cx1, cy1) = (cx0 + scale, cy0 + scale);
                let px_lo = (cx0.floor().max(rx as f64)) as usize;
                let px_hi = (cx1.ceil().min((rx + rw) as f64)).max(0.0) as usize;
                let py_lo = (cy0.floor().max(ry as f64)) as usize;
                let py_hi = (cy1.ceil().min((ry + rh) as f64)).max(0.0) as usize;
                for py in py_lo..py_hi {
                    let oy = (cy1.min(py as f64 + 1.0) - cy0.max(py as f64)).max(0.0);
                    for px in px_lo..px_hi {
                        let ox = (cx1.min(px as f64 + 1.0) - cx0.max(px as f64)).max(0.0);
                        cov[(py - ry) * rw + (px - rx)] += (ox * oy) as f32;
                    }
                }
            }
        }
    }
    for v in &mut cov {
        *v = v.min(1.0);
    }
    Ok(cov)
}

fn luminance(c: [f32; 3]) -> f32 {
    (c[0] + c[1] + c[2]) / 3.0
}

/// Draws 1 to `max_words` lexicon words (at least `min_words` attempted).
pub fn render_sample<R: Rng + ?Sized>(lexicon: &[Word], config: &SynthConfig, rng: &mut R) -> Result<SceneSample> {
    if lexicon.is_empty() {
        return Err(SynthError::InvalidConfig("empty lexicon".into()));
    }
    let n = rng.gen_range(config.min_words..=config.max_words);
    let words: Vec<Word> = (0..n).map(|_| lexicon[rng.gen_range(0..lexicon.len())].clone()).collect();
    render_words(&words, config, rng)
}

/// Places and draws exactly the given words, skipping any that do not fit.
pub fn render_words<R: Rng + ?Sized>(words: &[Word], config: &SynthConfig, rng: &mut R) -> Result<SceneSample> {
    config.validate()?;
    let (w, h) = (config.width, config.height);
    let amp = config.gradient as f32;
    let mut ramp = || {
        let mut r = [0.0f32; 3];
        for v in &mut r {
            *v = rng.gen_range(-0.5..=0.5) * amp;
        }
        r
    };
    let (ramp_x, ramp_y) = (ramp(), ramp());
    let base = [rng.gen::<f32>(), rng.gen::<f32>(), rng.gen::<f32>()];
    let background = Background {
        base,
        ramp_x,
        ramp_y,
        width: w,
        height: h,
    };
    let mut image = Image::new(w, h);
    for y in 0..h {
        for x in 0..w {
            image.set_pixel(x, y, background.color_at(x, y));
        }
    }

    let mut instances = Vec::new();
    let mut traces = Vec::new();
    for word in words {
        let text = word.as_str();
        let (lo, hi) = ink_columns(text).ok_or_else(|| unsupported(text))?;
        let ink_units = (hi + 1 - lo) as f64;
        let room_x = w as f64 - 2.0 * config.margin;
        let room_y = h as f64 - 2.0 * config.margin;
        let fit = (room_x / ink_units).min(room_y / GLYPH_HEIGHT as f64);
        if fit < config.min_scale {
            log::debug!("skipping {text:?}: does not fit at the minimum scale");
            continue;
        }
        let mut placed = None;
        for _ in 0..config.placement_attempts {
            let scale = rng.gen_range(config.min_scale..=config.max_scale.min(fit));
            let bw = ink_units * scale;
            let bh = GLYPH_HEIGHT as f64 * scale;
            let x0 = rng.gen_range(config.margin..=w as f64 - config.margin - bw);
            let y0 = rng.gen_range(config.margin..=h as f64 - config.margin - bh);
            let candidate = BBox::new(x0, y0, x0 + bw, y0 + bh)?;
            let clear = instances.iter().all(|other: &TextInstance| {
                let o = &other.bbox;
                candidate.x1 + config.gap <= o.x0
                    || o.x1 + config.gap <= candidate.x0
                    || candidate.y1 + config.gap <= o.y0
                    || o.y1 + config.gap <= candidate.y0
            });
            if clear {
                placed = Some((candidate, scale));
                break;
            }
        }
        let Some((bbox, scale)) = placed else {
            log::debug!("skipping {text:?}: no free spot");
            continue;
        };
        let origin = (bbox.x0 - lo as f64 * scale, bbox.y0);
        let (cx, cy) = bbox.center();
        let bg_lum = luminance(background.color_at(cx as usize, cy as usize));
        let mut color = [0.0f32; 3];
        let mut found = false;
        for _ in 0..100 {
            color = [rng.gen(), rng.gen(), rng.gen()];
            if (luminance(color) - bg_lum).abs() as f64 >= config.min_contrast {
                found = true;
                break;
            }
        }
        if !found {
            color = if bg_lum > 0.5 { [0.0; 3] } else { [1.0; 3] };
        }
        let rx = bbox.x0.floor() as usize;
        let ry = bbox.y0.floor() as usize;
        let rw = (bbox.x1.ceil() as usize).min(w) - rx;
        let rh = (bbox.y1.ceil() as usize).min(h) - ry;
        let cov = coverage(text, origin, scale, (rx, ry, rw, rh))?;
        for yy in 0..rh {
            for xx in 0..rw {
                let a = cov[yy * rw + xx];
                if a == 0.0 {
                    continue;
                }
                let p = image.pixel(rx + xx, ry + yy);
                let mut q = [0.0; 3];
                for k in 0..3 {
                    q[k] = p[k] * (1.0 - a) + color[k] * a;
                }
                image.set_pixel(rx + xx, ry + yy, q);
            }
        }
        instances.push(TextInstance {
            bbox,
            text: word.clone(),
        });
        traces.push(RenderTrace {
            text: text.to_string(),
            origin,
            scale,
            color,
        });
    }

    if config.noise_std > 0.0 {
        let noise = Normal::new(0.0, config.noise_std).expect("finite noise level");
        for v in image.data_mut() {
            *v = (*v + noise.sample(rng) as f32).clamp(0.0, 1.0);
        }
    }
    Ok(SceneSample {
        image,
        instances,
        traces,
        background,
    })
}
