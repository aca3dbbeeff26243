//! Similarity histograms as CSV tables and bar-chart images.

use textseek_core::image::Image;

/// One histogram bin over `[low, high)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Bin {
    pub low: f64,
    pub high: f64,
    pub frequency: f64,
}

pub fn bins(frequencies: &[f64]) -> Vec<Bin> {
    let n = frequencies.len() as f64;
    frequencies
        .iter()
        .enumerate()
        .map(|(i, &f)| Bin {
            low: i as f64 / n,
            high: (i + 1) as f64 / n,
            frequency: f,
        })
        .collect()
}

const BAR: usize = 24;
const GAP: usize = 4;
const PLOT_HEIGHT: usize = 200;
const MARGIN: usize = 10;

/// A bar chart of the frequencies, scaled so the tallest bar fills the plot.
pub fn render(frequencies: &[f64]) -> Image {
    let width = 2 * MARGIN + frequencies.len() * (BAR + GAP) - GAP;
    let height = PLOT_HEIGHT + 2 * MARGIN;
    let mut img = Image::filled(width, height, [1.0, 1.0, 1.0]);
    let top = frequencies.iter().copied().fold(0.0, f64::max);
    let base = MARGIN + PLOT_HEIGHT;
    for (i, &f) in frequencies.iter().enumerate() {
        let h = if top > 0.0 {
            (f / top * PLOT_HEIGHT as f64).round() as usize
        } else {
            0
        };
        let x0 = MARGIN + i * (BAR + GAP);
        for y in base - h..base {
            for x in x0..x0 + BAR {
                img.set_pixel(x, y, [0.2, 0.4, 0.8]);
            }
        }
    }
    for x in MARGIN / 2..width - MARGIN / 2 {
        img.set_pixel(x, base, [0.0, 0.0, 0.0]);
    }
    img
}
