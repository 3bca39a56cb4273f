//! Minimal raster line plots for experiment reports: axes, gridlines,
//! polyline series, a legend, and an optional horizontal reference line.
//! Text uses an embedded 5×7 pixel font, so rendering is fully
//! deterministic and needs no system font stack.

use image::{Rgb, RgbImage};

pub const WIDTH: u32 = 720;
pub const HEIGHT: u32 = 440;
const MARGIN_LEFT: u32 = 64;
const MARGIN_RIGHT: u32 = 16;
const MARGIN_TOP: u32 = 28;
const MARGIN_BOTTOM: u32 = 40;

const BACKGROUND: Rgb<u8> = Rgb([255, 255, 255]);
const AXIS: Rgb<u8> = Rgb([40, 40, 40]);
const GRID: Rgb<u8> = Rgb([225, 225, 225]);
const TEXT: Rgb<u8> = Rgb([40, 40, 40]);

/// One curve: y value per epoch (x = 1..=len).
pub struct Series {
    pub label: String,
    pub color: [u8; 3],
    pub values: Vec<f64>,
}

pub struct Plot {
    pub title: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Dashed horizontal line, e.g. a reported reference accuracy.
    pub reference: Option<(f64, String)>,
}

impl Plot {
    pub fn render(&self) -> RgbImage {
        let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, BACKGROUND);
        let (x0, y0) = (MARGIN_LEFT, MARGIN_TOP);
        let (x1, y1) = (WIDTH - MARGIN_RIGHT, HEIGHT - MARGIN_BOTTOM);

        let max_epoch = self
            .series
            .iter()
            .map(|s| s.values.len())
            .max()
            .unwrap_or(1)
            .max(1);
        let (lo, hi) = self.y_range();

        let to_px = |epoch: f64, value: f64| -> (i64, i64) {
            let fx = if max_epoch > 1 {
                (epoch - 1.0) / (max_epoch as f64 - 1.0)
            } else {
                0.5
            };
            let fy = (value - lo) / (hi - lo);
            (
                x0 as i64 + (fx * (x1 - x0) as f64).round() as i64,
                y1 as i64 - (fy * (y1 - y0) as f64).round() as i64,
            )
        };

        // Grid and tick labels.
        for tick in 0..=4 {
            let value = lo + (hi - lo) * tick as f64 / 4.0;
            let (_, py) = to_px(1.0, value);
            draw_line(&mut img, x0 as i64, py, x1 as i64, py, GRID);
            draw_text(&mut img, 4, py - 3, &format!("{value:.3}"), TEXT);
        }
        for tick in 0..=4 {
            let epoch = 1.0 + (max_epoch as f64 - 1.0) * tick as f64 / 4.0;
            let (px, _) = to_px(epoch, lo);
            draw_line(&mut img, px, y0 as i64, px, y1 as i64, GRID);
            draw_text(
                &mut img,
                px - 6,
                y1 as i64 + 6,
                &format!("{}", epoch.round() as usize),
                TEXT,
            );
        }

        if let Some((value, label)) = &self.reference {
            if *value >= lo && *value <= hi {
                let (_, py) = to_px(1.0, *value);
                let mut x = x0 as i64;
                while x < x1 as i64 {
                    draw_line(&mut img, x, py, (x + 5).min(x1 as i64), py, AXIS);
                    x += 10;
                }
                draw_text(&mut img, x0 as i64 + 4, py - 10, label, TEXT);
            }
        }

        // Axes on top of the grid.
        draw_line(&mut img, x0 as i64, y0 as i64, x0 as i64, y1 as i64, AXIS);
        draw_line(&mut img, x0 as i64, y1 as i64, x1 as i64, y1 as i64, AXIS);
        draw_text(&mut img, x0 as i64, 8, &self.title, TEXT);
        draw_text(&mut img, 4, y0 as i64 - 14, &self.y_label, TEXT);
        draw_text(&mut img, x1 as i64 - 40, y1 as i64 + 20, "EPOCH", TEXT);

        for series in &self.series {
            let color = Rgb(series.color);
            let mut prev: Option<(i64, i64)> = None;
            for (i, &v) in series.values.iter().enumerate() {
                if !v.is_finite() {
                    prev = None;
                    continue;
                }
                let p = to_px((i + 1) as f64, v.clamp(lo, hi));
                if let Some(q) = prev {
                    draw_line(&mut img, q.0, q.1, p.0, p.1, color);
                }
                prev = Some(p);
            }
        }

        // Legend, top-right inside the plot area.
        for (i, series) in self.series.iter().enumerate() {
            let ly = y0 as i64 + 6 + 12 * i as i64;
            let lx = x1 as i64 - 150;
            for dx in 0..14 {
                for dy in 0..3 {
                    put(&mut img, lx + dx, ly + 2 + dy, Rgb(series.color));
                }
            }
            draw_text(&mut img, lx + 18, ly, &series.label, TEXT);
        }

        img
    }

    fn y_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in self
            .series
            .iter()
            .flat_map(|s| s.values.iter())
            .filter(|v| v.is_finite())
        {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
        if let Some((r, _)) = &self.reference {
            lo = lo.min(*r);
            hi = hi.max(*r);
        }
        if !lo.is_finite() || !hi.is_finite() {
            return (0.0, 1.0);
        }
        let pad = ((hi - lo) * 0.05).max(1e-6);
        (lo - pad, hi + pad)
    }
}

fn put(img: &mut RgbImage, x: i64, y: i64, color: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, color);
    }
}

fn draw_line(img: &mut RgbImage, mut x0: i64, mut y0: i64, x1: i64, y1: i64, color: Rgb<u8>) {
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        put(img, x0, y0, color);
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

/// 5×7 glyphs, one bitmask row per byte (bit 4 = leftmost column).
/// Lowercase input renders with the uppercase shapes.
fn glyph(c: char) -> [u8; 7] {
    match c.to_ascii_uppercase() {
        '0' => [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E],
        '1' => [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E],
        '2' => [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F],
        '3' => [0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E],
        '4' => [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02],
        '5' => [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E],
        '6' => [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E],
        '7' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
        '8' => [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E],
        '9' => [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C],
        'A' => [0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'B' => [0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E],
        'C' => [0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E],
        'D' => [0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C],
        'E' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F],
        'F' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10],
        'G' => [0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F],
        'H' => [0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'I' => [0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E],
        'J' => [0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C],
        'K' => [0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11],
        'L' => [0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F],
        'M' => [0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11],
        'N' => [0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11],
        'O' => [0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'P' => [0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10],
        'Q' => [0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D],
        'R' => [0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11],
        'S' => [0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E],
        'T' => [0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04],
        'U' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'V' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04],
        'W' => [0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A],
        'X' => [0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11],
        'Y' => [0x11, 0x11, 0x0A, 0x04, 0x04, 0x04, 0x04],
        'Z' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F],
        '-' => [0x00, 0x00, 0x00, 0x0E, 0x00, 0x00, 0x00],
        '_' => [0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F],
        '.' => [0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C],
        ',' => [0x00, 0x00, 0x00, 0x00, 0x0C, 0x04, 0x08],
        ':' => [0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00],
        '/' => [0x01, 0x01, 0x02, 0x04, 0x08, 0x10, 0x10],
        '%' => [0x18, 0x19, 0x02, 0x04, 0x08, 0x13, 0x03],
        '(' => [0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02],
        ')' => [0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08],
        '=' => [0x00, 0x00, 0x1F, 0x00, 0x1F, 0x00, 0x00],
        _ => [0x00; 7],
    }
}

fn draw_text(img: &mut RgbImage, x: i64, y: i64, text: &str, color: Rgb<u8>) {
    for (i, c) in text.chars().enumerate() {
        let rows = glyph(c);
        let cx = x + 6 * i as i64;
        for (dy, row) in rows.iter().enumerate() {
            for dx in 0..5 {
                if row & (0x10 >> dx) != 0 {
                    put(img, cx + dx, y + dy as i64, color);
                }
            }
        }
    }
}
