use std::io::Cursor;

use super::font::{glyph, GLYPH_H, GLYPH_W, ADVANCE};
use super::{RenderError, Result};

pub type Rgb = [u8; 3];

pub const WHITE: Rgb = [255, 255, 255];
pub const AXIS: Rgb = [90, 90, 90];
pub const GRID: Rgb = [225, 225, 225];
pub const TEXT: Rgb = [30, 30, 30];
pub const TRACE: Rgb = [20, 20, 20];
pub const PSD_TRACE: Rgb = [25, 70, 150];
pub const TITLE_BG: Rgb = [238, 238, 238];

/// Index of the neutral (zero) colour in [`DIVERGING`].
pub const PALETTE_CENTER: usize = 127;
const PALETTE_LEN: usize = 2 * PALETTE_CENTER + 1;

const NEG: [f64; 3] = [33.0, 102.0, 172.0];
const MID: [f64; 3] = [247.0, 247.0, 247.0];
const POS: [f64; 3] = [178.0, 24.0, 43.0];

const fn lerp_channel(a: f64, b: f64, num: usize, den: usize) -> u8 {
    let v = a + (b - a) * num as f64 / den as f64;
    // round half up; all inputs are non-negative
    (v + 0.5) as u8
}

const fn build_palette() -> [Rgb; PALETTE_LEN] {
    let mut out = [[0u8; 3]; PALETTE_LEN];
    let mut i = 0;
    while i < PALETTE_LEN {
        let (end, num) = if i < PALETTE_CENTER {
            (NEG, PALETTE_CENTER - i)
        } else {
            (POS, i - PALETTE_CENTER)
        };
        let mut c = 0;
        while c < 3 {
            out[i][c] = lerp_channel(MID[c], end[c], num, PALETTE_CENTER);
            c += 1;
        }
        i += 1;
    }
    out
}

/// Blue-white-red diverging palette; entry `CENTER + k` mirrors `CENTER − k`.
pub static DIVERGING: [Rgb; PALETTE_LEN] = build_palette();

/// Palette slot for a value scaled to [-1, 1]: `127 + round(127·t)`.
pub fn palette_slot(t: f64) -> usize {
    let t = if t.is_finite() { t.clamp(-1.0, 1.0) } else { 0.0 };
    (PALETTE_CENTER as f64 + (PALETTE_CENTER as f64 * t).round()) as usize
}

pub fn palette_index(c: Rgb) -> Option<usize> {
    DIVERGING.iter().position(|p| *p == c)
}

/// An 8-bit RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Canvas {
    width: usize,
    height: usize,
    pixels: Vec<Rgb>,
}

impl Canvas {
    pub fn new(width: usize, height: usize, fill: Rgb) -> Self {
        Self { width, height, pixels: vec![fill; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> Rgb {
        self.pixels[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[Rgb] {
        &self.pixels[y * self.width..(y + 1) * self.width]
    }

    pub fn set(&mut self, x: i64, y: i64, c: Rgb) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            self.pixels[y as usize * self.width + x as usize] = c;
        }
    }

    pub fn fill_rect(&mut self, x: usize, y: usize, w: usize, h: usize, c: Rgb) {
        for yy in y..(y + h).min(self.height) {
            for xx in x..(x + w).min(self.width) {
                self.pixels[yy * self.width + xx] = c;
            }
        }
    }

    pub fn hline(&mut self, x0: i64, x1: i64, y: i64, c: Rgb) {
        for x in x0.min(x1)..=x0.max(x1) {
            self.set(x, y, c);
        }
    }

    pub fn vline(&mut self, x: i64, y0: i64, y1: i64, c: Rgb) {
        for y in y0.min(y1)..=y0.max(y1) {
            self.set(x, y, c);
        }
    }

    pub fn rect(&mut self, x: i64, y: i64, w: i64, h: i64, c: Rgb) {
        self.hline(x, x + w - 1, y, c);
        self.hline(x, x + w - 1, y + h - 1, c);
        self.vline(x, y, y + h - 1, c);
        self.vline(x + w - 1, y, y + h - 1, c);
    }

    /// Bresenham line.
    pub fn line(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, c: Rgb) {
        let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
        let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
        let (mut x, mut y, mut err) = (x0, y0, dx + dy);
        loop {
            self.set(x, y, c);
            if x == x1 && y == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x += sx;
            }
            if e2 <= dx {
                err += dx;
                y += sy;
            }
        }
    }

    /// Midpoint circle outline.
    pub fn circle(&mut self, cx: i64, cy: i64, r: i64, c: Rgb) {
        let (mut x, mut y, mut err) = (r, 0i64, 1 - r);
        while x >= y {
            for (px, py) in [(x, y), (y, x), (-y, x), (-x, y), (-x, -y), (-y, -x), (y, -x), (x, -y)] {
                self.set(cx + px, cy + py, c);
            }
            y += 1;
            if err < 0 {
                err += 2 * y + 1;
            } else {
                x -= 1;
                err += 2 * (y - x) + 1;
            }
        }
    }

    pub fn text(&mut self, x: i64, y: i64, s: &str, c: Rgb) {
        for (i, ch) in s.chars().enumerate() {
            let bits = glyph(ch);
            let ox = x + (i * ADVANCE) as i64;
            for (row, b) in bits.iter().enumerate().take(GLYPH_H) {
                for col in 0..GLYPH_W {
                    if b & (1 << (GLYPH_W - 1 - col)) != 0 {
                        self.set(ox + col as i64, y + row as i64, c);
                    }
                }
            }
        }
    }

    pub fn blit(&mut self, src: &Canvas, x: usize, y: usize) {
        for row in 0..src.height.min(self.height.saturating_sub(y)) {
            let w = src.width.min(self.width.saturating_sub(x));
            let dst = (y + row) * self.width + x;
            self.pixels[dst..dst + w].copy_from_slice(&src.pixels[row * src.width..row * src.width + w]);
        }
    }

    /// 8-bit RGB, non-interlaced PNG with fixed encoder settings.
    pub fn to_png(&self) -> Result<Vec<u8>> {
        let mut out = Cursor::new(Vec::new());
        {
            let mut enc = png::Encoder::new(&mut out, self.width as u32, self.height as u32);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            enc.set_compression(png::Compression::Balanced);
            enc.set_filter(png::Filter::Sub);
            let mut w = enc.write_header().map_err(|e| RenderError::Encoding(e.to_string()))?;
            let raw: Vec<u8> = self.pixels.iter().flatten().copied().collect();
            w.write_image_data(&raw).map_err(|e| RenderError::Encoding(e.to_string()))?;
        }
        Ok(out.into_inner())
    }

    pub fn from_png(bytes: &[u8]) -> Result<Self> {
        let dec = png::Decoder::new(Cursor::new(bytes));
        let mut reader = dec.read_info().map_err(|e| RenderError::Encoding(e.to_string()))?;
        let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
        let info = reader.next_frame(&mut buf).map_err(|e| RenderError::Encoding(e.to_string()))?;
        if info.color_type != png::ColorType::Rgb || info.bit_depth != png::BitDepth::Eight {
            return Err(RenderError::Encoding("expected 8-bit RGB".into()));
        }
        let pixels = buf[..info.buffer_size()].chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        Ok(Self { width: info.width as usize, height: info.height as usize, pixels })
    }
}
