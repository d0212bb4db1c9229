//! Individual dashboard panels, each `PANEL_W × PANEL_H`.

use super::canvas::{palette_slot, Canvas, AXIS, DIVERGING, GRID, PSD_TRACE, TEXT, TRACE, WHITE};
use super::dashboard::{PANEL_H, PANEL_W};
use super::font::text_width;
use super::spline::{project, SplineInterpolator, TopoGrid};
use super::welch::SpectrumEstimate;
use super::{RenderError, Result};

/// Interior of a panel's plotting frame, in panel pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlotArea {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl PlotArea {
    /// Default frame shared by the time-series, ERP and spectrum panels.
    pub const STANDARD: PlotArea = PlotArea { x: 34, y: 16, w: 212, h: 201 };
    /// Square frame for the topography.
    pub const TOPO: PlotArea = PlotArea { x: 22, y: 20, w: 190, h: 190 };

    fn frame(&self, c: &mut Canvas) {
        c.rect(self.x as i64 - 1, self.y as i64 - 1, self.w as i64 + 2, self.h as i64 + 2, AXIS);
    }

    fn half(&self) -> i64 {
        (self.h as i64 - 1) / 2
    }

    pub fn center_row(&self) -> usize {
        self.y + self.half() as usize
    }
}

fn title(c: &mut Canvas, s: &str) {
    c.text(4, 4, s, TEXT);
}

fn std_dev(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

fn usable_scale(s: f64) -> f64 {
    if s.is_finite() && s > 0.0 {
        s
    } else {
        1.0
    }
}

fn fmt_tick(v: f64) -> String {
    if (v - v.round()).abs() < 1e-9 {
        format!("{}", v.round() as i64)
    } else {
        format!("{v:.1}")
    }
}

/// First `window` seconds of a component activation, y-scaled to ±4 SD of
/// the whole activation, with ticks every 0.5 s.
pub fn render_timeseries_panel(activation: &[f64], sfreq: f64, window: f64) -> Canvas {
    let area = PlotArea::STANDARD;
    let mut c = Canvas::new(PANEL_W, PANEL_H, WHITE);
    let wanted = (window * sfreq).round() as usize;
    let (n, note) = if wanted > activation.len() || wanted == 0 {
        (activation.len(), Some(format!("FULL {:.2} S SHOWN", activation.len() as f64 / sfreq)))
    } else {
        (wanted, None)
    };
    title(&mut c, "TIME SERIES");
    if let Some(note) = &note {
        c.text((PANEL_W - 4 - text_width(note)) as i64, 4, note, AXIS);
    }
    let shown = n as f64 / sfreq;
    let scale = 4.0 * usable_scale(std_dev(activation));
    let (top, bottom) = (area.y as i64, (area.y + area.h - 1) as i64);
    let cy = area.y as i64 + area.half();
    let to_y = |v: f64| -> i64 {
        let y = cy as f64 - v / scale * area.half() as f64;
        (y.round() as i64).clamp(top, bottom)
    };

    // grid and ticks
    let mut t = 0.0;
    while t <= shown + 1e-9 {
        let x = area.x as i64 + ((t / shown.max(1e-12)) * (area.w - 1) as f64).round() as i64;
        c.vline(x, top, bottom, GRID);
        c.vline(x, bottom + 2, bottom + 4, AXIS);
        let label = fmt_tick(t);
        c.text(x - (text_width(&label) / 2) as i64, bottom + 6, &label, TEXT);
        t += 0.5;
    }
    c.hline(area.x as i64, (area.x + area.w - 1) as i64, cy, GRID);
    c.text(2, top, "+4SD", AXIS);
    c.text(2, bottom - 6, "-4SD", AXIS);
    area.frame(&mut c);

    if n > 0 {
        let mut prev: Option<i64> = None;
        for px in 0..area.w {
            let lo = px * n / area.w;
            let hi = ((px + 1) * n / area.w).max(lo + 1).min(n);
            let mut ymin = i64::MAX;
            let mut ymax = i64::MIN;
            for &v in &activation[lo..hi] {
                let y = to_y(v);
                ymin = ymin.min(y);
                ymax = ymax.max(y);
            }
            if let Some(p) = prev {
                ymin = ymin.min(p);
                ymax = ymax.max(p);
            }
            c.vline((area.x + px) as i64, ymin, ymax, TRACE);
            prev = Some(to_y(activation[hi - 1]));
        }
    }
    c
}

/// Epochs stacked top to bottom (epoch 1 first), boxcar-smoothed across
/// `smoothing` neighbouring epochs, coloured on a symmetric ±3 SD scale.
pub fn render_erp_image(epochs: &[&[f64]], smoothing: usize) -> Result<Canvas> {
    let area = PlotArea::STANDARD;
    let n_epochs = epochs.len();
    if n_epochs == 0 {
        return Err(RenderError::Parameter("ERP image needs at least one epoch".into()));
    }
    let spe = epochs[0].len();
    if spe == 0 || epochs.iter().any(|e| e.len() != spe) {
        return Err(RenderError::Parameter("epochs must be non-empty and equally long".into()));
    }
    let mut c = Canvas::new(PANEL_W, PANEL_H, WHITE);
    title(&mut c, "ERP IMAGE");
    if n_epochs == 1 {
        log::warn!("ERP image rendered from a single epoch");
        let note = "SINGLE EPOCH";
        c.text((PANEL_W - 4 - text_width(note)) as i64, 4, note, AXIS);
    }
    let all: Vec<f64> = epochs.iter().flat_map(|e| e.iter().copied()).collect();
    let scale = 3.0 * usable_scale(std_dev(&all));

    let s = smoothing.max(1);
    let back = (s - 1) / 2;
    let fwd = s / 2;
    let smoothed: Vec<Vec<f64>> = (0..n_epochs)
        .map(|e| {
            let lo = e.saturating_sub(back);
            let hi = (e + fwd).min(n_epochs - 1);
            let count = (hi - lo + 1) as f64;
            (0..spe)
                .map(|k| (lo..=hi).map(|j| epochs[j][k]).sum::<f64>() / count)
                .collect()
        })
        .collect();

    for py in 0..area.h {
        let e = py * n_epochs / area.h;
        for px in 0..area.w {
            let k = px * spe / area.w;
            let slot = palette_slot(smoothed[e][k] / scale);
            c.set((area.x + px) as i64, (area.y + py) as i64, DIVERGING[slot]);
        }
    }
    area.frame(&mut c);
    let bottom = (area.y + area.h) as i64;
    c.text(area.x as i64, bottom + 6, "0", TEXT);
    c.text((area.x + area.w) as i64 - 12, bottom + 6, "END", TEXT);
    c.text(2, area.y as i64, "1", TEXT);
    let last = n_epochs.to_string();
    c.text(2, bottom - 7, &last, TEXT);
    Ok(c)
}

/// dB spectrum over `[lo, hi]` Hz.
pub fn render_psd_panel(spec: &SpectrumEstimate, lo: f64, hi: f64) -> Canvas {
    let area = PlotArea::STANDARD;
    let mut c = Canvas::new(PANEL_W, PANEL_H, WHITE);
    title(&mut c, "POWER SPECTRUM (DB)");
    let pts: Vec<(f64, f64)> = spec
        .freqs
        .iter()
        .zip(&spec.psd_db)
        .filter(|(f, _)| **f >= lo && **f <= hi)
        .map(|(f, d)| (*f, *d))
        .collect();
    let (mut dmin, mut dmax) = pts
        .iter()
        .fold((f64::MAX, f64::MIN), |(a, b), (_, d)| (a.min(*d), b.max(*d)));
    if pts.is_empty() {
        dmin = -1.0;
        dmax = 1.0;
    }
    if dmax - dmin < 1.0 {
        let mid = 0.5 * (dmax + dmin);
        dmin = mid - 0.5;
        dmax = mid + 0.5;
    }
    dmin -= 3.0;
    dmax += 3.0;
    let (top, bottom) = (area.y as i64, (area.y + area.h - 1) as i64);
    let to_x = |f: f64| area.x as i64 + ((f - lo) / (hi - lo) * (area.w - 1) as f64).round() as i64;
    let to_y = |d: f64| {
        let y = bottom as f64 - (d - dmin) / (dmax - dmin) * (area.h - 1) as f64;
        (y.round() as i64).clamp(top, bottom)
    };
    let mut f = (lo / 10.0).ceil() * 10.0;
    while f <= hi + 1e-9 {
        let x = to_x(f);
        c.vline(x, top, bottom, GRID);
        let label = fmt_tick(f);
        c.text(x - (text_width(&label) / 2) as i64, bottom + 6, &label, TEXT);
        f += 10.0;
    }
    c.text(2, top, &format!("{}", dmax.round() as i64), TEXT);
    c.text(2, bottom - 6, &format!("{}", dmin.round() as i64), TEXT);
    c.text((area.x + area.w) as i64 - 12, bottom + 14, "HZ", AXIS);
    area.frame(&mut c);
    for pair in pts.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        c.line(to_x(a.0), to_y(a.1), to_x(b.0), to_y(b.1), PSD_TRACE);
    }
    if pts.len() == 1 {
        c.set(to_x(pts[0].0), to_y(pts[0].1), PSD_TRACE);
    }
    c
}

/// Interpolated scalp map of one mixing column, symmetric colour scale,
/// head outline, nose and electrode markers. Units are arbitrary.
pub fn render_topo_panel(interp: &SplineInterpolator, grid: &TopoGrid, weights: &[f64], positions: &[[f64; 3]]) -> Result<Canvas> {
    let area = PlotArea::TOPO;
    if grid.resolution != area.w {
        return Err(RenderError::Parameter(format!(
            "topography grid must be {}x{}, got {}",
            area.w, area.w, grid.resolution
        )));
    }
    let field = interp.field(grid, weights)?;
    let scale = usable_scale(field.max_abs());
    let mut c = Canvas::new(PANEL_W, PANEL_H, WHITE);
    title(&mut c, "TOPOGRAPHY");
    for row in 0..area.h {
        for col in 0..area.w {
            if let Some(v) = field.values[row * area.w + col] {
                c.set((area.x + col) as i64, (area.y + row) as i64, DIVERGING[palette_slot(v / scale)]);
            }
        }
    }
    let r = (area.w / 2) as i64;
    let (cx, cy) = ((area.x + area.w / 2) as i64, (area.y + area.h / 2) as i64);
    c.circle(cx, cy, r, TRACE);
    c.line(cx - 8, area.y as i64 + 1, cx, area.y as i64 - 8, TRACE);
    c.line(cx, area.y as i64 - 8, cx + 8, area.y as i64 + 1, TRACE);
    for p in positions {
        let (x, y) = project(p);
        let (px, py) = grid.to_pixel(x, y);
        let (ex, ey) = ((area.x as f64 + px).round() as i64, (area.y as f64 + py).round() as i64);
        c.fill_rect((ex - 1).max(0) as usize, (ey - 1).max(0) as usize, 2, 2, TRACE);
    }
    // colour bar
    let (bx, by, bh) = ((area.x + area.w + 10) as usize, area.y + 10, area.h - 20);
    for k in 0..bh {
        let t = 1.0 - 2.0 * k as f64 / (bh - 1) as f64;
        c.fill_rect(bx, by + k, 8, 1, DIVERGING[palette_slot(t)]);
    }
    c.rect(bx as i64 - 1, by as i64 - 1, 10, bh as i64 + 2, AXIS);
    c.text(bx as i64 + 1, by as i64 - 9, "+", TEXT);
    c.text(bx as i64 + 1, (by + bh) as i64 + 3, "-", TEXT);
    c.text(bx as i64 - 6, (by + bh) as i64 + 12, "A.U.", AXIS);
    Ok(c)
}
