//! Quadrant layout and the per-model renderer.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::canvas::{Canvas, TEXT, TITLE_BG, WHITE};
use super::panels::{render_erp_image, render_psd_panel, render_timeseries_panel, render_topo_panel, PlotArea};
use super::spline::{SplineInterpolator, TopoGrid};
use super::welch::welch_psd;
use super::{RenderError, Result};
use crate::ica::{activations, Activations, IcaModel};
use crate::signal::{samples_per_epoch, Recording};

pub const DASHBOARD_SIZE: usize = 512;
pub const TITLE_BAND: usize = 24;
pub const PANEL_W: usize = DASHBOARD_SIZE / 2;
pub const PANEL_H: usize = (DASHBOARD_SIZE - TITLE_BAND) / 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PanelBox {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl PanelBox {
    fn overlaps(&self, o: &PanelBox) -> bool {
        self.x < o.x + o.w && o.x < self.x + self.w && self.y < o.y + o.h && o.y < self.y + self.h
    }

    fn area(&self) -> usize {
        self.w * self.h
    }
}

/// Topography, time series, ERP image, spectrum.
pub const PANEL_BOXES: [PanelBox; 4] = [
    PanelBox { x: 0, y: TITLE_BAND, w: PANEL_W, h: PANEL_H },
    PanelBox { x: PANEL_W, y: TITLE_BAND, w: PANEL_W, h: PANEL_H },
    PanelBox { x: 0, y: TITLE_BAND + PANEL_H, w: PANEL_W, h: PANEL_H },
    PanelBox { x: PANEL_W, y: TITLE_BAND + PANEL_H, w: PANEL_W, h: PANEL_H },
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderParams {
    pub timeseries_window: f64,
    pub erp_epoch_length: f64,
    pub erp_smoothing: usize,
    pub psd_lo: f64,
    pub psd_hi: f64,
    /// Welch segment length in seconds.
    pub welch_segment: f64,
    pub welch_overlap: f64,
}

impl Default for RenderParams {
    fn default() -> Self {
        Self {
            timeseries_window: 2.5,
            erp_epoch_length: 1.0,
            erp_smoothing: 3,
            psd_lo: 1.0,
            psd_hi: 80.0,
            welch_segment: 2.0,
            welch_overlap: 0.5,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Panels {
    pub topo: Option<Canvas>,
    pub timeseries: Option<Canvas>,
    pub erp: Option<Canvas>,
    pub psd: Option<Canvas>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dashboard {
    pub image: Canvas,
    pub component_index: usize,
    pub dataset_id: String,
    pub panel_boxes: [PanelBox; 4],
    pub render_params: RenderParams,
}

impl Dashboard {
    pub fn filename(&self) -> String {
        dashboard_filename(&self.dataset_id, self.component_index)
    }

    pub fn to_png(&self) -> Result<Vec<u8>> {
        self.image.to_png()
    }

    /// Checks the image size and that the panel boxes tile the area below the
    /// title band exactly.
    pub fn validate(&self) -> Result<()> {
        if self.image.width() != DASHBOARD_SIZE || self.image.height() != DASHBOARD_SIZE {
            return Err(RenderError::Composition(format!(
                "dashboard is {}x{}, expected {DASHBOARD_SIZE}x{DASHBOARD_SIZE}",
                self.image.width(),
                self.image.height()
            )));
        }
        let b = &self.panel_boxes;
        for i in 0..4 {
            if b[i].x + b[i].w > DASHBOARD_SIZE || b[i].y + b[i].h > DASHBOARD_SIZE || b[i].y < TITLE_BAND {
                return Err(RenderError::Composition(format!("panel box {i} leaves the canvas")));
            }
            for j in i + 1..4 {
                if b[i].overlaps(&b[j]) {
                    return Err(RenderError::Composition(format!("panel boxes {i} and {j} overlap")));
                }
            }
        }
        let covered: usize = b.iter().map(PanelBox::area).sum();
        if covered != DASHBOARD_SIZE * (DASHBOARD_SIZE - TITLE_BAND) {
            return Err(RenderError::Composition("panel boxes do not tile the canvas".into()));
        }
        Ok(())
    }
}

pub fn dashboard_filename(dataset_id: &str, component_index: usize) -> String {
    format!("{dataset_id}_comp_{component_index:03}.png")
}

pub fn compose_dashboard(panels: Panels, dataset_id: &str, component_index: usize, params: &RenderParams) -> Result<Dashboard> {
    let named = [
        ("topography", panels.topo),
        ("time series", panels.timeseries),
        ("ERP image", panels.erp),
        ("spectrum", panels.psd),
    ];
    let mut image = Canvas::new(DASHBOARD_SIZE, DASHBOARD_SIZE, WHITE);
    image.fill_rect(0, 0, DASHBOARD_SIZE, TITLE_BAND, TITLE_BG);
    let title = format!("{dataset_id}  IC {component_index:03}");
    image.text(8, ((TITLE_BAND - 7) / 2) as i64, &title, TEXT);
    for ((name, panel), b) in named.into_iter().zip(PANEL_BOXES) {
        let panel = panel.ok_or_else(|| RenderError::Composition(format!("{name} panel is missing")))?;
        if panel.width() != b.w || panel.height() != b.h {
            return Err(RenderError::Composition(format!(
                "{name} panel is {}x{}, expected {}x{}",
                panel.width(),
                panel.height(),
                b.w,
                b.h
            )));
        }
        image.blit(&panel, b.x, b.y);
    }
    let d = Dashboard {
        image,
        component_index,
        dataset_id: dataset_id.to_string(),
        panel_boxes: PANEL_BOXES,
        render_params: params.clone(),
    };
    d.validate()?;
    Ok(d)
}

/// Splits a trace into consecutive epochs; a trace shorter than one epoch
/// becomes a single epoch.
fn epoch_rows(x: &[f64], epoch_length: f64, sfreq: f64) -> Vec<&[f64]> {
    let spe = samples_per_epoch(epoch_length, sfreq).max(1);
    if x.len() < spe {
        return vec![x];
    }
    x.chunks_exact(spe).collect()
}

/// Shared state for rendering every component of one model.
pub struct DashboardRenderer {
    params: RenderParams,
    acts: Activations,
    mixing: nalgebra::DMatrix<f64>,
    positions: Vec<[f64; 3]>,
    interp: SplineInterpolator,
    grid: TopoGrid,
}

impl DashboardRenderer {
    pub fn new(model: &IcaModel, rec: &Recording, params: RenderParams) -> Result<Self> {
        let acts = activations(model, rec)?;
        let positions = rec.montage().positions().to_vec();
        let interp = SplineInterpolator::new(&positions)?;
        let grid = TopoGrid::new(&interp, PlotArea::TOPO.w);
        Ok(Self { params, acts, mixing: model.mixing(), positions, interp, grid })
    }

    pub fn n_components(&self) -> usize {
        self.acts.n_components()
    }

    pub fn activations(&self) -> &Activations {
        &self.acts
    }

    pub fn panels(&self, index: usize) -> Result<Panels> {
        if index >= self.n_components() {
            return Err(RenderError::Parameter(format!(
                "component {index} out of range ({} components)",
                self.n_components()
            )));
        }
        let p = &self.params;
        let sfreq = self.acts.sfreq;
        let x = self.acts.row(index);
        let weights: Vec<f64> = self.mixing.column(index).iter().copied().collect();
        let topo = render_topo_panel(&self.interp, &self.grid, &weights, &self.positions)?;
        let timeseries = render_timeseries_panel(x, sfreq, p.timeseries_window);
        let erp = render_erp_image(&epoch_rows(x, p.erp_epoch_length, sfreq), p.erp_smoothing)?;
        let seg = ((p.welch_segment * sfreq).round() as usize).clamp(2, x.len().max(2));
        let spec = welch_psd(x, sfreq, seg, p.welch_overlap)?;
        let hi = p.psd_hi.min(sfreq / 2.0);
        let psd = render_psd_panel(&spec, p.psd_lo, hi);
        Ok(Panels { topo: Some(topo), timeseries: Some(timeseries), erp: Some(erp), psd: Some(psd) })
    }

    pub fn render(&self, index: usize, dataset_id: &str) -> Result<Dashboard> {
        compose_dashboard(self.panels(index)?, dataset_id, index, &self.params)
    }
}

/// Renders every component in parallel; output order follows component index.
pub fn render_all(model: &IcaModel, rec: &Recording, dataset_id: &str, params: RenderParams) -> Result<Vec<Dashboard>> {
    let r = DashboardRenderer::new(model, rec, params)?;
    (0..r.n_components())
        .into_par_iter()
        .map(|i| r.render(i, dataset_id))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blank() -> Canvas {
        Canvas::new(PANEL_W, PANEL_H, WHITE)
    }

    fn full() -> Panels {
        Panels { topo: Some(blank()), timeseries: Some(blank()), erp: Some(blank()), psd: Some(blank()) }
    }

    #[test]
    fn filename_padding() {
        assert_eq!(dashboard_filename("sub01", 7), "sub01_comp_007.png");
        assert_eq!(dashboard_filename("s", 1234), "s_comp_1234.png");
    }

    #[test]
    fn layout_is_512_and_tiles() {
        let d = compose_dashboard(full(), "sub01", 0, &RenderParams::default()).unwrap();
        assert_eq!((d.image.width(), d.image.height()), (512, 512));
        d.validate().unwrap();
    }

    #[test]
    fn missing_panel() {
        let mut p = full();
        p.erp = None;
        let err = compose_dashboard(p, "x", 0, &RenderParams::default()).unwrap_err();
        assert!(matches!(err, RenderError::Composition(_)));
    }

    #[test]
    fn wrong_panel_size() {
        let mut p = full();
        p.psd = Some(Canvas::new(10, 10, WHITE));
        assert!(compose_dashboard(p, "x", 0, &RenderParams::default()).is_err());
    }

    #[test]
    fn short_trace_is_one_epoch() {
        let x = vec![0.0; 100];
        assert_eq!(epoch_rows(&x, 1.0, 250.0).len(), 1);
        assert_eq!(epoch_rows(&vec![0.0; 1000], 1.0, 250.0).len(), 4);
    }
}
