//! Four-panel component dashboards: scalp topography (top-left), activation
//! time series (top-right), ERP image (bottom-left) and power spectrum
//! (bottom-right), composed on a 512×512 RGB canvas.

mod canvas;
mod dashboard;
mod font;
mod panels;
mod spline;
mod welch;

pub use canvas::{palette_index, Canvas, Rgb, DIVERGING, PALETTE_CENTER};
pub use dashboard::{
    compose_dashboard, dashboard_filename, render_all, Dashboard, DashboardRenderer, PanelBox, Panels, PANEL_BOXES,
    RenderParams, DASHBOARD_SIZE, PANEL_H, PANEL_W, TITLE_BAND,
};
pub use panels::{render_erp_image, render_psd_panel, render_timeseries_panel, render_topo_panel, PlotArea};
pub use spline::{
    project, spherical_spline_field, unproject, SplineField, SplineInterpolator, TopoGrid, LEGENDRE_TERMS, SPLINE_LAMBDA,
    SPLINE_ORDER,
};
pub use welch::{welch_psd, SpectrumEstimate, DB_FLOOR};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("composition error: {0}")]
    Composition(String),
    #[error("encoding error: {0}")]
    Encoding(String),
    #[error(transparent)]
    Ica(#[from] crate::ica::IcaError),
}

pub type Result<T> = std::result::Result<T, RenderError>;
