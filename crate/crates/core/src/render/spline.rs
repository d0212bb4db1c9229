//! Spherical spline interpolation of electrode weights (order m = 4, 50
//! Legendre terms, λ = 1e-5) evaluated on an azimuthal-equidistant grid of
//! the scalp.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, DVector, LU};

use super::{RenderError, Result};

pub const SPLINE_ORDER: i32 = 4;
pub const LEGENDRE_TERMS: usize = 50;
pub const SPLINE_LAMBDA: f64 = 1e-5;

/// `g(x) = 1/(4π) Σ_{n=1}^{N} (2n+1) / (n(n+1))^m · P_n(x)`.
fn green(x: f64) -> f64 {
    let (mut p_prev, mut p) = (1.0, x);
    let mut sum = 0.0;
    for n in 1..=LEGENDRE_TERMS {
        let nf = n as f64;
        sum += (2.0 * nf + 1.0) / (nf * (nf + 1.0)).powi(SPLINE_ORDER) * p;
        let next = ((2.0 * nf + 1.0) * x * p - nf * p_prev) / (nf + 1.0);
        p_prev = p;
        p = next;
    }
    sum / (4.0 * PI)
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]).clamp(-1.0, 1.0)
}

/// Azimuthal-equidistant projection; the vertex maps to the origin and the
/// equator to radius 1.
pub fn project(p: &[f64; 3]) -> (f64, f64) {
    let theta = p[2].clamp(-1.0, 1.0).acos();
    let phi = p[1].atan2(p[0]);
    let r = theta / FRAC_PI_2;
    (r * phi.cos(), r * phi.sin())
}

pub fn unproject(x: f64, y: f64) -> [f64; 3] {
    let r = (x * x + y * y).sqrt();
    let theta = r * FRAC_PI_2;
    let phi = y.atan2(x);
    [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()]
}

/// Solved spline system for one montage; reusable across weight vectors.
pub struct SplineInterpolator {
    positions: Vec<[f64; 3]>,
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl SplineInterpolator {
    pub fn new(positions: &[[f64; 3]]) -> Result<Self> {
        let n = positions.len();
        if n < 4 {
            return Err(RenderError::Geometry(format!("need at least 4 electrodes, got {n}")));
        }
        if coplanar(positions) {
            return Err(RenderError::Geometry("electrode positions are coplanar".into()));
        }
        let mut sys = DMatrix::zeros(n + 1, n + 1);
        for i in 0..n {
            for j in 0..n {
                sys[(i, j)] = green(dot(&positions[i], &positions[j]));
            }
            sys[(i, i)] += SPLINE_LAMBDA;
            sys[(i, n)] = 1.0;
            sys[(n, i)] = 1.0;
        }
        Ok(Self { positions: positions.to_vec(), lu: sys.lu() })
    }

    pub fn n_electrodes(&self) -> usize {
        self.positions.len()
    }

    /// Spline weights `c` and constant `c0` for the given electrode values.
    pub fn solve(&self, values: &[f64]) -> Result<(Vec<f64>, f64)> {
        let n = self.positions.len();
        if values.len() != n {
            return Err(RenderError::Parameter(format!("{} values for {n} electrodes", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(RenderError::Parameter("electrode values must be finite".into()));
        }
        let mut rhs = DVector::zeros(n + 1);
        rhs.rows_mut(0, n).copy_from_slice(values);
        let sol = self
            .lu
            .solve(&rhs)
            .ok_or_else(|| RenderError::Geometry("singular spline system".into()))?;
        Ok((sol.rows(0, n).iter().copied().collect(), sol[n]))
    }

    pub fn evaluate(&self, values: &[f64], point: &[f64; 3]) -> Result<f64> {
        let (c, c0) = self.solve(values)?;
        Ok(c0 + self.positions.iter().zip(&c).map(|(p, ci)| ci * green(dot(p, point))).sum::<f64>())
    }
}

fn coplanar(p: &[[f64; 3]]) -> bool {
    // affine rank of the point cloud < 3
    let n = p.len() as f64;
    let mean = (0..3).map(|k| p.iter().map(|q| q[k]).sum::<f64>() / n).collect::<Vec<_>>();
    let mut cov = nalgebra::Matrix3::<f64>::zeros();
    for q in p {
        let d = nalgebra::Vector3::new(q[0] - mean[0], q[1] - mean[1], q[2] - mean[2]);
        cov += d * d.transpose();
    }
    let ev = cov.symmetric_eigenvalues();
    let max = ev.max();
    ev.min() <= 1e-12 * max.max(1e-300)
}

/// Square evaluation grid over the projected head disk.
pub struct TopoGrid {
    pub resolution: usize,
    /// Half-width of the grid in projected units; also the head radius.
    pub radius: f64,
    inside: Vec<bool>,
    kernel: DMatrix<f64>,
}

impl TopoGrid {
    /// The head disk reaches 5% beyond the outermost electrode (at least the equator).
    pub fn new(interp: &SplineInterpolator, resolution: usize) -> Self {
        let max_r = interp
            .positions
            .iter()
            .map(|p| {
                let (x, y) = project(p);
                (x * x + y * y).sqrt()
            })
            .fold(1.0f64, f64::max);
        let radius = max_r * 1.05;
        let step = 2.0 * radius / resolution as f64;
        let mut inside = Vec::with_capacity(resolution * resolution);
        let mut points = Vec::new();
        for row in 0..resolution {
            // row 0 is the front of the head
            let y = radius - (row as f64 + 0.5) * step;
            for col in 0..resolution {
                let x = -radius + (col as f64 + 0.5) * step;
                let inn = x * x + y * y <= radius * radius;
                inside.push(inn);
                if inn {
                    points.push(unproject(x, y));
                }
            }
        }
        let n = interp.positions.len();
        let kernel = DMatrix::from_fn(points.len(), n, |g, e| green(dot(&points[g], &interp.positions[e])));
        Self { resolution, radius, inside, kernel }
    }

    pub fn is_inside(&self, row: usize, col: usize) -> bool {
        self.inside[row * self.resolution + col]
    }

    /// Pixel coordinates (col, row) of a projected position.
    pub fn to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        let step = 2.0 * self.radius / self.resolution as f64;
        ((x + self.radius) / step - 0.5, (self.radius - y) / step - 0.5)
    }
}

/// Interpolated field; `None` outside the head disk. Row-major, row 0 = front.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineField {
    pub resolution: usize,
    pub values: Vec<Option<f64>>,
}

impl SplineField {
    pub fn max_abs(&self) -> f64 {
        self.values.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

impl SplineInterpolator {
    pub fn field(&self, grid: &TopoGrid, values: &[f64]) -> Result<SplineField> {
        let (c, c0) = self.solve(values)?;
        let inner = &grid.kernel * DVector::from_vec(c);
        let mut it = inner.iter();
        let values = grid
            .inside
            .iter()
            .map(|&inn| if inn { Some(c0 + it.next().unwrap()) } else { None })
            .collect();
        Ok(SplineField { resolution: grid.resolution, values })
    }
}

/// One-shot convenience: solve and evaluate on a fresh grid.
pub fn spherical_spline_field(positions: &[[f64; 3]], values: &[f64], resolution: usize) -> Result<SplineField> {
    let interp = SplineInterpolator::new(positions)?;
    let grid = TopoGrid::new(&interp, resolution);
    interp.field(&grid, values)
}
