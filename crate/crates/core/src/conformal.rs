//! Isothermic charts: a catalog of closed-form `K = -1` (and flat) charts, and
//! a least-squares Cauchy-Riemann flattening that builds conformal
//! coordinates for an arbitrary positive-definite metric on the grid.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix2, Vector3};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fundamental_forms::{MetricField, SecondForm};
use crate::grid::{fd_laplacian, fd_partial, Axis, Grid2D, ScalarField, VectorField3};
use crate::linalg::{solve_spd, BandedSpd};

/// Radius parameter of the half-plane pseudosphere of revolution.
pub const PSEUDOSPHERE_A: f64 = 0.5;
/// Radius of the disk whose inscribed square carries the Poincaré patch.
pub const DISK_RADIUS: f64 = 0.7;
/// Default anisotropy/skew threshold for accepting a chart.
pub const CHART_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CatalogName {
    HalfPlanePseudosphere,
    PoincareDiskPatch,
    /// Flat Chebyshev net with constant angle `alpha`.
    FlatConstantAngle(f64),
}

impl FromStr for CatalogName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "half_plane_pseudosphere" => Ok(Self::HalfPlanePseudosphere),
            "poincare_disk_patch" => Ok(Self::PoincareDiskPatch),
            "flat_constant_angle" => Ok(Self::FlatConstantAngle(std::f64::consts::FRAC_PI_3)),
            other => {
                let alpha = other
                    .strip_prefix("flat_constant_angle:")
                    .and_then(|a| a.parse::<f64>().ok())
                    .ok_or_else(|| Error::UnknownChart(other.to_string()))?;
                if !(alpha > 0.0 && alpha < std::f64::consts::PI) {
                    return Err(Error::UnknownChart(other.to_string()));
                }
                Ok(Self::FlatConstantAngle(alpha))
            }
        }
    }
}

impl fmt::Display for CatalogName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::HalfPlanePseudosphere => write!(f, "half_plane_pseudosphere"),
            Self::PoincareDiskPatch => write!(f, "poincare_disk_patch"),
            Self::FlatConstantAngle(a) => write!(f, "flat_constant_angle:{a}"),
        }
    }
}

impl CatalogName {
    /// Source grid with `n x n` nodes on the chart's native domain.
    pub fn grid(&self, n: usize) -> Result<Grid2D> {
        match self {
            Self::HalfPlanePseudosphere => Grid2D::from_extent(0.0, 1.0, 1.0, 2.0, n, n),
            Self::PoincareDiskPatch => {
                let s = DISK_RADIUS / 2f64.sqrt();
                Grid2D::from_extent(-s, s, -s, s, n, n)
            }
            Self::FlatConstantAngle(_) => Grid2D::from_extent(0.0, 1.0, 0.0, 1.0, n, n),
        }
    }

    /// Closed-form conformal factor in isothermic coordinates.
    pub fn factor(&self, x: f64, y: f64) -> f64 {
        match self {
            Self::HalfPlanePseudosphere => 1.0 / y,
            Self::PoincareDiskPatch => 2.0 / (1.0 - x * x - y * y),
            Self::FlatConstantAngle(_) => 1.0,
        }
    }

    /// Gauss curvature of the catalog metric.
    pub fn curvature(&self) -> f64 {
        match self {
            Self::FlatConstantAngle(_) => 0.0,
            _ => -1.0,
        }
    }
}

/// Pseudosphere of revolution whose metric in `(x, y)` is `(dx^2 + dy^2)/y^2`
/// for `y > a`.
pub fn half_plane_surface(a: f64, x: f64, y: f64) -> Vector3<f64> {
    let z = (y / a).acosh() - (y * y - a * a).sqrt() / y;
    Vector3::new(a * (x / a).cos() / y, a * (x / a).sin() / y, z)
}

/// Exact `(l, m, n)` of [`half_plane_surface`] for the normal `f_x x f_y / |.|`.
pub fn half_plane_second_form(a: f64, y: f64) -> (f64, f64, f64) {
    let r = (y * y - a * a).sqrt();
    (-r / (a * y * y), 0.0, a / (y * y * r))
}

#[derive(Debug, Clone, Serialize)]
pub struct ChartDiagnostics {
    /// `max |E'/G' - 1|` over nodes.
    pub anisotropy: f64,
    /// `max |F'| / sqrt(E'G')` over nodes.
    pub skew: f64,
    /// Smallest Jacobian determinant of `(x, y) -> (X, Y)`.
    pub min_jacobian: f64,
    pub threshold: f64,
    pub accepted: bool,
    /// Image length of the pinned edge.
    pub gauge_length: f64,
}

/// Isothermic coordinates `(X, Y)` sampled on the source grid together with
/// the conformal factor `h` of the pushed-forward metric.
#[derive(Debug, Clone)]
pub struct Chart {
    pub x: ScalarField,
    pub y: ScalarField,
    pub h: ScalarField,
    pub diagnostics: ChartDiagnostics,
}

/// Metric expressed in the chart coordinates, per source node.
#[derive(Debug, Clone)]
pub struct Pushforward {
    pub e: ScalarField,
    pub f: ScalarField,
    pub g: ScalarField,
    pub jacobian: ScalarField,
}

/// `G' = J^{-T} G J^{-1}` with `J = d(X, Y)/d(x, y)` from finite differences.
pub fn pushforward_metric(metric: &MetricField, x: &ScalarField, y: &ScalarField) -> Result<Pushforward> {
    let grid = *metric.grid();
    grid.ensure_same(x.grid())?;
    grid.ensure_same(y.grid())?;
    let (xx, xy) = (fd_partial(x, Axis::X), fd_partial(x, Axis::Y));
    let (yx, yy) = (fd_partial(y, Axis::X), fd_partial(y, Axis::Y));
    let n = grid.len();
    let (mut e, mut f, mut g, mut jac) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for k in 0..n {
        let j = Matrix2::new(xx.values()[k], xy.values()[k], yx.values()[k], yy.values()[k]);
        let det = j.determinant();
        jac[k] = det;
        if det <= 0.0 {
            let (i, jj) = grid.coords(k);
            return Err(Error::Degenerate { count: 1, i, j: jj });
        }
        let gs = Matrix2::new(
            metric.e.values()[k],
            metric.f.values()[k],
            metric.f.values()[k],
            metric.g.values()[k],
        );
        let inv = j.try_inverse().ok_or(Error::Degenerate {
            count: 1,
            i: grid.coords(k).0,
            j: grid.coords(k).1,
        })?;
        let p = inv.transpose() * gs * inv;
        e[k] = p[(0, 0)];
        f[k] = 0.5 * (p[(0, 1)] + p[(1, 0)]);
        g[k] = p[(1, 1)];
    }
    Ok(Pushforward {
        e: ScalarField::new(grid, e)?,
        f: ScalarField::new(grid, f)?,
        g: ScalarField::new(grid, g)?,
        jacobian: ScalarField::new(grid, jac)?,
    })
}

impl Chart {
    /// Builds a chart from coordinates, reading `h = sqrt((E' + G')/2)` off the
    /// pushed-forward metric.
    pub fn from_coordinates(
        metric: &MetricField,
        x: ScalarField,
        y: ScalarField,
        threshold: f64,
        gauge_length: f64,
    ) -> Result<Self> {
        let push = pushforward_metric(metric, &x, &y)?;
        let grid = *metric.grid();
        let (mut aniso, mut skew) = (0.0f64, 0.0f64);
        let mut h = vec![0.0; grid.len()];
        for k in 0..grid.len() {
            let (e, f, g) = (push.e.values()[k], push.f.values()[k], push.g.values()[k]);
            aniso = aniso.max((e / g - 1.0).abs());
            skew = skew.max(f.abs() / (e * g).sqrt());
            h[k] = (0.5 * (e + g)).sqrt();
        }
        let diagnostics = ChartDiagnostics {
            anisotropy: aniso,
            skew,
            min_jacobian: push.jacobian.min(),
            threshold,
            accepted: aniso <= threshold && skew <= threshold,
            gauge_length,
        };
        Ok(Self {
            x,
            y,
            h: ScalarField::new(grid, h)?,
            diagnostics,
        })
    }

    pub fn grid(&self) -> &Grid2D {
        self.x.grid()
    }

    pub fn ensure_accepted(&self) -> Result<()> {
        let d = &self.diagnostics;
        if d.accepted {
            Ok(())
        } else {
            Err(Error::ChartRejected {
                anisotropy: d.anisotropy,
                skew: d.skew,
                threshold: d.threshold,
            })
        }
    }

    pub fn points(&self) -> Vec<(f64, f64)> {
        self.x.values().iter().zip(self.y.values()).map(|(a, b)| (*a, *b)).collect()
    }
}

/// A catalog metric with its exact isothermic chart.
#[derive(Debug, Clone)]
pub struct CatalogChart {
    pub name: CatalogName,
    pub metric: MetricField,
    pub chart: Chart,
    /// Exact conformal factor at the source nodes.
    pub h: ScalarField,
    /// `ln h`.
    pub u: ScalarField,
    pub surface: Option<VectorField3>,
    pub second_form: Option<SecondForm>,
}

pub fn catalog_chart(name: &str, n: usize) -> Result<CatalogChart> {
    let name: CatalogName = name.parse()?;
    catalog_chart_on(name, name.grid(n)?)
}

pub fn catalog_chart_on(name: CatalogName, grid: Grid2D) -> Result<CatalogChart> {
    let a = PSEUDOSPHERE_A;
    let h = ScalarField::from_fn(grid, |x, y| name.factor(x, y));
    if let Some(k) = h.values().iter().position(|v| !(*v > 0.0)) {
        let (i, j) = grid.coords(k);
        return Err(Error::NonPositiveFactor { i, j });
    }
    let (metric, x, y, surface, second_form) = match name {
        CatalogName::HalfPlanePseudosphere => {
            if grid.y0 <= a {
                return Err(Error::InvalidInput(format!("pseudosphere needs y > {a}")));
            }
            (
                MetricField::from_fn(grid, |_, y| (1.0 / (y * y), 0.0, 1.0 / (y * y)))?,
                ScalarField::from_fn(grid, |x, _| x),
                ScalarField::from_fn(grid, |_, y| y),
                Some(VectorField3::from_fn(grid, |x, y| half_plane_surface(a, x, y))),
                Some(SecondForm::from_fn(grid, |_, y| half_plane_second_form(a, y))),
            )
        }
        CatalogName::PoincareDiskPatch => (
            MetricField::from_fn(grid, |x, y| {
                let h = name.factor(x, y);
                (h * h, 0.0, h * h)
            })?,
            ScalarField::from_fn(grid, |x, _| x),
            ScalarField::from_fn(grid, |_, y| y),
            None,
            None,
        ),
        CatalogName::FlatConstantAngle(alpha) => (
            MetricField::from_fn(grid, |_, _| (1.0, alpha.cos(), 1.0))?,
            ScalarField::from_fn(grid, |x, y| x + y * alpha.cos()),
            ScalarField::from_fn(grid, |_, y| y * alpha.sin()),
            Some(VectorField3::from_fn(grid, |x, y| {
                Vector3::new(x + y * alpha.cos(), y * alpha.sin(), 0.0)
            })),
            Some(SecondForm::from_fn(grid, |_, _| (0.0, 0.0, 0.0))),
        ),
    };
    let chart = Chart::from_coordinates(&metric, x, y, CHART_THRESHOLD, 0.0)?;
    Ok(CatalogChart {
        name,
        metric,
        chart,
        u: h.map(f64::ln),
        h,
        surface,
        second_form,
    })
}

/// Which second node is pinned in addition to the first corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GaugePin {
    /// Last node of the bottom row goes to `(L, 0)`.
    BottomEdge,
    /// Last node of the left column goes to `(0, L)`.
    LeftEdge,
}

#[derive(Debug, Clone, Copy)]
pub struct FlattenOptions {
    pub threshold: f64,
    pub pin: GaugePin,
}

impl Default for FlattenOptions {
    fn default() -> Self {
        Self {
            threshold: CHART_THRESHOLD,
            pin: GaugePin::BottomEdge,
        }
    }
}

/// Metric length of the pinned edge.
fn edge_length(metric: &MetricField, pin: GaugePin) -> f64 {
    let grid = metric.grid();
    match pin {
        GaugePin::BottomEdge => (0..grid.nx - 1)
            .map(|i| {
                let e = 0.5 * (metric.e.at(i, 0) + metric.e.at(i + 1, 0));
                e.sqrt() * grid.dx
            })
            .sum(),
        GaugePin::LeftEdge => (0..grid.ny - 1)
            .map(|j| {
                let g = 0.5 * (metric.g.at(0, j) + metric.g.at(0, j + 1));
                g.sqrt() * grid.dy
            })
            .sum(),
    }
}

/// Conformal coordinates minimizing the discrete Cauchy-Riemann energy of the
/// metric. Each grid cell is covered twice, once per diagonal split; on every
/// triangle the linear map `d(X, Y) M^{-1}` (with `M^T M` the cell metric)
/// is pushed toward a similarity. The similarity gauge is fixed by pinning
/// the first corner to the origin and one more boundary corner.
pub fn flatten_conformal(metric: &MetricField, opts: &FlattenOptions) -> Result<Chart> {
    let grid = *metric.grid();
    let (nx, ny) = (grid.nx, grid.ny);
    let length = edge_length(metric, opts.pin);
    let second = match opts.pin {
        GaugePin::BottomEdge => (grid.index(nx - 1, 0), (length, 0.0)),
        GaugePin::LeftEdge => (grid.index(0, ny - 1), (0.0, length)),
    };
    let mut pinned: Vec<Option<f64>> = vec![None; 2 * grid.len()];
    pinned[0] = Some(0.0);
    pinned[1] = Some(0.0);
    pinned[2 * second.0] = Some(second.1 .0);
    pinned[2 * second.0 + 1] = Some(second.1 .1);

    let mut a = BandedSpd::zeros(2 * grid.len(), 2 * (nx + 1) + 1);
    let mut rhs = vec![0.0; 2 * grid.len()];
    let splits: [[usize; 3]; 4] = [[0, 1, 2], [0, 2, 3], [0, 1, 3], [1, 2, 3]];
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let corners = [
                grid.index(i, j),
                grid.index(i + 1, j),
                grid.index(i + 1, j + 1),
                grid.index(i, j + 1),
            ];
            let avg = |f: &ScalarField| corners.iter().map(|&k| f.values()[k]).sum::<f64>() / 4.0;
            let (e, f, g) = (avg(&metric.e), avg(&metric.f), avg(&metric.g));
            let d = e * g - f * f;
            if !(e > 0.0 && d > 0.0) {
                return Err(Error::Degenerate { count: 1, i, j });
            }
            let (p, q, s) = (1.0 / e.sqrt(), -f / (e.sqrt() * d.sqrt()), e.sqrt() / d.sqrt());
            for tri in splits {
                let k = [corners[tri[0]], corners[tri[1]], corners[tri[2]]];
                let pts: Vec<(f64, f64)> = k.iter().map(|&kk| grid.point(kk)).collect();
                let dm = Matrix2::new(
                    pts[1].0 - pts[0].0,
                    pts[1].1 - pts[0].1,
                    pts[2].0 - pts[0].0,
                    pts[2].1 - pts[0].1,
                );
                let area = 0.5 * dm.determinant().abs();
                let dinv = dm.try_inverse().ok_or_else(|| Error::InvalidGrid("degenerate cell".into()))?;
                let g1 = dinv.column(0).into_owned();
                let g2 = dinv.column(1).into_owned();
                let grads = [-(g1 + g2), g1, g2];
                let w = 0.5 * d.sqrt() * area;
                let mut r1 = [(0usize, 0.0); 6];
                let mut r2 = [(0usize, 0.0); 6];
                for v in 0..3 {
                    let (gx, gy) = (grads[v][0], grads[v][1]);
                    r1[2 * v] = (2 * k[v], p * gx);
                    r1[2 * v + 1] = (2 * k[v] + 1, -q * gx - s * gy);
                    r2[2 * v] = (2 * k[v], q * gx + s * gy);
                    r2[2 * v + 1] = (2 * k[v] + 1, p * gx);
                }
                for row in [&r1, &r2] {
                    for &(ra, ca) in row.iter() {
                        if pinned[ra].is_some() {
                            continue;
                        }
                        for &(rb, cb) in row.iter() {
                            match pinned[rb] {
                                Some(val) => rhs[ra] -= w * ca * cb * val,
                                None if rb <= ra => a.add(ra, rb, w * ca * cb),
                                None => {}
                            }
                        }
                    }
                }
            }
        }
    }
    for (dof, pin) in pinned.iter().enumerate() {
        if let Some(v) = pin {
            a.add(dof, dof, 1.0);
            rhs[dof] = *v;
        }
    }
    let sol = solve_spd(&a, &rhs)?;
    let x = ScalarField::new(grid, sol.iter().step_by(2).copied().collect())
        .map_err(|_| Error::SolverBreakdown("non-finite flattening".into()))?;
    let y = ScalarField::new(grid, sol.iter().skip(1).step_by(2).copied().collect())
        .map_err(|_| Error::SolverBreakdown("non-finite flattening".into()))?;
    Chart::from_coordinates(metric, x, y, opts.threshold, length)
}

/// Four-point Lagrange weights and their derivatives for continuous index `t`
/// on a line of `n >= 4` nodes.
fn cubic_weights(t: f64, n: usize) -> (usize, [f64; 4], [f64; 4]) {
    let start = (t.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
    let s = t - start as f64;
    let mut w = [0.0; 4];
    let mut dw = [0.0; 4];
    for k in 0..4 {
        let kf = k as f64;
        let mut num = 1.0;
        let mut den = 1.0;
        let mut dnum = 0.0;
        for m in 0..4 {
            if m == k {
                continue;
            }
            let mf = m as f64;
            dnum = dnum * (s - mf) + num;
            num *= s - mf;
            den *= kf - mf;
        }
        w[k] = num / den;
        dw[k] = dnum / den;
    }
    (start, w, dw)
}

/// Bicubic value and gradient of `field` at `(x, y)`.
fn interp(field: &ScalarField, x: f64, y: f64) -> (f64, f64, f64) {
    let g = field.grid();
    let (i0, wx, dwx) = cubic_weights((x - g.x0) / g.dx, g.nx);
    let (j0, wy, dwy) = cubic_weights((y - g.y0) / g.dy, g.ny);
    let (mut v, mut vx, mut vy) = (0.0, 0.0, 0.0);
    for b in 0..4 {
        for a in 0..4 {
            let f = field.at(i0 + a, j0 + b);
            v += wx[a] * wy[b] * f;
            vx += dwx[a] * wy[b] * f;
            vy += wx[a] * dwy[b] * f;
        }
    }
    (v, vx / g.dx, vy / g.dy)
}

/// Boundary nodes in counter-clockwise order.
fn boundary_loop(grid: &Grid2D) -> Vec<usize> {
    let (nx, ny) = (grid.nx, grid.ny);
    let mut out = vec![];
    out.extend((0..nx).map(|i| grid.index(i, 0)));
    out.extend((1..ny).map(|j| grid.index(nx - 1, j)));
    out.extend((0..nx - 1).rev().map(|i| grid.index(i, ny - 1)));
    out.extend((1..ny - 1).rev().map(|j| grid.index(0, j)));
    out
}

fn inside(poly: &[(f64, f64)], p: (f64, f64)) -> bool {
    let mut c = false;
    let n = poly.len();
    for a in 0..n {
        let (xi, yi) = poly[a];
        let (xj, yj) = poly[(a + n - 1) % n];
        if (yi > p.1) != (yj > p.1) && p.0 < (xj - xi) * (p.1 - yi) / (yj - yi) + xi {
            c = !c;
        }
    }
    c
}

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]` inside the chart image, grown
/// from the image centroid and then pulled in by `margin_cells` times the
/// longest boundary segment.
pub fn inscribed_rectangle(chart: &Chart, margin_cells: f64) -> (f64, f64, f64, f64) {
    let grid = chart.grid();
    let pts = chart.points();
    let poly: Vec<(f64, f64)> = boundary_loop(grid).into_iter().map(|k| pts[k]).collect();
    let n = pts.len() as f64;
    let c = pts.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0 / n, acc.1 + p.1 / n));
    let (lo, hi) = poly.iter().fold(
        ((f64::INFINITY, f64::INFINITY), (f64::NEG_INFINITY, f64::NEG_INFINITY)),
        |(lo, hi), p| ((lo.0.min(p.0), lo.1.min(p.1)), (hi.0.max(p.0), hi.1.max(p.1))),
    );
    let step = (hi.0 - lo.0).max(hi.1 - lo.1) / 1000.0;
    let samples = 4 * grid.nx.max(grid.ny);
    let edge_inside = |a: (f64, f64), b: (f64, f64)| {
        (0..=samples).all(|s| {
            let t = s as f64 / samples as f64;
            inside(&poly, (a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1)))
        })
    };
    let mut r = [c.0 - step, c.0 + step, c.1 - step, c.1 + step];
    let mut grew = true;
    while grew {
        grew = false;
        for side in 0..4 {
            let mut t = r;
            match side {
                0 => t[0] -= step,
                1 => t[1] += step,
                2 => t[2] -= step,
                _ => t[3] += step,
            }
            let edge = match side {
                0 => ((t[0], t[2]), (t[0], t[3])),
                1 => ((t[1], t[2]), (t[1], t[3])),
                2 => ((t[0], t[2]), (t[1], t[2])),
                _ => ((t[0], t[3]), (t[1], t[3])),
            };
            let (sa, sb) = match side {
                0 | 1 => ((t[0], t[2]), (t[1], t[2])),
                _ => ((t[0], t[2]), (t[0], t[3])),
            };
            let flank = match side {
                0 | 1 => edge_inside(sa, sb) && edge_inside((t[0], t[3]), (t[1], t[3])),
                _ => edge_inside(sa, sb) && edge_inside((t[1], t[2]), (t[1], t[3])),
            };
            if edge_inside(edge.0, edge.1) && flank {
                r = t;
                grew = true;
            }
        }
    }
    let seg = poly
        .iter()
        .zip(poly.iter().cycle().skip(1))
        .map(|(a, b)| (a.0 - b.0).hypot(a.1 - b.1))
        .fold(0.0, f64::max);
    let m = margin_cells.max(0.5) * seg;
    (r[0] + m, r[1] - m, r[2] + m, r[3] - m)
}

/// Conformal factor resampled onto a uniform grid in chart coordinates.
#[derive(Debug, Clone)]
pub struct UniformFactor {
    pub h: ScalarField,
    /// Source coordinates of each image node.
    pub source_x: ScalarField,
    pub source_y: ScalarField,
}

/// Default distance, in source cells, kept between the resampling rectangle
/// and the image boundary.
pub const RESAMPLE_MARGIN: f64 = 3.0;

/// Resamples `chart.h` onto an `n x n` grid filling the inscribed rectangle
/// of the chart image, kept [`RESAMPLE_MARGIN`] cells off the boundary. The
/// source point of each image node is found by Newton's method on the bicubic
/// interpolant of `(X, Y)`.
pub fn resample_factor(chart: &Chart, n: usize) -> Result<UniformFactor> {
    resample_factor_with_margin(chart, n, RESAMPLE_MARGIN)
}

pub fn resample_factor_with_margin(chart: &Chart, n: usize, margin_cells: f64) -> Result<UniformFactor> {
    let src = *chart.grid();
    if src.nx < 4 || src.ny < 4 {
        return Err(Error::InvalidGrid("resampling needs at least 4 nodes per axis".into()));
    }
    let (x0, x1, y0, y1) = inscribed_rectangle(chart, margin_cells);
    let target = Grid2D::from_extent(x0, x1, y0, y1, n, n)?;
    let pts = chart.points();
    let nearest = |p: (f64, f64)| {
        let k = (0..pts.len())
            .min_by(|&a, &b| {
                let da = (pts[a].0 - p.0).powi(2) + (pts[a].1 - p.1).powi(2);
                let db = (pts[b].0 - p.0).powi(2) + (pts[b].1 - p.1).powi(2);
                da.total_cmp(&db)
            })
            .unwrap_or(0);
        src.point(k)
    };
    let scale = (x1 - x0).abs().max((y1 - y0).abs()).max(1e-300);
    let (mut hs, mut sx, mut sy) = (vec![0.0; target.len()], vec![0.0; target.len()], vec![0.0; target.len()]);
    for j in 0..target.ny {
        let mut guess = nearest((target.x(0), target.y(j)));
        for i in 0..target.nx {
            let p = (target.x(i), target.y(j));
            if i > 0 {
                let q = nearest_local(&pts, &src, guess, p);
                guess = q;
            }
            let mut s = guess;
            let mut best = (f64::INFINITY, s);
            for _ in 0..60 {
                let (xv, xx, xy) = interp(&chart.x, s.0, s.1);
                let (yv, yx, yy) = interp(&chart.y, s.0, s.1);
                let (rx, ry) = (xv - p.0, yv - p.1);
                let r = rx.hypot(ry);
                if r < best.0 {
                    best = (r, s);
                }
                if r <= 1e-14 * scale {
                    break;
                }
                let det = xx * yy - xy * yx;
                if det.abs() < 1e-300 {
                    break;
                }
                let step = 0.5f64.powi((r > best.0) as i32);
                let dx = step * (yy * rx - xy * ry) / det;
                let dy = step * (-yx * rx + xx * ry) / det;
                s = (
                    (s.0 - dx).clamp(src.x0, src.x_max()),
                    (s.1 - dy).clamp(src.y0, src.y_max()),
                );
            }
            if best.0 > 1e-11 * scale {
                return Err(Error::InvalidInput(format!(
                    "could not invert chart at image point ({:.6}, {:.6}): residual {:.3e}",
                    p.0, p.1, best.0
                )));
            }
            let s = best.1;
            let k = target.index(i, j);
            hs[k] = interp(&chart.h, s.0, s.1).0;
            sx[k] = s.0;
            sy[k] = s.1;
            guess = s;
        }
    }
    Ok(UniformFactor {
        h: ScalarField::new(target, hs)?,
        source_x: ScalarField::new(target, sx)?,
        source_y: ScalarField::new(target, sy)?,
    })
}

/// Starting point for Newton: `guess` moved by a Jacobian-free local search
/// over the neighbouring source nodes.
fn nearest_local(pts: &[(f64, f64)], src: &Grid2D, guess: (f64, f64), p: (f64, f64)) -> (f64, f64) {
    let ci = (((guess.0 - src.x0) / src.dx).round() as isize).clamp(0, src.nx as isize - 1);
    let cj = (((guess.1 - src.y0) / src.dy).round() as isize).clamp(0, src.ny as isize - 1);
    let mut best = (f64::INFINITY, guess);
    for dj in -2..=2 {
        for di in -2..=2 {
            let (i, j) = (ci + di, cj + dj);
            if i < 0 || j < 0 || i >= src.nx as isize || j >= src.ny as isize {
                continue;
            }
            let k = src.index(i as usize, j as usize);
            let d = (pts[k].0 - p.0).powi(2) + (pts[k].1 - p.1).powi(2);
            if d < best.0 {
                best = (d, src.point(k));
            }
        }
    }
    best.1
}

/// Scalar `lambda` minimizing `sum (Δ ln h - lambda^2 h^2)^2` over interior
/// nodes, so that `lambda h` best satisfies the Liouville equation.
pub fn liouville_scale_fit(h: &ScalarField) -> f64 {
    let lap = fd_laplacian(&h.map(f64::ln));
    let grid = h.grid();
    let (mut num, mut den) = (0.0, 0.0);
    for j in 1..grid.ny - 1 {
        for i in 1..grid.nx - 1 {
            let k = grid.index(i, j);
            let h2 = h.values()[k].powi(2);
            num += lap.values()[k] * h2;
            den += h2 * h2;
        }
    }
    (num / den).max(0.0).sqrt()
}

/// Discrete Cauchy-Riemann defect of the transition map between two charts
/// on the same source grid: `max |(t11 - t22, t12 + t21)| / |T|` over interior
/// nodes with `T = J_b J_a^{-1}`.
pub fn transition_cr_residual(a: &Chart, b: &Chart) -> Result<f64> {
    let grid = *a.grid();
    grid.ensure_same(b.grid())?;
    let jac = |c: &Chart| {
        [
            fd_partial(&c.x, Axis::X),
            fd_partial(&c.x, Axis::Y),
            fd_partial(&c.y, Axis::X),
            fd_partial(&c.y, Axis::Y),
        ]
    };
    let (ja, jb) = (jac(a), jac(b));
    let mut worst = 0.0f64;
    for j in 1..grid.ny - 1 {
        for i in 1..grid.nx - 1 {
            let k = grid.index(i, j);
            let m = |d: &[ScalarField; 4]| {
                Matrix2::new(d[0].values()[k], d[1].values()[k], d[2].values()[k], d[3].values()[k])
            };
            let ainv = m(&ja).try_inverse().ok_or(Error::Degenerate { count: 1, i, j })?;
            let t = m(&jb) * ainv;
            let defect = (t[(0, 0)] - t[(1, 1)]).hypot(t[(0, 1)] + t[(1, 0)]);
            worst = worst.max(defect / t.norm());
        }
    }
    Ok(worst)
}

/// Similarity `w = a z + b` in complex notation.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Similarity {
    pub scale: f64,
    pub rotation: f64,
    pub translation: (f64, f64),
}

impl Similarity {
    pub fn apply(&self, p: (f64, f64)) -> (f64, f64) {
        let a = Complex64::from_polar(self.scale, self.rotation);
        let w = a * Complex64::new(p.0, p.1) + Complex64::new(self.translation.0, self.translation.1);
        (w.re, w.im)
    }
}

/// Least-squares similarity taking `src` onto `dst`, with the max pointwise
/// residual after alignment.
pub fn procrustes_align(src: &[(f64, f64)], dst: &[(f64, f64)]) -> Result<(Similarity, f64)> {
    if src.len() != dst.len() || src.len() < 2 {
        return Err(Error::InvalidInput("point sets must match and hold at least two points".into()));
    }
    let z: Vec<Complex64> = src.iter().map(|p| Complex64::new(p.0, p.1)).collect();
    let w: Vec<Complex64> = dst.iter().map(|p| Complex64::new(p.0, p.1)).collect();
    let n = z.len() as f64;
    let zm = z.iter().sum::<Complex64>() / n;
    let wm = w.iter().sum::<Complex64>() / n;
    let num: Complex64 = z.iter().zip(&w).map(|(a, b)| (a - zm).conj() * (b - wm)).sum();
    let den: f64 = z.iter().map(|a| (a - zm).norm_sqr()).sum();
    if den == 0.0 {
        return Err(Error::InvalidInput("source points coincide".into()));
    }
    let a = num / den;
    let b = wm - a * zm;
    let resid = z.iter().zip(&w).map(|(zz, ww)| (a * zz + b - ww).norm()).fold(0.0, f64::max);
    Ok((
        Similarity {
            scale: a.norm(),
            rotation: a.arg(),
            translation: (b.re, b.im),
        },
        resid,
    ))
}
