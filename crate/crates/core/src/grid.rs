//! Rectangular grids, sampled fields, second-order finite differences and
//! tensor-product quadrature.
//!
//! Storage is node-major with `x` varying fastest: node `(i, j)` lives at
//! index `j * nx + i`. Every module and the field file format share this
//! order.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned rectangular grid of `nx * ny` nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub x0: f64,
    pub y0: f64,
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
}

impl Grid2D {
    pub fn new(x0: f64, y0: f64, nx: usize, ny: usize, dx: f64, dy: f64) -> Result<Self> {
        if nx < 3 || ny < 3 {
            return Err(Error::InvalidGrid(format!(
                "need at least 3x3 nodes, got {nx}x{ny}"
            )));
        }
        if !(dx.is_finite() && dx > 0.0 && dy.is_finite() && dy > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "spacings must be finite and positive, got dx = {dx}, dy = {dy}"
            )));
        }
        if !(x0.is_finite() && y0.is_finite()) {
            return Err(Error::InvalidGrid("origin must be finite".into()));
        }
        Ok(Self { x0, y0, nx, ny, dx, dy })
    }

    /// Grid covering `[x_min, x_max] x [y_min, y_max]` with the given node counts.
    pub fn from_extent(
        x_min: f64,
        x_max: f64,
        y_min: f64,
        y_max: f64,
        nx: usize,
        ny: usize,
    ) -> Result<Self> {
        if nx < 3 || ny < 3 {
            return Err(Error::InvalidGrid(format!(
                "need at least 3x3 nodes, got {nx}x{ny}"
            )));
        }
        let dx = (x_max - x_min) / (nx - 1) as f64;
        let dy = (y_max - y_min) / (ny - 1) as f64;
        Self::new(x_min, y_min, nx, ny, dx, dy)
    }

    /// Validates a grid that may have been built field-by-field (deserialized).
    pub fn validate(&self) -> Result<()> {
        Self::new(self.x0, self.y0, self.nx, self.ny, self.dx, self.dy).map(|_| ())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn coords(&self, k: usize) -> (usize, usize) {
        (k % self.nx, k / self.nx)
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.dx
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        self.y0 + j as f64 * self.dy
    }

    #[inline]
    pub fn point(&self, k: usize) -> (f64, f64) {
        let (i, j) = self.coords(k);
        (self.x(i), self.y(j))
    }

    pub fn x_max(&self) -> f64 {
        self.x(self.nx - 1)
    }

    pub fn y_max(&self) -> f64 {
        self.y(self.ny - 1)
    }

    /// Characteristic spacing `max(dx, dy)` used by all `C * h^2` tolerances.
    pub fn h(&self) -> f64 {
        self.dx.max(self.dy)
    }

    #[inline]
    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i + 1 == self.nx || j + 1 == self.ny
    }

    /// True when node `(i, j)` is at least `inset` nodes away from every edge.
    #[inline]
    pub fn is_inset(&self, i: usize, j: usize, inset: usize) -> bool {
        i >= inset && j >= inset && i + inset < self.nx && j + inset < self.ny
    }

    /// Boundary node indices in storage order.
    pub fn boundary_indices(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&k| {
                let (i, j) = self.coords(k);
                self.is_boundary(i, j)
            })
            .collect()
    }

    /// Same rectangle with spacing halved (`2n - 1` nodes per axis).
    pub fn refined(&self) -> Self {
        Self {
            nx: 2 * self.nx - 1,
            ny: 2 * self.ny - 1,
            dx: self.dx / 2.0,
            dy: self.dy / 2.0,
            ..*self
        }
    }

    /// Same-rectangle check tolerant to rounding in the spacings.
    pub fn same_as(&self, other: &Grid2D) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()));
        self.nx == other.nx
            && self.ny == other.ny
            && close(self.x0, other.x0)
            && close(self.y0, other.y0)
            && close(self.dx, other.dx)
            && close(self.dy, other.dy)
    }

    pub(crate) fn ensure_same(&self, other: &Grid2D) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// Real samples on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid2D,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            let (i, j) = grid.coords(k);
            return Err(Error::InvalidInput(format!(
                "non-finite value at node ({i}, {j})"
            )));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f(x, y)` at every node.
    ///
    /// Panics if `f` produces a non-finite value.
    pub fn from_fn(grid: Grid2D, f: impl Fn(f64, f64) -> f64) -> Self {
        let values: Vec<f64> = (0..grid.len())
            .map(|k| {
                let (x, y) = grid.point(k);
                f(x, y)
            })
            .collect();
        Self::new(grid, values).expect("sampled function must be finite")
    }

    pub fn constant(grid: Grid2D, c: f64) -> Self {
        Self::from_fn(grid, |_, _| c)
    }

    pub(crate) fn from_raw(grid: Grid2D, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    #[inline]
    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    /// Pointwise map. Panics on non-finite output.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::new(self.grid, self.values.iter().map(|&v| f(v)).collect())
            .expect("mapped field must be finite")
    }

    /// Pointwise map that also sees node coordinates.
    pub fn map_with_coords(&self, f: impl Fn(f64, f64, f64) -> f64) -> Self {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                let (x, y) = self.grid.point(k);
                f(x, y, v)
            })
            .collect();
        Self::new(self.grid, values).expect("mapped field must be finite")
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_with(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.grid.ensure_same(&other.grid)?;
        Self::new(
            self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| s * v)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Max-norm over nodes at least `inset` away from the boundary.
    pub fn max_abs_inset(&self, inset: usize) -> f64 {
        let g = &self.grid;
        let mut m: f64 = 0.0;
        for j in inset..g.ny.saturating_sub(inset) {
            for i in inset..g.nx.saturating_sub(inset) {
                m = m.max(self.at(i, j).abs());
            }
        }
        m
    }

    /// Max-norm over interior nodes (boundary excluded).
    pub fn max_abs_interior(&self) -> f64 {
        self.max_abs_inset(1)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// R^3 samples on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField3 {
    grid: Grid2D,
    values: Vec<Vector3<f64>>,
}

impl VectorField3 {
    pub fn new(grid: Grid2D, values: Vec<Vector3<f64>>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} vectors, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            let (i, j) = grid.coords(k);
            return Err(Error::InvalidInput(format!(
                "non-finite vector at node ({i}, {j})"
            )));
        }
        Ok(Self { grid, values })
    }

    /// Panics if `f` produces a non-finite component.
    pub fn from_fn(grid: Grid2D, f: impl Fn(f64, f64) -> Vector3<f64>) -> Self {
        let values = (0..grid.len())
            .map(|k| {
                let (x, y) = grid.point(k);
                f(x, y)
            })
            .collect();
        Self::new(grid, values).expect("sampled vector field must be finite")
    }

    pub(crate) fn from_raw(grid: Grid2D, values: Vec<Vector3<f64>>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    #[inline]
    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[Vector3<f64>] {
        &self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> Vector3<f64> {
        self.values[self.grid.index(i, j)]
    }

    pub fn component(&self, c: usize) -> ScalarField {
        ScalarField::from_raw(self.grid, self.values.iter().map(|v| v[c]).collect())
    }

    pub fn from_components(x: &ScalarField, y: &ScalarField, z: &ScalarField) -> Result<Self> {
        x.grid.ensure_same(&y.grid)?;
        x.grid.ensure_same(&z.grid)?;
        Self::new(
            x.grid,
            (0..x.values.len())
                .map(|k| Vector3::new(x.values[k], y.values[k], z.values[k]))
                .collect(),
        )
    }

    pub fn map(&self, f: impl Fn(&Vector3<f64>) -> Vector3<f64>) -> Self {
        Self::new(self.grid, self.values.iter().map(f).collect())
            .expect("mapped vector field must be finite")
    }
}

/// Second-order derivative along one axis: central differences inside,
/// second-order one-sided stencils on the edges.
pub fn fd_partial(field: &ScalarField, axis: Axis) -> ScalarField {
    let g = field.grid;
    let (n, h, stride) = match axis {
        Axis::X => (g.nx, g.dx, 1),
        Axis::Y => (g.ny, g.dy, g.nx),
    };
    let f = &field.values;
    let mut out = vec![0.0; f.len()];
    for (k, o) in out.iter_mut().enumerate() {
        let (i, j) = g.coords(k);
        let p = if axis == Axis::X { i } else { j };
        *o = if p == 0 {
            (-3.0 * f[k] + 4.0 * f[k + stride] - f[k + 2 * stride]) / (2.0 * h)
        } else if p == n - 1 {
            (3.0 * f[k] - 4.0 * f[k - stride] + f[k - 2 * stride]) / (2.0 * h)
        } else {
            (f[k + stride] - f[k - stride]) / (2.0 * h)
        };
    }
    ScalarField::from_raw(g, out)
}

/// Second derivative along one axis on every node. Edge nodes use the
/// four-point one-sided stencil (second order) when the axis has at least
/// four nodes.
pub fn fd_second(field: &ScalarField, axis: Axis) -> ScalarField {
    let g = field.grid;
    let (n, h, stride) = match axis {
        Axis::X => (g.nx, g.dx, 1),
        Axis::Y => (g.ny, g.dy, g.nx),
    };
    let h2 = h * h;
    let f = &field.values;
    let mut out = vec![0.0; f.len()];
    for (k, o) in out.iter_mut().enumerate() {
        let (i, j) = g.coords(k);
        let p = if axis == Axis::X { i } else { j };
        *o = if p == 0 {
            if n >= 4 {
                (2.0 * f[k] - 5.0 * f[k + stride] + 4.0 * f[k + 2 * stride]
                    - f[k + 3 * stride])
                    / h2
            } else {
                (f[k] - 2.0 * f[k + stride] + f[k + 2 * stride]) / h2
            }
        } else if p == n - 1 {
            if n >= 4 {
                (2.0 * f[k] - 5.0 * f[k - stride] + 4.0 * f[k - 2 * stride]
                    - f[k - 3 * stride])
                    / h2
            } else {
                (f[k] - 2.0 * f[k - stride] + f[k - 2 * stride]) / h2
            }
        } else {
            (f[k + stride] - 2.0 * f[k] + f[k - stride]) / h2
        };
    }
    ScalarField::from_raw(g, out)
}

/// Mixed derivative `f_xy`; on interior nodes this is the four-point cross stencil.
pub fn fd_mixed(field: &ScalarField) -> ScalarField {
    fd_partial(&fd_partial(field, Axis::X), Axis::Y)
}

/// Five-point Laplacian on interior nodes. Boundary nodes carry 0 and are
/// not meaningful; take norms with [`ScalarField::max_abs_interior`].
pub fn fd_laplacian(field: &ScalarField) -> ScalarField {
    let g = field.grid;
    let f = &field.values;
    let (idx2, idy2) = (1.0 / (g.dx * g.dx), 1.0 / (g.dy * g.dy));
    let mut out = vec![0.0; f.len()];
    for j in 1..g.ny - 1 {
        for i in 1..g.nx - 1 {
            let k = g.index(i, j);
            out[k] = (f[k + 1] - 2.0 * f[k] + f[k - 1]) * idx2
                + (f[k + g.nx] - 2.0 * f[k] + f[k - g.nx]) * idy2;
        }
    }
    ScalarField::from_raw(g, out)
}

pub fn fd_partial_vec(field: &VectorField3, axis: Axis) -> VectorField3 {
    let parts: Vec<ScalarField> = (0..3).map(|c| fd_partial(&field.component(c), axis)).collect();
    VectorField3::from_raw(
        field.grid,
        (0..field.values.len())
            .map(|k| Vector3::new(parts[0].values[k], parts[1].values[k], parts[2].values[k]))
            .collect(),
    )
}

pub fn fd_mixed_vec(field: &VectorField3) -> VectorField3 {
    let parts: Vec<ScalarField> = (0..3).map(|c| fd_mixed(&field.component(c))).collect();
    VectorField3::from_raw(
        field.grid,
        (0..field.values.len())
            .map(|k| Vector3::new(parts[0].values[k], parts[1].values[k], parts[2].values[k]))
            .collect(),
    )
}

/// Trapezoid weight of node `(i, j)`.
#[inline]
pub fn trapezoid_weight(grid: &Grid2D, i: usize, j: usize) -> f64 {
    let wx = if i == 0 || i + 1 == grid.nx { 0.5 } else { 1.0 };
    let wy = if j == 0 || j + 1 == grid.ny { 0.5 } else { 1.0 };
    wx * wy * grid.dx * grid.dy
}

/// Tensor-product trapezoid rule over the grid rectangle. Rows are summed in
/// storage order, so the result is deterministic.
pub fn quadrature(field: &ScalarField) -> f64 {
    let g = &field.grid;
    let mut total = 0.0;
    for j in 0..g.ny {
        let mut row = 0.0;
        for i in 0..g.nx {
            let wx = if i == 0 || i + 1 == g.nx { 0.5 } else { 1.0 };
            row += wx * field.at(i, j);
        }
        let wy = if j == 0 || j + 1 == g.ny { 0.5 } else { 1.0 };
        total += wy * row;
    }
    total * g.dx * g.dy
}

/// Quartic bump `((1 - rho^2)_+)^2`, `rho = |p - c| / r`. It is C^1 with
/// compact support and a closed-form gradient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
}

impl TestFunction {
    pub fn new(cx: f64, cy: f64, r: f64) -> Result<Self> {
        if !(r.is_finite() && r > 0.0 && cx.is_finite() && cy.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "test function needs finite center and positive radius, got r = {r}"
            )));
        }
        Ok(Self { cx, cy, r })
    }

    #[inline]
    pub fn value(&self, x: f64, y: f64) -> f64 {
        let s = 1.0 - ((x - self.cx).powi(2) + (y - self.cy).powi(2)) / (self.r * self.r);
        if s > 0.0 {
            s * s
        } else {
            0.0
        }
    }

    #[inline]
    pub fn gradient(&self, x: f64, y: f64) -> (f64, f64) {
        let r2 = self.r * self.r;
        let s = 1.0 - ((x - self.cx).powi(2) + (y - self.cy).powi(2)) / r2;
        if s > 0.0 {
            let c = -4.0 * s / r2;
            (c * (x - self.cx), c * (y - self.cy))
        } else {
            (0.0, 0.0)
        }
    }

    /// Exact integral over the plane, `pi r^2 / 3`.
    pub fn integral(&self) -> f64 {
        std::f64::consts::PI * self.r * self.r / 3.0
    }

    /// Support disk lies inside the rectangle with at least one cell of margin,
    /// so every boundary node sees `v = 0` and `grad v = 0`.
    pub fn is_interior_to(&self, grid: &Grid2D) -> bool {
        self.cx - self.r >= grid.x0 + grid.dx
            && self.cx + self.r <= grid.x_max() - grid.dx
            && self.cy - self.r >= grid.y0 + grid.dy
            && self.cy + self.r <= grid.y_max() - grid.dy
    }

    pub fn sample(&self, grid: Grid2D) -> ScalarField {
        ScalarField::from_fn(grid, |x, y| self.value(x, y))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn unit(n: usize) -> Grid2D {
        Grid2D::from_extent(0.0, 1.0, 0.0, 1.0, n, n).unwrap()
    }

    #[test]
    fn rejects_small_or_bad_grids() {
        assert!(Grid2D::new(0.0, 0.0, 2, 5, 0.1, 0.1).is_err());
        assert!(Grid2D::new(0.0, 0.0, 5, 5, 0.0, 0.1).is_err());
        assert!(Grid2D::new(0.0, 0.0, 5, 5, 0.1, f64::NAN).is_err());
        assert!(ScalarField::new(unit(4), vec![0.0; 3]).is_err());
        let mut v = vec![0.0; 16];
        v[5] = f64::INFINITY;
        assert!(ScalarField::new(unit(4), v).is_err());
    }

    #[test]
    fn partial_of_linear_is_exact() {
        let g = Grid2D::new(-0.3, 0.7, 9, 7, 0.13, 0.21).unwrap();
        let f = ScalarField::from_fn(g, |x, _| x);
        let fx = fd_partial(&f, Axis::X);
        let fy = fd_partial(&f, Axis::Y);
        for (&a, &b) in fx.values().iter().zip(fy.values()) {
            assert_abs_diff_eq!(a, 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(b, 0.0, epsilon = 1e-12);
        }
        let c = ScalarField::constant(g, 3.5);
        assert_eq!(fd_partial(&c, Axis::X).max_abs(), 0.0);
        assert_eq!(fd_partial(&c, Axis::Y).max_abs(), 0.0);
    }

    #[test]
    fn partial_of_sine() {
        let g = unit(101);
        let f = ScalarField::from_fn(g, |x, _| x.sin());
        let fx = fd_partial(&f, Axis::X);
        let err = fx
            .values()
            .iter()
            .enumerate()
            .map(|(k, v)| (v - g.point(k).0.cos()).abs())
            .fold(0.0, f64::max);
        assert!(err <= 10.0 * g.dx * g.dx, "err = {err}");
    }

    #[test]
    fn laplacian_examples() {
        let g = unit(17);
        let q = ScalarField::from_fn(g, |x, y| x * x + y * y);
        let lap = fd_laplacian(&q);
        for j in 1..g.ny - 1 {
            for i in 1..g.nx - 1 {
                assert_abs_diff_eq!(lap.at(i, j), 4.0, epsilon = 1e-9);
            }
        }
        assert!(fd_laplacian(&ScalarField::from_fn(g, |x, _| x)).max_abs_interior() < 1e-9);

        let mut errs = vec![];
        for n in [17, 33] {
            let g = Grid2D::from_extent(0.0, 1.0, 1.0, 2.0, n, n).unwrap();
            let f = ScalarField::from_fn(g, |_, y| -y.ln());
            let lap = fd_laplacian(&f);
            let err = lap
                .map_with_coords(|_, y, v| v - 1.0 / (y * y))
                .max_abs_interior();
            assert!(err <= 2.0 * g.h() * g.h(), "err = {err}");
            errs.push(err);
        }
        assert!(errs[0] / errs[1] >= 3.5);
    }

    #[test]
    fn richardson_partial_and_second() {
        let mut e1 = vec![];
        let mut e2 = vec![];
        let mut g = unit(21);
        for _ in 0..2 {
            let f = ScalarField::from_fn(g, |x, y| (x + 2.0 * y).sin());
            let d = fd_partial(&f, Axis::Y).map_with_coords(|x, y, v| v - 2.0 * (x + 2.0 * y).cos());
            let s = fd_second(&f, Axis::X).map_with_coords(|x, y, v| v + (x + 2.0 * y).sin());
            e1.push(d.max_abs());
            e2.push(s.max_abs());
            g = g.refined();
        }
        assert!(e1[0] / e1[1] >= 3.5, "{e1:?}");
        assert!(e2[0] / e2[1] >= 3.5, "{e2:?}");
    }

    #[test]
    fn quadrature_examples() {
        assert_abs_diff_eq!(quadrature(&ScalarField::constant(unit(11), 1.0)), 1.0, epsilon = 1e-14);

        let bump = TestFunction::new(0.0, 0.0, 1.0).unwrap();
        let mut errs = vec![];
        for n in [81, 161] {
            let g = Grid2D::from_extent(-1.5, 1.5, -1.5, 1.5, n, n).unwrap();
            let err = (quadrature(&bump.sample(g)) - std::f64::consts::PI / 3.0).abs();
            assert!(err <= g.h() * g.h(), "err = {err}");
            errs.push(err);
        }
        assert!(errs[0] > errs[1]);

        let g = Grid2D::from_extent(-1.0, 1.0, -1.0, 1.0, 41, 41).unwrap();
        let b = TestFunction::new(0.0, 0.0, 0.8).unwrap();
        let odd = ScalarField::from_fn(g, |x, y| x * b.value(x, y));
        assert!(quadrature(&odd).abs() < 1e-15);
    }

    #[test]
    fn quadrature_truncates_to_grid() {
        // Bump centered on the lower-left corner: only a quarter lies inside.
        let g = Grid2D::from_extent(0.0, 2.0, 0.0, 2.0, 201, 201).unwrap();
        let b = TestFunction::new(0.0, 0.0, 1.0).unwrap();
        let q = quadrature(&b.sample(g));
        assert!((q - b.integral() / 4.0).abs() < 1e-3, "q = {q}");
        assert!(!b.is_interior_to(&g));
    }

    #[test]
    fn bump_gradient_matches_finite_difference() {
        let b = TestFunction::new(0.2, -0.1, 0.7).unwrap();
        let eps = 1e-6;
        for &(x, y) in &[(0.3, 0.1), (-0.2, -0.3), (0.8, 0.5), (0.25, -0.1)] {
            let (gx, gy) = b.gradient(x, y);
            let nx = (b.value(x + eps, y) - b.value(x - eps, y)) / (2.0 * eps);
            let ny = (b.value(x, y + eps) - b.value(x, y - eps)) / (2.0 * eps);
            assert_abs_diff_eq!(gx, nx, epsilon = 1e-7);
            assert_abs_diff_eq!(gy, ny, epsilon = 1e-7);
        }
        assert_eq!(b.value(0.2, 0.6), 0.0);
        assert_eq!(b.gradient(0.9, -0.1), (0.0, 0.0));
    }

    proptest! {
        #[test]
        fn fd_partial_is_linear(a in -5.0f64..5.0, b in -5.0f64..5.0, seed in 0u64..1000) {
            let g = Grid2D::from_extent(0.0, 1.0, 0.0, 2.0, 9, 11).unwrap();
            let s = seed as f64;
            let f = ScalarField::from_fn(g, |x, y| (x * (s + 1.0)).sin() + y * y);
            let h = ScalarField::from_fn(g, |x, y| (x * y + s).cos());
            let comb = f.zip_with(&h, |p, q| a * p + b * q).unwrap();
            for axis in [Axis::X, Axis::Y] {
                let lhs = fd_partial(&comb, axis);
                let fx = fd_partial(&f, axis);
                let hx = fd_partial(&h, axis);
                for k in 0..g.len() {
                    let rhs = a * fx.values()[k] + b * hx.values()[k];
                    prop_assert!((lhs.values()[k] - rhs).abs() <= 1e-11 * (1.0 + rhs.abs()));
                }
            }
        }
    }
}
