//! Pseudospherical surfaces from sine-Gordon angle fields.
//!
//! In asymptotic Chebyshev coordinates the metric is
//! `dx^2 + 2 cos(theta) dx dy + dy^2` with `l = n = 0` and `m = sin(theta)`.
//! The frame `W = (f_x, f_y, N)` then obeys `W_x = W A`, `W_y = W B` with
//! `A`, `B` depending only on `theta` and its first derivatives, and the
//! system is integrable exactly when `theta_xy = sin(theta)`.

use nalgebra::{Matrix3, Matrix3x4, Matrix4, Vector3};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fundamental_forms::FrameField;
use crate::grid::{fd_mixed, fd_mixed_vec, fd_partial, fd_partial_vec, Axis, Grid2D, ScalarField, VectorField3};
use crate::lines::{interp_half, rk4_step, Stage};

/// Nodes with `sin(theta)` below this are rejected.
pub const SINGULAR_SIN: f64 = 1e-6;

/// Coordinate angle between `f_x` and `f_y`, strictly inside `(0, pi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleField {
    theta: ScalarField,
}

impl AngleField {
    pub fn new(theta: ScalarField) -> Result<Self> {
        if let Some(k) = theta
            .values()
            .iter()
            .position(|&t| !(t > 0.0 && t < std::f64::consts::PI))
        {
            let (i, j) = theta.grid().coords(k);
            return Err(Error::InvalidInput(format!(
                "angle {} at node ({i}, {j}) is outside (0, pi)",
                theta.values()[k]
            )));
        }
        Ok(Self { theta })
    }

    pub fn from_fn(grid: Grid2D, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        Self::new(ScalarField::from_fn(grid, f))
    }

    /// `theta = 4 arctan(exp(x + y))`, a sine-Gordon solution.
    pub fn one_soliton(grid: Grid2D) -> Result<Self> {
        Self::from_fn(grid, one_soliton_angle)
    }

    pub fn field(&self) -> &ScalarField {
        &self.theta
    }

    pub fn grid(&self) -> &Grid2D {
        self.theta.grid()
    }

    pub(crate) fn check_singular(&self) -> Result<()> {
        let g = self.grid();
        for (k, &t) in self.theta.values().iter().enumerate() {
            let s = t.sin();
            if s < SINGULAR_SIN {
                let (i, j) = g.coords(k);
                return Err(Error::SingularAngle { i, j, sin: s });
            }
        }
        Ok(())
    }
}

pub fn one_soliton_angle(x: f64, y: f64) -> f64 {
    4.0 * (x + y).exp().atan()
}

/// Default one-soliton patch: `[-1, -0.25]^2`, so `x + y` spans `[-2, -0.5]`.
pub fn one_soliton_grid(n: usize) -> Result<Grid2D> {
    Grid2D::from_extent(-1.0, -0.25, -1.0, -0.25, n, n)
}

/// Surface in asymptotic Chebyshev coordinates with its unit normal.
#[derive(Debug, Clone)]
pub struct ChebyshevSurface {
    pub f: VectorField3,
    pub normal: VectorField3,
    pub theta: AngleField,
    /// Max mismatch between the x-then-y and y-then-x sweeps, when the
    /// surface came out of [`integrate_frame`].
    pub path_independence: Option<f64>,
}

impl ChebyshevSurface {
    pub fn new(f: VectorField3, normal: VectorField3, theta: AngleField) -> Result<Self> {
        f.grid().ensure_same(normal.grid())?;
        f.grid().ensure_same(theta.grid())?;
        Ok(Self {
            f,
            normal,
            theta,
            path_independence: None,
        })
    }

    pub fn grid(&self) -> &Grid2D {
        self.f.grid()
    }
}

/// `theta_xy - sin(theta)` on interior nodes; boundary nodes carry 0.
pub fn sine_gordon_residual(theta: &AngleField) -> ScalarField {
    let t = theta.field();
    let txy = fd_mixed(t);
    let g = *t.grid();
    let values = (0..g.len())
        .map(|k| {
            let (i, j) = g.coords(k);
            if g.is_boundary(i, j) {
                0.0
            } else {
                txy.values()[k] - t.values()[k].sin()
            }
        })
        .collect();
    ScalarField::from_raw(g, values)
}

/// Connection matrices at a point from `theta`, `theta_x`, `theta_y`.
pub fn connection_at(theta: f64, tx: f64, ty: f64) -> (Matrix3<f64>, Matrix3<f64>) {
    let (s, c) = theta.sin_cos();
    #[rustfmt::skip]
    let a = Matrix3::new(
        tx * c / s, 0.0, c / s,
        -tx / s,    0.0, -1.0 / s,
        0.0,        s,   0.0,
    );
    #[rustfmt::skip]
    let b = Matrix3::new(
        0.0, -ty / s,    -1.0 / s,
        0.0, ty * c / s, c / s,
        s,   0.0,        0.0,
    );
    (a, b)
}

/// `A_che` and `B_che` per node, with `theta_x`, `theta_y` by finite differences.
pub fn chebyshev_connection(theta: &AngleField) -> Result<(FrameField, FrameField)> {
    theta.check_singular()?;
    let g = *theta.grid();
    let tx = fd_partial(theta.field(), Axis::X);
    let ty = fd_partial(theta.field(), Axis::Y);
    let (a, b): (Vec<_>, Vec<_>) = (0..g.len())
        .map(|k| connection_at(theta.field().values()[k], tx.values()[k], ty.values()[k]))
        .unzip();
    Ok((FrameField::new(g, a)?, FrameField::new(g, b)?))
}

/// Reference Chebyshev frame at angle `theta`: `f_x = e1`,
/// `f_y = (cos, sin, 0)`, `N = e3`.
pub fn chebyshev_frame(theta: f64) -> Matrix3<f64> {
    let (s, c) = theta.sin_cos();
    Matrix3::new(1.0, c, 0.0, 0.0, s, 0.0, 0.0, 0.0, 1.0)
}

/// Nearest frame with unit `f_x`, `f_y` at angle `theta` and unit normal:
/// the rotation part of `W * W_ref^-1` applied to the reference frame.
fn reorthonormalize(w: &Matrix3<f64>, theta: f64) -> Matrix3<f64> {
    let reference = chebyshev_frame(theta);
    let r = w * reference.try_inverse().expect("reference frame is invertible");
    let svd = r.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut rot = u * v_t;
    if rot.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        rot = u * v_t;
    }
    rot * reference
}

#[derive(Debug, Clone, Copy)]
pub struct FrameIntegrationOptions {
    /// Reject angle fields whose sine-Gordon residual (interior sup-norm)
    /// exceeds this. `None` skips the check.
    pub compatibility_threshold: Option<f64>,
    /// Re-orthonormalize the frame every this many steps along a line (0 = never).
    pub reorthonormalize_every: usize,
    /// Fail when the two sweep orders disagree by more than `factor * h^2`.
    /// `None` only reports the mismatch.
    pub path_tolerance_factor: Option<f64>,
}

impl Default for FrameIntegrationOptions {
    fn default() -> Self {
        Self {
            compatibility_threshold: Some(1e-3),
            reorthonormalize_every: 16,
            path_tolerance_factor: Some(100.0),
        }
    }
}

struct FrameCoefficients<'a> {
    grid: Grid2D,
    theta: &'a [f64],
    tx: &'a [f64],
    ty: &'a [f64],
}

impl FrameCoefficients<'_> {
    /// Generator for the `[W | f]` state along x or y at a (possibly half) node.
    fn generator(&self, axis: Axis, i: usize, j: usize, step_sign: f64, stage: Stage) -> Matrix4<f64> {
        let g = &self.grid;
        let (t, tx, ty) = match stage {
            Stage::Start => {
                let k = g.index(i, j);
                (self.theta[k], self.tx[k], self.ty[k])
            }
            Stage::End | Stage::Mid => {
                let (i1, j1) = match (axis, step_sign > 0.0) {
                    (Axis::X, true) => (i + 1, j),
                    (Axis::X, false) => (i - 1, j),
                    (Axis::Y, true) => (i, j + 1),
                    (Axis::Y, false) => (i, j - 1),
                };
                if stage == Stage::End {
                    let k = g.index(i1, j1);
                    (self.theta[k], self.tx[k], self.ty[k])
                } else {
                    let (lo, n) = match axis {
                        Axis::X => (i.min(i1), g.nx),
                        Axis::Y => (j.min(j1), g.ny),
                    };
                    let at = |p: usize| match axis {
                        Axis::X => g.index(p, j),
                        Axis::Y => g.index(i, p),
                    };
                    let v = interp_half(
                        |p| Vector3::new(self.theta[at(p)], self.tx[at(p)], self.ty[at(p)]),
                        lo,
                        n,
                    );
                    (v[0], v[1], v[2])
                }
            }
        };
        let (a, b) = connection_at(t, tx, ty);
        let (m, col) = match axis {
            Axis::X => (a, 0),
            Axis::Y => (b, 1),
        };
        let mut gen = Matrix4::zeros();
        gen.fixed_view_mut::<3, 3>(0, 0).copy_from(&m);
        gen[(col, 3)] = 1.0;
        gen
    }
}

type State = Matrix3x4<f64>;

fn state_frame(s: &State) -> Matrix3<f64> {
    s.fixed_view::<3, 3>(0, 0).into_owned()
}

fn set_frame(s: &mut State, w: &Matrix3<f64>) {
    s.fixed_view_mut::<3, 3>(0, 0).copy_from(w);
}

/// Walks one grid line from `(i0, j0)` to the node `count` steps away in the
/// direction `sign`, writing each visited state into `out`.
#[allow(clippy::too_many_arguments)]
fn sweep_line(
    coeffs: &FrameCoefficients,
    axis: Axis,
    i0: usize,
    j0: usize,
    sign: isize,
    count: usize,
    start: State,
    every: usize,
    out: &mut [State],
) {
    let g = coeffs.grid;
    let h = match axis {
        Axis::X => g.dx,
        Axis::Y => g.dy,
    } * sign as f64;
    let (mut i, mut j) = (i0, j0);
    let mut state = start;
    out[g.index(i, j)] = state;
    for step in 1..=count {
        state = rk4_step(&state, h, |stage, s| {
            s * coeffs.generator(axis, i, j, h, stage)
        });
        match axis {
            Axis::X => i = (i as isize + sign) as usize,
            Axis::Y => j = (j as isize + sign) as usize,
        }
        if every > 0 && step % every == 0 {
            let w = reorthonormalize(&state_frame(&state), coeffs.theta[g.index(i, j)]);
            set_frame(&mut state, &w);
        }
        out[g.index(i, j)] = state;
    }
}

fn sweep(coeffs: &FrameCoefficients, first: Axis, seed: State, every: usize) -> Vec<State> {
    let g = coeffs.grid;
    let mut out = vec![State::zeros(); g.len()];
    match first {
        Axis::X => {
            sweep_line(coeffs, Axis::X, 0, 0, 1, g.nx - 1, seed, every, &mut out);
            for i in 0..g.nx {
                let s = out[g.index(i, 0)];
                sweep_line(coeffs, Axis::Y, i, 0, 1, g.ny - 1, s, every, &mut out);
            }
        }
        Axis::Y => {
            sweep_line(coeffs, Axis::Y, 0, 0, 1, g.ny - 1, seed, every, &mut out);
            for j in 0..g.ny {
                let s = out[g.index(0, j)];
                sweep_line(coeffs, Axis::X, 0, j, 1, g.nx - 1, s, every, &mut out);
            }
        }
    }
    out
}

/// Integrates `W_x = W A_che`, `W_y = W B_che` (and `f_x`, `f_y` from the
/// first two columns) from node `(0, 0)`.
///
/// `w0` must be a Chebyshev frame for `theta(0, 0)`: unit `f_x`, `f_y` with
/// `<f_x, f_y> = cos(theta)` and `N = f_x x f_y / sin(theta)`.
pub fn integrate_frame(
    theta: &AngleField,
    w0: &Matrix3<f64>,
    f0: &Vector3<f64>,
    opts: &FrameIntegrationOptions,
) -> Result<ChebyshevSurface> {
    theta.check_singular()?;
    let g = *theta.grid();
    if let Some(threshold) = opts.compatibility_threshold {
        let residual = sine_gordon_residual(theta).max_abs_interior();
        if residual > threshold {
            return Err(Error::Incompatible {
                residual,
                threshold,
            });
        }
    }
    let t00 = theta.field().values()[0];
    let (c1, c2, c3) = (w0.column(0), w0.column(1), w0.column(2));
    let tol = 1e-8;
    let ok = (c1.norm() - 1.0).abs() < tol
        && (c2.norm() - 1.0).abs() < tol
        && (c1.dot(&c2) - t00.cos()).abs() < tol
        && (c1.cross(&c2) / t00.sin() - c3).amax() < tol;
    if !ok || !f0.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidInput(
            "initial frame is not a Chebyshev frame for theta at the seed node".into(),
        ));
    }

    let tx = fd_partial(theta.field(), Axis::X);
    let ty = fd_partial(theta.field(), Axis::Y);
    let coeffs = FrameCoefficients {
        grid: g,
        theta: theta.field().values(),
        tx: tx.values(),
        ty: ty.values(),
    };
    let mut seed = State::zeros();
    set_frame(&mut seed, w0);
    seed.set_column(3, f0);

    let xy = sweep(&coeffs, Axis::X, seed, opts.reorthonormalize_every);
    let yx = sweep(&coeffs, Axis::Y, seed, opts.reorthonormalize_every);
    let residual = xy
        .iter()
        .zip(&yx)
        .map(|(a, b)| (a - b).amax())
        .fold(0.0, f64::max);
    if let Some(factor) = opts.path_tolerance_factor {
        let tolerance = factor * g.h().powi(2);
        if residual > tolerance {
            return Err(Error::PathDependent {
                residual,
                tolerance,
            });
        }
    }
    let f = VectorField3::new(g, xy.iter().map(|s| s.column(3).into_owned()).collect())?;
    let normal = VectorField3::new(g, xy.iter().map(|s| s.column(2).into_owned()).collect())?;
    Ok(ChebyshevSurface {
        f,
        normal,
        theta: theta.clone(),
        path_independence: Some(residual),
    })
}

/// Max-norm residuals of the asymptotic Chebyshev hypothesis set, interior nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorollaryReport {
    /// `N_xy - cos(theta) N`
    pub normal_mixed: f64,
    /// `f_x - N x N_x`
    pub fx_cross: f64,
    /// `f_y + N x N_y`
    pub fy_cross: f64,
    /// `|f_x| - 1`
    pub fx_unit: f64,
    /// `|f_y| - 1`
    pub fy_unit: f64,
    /// `<f_x, f_y> - cos(theta)`
    pub angle: f64,
}

impl CorollaryReport {
    pub fn max(&self) -> f64 {
        [
            self.normal_mixed,
            self.fx_cross,
            self.fy_cross,
            self.fx_unit,
            self.fy_unit,
            self.angle,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

pub fn corollary_conditions(surface: &ChebyshevSurface) -> CorollaryReport {
    let g = *surface.grid();
    let fx = fd_partial_vec(&surface.f, Axis::X);
    let fy = fd_partial_vec(&surface.f, Axis::Y);
    let nx = fd_partial_vec(&surface.normal, Axis::X);
    let ny = fd_partial_vec(&surface.normal, Axis::Y);
    let nxy = fd_mixed_vec(&surface.normal);
    let mut r = CorollaryReport {
        normal_mixed: 0.0,
        fx_cross: 0.0,
        fy_cross: 0.0,
        fx_unit: 0.0,
        fy_unit: 0.0,
        angle: 0.0,
    };
    for j in 1..g.ny - 1 {
        for i in 1..g.nx - 1 {
            let k = g.index(i, j);
            let t = surface.theta.field().values()[k];
            let n = surface.normal.values()[k];
            let (a, b) = (fx.values()[k], fy.values()[k]);
            r.normal_mixed = r.normal_mixed.max((nxy.values()[k] - t.cos() * n).norm());
            r.fx_cross = r.fx_cross.max((a - n.cross(&nx.values()[k])).norm());
            r.fy_cross = r.fy_cross.max((b + n.cross(&ny.values()[k])).norm());
            r.fx_unit = r.fx_unit.max((a.norm() - 1.0).abs());
            r.fy_unit = r.fy_unit.max((b.norm() - 1.0).abs());
            r.angle = r.angle.max((a.dot(&b) - t.cos()).abs());
        }
    }
    r
}

/// Surface of the one-soliton on an `n x n` grid with the reference seed frame.
pub fn synthesize_one_soliton(n: usize) -> Result<ChebyshevSurface> {
    let grid = one_soliton_grid(n)?;
    let theta = AngleField::one_soliton(grid)?;
    let w0 = chebyshev_frame(theta.field().values()[0]);
    integrate_frame(&theta, &w0, &Vector3::zeros(), &FrameIntegrationOptions::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fundamental_forms::{gauss_curvature_from_forms, induced_metric, normal_and_second_form, zero_curvature_field};
    use approx::assert_abs_diff_eq;
    use nalgebra::Rotation3;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn sine_gordon_examples() {
        let g = Grid2D::from_extent(0.0, 1.0, 0.0, 1.0, 11, 11).unwrap();
        let r = sine_gordon_residual(&AngleField::from_fn(g, |_, _| FRAC_PI_2).unwrap());
        for j in 1..10 {
            for i in 1..10 {
                assert_eq!(r.at(i, j), -1.0);
            }
        }
        let tilted = AngleField::from_fn(g, |x, _| FRAC_PI_2 + 0.1 * x).unwrap();
        let r = sine_gordon_residual(&tilted);
        for j in 1..10 {
            for i in 1..10 {
                assert_abs_diff_eq!(r.at(i, j), -(FRAC_PI_2 + 0.1 * g.x(i)).sin(), epsilon = 1e-12);
            }
        }
        let g = one_soliton_grid(65).unwrap();
        let r = sine_gordon_residual(&AngleField::one_soliton(g).unwrap());
        assert!(r.max_abs_interior() <= 10.0 * g.h().powi(2));
    }

    #[test]
    fn soliton_identity_holds_symbolically() {
        for s in [-2.0, -1.3, -0.5] {
            let theta = 4.0 * f64::atan(f64::exp(s));
            let second = -2.0 / s.cosh() * s.tanh();
            assert_abs_diff_eq!(theta.sin(), second, epsilon = 1e-14);
        }
    }

    #[test]
    fn connection_examples() {
        let g = Grid2D::from_extent(0.0, 1.0, 0.0, 1.0, 5, 5).unwrap();
        let (a, b) = chebyshev_connection(&AngleField::from_fn(g, |_, _| FRAC_PI_2).unwrap()).unwrap();
        let ea = Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0);
        let eb = Matrix3::new(0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0);
        for k in 0..g.len() {
            assert!((a.values()[k] - ea).amax() < 1e-15);
            assert!((b.values()[k] - eb).amax() < 1e-15);
        }
        let c = 1.1;
        let (a, _) = chebyshev_connection(&AngleField::from_fn(g, |_, _| c).unwrap()).unwrap();
        let m = a.at(2, 2);
        assert_eq!(m[(0, 0)], 0.0);
        assert_eq!(m[(1, 0)], 0.0);
        assert_eq!(m.column(1).into_owned(), Vector3::new(0.0, 0.0, c.sin()));

        // One soliton at s = -1 with theta_x = theta_y = 2 sech(s).
        let s: f64 = -1.0;
        let theta = 4.0 * s.exp().atan();
        assert_abs_diff_eq!(theta, 1.410_053, epsilon = 1e-6);
        let d = 2.0 / s.cosh();
        let (a, b) = connection_at(theta, d, d);
        let (sn, cs) = theta.sin_cos();
        assert_abs_diff_eq!(a[(0, 0)], d * cs / sn, epsilon = 1e-15);
        assert_abs_diff_eq!(a[(1, 0)], -d / sn, epsilon = 1e-15);
        assert_abs_diff_eq!(b[(0, 1)], -d / sn, epsilon = 1e-15);
        assert_abs_diff_eq!(b[(1, 1)], d * cs / sn, epsilon = 1e-15);
        assert_abs_diff_eq!(b[(2, 0)], sn, epsilon = 1e-15);
    }

    #[test]
    fn singular_angle_is_rejected() {
        let g = Grid2D::from_extent(0.0, 1.0, 0.0, 1.0, 5, 5).unwrap();
        let t = AngleField::from_fn(g, |_, _| 1e-8).unwrap();
        assert!(matches!(chebyshev_connection(&t), Err(Error::SingularAngle { .. })));
        assert!(AngleField::from_fn(g, |_, _| 0.0).is_err());
        assert!(AngleField::from_fn(g, |_, _| 3.2).is_err());
    }

    fn zero_curvature_mismatch(n: usize) -> (f64, f64, f64) {
        let g = one_soliton_grid(n).unwrap();
        let theta = AngleField::from_fn(g, |x, y| one_soliton_angle(x, y) + 0.05 * x * y).unwrap();
        let (a, b) = chebyshev_connection(&theta).unwrap();
        let z = zero_curvature_field(&a, &b).unwrap();
        let sg = sine_gordon_residual(&theta);
        let (mut worst, mut third): (f64, f64) = (0.0, 0.0);
        for j in 2..g.ny - 2 {
            for i in 2..g.nx - 2 {
                let k = g.index(i, j);
                let s = theta.field().values()[k].sin();
                worst = worst.max((s * z.values()[k][(0, 1)] - sg.values()[k]).abs());
                worst = worst.max((s * z.values()[k][(1, 0)] + sg.values()[k]).abs());
                third = third.max(z.values()[k][(2, 0)].abs());
            }
        }
        (worst, third, g.h())
    }

    #[test]
    fn zero_curvature_entry_carries_sine_gordon() {
        let (w1, t1, _) = zero_curvature_mismatch(33);
        let (w2, t2, h) = zero_curvature_mismatch(65);
        assert!(w2 < 20.0 * h * h && t2 < 20.0 * h * h, "{w2} {t2}");
        assert!(w1 / w2 > 3.0, "ratio = {}", w1 / w2);
        assert!(t1 / t2 > 3.0 || t2 < 1e-12, "ratio = {}", t1 / t2);
    }

    #[test]
    fn flat_angle_frame_stays_orthogonal_and_reports_path_dependence() {
        let g = Grid2D::from_extent(0.0, 1.0, 0.0, 1.0, 33, 33).unwrap();
        let theta = AngleField::from_fn(g, |_, _| FRAC_PI_2).unwrap();
        let opts = FrameIntegrationOptions {
            compatibility_threshold: None,
            path_tolerance_factor: None,
            ..Default::default()
        };
        let s = integrate_frame(&theta, &Matrix3::identity(), &Vector3::zeros(), &opts).unwrap();
        let fx = fd_partial_vec(&s.f, Axis::X);
        let fy = fd_partial_vec(&s.f, Axis::Y);
        // Along the seed row f_xy = N and the frame stays orthonormal everywhere.
        for j in 0..g.ny {
            for i in 1..g.nx - 1 {
                let k = g.index(i, j);
                assert!(fx.values()[k].dot(&fy.values()[k]).abs() < 1e-2);
            }
        }
        assert!(s.path_independence.unwrap() > 0.1);
        assert!(matches!(
            integrate_frame(&theta, &Matrix3::identity(), &Vector3::zeros(), &FrameIntegrationOptions::default()),
            Err(Error::Incompatible { .. })
        ));
    }

    #[test]
    fn bad_seed_frame_is_rejected() {
        let g = one_soliton_grid(33).unwrap();
        let theta = AngleField::one_soliton(g).unwrap();
        let r = integrate_frame(&theta, &Matrix3::identity(), &Vector3::zeros(), &Default::default());
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn soliton_surface_has_unit_negative_curvature() {
        let s = synthesize_one_soliton(65).unwrap();
        let h2 = s.grid().h().powi(2);
        let metric = induced_metric(&s.f).unwrap();
        let (_, ii) = normal_and_second_form(&s.f).unwrap();
        let k = gauss_curvature_from_forms(&metric, &ii).unwrap();
        assert!(k.map(|v| v + 1.0).max_abs_interior() <= 20.0 * h2);
        assert!(corollary_conditions(&s).max() <= 50.0 * h2);
        assert!(s.path_independence.unwrap() <= 100.0 * h2);
    }

    #[test]
    fn frame_integration_is_equivariant() {
        let g = one_soliton_grid(33).unwrap();
        let theta = AngleField::one_soliton(g).unwrap();
        let w0 = chebyshev_frame(theta.field().values()[0]);
        let f0 = Vector3::new(0.3, -0.2, 1.0);
        let base = integrate_frame(&theta, &w0, &f0, &Default::default()).unwrap();
        let rot = Rotation3::from_euler_angles(0.4, 0.2, -0.9).into_inner();
        let moved = integrate_frame(&theta, &(rot * w0), &f0, &Default::default()).unwrap();
        for k in 0..g.len() {
            let expect = rot * (base.f.values()[k] - f0) + f0;
            assert!((moved.f.values()[k] - expect).amax() < 1e-12);
        }
        let (r0, r1) = (corollary_conditions(&base), corollary_conditions(&moved));
        assert_abs_diff_eq!(r0.max(), r1.max(), epsilon = 1e-12);
    }

    #[test]
    fn plane_fails_the_cross_product_condition() {
        let g = Grid2D::from_extent(0.0, 1.0, 0.0, 1.0, 9, 9).unwrap();
        let plane = VectorField3::from_fn(g, |x, y| Vector3::new(x, y, 0.0));
        let normal = VectorField3::from_fn(g, |_, _| Vector3::z());
        let theta = AngleField::from_fn(g, |_, _| FRAC_PI_2).unwrap();
        let r = corollary_conditions(&ChebyshevSurface::new(plane, normal, theta).unwrap());
        assert!(r.normal_mixed < 1e-12);
        assert_abs_diff_eq!(r.fx_cross, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.fy_cross, 1.0, epsilon = 1e-12);
    }
}
