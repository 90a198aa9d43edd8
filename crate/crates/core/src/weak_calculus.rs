//! Distributions realized as quadrature functionals against C^1 bumps.
//!
//! Every check here evaluates both sides of an integration-by-parts identity
//! against each test function of a finite family and reports the difference.
//! Test-function gradients are always analytic, so the only finite-difference
//! error comes from the field under test.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fundamental_forms::FrameField;
use crate::grid::{fd_partial, trapezoid_weight, Axis, Grid2D, ScalarField, TestFunction};

/// One residual: a test function (and, for matrix or directional checks, a
/// component label) paired with the value of the identity's defect.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakResidual {
    pub test_id: usize,
    pub center: [f64; 2],
    pub radius: f64,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub component: String,
    pub residual: f64,
    /// `residual / ∫|v|`
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakResidualReport {
    pub residuals: Vec<WeakResidual>,
    pub test_count: usize,
    pub max_abs: f64,
    pub mean_abs: f64,
    pub max_normalized: f64,
    /// Indices of supplied tests whose support touched the boundary.
    pub rejected: Vec<usize>,
}

impl WeakResidualReport {
    fn from_residuals(residuals: Vec<WeakResidual>, test_count: usize, rejected: Vec<usize>) -> Self {
        let max_abs = residuals.iter().map(|r| r.residual.abs()).fold(0.0, f64::max);
        let max_normalized = residuals
            .iter()
            .map(|r| r.normalized.abs())
            .fold(0.0, f64::max);
        let mean_abs = if residuals.is_empty() {
            0.0
        } else {
            residuals.iter().map(|r| r.residual.abs()).sum::<f64>() / residuals.len() as f64
        };
        Self {
            residuals,
            test_count,
            max_abs,
            mean_abs,
            max_normalized,
            rejected,
        }
    }

    /// Residuals carrying the given component label.
    pub fn component(&self, label: &str) -> impl Iterator<Item = &WeakResidual> {
        let label = label.to_string();
        self.residuals.iter().filter(move |r| r.component == label)
    }
}

/// Deterministic family: `per_axis x per_axis` lattice of centers at
/// `(k + 1) / (per_axis + 1)` of each extent, times radii
/// `fraction * min(extent)`, keeping only tests supported inside the grid.
pub fn test_lattice(grid: &Grid2D, per_axis: usize, radius_fractions: &[f64]) -> Vec<TestFunction> {
    let (lx, ly) = (grid.x_max() - grid.x0, grid.y_max() - grid.y0);
    let span = lx.min(ly);
    let mut out = vec![];
    for &frac in radius_fractions {
        for b in 0..per_axis {
            for a in 0..per_axis {
                let cx = grid.x0 + lx * (a + 1) as f64 / (per_axis + 1) as f64;
                let cy = grid.y0 + ly * (b + 1) as f64 / (per_axis + 1) as f64;
                if let Ok(t) = TestFunction::new(cx, cy, frac * span) {
                    if t.is_interior_to(grid) {
                        out.push(t);
                    }
                }
            }
        }
    }
    out
}

/// Default family: 5x5 centers, radii {0.1, 0.2, 0.4} of the shorter extent.
pub fn default_tests(grid: &Grid2D) -> Vec<TestFunction> {
    test_lattice(grid, 5, &[0.1, 0.2, 0.4])
}

/// Seeded random family: `count` tests with uniformly drawn radius fraction
/// from `radius_fractions` and a center drawn so the support stays one cell
/// inside the grid.
pub fn random_tests(grid: &Grid2D, count: usize, radius_fractions: &[f64], seed: u64) -> Vec<TestFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let span = (grid.x_max() - grid.x0).min(grid.y_max() - grid.y0);
    let mut out = Vec::with_capacity(count);
    if radius_fractions.is_empty() {
        return out;
    }
    let mut attempts = 0;
    while out.len() < count && attempts < 100 * count.max(1) {
        attempts += 1;
        let r = radius_fractions[rng.random_range(0..radius_fractions.len())] * span;
        let (mx, my) = (r + grid.dx, r + grid.dy);
        if 2.0 * mx >= grid.x_max() - grid.x0 || 2.0 * my >= grid.y_max() - grid.y0 {
            continue;
        }
        let cx = rng.random_range(grid.x0 + mx..grid.x_max() - mx);
        let cy = rng.random_range(grid.y0 + my..grid.y_max() - my);
        if let Ok(t) = TestFunction::new(cx, cy, r) {
            if t.is_interior_to(grid) {
                out.push(t);
            }
        }
    }
    out
}

/// Sums `w_k * f(k, v, v_x, v_y)` over the nodes of the test's support box.
fn integrate_against(grid: &Grid2D, t: &TestFunction, f: impl Fn(usize, f64, f64, f64) -> f64) -> f64 {
    let lo = |c: f64, o: f64, d: f64| (((c - o) / d).floor().max(0.0)) as usize;
    let i0 = lo(t.cx - t.r, grid.x0, grid.dx);
    let j0 = lo(t.cy - t.r, grid.y0, grid.dy);
    let i1 = ((((t.cx + t.r - grid.x0) / grid.dx).ceil()) as usize).min(grid.nx - 1);
    let j1 = ((((t.cy + t.r - grid.y0) / grid.dy).ceil()) as usize).min(grid.ny - 1);
    let mut total = 0.0;
    for j in j0..=j1 {
        let mut row = 0.0;
        for i in i0..=i1 {
            let (x, y) = (grid.x(i), grid.y(j));
            let v = t.value(x, y);
            let (vx, vy) = t.gradient(x, y);
            if v == 0.0 && vx == 0.0 && vy == 0.0 {
                continue;
            }
            row += trapezoid_weight(grid, i, j) * f(grid.index(i, j), v, vx, vy);
        }
        total += row;
    }
    total
}

fn screen(grid: &Grid2D, tests: &[TestFunction]) -> Result<(Vec<(usize, TestFunction)>, Vec<usize>)> {
    let (ok, bad): (Vec<_>, Vec<_>) = tests
        .iter()
        .copied()
        .enumerate()
        .partition(|(_, t)| t.is_interior_to(grid));
    if ok.is_empty() {
        return Err(match bad.first() {
            Some(&(index, _)) => Error::TestSupport { index },
            None => Error::InvalidInput("no test functions supplied".into()),
        });
    }
    Ok((ok, bad.into_iter().map(|(k, _)| k).collect()))
}

fn run<F>(grid: &Grid2D, tests: &[TestFunction], labels: &[String], eval: F) -> Result<WeakResidualReport>
where
    F: Fn(&TestFunction, usize) -> f64 + Sync,
{
    let (ok, rejected) = screen(grid, tests)?;
    let residuals: Vec<WeakResidual> = ok
        .par_iter()
        .flat_map_iter(|&(id, t)| {
            let eval = &eval;
            labels.iter().enumerate().map(move |(c, label)| {
                let residual = eval(&t, c);
                WeakResidual {
                    test_id: id,
                    center: [t.cx, t.cy],
                    radius: t.r,
                    component: label.clone(),
                    residual,
                    normalized: residual / t.integral(),
                }
            })
        })
        .collect();
    Ok(WeakResidualReport::from_residuals(residuals, ok.len(), rejected))
}

/// Fields whose components can be checked one scalar at a time.
pub trait Components {
    fn grid(&self) -> &Grid2D;
    fn labelled_components(&self) -> Vec<(String, ScalarField)>;
}

impl Components for ScalarField {
    fn grid(&self) -> &Grid2D {
        ScalarField::grid(self)
    }

    fn labelled_components(&self) -> Vec<(String, ScalarField)> {
        vec![(String::new(), self.clone())]
    }
}

impl Components for FrameField {
    fn grid(&self) -> &Grid2D {
        FrameField::grid(self)
    }

    fn labelled_components(&self) -> Vec<(String, ScalarField)> {
        let mut out = vec![];
        for r in 0..3 {
            for c in 0..3 {
                out.push((format!("({},{})", r + 1, c + 1), self.entry(r, c)));
            }
        }
        out
    }
}

/// Equality of mixed distributional derivatives of a C^1 field:
/// `-∫ W_x v_y + ∫ W_y v_x` per test and component.
pub fn mixed_partials_check<W: Components>(w: &W, tests: &[TestFunction]) -> Result<WeakResidualReport> {
    let grid = *w.grid();
    let comps = w.labelled_components();
    let derivs: Vec<(ScalarField, ScalarField)> = comps
        .iter()
        .map(|(_, f)| (fd_partial(f, Axis::X), fd_partial(f, Axis::Y)))
        .collect();
    let labels: Vec<String> = comps.into_iter().map(|(l, _)| l).collect();
    run(&grid, tests, &labels, |t, c| {
        let (wx, wy) = (derivs[c].0.values(), derivs[c].1.values());
        integrate_against(&grid, t, |k, _, vx, vy| -wx[k] * vy + wy[k] * vx)
    })
}

/// How the right-hand side of the product rule differentiates `L`.
#[derive(Debug, Clone, Copy)]
pub enum LDerivative<'a> {
    /// `(P ∂L)(v) = -∫ L ∂(P v)`, the distributional derivative.
    Distributional,
    /// `(P ∂L)(v) = ∫ P L' v` with a supplied pointwise derivative
    /// (e.g. the almost-everywhere derivative of a step).
    Pointwise { lx: &'a ScalarField, ly: &'a ScalarField },
}

/// Product rule `∂(PL) = (∂P) L + P ∂L` for `P` in C^1 and locally integrable
/// `L`, checked in both directions (components `"x"` and `"y"`).
///
/// Left side: `-∫ P L v_x`. Right side: `∫ P_x L v + (P ∂L)(v)`.
pub fn product_rule_check(
    p: &ScalarField,
    l: &ScalarField,
    tests: &[TestFunction],
    l_derivative: LDerivative,
) -> Result<WeakResidualReport> {
    let grid = *p.grid();
    grid.ensure_same(l.grid())?;
    if let LDerivative::Pointwise { lx, ly } = l_derivative {
        grid.ensure_same(lx.grid())?;
        grid.ensure_same(ly.grid())?;
    }
    let px = fd_partial(p, Axis::X);
    let py = fd_partial(p, Axis::Y);
    let labels = vec!["x".to_string(), "y".to_string()];
    let (pv, lv) = (p.values(), l.values());
    run(&grid, tests, &labels, |t, c| {
        let dp = if c == 0 { px.values() } else { py.values() };
        let lhs = integrate_against(&grid, t, |k, _, vx, vy| {
            let vd = if c == 0 { vx } else { vy };
            -pv[k] * lv[k] * vd
        });
        let first = integrate_against(&grid, t, |k, v, _, _| dp[k] * lv[k] * v);
        let second = match l_derivative {
            LDerivative::Distributional => -integrate_against(&grid, t, |k, v, vx, vy| {
                let vd = if c == 0 { vx } else { vy };
                lv[k] * (dp[k] * v + pv[k] * vd)
            }),
            LDerivative::Pointwise { lx, ly } => {
                let dl = if c == 0 { lx.values() } else { ly.values() };
                integrate_against(&grid, t, |k, v, _, _| pv[k] * dl[k] * v)
            }
        };
        lhs - (first + second)
    })
}

/// Weak Liouville residual `∫ ∇u·∇v + ∫ e^{2u} v`; zero for weak solutions
/// of `Δu = e^{2u}`.
pub fn liouville_weak_residual(u: &ScalarField, tests: &[TestFunction]) -> Result<WeakResidualReport> {
    let grid = *u.grid();
    let ux = fd_partial(u, Axis::X);
    let uy = fd_partial(u, Axis::Y);
    let uv = u.values();
    run(&grid, tests, &[String::new()], |t, _| {
        integrate_against(&grid, t, |k, v, vx, vy| {
            ux.values()[k] * vx + uy.values()[k] * vy + (2.0 * uv[k]).exp() * v
        })
    })
}

/// Weak zero-curvature identity with matrix tests `v = w E_rc`:
/// `-∫<A, v_y> + ∫<B, v_x> - ∫<AB - BA, v>` with `<X, Y> = tr(X^t Y)`.
/// Components are labelled `"(r,c)"`, 1-based.
pub fn frame_weak_compatibility(a: &FrameField, b: &FrameField, tests: &[TestFunction]) -> Result<WeakResidualReport> {
    let grid = *a.grid();
    grid.ensure_same(b.grid())?;
    let comm: Vec<_> = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(am, bm)| am * bm - bm * am)
        .collect();
    let mut labels = vec![];
    for r in 0..3 {
        for c in 0..3 {
            labels.push(format!("({},{})", r + 1, c + 1));
        }
    }
    run(&grid, tests, &labels, |t, idx| {
        let (r, c) = (idx / 3, idx % 3);
        integrate_against(&grid, t, |k, v, vx, vy| {
            -a.values()[k][(r, c)] * vy + b.values()[k][(r, c)] * vx - comm[k][(r, c)] * v
        })
    })
}
