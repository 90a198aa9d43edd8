//! Dirichlet problems on the grid rectangle: the linear Poisson solve
//! `Δw = g`, Newton's method for the Liouville equation `Δu = e^{2u}`, and the
//! solve-and-compare check that a weak solution coincides with the Dirichlet
//! solution sharing its boundary trace.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{fd_laplacian, Grid2D, ScalarField};
use crate::linalg::{solve_spd, BandedSpd};

/// Relative max-norm tolerance on the discrete Poisson residual.
pub const POISSON_TOLERANCE: f64 = 1e-10;

/// `Δw = rhs` with `w = boundary` on the grid boundary. Boundary values are
/// listed in storage order of [`Grid2D::boundary_indices`].
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletProblem {
    pub rhs: ScalarField,
    pub boundary: Vec<f64>,
}

impl DirichletProblem {
    pub fn new(rhs: ScalarField, boundary: Vec<f64>) -> Result<Self> {
        let expected = rhs.grid().boundary_indices().len();
        if boundary.len() != expected {
            return Err(Error::InvalidInput(format!(
                "expected {expected} boundary values, got {}",
                boundary.len()
            )));
        }
        if boundary.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite boundary value".into()));
        }
        Ok(Self { rhs, boundary })
    }

    pub fn from_fns(grid: Grid2D, rhs: impl Fn(f64, f64) -> f64, bc: impl Fn(f64, f64) -> f64) -> Result<Self> {
        Self::new(ScalarField::from_fn(grid, rhs), boundary_from_fn(&grid, bc))
    }

    /// Boundary data taken from the boundary nodes of `trace`.
    pub fn with_trace(rhs: ScalarField, trace: &ScalarField) -> Result<Self> {
        rhs.grid().ensure_same(trace.grid())?;
        Self::new(rhs, boundary_trace(trace))
    }

    pub fn grid(&self) -> &Grid2D {
        self.rhs.grid()
    }
}

pub fn boundary_from_fn(grid: &Grid2D, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    grid.boundary_indices()
        .into_iter()
        .map(|k| {
            let (x, y) = grid.point(k);
            f(x, y)
        })
        .collect()
}

pub fn boundary_trace(field: &ScalarField) -> Vec<f64> {
    field
        .grid()
        .boundary_indices()
        .into_iter()
        .map(|k| field.values()[k])
        .collect()
}

/// Full-grid field with the given boundary values and `interior` inside.
fn assemble_field(grid: &Grid2D, boundary: &[f64], interior: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; grid.len()];
    for (k, v) in grid.boundary_indices().into_iter().zip(boundary) {
        out[k] = *v;
    }
    let m = grid.nx - 2;
    for j in 1..grid.ny - 1 {
        for i in 1..grid.nx - 1 {
            out[grid.index(i, j)] = interior[(j - 1) * m + (i - 1)];
        }
    }
    out
}

/// `-Δ_h + diag(shift)` on interior unknowns (x fastest).
fn assemble_operator(grid: &Grid2D, shift: Option<&[f64]>) -> BandedSpd {
    let (m, n) = (grid.nx - 2, grid.ny - 2);
    let (cx, cy) = (1.0 / (grid.dx * grid.dx), 1.0 / (grid.dy * grid.dy));
    let mut a = BandedSpd::zeros(m * n, m);
    for j in 0..n {
        for i in 0..m {
            let p = j * m + i;
            let s = shift.map_or(0.0, |s| s[p]);
            a.add(p, p, 2.0 * cx + 2.0 * cy + s);
            if i > 0 {
                a.add(p, p - 1, -cx);
            }
            if j > 0 {
                a.add(p, p - m, -cy);
            }
        }
    }
    a
}

/// Right-hand side of `(-Δ_h + shift) w = -g` after moving known boundary
/// neighbours across.
fn assemble_rhs(grid: &Grid2D, source: &[f64], full_boundary: &[f64]) -> Vec<f64> {
    let (m, n) = (grid.nx - 2, grid.ny - 2);
    let (cx, cy) = (1.0 / (grid.dx * grid.dx), 1.0 / (grid.dy * grid.dy));
    let mut b = vec![0.0; m * n];
    for j in 0..n {
        for i in 0..m {
            let (gi, gj) = (i + 1, j + 1);
            let mut v = -source[grid.index(gi, gj)];
            if gi == 1 {
                v += cx * full_boundary[grid.index(0, gj)];
            }
            if gi == grid.nx - 2 {
                v += cx * full_boundary[grid.index(grid.nx - 1, gj)];
            }
            if gj == 1 {
                v += cy * full_boundary[grid.index(gi, 0)];
            }
            if gj == grid.ny - 2 {
                v += cy * full_boundary[grid.index(gi, grid.ny - 1)];
            }
            b[j * m + i] = v;
        }
    }
    b
}

fn interior_of(field: &[f64], grid: &Grid2D) -> Vec<f64> {
    let mut out = Vec::with_capacity((grid.nx - 2) * (grid.ny - 2));
    for j in 1..grid.ny - 1 {
        for i in 1..grid.nx - 1 {
            out.push(field[grid.index(i, j)]);
        }
    }
    out
}

/// Five-point solution of the Dirichlet problem. Boundary nodes of the result
/// equal the boundary data exactly.
pub fn solve_poisson(p: &DirichletProblem) -> Result<ScalarField> {
    let grid = *p.grid();
    let zeros = vec![0.0; (grid.nx - 2) * (grid.ny - 2)];
    let full_bc = assemble_field(&grid, &p.boundary, &zeros);
    let a = assemble_operator(&grid, None);
    let b = assemble_rhs(&grid, p.rhs.values(), &full_bc);
    let x = solve_spd(&a, &b)?;
    let w = ScalarField::new(grid, assemble_field(&grid, &p.boundary, &x))
        .map_err(|_| Error::SolverBreakdown("non-finite Poisson solution".into()))?;

    let residual = fd_laplacian(&w)
        .zip_with(&p.rhs, |l, g| l - g)?
        .max_abs_interior();
    let scale = 1f64
        .max(p.rhs.max_abs())
        .max(w.max_abs() * (2.0 / (grid.dx * grid.dx) + 2.0 / (grid.dy * grid.dy)));
    if residual > POISSON_TOLERANCE * scale {
        return Err(Error::SolverBreakdown(format!(
            "discrete residual {residual:.3e} above tolerance"
        )));
    }
    Ok(w)
}

/// `Δ_h u - e^{2u}` on interior nodes (boundary carries 0).
pub fn discrete_liouville_residual(u: &ScalarField) -> ScalarField {
    let grid = *u.grid();
    let lap = fd_laplacian(u);
    let values = (0..grid.len())
        .map(|k| {
            let (i, j) = grid.coords(k);
            if grid.is_boundary(i, j) {
                0.0
            } else {
                lap.values()[k] - (2.0 * u.values()[k]).exp()
            }
        })
        .collect();
    ScalarField::from_raw(grid, values)
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 50,
            max_halvings: 10,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NewtonStep {
    pub iteration: usize,
    pub residual: f64,
    pub step_length: f64,
}

#[derive(Debug, Clone)]
pub struct NewtonSolution {
    pub u: ScalarField,
    /// Newton updates applied.
    pub iterations: usize,
    /// `‖Δ_h u - e^{2u}‖_max` before each update and after the last one.
    pub residuals: Vec<f64>,
    pub log: Vec<NewtonStep>,
}

fn residual_norm(values: &[f64], grid: &Grid2D) -> Option<f64> {
    let u = ScalarField::new(*grid, values.to_vec()).ok()?;
    let r = discrete_liouville_residual(&u).max_abs_interior();
    r.is_finite().then_some(r)
}

/// Newton iteration for `Δ_h u = e^{2u}` with Dirichlet data, started from the
/// harmonic extension of the boundary values. Steps are halved while the
/// residual fails to decrease.
pub fn solve_liouville_newton(grid: &Grid2D, boundary: &[f64], opts: &NewtonOptions) -> Result<NewtonSolution> {
    let harmonic = solve_poisson(&DirichletProblem::new(
        ScalarField::constant(*grid, 0.0),
        boundary.to_vec(),
    )?)?;
    let mut u = harmonic.into_values();
    let mut res = residual_norm(&u, grid).ok_or(Error::NoConvergence {
        iterations: 0,
        residual: f64::INFINITY,
    })?;
    let mut residuals = vec![res];
    let mut log = vec![];
    for it in 0..opts.max_iterations {
        if res <= opts.tolerance {
            return Ok(NewtonSolution {
                u: ScalarField::new(*grid, u)?,
                iterations: it,
                residuals,
                log,
            });
        }
        let interior = interior_of(&u, grid);
        let shift: Vec<f64> = interior.iter().map(|v| 2.0 * (2.0 * v).exp()).collect();
        let field = ScalarField::from_raw(*grid, u.clone());
        let f = discrete_liouville_residual(&field);
        let op = assemble_operator(grid, Some(&shift));
        let delta = solve_spd(&op, &interior_of(f.values(), grid))?;

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let mut trial_interior = interior.clone();
            for (t, d) in trial_interior.iter_mut().zip(&delta) {
                *t += step * d;
            }
            let trial = assemble_field(grid, boundary, &trial_interior);
            if let Some(r) = residual_norm(&trial, grid) {
                if r < res {
                    accepted = Some((trial, r));
                    break;
                }
            }
            step *= 0.5;
        }
        match accepted {
            Some((trial, r)) => {
                u = trial;
                res = r;
                residuals.push(r);
                log.push(NewtonStep {
                    iteration: it + 1,
                    residual: r,
                    step_length: step,
                });
            }
            None => {
                return Err(Error::NoConvergence {
                    iterations: it,
                    residual: res,
                })
            }
        }
    }
    if res <= opts.tolerance {
        return Ok(NewtonSolution {
            u: ScalarField::new(*grid, u)?,
            iterations: opts.max_iterations,
            residuals,
            log,
        });
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iterations,
        residual: res,
    })
}

/// Solves `Δw = e^{2u}` with `w = u` on the boundary and returns
/// `max |w - u|` over interior nodes.
pub fn bootstrap_equivalence(u: &ScalarField) -> Result<f64> {
    let rhs = u.map(|v| (2.0 * v).exp());
    let w = solve_poisson(&DirichletProblem::with_trace(rhs, u)?)?;
    Ok(w.zip_with(u, |a, b| a - b)?.max_abs_interior())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit(n: usize) -> Grid2D {
        Grid2D::from_extent(0.0, 1.0, 0.0, 1.0, n, n).unwrap()
    }

    #[test]
    fn stencil_exact_solutions() {
        let g = unit(21);
        let w = solve_poisson(&DirichletProblem::from_fns(g, |_, _| 0.0, |x, _| x).unwrap()).unwrap();
        assert!(w.map_with_coords(|x, _, v| v - x).max_abs() < 1e-11);
        let w = solve_poisson(&DirichletProblem::from_fns(g, |_, _| 4.0, |x, y| x * x + y * y).unwrap()).unwrap();
        assert!(w.map_with_coords(|x, y, v| v - x * x - y * y).max_abs() < 1e-11);
    }

    #[test]
    fn boundary_is_reproduced_exactly() {
        let g = unit(9);
        let p = DirichletProblem::from_fns(g, |x, y| x * y, |x, y| (x + 2.0 * y).sin()).unwrap();
        let w = solve_poisson(&p).unwrap();
        assert_eq!(boundary_trace(&w), p.boundary);
    }

    #[test]
    fn rejects_bad_problems() {
        let g = unit(9);
        assert!(DirichletProblem::new(ScalarField::constant(g, 0.0), vec![0.0; 3]).is_err());
        let mut bc = boundary_from_fn(&g, |_, _| 0.0);
        bc[2] = f64::NAN;
        assert!(DirichletProblem::new(ScalarField::constant(g, 0.0), bc).is_err());
    }

    /// Series solution of `Δw = 1`, `w = 0` on the unit square, at the center.
    fn torsion_center() -> f64 {
        let pi = std::f64::consts::PI;
        let mut s = 0.0;
        for m in (1..400).step_by(2) {
            for n in (1..400).step_by(2) {
                let (mf, nf) = (m as f64, n as f64);
                let sign = if ((m + n) / 2) % 2 == 0 { 1.0 } else { -1.0 };
                s += sign * 16.0 / (pi.powi(4) * mf * nf * (mf * mf + nf * nf));
            }
        }
        -s
    }

    #[test]
    fn zero_is_not_a_liouville_solution() {
        let oracle = torsion_center();
        assert!((oracle.abs() - 0.0737).abs() < 1e-4, "oracle = {oracle}");
        let g = unit(65);
        let d = bootstrap_equivalence(&ScalarField::constant(g, 0.0)).unwrap();
        assert!((d - oracle.abs()).abs() < 2.0 * g.h().powi(2), "d = {d}");
    }

    #[test]
    fn newton_quadratic_tail() {
        let g = Grid2D::from_extent(0.0, 1.0, 1.0, 2.0, 33, 33).unwrap();
        let bc = boundary_from_fn(&g, |_, y| -y.ln());
        let sol = solve_liouville_newton(&g, &bc, &NewtonOptions::default()).unwrap();
        for w in sol.residuals.windows(2) {
            if w[0] < 1e-2 {
                assert!(w[1] <= (w[0] * w[0]).max(1e-10), "{:?}", sol.residuals);
            }
        }
    }

    #[test]
    fn stiff_boundary_converges_or_fails_explicitly() {
        let g = Grid2D::from_extent(0.0, 1.0, 1.0, 2.0, 17, 17).unwrap();
        let bc = boundary_from_fn(&g, |_, y| 10.0 - y.ln());
        match solve_liouville_newton(&g, &bc, &NewtonOptions::default()) {
            Ok(sol) => assert!(*sol.residuals.last().unwrap() <= 1e-8),
            Err(Error::NoConvergence { .. }) | Err(Error::SolverBreakdown(_)) => {}
            Err(e) => panic!("unexpected {e}"),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn discrete_maximum_principle(seed in 0u64..10_000, amp in 0.0f64..5.0) {
            let g = unit(13);
            let s = seed as f64;
            let rhs = ScalarField::from_fn(g, |x, y| amp * ((x * 7.1 + y * 3.3 + s).sin() + 1.0));
            let bc = boundary_from_fn(&g, |x, y| -((x * s).cos().abs() + y * 0.1));
            let w = solve_poisson(&DirichletProblem::new(rhs, bc).unwrap()).unwrap();
            prop_assert!(w.max() <= 1e-12);
        }
    }
}
