//! Developing maps into the Poincaré disk: `u` from a holomorphic `phi`,
//! and `phi` back from a Liouville solution `u` through the invariant
//! `T = u_zz - u_z^2`.

use std::ops::{Add, Mul};

use num_complex::Complex64;

use crate::conformal::CatalogName;
use crate::error::{Error, Result};
use crate::grid::{fd_mixed, fd_partial, fd_second, Axis, Grid2D, ScalarField};
use crate::lines::{interp_half, rk4_step, Stage};

/// Exponent `c` in `u = c ln(4|phi'|^2 / (1 - |phi|^2)^2)` for which
/// `Δu = e^{2u}` holds under the flat Laplacian.
pub const EXPONENT: f64 = 0.5;
/// Exponent as printed in the source statement; kept for the calibration audit.
pub const PRINTED_EXPONENT: f64 = 0.25;

/// Holomorphic `phi` into the unit disk with its complex derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct DevelopingMap {
    grid: Grid2D,
    phi: Vec<Complex64>,
    dphi: Vec<Complex64>,
}

impl DevelopingMap {
    /// Requires `|phi| < 1` and `phi' != 0` at every node.
    pub fn new(grid: Grid2D, phi: Vec<Complex64>, dphi: Vec<Complex64>) -> Result<Self> {
        grid.validate()?;
        if phi.len() != grid.len() || dphi.len() != grid.len() {
            return Err(Error::InvalidInput("developing map length does not match grid".into()));
        }
        for k in 0..grid.len() {
            let (i, j) = grid.coords(k);
            if !(phi[k].re.is_finite() && phi[k].im.is_finite() && dphi[k].re.is_finite() && dphi[k].im.is_finite()) {
                return Err(Error::InvalidInput(format!("non-finite developing map at ({i}, {j})")));
            }
            if phi[k].norm() >= 1.0 {
                return Err(Error::InvalidInput(format!("|phi| >= 1 at ({i}, {j})")));
            }
            if dphi[k].norm() == 0.0 {
                return Err(Error::InvalidInput(format!("phi' vanishes at ({i}, {j})")));
            }
        }
        Ok(Self { grid, phi, dphi })
    }

    /// Samples `f(z) = (phi(z), phi'(z))` with `z = x + iy`.
    pub fn from_fn(grid: Grid2D, f: impl Fn(Complex64) -> (Complex64, Complex64)) -> Result<Self> {
        let (phi, dphi) = (0..grid.len())
            .map(|k| {
                let (x, y) = grid.point(k);
                f(Complex64::new(x, y))
            })
            .unzip();
        Self::new(grid, phi, dphi)
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn phi(&self) -> &[Complex64] {
        &self.phi
    }

    pub fn dphi(&self) -> &[Complex64] {
        &self.dphi
    }

    /// Post-composes a disk automorphism.
    pub fn compose(&self, m: &DiskMobius) -> Result<Self> {
        let phi = self.phi.iter().map(|w| m.apply(*w)).collect();
        let dphi = self
            .phi
            .iter()
            .zip(&self.dphi)
            .map(|(w, d)| m.derivative(*w) * d)
            .collect();
        Self::new(self.grid, phi, dphi)
    }

    /// The unique Möbius post-composition with `phi(base) = 0` and
    /// `phi'(base) > 0`.
    pub fn normalized_at(&self, i: usize, j: usize) -> Result<Self> {
        let k = self.grid.index(i, j);
        let a = self.phi[k];
        let m = DiskMobius { rotation: 0.0, a };
        let d = m.derivative(a) * self.dphi[k];
        self.compose(&DiskMobius {
            rotation: -d.arg(),
            a,
        })
    }

    /// `max |phi_zbar|` over interior nodes, `phi_zbar = (phi_x + i phi_y)/2`.
    pub fn cr_residual(&self) -> f64 {
        let re = ScalarField::from_raw(self.grid, self.phi.iter().map(|w| w.re).collect());
        let im = ScalarField::from_raw(self.grid, self.phi.iter().map(|w| w.im).collect());
        cr_defect(&re, &im).max_abs_interior()
    }

    pub fn re_phi(&self) -> ScalarField {
        ScalarField::from_raw(self.grid, self.phi.iter().map(|w| w.re).collect())
    }

    pub fn im_phi(&self) -> ScalarField {
        ScalarField::from_raw(self.grid, self.phi.iter().map(|w| w.im).collect())
    }

    pub fn re_dphi(&self) -> ScalarField {
        ScalarField::from_raw(self.grid, self.dphi.iter().map(|w| w.re).collect())
    }

    pub fn im_dphi(&self) -> ScalarField {
        ScalarField::from_raw(self.grid, self.dphi.iter().map(|w| w.im).collect())
    }

    pub fn abs_phi(&self) -> ScalarField {
        ScalarField::from_raw(self.grid, self.phi.iter().map(|w| w.norm()).collect())
    }
}

/// `|f_zbar|` for `f = re + i im`, per node.
fn cr_defect(re: &ScalarField, im: &ScalarField) -> ScalarField {
    let (ax, ay) = (fd_partial(re, Axis::X), fd_partial(re, Axis::Y));
    let (bx, by) = (fd_partial(im, Axis::X), fd_partial(im, Axis::Y));
    let grid = *re.grid();
    ScalarField::from_raw(
        grid,
        (0..grid.len())
            .map(|k| 0.5 * (ax.values()[k] - by.values()[k]).hypot(ay.values()[k] + bx.values()[k]))
            .collect(),
    )
}

/// Disk automorphism `w -> e^{i rotation} (w - a) / (1 - conj(a) w)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiskMobius {
    pub rotation: f64,
    pub a: Complex64,
}

impl DiskMobius {
    pub fn apply(&self, w: Complex64) -> Complex64 {
        Complex64::from_polar(1.0, self.rotation) * (w - self.a) / (1.0 - self.a.conj() * w)
    }

    pub fn derivative(&self, w: Complex64) -> Complex64 {
        let den = 1.0 - self.a.conj() * w;
        Complex64::from_polar(1.0, self.rotation) * (1.0 - self.a.norm_sqr()) / (den * den)
    }
}

/// `u = c ln(4|phi'|^2 / (1 - |phi|^2)^2)`.
pub fn u_from_phi(map: &DevelopingMap, c: f64) -> Result<ScalarField> {
    ScalarField::new(
        map.grid,
        map.phi
            .iter()
            .zip(&map.dphi)
            .map(|(w, d)| c * (4.0 * d.norm_sqr() / (1.0 - w.norm_sqr()).powi(2)).ln())
            .collect(),
    )
}

/// `T = u_zz - u_z^2` with `u_z = (u_x - i u_y)/2`, and the Cauchy-Riemann
/// defect `|T_zbar|` of `T`.
#[derive(Debug, Clone)]
pub struct HolomorphicInvariant {
    pub re: ScalarField,
    pub im: ScalarField,
    pub cr: ScalarField,
}

impl HolomorphicInvariant {
    pub fn grid(&self) -> &Grid2D {
        self.re.grid()
    }

    pub fn at(&self, k: usize) -> Complex64 {
        Complex64::new(self.re.values()[k], self.im.values()[k])
    }

    /// `max |T|` over interior nodes.
    pub fn max_abs(&self) -> f64 {
        let g = self.grid();
        let mut m = 0.0f64;
        for j in 1..g.ny - 1 {
            for i in 1..g.nx - 1 {
                m = m.max(self.at(g.index(i, j)).norm());
            }
        }
        m
    }

    /// `max |T_zbar|` two nodes in from the boundary, where `T` itself uses
    /// only centered differences.
    pub fn cr_max(&self) -> f64 {
        self.cr.max_abs_inset(2)
    }
}

pub fn holomorphic_invariant(u: &ScalarField) -> HolomorphicInvariant {
    let grid = *u.grid();
    let (ux, uy) = (fd_partial(u, Axis::X), fd_partial(u, Axis::Y));
    let (uxx, uyy, uxy) = (fd_second(u, Axis::X), fd_second(u, Axis::Y), fd_mixed(u));
    let t: Vec<Complex64> = (0..grid.len())
        .map(|k| {
            let uz = 0.5 * Complex64::new(ux.values()[k], -uy.values()[k]);
            let uzz = 0.25 * Complex64::new(uxx.values()[k] - uyy.values()[k], -2.0 * uxy.values()[k]);
            uzz - uz * uz
        })
        .collect();
    let re = ScalarField::from_raw(grid, t.iter().map(|w| w.re).collect());
    let im = ScalarField::from_raw(grid, t.iter().map(|w| w.im).collect());
    let cr = cr_defect(&re, &im);
    HolomorphicInvariant { re, im, cr }
}

#[derive(Debug, Clone, Copy)]
pub struct DevelopOptions {
    /// Base node; `None` picks the grid center.
    pub base: Option<(usize, usize)>,
    /// Coefficient in `psi'' + kappa T psi = 0`.
    pub kappa: f64,
    /// Maximum accepted pullback relative error; `None` means `50 h^2`.
    pub pullback_tolerance: Option<f64>,
}

impl Default for DevelopOptions {
    fn default() -> Self {
        Self {
            base: None,
            kappa: 1.0,
            pullback_tolerance: None,
        }
    }
}

/// Result of [`develop`].
#[derive(Debug, Clone)]
pub struct Development {
    pub map: DevelopingMap,
    pub base: (usize, usize),
    /// `max |phi_xy - phi_yx|` between the two sweep orders.
    pub path_independence: f64,
    pub pullback: f64,
}

/// Two solutions `(psi, psi')` of the linear ODE.
#[derive(Debug, Clone, Copy)]
struct Pair([Complex64; 4]);

impl Add for Pair {
    type Output = Pair;
    fn add(self, o: Pair) -> Pair {
        Pair(std::array::from_fn(|k| self.0[k] + o.0[k]))
    }
}

impl Mul<f64> for Pair {
    type Output = Pair;
    fn mul(self, s: f64) -> Pair {
        Pair(self.0.map(|v| v * s))
    }
}

struct Ode<'a> {
    grid: Grid2D,
    t: &'a [Complex64],
    kappa: f64,
}

impl Ode<'_> {
    fn coefficient(&self, axis: Axis, i: usize, j: usize, sign: isize, stage: Stage) -> Complex64 {
        let g = &self.grid;
        let next = |p: usize| (p as isize + sign) as usize;
        match (stage, axis) {
            (Stage::Start, _) => self.t[g.index(i, j)],
            (Stage::End, Axis::X) => self.t[g.index(next(i), j)],
            (Stage::End, Axis::Y) => self.t[g.index(i, next(j))],
            (Stage::Mid, Axis::X) => interp_half(|p| self.t[g.index(p, j)], i.min(next(i)), g.nx),
            (Stage::Mid, Axis::Y) => interp_half(|p| self.t[g.index(i, p)], j.min(next(j)), g.ny),
        }
    }

    /// `d/dx = d/dz` and `d/dy = i d/dz` for holomorphic solutions.
    fn line(&self, axis: Axis, i0: usize, j0: usize, sign: isize, count: usize, out: &mut [Pair]) {
        let g = self.grid;
        let (h, dir) = match axis {
            Axis::X => (g.dx, Complex64::new(1.0, 0.0)),
            Axis::Y => (g.dy, Complex64::new(0.0, 1.0)),
        };
        let step = h * sign as f64;
        let (mut i, mut j) = (i0, j0);
        let mut state = out[g.index(i, j)];
        for _ in 0..count {
            state = rk4_step(&state, step, |stage, s| {
                let t = -self.kappa * self.coefficient(axis, i, j, sign, stage);
                let p = s.0;
                Pair([dir * p[1], dir * t * p[0], dir * p[3], dir * t * p[2]])
            });
            match axis {
                Axis::X => i = (i as isize + sign) as usize,
                Axis::Y => j = (j as isize + sign) as usize,
            }
            out[g.index(i, j)] = state;
        }
    }

    fn sweep(&self, first: Axis, base: (usize, usize), seed: Pair) -> Vec<Pair> {
        let g = self.grid;
        let (bi, bj) = base;
        let mut out = vec![Pair([Complex64::new(0.0, 0.0); 4]); g.len()];
        out[g.index(bi, bj)] = seed;
        let (first_n, second_n) = match first {
            Axis::X => (g.nx, g.ny),
            Axis::Y => (g.ny, g.nx),
        };
        let (b1, b2) = match first {
            Axis::X => (bi, bj),
            Axis::Y => (bj, bi),
        };
        let second = match first {
            Axis::X => Axis::Y,
            Axis::Y => Axis::X,
        };
        let at = |p: usize, q: usize| match first {
            Axis::X => (p, q),
            Axis::Y => (q, p),
        };
        let (i, j) = at(b1, b2);
        self.line(first, i, j, 1, first_n - 1 - b1, &mut out);
        self.line(first, i, j, -1, b1, &mut out);
        for p in 0..first_n {
            let (i, j) = at(p, b2);
            self.line(second, i, j, 1, second_n - 1 - b2, &mut out);
            self.line(second, i, j, -1, b2, &mut out);
        }
        out
    }
}

/// Develops a Liouville solution into the disk.
///
/// Solves `psi'' + kappa T psi = 0` along grid lines from the base node with
/// `psi_1 = (0, e^{u}/2)` and `psi_2 = (1, -u_z)` there, sets
/// `phi = psi_1 / psi_2`, and normalizes so that `phi(base) = 0`,
/// `phi'(base) > 0`. The map is returned only if `|phi| < 1` everywhere and
/// the pullback of the disk metric matches `e^{2u}` within tolerance.
pub fn develop(u: &ScalarField, opts: &DevelopOptions) -> Result<Development> {
    let grid = *u.grid();
    let center = ((grid.nx - 1) / 2, (grid.ny - 1) / 2);
    let mut bases = vec![opts.base.unwrap_or(center)];
    for b in [center, (grid.nx / 4, grid.ny / 4), (3 * grid.nx / 4, 3 * grid.ny / 4)] {
        if !bases.contains(&b) {
            bases.push(b);
        }
    }
    let inv = holomorphic_invariant(u);
    let t: Vec<Complex64> = (0..grid.len()).map(|k| inv.at(k)).collect();
    let ux = fd_partial(u, Axis::X);
    let uy = fd_partial(u, Axis::Y);
    let ode = Ode {
        grid,
        t: &t,
        kappa: opts.kappa,
    };
    let tol = opts.pullback_tolerance.unwrap_or(50.0 * grid.h().powi(2));

    let mut last_err = None;
    for base in bases {
        let k = grid.index(base.0, base.1);
        let lambda = 0.5 * u.values()[k].exp();
        let uz = 0.5 * Complex64::new(ux.values()[k], -uy.values()[k]);
        let zero = Complex64::new(0.0, 0.0);
        let seed = Pair([zero, Complex64::new(lambda, 0.0), Complex64::new(1.0, 0.0), -uz]);
        let a = ode.sweep(Axis::X, base, seed);
        let b = ode.sweep(Axis::Y, base, seed);
        let scale = a.iter().map(|p| p.0[2].norm()).fold(0.0, f64::max).max(1.0);
        if a.iter().any(|p| p.0[2].norm() < 1e-8 * scale) {
            last_err = Some(Error::NotDevelopable(format!(
                "second solution vanishes on the patch (base {base:?})"
            )));
            continue;
        }
        let ratio = |p: &Pair| p.0[0] / p.0[2];
        let path = a
            .iter()
            .zip(&b)
            .map(|(p, q)| (ratio(p) - ratio(q)).norm())
            .fold(0.0, f64::max);
        let phi: Vec<Complex64> = a.iter().map(ratio).collect();
        let dphi: Vec<Complex64> = a
            .iter()
            .map(|p| (p.0[1] * p.0[2] - p.0[0] * p.0[3]) / (p.0[2] * p.0[2]))
            .collect();
        if let Some(kk) = phi.iter().position(|w| !(w.norm() < 1.0)) {
            let (i, j) = grid.coords(kk);
            return Err(Error::NotDevelopable(format!(
                "|phi| = {:.6} >= 1 at node ({i}, {j})",
                phi[kk].norm()
            )));
        }
        let map = DevelopingMap::new(grid, phi, dphi)
            .map_err(|e| Error::NotDevelopable(e.to_string()))?
            .normalized_at(base.0, base.1)?;
        let pullback = pullback_isometry_check(&map, u)?;
        if !(pullback <= tol) {
            return Err(Error::NotDevelopable(format!(
                "pullback relative error {pullback:.3e} exceeds {tol:.3e}"
            )));
        }
        return Ok(Development {
            map,
            base,
            path_independence: path,
            pullback,
        });
    }
    Err(last_err.unwrap_or_else(|| Error::NotDevelopable("no usable base point".into())))
}

/// `max |4|phi'|^2/(1 - |phi|^2)^2 - e^{2u}| / e^{2u}` over all nodes.
pub fn pullback_isometry_check(map: &DevelopingMap, u: &ScalarField) -> Result<f64> {
    map.grid.ensure_same(u.grid())?;
    Ok(map
        .phi
        .iter()
        .zip(&map.dphi)
        .zip(u.values())
        .map(|((w, d), uu)| {
            let target = (2.0 * uu).exp();
            (4.0 * d.norm_sqr() / (1.0 - w.norm_sqr()).powi(2) - target).abs() / target
        })
        .fold(0.0, f64::max))
}

/// Poincaré-disk distance `2 artanh |(w1 - w2)/(1 - conj(w1) w2)|`.
pub fn hyperbolic_distance(w1: Complex64, w2: Complex64) -> Result<f64> {
    if !(w1.norm() < 1.0 && w2.norm() < 1.0) {
        return Err(Error::InvalidInput("points must lie inside the unit disk".into()));
    }
    Ok(2.0 * ((w1 - w2) / (1.0 - w1.conj() * w2)).norm().atanh())
}

/// Closed-form developing map of a catalog chart: `z` on the disk patch and
/// `(z - i)/(z + i)` on the half-plane patch. Flat charts have none.
pub fn catalog_developing_map(name: CatalogName, grid: Grid2D) -> Option<Result<DevelopingMap>> {
    let i = Complex64::new(0.0, 1.0);
    match name {
        CatalogName::PoincareDiskPatch => Some(DevelopingMap::from_fn(grid, |z| (z, Complex64::new(1.0, 0.0)))),
        CatalogName::HalfPlanePseudosphere => Some(DevelopingMap::from_fn(grid, |z| {
            ((z - i) / (z + i), 2.0 * i / ((z + i) * (z + i)))
        })),
        CatalogName::FlatConstantAngle(_) => None,
    }
}
