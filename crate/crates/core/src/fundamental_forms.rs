//! First and second fundamental forms, the moving-frame connection matrices of
//! an isothermic chart, curvature, and the strong zero-curvature residual.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::chebyshev_net::AngleField;
use crate::grid::{fd_laplacian, fd_mixed, fd_partial, fd_partial_vec, Axis, Grid2D, ScalarField, VectorField3};

/// A 3x3 matrix per node. Houses frames `W = (f_x, f_y, N)` and connection
/// matrices `A = W^-1 W_x`, `B = W^-1 W_y`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameField {
    grid: Grid2D,
    values: Vec<Matrix3<f64>>,
}

impl FrameField {
    pub fn new(grid: Grid2D, values: Vec<Matrix3<f64>>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} matrices, got {}",
                grid.len(),
                values.len()
            )));
        }
        if values.iter().any(|m| !m.iter().all(|v| v.is_finite())) {
            return Err(Error::InvalidInput("non-finite matrix entry".into()));
        }
        Ok(Self { grid, values })
    }

    /// Panics on non-finite entries.
    pub fn from_fn(grid: Grid2D, f: impl Fn(f64, f64) -> Matrix3<f64>) -> Self {
        let values = (0..grid.len())
            .map(|k| {
                let (x, y) = grid.point(k);
                f(x, y)
            })
            .collect();
        Self::new(grid, values).expect("sampled frame field must be finite")
    }

    pub fn zeros(grid: Grid2D) -> Self {
        Self {
            grid,
            values: vec![Matrix3::zeros(); grid.len()],
        }
    }

    #[inline]
    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[Matrix3<f64>] {
        &self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> Matrix3<f64> {
        self.values[self.grid.index(i, j)]
    }

    /// Entry `(r, c)` (0-based) as a scalar field.
    pub fn entry(&self, r: usize, c: usize) -> ScalarField {
        ScalarField::from_raw(self.grid, self.values.iter().map(|m| m[(r, c)]).collect())
    }

    pub fn fd_partial(&self, axis: Axis) -> FrameField {
        let mut out = vec![Matrix3::zeros(); self.values.len()];
        for r in 0..3 {
            for c in 0..3 {
                let d = fd_partial(&self.entry(r, c), axis);
                for (m, v) in out.iter_mut().zip(d.values()) {
                    m[(r, c)] = *v;
                }
            }
        }
        FrameField {
            grid: self.grid,
            values: out,
        }
    }
}

/// First fundamental form `(E, F, G)` per node.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricField {
    pub e: ScalarField,
    pub f: ScalarField,
    pub g: ScalarField,
}

impl MetricField {
    /// Checks positive definiteness at every node.
    pub fn new(e: ScalarField, f: ScalarField, g: ScalarField) -> Result<Self> {
        e.grid().ensure_same(f.grid())?;
        e.grid().ensure_same(g.grid())?;
        let grid = *e.grid();
        let mut bad = (0..grid.len()).filter(|&k| {
            let (ee, ff, gg) = (e.values()[k], f.values()[k], g.values()[k]);
            !(ee > 0.0 && gg > 0.0 && ee * gg - ff * ff > 1e-12 * ee * gg)
        });
        if let Some(first) = bad.next() {
            let (i, j) = grid.coords(first);
            return Err(Error::Degenerate {
                count: 1 + bad.count(),
                i,
                j,
            });
        }
        Ok(Self { e, f, g })
    }

    pub fn from_fn(grid: Grid2D, f: impl Fn(f64, f64) -> (f64, f64, f64)) -> Result<Self> {
        let e = ScalarField::from_fn(grid, |x, y| f(x, y).0);
        let ff = ScalarField::from_fn(grid, |x, y| f(x, y).1);
        let g = ScalarField::from_fn(grid, |x, y| f(x, y).2);
        Self::new(e, ff, g)
    }

    pub fn grid(&self) -> &Grid2D {
        self.e.grid()
    }

    /// `EG - F^2` per node.
    pub fn determinant(&self) -> ScalarField {
        let grid = *self.grid();
        ScalarField::from_raw(
            grid,
            (0..grid.len())
                .map(|k| {
                    self.e.values()[k] * self.g.values()[k] - self.f.values()[k].powi(2)
                })
                .collect(),
        )
    }
}

/// Second fundamental form. `asymmetry` is the max over nodes of
/// `|<N_x, f_y> - <N_y, f_x>|`, which vanishes in exact arithmetic.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondForm {
    pub l: ScalarField,
    pub m: ScalarField,
    pub n: ScalarField,
    pub asymmetry: f64,
}

impl SecondForm {
    pub fn from_fn(grid: Grid2D, f: impl Fn(f64, f64) -> (f64, f64, f64)) -> Self {
        Self {
            l: ScalarField::from_fn(grid, |x, y| f(x, y).0),
            m: ScalarField::from_fn(grid, |x, y| f(x, y).1),
            n: ScalarField::from_fn(grid, |x, y| f(x, y).2),
            asymmetry: 0.0,
        }
    }
}

/// `E = <f_x, f_x>`, `F = <f_x, f_y>`, `G = <f_y, f_y>`.
pub fn induced_metric(f: &VectorField3) -> Result<MetricField> {
    let fx = fd_partial_vec(f, Axis::X);
    let fy = fd_partial_vec(f, Axis::Y);
    let grid = *f.grid();
    let dot = |a: &VectorField3, b: &VectorField3| {
        ScalarField::from_raw(
            grid,
            a.values().iter().zip(b.values()).map(|(p, q)| p.dot(q)).collect(),
        )
    };
    MetricField::new(dot(&fx, &fx), dot(&fx, &fy), dot(&fy, &fy))
}

/// Unit normal `f_x/|f_x| x f_y/|f_y|` (renormalized) and `l, m, n`.
pub fn normal_and_second_form(f: &VectorField3) -> Result<(VectorField3, SecondForm)> {
    let grid = *f.grid();
    let fx = fd_partial_vec(f, Axis::X);
    let fy = fd_partial_vec(f, Axis::Y);
    let mut normals = Vec::with_capacity(grid.len());
    let mut bad = vec![];
    for k in 0..grid.len() {
        let (a, b) = (fx.values()[k], fy.values()[k]);
        let (na, nb) = (a.norm(), b.norm());
        let c = if na > 0.0 && nb > 0.0 {
            (a / na).cross(&(b / nb))
        } else {
            Vector3::zeros()
        };
        let nc = c.norm();
        if !(nc > 1e-10) {
            bad.push(k);
            normals.push(Vector3::z());
        } else {
            normals.push(c / nc);
        }
    }
    if let Some(&first) = bad.first() {
        let (i, j) = grid.coords(first);
        return Err(Error::Degenerate {
            count: bad.len(),
            i,
            j,
        });
    }
    let normal = VectorField3::from_raw(grid, normals);
    let nx = fd_partial_vec(&normal, Axis::X);
    let ny = fd_partial_vec(&normal, Axis::Y);
    let mut l = Vec::with_capacity(grid.len());
    let mut m = Vec::with_capacity(grid.len());
    let mut n = Vec::with_capacity(grid.len());
    let mut asymmetry: f64 = 0.0;
    for k in 0..grid.len() {
        let (a, b) = (fx.values()[k], fy.values()[k]);
        let (p, q) = (nx.values()[k], ny.values()[k]);
        let m1 = -p.dot(&b);
        let m2 = -q.dot(&a);
        asymmetry = asymmetry.max((m1 - m2).abs());
        l.push(-p.dot(&a));
        m.push(0.5 * (m1 + m2));
        n.push(-q.dot(&b));
    }
    Ok((
        normal,
        SecondForm {
            l: ScalarField::from_raw(grid, l),
            m: ScalarField::from_raw(grid, m),
            n: ScalarField::from_raw(grid, n),
            asymmetry,
        },
    ))
}

fn ensure_positive(h: &ScalarField) -> Result<()> {
    match h.values().iter().position(|&v| !(v > 0.0)) {
        Some(k) => {
            let (i, j) = h.grid().coords(k);
            Err(Error::NonPositiveFactor { i, j })
        }
        None => Ok(()),
    }
}

/// Connection matrices of the frame `(f_x, f_y, N)` in an isothermic chart
/// with metric `h^2 (dx^2 + dy^2)`.
pub fn isothermic_connection(h: &ScalarField, ii: &SecondForm) -> Result<(FrameField, FrameField)> {
    let grid = *h.grid();
    grid.ensure_same(ii.l.grid())?;
    grid.ensure_same(ii.m.grid())?;
    grid.ensure_same(ii.n.grid())?;
    ensure_positive(h)?;
    let hx = fd_partial(h, Axis::X);
    let hy = fd_partial(h, Axis::Y);
    let mut a = Vec::with_capacity(grid.len());
    let mut b = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        let hh = h.values()[k];
        let (p, q) = (hx.values()[k] / hh, hy.values()[k] / hh);
        let h2 = hh * hh;
        let (l, m, n) = (ii.l.values()[k], ii.m.values()[k], ii.n.values()[k]);
        #[rustfmt::skip]
        a.push(Matrix3::new(
            p,  q, -l / h2,
            -q, p, -m / h2,
            l,  m, 0.0,
        ));
        #[rustfmt::skip]
        b.push(Matrix3::new(
            q, -p, -m / h2,
            p,  q, -n / h2,
            m,  n, 0.0,
        ));
    }
    Ok((FrameField::new(grid, a)?, FrameField::new(grid, b)?))
}

/// Matrix zero-curvature expression `A_y - B_x - (AB - BA)` per node.
pub fn zero_curvature_field(a: &FrameField, b: &FrameField) -> Result<FrameField> {
    a.grid.ensure_same(&b.grid)?;
    let ay = a.fd_partial(Axis::Y);
    let bx = b.fd_partial(Axis::X);
    let values = (0..a.values.len())
        .map(|k| {
            let (am, bm) = (a.values[k], b.values[k]);
            ay.values[k] - bx.values[k] - (am * bm - bm * am)
        })
        .collect();
    FrameField::new(a.grid, values)
}

/// Max-entry norm of the zero-curvature expression on interior nodes
/// (boundary nodes carry 0).
pub fn zero_curvature_residual(a: &FrameField, b: &FrameField) -> Result<ScalarField> {
    let z = zero_curvature_field(a, b)?;
    let grid = a.grid;
    let values = (0..grid.len())
        .map(|k| {
            let (i, j) = grid.coords(k);
            if grid.is_boundary(i, j) {
                0.0
            } else {
                z.values[k].amax()
            }
        })
        .collect();
    Ok(ScalarField::from_raw(grid, values))
}

/// `K = -Δ(ln h) / h^2` on interior nodes (boundary carries 0).
pub fn gauss_curvature_isothermic(h: &ScalarField) -> Result<ScalarField> {
    ensure_positive(h)?;
    let lap = fd_laplacian(&h.map(f64::ln));
    let grid = *h.grid();
    let values = (0..grid.len())
        .map(|k| {
            let (i, j) = grid.coords(k);
            if grid.is_boundary(i, j) {
                0.0
            } else {
                -lap.values()[k] / h.values()[k].powi(2)
            }
        })
        .collect();
    Ok(ScalarField::from_raw(grid, values))
}

/// `K = (ln - m^2) / (EG - F^2)` on every node.
pub fn gauss_curvature_from_forms(metric: &MetricField, ii: &SecondForm) -> Result<ScalarField> {
    metric.grid().ensure_same(ii.l.grid())?;
    let det = metric.determinant();
    let grid = *metric.grid();
    ScalarField::new(
        grid,
        (0..grid.len())
            .map(|k| {
                (ii.l.values()[k] * ii.n.values()[k] - ii.m.values()[k].powi(2)) / det.values()[k]
            })
            .collect(),
    )
}

/// `K = -theta_xy / sin(theta)` for a Chebyshev net, on interior nodes
/// (boundary carries 0).
pub fn gauss_curvature_chebyshev(theta: &AngleField) -> Result<ScalarField> {
    theta.check_singular()?;
    let grid = *theta.grid();
    let txy = fd_mixed(theta.field());
    let values = (0..grid.len())
        .map(|k| {
            let (i, j) = grid.coords(k);
            if grid.is_boundary(i, j) {
                0.0
            } else {
                -txy.values()[k] / theta.field().values()[k].sin()
            }
        })
        .collect();
    Ok(ScalarField::from_raw(grid, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::Rotation3;

    fn paraboloid(grid: Grid2D) -> VectorField3 {
        VectorField3::from_fn(grid, |x, y| Vector3::new(x, y, 0.5 * (x * x + y * y)))
    }

    #[test]
    fn plane_metric_is_euclidean() {
        let grid = Grid2D::from_extent(-1.0, 1.0, 0.0, 2.0, 9, 11).unwrap();
        let plane = VectorField3::from_fn(grid, |x, y| Vector3::new(x, y, 0.0));
        let g = induced_metric(&plane).unwrap();
        for k in 0..grid.len() {
            assert_abs_diff_eq!(g.e.values()[k], 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(g.f.values()[k], 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(g.g.values()[k], 1.0, epsilon = 1e-12);
        }
        let (n, ii) = normal_and_second_form(&plane).unwrap();
        assert_abs_diff_eq!(n.at(3, 3).z, 1.0, epsilon = 1e-12);
        assert!(ii.l.max_abs() < 1e-12 && ii.m.max_abs() < 1e-12 && ii.n.max_abs() < 1e-12);
    }

    #[test]
    fn paraboloid_vertex() {
        let grid = Grid2D::from_extent(-0.5, 0.5, -0.5, 0.5, 41, 41).unwrap();
        let h2 = grid.h().powi(2);
        let f = paraboloid(grid);
        let g = induced_metric(&f).unwrap();
        let (n, ii) = normal_and_second_form(&f).unwrap();
        let (i, j) = (20, 20);
        assert_abs_diff_eq!(g.e.at(i, j), 1.0, epsilon = 10.0 * h2);
        assert_abs_diff_eq!(g.f.at(i, j), 0.0, epsilon = 10.0 * h2);
        assert_abs_diff_eq!(g.g.at(i, j), 1.0, epsilon = 10.0 * h2);
        assert_abs_diff_eq!(n.at(i, j).z, 1.0, epsilon = 10.0 * h2);
        assert_abs_diff_eq!(ii.l.at(i, j), 1.0, epsilon = 10.0 * h2);
        assert_abs_diff_eq!(ii.m.at(i, j), 0.0, epsilon = 10.0 * h2);
        assert_abs_diff_eq!(ii.n.at(i, j), 1.0, epsilon = 10.0 * h2);
    }

    #[test]
    fn degenerate_immersion_is_reported() {
        let grid = Grid2D::from_extent(0.0, 1.0, 0.0, 1.0, 5, 5).unwrap();
        let line = VectorField3::from_fn(grid, |x, y| Vector3::new(x + y, 0.0, 0.0));
        match induced_metric(&line) {
            Err(Error::Degenerate { count, .. }) => assert_eq!(count, 25),
            other => panic!("unexpected {other:?}"),
        }
        assert!(normal_and_second_form(&line).is_err());
    }

    #[test]
    fn metric_and_second_form_are_euclidean_invariant() {
        let grid = Grid2D::from_extent(-0.5, 0.5, -0.5, 0.5, 17, 17).unwrap();
        let f = paraboloid(grid);
        let rot = Rotation3::from_euler_angles(0.3, -1.1, 2.0);
        let shift = Vector3::new(1.0, -2.0, 0.5);
        let moved = f.map(|p| rot * p + shift);
        let (g0, g1) = (induced_metric(&f).unwrap(), induced_metric(&moved).unwrap());
        let (_, ii0) = normal_and_second_form(&f).unwrap();
        let (_, ii1) = normal_and_second_form(&moved).unwrap();
        for k in 0..grid.len() {
            assert_abs_diff_eq!(g0.e.values()[k], g1.e.values()[k], epsilon = 1e-12);
            assert_abs_diff_eq!(g0.f.values()[k], g1.f.values()[k], epsilon = 1e-12);
            assert_abs_diff_eq!(ii0.l.values()[k], ii1.l.values()[k], epsilon = 1e-11);
            assert_abs_diff_eq!(ii0.m.values()[k], ii1.m.values()[k], epsilon = 1e-11);
            assert_abs_diff_eq!(ii0.n.values()[k], ii1.n.values()[k], epsilon = 1e-11);
        }
    }

    #[test]
    fn isothermic_connection_examples() {
        let grid = Grid2D::from_extent(0.0, 1.0, 0.0, 1.0, 5, 5).unwrap();
        let one = ScalarField::constant(grid, 1.0);
        let ii = SecondForm::from_fn(grid, |_, _| (0.0, 1.0, 0.0));
        let (a, b) = isothermic_connection(&one, &ii).unwrap();
        let ea = Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0);
        let eb = Matrix3::new(0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0);
        for k in 0..grid.len() {
            assert_eq!(a.values()[k], ea);
            assert_eq!(b.values()[k], eb);
        }
        let flat = SecondForm::from_fn(grid, |_, _| (0.0, 0.0, 0.0));
        let (a, b) = isothermic_connection(&one, &flat).unwrap();
        assert!(a.values().iter().chain(b.values()).all(|m| m.amax() == 0.0));

        let hp = Grid2D::from_extent(0.0, 1.0, 1.0, 2.0, 65, 65).unwrap();
        let h = ScalarField::from_fn(hp, |_, y| 1.0 / y);
        let (a, _) = isothermic_connection(&h, &flat_ii(hp)).unwrap();
        let err = a.entry(0, 1).map_with_coords(|_, y, v| v + 1.0 / y).max_abs();
        assert!(err <= 10.0 * hp.h().powi(2), "err = {err}");

        let bad = ScalarField::from_fn(grid, |x, _| x - 0.5);
        assert!(matches!(
            isothermic_connection(&bad, &flat),
            Err(Error::NonPositiveFactor { .. })
        ));
    }

    fn flat_ii(grid: Grid2D) -> SecondForm {
        SecondForm::from_fn(grid, |_, _| (0.0, 0.0, 0.0))
    }

    #[test]
    fn zero_curvature_of_zero_is_zero() {
        let grid = Grid2D::from_extent(0.0, 1.0, 0.0, 1.0, 6, 6).unwrap();
        let z = FrameField::zeros(grid);
        assert_eq!(zero_curvature_residual(&z, &z).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn isothermic_curvature_examples() {
        let grid = Grid2D::from_extent(0.0, 1.0, 0.0, 1.0, 9, 9).unwrap();
        let k = gauss_curvature_isothermic(&ScalarField::constant(grid, 1.0)).unwrap();
        assert_eq!(k.max_abs(), 0.0);

        let hp = Grid2D::from_extent(0.0, 1.0, 1.0, 2.0, 65, 65).unwrap();
        let h = ScalarField::from_fn(hp, |_, y| 1.0 / y);
        let k = gauss_curvature_isothermic(&h).unwrap();
        assert!(k.map(|v| v + 1.0).max_abs_interior() <= 10.0 * hp.h().powi(2));

        let s = 0.7 / 2f64.sqrt();
        let disk = Grid2D::from_extent(-s, s, -s, s, 65, 65).unwrap();
        let h = ScalarField::from_fn(disk, |x, y| 2.0 / (1.0 - x * x - y * y));
        let k = gauss_curvature_isothermic(&h).unwrap();
        assert!(k.map(|v| v + 1.0).max_abs_interior() <= 10.0 * disk.h().powi(2));

        assert!(gauss_curvature_isothermic(&ScalarField::constant(grid, -1.0)).is_err());
    }
}
