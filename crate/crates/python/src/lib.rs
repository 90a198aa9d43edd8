//! Python bindings: grids, scalar fields and the main operations of
//! `minding-lab`. Reports come back as plain dicts and lists.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use minding_lab::chebyshev_net::{
    chebyshev_frame, corollary_conditions, integrate_frame, one_soliton_grid, sine_gordon_residual, AngleField,
    FrameIntegrationOptions,
};
use minding_lab::conformal::{catalog_chart as core_catalog_chart, flatten_conformal, resample_factor, FlattenOptions};
use minding_lab::developing::{develop as core_develop, holomorphic_invariant, DevelopOptions};
use minding_lab::elliptic::{self, NewtonOptions};
use minding_lab::fundamental_forms::{gauss_curvature_isothermic as core_k_iso, MetricField};
use minding_lab::grid::{Grid2D, ScalarField};
use minding_lab::pipeline::{self, PipelineConfig};
use minding_lab::weak_calculus::{default_tests, liouville_weak_residual as core_weak, random_tests};

create_exception!(minding_lab_py, MindingError, PyException);

fn err(e: minding_lab::Error) -> PyErr {
    MindingError::new_err(e.to_string())
}

#[pyclass(name = "Grid", frozen, from_py_object)]
#[derive(Clone, Copy)]
pub struct PyGrid(Grid2D);

#[pymethods]
impl PyGrid {
    #[new]
    fn new(x0: f64, x1: f64, y0: f64, y1: f64, nx: usize, ny: usize) -> PyResult<Self> {
        Grid2D::from_extent(x0, x1, y0, y1, nx, ny).map(Self).map_err(err)
    }

    #[getter]
    fn nx(&self) -> usize {
        self.0.nx
    }

    #[getter]
    fn ny(&self) -> usize {
        self.0.ny
    }

    #[getter]
    fn h(&self) -> f64 {
        self.0.h()
    }

    #[getter]
    fn extent(&self) -> (f64, f64, f64, f64) {
        (self.0.x0, self.0.x_max(), self.0.y0, self.0.y_max())
    }

    /// Node coordinates, x fastest.
    fn points(&self) -> Vec<(f64, f64)> {
        (0..self.0.len()).map(|k| self.0.point(k)).collect()
    }

    fn __repr__(&self) -> String {
        let (a, b, c, d) = self.extent();
        format!("Grid([{a}, {b}] x [{c}, {d}], {}x{})", self.0.nx, self.0.ny)
    }
}

#[pyclass(name = "ScalarField", frozen, from_py_object)]
#[derive(Clone)]
pub struct PyField(ScalarField);

#[pymethods]
impl PyField {
    #[new]
    fn new(grid: PyGrid, values: Vec<f64>) -> PyResult<Self> {
        ScalarField::new(grid.0, values).map(Self).map_err(err)
    }

    #[getter]
    fn grid(&self) -> PyGrid {
        PyGrid(*self.0.grid())
    }

    fn values(&self) -> Vec<f64> {
        self.0.values().to_vec()
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.0.at(i, j)
    }

    fn max_abs(&self) -> f64 {
        self.0.max_abs()
    }

    fn max_abs_interior(&self) -> f64 {
        self.0.max_abs_interior()
    }

    fn __len__(&self) -> usize {
        self.0.values().len()
    }
}

/// `{"grid", "h", "u"}` for a catalog chart name.
#[pyfunction]
fn catalog_chart<'py>(py: Python<'py>, name: &str, n: usize) -> PyResult<Bound<'py, PyDict>> {
    let c = core_catalog_chart(name, n).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("grid", PyGrid(*c.h.grid()))?;
    d.set_item("h", PyField(c.h))?;
    d.set_item("u", PyField(c.u))?;
    Ok(d)
}

/// One-soliton angle field on the standard `n x n` grid.
#[pyfunction]
fn one_soliton_angle(n: usize) -> PyResult<PyField> {
    let t = AngleField::one_soliton(one_soliton_grid(n).map_err(err)?).map_err(err)?;
    Ok(PyField(t.field().clone()))
}

#[pyfunction]
fn sine_gordon_residual_field(theta: &PyField) -> PyResult<PyField> {
    let t = AngleField::new(theta.0.clone()).map_err(err)?;
    Ok(PyField(sine_gordon_residual(&t)))
}

/// Integrates the Chebyshev frame; returns the surface points, normals,
/// corollary residuals and the sweep mismatch.
#[pyfunction]
fn synthesize<'py>(py: Python<'py>, theta: &PyField) -> PyResult<Bound<'py, PyDict>> {
    let t = AngleField::new(theta.0.clone()).map_err(err)?;
    let w0 = chebyshev_frame(t.field().values()[0]);
    let s = integrate_frame(&t, &w0, &Default::default(), &FrameIntegrationOptions::default()).map_err(err)?;
    let c = corollary_conditions(&s);
    let d = PyDict::new(py);
    let pts = |v: &minding_lab::VectorField3| v.values().iter().map(|p| (p.x, p.y, p.z)).collect::<Vec<_>>();
    d.set_item("f", pts(&s.f))?;
    d.set_item("normal", pts(&s.normal))?;
    let cor = PyDict::new(py);
    cor.set_item("normal_mixed", c.normal_mixed)?;
    cor.set_item("fx_cross", c.fx_cross)?;
    cor.set_item("fy_cross", c.fy_cross)?;
    cor.set_item("fx_unit", c.fx_unit)?;
    cor.set_item("fy_unit", c.fy_unit)?;
    cor.set_item("angle", c.angle)?;
    cor.set_item("max", c.max())?;
    d.set_item("corollary", cor)?;
    d.set_item("path_independence", s.path_independence)?;
    Ok(d)
}

/// `K = -Δ ln h / h^2` (interior nodes; boundary carries 0).
#[pyfunction]
fn gauss_curvature_isothermic(h: &PyField) -> PyResult<PyField> {
    core_k_iso(&h.0).map(PyField).map_err(err)
}

/// Weak residual against the default lattice, or a seeded random family.
#[pyfunction]
#[pyo3(signature = (u, seed=None))]
fn liouville_weak_residual<'py>(py: Python<'py>, u: &PyField, seed: Option<u64>) -> PyResult<Bound<'py, PyDict>> {
    let g = *u.0.grid();
    let tests = match seed {
        Some(s) => random_tests(&g, 75, &[0.1, 0.2, 0.4], s),
        None => default_tests(&g),
    };
    let r = core_weak(&u.0, &tests).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("max_abs", r.max_abs)?;
    d.set_item("mean_abs", r.mean_abs)?;
    d.set_item("max_normalized", r.max_normalized)?;
    d.set_item("test_count", r.test_count)?;
    d.set_item("residuals", r.residuals.iter().map(|w| w.residual).collect::<Vec<_>>())?;
    Ok(d)
}

/// `Δ_h u - e^{2u}` at interior nodes.
#[pyfunction]
fn discrete_liouville_residual(u: &PyField) -> PyField {
    PyField(elliptic::discrete_liouville_residual(&u.0))
}

#[pyfunction]
fn bootstrap_equivalence(u: &PyField) -> PyResult<f64> {
    elliptic::bootstrap_equivalence(&u.0).map_err(err)
}

/// Boundary values in the order `solve_liouville` expects.
#[pyfunction]
fn boundary_trace(u: &PyField) -> Vec<f64> {
    elliptic::boundary_trace(&u.0)
}

/// Newton solve of `Δu = e^{2u}` with Dirichlet data; returns
/// `(u, iterations, residual history)`.
#[pyfunction]
fn solve_liouville(grid: PyGrid, boundary: Vec<f64>) -> PyResult<(PyField, usize, Vec<f64>)> {
    let s = elliptic::solve_liouville_newton(&grid.0, &boundary, &NewtonOptions::default()).map_err(err)?;
    Ok((PyField(s.u), s.iterations, s.residuals))
}

/// Flattens the Chebyshev metric of `theta` and resamples `h` on a uniform
/// `n x n` grid.
#[pyfunction]
fn flatten_chebyshev<'py>(py: Python<'py>, theta: &PyField, n: usize) -> PyResult<Bound<'py, PyDict>> {
    let g = *theta.0.grid();
    let metric = MetricField::new(
        ScalarField::constant(g, 1.0),
        theta.0.map(f64::cos),
        ScalarField::constant(g, 1.0),
    )
    .map_err(err)?;
    let chart = flatten_conformal(&metric, &FlattenOptions::default()).map_err(err)?;
    let uf = resample_factor(&chart, n).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("anisotropy", chart.diagnostics.anisotropy)?;
    d.set_item("skew", chart.diagnostics.skew)?;
    d.set_item("accepted", chart.diagnostics.accepted)?;
    d.set_item("x", PyField(chart.x))?;
    d.set_item("y", PyField(chart.y))?;
    d.set_item("h", PyField(uf.h))?;
    Ok(d)
}

/// Max interior `|T|` of `T = u_zz - u_z^2`.
#[pyfunction]
fn holomorphic_invariant_max(u: &PyField) -> f64 {
    holomorphic_invariant(&u.0).max_abs()
}

/// Developing map of `u`; `phi` and `dphi` as `(re, im)` pairs.
#[pyfunction]
fn develop<'py>(py: Python<'py>, u: &PyField) -> PyResult<Bound<'py, PyDict>> {
    let dv = core_develop(&u.0, &DevelopOptions::default()).map_err(err)?;
    let pairs = |v: &[num_complex::Complex64]| v.iter().map(|w| (w.re, w.im)).collect::<Vec<_>>();
    let d = PyDict::new(py);
    d.set_item("phi", pairs(dv.map.phi()))?;
    d.set_item("dphi", pairs(dv.map.dphi()))?;
    d.set_item("base", dv.base)?;
    d.set_item("pullback", dv.pullback)?;
    d.set_item("path_independence", dv.path_independence)?;
    Ok(d)
}

/// Runs a CLI command in-process; returns `(exit_code, report)`.
#[pyfunction]
#[pyo3(signature = (command, source=None, n=128, out="out", tol_scale=1.0, seed=None))]
fn run_command<'py>(
    py: Python<'py>,
    command: &str,
    source: Option<&str>,
    n: usize,
    out: &str,
    tol_scale: f64,
    seed: Option<u64>,
) -> PyResult<(i32, Bound<'py, PyAny>)> {
    let default = match command {
        "liouville-check" | "solve" | "develop" => "half_plane_pseudosphere",
        _ => "one_soliton",
    };
    let mut cfg = PipelineConfig::new(source.unwrap_or(default).parse().map_err(err)?, n, PathBuf::from(out));
    cfg.tol_scale = tol_scale;
    cfg.seed = seed;
    let run = match command {
        "synthesize" => pipeline::run_synthesize,
        "metric" => pipeline::run_metric,
        "flatten" => pipeline::run_flatten,
        "liouville-check" => pipeline::run_liouville_check,
        "solve" => pipeline::run_solve,
        "develop" => pipeline::run_develop,
        "verify-minding" => pipeline::run_verify_minding,
        other => return Err(MindingError::new_err(format!("unknown command `{other}`"))),
    };
    let report = match py.detach(|| run(&cfg)) {
        Ok(r) => r,
        Err(e) => return Err(err(e)),
    };
    let json = py.import("json")?.call_method1("loads", (report.to_json().map_err(err)?,))?;
    Ok((report.exit_code, json))
}

#[pymodule]
fn minding_lab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("MindingError", m.py().get_type::<MindingError>())?;
    m.add_class::<PyGrid>()?;
    m.add_class::<PyField>()?;
    m.add_function(wrap_pyfunction!(catalog_chart, m)?)?;
    m.add_function(wrap_pyfunction!(one_soliton_angle, m)?)?;
    m.add_function(wrap_pyfunction!(sine_gordon_residual_field, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(gauss_curvature_isothermic, m)?)?;
    m.add_function(wrap_pyfunction!(liouville_weak_residual, m)?)?;
    m.add_function(wrap_pyfunction!(discrete_liouville_residual, m)?)?;
    m.add_function(wrap_pyfunction!(bootstrap_equivalence, m)?)?;
    m.add_function(wrap_pyfunction!(boundary_trace, m)?)?;
    m.add_function(wrap_pyfunction!(solve_liouville, m)?)?;
    m.add_function(wrap_pyfunction!(flatten_chebyshev, m)?)?;
    m.add_function(wrap_pyfunction!(holomorphic_invariant_max, m)?)?;
    m.add_function(wrap_pyfunction!(develop, m)?)?;
    m.add_function(wrap_pyfunction!(run_command, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
