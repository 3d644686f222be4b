//! Python module `rtl`: fields, classification, normal forms, escape functions,
//! Weyl matrices and the evolution experiments. Structured reports come back
//! as plain dicts and lists.

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use rtl_core::classical_dynamics::{self as cd, EscapeFunction};
use rtl_core::evolve::{self, IntegrateOptions, InstabilityOptions, StabilityOptions, TransportCoefficient};
use rtl_core::normal_form::{self as nf, NormalFormChain};
use rtl_core::num_complex::Complex64;
use rtl_core::resonance::{self, RegularizeOptions, Tolerances};
use rtl_core::spectral::{self, StateVector};
use rtl_core::weyl_calculus::{self as wc, SymbolRep};
use serde::Serialize;

create_exception!(rtl, RtlError, PyException, "Numerical or parameter error raised by the core library.");

fn err(e: rtl_core::Error) -> PyErr {
    RtlError::new_err(e.to_string())
}

/// Serde value to Python through `json.loads`.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let s = serde_json::to_string(value).map_err(|e| RtlError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (s,))
}

/// Real or complex function on the circle, `u(x) = Σ u_k e^{ikx}`.
#[pyclass(name = "TorusField", module = "rtl", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyTorusField {
    inner: spectral::TorusField,
}

#[pymethods]
impl PyTorusField {
    /// From coefficients `u_{−K}, …, u_K`.
    #[new]
    fn new(coeffs: Vec<Complex64>) -> PyResult<Self> {
        if coeffs.len() % 2 == 0 {
            return Err(RtlError::new_err("coefficient list must have odd length 2K+1"));
        }
        let cutoff = coeffs.len() / 2;
        Ok(Self { inner: spectral::TorusField::from_coeffs(cutoff, coeffs) })
    }

    /// Interpolate equispaced samples on `[0, 2π)`.
    #[staticmethod]
    fn from_samples(samples: Vec<Complex64>) -> PyResult<Self> {
        Ok(Self { inner: spectral::TorusField::from_samples(&samples).map_err(err)? })
    }

    #[getter]
    fn cutoff(&self) -> usize {
        self.inner.cutoff()
    }

    fn coeffs(&self) -> Vec<Complex64> {
        self.inner.coeffs().to_vec()
    }

    fn coeff(&self, k: i64) -> Complex64 {
        self.inner.coeff(k)
    }

    fn __call__(&self, x: f64) -> Complex64 {
        self.inner.eval(x)
    }

    fn samples(&self, n: usize) -> PyResult<Vec<Complex64>> {
        self.inner.to_samples(n).map_err(err)
    }

    fn derivative(&self) -> Self {
        Self { inner: self.inner.derivative() }
    }

    fn l2_norm(&self) -> f64 {
        self.inner.l2_norm()
    }

    fn sobolev_norm(&self, s: f64) -> f64 {
        self.inner.sobolev_norm(s)
    }

    fn __repr__(&self) -> String {
        format!("TorusField(cutoff={})", self.inner.cutoff())
    }
}

/// Real function on T², `V(t, x) = Σ v_{k,l} e^{i(kx + lt)}`.
#[pyclass(name = "SpaceTimeField", module = "rtl", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PySpaceTimeField {
    inner: spectral::SpaceTimeField,
}

#[pymethods]
impl PySpaceTimeField {
    /// From `(k, l, coefficient)` triples; cutoffs are the smallest that hold them.
    #[new]
    fn new(modes: Vec<(i64, i64, Complex64)>) -> Self {
        Self { inner: spectral::SpaceTimeField::from_modes_auto(&modes) }
    }

    /// `a₀ + Σ a cos(kx + lt)` from `(k, l, a)` terms.
    #[staticmethod]
    #[pyo3(signature = (terms, constant=0.0))]
    fn cosines(terms: Vec<(i64, i64, f64)>, constant: f64) -> Self {
        let mut modes = vec![(0, 0, Complex64::new(constant, 0.0))];
        for (k, l, a) in terms {
            modes.push((k, l, Complex64::new(0.5 * a, 0.0)));
            modes.push((-k, -l, Complex64::new(0.5 * a, 0.0)));
        }
        Self::new(modes)
    }

    #[getter]
    fn kx(&self) -> usize {
        self.inner.kx()
    }

    #[getter]
    fn kt(&self) -> usize {
        self.inner.kt()
    }

    fn modes(&self) -> Vec<(i64, i64, Complex64)> {
        self.inner.modes()
    }

    fn __call__(&self, t: f64, x: f64) -> Complex64 {
        self.inner.eval(t, x)
    }

    fn resonant_average(&self, m: i64) -> PyResult<PyTorusField> {
        Ok(PyTorusField { inner: resonance::resonant_average(&self.inner, m).map_err(err)? })
    }

    fn __repr__(&self) -> String {
        format!("SpaceTimeField(kx={}, kt={})", self.inner.kx(), self.inner.kt())
    }
}

/// Solution state `u(t)` in Fourier coefficients.
#[pyclass(name = "StateVector", module = "rtl", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyStateVector {
    inner: StateVector,
}

#[pymethods]
impl PyStateVector {
    #[new]
    #[pyo3(signature = (coeffs, time=0.0))]
    fn new(coeffs: Vec<Complex64>, time: f64) -> PyResult<Self> {
        let f = PyTorusField::new(coeffs)?;
        Ok(Self { inner: StateVector::new(f.inner, time) })
    }

    #[getter]
    fn time(&self) -> f64 {
        self.inner.time()
    }

    #[getter]
    fn cutoff(&self) -> usize {
        self.inner.cutoff()
    }

    fn coeffs(&self) -> Vec<Complex64> {
        self.inner.coeffs().to_vec()
    }

    fn l2_norm(&self) -> f64 {
        self.inner.l2_norm()
    }

    fn sobolev_norm(&self, s: f64) -> f64 {
        self.inner.sobolev_norm(s)
    }
}

/// Order-N normal form `Ψ` of `w = m + εV`.
#[pyclass(name = "NormalForm", module = "rtl")]
struct PyNormalForm {
    inner: NormalFormChain,
}

#[pymethods]
impl PyNormalForm {
    fn remainder_norm(&self) -> f64 {
        self.inner.remainder_norm()
    }

    #[getter]
    fn m_hat(&self) -> Option<f64> {
        self.inner.m_hat
    }

    fn effective_profile(&self) -> PyTorusField {
        PyTorusField { inner: self.inner.effective_profile() }
    }

    /// Conjugate the effective profile to the constant `m̂`; returns a report dict.
    fn reduce_constant<'py>(&mut self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let cc = self.inner.reduce_constant().map_err(err)?;
        to_py(py, &serde_json::json!({ "m_hat": cc.m_hat, "equation_residual": cc.equation_residual, "flatness": cc.flatness }))
    }

    fn to_reduced_frame(&self, t: f64, u: &PyStateVector) -> PyResult<PyStateVector> {
        Ok(PyStateVector { inner: self.inner.to_reduced_frame(t, &u.inner).map_err(err)? })
    }

    fn from_reduced_frame(&self, t: f64, v: &PyStateVector) -> PyResult<PyStateVector> {
        Ok(PyStateVector { inner: self.inner.from_reduced_frame(t, &v.inner).map_err(err)? })
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }
}

/// Escape function `a(x, ξ) = |ξ| ã(x)` for a vector field on the circle.
#[pyclass(name = "EscapeFunction", module = "rtl", frozen)]
struct PyEscape {
    inner: EscapeFunction,
}

#[pymethods]
impl PyEscape {
    #[getter]
    fn delta_verified(&self) -> f64 {
        self.inner.delta_verified
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.sigma
    }

    #[getter]
    fn a_tilde(&self) -> PyTorusField {
        PyTorusField { inner: self.inner.a_tilde.clone() }
    }

    fn eta(&self, x: f64) -> PyResult<f64> {
        self.inner.eta(x).map_err(err)
    }

    fn profile_at<'py>(&self, py: Python<'py>, x: f64) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.profile_at(x).map_err(err)?)
    }

    fn symbol(&self, x: f64, xi: f64) -> f64 {
        self.inner.symbol(x, xi)
    }

    fn profile_csv(&self) -> String {
        self.inner.profile_csv()
    }

    fn flow<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.flow)
    }
}

#[pyfunction]
#[pyo3(signature = (field, m=1))]
fn classify<'py>(py: Python<'py>, field: &PySpaceTimeField, m: i64) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &resonance::classify(&field.inner, m, &Tolerances::default()).map_err(err)?)
}

#[pyfunction]
fn classify_profile<'py>(py: Python<'py>, profile: &PyTorusField) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &resonance::classify_profile(&profile.inner, &Tolerances::default()))
}

/// Returns `(field, shift, verdict)`.
#[pyfunction]
#[pyo3(signature = (field, m=1, budget=0.1, seed=0))]
fn regularize(field: &PySpaceTimeField, m: i64, budget: f64, seed: u64) -> PyResult<(PySpaceTimeField, f64, String)> {
    let opts = RegularizeOptions { seed, ..Default::default() };
    let r = resonance::regularize(&field.inner, m, budget, &opts).map_err(err)?;
    Ok((PySpaceTimeField { inner: r.field }, r.shift, r.report.verdict.to_string()))
}

#[pyfunction]
fn solve_homological(w: &PySpaceTimeField, m: i64) -> PyResult<PySpaceTimeField> {
    Ok(PySpaceTimeField { inner: nf::solve_homological(&w.inner, m).map_err(err)? })
}

#[pyfunction]
fn homological_residual(w: &PySpaceTimeField, beta: &PySpaceTimeField, m: i64) -> PyResult<f64> {
    nf::homological_residual(&w.inner, &beta.inner, m).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (field, m, epsilon, order=1))]
fn normal_form_reduce(field: &PySpaceTimeField, m: i64, epsilon: f64, order: usize) -> PyResult<PyNormalForm> {
    Ok(PyNormalForm { inner: nf::normal_form_reduce(&field.inner, m, epsilon, order).map_err(err)? })
}

#[pyfunction]
fn constant_coefficient_reduce<'py>(py: Python<'py>, x_eff: &PyTorusField) -> PyResult<Bound<'py, PyAny>> {
    let cc = nf::constant_coefficient_reduce(&x_eff.inner).map_err(err)?;
    to_py(py, &serde_json::json!({ "m_hat": cc.m_hat, "equation_residual": cc.equation_residual, "flatness": cc.flatness, "lambda": cc.lambda }))
}

#[pyfunction]
#[pyo3(signature = (x_field, sigma=0.01))]
fn build_escape(x_field: &PyTorusField, sigma: f64) -> PyResult<PyEscape> {
    Ok(PyEscape { inner: cd::build_escape(&x_field.inner, sigma).map_err(err)? })
}

#[pyfunction]
#[pyo3(signature = (x_field, x0, xi0, t, rtol=1e-12))]
fn flow_cotangent(x_field: &PyTorusField, x0: f64, xi0: f64, t: f64, rtol: f64) -> PyResult<(f64, f64)> {
    let z = cd::flow_cotangent(&x_field.inner, cd::CotangentPoint { x: x0, xi: xi0 }, t, rtol).map_err(err)?;
    Ok((z.x, z.xi))
}

/// Dense Weyl matrix of `p(x)` ("multiplier"), `iξp(x)` ("transport") or `ξp(x)` ("linear").
#[pyfunction]
fn weyl_matrix(kind: &str, p: &PyTorusField, cutoff: usize) -> PyResult<Vec<Vec<Complex64>>> {
    let sym = match kind {
        "multiplier" => SymbolRep::multiplier(&p.inner),
        "transport" => SymbolRep::transport(&p.inner),
        "linear" => SymbolRep::linear(&p.inner),
        other => return Err(RtlError::new_err(format!("unknown symbol kind {other:?}"))),
    };
    Ok(wc::weyl_matrix(&sym, cutoff).to_dense())
}

#[pyfunction]
fn circle_datum(xi0: i64, cutoff: usize) -> PyResult<PyStateVector> {
    Ok(PyStateVector { inner: evolve::circle_datum(xi0, cutoff).map_err(err)? })
}

/// Integrate `u_t = w u_x + ½w_x u` with `w = m + εV`; returns times, norms per `s` and diagnostics.
#[pyfunction]
#[pyo3(signature = (field, m, epsilon, u0, horizon, cutoff, dt=None, s_list=vec![1.0], sample_interval=None))]
#[allow(clippy::too_many_arguments)]
fn integrate<'py>(
    py: Python<'py>,
    field: &PySpaceTimeField,
    m: i64,
    epsilon: f64,
    u0: &PyStateVector,
    horizon: f64,
    cutoff: usize,
    dt: Option<f64>,
    s_list: Vec<f64>,
    sample_interval: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let w = TransportCoefficient::original(&field.inner, m, epsilon);
    let opts = IntegrateOptions { dt, s_list, sample_interval, ..Default::default() };
    let traj = evolve::integrate(&w, &u0.inner, horizon, cutoff, &opts).map_err(err)?;
    to_py(
        py,
        &serde_json::json!({
            "times": traj.times,
            "norm_series": traj.norm_series,
            "l2_drift": traj.l2_drift,
            "max_step_defect": traj.max_step_defect,
            "dt": traj.scheme.dt,
        }),
    )
}

#[pyfunction]
#[pyo3(signature = (field, m, epsilon, order=1, s_list=vec![1.0], horizon_factor=1.0, cutoff=256, xi0=20, dt=None))]
#[allow(clippy::too_many_arguments)]
fn stability_experiment<'py>(
    py: Python<'py>,
    field: &PySpaceTimeField,
    m: i64,
    epsilon: f64,
    order: usize,
    s_list: Vec<f64>,
    horizon_factor: f64,
    cutoff: usize,
    xi0: i64,
    dt: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let opts = StabilityOptions { cutoff, xi0, dt, ..Default::default() };
    let r = evolve::stability_experiment(&field.inner, m, epsilon, order, &s_list, horizon_factor, &opts).map_err(err)?;
    to_py(py, &r)
}

#[pyfunction]
#[pyo3(signature = (field, m, epsilon, s=1.0, horizon=200.0, xi0=40, cutoff=1024, dt=None))]
#[allow(clippy::too_many_arguments)]
fn instability_experiment<'py>(
    py: Python<'py>,
    field: &PySpaceTimeField,
    m: i64,
    epsilon: f64,
    s: f64,
    horizon: f64,
    xi0: i64,
    cutoff: usize,
    dt: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let opts = InstabilityOptions { cutoff, dt, ..Default::default() };
    let r = evolve::instability_experiment(&field.inner, m, epsilon, s, horizon, xi0, &opts).map_err(err)?;
    to_py(py, &r)
}

#[pymodule]
pub fn rtl(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("RtlError", m.py().get_type::<RtlError>())?;
    m.add_class::<PyTorusField>()?;
    m.add_class::<PySpaceTimeField>()?;
    m.add_class::<PyStateVector>()?;
    m.add_class::<PyNormalForm>()?;
    m.add_class::<PyEscape>()?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(classify_profile, m)?)?;
    m.add_function(wrap_pyfunction!(regularize, m)?)?;
    m.add_function(wrap_pyfunction!(solve_homological, m)?)?;
    m.add_function(wrap_pyfunction!(homological_residual, m)?)?;
    m.add_function(wrap_pyfunction!(normal_form_reduce, m)?)?;
    m.add_function(wrap_pyfunction!(constant_coefficient_reduce, m)?)?;
    m.add_function(wrap_pyfunction!(build_escape, m)?)?;
    m.add_function(wrap_pyfunction!(flow_cotangent, m)?)?;
    m.add_function(wrap_pyfunction!(weyl_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(circle_datum, m)?)?;
    m.add_function(wrap_pyfunction!(integrate, m)?)?;
    m.add_function(wrap_pyfunction!(stability_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(instability_experiment, m)?)?;
    Ok(())
}
