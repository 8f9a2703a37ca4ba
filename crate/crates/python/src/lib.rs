//! Python bindings for the circle-map parameter-exclusion laboratory.

use circlemap_core::conditions::{check_mis, check_w, check_x, check_y};
use circlemap_core::config::parse_config as parse_run_config;
use circlemap_core::constants::{build_profile, ConstantsProfile, EmpiricalOverrides, ProfileKind, ProfileSpec, DEFAULT_BETA, DEFAULT_SPECIAL_STEPS};
use circlemap_core::exclusion::{run_exclusion_bisect, run_exclusion_mc, sweep_l};
use circlemap_core::lemmas::{verify as verify_lemma, LemmaError, LemmaId, LemmaParams};
use circlemap_core::map::{DriveFunction, Model};
use circlemap_core::orbit::{compute_ladder, critical_orbit, iterate_orbit, transversality as transversality_pair, OrbitError};
use circlemap_core::returns::{decompose, CriticalOrbits, ReturnMode};
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn orbit_err(e: OrbitError) -> PyErr {
    PyArithmeticError::new_err(e.to_string())
}

fn lemma_err(e: LemmaError) -> PyErr {
    match e {
        LemmaError::Oracle { .. } => PyArithmeticError::new_err(e.to_string()),
        _ => value_err(e),
    }
}

/// Converts through JSON into plain Python containers.
fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(value_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

/// The family `f(θ) = θ + a + L·Φ(θ)` at a fixed `L`.
#[pyclass(name = "Model", module = "circlemap", frozen)]
struct PyModel {
    inner: Model,
}

#[pymethods]
impl PyModel {
    /// `Φ = sin(2πθ)` unless Fourier coefficients are given.
    #[new]
    #[pyo3(signature = (l, cos=None, sin=None))]
    fn new(l: f64, cos: Option<Vec<f64>>, sin: Option<Vec<f64>>) -> PyResult<Self> {
        let phi = if cos.is_none() && sin.is_none() {
            DriveFunction::Sine
        } else {
            DriveFunction::fourier(cos.unwrap_or_default(), sin.unwrap_or_default()).map_err(value_err)?
        };
        Ok(Self {
            inner: Model::new(phi, l).map_err(value_err)?,
        })
    }

    #[getter]
    fn l(&self) -> f64 {
        self.inner.l()
    }

    #[getter]
    fn drive(&self) -> String {
        self.inner.phi().name()
    }

    #[getter]
    fn critical_points(&self) -> Vec<f64> {
        self.inner.critical().points().to_vec()
    }

    fn eval_map(&self, a: f64, theta: f64) -> f64 {
        self.inner.family(a).eval_map(theta)
    }

    fn eval_deriv(&self, a: f64, theta: f64) -> f64 {
        self.inner.family(a).eval_deriv(theta)
    }

    /// Orbit of `theta`, or of the critical value `c_0(a)` of critical point `critical`.
    #[pyo3(signature = (a, n, theta=None, critical=0, beta=DEFAULT_BETA))]
    fn orbit<'py>(&self, py: Python<'py>, a: f64, n: usize, theta: Option<f64>, critical: usize, beta: f64) -> PyResult<Bound<'py, PyAny>> {
        let family = self.inner.family(a);
        let trace = match theta {
            Some(t) => iterate_orbit(&family, self.inner.critical(), t, n),
            None => {
                if critical >= self.inner.critical().len() {
                    return Err(value_err(format!("critical index {critical} out of range")));
                }
                critical_orbit(&family, self.inner.critical(), critical, n)
            }
        };
        let dict = to_py(py, &trace)?;
        if let Ok(ladder) = compute_ladder(&trace, beta) {
            let d: Vec<f64> = (0..ladder.horizon()).map(|i| ladder.d(i)).collect();
            let big_d: Vec<f64> = (1..=ladder.horizon()).map(|i| ladder.big_d(i)).collect();
            dict.set_item("d", d)?;
            dict.set_item("big_d", big_d)?;
        }
        Ok(dict)
    }

    /// `(recursion, closed_form)` for `c_n'(a) / (f^n)'(c_0)`.
    #[pyo3(signature = (a, n, critical=0))]
    fn transversality(&self, a: f64, n: usize, critical: usize) -> PyResult<(f64, f64)> {
        if critical >= self.inner.critical().len() {
            return Err(value_err(format!("critical index {critical} out of range")));
        }
        let trace = critical_orbit(&self.inner.family(a), self.inner.critical(), critical, n);
        let t = transversality_pair(&trace, n).map_err(orbit_err)?;
        Ok((t.recursion, t.closed_form))
    }

    /// Constants at this `L`; `kind` is `paper-asymptotic` or `empirical`.
    #[pyo3(signature = (kind="paper-asymptotic", beta=DEFAULT_BETA, alpha=None, special_steps=DEFAULT_SPECIAL_STEPS, sigma=None, delta0=None, delta=None, lambda_=None))]
    #[allow(clippy::too_many_arguments)]
    fn profile(
        &self,
        kind: &str,
        beta: f64,
        alpha: Option<f64>,
        special_steps: usize,
        sigma: Option<f64>,
        delta0: Option<f64>,
        delta: Option<f64>,
        lambda_: Option<f64>,
    ) -> PyResult<PyProfile> {
        let kind = match kind {
            "paper-asymptotic" => ProfileKind::PaperAsymptotic,
            "empirical" => {
                let need = |v: Option<f64>, name: &str| v.ok_or_else(|| value_err(format!("empirical profile needs {name}")));
                ProfileKind::Empirical(EmpiricalOverrides {
                    sigma: need(sigma, "sigma")?,
                    delta0: need(delta0, "delta0")?,
                    delta: need(delta, "delta")?,
                    lambda: lambda_,
                })
            }
            other => return Err(value_err(format!("unknown profile kind '{other}'"))),
        };
        let spec = ProfileSpec {
            beta,
            alpha,
            special_steps,
            kind,
        };
        let inner = build_profile(self.inner.phi(), self.inner.l(), &spec).map_err(value_err)?;
        Ok(PyProfile { inner })
    }

    fn __repr__(&self) -> String {
        format!("Model(l={:?}, drive='{}')", self.inner.l(), self.inner.phi().name())
    }
}

/// Resolved constants `K0, σ, λ, α, δ0, δ, K, K'` at one `L`.
#[pyclass(name = "Profile", module = "circlemap", frozen)]
struct PyProfile {
    inner: ConstantsProfile,
}

#[pymethods]
impl PyProfile {
    #[getter]
    fn l(&self) -> f64 {
        self.inner.l
    }
    #[getter]
    fn beta(&self) -> f64 {
        self.inner.beta
    }
    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }
    #[getter]
    fn k0(&self) -> f64 {
        self.inner.k0
    }
    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.sigma
    }
    #[getter]
    fn lambda_(&self) -> f64 {
        self.inner.lambda
    }
    #[getter]
    fn lambda0(&self) -> f64 {
        self.inner.lambda0
    }
    #[getter]
    fn delta0(&self) -> f64 {
        self.inner.delta0
    }
    #[getter]
    fn delta(&self) -> f64 {
        self.inner.delta
    }
    #[getter]
    fn k(&self) -> f64 {
        self.inner.k
    }
    #[getter]
    fn k_prime(&self) -> f64 {
        self.inner.k_prime
    }
    #[getter]
    fn special_steps(&self) -> usize {
        self.inner.special_steps
    }
    #[getter]
    fn vacuous(&self) -> bool {
        self.inner.vacuous
    }

    fn measure_lower_bound(&self) -> Option<f64> {
        self.inner.measure_lower_bound()
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "Profile(l={:?}, kind='{}', sigma={:?}, delta={:?}, vacuous={})",
            self.inner.l,
            self.inner.kind.label(),
            self.inner.sigma,
            self.inner.delta,
            self.inner.vacuous
        )
    }
}

fn same_l(model: &PyModel, profile: &PyProfile) -> PyResult<()> {
    if model.inner.l() != profile.inner.l {
        return Err(value_err("model and profile were built for different L"));
    }
    Ok(())
}

/// Condition reports `(mis)`, X, Y, W for every critical point, as dicts.
#[pyfunction]
fn check<'py>(py: Python<'py>, model: &PyModel, profile: &PyProfile, a: f64, n: usize) -> PyResult<Bound<'py, PyAny>> {
    same_l(model, profile)?;
    let p = &profile.inner;
    let orbits = CriticalOrbits::compute(&model.inner, a, n, p.beta);
    let h = orbits.horizon();
    let mut reports = Vec::new();
    for (c, t) in orbits.traces.iter().enumerate() {
        reports.push(check_mis(t, p, h).map_err(orbit_err)?);
        reports.push(check_x(t, p, h).map_err(orbit_err)?);
        reports.push(check_y(t, p, h).map_err(orbit_err)?);
        let dec = decompose(t, model.inner.critical(), &orbits.bound, p, ReturnMode::Deep).map_err(value_err)?;
        let mut w = check_w(&dec, p, h).map_err(orbit_err)?;
        w.critical_index = Some(c);
        reports.push(w);
    }
    to_py(py, &reports)
}

/// Return decomposition of each critical orbit.
#[pyfunction]
#[pyo3(signature = (model, profile, a, n, deep=true))]
fn returns<'py>(py: Python<'py>, model: &PyModel, profile: &PyProfile, a: f64, n: usize, deep: bool) -> PyResult<Bound<'py, PyAny>> {
    same_l(model, profile)?;
    let mode = if deep { ReturnMode::Deep } else { ReturnMode::Shallow };
    let orbits = CriticalOrbits::compute(&model.inner, a, n, profile.inner.beta);
    let decs = orbits
        .traces
        .iter()
        .map(|t| decompose(t, model.inner.critical(), &orbits.bound, &profile.inner, mode).map_err(value_err))
        .collect::<PyResult<Vec<_>>>()?;
    to_py(py, &decs)
}

/// Monte Carlo survivor fractions; returns `(record, outcomes)`.
#[pyfunction]
#[pyo3(signature = (model, profile, n_max, samples, seed=0, strict=false))]
fn exclude_mc<'py>(
    py: Python<'py>,
    model: &PyModel,
    profile: &PyProfile,
    n_max: usize,
    samples: usize,
    seed: u64,
    strict: bool,
) -> PyResult<(Bound<'py, PyAny>, Bound<'py, PyAny>)> {
    same_l(model, profile)?;
    let (record, outcomes) = py
        .detach(|| run_exclusion_mc(&model.inner, &profile.inner, n_max, samples, seed, strict))
        .map_err(value_err)?;
    Ok((to_py(py, &record)?, to_py(py, &outcomes)?))
}

/// Adaptive bisection of `[0, 1)`; returns `(record, cells)`.
#[pyfunction]
#[pyo3(signature = (model, profile, n_max, min_width=1e-4, strict=false))]
fn exclude_bisect<'py>(
    py: Python<'py>,
    model: &PyModel,
    profile: &PyProfile,
    n_max: usize,
    min_width: f64,
    strict: bool,
) -> PyResult<(Bound<'py, PyAny>, Bound<'py, PyAny>)> {
    same_l(model, profile)?;
    let (record, cells) = py
        .detach(|| run_exclusion_bisect(&model.inner, &profile.inner, n_max, min_width, strict))
        .map_err(value_err)?;
    Ok((to_py(py, &record)?, to_py(py, &cells)?))
}

/// Sweep over `l_list` from a TOML run configuration; returns the records.
#[pyfunction]
fn sweep<'py>(py: Python<'py>, config: &str) -> PyResult<Bound<'py, PyAny>> {
    let cfg = parse_run_config(config).map_err(value_err)?;
    let phi = cfg.drive_function().map_err(value_err)?;
    let records = py
        .detach(|| sweep_l(&phi, &cfg.l_values(), &cfg.profile_rule(), cfg.n_max, cfg.samples, cfg.seed, cfg.strict))
        .map_err(value_err)?;
    to_py(py, &records)
}

/// Validated run configuration as a dict.
#[pyfunction]
fn parse_config<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &parse_run_config(text).map_err(value_err)?)
}

/// Lemma report for one of dist, trans, samp, wrap, bound, outside, expansion, brprop.
#[pyfunction]
#[pyo3(signature = (lemma, model, profile, trials=1000, n_max=None, seed=0))]
fn verify<'py>(
    py: Python<'py>,
    lemma: &str,
    model: &PyModel,
    profile: &PyProfile,
    trials: usize,
    n_max: Option<usize>,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    same_l(model, profile)?;
    let id: LemmaId = lemma.parse().map_err(lemma_err)?;
    let params = LemmaParams {
        trials,
        n_max: n_max.unwrap_or_else(|| id.default_n_max(profile.inner.special_steps)),
        seed,
    };
    let report = py.detach(|| verify_lemma(id, &model.inner, &profile.inner, &params)).map_err(lemma_err)?;
    to_py(py, &report)
}

#[pymodule]
fn circlemap(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyProfile>()?;
    m.add_function(wrap_pyfunction!(check, m)?)?;
    m.add_function(wrap_pyfunction!(returns, m)?)?;
    m.add_function(wrap_pyfunction!(exclude_mc, m)?)?;
    m.add_function(wrap_pyfunction!(exclude_bisect, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(parse_config, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    Ok(())
}
