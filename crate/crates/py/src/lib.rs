//! Python bindings for the `crpfb` crate.
//!
//! Records are passed as lists of Python `complex`. Scenarios travel as
//! [`Scenario`] objects that can be built from the same JSON documents the
//! command-line tool reads.

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use crpfb::crpfb::BankConfig;
use crpfb::gevfit;
use crpfb::harness::{self, SweepAxis};
use crpfb::model::ModelConfig;
use crpfb::signalgen::{self, ComplexSeries};

fn to_py(e: crpfb::Error) -> PyErr {
    if e.is_config() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn record(sc: &harness::Scenario, samples: Vec<Complex64>) -> PyResult<ComplexSeries> {
    ComplexSeries::new(0.0, sc.model.ts, samples).map_err(to_py)
}

/// Experiment configuration: model, bank, noise, signal template and baseline.
#[pyclass(module = "crpfb_py", from_py_object)]
#[derive(Clone)]
pub struct Scenario {
    inner: harness::Scenario,
}

#[pymethods]
impl Scenario {
    /// S1 test signal over `t_obs` seconds with the standard FOV and bank.
    #[staticmethod]
    #[pyo3(signature = (t_obs = 1.0))]
    fn s1(t_obs: f64) -> PyResult<Self> {
        let inner = harness::Scenario::s1(t_obs);
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn s2() -> Self {
        Self { inner: harness::Scenario::s2() }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: harness::Scenario = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        crpfb::numfmt::to_json_pretty(&self.inner).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    /// Copy with one of `b`, `dT`, `q`, `M`, `N` replaced.
    fn with_value(&self, axis: &str, value: f64) -> PyResult<Self> {
        let axis = SweepAxis::parse(axis).map_err(to_py)?;
        Ok(Self { inner: axis.apply(&self.inner, value).map_err(to_py)? })
    }

    #[getter]
    fn n_samples(&self) -> PyResult<usize> {
        Ok(self.inner.model.layout().map_err(to_py)?.n_samples)
    }

    #[getter]
    fn ts(&self) -> f64 {
        self.inner.model.ts
    }

    #[getter]
    fn m_filters(&self) -> usize {
        self.inner.bank.m_filters
    }

    #[setter]
    fn set_m_filters(&mut self, m: usize) -> PyResult<()> {
        let mut next = self.inner.clone();
        next.bank.m_filters = m;
        next.validate().map_err(to_py)?;
        self.inner = next;
        Ok(())
    }

    #[getter]
    fn snr_db(&self) -> f64 {
        self.inner.signal.snr_db
    }

    #[setter]
    fn set_snr_db(&mut self, snr_db: f64) -> PyResult<()> {
        if !snr_db.is_finite() {
            return Err(PyValueError::new_err("snr_db must be finite"));
        }
        self.inner.signal.snr_db = snr_db;
        Ok(())
    }

    fn __repr__(&self) -> String {
        let s = &self.inner;
        format!(
            "Scenario(kind={:?}, T={}, M={}, N={}, q={}, snr_db={})",
            s.signal.kind, s.model.t_obs, s.bank.m_filters, s.bank.crpf.n_particles, s.bank.crpf.q, s.signal.snr_db
        )
    }
}

/// Bank output: per-block winners and the concatenated winning trace.
#[pyclass(module = "crpfb_py", get_all)]
pub struct BankResult {
    m_min: Vec<usize>,
    cum_cost: f64,
    step_costs: Vec<f64>,
    /// `(f, fdot)` per subinterval.
    estimates: Vec<(f64, f64)>,
    metric: f64,
}

#[pymethods]
impl BankResult {
    fn __repr__(&self) -> String {
        format!("BankResult(m_min={:?}, cum_cost={}, psi={})", self.m_min, self.cum_cost, self.metric)
    }
}

#[pyclass(module = "crpfb_py", get_all)]
pub struct Decision {
    psi: f64,
    vt: f64,
    declared: bool,
}

#[pymethods]
impl Decision {
    fn __repr__(&self) -> String {
        format!("Decision(psi={}, vt={}, declared={})", self.psi, self.vt, if self.declared { "True" } else { "False" })
    }
}

/// GEV distribution with shape `kappa`, location `rho`, scale `eta`.
#[pyclass(module = "crpfb_py", from_py_object)]
#[derive(Clone, Copy)]
pub struct GevParams {
    inner: gevfit::GevParams,
}

#[pymethods]
impl GevParams {
    #[new]
    fn new(kappa: f64, rho: f64, eta: f64) -> PyResult<Self> {
        Ok(Self { inner: gevfit::GevParams::new(kappa, rho, eta).map_err(to_py)? })
    }

    #[getter]
    fn kappa(&self) -> f64 {
        self.inner.kappa
    }

    #[getter]
    fn rho(&self) -> f64 {
        self.inner.rho
    }

    #[getter]
    fn eta(&self) -> f64 {
        self.inner.eta
    }

    fn cdf(&self, x: f64) -> f64 {
        gevfit::cdf(x, &self.inner)
    }

    fn pdf(&self, x: f64) -> f64 {
        gevfit::pdf(x, &self.inner)
    }

    fn quantile(&self, p: f64) -> PyResult<f64> {
        gevfit::quantile(p, &self.inner).map_err(to_py)
    }

    /// `V_T = G^-1(1 - pfa)`.
    fn threshold(&self, pfa: f64) -> PyResult<f64> {
        gevfit::quantile(1.0 - pfa, &self.inner).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("GevParams(kappa={}, rho={}, eta={})", self.inner.kappa, self.inner.rho, self.inner.eta)
    }
}

#[pyclass(module = "crpfb_py", get_all)]
pub struct GevFit {
    params: GevParams,
    n_samples: usize,
    neg_log_lik: f64,
    ks_stat: f64,
    converged: bool,
}

#[pyclass(module = "crpfb_py", get_all)]
pub struct Calibration {
    pfa: f64,
    v_t_empirical: f64,
    v_t_gev: f64,
    gev: GevParams,
    m_c: usize,
    n_fit: usize,
    metrics: Vec<f64>,
}

/// Noisy record of H1 trial `trial`: the record the harness would use.
#[pyfunction]
#[pyo3(signature = (scenario, seed, trial = 0, snr_db = None))]
fn synthesize(py: Python<'_>, scenario: &Scenario, seed: u64, trial: u64, snr_db: Option<f64>) -> PyResult<Vec<Complex64>> {
    let sc = &scenario.inner;
    let snr = snr_db.unwrap_or(sc.signal.snr_db);
    let (_, z) = py.detach(|| harness::h1_record(sc, snr, seed, trial)).map_err(to_py)?;
    Ok(z.samples)
}

/// Complex generalized Gaussian noise samples.
#[pyfunction]
#[pyo3(signature = (n, seed, shape = 0.5, variance = 1.0))]
fn sample_noise(n: usize, seed: u64, shape: f64, variance: f64) -> PyResult<Vec<Complex64>> {
    signalgen::sample_cggd(&signalgen::NoiseSpec { shape, variance }, n, seed).map_err(to_py)
}

/// True `(f, fdot)` of H1 trial `trial` at time `t`.
#[pyfunction]
#[pyo3(signature = (scenario, seed, t, trial = 0))]
fn true_if(scenario: &Scenario, seed: u64, t: f64, trial: u64) -> PyResult<(f64, f64)> {
    let spec = scenario.inner.signal_spec(scenario.inner.signal.snr_db, seed, trial).map_err(to_py)?;
    signalgen::true_if(&spec, t).map_err(to_py)
}

fn bank_for(sc: &harness::Scenario, seed: u64) -> BankConfig {
    BankConfig { seed, ..sc.bank }
}

#[pyfunction]
fn run_bank(py: Python<'_>, scenario: &Scenario, samples: Vec<Complex64>, seed: u64) -> PyResult<BankResult> {
    let sc = &scenario.inner;
    let z = record(sc, samples)?;
    let (result, metric) = py
        .detach(|| {
            let r = crpfb::crpfb::run_bank(&z, &sc.model, &bank_for(sc, seed))?;
            let psi = crpfb::detector::test_metric(&z, &r, &sc.model)?;
            Ok::<_, crpfb::Error>((r, psi))
        })
        .map_err(to_py)?;
    Ok(BankResult {
        m_min: result.m_min,
        cum_cost: result.trace.cum_cost,
        step_costs: result.trace.step_costs,
        estimates: result.trace.estimates.iter().map(|s| (s.f, s.fdot)).collect(),
        metric,
    })
}

#[pyfunction]
fn detect(py: Python<'_>, scenario: &Scenario, samples: Vec<Complex64>, threshold: f64, seed: u64) -> PyResult<Decision> {
    let sc = &scenario.inner;
    let z = record(sc, samples)?;
    let (d, _) = py
        .detach(|| crpfb::detector::detect(&z, &sc.model, &bank_for(sc, seed), threshold))
        .map_err(to_py)?;
    Ok(Decision { psi: d.metric, vt: d.threshold, declared: d.declared })
}

/// IF RMSE of `estimates` against the truth of H1 trial `trial`.
#[pyfunction]
#[pyo3(signature = (scenario, estimates, seed, trial = 0))]
fn rmse(scenario: &Scenario, estimates: Vec<(f64, f64)>, seed: u64, trial: u64) -> PyResult<f64> {
    let sc = &scenario.inner;
    let spec = sc.signal_spec(sc.signal.snr_db, seed, trial).map_err(to_py)?;
    let mut trace = crpfb::crpf::FilterTrace::default();
    for (f, fdot) in estimates {
        trace.push(crpfb::model::StateVector::new(f, fdot), 0.0);
    }
    harness::rmse_eval(&spec, &trace, &sc.model).map_err(to_py)
}

#[pyfunction]
fn fit_gev(py: Python<'_>, samples: Vec<f64>) -> PyResult<GevFit> {
    let fit = py.detach(|| gevfit::fit_mle(&samples, None)).map_err(to_py)?;
    Ok(GevFit {
        params: GevParams { inner: fit.params },
        n_samples: fit.n_samples,
        neg_log_lik: fit.neg_log_lik,
        ks_stat: fit.ks_stat,
        converged: fit.converged,
    })
}

#[pyfunction]
fn empirical_threshold(metrics: Vec<f64>, pfa: f64) -> PyResult<f64> {
    harness::empirical_threshold(&metrics, pfa).map_err(to_py)
}

#[pyfunction]
fn wilson_interval(successes: usize, n: usize) -> (f64, f64) {
    harness::wilson_interval(successes, n)
}

#[pyfunction]
#[pyo3(signature = (scenario, pfa, m_c, n_fit, seed))]
fn calibrate(py: Python<'_>, scenario: &Scenario, pfa: f64, m_c: usize, n_fit: usize, seed: u64) -> PyResult<Calibration> {
    let sc = &scenario.inner;
    let (cal, metrics) = py.detach(|| harness::calibrate(sc, pfa, m_c, n_fit, seed)).map_err(to_py)?;
    Ok(Calibration {
        pfa: cal.pfa,
        v_t_empirical: cal.v_t_empirical,
        v_t_gev: cal.v_t_gev,
        gev: GevParams { inner: cal.gev.params },
        m_c: cal.m_c,
        n_fit: cal.n_fit,
        metrics,
    })
}

/// Rows of `(snr_db, pd, ci_halfwidth, rmse_hz)`.
#[pyfunction]
fn pd_sweep(
    py: Python<'_>,
    scenario: &Scenario,
    snr_grid: Vec<f64>,
    threshold: f64,
    trials: usize,
    seed: u64,
) -> PyResult<Vec<(f64, f64, f64, f64)>> {
    let sc = &scenario.inner;
    let rows = py.detach(|| harness::pd_sweep(sc, &snr_grid, threshold, trials, seed)).map_err(to_py)?;
    Ok(rows.iter().map(|r| (r.value, r.pd, r.ci_halfwidth, r.rmse)).collect())
}

/// Standard model configuration as JSON, for building custom scenarios.
#[pyfunction]
#[pyo3(signature = (t_obs = 1.0))]
fn standard_model_json(t_obs: f64) -> PyResult<String> {
    serde_json::to_string(&ModelConfig::standard(t_obs)).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
fn crpfb_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Scenario>()?;
    m.add_class::<BankResult>()?;
    m.add_class::<Decision>()?;
    m.add_class::<GevParams>()?;
    m.add_class::<GevFit>()?;
    m.add_class::<Calibration>()?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(sample_noise, m)?)?;
    m.add_function(wrap_pyfunction!(true_if, m)?)?;
    m.add_function(wrap_pyfunction!(run_bank, m)?)?;
    m.add_function(wrap_pyfunction!(detect, m)?)?;
    m.add_function(wrap_pyfunction!(rmse, m)?)?;
    m.add_function(wrap_pyfunction!(fit_gev, m)?)?;
    m.add_function(wrap_pyfunction!(empirical_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(wilson_interval, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    m.add_function(wrap_pyfunction!(pd_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(standard_model_json, m)?)?;
    Ok(())
}
