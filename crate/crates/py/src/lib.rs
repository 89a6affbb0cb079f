//! Python bindings: the security-probability operations and a simulation
//! driver, exposed in-process.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use shardecon::config::SimConfig;
use shardecon::output;
use shardecon::security;
use shardecon::sim::{IntervalRecord, Simulator};

/// A probability carried exactly (decimal numerator/denominator strings) with
/// a cached base-10 logarithm.
#[pyclass(frozen)]
struct Probability {
    inner: security::Probability,
}

#[pymethods]
impl Probability {
    /// Exact value as a `"numerator/denominator"` string.
    #[getter]
    fn exact(&self) -> String {
        format!(
            "{}/{}",
            self.inner.exact().numer(),
            self.inner.exact().denom()
        )
    }

    #[getter]
    fn log10(&self) -> f64 {
        self.inner.log10()
    }

    /// Lossy float value (0.0 once below f64 range).
    fn __float__(&self) -> f64 {
        self.inner.to_f64()
    }

    fn __repr__(&self) -> String {
        format!("Probability(log10={:.6})", self.inner.log10())
    }
}

/// Committee layout for the jury model.
#[pyclass(frozen)]
struct ShardConfig {
    inner: security::ShardConfig,
}

#[pymethods]
impl ShardConfig {
    #[new]
    fn new(n: u64, s: u64, threshold: u64, adversaries: u64) -> PyResult<Self> {
        let inner = security::ShardConfig::new(n, s, threshold, adversaries)
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(ShardConfig { inner })
    }

    #[getter]
    fn n(&self) -> u64 {
        self.inner.population()
    }

    #[getter]
    fn s(&self) -> u64 {
        self.inner.shards()
    }

    #[getter]
    fn m(&self) -> u64 {
        self.inner.shard_size()
    }

    #[getter]
    fn threshold(&self) -> u64 {
        self.inner.threshold()
    }

    #[getter]
    fn adversaries(&self) -> u64 {
        self.inner.adversaries()
    }

    /// Exact maximized probability of the adversary reaching the verdict
    /// threshold in one shard.
    fn jury_failure(&self) -> Probability {
        Probability {
            inner: security::jury_failure(&self.inner),
        }
    }

    /// Closed-form `(AD/(T*s))^T`, clamped to [0, 1].
    fn jury_failure_approx(&self) -> Probability {
        Probability {
            inner: security::jury_failure_approx(&self.inner),
        }
    }

    fn __repr__(&self) -> String {
        format!(
            "ShardConfig(n={}, s={}, m={}, threshold={}, adversaries={})",
            self.inner.population(),
            self.inner.shards(),
            self.inner.shard_size(),
            self.inner.threshold(),
            self.inner.adversaries()
        )
    }
}

/// Exact hypergeometric tail `Pr[X >= k]` (t adversaries in population n,
/// sample size m).
#[pyfunction]
fn hypergeom_tail(n: u64, t: u64, m: u64, k: u64) -> PyResult<Probability> {
    security::hypergeom_tail(n, t, m, k)
        .map(|inner| Probability { inner })
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Largest shard count whose jury failure probability stays within `budget`
/// (a decimal string like "1e-6"); 0 when even one shard exceeds it.
#[pyfunction]
fn max_shards(n: u64, adversaries: u64, threshold_frac: f64, budget: &str) -> PyResult<u64> {
    let budget = security::Probability::parse_decimal(budget)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    security::max_shards(n, adversaries, threshold_frac, &budget)
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

fn record_to_dict<'py>(py: Python<'py>, rec: &IntervalRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("height", rec.height)?;
    d.set_item("m0", rec.m0.to_string())?;
    d.set_item("m1", rec.m1.to_string())?;
    d.set_item("m2", rec.m2.to_string())?;
    d.set_item("ratio", rec.ratio)?;
    d.set_item("q", rec.q)?;
    d.set_item("p", rec.p.to_string())?;
    d.set_item("r", rec.r.to_string())?;
    d.set_item("gpl", rec.gpl)?;
    d.set_item("gn", rec.gn)?;
    d.set_item("i", rec.i)?;
    d.set_item("s", rec.s)?;
    d.set_item("capacity", rec.capacity)?;
    d.set_item("pending", rec.pending)?;
    d.set_item("registrations", rec.registrations)?;
    d.set_item("maturations", rec.maturations)?;
    d.set_item("confiscations", rec.confiscations)?;
    d.set_item("maintainers", rec.maintainers)?;
    Ok(d)
}

/// An economy simulation built from config text (`key = value` lines).
#[pyclass]
struct Simulation {
    config: SimConfig,
}

#[pymethods]
impl Simulation {
    #[new]
    #[pyo3(signature = (config_text, seed=None))]
    fn new(config_text: &str, seed: Option<u64>) -> PyResult<Self> {
        let config = SimConfig::parse(config_text, seed)
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Simulation { config })
    }

    /// Runs the configured horizon; returns one dict per interval.
    fn run<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyList>> {
        let out = Simulator::run(self.config.clone(), 1)
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        let rows = PyList::empty(py);
        for rec in &out.records {
            rows.append(record_to_dict(py, rec)?)?;
        }
        Ok(rows)
    }

    /// Runs the configured horizon; returns the intervals CSV as a string.
    fn run_csv(&self) -> PyResult<String> {
        let out = Simulator::run(self.config.clone(), 1)
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        let mut buf = Vec::new();
        output::write_intervals_csv(&mut buf, &out.records)
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        String::from_utf8(buf).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }
}

#[pymodule]
fn shardecon_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Probability>()?;
    m.add_class::<ShardConfig>()?;
    m.add_class::<Simulation>()?;
    m.add_function(wrap_pyfunction!(hypergeom_tail, m)?)?;
    m.add_function(wrap_pyfunction!(max_shards, m)?)?;
    Ok(())
}
