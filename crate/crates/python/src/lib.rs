//! Python module `forecast_market`.

use forecast_market::allocation::{self, AllocationConfig, ShapleyMethod};
use forecast_market::combination::{self, AvailabilityMask, QuantileLevel};
use forecast_market::market::{self, Combiner, EngineConfig, LedgerEntry, MarketTask};
use forecast_market::scenario::{self, Method, ScenarioConfig};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn level(tau: f64) -> PyResult<QuantileLevel> {
    QuantileLevel::new(tau).map_err(err)
}

/// `None` means every seller is present.
fn mask(missing: Option<Vec<bool>>, n: usize) -> AvailabilityMask {
    missing.map_or_else(
        || AvailabilityMask::all_present(n),
        AvailabilityMask::from_missing,
    )
}

#[pyfunction]
fn quantile_loss(tau: f64, y: f64, y_hat: f64) -> PyResult<f64> {
    Ok(combination::quantile_loss(level(tau)?, y, y_hat))
}

#[pyfunction]
fn loss_subgradient(tau: f64, y: f64, y_hat: f64) -> PyResult<f64> {
    Ok(combination::loss_subgradient_pred(level(tau)?, y, y_hat))
}

#[pyfunction]
fn project_to_simplex(v: Vec<f64>) -> PyResult<Vec<f64>> {
    combination::project_to_simplex(&v).map_err(err)
}

/// Online quantile combiner over `n` sellers.
#[pyclass(name = "QuantileModel")]
struct PyQuantileModel {
    inner: combination::QuantileModel,
}

#[pymethods]
impl PyQuantileModel {
    #[new]
    #[pyo3(signature = (tau, n, eta = combination::DEFAULT_LEARNING_RATE))]
    fn new(tau: f64, n: usize, eta: f64) -> PyResult<Self> {
        Ok(Self {
            inner: combination::QuantileModel::new(level(tau)?, n, eta).map_err(err)?,
        })
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights().to_vec()
    }

    /// Correction matrix as a list of rows.
    #[getter]
    fn correction(&self) -> Vec<Vec<f64>> {
        self.inner
            .correction()
            .chunks(self.inner.n())
            .map(<[f64]>::to_vec)
            .collect()
    }

    #[pyo3(signature = (missing = None))]
    fn effective_weights(&self, missing: Option<Vec<bool>>) -> PyResult<Vec<f64>> {
        let alpha = mask(missing, self.inner.n());
        Ok(self.inner.effective_weights(&alpha).map_err(err)?.0)
    }

    fn qr_predict(&self, x: Vec<f64>) -> PyResult<f64> {
        let alpha = AvailabilityMask::all_present(self.inner.n());
        self.inner.qr_predict(&x, &alpha).map_err(err)
    }

    /// Returns the pre-update prediction.
    fn qr_update(&mut self, x: Vec<f64>, y: f64) -> PyResult<f64> {
        let alpha = AvailabilityMask::all_present(self.inner.n());
        Ok(self.inner.qr_update(&x, &alpha, y).map_err(err)?.prediction)
    }

    #[pyo3(signature = (x, missing = None))]
    fn rqr_predict(&self, x: Vec<f64>, missing: Option<Vec<bool>>) -> PyResult<f64> {
        let alpha = mask(missing, self.inner.n());
        self.inner.rqr_predict(&x, &alpha).map_err(err)
    }

    /// Returns the pre-update prediction.
    #[pyo3(signature = (x, y, missing = None))]
    fn rqr_update(&mut self, x: Vec<f64>, y: f64, missing: Option<Vec<bool>>) -> PyResult<f64> {
        let alpha = mask(missing, self.inner.n());
        Ok(self
            .inner
            .rqr_update(&x, &alpha, y)
            .map_err(err)?
            .prediction)
    }
}

/// Exact Shapley values of the round's coalition game under `model`.
#[pyfunction]
#[pyo3(signature = (model, x, y, missing = None))]
fn shapley_exact(
    model: &PyQuantileModel,
    x: Vec<f64>,
    y: f64,
    missing: Option<Vec<bool>>,
) -> PyResult<Vec<f64>> {
    let alpha = mask(missing, model.inner.n());
    let x_hat = alpha.apply(&x);
    allocation::shapley_exact(&model.inner, &x_hat, &alpha, y).map_err(err)
}

/// A single-client market with an in-memory ledger.
#[pyclass(name = "Market")]
struct PyMarket {
    inner: market::Market,
}

#[pymethods]
impl PyMarket {
    #[new]
    #[pyo3(signature = (
        sellers, levels, horizon_steps = 1, combiner = "rqr", eta = combination::DEFAULT_LEARNING_RATE,
        delta = allocation::DEFAULT_DELTA, forgetting = allocation::DEFAULT_LAMBDA, permutations = None,
        seed = 0, task_id = "task"
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        sellers: Vec<String>,
        levels: Vec<f64>,
        horizon_steps: usize,
        combiner: &str,
        eta: f64,
        delta: f64,
        forgetting: f64,
        permutations: Option<usize>,
        seed: u64,
        task_id: &str,
    ) -> PyResult<Self> {
        let combiner = match combiner {
            "rqr" => Combiner::Rqr,
            "qr" => Combiner::Qr,
            other => return Err(PyValueError::new_err(format!("unknown combiner `{other}`"))),
        };
        let shapley = permutations.map_or(ShapleyMethod::Exact, |permutations| {
            ShapleyMethod::PermutationSampling { permutations }
        });
        let task = MarketTask::new(task_id, &levels, horizon_steps).map_err(err)?;
        let ids: Vec<&str> = sellers.iter().map(String::as_str).collect();
        let inner = market::Market::new(
            task,
            &ids,
            EngineConfig { combiner, eta },
            AllocationConfig {
                delta,
                lambda: forgetting,
                shapley,
            },
            seed,
        )
        .map_err(err)?;
        Ok(Self { inner })
    }

    fn register_seller(&mut self, seller: &str) -> PyResult<usize> {
        self.inner.register_seller(seller).map_err(err)
    }

    fn open_session(&mut self, t: u64) -> PyResult<()> {
        self.inner.open_session(t).map(|_| ()).map_err(err)
    }

    /// Values are laid out horizon-major: `values[h * m + q]`.
    fn submit(&mut self, t: u64, seller: &str, values: Vec<f64>) -> PyResult<()> {
        self.inner
            .submit_forecast(t, seller, &values)
            .map(|_| ())
            .map_err(err)
    }

    /// Closes the session and returns the combined forecast per instance.
    fn close(&mut self, t: u64) -> PyResult<Vec<f64>> {
        Ok(self.inner.close_and_aggregate(t).map_err(err)?.combined)
    }

    /// Settles and returns `{"totals": [...], "in_sample": [...], "out_of_sample": [...]}`.
    fn settle<'py>(
        &mut self,
        py: Python<'py>,
        t: u64,
        y: f64,
        utility: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let record = self.inner.settle_session(t, y, utility).map_err(err)?;
        let n = record.totals.len();
        let mut in_sample = vec![0.0; n];
        let mut out_of_sample = vec![0.0; n];
        for l in &record.levels {
            for i in 0..n {
                in_sample[i] += l.reward_is[i];
                out_of_sample[i] += l.reward_oos[i];
            }
        }
        let out = PyDict::new(py);
        out.set_item("totals", record.totals)?;
        out.set_item("in_sample", in_sample)?;
        out.set_item("out_of_sample", out_of_sample)?;
        Ok(out)
    }

    /// Cumulative payouts per seller.
    fn cumulative(&self) -> Vec<f64> {
        self.inner.cumulative().total.clone()
    }

    fn weights(&self) -> Vec<Vec<f64>> {
        self.inner
            .models()
            .iter()
            .map(|m| m.weights().to_vec())
            .collect()
    }

    /// The ledger as JSON lines.
    fn ledger_jsonl(&self) -> PyResult<String> {
        let mut bytes = Vec::new();
        market::write_ledger(&mut bytes, self.inner.ledger().unwrap_or_default()).map_err(err)?;
        String::from_utf8(bytes).map_err(err)
    }
}

/// Re-executes a JSON-lines ledger; raises if any settlement differs.
/// Returns the number of settlements.
#[pyfunction]
fn verify_ledger(jsonl: &str) -> PyResult<usize> {
    let entries = market::read_ledger(jsonl.as_bytes()).map_err(err)?;
    market::replay_ledger(&entries).map_err(err)?;
    Ok(entries
        .iter()
        .filter(|e| matches!(e, LedgerEntry::Settlement(_)))
        .count())
}

/// Monte Carlo weight estimation; returns per-level bias and variance.
#[pyfunction]
#[pyo3(signature = (
    method = "rqr", varying = false, missing_rate = 0.0, horizon = 20_000, runs = 20, burn_in = 5_000,
    levels = vec![0.5], eta = combination::DEFAULT_LEARNING_RATE, seed = scenario::DEFAULT_SEED
))]
#[allow(clippy::too_many_arguments)]
fn run_monte_carlo<'py>(
    py: Python<'py>,
    method: &str,
    varying: bool,
    missing_rate: f64,
    horizon: usize,
    runs: usize,
    burn_in: usize,
    levels: Vec<f64>,
    eta: f64,
    seed: u64,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let method: Method = method.parse().map_err(PyValueError::new_err)?;
    let base = if varying {
        ScenarioConfig::time_varying()
    } else {
        ScenarioConfig::time_invariant()
    };
    let config = ScenarioConfig {
        missing_rate,
        horizon,
        runs,
        burn_in,
        quantile_levels: levels.into_iter().map(level).collect::<PyResult<_>>()?,
        learning_rate: eta,
        seed,
        ..base
    };
    let result = py
        .detach(|| scenario::run_monte_carlo(&config, method))
        .map_err(err)?;
    result
        .stats
        .iter()
        .map(|s| {
            let d = PyDict::new(py);
            d.set_item("tau", s.tau.get())?;
            d.set_item("bias", s.bias.clone())?;
            d.set_item("bias_sd", s.bias_sd.clone())?;
            d.set_item("var", s.var.clone())?;
            d.set_item("var_sd", s.var_sd.clone())?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
#[pyo3(name = "forecast_market")]
fn forecast_market_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(quantile_loss, m)?)?;
    m.add_function(wrap_pyfunction!(loss_subgradient, m)?)?;
    m.add_function(wrap_pyfunction!(project_to_simplex, m)?)?;
    m.add_function(wrap_pyfunction!(shapley_exact, m)?)?;
    m.add_function(wrap_pyfunction!(verify_ledger, m)?)?;
    m.add_function(wrap_pyfunction!(run_monte_carlo, m)?)?;
    m.add_class::<PyQuantileModel>()?;
    m.add_class::<PyMarket>()?;
    Ok(())
}
