//! Python bindings for the `hybridnet` simulator.

use std::sync::Arc;

use hybridnet::capacity::{self, BisectionSettings, CapacityResult};
use hybridnet::expcli::{self, Experiment, SweepSpec};
use hybridnet::rng::{dynamics_rng, topology_rng};
use hybridnet::traffic::{self, LoadView, MetricsRecord};
use hybridnet::{BoundaryRule, Error, SimConfig, Strategy};
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidParameter(_) | Error::Usage(_) | Error::InvalidPosition { .. } => {
            PyValueError::new_err(e.to_string())
        }
        Error::Io(_) => PyOSError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(to_py)
}

/// Station graph on a square lattice, optionally rewired.
#[pyclass(name = "Backbone", frozen)]
struct PyBackbone {
    inner: Arc<hybridnet::Backbone>,
}

#[pymethods]
impl PyBackbone {
    /// Square lattice of `edge_len` x `edge_len` stations, optionally rewired
    /// with probability `p` from `seed`.
    #[new]
    #[pyo3(signature = (edge_len, p = 0.0, seed = 0))]
    fn new(py: Python<'_>, edge_len: usize, p: f64, seed: u64) -> PyResult<Self> {
        let b = py
            .detach(|| {
                let lattice = hybridnet::Backbone::build_lattice(edge_len)?;
                let b = if p > 0.0 { lattice.apply_dbrs(p, &mut topology_rng(seed))? } else { lattice };
                b.compute_distances()
            })
            .map_err(to_py)?;
        Ok(Self { inner: Arc::new(b) })
    }

    #[getter]
    fn edge_len(&self) -> usize {
        self.inner.edge_len()
    }

    #[getter]
    fn station_count(&self) -> usize {
        self.inner.station_count()
    }

    #[getter]
    fn link_count(&self) -> usize {
        self.inner.graph().link_count()
    }

    fn neighbors(&self, station: usize) -> PyResult<Vec<u32>> {
        self.check(station)?;
        Ok(self.inner.graph().neighbors(station).to_vec())
    }

    fn links(&self) -> Vec<(usize, usize)> {
        self.inner.graph().links()
    }

    fn hops(&self, s: usize, t: usize) -> PyResult<u32> {
        self.check(s)?;
        self.check(t)?;
        Ok(self.inner.hops(s, t).expect("distances computed at construction"))
    }

    fn position(&self, station: usize) -> PyResult<(f64, f64)> {
        self.check(station)?;
        Ok(self.inner.position(station))
    }

    fn betweenness(&self, py: Python<'_>) -> PyResult<Vec<f64>> {
        py.detach(|| self.inner.betweenness()).map_err(to_py)
    }

    /// `{degree: fraction of stations}`.
    fn degree_distribution(&self) -> Vec<(usize, f64)> {
        self.inner.degree_distribution().into_iter().collect()
    }

    /// Closed-form critical rate from the maximum betweenness.
    fn estimate_rho_c(&self, py: Python<'_>, capacity: usize, users: usize) -> PyResult<f64> {
        py.detach(|| capacity::estimate_rho_c(self.inner.graph(), capacity, users)).map(|r| r.rho_c).map_err(to_py)
    }

    /// Next station on a shortest path from `s` towards `target`.
    #[pyo3(signature = (s, target, strategy = "random", loads = None, seed = 0))]
    fn next_hop(
        &self,
        s: usize,
        target: usize,
        strategy: &str,
        loads: Option<Vec<usize>>,
        seed: u64,
    ) -> PyResult<usize> {
        self.check(s)?;
        self.check(target)?;
        let loads = loads.unwrap_or_else(|| vec![0; self.inner.station_count()]);
        if loads.len() != self.inner.station_count() {
            return Err(PyValueError::new_err("loads must have one entry per station"));
        }
        traffic::next_hop(&self.inner, s, target, parse(strategy)?, &loads, &mut dynamics_rng(seed)).map_err(to_py)
    }

    fn adjacency(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        self.inner.write_adjacency(&mut buf).map_err(|e| to_py(e.into()))?;
        Ok(String::from_utf8(buf).expect("ascii output"))
    }

    fn __repr__(&self) -> String {
        format!("Backbone(edge_len={}, links={})", self.inner.edge_len(), self.inner.graph().link_count())
    }
}

impl PyBackbone {
    fn check(&self, station: usize) -> PyResult<()> {
        if station >= self.inner.station_count() {
            return Err(PyValueError::new_err(format!("station {station} out of range")));
        }
        Ok(())
    }
}

/// Simulation parameters. All fields are readable and writable.
#[pyclass(name = "SimConfig", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: SimConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (
        edge_len = 32, users = 1000, speed = 0.3, rho = 0.1, capacity = 10, rewire_p = 0.0,
        strategy = "random", seed = 0, warmup_steps = 1000, measure_steps = 5000,
        boundary = "resample", load_view = "instantaneous", delivery_consumes_capacity = true,
        record_series = false,
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        edge_len: usize,
        users: usize,
        speed: f64,
        rho: f64,
        capacity: usize,
        rewire_p: f64,
        strategy: &str,
        seed: u64,
        warmup_steps: usize,
        measure_steps: usize,
        boundary: &str,
        load_view: &str,
        delivery_consumes_capacity: bool,
        record_series: bool,
    ) -> PyResult<Self> {
        let inner = SimConfig {
            edge_len,
            users,
            speed,
            rho,
            capacity,
            rewire_p,
            strategy: parse(strategy)?,
            seed,
            warmup_steps,
            measure_steps,
            boundary: boundary_from(boundary)?,
            load_view: load_view_from(load_view)?,
            delivery_consumes_capacity,
            record_series,
        };
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn edge_len(&self) -> usize {
        self.inner.edge_len
    }
    #[setter]
    fn set_edge_len(&mut self, v: usize) {
        self.inner.edge_len = v;
    }
    #[getter]
    fn users(&self) -> usize {
        self.inner.users
    }
    #[setter]
    fn set_users(&mut self, v: usize) {
        self.inner.users = v;
    }
    #[getter]
    fn speed(&self) -> f64 {
        self.inner.speed
    }
    #[setter]
    fn set_speed(&mut self, v: f64) {
        self.inner.speed = v;
    }
    #[getter]
    fn rho(&self) -> f64 {
        self.inner.rho
    }
    #[setter]
    fn set_rho(&mut self, v: f64) {
        self.inner.rho = v;
    }
    #[getter]
    fn capacity(&self) -> usize {
        self.inner.capacity
    }
    #[setter]
    fn set_capacity(&mut self, v: usize) {
        self.inner.capacity = v;
    }
    #[getter]
    fn rewire_p(&self) -> f64 {
        self.inner.rewire_p
    }
    #[setter]
    fn set_rewire_p(&mut self, v: f64) {
        self.inner.rewire_p = v;
    }
    #[getter]
    fn strategy(&self) -> &'static str {
        self.inner.strategy.as_str()
    }
    #[setter]
    fn set_strategy(&mut self, v: &str) -> PyResult<()> {
        self.inner.strategy = parse(v)?;
        Ok(())
    }
    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }
    #[setter]
    fn set_seed(&mut self, v: u64) {
        self.inner.seed = v;
    }
    #[getter]
    fn warmup_steps(&self) -> usize {
        self.inner.warmup_steps
    }
    #[setter]
    fn set_warmup_steps(&mut self, v: usize) {
        self.inner.warmup_steps = v;
    }
    #[getter]
    fn measure_steps(&self) -> usize {
        self.inner.measure_steps
    }
    #[setter]
    fn set_measure_steps(&mut self, v: usize) {
        self.inner.measure_steps = v;
    }
    #[getter]
    fn record_series(&self) -> bool {
        self.inner.record_series
    }
    #[setter]
    fn set_record_series(&mut self, v: bool) {
        self.inner.record_series = v;
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!(
            "SimConfig(edge_len={}, users={}, speed={}, rho={}, capacity={}, rewire_p={}, strategy='{}', seed={})",
            c.edge_len, c.users, c.speed, c.rho, c.capacity, c.rewire_p, c.strategy, c.seed
        )
    }
}

fn boundary_from(s: &str) -> PyResult<BoundaryRule> {
    match s {
        "resample" => Ok(BoundaryRule::Resample),
        "reflect" => Ok(BoundaryRule::Reflect),
        other => Err(PyValueError::new_err(format!("unknown boundary rule '{other}'"))),
    }
}

fn load_view_from(s: &str) -> PyResult<LoadView> {
    match s {
        "instantaneous" => Ok(LoadView::Instantaneous),
        "step_start" => Ok(LoadView::StepStart),
        other => Err(PyValueError::new_err(format!("unknown load view '{other}'"))),
    }
}

fn metrics_dict<'py>(py: Python<'py>, m: &MetricsRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("eta", m.eta)?;
    d.set_item("eta_defined", m.eta_defined)?;
    d.set_item("slope", m.slope)?;
    d.set_item("T", m.arrival_time)?;
    d.set_item("sigma_L", m.sigma_l)?;
    d.set_item("mean_W", m.mean_w)?;
    d.set_item("final_W", m.final_w)?;
    d.set_item("created", m.created)?;
    d.set_item("delivered", m.delivered)?;
    d.set_item("W_series", m.w_series.clone())?;
    Ok(d)
}

fn capacity_dict<'py>(py: Python<'py>, r: &CapacityResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("rho_c", r.rho_c)?;
    d.set_item("iterations", r.iterations)?;
    d.set_item("bracket", r.bracket)?;
    d.set_item("saturated", r.saturated)?;
    let probes: Vec<(f64, f64, f64, bool)> =
        r.probes.iter().map(|p| (p.rho, p.slope_mean, p.slope_median, p.congested)).collect();
    d.set_item("probes", probes)?;
    Ok(d)
}

/// A steppable simulation.
#[pyclass(name = "Simulation")]
struct PySimulation {
    inner: Option<hybridnet::Simulation>,
}

impl PySimulation {
    fn sim(&mut self) -> PyResult<&mut hybridnet::Simulation> {
        self.inner.as_mut().ok_or_else(|| PyRuntimeError::new_err("simulation already consumed by run()"))
    }
}

#[pymethods]
impl PySimulation {
    #[new]
    #[pyo3(signature = (config, backbone = None))]
    fn new(config: PyConfig, backbone: Option<&Bound<'_, PyBackbone>>) -> PyResult<Self> {
        let sim = match backbone {
            Some(b) => hybridnet::Simulation::new(b.get().inner.clone(), config.inner),
            None => hybridnet::Simulation::from_config(config.inner),
        }
        .map_err(to_py)?;
        Ok(Self { inner: Some(sim) })
    }

    /// Advances one step and returns `(created, delivered, forwarded)`.
    fn step(&mut self) -> PyResult<(usize, usize, usize)> {
        let s = self.sim()?.step();
        Ok((s.created, s.delivered, s.forwarded))
    }

    #[getter]
    fn time(&mut self) -> PyResult<u64> {
        Ok(self.sim()?.state().time())
    }

    #[getter]
    fn in_flight(&mut self) -> PyResult<usize> {
        Ok(self.sim()?.state().in_flight())
    }

    fn queue_lengths(&mut self) -> PyResult<Vec<usize>> {
        let sim = self.sim()?;
        Ok((0..sim.backbone().station_count()).map(|s| sim.state().queue_len(s)).collect())
    }

    /// `(x, y, gateway)` per user.
    fn users(&mut self) -> PyResult<Vec<(f64, f64, usize)>> {
        Ok(self.sim()?.users().iter().map(|u| (u.x, u.y, u.gateway)).collect())
    }

    /// Runs warm-up and measurement from the current state; consumes the simulation.
    fn run<'py>(&mut self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let sim = self.inner.take().ok_or_else(|| PyRuntimeError::new_err("simulation already consumed by run()"))?;
        let m = py.detach(move || sim.run());
        metrics_dict(py, &m)
    }
}

/// Builds and runs one simulation; returns its metrics.
#[pyfunction]
fn run_sim<'py>(py: Python<'py>, config: PyConfig) -> PyResult<Bound<'py, PyDict>> {
    let m = py.detach(|| traffic::run_sim(&config.inner)).map_err(to_py)?;
    metrics_dict(py, &m)
}

fn bisection(runs_per_probe: usize, threshold: f64, tol: f64, initial_guess: f64, rho_max: f64) -> BisectionSettings {
    BisectionSettings { runs_per_probe, threshold, tol, initial_guess, rho_max, ..BisectionSettings::default() }
}

/// Bisection search for the critical rate of `config`.
#[pyfunction]
#[pyo3(signature = (config, runs_per_probe = 10, threshold = 1.0, tol = 0.002, initial_guess = 1.0, rho_max = 16.0))]
fn find_rho_c<'py>(
    py: Python<'py>,
    config: PyConfig,
    runs_per_probe: usize,
    threshold: f64,
    tol: f64,
    initial_guess: f64,
    rho_max: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let settings = bisection(runs_per_probe, threshold, tol, initial_guess, rho_max);
    let r = py.detach(|| capacity::find_rho_c(&config.inner, &settings)).map_err(to_py)?;
    capacity_dict(py, &r)
}

/// Runs a sweep and returns one dict per (value, metric) record.
#[pyfunction]
#[pyo3(signature = (experiment, values, config, runs = 50, seed_base = 0, runs_per_probe = 10, threshold = 1.0, tol = 0.002, rho_max = 16.0))]
#[allow(clippy::too_many_arguments)]
fn run_sweep<'py>(
    py: Python<'py>,
    experiment: &str,
    values: Vec<f64>,
    config: PyConfig,
    runs: usize,
    seed_base: u64,
    runs_per_probe: usize,
    threshold: f64,
    tol: f64,
    rho_max: f64,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let spec = SweepSpec {
        experiment: parse::<Experiment>(experiment)?,
        base: config.inner,
        sweep_values: values,
        runs,
        seed_base,
        bisection: bisection(runs_per_probe, threshold, tol, 1.0, rho_max),
    };
    let records = py.detach(|| expcli::run_sweep(&spec)).map_err(to_py)?;
    records
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("param_value", r.param_value)?;
            d.set_item("metric", r.metric.name())?;
            d.set_item("mean", r.mean)?;
            d.set_item("stderr", r.stderr)?;
            d.set_item("runs", r.runs)?;
            Ok(d)
        })
        .collect()
}

/// Runs the command-line front end with `argv` (without the program name).
#[pyfunction]
fn cli(py: Python<'_>, argv: Vec<String>) -> i32 {
    let mut full = vec!["hybridnet".to_string()];
    full.extend(argv);
    py.detach(|| expcli::cli_main(full))
}

#[pymodule]
fn pyhybridnet(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBackbone>()?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PySimulation>()?;
    m.add_function(wrap_pyfunction!(run_sim, m)?)?;
    m.add_function(wrap_pyfunction!(find_rho_c, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(cli, m)?)?;
    m.add("STRATEGIES", Strategy::ALL.iter().map(|s| s.as_str()).collect::<Vec<_>>())?;
    Ok(())
}
