//! Network capacity: the critical generation rate `rho_c`.
//!
//! Two routes are provided. [`estimate_rho_c`] is the closed form
//! `N (N - 1) C / (n B*)` built on the maximum station betweenness `B*`.
//! [`find_rho_c`] locates the onset of congestion by simulation: it brackets
//! the rate where the `W(t)` growth rate crosses a threshold and bisects.

use std::io::{self, Write};
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::stats;
use crate::topology::{Backbone, Graph};
use crate::traffic::{run_on, SimConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CapacityMethod {
    Analytic,
    Bisection,
}

/// One congestion probe at a fixed `rho`.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub rho: f64,
    pub slope_mean: f64,
    pub slope_median: f64,
    pub congested: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityResult {
    pub rho_c: f64,
    pub method: CapacityMethod,
    /// Bisection steps after the bracket was found.
    pub iterations: usize,
    /// Final `(low, high)` interval of a bisection.
    pub bracket: Option<(f64, f64)>,
    /// The search hit `rho_max` without observing congestion.
    pub saturated: bool,
    pub probes: Vec<Probe>,
}

impl CapacityResult {
    fn analytic(rho_c: f64) -> Self {
        Self {
            rho_c,
            method: CapacityMethod::Analytic,
            iterations: 0,
            bracket: None,
            saturated: false,
            probes: Vec::new(),
        }
    }

    /// Packets inserted per step at the critical point, `n * rho_c`.
    pub fn inserted_per_step(&self, users: usize) -> f64 {
        users as f64 * self.rho_c
    }

    /// Equivalent per-station generation rate, `n * rho_c / N`.
    pub fn per_station_rate(&self, users: usize, stations: usize) -> f64 {
        self.inserted_per_step(users) / stations as f64
    }
}

/// `N (N - 1) C / (n B*)` for a given maximum betweenness.
pub fn estimate_from_betweenness(stations: usize, b_star: f64, capacity: usize, users: usize) -> Result<f64> {
    if users < 1 {
        return Err(Error::InvalidParameter("need at least one user".into()));
    }
    if b_star <= 0.0 {
        return Err(Error::DegenerateTopology);
    }
    let n = stations as f64;
    Ok(n * (n - 1.0) * capacity as f64 / (users as f64 * b_star))
}

/// Analytic capacity of a backbone graph from its maximum betweenness.
pub fn estimate_rho_c(graph: &Graph, capacity: usize, users: usize) -> Result<CapacityResult> {
    let b_star = graph.betweenness()?.into_iter().fold(0.0, f64::max);
    estimate_from_betweenness(graph.node_count(), b_star, capacity, users).map(CapacityResult::analytic)
}

/// How the per-seed growth rates of one probe are reduced to a decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregate {
    #[default]
    Median,
    Mean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BisectionSettings {
    pub runs_per_probe: usize,
    /// Growth rate of `W(t)`, packets per step, at or above which a probe
    /// counts as congested.
    pub threshold: f64,
    /// Stop once the bracket is at most this wide.
    pub tol: f64,
    /// First upper bracket; doubled until congestion is observed.
    pub initial_guess: f64,
    /// Largest rate probed. Reaching it without congestion saturates.
    pub rho_max: f64,
    pub aggregate: Aggregate,
}

impl Default for BisectionSettings {
    fn default() -> Self {
        Self {
            runs_per_probe: 10,
            threshold: 1.0,
            tol: 0.002,
            initial_guess: 1.0,
            rho_max: 16.0,
            aggregate: Aggregate::Median,
        }
    }
}

impl BisectionSettings {
    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.runs_per_probe < 1 {
            return bad("runs_per_probe must be at least 1".into());
        }
        if !(self.threshold > 0.0) {
            return bad(format!("threshold must be positive, got {}", self.threshold));
        }
        if !(self.tol > 0.0) {
            return bad(format!("tolerance must be positive, got {}", self.tol));
        }
        if !(self.initial_guess > 0.0 && self.rho_max > 0.0) {
            return bad("initial guess and rho_max must be positive".into());
        }
        Ok(())
    }
}

/// Seed of the `k`-th run of every probe in a bisection seeded with `seed`.
pub fn probe_seed(seed: u64, k: usize) -> u64 {
    derive_seed(seed, k as u64)
}

/// Bisection search for the critical generation rate.
///
/// Every probe runs the template at a trial `rho` once per probe seed (the
/// same seeds at every trial rate, each with its own backbone when the
/// template rewires). The probe is congested when the aggregated `W(t)`
/// slope reaches `threshold`.
pub fn find_rho_c(template: &SimConfig, settings: &BisectionSettings) -> Result<CapacityResult> {
    template.validate()?;
    settings.validate()?;

    let seeds: Vec<u64> = (0..settings.runs_per_probe).map(|k| probe_seed(template.seed, k)).collect();
    let backbones: Vec<Arc<Backbone>> = seeds
        .par_iter()
        .map(|&seed| SimConfig { seed, ..template.clone() }.build_backbone().map(Arc::new))
        .collect::<Result<_>>()?;

    let mut probes = Vec::new();
    let mut probe = |rho: f64| -> Result<bool> {
        let slopes: Vec<f64> = seeds
            .par_iter()
            .zip(&backbones)
            .map(|(&seed, b)| {
                let cfg = SimConfig { seed, rho, record_series: false, ..template.clone() };
                run_on(b.clone(), &cfg).map(|m| m.slope)
            })
            .collect::<Result<_>>()?;
        let slope_mean = stats::mean(&slopes);
        let slope_median = stats::median(&slopes);
        let decisive = match settings.aggregate {
            Aggregate::Median => slope_median,
            Aggregate::Mean => slope_mean,
        };
        let congested = decisive >= settings.threshold;
        probes.push(Probe { rho, slope_mean, slope_median, congested });
        Ok(congested)
    };

    let mut low = 0.0;
    let mut high = settings.initial_guess.min(settings.rho_max);
    loop {
        if probe(high)? {
            break;
        }
        low = high;
        if high >= settings.rho_max {
            return Ok(CapacityResult {
                rho_c: settings.rho_max,
                method: CapacityMethod::Bisection,
                iterations: 0,
                bracket: Some((low, high)),
                saturated: true,
                probes,
            });
        }
        high = (2.0 * high).min(settings.rho_max);
    }

    let mut iterations = 0;
    while high - low > settings.tol {
        let mid = 0.5 * (low + high);
        if probe(mid)? {
            high = mid;
        } else {
            low = mid;
        }
        iterations += 1;
    }
    if low == 0.0 {
        return Err(Error::NoFreeFlow { rho: high });
    }
    Ok(CapacityResult {
        rho_c: 0.5 * (low + high),
        method: CapacityMethod::Bisection,
        iterations,
        bracket: Some((low, high)),
        saturated: false,
        probes,
    })
}

/// Writes the probe log as `rho,slope_mean,slope_median,congested`.
pub fn write_probe_log<W: Write>(mut out: W, probes: &[Probe]) -> io::Result<()> {
    writeln!(out, "rho,slope_mean,slope_median,congested")?;
    for p in probes {
        writeln!(out, "{},{},{},{}", p.rho, p.slope_mean, p.slope_median, p.congested)?;
    }
    Ok(())
}
