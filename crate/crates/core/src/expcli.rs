//! Sweep orchestration and the command-line front end.
//!
//! A sweep runs `runs` seeded replicas (seeds `seed_base .. seed_base + runs`)
//! at every value of one swept parameter and reduces them to mean and standard
//! error. Results are joined by `(value, seed)` order, so output does not
//! depend on how many worker threads execute the replicas.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Parser;
use rayon::prelude::*;

use crate::capacity::{find_rho_c, BisectionSettings};
use crate::error::{Error, Result};
use crate::mobility::BoundaryRule;
use crate::rng::topology_rng;
use crate::stats;
use crate::topology::Backbone;
use crate::traffic::{run_sim, LoadView, SimConfig, Strategy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Experiment {
    /// Order parameter and arrival time against `rho`.
    Phase,
    /// Critical rate against rewiring probability.
    DbrsSweep,
    /// Degree distribution and load spread against rewiring probability.
    DegreeLoad,
    /// Critical rate against user speed.
    SpeedSweep,
    /// Critical rate and critical inserted load against user count.
    UsersSweep,
    /// Order parameter against `rho` for each routing strategy.
    RoutingCompare,
}

impl Experiment {
    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::Phase => "phase",
            Experiment::DbrsSweep => "dbrs_sweep",
            Experiment::DegreeLoad => "degree_load",
            Experiment::SpeedSweep => "speed_sweep",
            Experiment::UsersSweep => "users_sweep",
            Experiment::RoutingCompare => "routing_compare",
        }
    }

    /// Name of the swept parameter, used as the first CSV column.
    pub fn param_name(self) -> &'static str {
        match self {
            Experiment::Phase | Experiment::RoutingCompare => "rho",
            Experiment::DbrsSweep | Experiment::DegreeLoad => "P",
            Experiment::SpeedSweep => "v",
            Experiment::UsersSweep => "n",
        }
    }

    pub fn csv_header(self) -> &'static str {
        match self {
            Experiment::Phase => "rho,eta_mean,eta_stderr,T_mean,T_stderr",
            Experiment::DbrsSweep => "P,rho_c_mean,rho_c_stderr",
            Experiment::DegreeLoad => "P,k,pk_mean,pk_stderr,sigma_L_mean,sigma_L_stderr",
            Experiment::SpeedSweep => "v,rho_c_mean,rho_c_stderr",
            Experiment::UsersSweep => "n,rho_c_mean,rho_c_stderr,n_rho_c_mean,n_rho_c_stderr",
            Experiment::RoutingCompare => {
                "rho,eta_random_mean,eta_random_stderr,eta_min_load_mean,eta_min_load_stderr,eta_max_load_mean,eta_max_load_stderr"
            }
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "phase" => Experiment::Phase,
            "dbrs_sweep" => Experiment::DbrsSweep,
            "degree_load" => Experiment::DegreeLoad,
            "speed_sweep" => Experiment::SpeedSweep,
            "users_sweep" => Experiment::UsersSweep,
            "routing_compare" => Experiment::RoutingCompare,
            other => return Err(Error::Usage(format!("unknown experiment '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    Eta(StrategyKey),
    ArrivalTime,
    RhoC,
    SigmaL,
    NRhoC,
    /// Fraction of stations with the given degree.
    DegreeFraction(usize),
}

/// Orderable wrapper so metrics can key ordered maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StrategyKey(u8);

impl From<Strategy> for StrategyKey {
    fn from(s: Strategy) -> Self {
        StrategyKey(match s {
            Strategy::Random => 0,
            Strategy::MinLoad => 1,
            Strategy::MaxLoad => 2,
        })
    }
}

impl From<StrategyKey> for Strategy {
    fn from(k: StrategyKey) -> Self {
        match k.0 {
            0 => Strategy::Random,
            1 => Strategy::MinLoad,
            _ => Strategy::MaxLoad,
        }
    }
}

impl Metric {
    pub fn eta(strategy: Strategy) -> Self {
        Metric::Eta(strategy.into())
    }

    pub fn name(&self) -> String {
        match self {
            Metric::Eta(s) => format!("eta_{}", Strategy::from(*s)),
            Metric::ArrivalTime => "T".into(),
            Metric::RhoC => "rho_c".into(),
            Metric::SigmaL => "sigma_L".into(),
            Metric::NRhoC => "n_rho_c".into(),
            Metric::DegreeFraction(k) => format!("pk_{k}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub param_value: f64,
    pub metric: Metric,
    pub mean: f64,
    pub stderr: f64,
    pub runs: usize,
}

/// One replica's contribution, as dumped by `--dump-runs`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSample {
    pub param_value: f64,
    pub seed: u64,
    pub metric: Metric,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub experiment: Experiment,
    pub base: SimConfig,
    pub sweep_values: Vec<f64>,
    pub runs: usize,
    pub seed_base: u64,
    pub bisection: BisectionSettings,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.sweep_values.is_empty() {
            return Err(Error::InvalidParameter("sweep grid is empty".into()));
        }
        if self.sweep_values.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidParameter("sweep grid must be strictly increasing".into()));
        }
        if self.runs < 1 {
            return Err(Error::InvalidParameter("runs must be at least 1".into()));
        }
        if self.experiment == Experiment::UsersSweep && self.sweep_values.iter().any(|&n| n.fract() != 0.0 || n < 2.0) {
            return Err(Error::InvalidParameter("user counts must be integers of at least 2".into()));
        }
        self.base.validate()
    }

    fn config_for(&self, value: f64, seed: u64) -> SimConfig {
        let mut cfg = SimConfig { seed, ..self.base.clone() };
        match self.experiment {
            Experiment::Phase | Experiment::RoutingCompare => cfg.rho = value,
            Experiment::DbrsSweep | Experiment::DegreeLoad => cfg.rewire_p = value,
            Experiment::SpeedSweep => cfg.speed = value,
            Experiment::UsersSweep => cfg.users = value as usize,
        }
        cfg
    }
}

/// Metric samples of one replica.
fn run_replica(spec: &SweepSpec, value: f64, seed: u64) -> Result<Vec<(Metric, f64)>> {
    let cfg = spec.config_for(value, seed);
    let mut out = Vec::new();
    match spec.experiment {
        Experiment::Phase => {
            let m = run_sim(&cfg)?;
            out.push((Metric::eta(cfg.strategy), m.eta));
            if let Some(t) = m.arrival_time {
                out.push((Metric::ArrivalTime, t));
            }
        }
        Experiment::RoutingCompare => {
            for strategy in Strategy::ALL {
                let m = run_sim(&SimConfig { strategy, ..cfg.clone() })?;
                out.push((Metric::eta(strategy), m.eta));
            }
        }
        Experiment::DbrsSweep | Experiment::SpeedSweep | Experiment::UsersSweep => {
            let r = find_rho_c(&cfg, &spec.bisection)?;
            out.push((Metric::RhoC, r.rho_c));
            if spec.experiment == Experiment::UsersSweep {
                out.push((Metric::NRhoC, r.rho_c * cfg.users as f64));
            }
        }
        Experiment::DegreeLoad => {
            let lattice = Backbone::build_lattice(cfg.edge_len)?;
            let b = lattice.apply_dbrs(cfg.rewire_p, &mut topology_rng(seed))?;
            for (k, f) in b.degree_distribution() {
                out.push((Metric::DegreeFraction(k), f));
            }
            let m = run_sim(&cfg)?;
            out.push((Metric::SigmaL, m.sigma_l));
        }
    }
    Ok(out)
}

/// All per-replica samples, ordered by (value, seed).
pub fn run_sweep_samples(spec: &SweepSpec) -> Result<Vec<RunSample>> {
    spec.validate()?;
    let jobs: Vec<(f64, u64)> =
        spec.sweep_values.iter().flat_map(|&v| (0..spec.runs as u64).map(move |r| (v, spec.seed_base + r))).collect();
    let per_job: Vec<Vec<(Metric, f64)>> =
        jobs.par_iter().map(|&(v, seed)| run_replica(spec, v, seed)).collect::<Result<_>>()?;
    let mut samples = Vec::new();
    for (&(param_value, seed), metrics) in jobs.iter().zip(per_job) {
        samples.extend(metrics.into_iter().map(|(metric, value)| RunSample { param_value, seed, metric, value }));
    }
    Ok(samples)
}

/// Reduces samples to mean/stderr per (value, metric). Degree fractions are
/// zero-filled for replicas that lack a degree another replica has.
pub fn aggregate(spec: &SweepSpec, samples: &[RunSample]) -> Vec<SweepRecord> {
    let mut records = Vec::new();
    for &v in &spec.sweep_values {
        let at_v: Vec<&RunSample> = samples.iter().filter(|s| s.param_value == v).collect();
        let metrics: BTreeSet<Metric> = at_v.iter().map(|s| s.metric).collect();
        let seeds: BTreeSet<u64> = at_v.iter().map(|s| s.seed).collect();
        for metric in metrics {
            let mut values: Vec<f64> = Vec::new();
            if let Metric::DegreeFraction(_) = metric {
                let by_seed: HashMap<u64, f64> =
                    at_v.iter().filter(|s| s.metric == metric).map(|s| (s.seed, s.value)).collect();
                values.extend(seeds.iter().map(|seed| by_seed.get(seed).copied().unwrap_or(0.0)));
            } else {
                values.extend(at_v.iter().filter(|s| s.metric == metric).map(|s| s.value));
            }
            records.push(SweepRecord {
                param_value: v,
                metric,
                mean: stats::mean(&values),
                stderr: stats::std_error(&values),
                runs: values.len(),
            });
        }
    }
    records
}

/// Runs every replica of the sweep and aggregates them.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRecord>> {
    let samples = run_sweep_samples(spec)?;
    Ok(aggregate(spec, &samples))
}

fn fmt_value(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        String::new()
    }
}

/// Writes the experiment's CSV: header row, `,` separators, LF endings.
pub fn write_csv<W: Write>(mut out: W, experiment: Experiment, records: &[SweepRecord]) -> io::Result<()> {
    writeln!(out, "{}", experiment.csv_header())?;
    let mut by_value: BTreeMap<u64, (f64, BTreeMap<Metric, &SweepRecord>)> = BTreeMap::new();
    let mut order = Vec::new();
    for r in records {
        let key = r.param_value.to_bits();
        if !by_value.contains_key(&key) {
            order.push(key);
        }
        by_value.entry(key).or_insert_with(|| (r.param_value, BTreeMap::new())).1.insert(r.metric, r);
    }
    let cell = |m: &BTreeMap<Metric, &SweepRecord>, metric: Metric| -> String {
        match m.get(&metric) {
            Some(r) => format!("{},{}", fmt_value(r.mean), fmt_value(r.stderr)),
            None => ",".into(),
        }
    };
    for key in order {
        let (v, m) = &by_value[&key];
        let v = fmt_value(*v);
        match experiment {
            Experiment::Phase => {
                let eta =
                    m.keys().find(|k| matches!(k, Metric::Eta(_))).copied().unwrap_or(Metric::eta(Strategy::Random));
                writeln!(out, "{v},{},{}", cell(m, eta), cell(m, Metric::ArrivalTime))?;
            }
            Experiment::DbrsSweep | Experiment::SpeedSweep => writeln!(out, "{v},{}", cell(m, Metric::RhoC))?,
            Experiment::UsersSweep => {
                writeln!(out, "{v},{},{}", cell(m, Metric::RhoC), cell(m, Metric::NRhoC))?;
            }
            Experiment::RoutingCompare => {
                let cols: Vec<String> = Strategy::ALL.iter().map(|&s| cell(m, Metric::eta(s))).collect();
                writeln!(out, "{v},{}", cols.join(","))?;
            }
            Experiment::DegreeLoad => {
                let sigma = cell(m, Metric::SigmaL);
                for (metric, r) in m {
                    if let Metric::DegreeFraction(k) = metric {
                        writeln!(out, "{v},{k},{},{},{sigma}", fmt_value(r.mean), fmt_value(r.stderr))?;
                    }
                }
            }
        }
    }
    Ok(())
}

/// Writes `param,seed,metric,value` rows.
pub fn write_samples<W: Write>(mut out: W, experiment: Experiment, samples: &[RunSample]) -> io::Result<()> {
    writeln!(out, "{},seed,metric,value", experiment.param_name())?;
    for s in samples {
        writeln!(out, "{},{},{},{}", fmt_value(s.param_value), s.seed, s.metric.name(), fmt_value(s.value))?;
    }
    Ok(())
}

/// Parses `lo:step:hi` (inclusive) or a comma-separated list.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let bad = || Error::Usage(format!("malformed grid '{text}' (expected lo:step:hi or a,b,c)"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let parts: Vec<&str> = text.split(':').collect();
    let values = match parts.as_slice() {
        [lo, step, hi] => {
            let (lo, step, hi) = (num(lo)?, num(step)?, num(hi)?);
            if !(step > 0.0) || hi < lo {
                return Err(bad());
            }
            let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
            (0..count).map(|i| ((lo + i as f64 * step) * 1e10).round() / 1e10).collect()
        }
        [list] => list.split(',').map(num).collect::<Result<Vec<_>>>()?,
        _ => return Err(bad()),
    };
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(bad());
    }
    Ok(values)
}

/// Reads a flat `key = value` file. Blank lines and `#` comments are skipped;
/// keys may use `-` or `_`.
pub fn parse_config_file(text: &str) -> Result<HashMap<String, String>> {
    let mut out = HashMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("config line {}: expected key = value", lineno + 1)))?;
        let key = k.trim().trim_start_matches("--").replace('_', "-");
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(Error::Usage(format!("config line {}: unknown key '{}'", lineno + 1, k.trim())));
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

const KNOWN_KEYS: &[&str] = &[
    "experiment",
    "edge",
    "users",
    "speed",
    "capacity",
    "rho",
    "rho-grid",
    "p",
    "p-grid",
    "v-grid",
    "n-grid",
    "strategy",
    "runs",
    "jobs",
    "seed",
    "warmup",
    "measure",
    "threshold",
    "tol",
    "out",
    "dump-runs",
    "probe-runs",
    "rho-max",
    "boundary",
    "load-view",
    "free-delivery",
];

/// Command-line flags. Every value may also come from `--config`; flags win.
#[derive(Debug, Parser)]
#[command(name = "hybridnet", about = "Packet transport sweeps on hybrid lattice/mobile networks")]
pub struct Cli {
    /// phase, dbrs_sweep, degree_load, speed_sweep, users_sweep, routing_compare
    #[arg(long)]
    pub experiment: Option<String>,
    /// Stations per lattice side
    #[arg(long)]
    pub edge: Option<usize>,
    /// Number of mobile users
    #[arg(long)]
    pub users: Option<usize>,
    /// User speed, lattice units per step
    #[arg(long)]
    pub speed: Option<f64>,
    /// Packets a station handles per step
    #[arg(long)]
    pub capacity: Option<usize>,
    /// Packet generation rate (fixed-rho experiments)
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long = "rho-grid")]
    pub rho_grid: Option<String>,
    /// Rewiring probability (fixed-P experiments)
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long = "p-grid")]
    pub p_grid: Option<String>,
    #[arg(long = "v-grid")]
    pub v_grid: Option<String>,
    #[arg(long = "n-grid")]
    pub n_grid: Option<String>,
    /// random, min_load or max_load
    #[arg(long)]
    pub strategy: Option<String>,
    /// Independent replicas per sweep value
    #[arg(long)]
    pub runs: Option<usize>,
    /// Worker threads
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Base seed; replica r uses seed + r
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub measure: Option<usize>,
    /// W(t) growth rate marking congestion during bisection
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Bisection bracket width
    #[arg(long)]
    pub tol: Option<f64>,
    /// Simulation runs per bisection probe
    #[arg(long = "probe-runs")]
    pub probe_runs: Option<usize>,
    /// Largest rate a bisection probes
    #[arg(long = "rho-max")]
    pub rho_max: Option<f64>,
    /// resample or reflect
    #[arg(long)]
    pub boundary: Option<String>,
    /// instantaneous or step_start
    #[arg(long = "load-view")]
    pub load_view: Option<String>,
    /// Do not count final delivery against station capacity
    #[arg(long = "free-delivery")]
    pub free_delivery: bool,
    /// Output CSV path (stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write per-replica samples to this path
    #[arg(long = "dump-runs")]
    pub dump_runs: Option<PathBuf>,
    /// Flat key = value file with defaults for any flag
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// A fully resolved invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct Invocation {
    pub spec: SweepSpec,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
    pub dump_runs: Option<PathBuf>,
}

struct Merged<'a> {
    file: &'a HashMap<String, String>,
}

impl Merged<'_> {
    fn get<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.file.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|_| Error::Usage(format!("invalid value '{raw}' for '{key}' in config file"))),
        }
    }
}

fn parse_boundary(s: &str) -> Result<BoundaryRule> {
    match s {
        "resample" => Ok(BoundaryRule::Resample),
        "reflect" => Ok(BoundaryRule::Reflect),
        other => Err(Error::Usage(format!("unknown boundary rule '{other}'"))),
    }
}

fn parse_load_view(s: &str) -> Result<LoadView> {
    match s {
        "instantaneous" => Ok(LoadView::Instantaneous),
        "step_start" => Ok(LoadView::StepStart),
        other => Err(Error::Usage(format!("unknown load view '{other}'"))),
    }
}

impl Cli {
    /// Merges flags over the optional config file and fills per-experiment defaults.
    pub fn resolve(self) -> Result<Invocation> {
        let file = match &self.config {
            Some(path) => parse_config_file(
                &fs::read_to_string(path).map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", path.display())))?,
            )?,
            None => HashMap::new(),
        };
        let m = Merged { file: &file };

        let experiment: Experiment = m
            .get(self.experiment, "experiment")?
            .ok_or_else(|| Error::Usage("--experiment is required".into()))?
            .parse()?;
        let fig2 = experiment == Experiment::Phase;
        let optimised =
            matches!(experiment, Experiment::SpeedSweep | Experiment::UsersSweep | Experiment::RoutingCompare);

        let defaults = SimConfig::default();
        let strategy = match m.get(self.strategy, "strategy")? {
            Some(s) => s.parse::<Strategy>().map_err(|e| Error::Usage(e.to_string()))?,
            None => Strategy::Random,
        };
        let boundary = match m.get(self.boundary, "boundary")? {
            Some(s) => parse_boundary(&s)?,
            None => BoundaryRule::Resample,
        };
        let load_view = match m.get(self.load_view, "load-view")? {
            Some(s) => parse_load_view(&s)?,
            None => LoadView::Instantaneous,
        };
        let free_delivery = self.free_delivery || m.get(None::<bool>, "free-delivery")?.unwrap_or(false);

        let base = SimConfig {
            edge_len: m.get(self.edge, "edge")?.unwrap_or(defaults.edge_len),
            users: m.get(self.users, "users")?.unwrap_or(if fig2 { 1000 } else { 100 }),
            speed: m.get(self.speed, "speed")?.unwrap_or(defaults.speed),
            rho: m.get(self.rho, "rho")?.unwrap_or(if experiment == Experiment::DegreeLoad {
                0.3
            } else {
                defaults.rho
            }),
            capacity: m.get(self.capacity, "capacity")?.unwrap_or(defaults.capacity),
            rewire_p: m.get(self.p, "p")?.unwrap_or(if optimised { 0.25 } else { 0.0 }),
            strategy,
            seed: 0,
            warmup_steps: m.get(self.warmup, "warmup")?.unwrap_or(defaults.warmup_steps),
            measure_steps: m.get(self.measure, "measure")?.unwrap_or(defaults.measure_steps),
            boundary,
            load_view,
            delivery_consumes_capacity: !free_delivery,
            record_series: false,
        };

        let bdefaults = BisectionSettings::default();
        let bisection = BisectionSettings {
            runs_per_probe: m.get(self.probe_runs, "probe-runs")?.unwrap_or(bdefaults.runs_per_probe),
            threshold: m.get(self.threshold, "threshold")?.unwrap_or(bdefaults.threshold),
            tol: m.get(self.tol, "tol")?.unwrap_or(bdefaults.tol),
            rho_max: m.get(self.rho_max, "rho-max")?.unwrap_or(bdefaults.rho_max),
            ..bdefaults
        };

        let grid = |flag: Option<String>, key: &str, default: &str| -> Result<Vec<f64>> {
            parse_grid(&m.get(flag, key)?.unwrap_or_else(|| default.to_string()))
        };
        let sweep_values = match experiment {
            Experiment::Phase | Experiment::RoutingCompare => grid(self.rho_grid, "rho-grid", "0.05:0.05:0.5")?,
            Experiment::DbrsSweep | Experiment::DegreeLoad => grid(self.p_grid, "p-grid", "0:0.05:1")?,
            Experiment::SpeedSweep => grid(self.v_grid, "v-grid", "0,0.1,0.2,0.3,0.5,1")?,
            Experiment::UsersSweep => grid(self.n_grid, "n-grid", "50,100,200,400,800")?,
        };

        let spec = SweepSpec {
            experiment,
            base,
            sweep_values,
            runs: m.get(self.runs, "runs")?.unwrap_or(50),
            seed_base: m.get(self.seed, "seed")?.unwrap_or(0),
            bisection,
        };
        spec.validate().map_err(|e| match e {
            Error::InvalidParameter(msg) => Error::Usage(msg),
            other => other,
        })?;
        Ok(Invocation {
            spec,
            jobs: m.get(self.jobs, "jobs")?,
            out: m.get(self.out, "out")?,
            dump_runs: m.get(self.dump_runs, "dump-runs")?,
        })
    }
}

fn write_file(path: &Path, body: &[u8]) -> io::Result<()> {
    fs::write(path, body).map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn write_to(path: Option<&Path>, body: &[u8]) -> io::Result<()> {
    match path {
        Some(p) => write_file(p, body),
        None => io::stdout().write_all(body),
    }
}

/// Executes a resolved invocation and returns the aggregated records.
pub fn execute(inv: &Invocation) -> Result<Vec<SweepRecord>> {
    let work = || -> Result<(Vec<RunSample>, Vec<SweepRecord>)> {
        let samples = run_sweep_samples(&inv.spec)?;
        let records = aggregate(&inv.spec, &samples);
        Ok((samples, records))
    };
    let (samples, records) = match inv.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .map_err(|e| Error::InvalidParameter(format!("cannot start worker pool: {e}")))?
            .install(work)?,
        None => work()?,
    };

    let mut csv = Vec::new();
    write_csv(&mut csv, inv.spec.experiment, &records)?;
    write_to(inv.out.as_deref(), &csv)?;
    if let Some(path) = &inv.dump_runs {
        let mut dump = Vec::new();
        write_samples(&mut dump, inv.spec.experiment, &samples)?;
        write_file(path, &dump)?;
    }
    Ok(records)
}

/// Entry point shared by the binary and the tests. Returns the exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = cli.resolve().and_then(|inv| execute(&inv).map(|records| (inv, records)));
    match result {
        Ok((inv, records)) => {
            let values = inv.spec.sweep_values.len();
            let target = inv.out.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "stdout".into());
            eprintln!(
                "{}: {} values x {} runs -> {} records written to {}",
                inv.spec.experiment,
                values,
                inv.spec.runs,
                records.len(),
                target
            );
            0
        }
        Err(e) => {
            eprintln!("hybridnet: {e}");
            match e {
                Error::Usage(_) | Error::InvalidParameter(_) => 2,
                _ => 1,
            }
        }
    }
}
