//! Packet generation, FIFO forwarding and per-run metrics.
//!
//! One time step runs three phases in order:
//! 1. every user moves and re-attaches to its nearest station;
//! 2. every user injects packets into its gateway's queue;
//! 3. every station, in id order, handles up to `C` of the packets it held
//!    when the step began, delivering those whose destination user is
//!    attached to it and forwarding the rest one hop along a shortest path.
//!
//! Packets that arrive in a queue during a step (forwarded or freshly
//! generated) are not handled before the next step.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::mobility::{self, BoundaryRule, UserState};
use crate::rng::{dynamics_rng, topology_rng, SimRng};
use crate::stats;
use crate::topology::{Backbone, DistanceTable, Graph};

/// Next-hop choice among the shortest-path neighbours.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Strategy {
    #[default]
    Random,
    MinLoad,
    MaxLoad,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Random, Strategy::MinLoad, Strategy::MaxLoad];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::MinLoad => "min_load",
            Strategy::MaxLoad => "max_load",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Strategy::Random),
            "min_load" => Ok(Strategy::MinLoad),
            "max_load" => Ok(Strategy::MaxLoad),
            other => Err(Error::InvalidParameter(format!(
                "unknown strategy '{other}' (expected random, min_load or max_load)"
            ))),
        }
    }
}

/// Which queue length load-aware routing reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LoadView {
    /// Current length, including packets forwarded earlier in this step.
    #[default]
    Instantaneous,
    /// Length when the step began.
    StepStart,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub edge_len: usize,
    pub users: usize,
    pub speed: f64,
    /// Mean packets generated per user per step. Values above 1 give each
    /// user `floor(rho)` packets plus one more with probability `frac(rho)`.
    pub rho: f64,
    pub capacity: usize,
    pub rewire_p: f64,
    pub strategy: Strategy,
    pub seed: u64,
    pub warmup_steps: usize,
    pub measure_steps: usize,
    pub boundary: BoundaryRule,
    pub load_view: LoadView,
    /// When false, handing a packet to its destination user is free and only
    /// forwards count against `capacity`.
    pub delivery_consumes_capacity: bool,
    /// Keep the `W(t)` series of the measurement window in the metrics.
    pub record_series: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            edge_len: 32,
            users: 1000,
            speed: 0.3,
            rho: 0.1,
            capacity: 10,
            rewire_p: 0.0,
            strategy: Strategy::Random,
            seed: 0,
            warmup_steps: 1000,
            measure_steps: 5000,
            boundary: BoundaryRule::Resample,
            load_view: LoadView::Instantaneous,
            delivery_consumes_capacity: true,
            record_series: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.edge_len < 2 {
            return bad(format!("edge length must be at least 2, got {}", self.edge_len));
        }
        if self.users < 2 {
            return bad(format!("need at least 2 users, got {}", self.users));
        }
        if !(self.rho.is_finite() && self.rho >= 0.0) {
            return bad(format!("rho must be finite and non-negative, got {}", self.rho));
        }
        if self.capacity < 1 {
            return bad("capacity must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.rewire_p) {
            return bad(format!("rewiring probability must lie in [0, 1], got {}", self.rewire_p));
        }
        if self.measure_steps < 2 {
            return bad(format!("measure_steps must be at least 2, got {}", self.measure_steps));
        }
        Ok(())
    }

    /// Builds the backbone this configuration describes: a lattice, rewired
    /// from the seed's topology stream when `rewire_p > 0`, with distances.
    pub fn build_backbone(&self) -> Result<Backbone> {
        let lattice = Backbone::build_lattice(self.edge_len)?;
        let b = if self.rewire_p > 0.0 {
            lattice.apply_dbrs(self.rewire_p, &mut topology_rng(self.seed))?
        } else {
            lattice
        };
        b.compute_distances()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Packet {
    pub src: u32,
    pub dst: u32,
    pub created_at: u32,
}

/// Per-station FIFO queues plus the global in-flight count `W`.
#[derive(Debug, Clone)]
pub struct TrafficState {
    queues: Vec<VecDeque<Packet>>,
    start_len: Vec<u32>,
    in_flight: usize,
    t: u64,
}

impl TrafficState {
    pub fn new(stations: usize) -> Self {
        Self { queues: vec![VecDeque::new(); stations], start_len: vec![0; stations], in_flight: 0, t: 0 }
    }

    /// Packets currently queued anywhere in the backbone.
    pub fn in_flight(&self) -> usize {
        self.in_flight
    }

    pub fn time(&self) -> u64 {
        self.t
    }

    pub fn queue(&self, station: usize) -> &VecDeque<Packet> {
        &self.queues[station]
    }

    pub fn queue_len(&self, station: usize) -> usize {
        self.queues[station].len()
    }

    pub fn push(&mut self, station: usize, packet: Packet) {
        self.queues[station].push_back(packet);
        self.in_flight += 1;
    }

    /// Freezes the queue lengths that decide which packets may move this step.
    fn begin_step(&mut self) {
        for (len, q) in self.start_len.iter_mut().zip(&self.queues) {
            *len = q.len() as u32;
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub created: usize,
    pub delivered: usize,
    pub forwarded: usize,
    /// Largest number of packets handled by a single station.
    pub max_handled: usize,
}

/// Picks the next station for a packet at `s` heading for `target`.
///
/// Candidates are the neighbours one hop closer to `target`. Load-aware
/// strategies break ties uniformly at random. Requires `s != target`.
fn select_next_hop<R, L>(
    graph: &Graph,
    dist: &DistanceTable,
    s: usize,
    target: usize,
    strategy: Strategy,
    load: L,
    rng: &mut R,
    buf: &mut Vec<u32>,
) -> usize
where
    R: Rng + ?Sized,
    L: Fn(usize) -> usize,
{
    let row = dist.row(target);
    let here = row[s];
    debug_assert!(here >= 1, "next hop requested at the target itself");
    let nbrs = graph.neighbors(s);
    let mut stack = [0u32; 16];
    let store: &mut [u32] = if nbrs.len() <= stack.len() {
        &mut stack
    } else {
        buf.clear();
        buf.resize(nbrs.len(), 0);
        buf
    };
    let mut k = 0;
    for &q in nbrs {
        if row[q as usize] + 1 == here {
            store[k] = q;
            k += 1;
        }
    }
    assert!(k > 0, "no shortest-path neighbour from {s} towards {target}");
    if k == 1 {
        return store[0] as usize;
    }
    if strategy != Strategy::Random {
        let mut best = load(store[0] as usize);
        let mut ties = 1;
        for i in 1..k {
            let l = load(store[i] as usize);
            let better = if strategy == Strategy::MinLoad { l < best } else { l > best };
            if better {
                best = l;
                store[0] = store[i];
                ties = 1;
            } else if l == best {
                store[ties] = store[i];
                ties += 1;
            }
        }
        k = ties;
        if k == 1 {
            return store[0] as usize;
        }
    }
    store[rng.gen_range(0..k)] as usize
}

/// Public form of the routing decision: `loads[q]` is the load of station `q`.
pub fn next_hop<R: Rng + ?Sized>(
    backbone: &Backbone,
    s: usize,
    target: usize,
    strategy: Strategy,
    loads: &[usize],
    rng: &mut R,
) -> Result<usize> {
    let dist = backbone.distances().ok_or(Error::MissingDistances)?;
    if dist.get(s, target) == 0 {
        return Err(Error::InvalidParameter(format!("station {s} is already the target")));
    }
    let mut buf = Vec::new();
    Ok(select_next_hop(backbone.graph(), dist, s, target, strategy, |q| loads[q], rng, &mut buf))
}

/// Summary of one run's measurement window.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    /// Order parameter `C / (n rho) * max(slope, 0)`; 0 when `rho == 0`.
    pub eta: f64,
    /// False when `rho == 0` and `eta` is undefined.
    pub eta_defined: bool,
    /// Least-squares growth rate of `W(t)` over the window, packets/step.
    pub slope: f64,
    /// Mean delivery time of packets delivered in the window.
    pub arrival_time: Option<f64>,
    /// Population standard deviation of time-averaged station queue lengths.
    pub sigma_l: f64,
    pub mean_w: f64,
    pub final_w: usize,
    pub created: u64,
    pub delivered: u64,
    pub w_series: Option<Vec<usize>>,
}

impl MetricsRecord {
    /// Serialises the record as one CSV row matching [`MetricsRecord::CSV_HEADER`].
    pub fn csv_row(&self) -> String {
        let t = self.arrival_time.map(|t| t.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.eta,
            self.eta_defined,
            self.slope,
            t,
            self.sigma_l,
            self.mean_w,
            self.final_w,
            self.created,
            self.delivered
        )
    }

    pub const CSV_HEADER: &'static str = "eta,eta_defined,slope,T,sigma_L,mean_W,final_W,created,delivered";
}

/// One simulation run.
pub struct Simulation {
    cfg: SimConfig,
    backbone: Arc<Backbone>,
    users: Vec<UserState>,
    gateways: Vec<u32>,
    state: TrafficState,
    rng: SimRng,
    buf: Vec<u32>,
    measuring: bool,
    delivered_sum: u64,
    delivered_count: u64,
    created_count: u64,
}

impl Simulation {
    /// Builds the backbone from the config and places users from the seed.
    pub fn from_config(cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        let backbone = Arc::new(cfg.build_backbone()?);
        Self::new(backbone, cfg)
    }

    /// Runs on a prepared backbone (distances required).
    pub fn new(backbone: Arc<Backbone>, cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = dynamics_rng(cfg.seed);
        let users = mobility::init_users(cfg.users, cfg.edge_len, cfg.speed, &mut rng)?;
        Self::assemble(backbone, cfg, users, rng)
    }

    /// Runs with caller-supplied users (e.g. pinned positions).
    pub fn with_users(backbone: Arc<Backbone>, cfg: SimConfig, users: Vec<UserState>) -> Result<Self> {
        cfg.validate()?;
        if users.len() != cfg.users {
            return Err(Error::InvalidParameter(format!("config expects {} users, got {}", cfg.users, users.len())));
        }
        let rng = dynamics_rng(cfg.seed);
        Self::assemble(backbone, cfg, users, rng)
    }

    fn assemble(backbone: Arc<Backbone>, cfg: SimConfig, users: Vec<UserState>, rng: SimRng) -> Result<Self> {
        if backbone.edge_len() != cfg.edge_len {
            return Err(Error::InvalidParameter(format!(
                "backbone edge length {} does not match config {}",
                backbone.edge_len(),
                cfg.edge_len
            )));
        }
        if backbone.distances().is_none() {
            return Err(Error::MissingDistances);
        }
        let state = TrafficState::new(backbone.station_count());
        let gateways = users.iter().map(|u| u.gateway as u32).collect();
        Ok(Self {
            cfg,
            backbone,
            users,
            gateways,
            state,
            rng,
            buf: Vec::with_capacity(8),
            measuring: false,
            delivered_sum: 0,
            delivered_count: 0,
            created_count: 0,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn backbone(&self) -> &Backbone {
        &self.backbone
    }

    pub fn users(&self) -> &[UserState] {
        &self.users
    }

    pub fn state(&self) -> &TrafficState {
        &self.state
    }

    /// Places a packet at the tail of a station's queue.
    pub fn inject(&mut self, station: usize, packet: Packet) {
        self.state.push(station, packet);
    }

    /// Snapshots the queue lengths that bound this step's handling.
    pub fn begin_step(&mut self) {
        self.state.begin_step();
    }

    pub fn move_users(&mut self) {
        let edge = self.cfg.edge_len;
        let rule = self.cfg.boundary;
        for (u, g) in self.users.iter_mut().zip(&mut self.gateways) {
            mobility::move_user(u, edge, rule, &mut self.rng);
            *g = u.gateway as u32;
        }
    }

    /// Every user creates `floor(rho)` packets plus one with probability
    /// `frac(rho)`, each addressed to a uniformly chosen other user.
    pub fn generate_packets(&mut self) -> usize {
        let n = self.users.len();
        let whole = self.cfg.rho.floor() as usize;
        let frac = self.cfg.rho - whole as f64;
        let t = self.state.t as u32;
        let mut created = 0;
        for src in 0..n {
            let mut count = whole;
            if frac > 0.0 && self.rng.gen::<f64>() < frac {
                count += 1;
            }
            let gateway = self.users[src].gateway;
            for _ in 0..count {
                let mut dst = self.rng.gen_range(0..n - 1);
                if dst >= src {
                    dst += 1;
                }
                self.state.push(gateway, Packet { src: src as u32, dst: dst as u32, created_at: t });
            }
            created += count;
        }
        created
    }

    /// Handles the packets each station held at step start, in station order.
    pub fn deliver_step(&mut self) -> StepStats {
        let Self { cfg, backbone, gateways, state, rng, buf, measuring, delivered_sum, delivered_count, .. } = self;
        let graph = backbone.graph();
        let dist = backbone.distances().expect("distances checked at construction");
        let capacity = cfg.capacity;
        let strategy = cfg.strategy;
        let load_view = cfg.load_view;
        let t = state.t;
        let mut stats = StepStats::default();
        let mut deliver = |pkt: &Packet| {
            stats.delivered += 1;
            if *measuring {
                *delivered_sum += t - u64::from(pkt.created_at);
                *delivered_count += 1;
            }
        };

        for s in 0..state.queues.len() {
            let old = state.start_len[s] as usize;
            if old == 0 {
                continue;
            }
            // Taken out so forwards can push into neighbour queues freely;
            // a next hop is never the current station.
            let mut here = std::mem::take(&mut state.queues[s]);
            let mut forwarded_here = 0;
            let mut handled = 0;
            let limit = if cfg.delivery_consumes_capacity { old.min(capacity) } else { old };
            while handled < limit {
                let Some(&pkt) = here.front() else { break };
                let target = gateways[pkt.dst as usize] as usize;
                if target == s {
                    here.pop_front();
                    deliver(&pkt);
                } else {
                    if forwarded_here == capacity {
                        break;
                    }
                    here.pop_front();
                    let queues = &state.queues;
                    let start_len = &state.start_len;
                    let q = match load_view {
                        LoadView::Instantaneous => {
                            select_next_hop(graph, dist, s, target, strategy, |q| queues[q].len(), rng, buf)
                        }
                        LoadView::StepStart => {
                            select_next_hop(graph, dist, s, target, strategy, |q| start_len[q] as usize, rng, buf)
                        }
                    };
                    state.queues[q].push_back(pkt);
                    forwarded_here += 1;
                }
                handled += 1;
            }
            state.queues[s] = here;
            stats.forwarded += forwarded_here;
            stats.max_handled = stats.max_handled.max(handled);
        }
        state.in_flight -= stats.delivered;
        stats
    }

    /// Runs one full step: move, generate, deliver.
    pub fn step(&mut self) -> StepStats {
        let before = self.state.in_flight;
        self.begin_step();
        self.move_users();
        let created = self.generate_packets();
        let mut stats = self.deliver_step();
        stats.created = created;
        if self.measuring {
            self.created_count += created as u64;
        }
        self.state.t += 1;
        debug_assert_eq!(self.state.in_flight, before + stats.created - stats.delivered);
        stats
    }

    /// Warm-up followed by the measurement window.
    pub fn run(mut self) -> MetricsRecord {
        for _ in 0..self.cfg.warmup_steps {
            self.step();
        }
        self.measuring = true;
        let steps = self.cfg.measure_steps;
        let stations = self.backbone.station_count();
        let mut series = Vec::with_capacity(steps);
        let mut load_sum = vec![0u64; stations];
        for _ in 0..steps {
            self.step();
            series.push(self.state.in_flight);
            for (acc, q) in load_sum.iter_mut().zip(&self.state.queues) {
                *acc += q.len() as u64;
            }
        }

        let ys: Vec<f64> = series.iter().map(|&w| w as f64).collect();
        let slope = stats::ls_slope(&ys);
        let (eta, eta_defined) = if self.cfg.rho > 0.0 {
            let inserted = self.cfg.users as f64 * self.cfg.rho;
            (self.cfg.capacity as f64 / inserted * slope.max(0.0), true)
        } else {
            (0.0, false)
        };
        let mean_loads: Vec<f64> = load_sum.iter().map(|&s| s as f64 / steps as f64).collect();
        let arrival_time = (self.delivered_count > 0).then(|| self.delivered_sum as f64 / self.delivered_count as f64);
        MetricsRecord {
            eta,
            eta_defined,
            slope,
            arrival_time,
            sigma_l: load_variance(&mean_loads),
            mean_w: stats::mean(&ys),
            final_w: self.state.in_flight,
            created: self.created_count,
            delivered: self.delivered_count,
            w_series: self.cfg.record_series.then_some(series),
        }
    }
}

/// Builds and runs the simulation described by `cfg`.
pub fn run_sim(cfg: &SimConfig) -> Result<MetricsRecord> {
    Ok(Simulation::from_config(cfg.clone())?.run())
}

/// Runs `cfg` on an already prepared backbone.
pub fn run_on(backbone: Arc<Backbone>, cfg: &SimConfig) -> Result<MetricsRecord> {
    Ok(Simulation::new(backbone, cfg.clone())?.run())
}

/// Population standard deviation of station loads.
pub fn load_variance(mean_loads: &[f64]) -> f64 {
    stats::population_std(mean_loads)
}

/// Writes a `t,W` time series.
pub fn write_w_series<W: std::io::Write>(out: &mut W, series: &[usize]) -> std::io::Result<()> {
    writeln!(out, "t,W")?;
    for (t, w) in series.iter().enumerate() {
        writeln!(out, "{t},{w}")?;
    }
    Ok(())
}
