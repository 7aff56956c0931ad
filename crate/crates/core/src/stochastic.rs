//! Exact stochastic simulation of SEIR spread with random link activation
//! and deletion on an explicit contact graph.

use std::collections::HashMap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::Serialize;

use crate::model::{EpiParams, Rates};
use crate::network::Graph;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SimError {
    #[error("initial seeds ({exposed} exposed + {infectious} infectious) exceed N = {n}")]
    TooManySeeds {
        exposed: usize,
        infectious: usize,
        n: usize,
    },
    #[error("graph has {graph} nodes but the parameters say {params}")]
    SizeMismatch { graph: usize, params: usize },
    #[error("cannot average an empty set of traces")]
    EmptyEnsemble,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimEventKind {
    Infection,
    Onset,
    Recovery,
    EdgeDeletion,
    EdgeActivation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimEvent {
    pub t: f64,
    pub kind: SimEventKind,
    /// Node affected, or first endpoint of an edge event.
    pub a: u32,
    /// Second endpoint of an edge event, or the infector.
    pub b: u32,
}

#[derive(Debug, Clone)]
pub struct SimConfig<'g> {
    pub graph: &'g Graph,
    pub epi: EpiParams,
    pub rates: Rates,
    pub initial_exposed: usize,
    pub initial_infectious: usize,
    pub seed: u64,
    pub t_max: f64,
    /// Stop as soon as no node is exposed or infectious.
    pub stop_at_extinction: bool,
    /// Keep the full event list in the trace.
    pub record_events: bool,
}

impl<'g> SimConfig<'g> {
    pub fn new(
        graph: &'g Graph,
        epi: EpiParams,
        rates: Rates,
        exposed: usize,
        infectious: usize,
        seed: u64,
    ) -> Self {
        Self {
            graph,
            epi,
            rates,
            initial_exposed: exposed,
            initial_infectious: infectious,
            seed,
            t_max: f64::INFINITY,
            stop_at_extinction: true,
            record_events: false,
        }
    }
}

/// Piecewise-constant compartment counts of one realization.
#[derive(Debug, Clone, Default)]
pub struct SimTrace {
    /// Time of each state change; entry 0 is the initial state at `t = 0`.
    pub times: Vec<f64>,
    /// `[S, E, I, R]` after each state change.
    pub counts: Vec<[u32; 4]>,
    /// Edge count after each state change.
    pub edges: Vec<u64>,
    pub events: Vec<SimEvent>,
    /// Time the run stopped.
    pub t_end: f64,
}

impl SimTrace {
    /// Counts in force just before `t` (left limit); at the initial time the
    /// initial state.
    pub fn counts_at(&self, t: f64) -> [u32; 4] {
        let j = self.times.partition_point(|&x| x < t);
        self.counts[j.saturating_sub(1)]
    }

    pub fn edges_at(&self, t: f64) -> u64 {
        let j = self.times.partition_point(|&x| x < t);
        self.edges[j.saturating_sub(1)]
    }

    pub fn final_counts(&self) -> [u32; 4] {
        *self.counts.last().expect("trace has an initial state")
    }

    pub fn peak_prevalence(&self) -> (f64, u32) {
        self.times
            .iter()
            .zip(&self.counts)
            .map(|(&t, c)| (t, c[2]))
            .fold(
                (0.0, 0),
                |best, cur| if cur.1 > best.1 { cur } else { best },
            )
    }
}

const SUSCEPTIBLE: u8 = 0;
const EXPOSED: u8 = 1;
const INFECTIOUS: u8 = 2;
const RECOVERED: u8 = 3;

fn edge_key(a: u32, b: u32) -> u64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    ((lo as u64) << 32) | hi as u64
}

fn key_nodes(k: u64) -> (u32, u32) {
    ((k >> 32) as u32, k as u32)
}

/// Keys with O(1) insert, remove and uniform choice.
#[derive(Debug, Default)]
struct KeySet {
    items: Vec<u64>,
    pos: HashMap<u64, usize>,
}

impl KeySet {
    fn len(&self) -> usize {
        self.items.len()
    }

    fn contains(&self, k: u64) -> bool {
        self.pos.contains_key(&k)
    }

    fn insert(&mut self, k: u64) {
        if let std::collections::hash_map::Entry::Vacant(e) = self.pos.entry(k) {
            e.insert(self.items.len());
            self.items.push(k);
        }
    }

    fn remove(&mut self, k: u64) {
        if let Some(i) = self.pos.remove(&k) {
            let last = self.items.pop().expect("non-empty");
            if i < self.items.len() {
                self.items[i] = last;
                self.pos.insert(last, i);
            }
        }
    }

    fn pick<R: Rng>(&self, rng: &mut R) -> u64 {
        self.items[rng.random_range(0..self.items.len())]
    }
}

/// Node indices with O(1) insert, remove and uniform choice.
#[derive(Debug)]
struct NodeSet {
    items: Vec<u32>,
    pos: Vec<u32>,
}

impl NodeSet {
    const ABSENT: u32 = u32::MAX;

    fn new(n: usize) -> Self {
        Self {
            items: Vec::new(),
            pos: vec![Self::ABSENT; n],
        }
    }

    fn len(&self) -> usize {
        self.items.len()
    }

    fn insert(&mut self, v: u32) {
        debug_assert_eq!(self.pos[v as usize], Self::ABSENT);
        self.pos[v as usize] = self.items.len() as u32;
        self.items.push(v);
    }

    fn remove(&mut self, v: u32) {
        let i = self.pos[v as usize];
        debug_assert_ne!(i, Self::ABSENT);
        self.pos[v as usize] = Self::ABSENT;
        let last = self.items.pop().expect("non-empty");
        if (i as usize) < self.items.len() {
            self.items[i as usize] = last;
            self.pos[last as usize] = i;
        }
    }

    fn pick<R: Rng>(&self, rng: &mut R) -> u32 {
        self.items[rng.random_range(0..self.items.len())]
    }
}

struct Sim {
    state: Vec<u8>,
    adj: Vec<Vec<u32>>,
    edges: KeySet,
    si: KeySet,
    exposed: NodeSet,
    infectious: NodeSet,
    counts: [u32; 4],
}

impl Sim {
    fn is_si(&self, a: u32, b: u32) -> bool {
        let (sa, sb) = (self.state[a as usize], self.state[b as usize]);
        (sa == SUSCEPTIBLE && sb == INFECTIOUS) || (sa == INFECTIOUS && sb == SUSCEPTIBLE)
    }

    fn set_state(&mut self, v: u32, to: u8) {
        let from = self.state[v as usize];
        self.counts[from as usize] -= 1;
        self.counts[to as usize] += 1;
        match from {
            EXPOSED => self.exposed.remove(v),
            INFECTIOUS => self.infectious.remove(v),
            _ => {}
        }
        // drop SI edges that depended on the old state
        if from == SUSCEPTIBLE || from == INFECTIOUS {
            for &w in &self.adj[v as usize] {
                self.si.remove(edge_key(v, w));
            }
        }
        self.state[v as usize] = to;
        match to {
            EXPOSED => self.exposed.insert(v),
            INFECTIOUS => {
                self.infectious.insert(v);
                for &w in &self.adj[v as usize] {
                    if self.state[w as usize] == SUSCEPTIBLE {
                        self.si.insert(edge_key(v, w));
                    }
                }
            }
            _ => {}
        }
    }

    fn add_edge(&mut self, a: u32, b: u32) {
        self.edges.insert(edge_key(a, b));
        self.adj[a as usize].push(b);
        self.adj[b as usize].push(a);
        if self.is_si(a, b) {
            self.si.insert(edge_key(a, b));
        }
    }

    fn remove_edge(&mut self, k: u64) {
        let (a, b) = key_nodes(k);
        self.edges.remove(k);
        self.si.remove(k);
        for (x, y) in [(a, b), (b, a)] {
            let nb = &mut self.adj[x as usize];
            let i = nb
                .iter()
                .position(|&w| w == y)
                .expect("edge present in adjacency");
            nb.swap_remove(i);
        }
    }
}

/// Runs one realization.
pub fn gillespie_run(cfg: &SimConfig<'_>) -> Result<SimTrace, SimError> {
    let n = cfg.graph.n_nodes();
    if n != cfg.epi.n_nodes {
        return Err(SimError::SizeMismatch {
            graph: n,
            params: cfg.epi.n_nodes,
        });
    }
    let seeds = cfg.initial_exposed + cfg.initial_infectious;
    if seeds > n {
        return Err(SimError::TooManySeeds {
            exposed: cfg.initial_exposed,
            infectious: cfg.initial_infectious,
            n,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sim = Sim {
        state: vec![SUSCEPTIBLE; n],
        adj: vec![Vec::new(); n],
        edges: KeySet::default(),
        si: KeySet::default(),
        exposed: NodeSet::new(n),
        infectious: NodeSet::new(n),
        counts: [n as u32, 0, 0, 0],
    };
    for &(a, b) in cfg.graph.edges() {
        sim.add_edge(a, b);
    }
    let chosen = sample(&mut rng, n, seeds);
    for (j, v) in chosen.iter().enumerate() {
        let to = if j < cfg.initial_exposed {
            EXPOSED
        } else {
            INFECTIOUS
        };
        sim.set_state(v as u32, to);
    }

    let EpiParams {
        beta, eta, gamma, ..
    } = cfg.epi;
    let Rates { alpha, omega } = cfg.rates;
    let pairs = n as f64 * (n as f64 - 1.0) / 2.0;
    let mut trace = SimTrace {
        times: vec![0.0],
        counts: vec![sim.counts],
        edges: vec![sim.edges.len() as u64],
        events: Vec::new(),
        t_end: 0.0,
    };
    let mut t = 0.0;
    loop {
        if cfg.stop_at_extinction && sim.exposed.len() + sim.infectious.len() == 0 {
            break;
        }
        let m = sim.edges.len() as f64;
        let r_inf = beta * sim.si.len() as f64;
        let r_onset = eta * sim.exposed.len() as f64;
        let r_rec = gamma * sim.infectious.len() as f64;
        let r_del = omega * m;
        let r_act = alpha * (pairs - m);
        let total = r_inf + r_onset + r_rec + r_del + r_act;
        if !(total > 0.0) {
            break;
        }
        let dt: f64 = Exp1.sample(&mut rng);
        let t_next = t + dt / total;
        if t_next > cfg.t_max {
            t = cfg.t_max;
            break;
        }
        t = t_next;
        let u = rng.random::<f64>() * total;
        let event = if u < r_inf {
            let k = sim.si.pick(&mut rng);
            let (a, b) = key_nodes(k);
            let (s, i) = if sim.state[a as usize] == SUSCEPTIBLE {
                (a, b)
            } else {
                (b, a)
            };
            sim.set_state(s, EXPOSED);
            SimEvent {
                t,
                kind: SimEventKind::Infection,
                a: s,
                b: i,
            }
        } else if u < r_inf + r_onset {
            let v = sim.exposed.pick(&mut rng);
            sim.set_state(v, INFECTIOUS);
            SimEvent {
                t,
                kind: SimEventKind::Onset,
                a: v,
                b: v,
            }
        } else if u < r_inf + r_onset + r_rec {
            let v = sim.infectious.pick(&mut rng);
            sim.set_state(v, RECOVERED);
            SimEvent {
                t,
                kind: SimEventKind::Recovery,
                a: v,
                b: v,
            }
        } else if u < r_inf + r_onset + r_rec + r_del {
            let k = sim.edges.pick(&mut rng);
            sim.remove_edge(k);
            let (a, b) = key_nodes(k);
            SimEvent {
                t,
                kind: SimEventKind::EdgeDeletion,
                a,
                b,
            }
        } else {
            let (a, b) = loop {
                let a = rng.random_range(0..n as u32);
                let b = rng.random_range(0..n as u32);
                if a != b && !sim.edges.contains(edge_key(a, b)) {
                    break (a, b);
                }
            };
            sim.add_edge(a, b);
            SimEvent {
                t,
                kind: SimEventKind::EdgeActivation,
                a: a.min(b),
                b: a.max(b),
            }
        };
        trace.times.push(t);
        trace.counts.push(sim.counts);
        trace.edges.push(sim.edges.len() as u64);
        if cfg.record_events {
            trace.events.push(event);
        }
    }
    trace.t_end = t;
    Ok(trace)
}

/// Seed of trial `index` derived from a master seed (SplitMix64 finalizer
/// over the golden-ratio stream).
pub fn trial_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs `trials` realizations in parallel, trial `j` with
/// `trial_seed(cfg.seed, j)`. Results are in trial order.
pub fn run_trials(cfg: &SimConfig<'_>, trials: usize) -> Result<Vec<SimTrace>, SimError> {
    (0..trials)
        .into_par_iter()
        .map(|j| {
            let mut c = cfg.clone();
            c.seed = trial_seed(cfg.seed, j as u64);
            gillespie_run(&c)
        })
        .collect()
}

/// Mean `[S, E, I, R]` of the traces at each grid time.
pub fn ensemble_mean(traces: &[SimTrace], grid: &[f64]) -> Result<Vec<[f64; 4]>, SimError> {
    if traces.is_empty() {
        return Err(SimError::EmptyEnsemble);
    }
    let k = traces.len() as f64;
    Ok(grid
        .iter()
        .map(|&t| {
            let mut acc = [0.0; 4];
            for tr in traces {
                for (a, c) in acc.iter_mut().zip(tr.counts_at(t)) {
                    *a += c as f64;
                }
            }
            acc.map(|a| a / k)
        })
        .collect())
}
