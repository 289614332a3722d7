//! Exact references for small cases.
//!
//! With exponential service and switchover times and finite buffers the
//! polling system is a finite CTMC on `(N_1, N_2, phase)`. Zero-length
//! phases never appear as states: every jump lands on the phase obtained by
//! settling the policy rules, exactly as the simulator does. The stationary
//! vector is computed with the GTH elimination on a banded ordering of the
//! states.
//!
//! The single-active-queue case is also checked against the classical
//! M/G/1 multiple-vacation decomposition.

use std::collections::{HashMap, VecDeque};

use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};
use serde::{Deserialize, Serialize};

use crate::config::System;
use crate::engine::{settle_phase, ServerPhase};
use crate::error::OracleError;
use crate::policy::Queue;
use crate::stochastic::DistributionSpec;

pub const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CtmcState {
    pub n: [u64; 2],
    pub phase: ServerPhase,
}

impl CtmcState {
    fn sort_key(&self) -> (u64, u64, usize) {
        (self.n[0], self.n[1], self.phase.cycle_index())
    }
}

/// Truncated CTMC restricted to its closed communicating class.
#[derive(Debug, Clone)]
pub struct CtmcModel {
    pub cap: u64,
    pub states: Vec<CtmcState>,
    /// Off-diagonal rates `(target, rate)` per state.
    pub transitions: Vec<Vec<(usize, f64)>>,
}

impl CtmcModel {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn exit_rate(&self, i: usize) -> f64 {
        self.transitions[i].iter().map(|&(_, r)| r).sum()
    }

    /// Largest `|i − j|` over transitions.
    pub fn bandwidth(&self) -> usize {
        self.transitions
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().map(move |&(j, _)| i.abs_diff(j)))
            .max()
            .unwrap_or(0)
    }

    /// Row sums of the generator (off-diagonal rates plus the diagonal).
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| self.transitions[i].iter().map(|&(_, r)| r).sum::<f64>() - self.exit_rate(i))
            .collect()
    }

    /// `‖πQ‖_∞`.
    pub fn residual(&self, pi: &[f64]) -> f64 {
        let mut flow = vec![0.0; self.len()];
        for (i, row) in self.transitions.iter().enumerate() {
            flow[i] -= pi[i] * self.exit_rate(i);
            for &(j, r) in row {
                flow[j] += pi[i] * r;
            }
        }
        flow.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }
}

/// Arguments of the CTMC, independent of any config file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CtmcRates {
    pub mu: f64,
    pub lambda: [f64; 2],
    /// Mean switchover times.
    pub s: [f64; 2],
}

fn require_exponential(sys: &System) -> Result<CtmcRates, OracleError> {
    if !sys.service.is_exponential() {
        return Err(OracleError::NotExponential("service"));
    }
    for (q, name) in [(0, "switchover 1"), (1, "switchover 2")] {
        if !sys.switchover[q].is_exponential() {
            return Err(OracleError::NotExponential(name));
        }
    }
    Ok(CtmcRates {
        mu: sys.mu,
        lambda: sys.lambda,
        s: [sys.switchover[0].mean(), sys.switchover[1].mean()],
    })
}

/// Build the CTMC for `sys` with both buffers capped at `cap`.
pub fn build_ctmc(sys: &System, cap: u64) -> Result<CtmcModel, OracleError> {
    let rates = require_exponential(sys)?;
    build_ctmc_from_rates(&rates, &sys.policy, cap)
}

pub fn build_ctmc_from_rates(
    rates: &CtmcRates,
    policy: &crate::policy::PolicyParams,
    cap: u64,
) -> Result<CtmcModel, OracleError> {
    if cap < 1 {
        return Err(OracleError::CapTooSmall { min: 1, got: cap });
    }
    let mu = rates.mu;
    let settle = |phase: ServerPhase, n: [u64; 2]| settle_phase(phase, n, policy, mu);

    let jumps = |s: CtmcState| -> Vec<(CtmcState, f64)> {
        let mut out = Vec::with_capacity(4);
        for q in Queue::BOTH {
            let i = q.idx();
            if rates.lambda[i] > 0.0 && s.n[i] < cap {
                let mut n = s.n;
                n[i] += 1;
                out.push((CtmcState { n, phase: settle(s.phase, n) }, rates.lambda[i]));
            }
        }
        match s.phase {
            ServerPhase::Beginning(q) | ServerPhase::Concluding(q) => {
                if s.n[q.idx()] > 0 {
                    let mut n = s.n;
                    n[q.idx()] -= 1;
                    out.push((CtmcState { n, phase: settle(s.phase, n) }, mu));
                }
            }
            ServerPhase::Switching(q) => {
                let phase = settle(ServerPhase::Beginning(q.opposite()), s.n);
                out.push((CtmcState { n: s.n, phase }, 1.0 / rates.s[q.idx()]));
            }
        }
        out
    };

    // forward reachability from the empty system
    let start = CtmcState {
        n: [0, 0],
        phase: settle(ServerPhase::Beginning(Queue::One), [0, 0]),
    };
    let mut index: HashMap<CtmcState, usize> = HashMap::new();
    let mut states = vec![start];
    let mut edges: Vec<Vec<(usize, f64)>> = Vec::new();
    index.insert(start, 0);
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        let mut row: Vec<(usize, f64)> = Vec::new();
        for (t, r) in jumps(states[i]) {
            let j = *index.entry(t).or_insert_with(|| {
                states.push(t);
                queue.push_back(states.len() - 1);
                states.len() - 1
            });
            match row.iter_mut().find(|(k, _)| *k == j) {
                Some(e) => e.1 += r,
                None => row.push((j, r)),
            }
        }
        if edges.len() <= i {
            edges.resize(i + 1, Vec::new());
        }
        edges[i] = row;
    }

    // keep the single closed class
    let mut g: DiGraph<(), ()> = DiGraph::with_capacity(states.len(), 0);
    let nodes: Vec<NodeIndex> = (0..states.len()).map(|_| g.add_node(())).collect();
    for (i, row) in edges.iter().enumerate() {
        for &(j, _) in row {
            g.add_edge(nodes[i], nodes[j], ());
        }
    }
    let sccs = tarjan_scc(&g);
    let mut comp = vec![0usize; states.len()];
    for (c, members) in sccs.iter().enumerate() {
        for v in members {
            comp[v.index()] = c;
        }
    }
    let closed: Vec<usize> = (0..sccs.len())
        .filter(|&c| {
            sccs[c]
                .iter()
                .all(|v| edges[v.index()].iter().all(|&(j, _)| comp[j] == c))
        })
        .collect();
    if closed.len() != 1 {
        return Err(OracleError::Singular(format!(
            "{} closed classes in the reachable state space",
            closed.len()
        )));
    }
    let mut keep: Vec<usize> = sccs[closed[0]].iter().map(|v| v.index()).collect();
    keep.sort_by_key(|&i| states[i].sort_key());
    let mut remap = vec![usize::MAX; states.len()];
    for (new, &old) in keep.iter().enumerate() {
        remap[old] = new;
    }
    let transitions = keep
        .iter()
        .map(|&old| edges[old].iter().map(|&(j, r)| (remap[j], r)).collect())
        .collect();
    Ok(CtmcModel {
        cap,
        states: keep.iter().map(|&i| states[i]).collect(),
        transitions,
    })
}

/// Banded storage of a square matrix: row `i`, columns `i−bw ..= i+bw`.
struct Band {
    bw: usize,
    width: usize,
    data: Vec<f64>,
}

impl Band {
    fn new(n: usize, bw: usize) -> Self {
        let width = 2 * bw + 1;
        Self {
            bw,
            width,
            data: vec![0.0; n * width],
        }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.bw - i)
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.at(i, j)]
    }

    #[inline]
    fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.at(i, j);
        self.data[k] += v;
    }
}

/// Stationary distribution `π` with `πQ = 0`, `Σπ = 1`.
pub fn stationary_distribution(m: &CtmcModel) -> Result<Vec<f64>, OracleError> {
    let n = m.len();
    if n == 1 {
        return Ok(vec![1.0]);
    }
    let bw = m.bandwidth();
    let mut q = Band::new(n, bw);
    for (i, row) in m.transitions.iter().enumerate() {
        for &(j, r) in row {
            q.add(i, j, r);
        }
    }

    // GTH: eliminate states from the last to the first
    let mut pivot = vec![0.0; n];
    for k in (1..n).rev() {
        let lo = k.saturating_sub(bw);
        let s: f64 = (lo..k).map(|j| q.get(k, j)).sum();
        if !(s > 0.0) {
            return Err(OracleError::Singular(format!("state {k} has no path to lower states")));
        }
        pivot[k] = s;
        for i in lo..k {
            let qik = q.get(i, k);
            if qik == 0.0 {
                continue;
            }
            let f = qik / s;
            for j in lo..k {
                if j != i {
                    let v = q.get(k, j);
                    if v != 0.0 {
                        q.add(i, j, f * v);
                    }
                }
            }
        }
    }

    let mut pi = vec![0.0; n];
    pi[0] = 1.0;
    for j in 1..n {
        let lo = j.saturating_sub(bw);
        let inflow: f64 = (lo..j).map(|i| pi[i] * q.get(i, j)).sum();
        pi[j] = inflow / pivot[j];
    }
    let total: f64 = pi.iter().sum();
    for p in &mut pi {
        *p /= total;
        if *p < 0.0 && *p >= -1e-14 {
            *p = 0.0;
        }
    }
    let res = m.residual(&pi);
    if !(res < RESIDUAL_TOL) {
        return Err(OracleError::Residual(res));
    }
    Ok(pi)
}

/// `(E[N_1], E[N_2])` under `π`.
pub fn oracle_expected_lengths(pi: &[f64], m: &CtmcModel) -> [f64; 2] {
    let mut en = [0.0; 2];
    for (p, s) in pi.iter().zip(&m.states) {
        en[0] += p * s.n[0] as f64;
        en[1] += p * s.n[1] as f64;
    }
    en
}

/// Stationary probability of states with a full buffer.
pub fn boundary_mass(pi: &[f64], m: &CtmcModel) -> f64 {
    pi.iter()
        .zip(&m.states)
        .filter(|(_, s)| s.n[0] == m.cap || s.n[1] == m.cap)
        .map(|(p, _)| p)
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    pub en1: f64,
    pub en2: f64,
    pub states: usize,
    pub residual: f64,
    pub boundary_mass: f64,
}

/// Build and solve in one go.
pub fn solve(sys: &System, cap: u64) -> Result<OracleSolution, OracleError> {
    let m = build_ctmc(sys, cap)?;
    let pi = stationary_distribution(&m)?;
    let [en1, en2] = oracle_expected_lengths(&pi, &m);
    Ok(OracleSolution {
        en1,
        en2,
        states: m.len(),
        residual: m.residual(&pi),
        boundary_mass: boundary_mass(&pi, &m),
    })
}

/// Mean number in system of an M/G/1 queue with multiple vacations, where
/// each vacation is the sum of independent `vacation_parts`:
/// `E[N] = λ(λE[B²]/(2(1−ρ)) + E[V²]/(2E[V]) + E[B])`.
pub fn mg1_vacation_reference(
    lambda: f64,
    service: &DistributionSpec,
    vacation_parts: &[DistributionSpec],
) -> Result<f64, OracleError> {
    let (b1, b2) = service.moments();
    let rho = lambda * b1;
    if !(rho < 1.0) {
        return Err(OracleError::Unstable(rho));
    }
    let mut v1 = 0.0;
    let mut v2 = 0.0;
    for part in vacation_parts {
        let (m1, m2) = part.moments();
        // E[(V + X)²] = E[V²] + 2E[V]E[X] + E[X²]
        v2 += 2.0 * v1 * m1 + m2;
        v1 += m1;
    }
    Ok(lambda * (lambda * b2 / (2.0 * (1.0 - rho)) + v2 / (2.0 * v1) + b1))
}
