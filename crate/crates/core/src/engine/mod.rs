//! Event-driven simulator of the two-queue polling system.
//!
//! Arrivals are Poisson, service is non-resume preemptive (a job cut off by
//! a switch keeps its place in the queue and gets a fresh service time on
//! the next visit), and the server cycles through six phases:
//! `(1,B) → (1,C) → S1 → (2,B) → (2,C) → S2 → (1,B)`. The `B` and `C`
//! phases may have zero length. Phase changes are decided only at arrival,
//! departure and server-arrival epochs.
//!
//! Only four clocks are ever pending (one arrival per queue, one service
//! completion, one switchover completion), so the future event list is a
//! fixed array scanned in tie order `arrival Q1 < arrival Q2 < departure <
//! switch completion`.

mod estimate;
mod trace;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use estimate::{
    batch_means_estimate, batch_ratios, cycle_increments, modal_palm_state, palm_mean_estimate, palm_series, regenerative_estimate,
    time_average_estimate, Estimate, Increment, PalmObservation, MIN_BATCHES, MIN_REGENERATIONS,
};
pub use trace::{write_trace_csv, TraceEvent, TraceKind};

use crate::config::{Horizon, System};
use crate::error::EngineError;
use crate::policy::{PhaseKind, PolicyParams, Queue};
use crate::stochastic::{RngStream, Sampler};

/// Where the server is and what it is doing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ServerPhase {
    Beginning(Queue),
    Concluding(Queue),
    /// Travelling away from the given queue.
    Switching(Queue),
}

impl ServerPhase {
    pub const CYCLE: [ServerPhase; 6] = [
        ServerPhase::Beginning(Queue::One),
        ServerPhase::Concluding(Queue::One),
        ServerPhase::Switching(Queue::One),
        ServerPhase::Beginning(Queue::Two),
        ServerPhase::Concluding(Queue::Two),
        ServerPhase::Switching(Queue::Two),
    ];

    /// Position in [`ServerPhase::CYCLE`].
    pub fn cycle_index(self) -> usize {
        let base = match self {
            ServerPhase::Beginning(_) => 0,
            ServerPhase::Concluding(_) => 1,
            ServerPhase::Switching(_) => 2,
        };
        base + 3 * self.queue().idx()
    }

    pub fn successor(self) -> ServerPhase {
        Self::CYCLE[(self.cycle_index() + 1) % 6]
    }

    pub fn queue(self) -> Queue {
        match self {
            ServerPhase::Beginning(q) | ServerPhase::Concluding(q) | ServerPhase::Switching(q) => q,
        }
    }

    /// The queue being served, if the server is at a queue.
    pub fn visiting(self) -> Option<Queue> {
        match self {
            ServerPhase::Beginning(q) | ServerPhase::Concluding(q) => Some(q),
            ServerPhase::Switching(_) => None,
        }
    }

    pub fn label(self) -> &'static str {
        ["1B", "1C", "S1", "2B", "2C", "S2"][self.cycle_index()]
    }

    pub fn from_label(s: &str) -> Option<ServerPhase> {
        Self::CYCLE.into_iter().find(|p| p.label() == s)
    }
}

impl fmt::Display for ServerPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl Serialize for ServerPhase {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for ServerPhase {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        ServerPhase::from_label(&s)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown phase {s}")))
    }
}

/// One instantaneous phase transition, if the policy calls for one in the
/// current state. A switching phase never ends instantaneously.
pub fn phase_step(phase: ServerPhase, n: [u64; 2], p: &PolicyParams, mu: f64) -> Option<ServerPhase> {
    match phase {
        ServerPhase::Beginning(q) => {
            let (ni, nj) = (n[q.idx()], n[q.opposite().idx()]);
            p.beginning_over(q, ni, nj, mu).then_some(ServerPhase::Concluding(q))
        }
        ServerPhase::Concluding(q) => {
            let (ni, nj) = (n[q.idx()], n[q.opposite().idx()]);
            p.switch_now(q, ni, nj, mu).then_some(ServerPhase::Switching(q))
        }
        ServerPhase::Switching(_) => None,
    }
}

/// Apply [`phase_step`] until nothing changes.
pub fn settle_phase(mut phase: ServerPhase, n: [u64; 2], p: &PolicyParams, mu: f64) -> ServerPhase {
    while let Some(next) = phase_step(phase, n, p, mu) {
        phase = next;
    }
    phase
}

/// Snapshot of the running system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub now: f64,
    pub n: [u64; 2],
    pub phase: ServerPhase,
    pub next_arrival: [f64; 2],
    /// Set only while a customer is in service.
    pub service_completion: Option<f64>,
    /// Set only while switching.
    pub switch_completion: Option<f64>,
    /// Index of the current cycle.
    pub cycle: u64,
}

/// Observables of one cycle, which starts when the server arrives at `Q_1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PalmRecord {
    pub k: u64,
    /// Cycle start `Φ_k`.
    pub phi: f64,
    /// Queue lengths at `Φ_k`.
    pub n: [u64; 2],
    /// `N_ik / μ`.
    pub theta: [f64; 2],
    /// Cycle length `Ψ_k`.
    pub psi: f64,
    /// Visit times `M_ik = B_ik + C_ik`.
    pub m: [f64; 2],
    pub b: [f64; 2],
    pub c: [f64; 2],
    /// Realized switchover times.
    pub s: [f64; 2],
    /// `Π_iC` at the switching instant from `Q_i`.
    pub h: [f64; 2],
    /// `∫ N_i dt` over the cycle.
    pub area: [f64; 2],
}

/// Stretch between two consecutive cycle starts whose Palm state equals the
/// regeneration reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegenCycle {
    pub start_k: u64,
    pub end_k: u64,
    pub duration: f64,
    pub area: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Totals {
    pub arrivals: [u64; 2],
    pub departures: [u64; 2],
    /// Arrivals lost to a full buffer.
    pub dropped: [u64; 2],
    /// Services cut off by a switch.
    pub preemptions: [u64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutput {
    pub mu: f64,
    pub palm: Vec<PalmRecord>,
    /// `∫ N_i dt / horizon` over the whole run.
    pub time_avg_n: [f64; 2],
    /// Share of time in each phase, in [`ServerPhase::CYCLE`] order.
    pub phase_time_fractions: [f64; 6],
    /// Regeneration cycles at the empty Palm state.
    pub regen: Vec<RegenCycle>,
    pub totals: Totals,
    pub horizon: f64,
    pub initial_n: [u64; 2],
    pub final_n: [u64; 2],
    pub final_phase: ServerPhase,
    #[serde(skip)]
    pub trace: Option<Vec<TraceEvent>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    /// Replicate index; selects disjoint random streams under the same seed.
    pub replicate: u64,
    pub trace: bool,
}

/// Component streams per replicate.
const STREAMS_PER_RUN: u64 = 8;
const ARRIVAL_STREAM: [u64; 2] = [0, 1];
const SERVICE_STREAM: u64 = 2;
const SWITCH_STREAM: [u64; 2] = [3, 4];

#[derive(Debug, Clone, Copy)]
enum Event {
    Arrival(Queue),
    Departure,
    SwitchDone,
}

#[derive(Debug, Clone, Copy, Default)]
struct CycleMarks {
    phi: f64,
    n: [u64; 2],
    area: [f64; 2],
    visit_start: [f64; 2],
    b_end: [f64; 2],
    switch_start: [f64; 2],
    switch_end: [f64; 2],
    h: [f64; 2],
}

struct Simulator<'a> {
    sys: &'a System,
    state: SimState,
    arrival_rng: [RngStream; 2],
    service_rng: RngStream,
    switch_rng: [RngStream; 2],
    service: Sampler,
    switchover: [Sampler; 2],
    area: [f64; 2],
    phase_time: [f64; 6],
    marks: CycleMarks,
    palm: Vec<PalmRecord>,
    totals: Totals,
    trace: Option<Vec<TraceEvent>>,
}

impl<'a> Simulator<'a> {
    fn new(sys: &'a System, opts: RunOptions) -> Self {
        let stream = |c: u64| RngStream::new(sys.seed, opts.replicate * STREAMS_PER_RUN + c);
        let mut arrival_rng = [stream(ARRIVAL_STREAM[0]), stream(ARRIVAL_STREAM[1])];
        let next_arrival = [0, 1].map(|i| {
            if sys.lambda[i] > 0.0 {
                arrival_rng[i].exp(sys.lambda[i])
            } else {
                f64::INFINITY
            }
        });
        let state = SimState {
            now: 0.0,
            n: sys.initial,
            phase: ServerPhase::Beginning(Queue::One),
            next_arrival,
            service_completion: None,
            switch_completion: None,
            cycle: 0,
        };
        Self {
            sys,
            state,
            arrival_rng,
            service_rng: stream(SERVICE_STREAM),
            switch_rng: [stream(SWITCH_STREAM[0]), stream(SWITCH_STREAM[1])],
            service: sys.service.sampler(),
            switchover: [sys.switchover[0].sampler(), sys.switchover[1].sampler()],
            area: [0.0; 2],
            phase_time: [0.0; 6],
            marks: CycleMarks {
                n: sys.initial,
                ..CycleMarks::default()
            },
            palm: Vec::new(),
            totals: Totals::default(),
            trace: opts.trace.then(Vec::new),
        }
    }

    fn record(&mut self, kind: TraceKind) {
        if let Some(trace) = &mut self.trace {
            trace.push(TraceEvent {
                t: self.state.now,
                kind,
                n: self.state.n,
                phase: self.state.phase,
            });
        }
    }

    fn next_event(&self) -> (f64, Event) {
        let s = &self.state;
        let mut best = (s.next_arrival[0], Event::Arrival(Queue::One));
        let candidates = [
            (s.next_arrival[1], Event::Arrival(Queue::Two)),
            (s.service_completion.unwrap_or(f64::INFINITY), Event::Departure),
            (s.switch_completion.unwrap_or(f64::INFINITY), Event::SwitchDone),
        ];
        for c in candidates {
            // strict: earlier entries win ties
            if c.0 < best.0 {
                best = c;
            }
        }
        best
    }

    fn advance(&mut self, t: f64) {
        let dt = t - self.state.now;
        debug_assert!(dt >= 0.0);
        for i in 0..2 {
            self.area[i] += self.state.n[i] as f64 * dt;
        }
        self.phase_time[self.state.phase.cycle_index()] += dt;
        self.state.now = t;
    }

    /// Apply all instantaneous phase changes the policy calls for.
    fn resolve_phases(&mut self) {
        let (p, mu) = (&self.sys.policy, self.sys.mu);
        while let Some(next) = phase_step(self.state.phase, self.state.n, p, mu) {
            let now = self.state.now;
            match next {
                ServerPhase::Concluding(q) => self.marks.b_end[q.idx()] = now,
                ServerPhase::Switching(q) => {
                    let i = q.idx();
                    let (ni, nj) = (self.state.n[i], self.state.n[1 - i]);
                    self.marks.switch_start[i] = now;
                    self.marks.h[i] = p.pi_value(PhaseKind::Concluding, q, ni, nj, mu);
                    if self.state.service_completion.take().is_some() {
                        self.totals.preemptions[i] += 1;
                    }
                    let d = self.switchover[i].sample(&mut self.switch_rng[i]);
                    self.state.switch_completion = Some(now + d);
                }
                ServerPhase::Beginning(_) => unreachable!("phase_step never enters a beginning phase"),
            }
            self.state.phase = next;
            self.record(TraceKind::Phase);
        }
    }

    fn ensure_service(&mut self) {
        if let Some(q) = self.state.phase.visiting() {
            if self.state.service_completion.is_none() && self.state.n[q.idx()] > 0 {
                let d = self.service.sample(&mut self.service_rng);
                self.state.service_completion = Some(self.state.now + d);
            }
        }
    }

    fn arrive_at(&mut self, q: Queue) {
        let now = self.state.now;
        let i = q.idx();
        self.marks.visit_start[i] = now;
        self.state.phase = ServerPhase::Beginning(q);
        self.state.switch_completion = None;
        self.record(TraceKind::Phase);
    }

    fn finish_cycle(&mut self) {
        let now = self.state.now;
        let m = &self.marks;
        let mu = self.sys.mu;
        let rec = PalmRecord {
            k: self.state.cycle,
            phi: m.phi,
            n: m.n,
            theta: [m.n[0] as f64 / mu, m.n[1] as f64 / mu],
            psi: now - m.phi,
            m: [0, 1].map(|i| m.switch_start[i] - m.visit_start[i]),
            b: [0, 1].map(|i| m.b_end[i] - m.visit_start[i]),
            c: [0, 1].map(|i| m.switch_start[i] - m.b_end[i]),
            s: [0, 1].map(|i| m.switch_end[i] - m.switch_start[i]),
            h: m.h,
            area: [0, 1].map(|i| self.area[i] - m.area[i]),
        };
        self.palm.push(rec);
        self.state.cycle += 1;
        self.marks = CycleMarks {
            phi: now,
            n: self.state.n,
            area: self.area,
            ..CycleMarks::default()
        };
    }

    fn run(mut self) -> Result<SimOutput, EngineError> {
        let (time_limit, cycle_limit) = match self.sys.horizon {
            Horizon::Time(t) => (t, u64::MAX),
            Horizon::Cycles(k) => (f64::INFINITY, k),
        };
        self.arrive_at(Queue::One);
        self.resolve_phases();
        self.ensure_service();

        loop {
            let (t, event) = self.next_event();
            if t > time_limit {
                self.advance(time_limit);
                break;
            }
            if !t.is_finite() {
                return Err(EngineError::Stalled(self.state.now));
            }
            self.advance(t);
            match event {
                Event::Arrival(q) => {
                    let i = q.idx();
                    self.state.next_arrival[i] = t + self.arrival_rng[i].exp(self.sys.lambda[i]);
                    if self.sys.buffer_cap.is_some_and(|cap| self.state.n[i] >= cap) {
                        self.totals.dropped[i] += 1;
                        self.record(TraceKind::Drop(q));
                    } else {
                        self.state.n[i] += 1;
                        self.totals.arrivals[i] += 1;
                        self.record(TraceKind::Arrival(q));
                    }
                }
                Event::Departure => {
                    let q = self
                        .state
                        .phase
                        .visiting()
                        .expect("service only runs during a visit");
                    let i = q.idx();
                    self.state.n[i] -= 1;
                    self.totals.departures[i] += 1;
                    self.state.service_completion = None;
                    self.record(TraceKind::Departure(q));
                }
                Event::SwitchDone => {
                    let from = self.state.phase.queue();
                    self.marks.switch_end[from.idx()] = t;
                    let to = from.opposite();
                    if to == Queue::One {
                        self.finish_cycle();
                        if self.state.cycle >= cycle_limit {
                            self.arrive_at(to);
                            break;
                        }
                    }
                    self.arrive_at(to);
                }
            }
            self.resolve_phases();
            self.ensure_service();
        }

        let horizon = self.state.now;
        let time_avg_n = if horizon > 0.0 {
            [self.area[0] / horizon, self.area[1] / horizon]
        } else {
            [self.state.n[0] as f64, self.state.n[1] as f64]
        };
        let phase_time_fractions = if horizon > 0.0 {
            self.phase_time.map(|x| x / horizon)
        } else {
            let mut f = [0.0; 6];
            f[self.state.phase.cycle_index()] = 1.0;
            f
        };
        let regen = regeneration_cycles(&self.palm, [0, 0]);
        Ok(SimOutput {
            mu: self.sys.mu,
            palm: self.palm,
            time_avg_n,
            phase_time_fractions,
            regen,
            totals: self.totals,
            horizon,
            initial_n: self.sys.initial,
            final_n: self.state.n,
            final_phase: self.state.phase,
            trace: self.trace,
        })
    }
}

/// Simulate `sys` from its initial state (server arriving at `Q_1` at t=0).
pub fn run(sys: &System) -> Result<SimOutput, EngineError> {
    run_with(sys, RunOptions::default())
}

pub fn run_with(sys: &System, opts: RunOptions) -> Result<SimOutput, EngineError> {
    Simulator::new(sys, opts).run()
}

/// Split the Palm records into cycles between visits to `reference`.
pub fn regeneration_cycles(palm: &[PalmRecord], reference: [u64; 2]) -> Vec<RegenCycle> {
    let mut out = Vec::new();
    let mut open: Option<RegenCycle> = None;
    for rec in palm {
        if rec.n == reference {
            if let Some(mut c) = open.take() {
                c.end_k = rec.k;
                out.push(c);
            }
            open = Some(RegenCycle {
                start_k: rec.k,
                end_k: rec.k,
                duration: 0.0,
                area: [0.0; 2],
            });
        }
        if let Some(c) = &mut open {
            c.duration += rec.psi;
            c.area[0] += rec.area[0];
            c.area[1] += rec.area[1];
        }
    }
    out
}
