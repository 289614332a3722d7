//! Policy-space exploration: random samples from the stable class, the
//! mixed-exhaustive frontier grid, and CI-aware Pareto filtering.

use std::io::{self, Write};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{is_stable, theta_star};
use crate::config::System;
use crate::engine::{
    batch_ratios, cycle_increments, palm_series, run_with, Estimate, Increment, RunOptions, MIN_BATCHES,
};
use crate::error::SweepError;
use crate::policy::{Coefficient, PolicyParams, Queue};
use crate::stochastic::RngStream;

/// Stream used by [`sample_policies`]; far above any simulation stream.
const SAMPLER_STREAM: u64 = 1 << 48;
/// Policy indices of frontier points start here so their streams never
/// collide with those of random samples.
pub const FRONTIER_INDEX_OFFSET: u64 = 1 << 24;
/// Share of each replicate's cycles discarded as warm-up.
pub const BURN_IN_FRACTION: f64 = 0.1;
/// Batches per replicate.
pub const BATCHES_PER_REPLICATE: usize = 20;

/// Closed interval `[lo, hi]` with `lo ≤ hi ≤ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    fn valid(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi && self.hi <= 0.0
    }

    fn draw(&self, rng: &mut RngStream) -> f64 {
        if self.lo == self.hi {
            return self.hi;
        }
        self.lo + (self.hi - self.lo) * rng.rng().random::<f64>()
    }
}

/// Per-coefficient sampling ranges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyBounds {
    #[serde(rename = "alphaB")]
    pub alpha_b: [Range; 2],
    #[serde(rename = "betaB")]
    pub beta_b: [Range; 2],
    #[serde(rename = "alphaC")]
    pub alpha_c: [Range; 2],
    #[serde(rename = "betaC")]
    pub beta_c: [Range; 2],
}

impl Default for PolicyBounds {
    fn default() -> Self {
        Self {
            alpha_b: [Range::new(-2.0, 0.0); 2],
            beta_b: [Range::new(-0.5, 0.0); 2],
            alpha_c: [Range::new(-3.0, 0.0); 2],
            beta_c: [Range::new(-0.5, 0.0); 2],
        }
    }
}

impl PolicyBounds {
    /// Every range collapsed to `[0, 0]`.
    pub fn exhaustive() -> Self {
        let z = [Range::new(0.0, 0.0); 2];
        Self {
            alpha_b: z,
            beta_b: z,
            alpha_c: z,
            beta_c: z,
        }
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        for q in Queue::BOTH {
            let i = q.idx();
            let checks = [
                (Coefficient::AlphaB(q), self.alpha_b[i]),
                (Coefficient::BetaB(q), self.beta_b[i]),
                (Coefficient::AlphaC(q), self.alpha_c[i]),
                (Coefficient::BetaC(q), self.beta_c[i]),
            ];
            for (c, r) in checks {
                if !r.valid() {
                    return Err(SweepError::BadBounds(c));
                }
            }
        }
        // the smallest attainable product is hi1·hi2
        if self.alpha_c[0].hi * self.alpha_c[1].hi >= 1.0 {
            return Err(SweepError::EmptyStableRegion);
        }
        Ok(())
    }
}

/// `n` policies drawn uniformly per coefficient within `bounds`, rejecting
/// draws with `α_1^C·α_2^C ≥ 1`.
pub fn sample_policies(n: usize, bounds: &PolicyBounds, seed: u64) -> Result<Vec<PolicyParams>, SweepError> {
    bounds.validate()?;
    let mut rng = RngStream::new(seed, SAMPLER_STREAM);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let mut p = PolicyParams::default();
        for i in 0..2 {
            p.alpha_b[i] = bounds.alpha_b[i].draw(&mut rng);
            p.beta_b[i] = bounds.beta_b[i].draw(&mut rng);
            p.alpha_c[i] = bounds.alpha_c[i].draw(&mut rng);
            p.beta_c[i] = bounds.beta_c[i].draw(&mut rng);
        }
        if p.in_stable_class() {
            out.push(p);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PointTag {
    #[serde(rename = "random-Ts")]
    RandomTs,
    #[serde(rename = "Ps-frontier")]
    PsFrontier,
}

impl PointTag {
    pub fn label(&self) -> &'static str {
        match self {
            PointTag::RandomTs => "random-Ts",
            PointTag::PsFrontier => "Ps-frontier",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub policy: PolicyParams,
    pub mu: f64,
    /// Time-stationary `E[N_1]`, `E[N_2]`.
    pub en: [Estimate; 2],
    /// Palm means of `Θ_1`, `Θ_2`.
    pub palm_mean: [Estimate; 2],
    pub theta_star: Option<[f64; 2]>,
    pub dominated: bool,
    pub tag: PointTag,
}

impl ParetoPoint {
    /// `E[N_i]/μ`, comparable across `μ`.
    pub fn normalized_en(&self) -> [f64; 2] {
        [self.en[0].mean / self.mu, self.en[1].mean / self.mu]
    }

    /// True when `self` beats `other` in both coordinates by more than the
    /// sum of the two half-widths.
    pub fn dominates(&self, other: &ParetoPoint) -> bool {
        (0..2).all(|i| self.en[i].hi() < other.en[i].lo())
    }
}

/// Simulate `p` on `base` with `replications` independent replicates and
/// pool the batch-means estimates.
pub fn evaluate_policy(
    p: &PolicyParams,
    base: &System,
    replications: usize,
    policy_index: u64,
    tag: PointTag,
) -> Result<ParetoPoint, SweepError> {
    let mut sys = base.clone();
    sys.policy = *p;
    let rates = sys.rates();
    let verdict = is_stable(&rates, p);
    if !verdict.stable {
        let reasons: Vec<&str> = verdict.reasons.iter().map(|r| r.as_str()).collect();
        return Err(SweepError::Unstable(reasons.join(", ")));
    }
    let replications = replications.max(1);
    let per_rep: Vec<[Vec<f64>; 4]> = (0..replications as u64)
        .into_par_iter()
        .map(|r| -> Result<[Vec<f64>; 4], SweepError> {
            let opts = RunOptions {
                replicate: (policy_index << 16) | r,
                trace: false,
            };
            let out = run_with(&sys, opts)?;
            let burn_in = (out.palm.len() as f64 * BURN_IN_FRACTION) as usize;
            let batches = BATCHES_PER_REPLICATE.max(MIN_BATCHES);
            let palm = palm_series(&out, burn_in)?;
            let theta = |i: usize| -> Vec<Increment> {
                palm.iter()
                    .map(|o| Increment {
                        area: o.theta[i],
                        duration: 1.0,
                    })
                    .collect()
            };
            Ok([
                batch_ratios(&cycle_increments(&out, burn_in, 0)?, batches)?,
                batch_ratios(&cycle_increments(&out, burn_in, 1)?, batches)?,
                batch_ratios(&theta(0), batches)?,
                batch_ratios(&theta(1), batches)?,
            ])
        })
        .collect::<Result<_, _>>()?;

    let pooled = |j: usize| -> Estimate {
        let all: Vec<f64> = per_rep.iter().flat_map(|r| r[j].iter().copied()).collect();
        Estimate::from_samples(&all)
    };
    Ok(ParetoPoint {
        policy: *p,
        mu: sys.mu,
        en: [pooled(0), pooled(1)],
        palm_mean: [pooled(2), pooled(3)],
        theta_star: theta_star(&rates, p).ok().map(|f| f.theta),
        dominated: false,
        tag,
    })
}

/// Set `dominated` on every point. Order-independent and idempotent.
pub fn pareto_filter(points: &mut [ParetoPoint]) {
    let flags: Vec<bool> = points
        .iter()
        .map(|p| points.iter().any(|q| q.dominates(p)))
        .collect();
    for (p, d) in points.iter_mut().zip(flags) {
        p.dominated = d;
    }
}

/// Indices of the non-dominated points.
pub fn frontier_indices(points: &[ParetoPoint]) -> Vec<usize> {
    points
        .iter()
        .enumerate()
        .filter(|(_, p)| !p.dominated)
        .map(|(i, _)| i)
        .collect()
}

/// Mixed-exhaustive policies for each `α^C` in `alpha_values`: `(ex, α^C)`
/// and, with `side_both`, also `(α^C, ex)`.
pub fn frontier_policies(alpha_values: &[f64], side_both: bool) -> Result<Vec<PolicyParams>, SweepError> {
    let mut out = Vec::new();
    let sides: &[Queue] = if side_both { &Queue::BOTH } else { &[Queue::One] };
    for &side in sides {
        for &a in alpha_values {
            if !(a <= 0.0 && a.is_finite()) {
                return Err(SweepError::BadGridValue(a));
            }
            out.push(PolicyParams::mixed_exhaustive_coeff(side, a).map_err(|_| SweepError::BadGridValue(a))?);
        }
    }
    Ok(out)
}

pub fn frontier_grid(
    alpha_values: &[f64],
    side_both: bool,
    base: &System,
    replications: usize,
) -> Result<Vec<ParetoPoint>, SweepError> {
    let policies = frontier_policies(alpha_values, side_both)?;
    evaluate_all(&policies, FRONTIER_INDEX_OFFSET, PointTag::PsFrontier, base, replications)
}

/// Evaluate `policies` concurrently; the `j`-th gets policy index `first_index + j`.
pub fn evaluate_all(
    policies: &[PolicyParams],
    first_index: u64,
    tag: PointTag,
    base: &System,
    replications: usize,
) -> Result<Vec<ParetoPoint>, SweepError> {
    policies
        .par_iter()
        .enumerate()
        .map(|(j, p)| evaluate_policy(p, base, replications, first_index + j as u64, tag))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub points: Vec<ParetoPoint>,
    pub frontier: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    pub samples: usize,
    pub bounds: PolicyBounds,
    pub alpha_grid: Vec<f64>,
    pub side_both: bool,
    pub replications: usize,
}

/// Random samples followed by the frontier grid, Pareto-filtered together.
pub fn run_sweep(plan: &SweepPlan, base: &System) -> Result<SweepResult, SweepError> {
    let random = sample_policies(plan.samples, &plan.bounds, base.seed)?;
    let mut points = evaluate_all(&random, 0, PointTag::RandomTs, base, plan.replications)?;
    points.extend(frontier_grid(&plan.alpha_grid, plan.side_both, base, plan.replications)?);
    pareto_filter(&mut points);
    let frontier = frontier_indices(&points);
    Ok(SweepResult { points, frontier })
}

pub const CSV_HEADER: &str =
    "a1B,a2B,b1B,b2B,a1C,a2C,b1C,b2C,en1,en1_ci,en2,en2_ci,theta1_star,theta2_star,dominated,tag";

pub fn write_csv<W: Write>(mut w: W, points: &[ParetoPoint]) -> io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for pt in points {
        let p = &pt.policy;
        let (t1, t2) = match pt.theta_star {
            Some([a, b]) => (a.to_string(), b.to_string()),
            None => (String::new(), String::new()),
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            p.alpha_b[0],
            p.alpha_b[1],
            p.beta_b[0],
            p.beta_b[1],
            p.alpha_c[0],
            p.alpha_c[1],
            p.beta_c[0],
            p.beta_c[1],
            pt.en[0].mean,
            pt.en[0].half_width,
            pt.en[1].mean,
            pt.en[1].half_width,
            t1,
            t2,
            pt.dominated,
            pt.tag.label()
        )?;
    }
    Ok(())
}
