//! Two-phase switching policies.
//!
//! While visiting `Q_i` the server runs a *beginning* phase that ends once
//! `Π_iB = α_i^B·N_i + N_j + μ·β_i^B ≥ 0`, followed by a *concluding* phase
//! that ends (and the server switches away) once
//! `Π_iC = N_i + α_i^C·N_j + μ·β_i^C ≤ 0`. Both switching functions are
//! piecewise constant, so they only need to be evaluated at arrival,
//! departure and server-arrival epochs.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::PolicyError;

/// Slack used when comparing a switching function against zero. The
/// functions are affine in integer counts, so anything closer than this is
/// rounding noise from `μ·β`.
const BOUNDARY_EPS: f64 = 1e-9;

/// One of the two queues.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Queue {
    One,
    Two,
}

impl Queue {
    pub const BOTH: [Queue; 2] = [Queue::One, Queue::Two];

    /// Zero-based position, for indexing `[T; 2]` pairs.
    #[inline]
    pub fn idx(self) -> usize {
        match self {
            Queue::One => 0,
            Queue::Two => 1,
        }
    }

    /// One-based label as used in the model (`1` or `2`).
    pub fn number(self) -> u8 {
        self.idx() as u8 + 1
    }

    #[inline]
    pub fn opposite(self) -> Queue {
        match self {
            Queue::One => Queue::Two,
            Queue::Two => Queue::One,
        }
    }

    pub fn from_number(n: u8) -> Option<Queue> {
        match n {
            1 => Some(Queue::One),
            2 => Some(Queue::Two),
            _ => None,
        }
    }
}

impl fmt::Display for Queue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q{}", self.number())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PhaseKind {
    Beginning,
    Concluding,
}

/// Names one of the eight policy coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Coefficient {
    AlphaB(Queue),
    BetaB(Queue),
    AlphaC(Queue),
    BetaC(Queue),
}

impl fmt::Display for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (name, q) = match *self {
            Coefficient::AlphaB(q) => ("alphaB", q),
            Coefficient::BetaB(q) => ("betaB", q),
            Coefficient::AlphaC(q) => ("alphaC", q),
            Coefficient::BetaC(q) => ("betaC", q),
        };
        write!(f, "{}[{}]", name, q.number())
    }
}

/// The eight coefficients of a two-phase policy.
///
/// The `beta_*` entries are normalized: they are multiplied by `μ` when the
/// switching functions are evaluated, so the same policy is comparable
/// across systems with different service rates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PolicyParams {
    #[serde(rename = "alphaB")]
    pub alpha_b: [f64; 2],
    #[serde(rename = "betaB")]
    pub beta_b: [f64; 2],
    #[serde(rename = "alphaC")]
    pub alpha_c: [f64; 2],
    #[serde(rename = "betaC")]
    pub beta_c: [f64; 2],
}

impl PolicyParams {
    /// All coefficients zero: the server leaves a queue exactly when it is
    /// empty.
    pub fn exhaustive() -> Self {
        Self::default()
    }

    pub fn coefficient(&self, c: Coefficient) -> f64 {
        match c {
            Coefficient::AlphaB(q) => self.alpha_b[q.idx()],
            Coefficient::BetaB(q) => self.beta_b[q.idx()],
            Coefficient::AlphaC(q) => self.alpha_c[q.idx()],
            Coefficient::BetaC(q) => self.beta_c[q.idx()],
        }
    }

    fn all_coefficients() -> impl Iterator<Item = Coefficient> {
        Queue::BOTH.into_iter().flat_map(|q| {
            [
                Coefficient::AlphaB(q),
                Coefficient::BetaB(q),
                Coefficient::AlphaC(q),
                Coefficient::BetaC(q),
            ]
        })
    }

    /// Coefficients that are positive (or not finite), in a fixed order.
    pub fn violations(&self) -> Vec<Coefficient> {
        Self::all_coefficients()
            .filter(|&c| {
                let v = self.coefficient(c);
                !(v.is_finite() && v <= 0.0)
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let bad = self.violations();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(PolicyError::PositiveCoefficients(bad))
        }
    }

    /// Product condition `α_1^C·α_2^C < 1` for the certified-stable class.
    pub fn in_stable_class(&self) -> bool {
        self.alpha_c[0] * self.alpha_c[1] < 1.0
    }

    /// Value of the switching function of `phase` while the server visits
    /// queue `i`, given the visited count `n_i` and the opposite count `n_j`.
    pub fn pi_value(&self, phase: PhaseKind, i: Queue, n_i: u64, n_j: u64, mu: f64) -> f64 {
        let k = i.idx();
        let (n_i, n_j) = (n_i as f64, n_j as f64);
        match phase {
            PhaseKind::Beginning => self.alpha_b[k] * n_i + n_j + mu * self.beta_b[k],
            PhaseKind::Concluding => n_i + self.alpha_c[k] * n_j + mu * self.beta_c[k],
        }
    }

    /// `Π_iB ≥ 0`: the beginning phase at `Q_i` is over.
    pub fn beginning_over(&self, i: Queue, n_i: u64, n_j: u64, mu: f64) -> bool {
        self.pi_value(PhaseKind::Beginning, i, n_i, n_j, mu) >= -BOUNDARY_EPS
    }

    /// `Π_iC ≤ 0`: leave `Q_i` now (once the beginning phase is over).
    pub fn switch_now(&self, i: Queue, n_i: u64, n_j: u64, mu: f64) -> bool {
        self.pi_value(PhaseKind::Concluding, i, n_i, n_j, mu) <= BOUNDARY_EPS
    }

    /// Priority-factor policy: leave `Q_i` as soon as `N_j ≥ α_i·N_i`.
    pub fn priority_factor(alpha1: f64, alpha2: f64) -> Result<Self, PolicyError> {
        for (q, a) in [(Queue::One, alpha1), (Queue::Two, alpha2)] {
            if !(a > 0.0) {
                return Err(PolicyError::NonPositiveFactor { queue: q, value: a });
            }
        }
        Ok(Self {
            alpha_c: [-1.0 / alpha1, -1.0 / alpha2],
            ..Self::default()
        })
    }

    /// `(ex, α)` policy: exhaustive at `exhaustive_side`, priority factor
    /// `alpha` at the other queue. `alpha = +∞` gives exhaustive at both.
    pub fn mixed_exhaustive(exhaustive_side: Queue, alpha: f64) -> Result<Self, PolicyError> {
        let other = exhaustive_side.opposite();
        if !(alpha > 0.0) {
            return Err(PolicyError::NonPositiveFactor {
                queue: other,
                value: alpha,
            });
        }
        let mut p = Self::default();
        // -1/inf is -0.0; keep the stored value a plain zero.
        p.alpha_c[other.idx()] = if alpha.is_infinite() { 0.0 } else { -1.0 / alpha };
        Ok(p)
    }

    /// Mixed-exhaustive policy given directly by the non-positive `α^C` of
    /// the non-exhaustive queue.
    pub fn mixed_exhaustive_coeff(exhaustive_side: Queue, alpha_c: f64) -> Result<Self, PolicyError> {
        let other = exhaustive_side.opposite();
        let mut p = Self::default();
        p.alpha_c[other.idx()] = alpha_c;
        p.validate()?;
        Ok(p)
    }

    /// Threshold policy: while at `Q_i` the beginning phase ends once `N_j`
    /// reaches `μ·trigger_j`, and the server leaves once `N_i` drops to
    /// `μ·drain_i`. Thresholds are normalized by `μ`.
    pub fn robust_threshold(
        trigger_b1: f64,
        trigger_b2: f64,
        drain_c1: f64,
        drain_c2: f64,
    ) -> Result<Self, PolicyError> {
        let args = [
            ("trigger_b1", trigger_b1),
            ("trigger_b2", trigger_b2),
            ("drain_c1", drain_c1),
            ("drain_c2", drain_c2),
        ];
        for (name, v) in args {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(PolicyError::NegativeThreshold { name, value: v });
            }
        }
        Ok(Self {
            alpha_b: [0.0, 0.0],
            // the beginning phase at Q_i watches the opposite queue's trigger
            beta_b: [-trigger_b2, -trigger_b1],
            alpha_c: [0.0, 0.0],
            beta_c: [-drain_c1, -drain_c2],
        })
    }
}
