//! System configuration as read from JSON.
//!
//! ```json
//! {
//!   "rates": {"mu": 20, "rho1": 0.3, "rho2": 0.3},
//!   "service": {"dist": "exponential"},
//!   "switchover": [{"dist": "deterministic", "mean": 1}, {"dist": "deterministic", "mean": 1}],
//!   "policy": {"alphaB": [0, 0], "betaB": [0, 0], "alphaC": [0, 0], "betaC": [0, 0]},
//!   "horizon": {"cycles": 20000},
//!   "seed": 1
//! }
//! ```
//!
//! The service mean is `1/μ`; it may be omitted, and if given must agree.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::SystemRates;
use crate::error::{ConfigError, ConfigIssue};
use crate::policy::{PolicyParams, Queue};
use crate::stochastic::{DistKind, DistributionSpec, RawDistribution};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rates {
    pub mu: f64,
    pub rho1: f64,
    pub rho2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Horizon {
    /// Simulated time.
    Time(f64),
    /// Number of completed cycles (server returns to `Q_1`).
    Cycles(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub rates: Rates,
    pub service: RawDistribution,
    pub switchover: [RawDistribution; 2],
    pub policy: PolicyParams,
    pub horizon: Horizon,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub buffer_cap: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<[u64; 2]>,
}

/// A validated configuration with every distribution resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct System {
    pub mu: f64,
    pub rho: [f64; 2],
    pub lambda: [f64; 2],
    pub service: DistributionSpec,
    pub switchover: [DistributionSpec; 2],
    pub policy: PolicyParams,
    pub horizon: Horizon,
    pub seed: u64,
    pub buffer_cap: Option<u64>,
    pub initial: [u64; 2],
}

impl System {
    pub fn rates(&self) -> SystemRates {
        SystemRates::new(
            self.mu,
            self.rho,
            [self.switchover[0].mean(), self.switchover[1].mean()],
        )
    }
}

impl SystemConfig {
    /// Exponential service, the given switchover specs, exhaustive policy,
    /// 1000 cycles, seed 0.
    pub fn new(mu: f64, rho: [f64; 2], switchover: [DistributionSpec; 2]) -> Self {
        Self {
            rates: Rates {
                mu,
                rho1: rho[0],
                rho2: rho[1],
            },
            service: RawDistribution {
                dist: DistKind::Exponential,
                mean: None,
                shape: None,
                lo: None,
                hi: None,
            },
            switchover: switchover.map(RawDistribution::from),
            policy: PolicyParams::exhaustive(),
            horizon: Horizon::Cycles(1000),
            seed: 0,
            buffer_cap: None,
            initial: None,
        }
    }

    pub fn with_policy(mut self, policy: PolicyParams) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_horizon(mut self, horizon: Horizon) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_service(mut self, service: DistributionSpec) -> Self {
        self.service = service.into();
        self
    }

    pub fn with_buffer_cap(mut self, cap: Option<u64>) -> Self {
        self.buffer_cap = cap;
        self
    }

    pub fn with_initial(mut self, initial: [u64; 2]) -> Self {
        self.initial = Some(initial);
        self
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, LoadError> {
        let text = std::fs::read_to_string(path).map_err(|e| LoadError::Io(path.display().to_string(), e.to_string()))?;
        Self::from_json(&text).map_err(|e| LoadError::Parse(e.to_string()))
    }

    /// Check every field and resolve the distributions. All problems are
    /// reported together.
    pub fn resolve(&self) -> Result<System, ConfigError> {
        let mut issues = Vec::new();
        let mu = self.rates.mu;
        if !(mu.is_finite() && mu > 0.0) {
            issues.push(ConfigIssue::Mu(mu));
        }
        let rho = [self.rates.rho1, self.rates.rho2];
        for q in Queue::BOTH {
            let r = rho[q.idx()];
            if !(r.is_finite() && r >= 0.0) {
                issues.push(ConfigIssue::Rho { queue: q, value: r });
            }
        }

        let expected = 1.0 / mu;
        let service = match self.service.resolve(Some(expected)) {
            Ok(s) => {
                if mu > 0.0 && (s.mean() - expected).abs() > 1e-12 * expected.max(1.0) {
                    issues.push(ConfigIssue::ServiceMean {
                        got: s.mean(),
                        expected,
                    });
                }
                Some(s)
            }
            Err(e) => {
                issues.push(ConfigIssue::Service(e));
                None
            }
        };

        let mut switchover = [None, None];
        for q in Queue::BOTH {
            match self.switchover[q.idx()].resolve(None) {
                Ok(s) => switchover[q.idx()] = Some(s),
                Err(err) => issues.push(ConfigIssue::Switchover { queue: q, err }),
            }
        }

        if let Err(e) = self.policy.validate() {
            issues.push(ConfigIssue::Policy(e));
        }

        match self.horizon {
            Horizon::Time(t) if !(t.is_finite() && t > 0.0) => issues.push(ConfigIssue::Horizon),
            Horizon::Cycles(0) => issues.push(ConfigIssue::Horizon),
            _ => {}
        }

        let initial = self.initial.unwrap_or([0, 0]);
        if let Some(cap) = self.buffer_cap {
            if cap == 0 {
                issues.push(ConfigIssue::BufferCap);
            }
            for &count in &initial {
                if count > cap {
                    issues.push(ConfigIssue::InitialAboveCap { count, cap });
                }
            }
        }

        if !issues.is_empty() {
            return Err(ConfigError(issues));
        }
        Ok(System {
            mu,
            rho,
            lambda: [rho[0] * mu, rho[1] * mu],
            service: service.expect("checked"),
            switchover: [switchover[0].expect("checked"), switchover[1].expect("checked")],
            policy: self.policy,
            horizon: self.horizon,
            seed: self.seed,
            buffer_cap: self.buffer_cap,
            initial,
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read {0}: {1}")]
    Io(String, String),
    #[error("cannot parse config: {0}")]
    Parse(String),
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
        "rates": {"mu": 20, "rho1": 0.3, "rho2": 0.3},
        "service": {"dist": "exponential"},
        "switchover": [{"dist": "deterministic", "mean": 1}, {"dist": "deterministic", "mean": 1}],
        "policy": {"alphaB": [0, 0], "betaB": [0, 0], "alphaC": [0, -0.5], "betaC": [0, 0]},
        "horizon": {"cycles": 100},
        "seed": 9
    }"#;

    #[test]
    fn parses_and_resolves() {
        let cfg = SystemConfig::from_json(SAMPLE).unwrap();
        let sys = cfg.resolve().unwrap();
        assert_eq!(sys.service, DistributionSpec::exponential(0.05));
        assert_eq!(sys.lambda, [6.0, 6.0]);
        assert_eq!(sys.policy.alpha_c, [0.0, -0.5]);
        assert_eq!(sys.horizon, Horizon::Cycles(100));
        assert_eq!(sys.initial, [0, 0]);
        let again = SystemConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn reports_all_issues() {
        let mut cfg = SystemConfig::from_json(SAMPLE).unwrap();
        cfg.policy.beta_b[0] = 1.0;
        cfg.rates.mu = 20.0;
        cfg.service.mean = Some(0.2);
        cfg.horizon = Horizon::Time(-1.0);
        let err = cfg.resolve().unwrap_err();
        assert_eq!(err.0.len(), 3, "{err}");
        assert!(err.to_string().contains("betaB[1]"));
    }

    #[test]
    fn service_mean_is_checked() {
        let mut cfg = SystemConfig::from_json(SAMPLE).unwrap();
        cfg.service.mean = Some(0.05);
        assert!(cfg.resolve().is_ok());
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = SAMPLE.replace("\"seed\": 9", "\"seed\": 9, \"bogus\": 1");
        assert!(SystemConfig::from_json(&bad).is_err());
    }
}
