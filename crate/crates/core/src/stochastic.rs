//! Distribution specs and seeded random streams for inter-arrival, service
//! and switchover times.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::DistributionError;

/// A positive random variable used for service or switchover times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDistribution", into = "RawDistribution")]
pub enum DistributionSpec {
    Exponential { mean: f64 },
    Deterministic { mean: f64 },
    Erlang { shape: u32, mean: f64 },
    Uniform { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistKind {
    Exponential,
    Deterministic,
    Erlang,
    Uniform,
}

/// JSON shape of a distribution object. `mean` may be omitted where the
/// caller supplies it (the service distribution takes `1/μ`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDistribution {
    pub dist: DistKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
}

impl RawDistribution {
    /// Resolve into a validated spec, taking `default_mean` when the object
    /// carries no mean of its own.
    pub fn resolve(&self, default_mean: Option<f64>) -> Result<DistributionSpec, DistributionError> {
        let name = match self.dist {
            DistKind::Exponential => "exponential",
            DistKind::Deterministic => "deterministic",
            DistKind::Erlang => "erlang",
            DistKind::Uniform => "uniform",
        };
        let mean = self.mean.or(default_mean);
        let spec = match self.dist {
            DistKind::Exponential => DistributionSpec::Exponential {
                mean: mean.ok_or(DistributionError::MissingField(name, "mean"))?,
            },
            DistKind::Deterministic => DistributionSpec::Deterministic {
                mean: mean.ok_or(DistributionError::MissingField(name, "mean"))?,
            },
            DistKind::Erlang => DistributionSpec::Erlang {
                shape: self.shape.ok_or(DistributionError::MissingField(name, "shape"))?,
                mean: mean.ok_or(DistributionError::MissingField(name, "mean"))?,
            },
            DistKind::Uniform => {
                let lo = self.lo.ok_or(DistributionError::MissingField(name, "lo"))?;
                let hi = self.hi.ok_or(DistributionError::MissingField(name, "hi"))?;
                let spec = DistributionSpec::Uniform { lo, hi };
                if let Some(m) = self.mean {
                    let mid = 0.5 * (lo + hi);
                    if (m - mid).abs() > 1e-12 * mid.abs().max(1.0) {
                        return Err(DistributionError::UniformMeanMismatch { mean: m, mid });
                    }
                }
                spec
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl TryFrom<RawDistribution> for DistributionSpec {
    type Error = DistributionError;

    fn try_from(raw: RawDistribution) -> Result<Self, Self::Error> {
        raw.resolve(None)
    }
}

impl From<DistributionSpec> for RawDistribution {
    fn from(spec: DistributionSpec) -> Self {
        let mut raw = RawDistribution {
            dist: spec.kind(),
            mean: Some(spec.mean()),
            shape: None,
            lo: None,
            hi: None,
        };
        match spec {
            DistributionSpec::Erlang { shape, .. } => raw.shape = Some(shape),
            DistributionSpec::Uniform { lo, hi } => {
                raw.lo = Some(lo);
                raw.hi = Some(hi);
            }
            _ => {}
        }
        raw
    }
}

impl DistributionSpec {
    pub fn exponential(mean: f64) -> Self {
        DistributionSpec::Exponential { mean }
    }

    pub fn deterministic(mean: f64) -> Self {
        DistributionSpec::Deterministic { mean }
    }

    pub fn kind(&self) -> DistKind {
        match self {
            DistributionSpec::Exponential { .. } => DistKind::Exponential,
            DistributionSpec::Deterministic { .. } => DistKind::Deterministic,
            DistributionSpec::Erlang { .. } => DistKind::Erlang,
            DistributionSpec::Uniform { .. } => DistKind::Uniform,
        }
    }

    pub fn validate(&self) -> Result<(), DistributionError> {
        let good_mean = |m: f64| m.is_finite() && m > 0.0;
        match *self {
            DistributionSpec::Exponential { mean } | DistributionSpec::Deterministic { mean } => {
                if !good_mean(mean) {
                    return Err(DistributionError::BadMean(mean));
                }
            }
            DistributionSpec::Erlang { shape, mean } => {
                if shape == 0 {
                    return Err(DistributionError::BadShape);
                }
                if !good_mean(mean) {
                    return Err(DistributionError::BadMean(mean));
                }
            }
            DistributionSpec::Uniform { lo, hi } => {
                if !(lo >= 0.0 && lo < hi && hi.is_finite()) {
                    return Err(DistributionError::BadBounds { lo, hi });
                }
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        match *self {
            DistributionSpec::Exponential { mean }
            | DistributionSpec::Deterministic { mean }
            | DistributionSpec::Erlang { mean, .. } => mean,
            DistributionSpec::Uniform { lo, hi } => 0.5 * (lo + hi),
        }
    }

    /// First and second raw moments `(E[X], E[X²])`.
    pub fn moments(&self) -> (f64, f64) {
        match *self {
            DistributionSpec::Exponential { mean } => (mean, 2.0 * mean * mean),
            DistributionSpec::Deterministic { mean } => (mean, mean * mean),
            DistributionSpec::Erlang { shape, mean } => {
                (mean, mean * mean * (1.0 + 1.0 / shape as f64))
            }
            DistributionSpec::Uniform { lo, hi } => {
                (0.5 * (lo + hi), (lo * lo + lo * hi + hi * hi) / 3.0)
            }
        }
    }

    pub fn variance(&self) -> f64 {
        let (m1, m2) = self.moments();
        m2 - m1 * m1
    }

    pub fn is_exponential(&self) -> bool {
        matches!(self, DistributionSpec::Exponential { .. })
    }

    /// Build a sampler. The spec must be valid.
    pub fn sampler(&self) -> Sampler {
        let inner = match *self {
            DistributionSpec::Exponential { mean } => {
                SamplerKind::Exp(Exp::new(1.0 / mean).expect("validated mean"))
            }
            DistributionSpec::Deterministic { mean } => SamplerKind::Const(mean),
            DistributionSpec::Erlang { shape, mean } => SamplerKind::Gamma(
                Gamma::new(shape as f64, mean / shape as f64).expect("validated erlang"),
            ),
            DistributionSpec::Uniform { lo, hi } => {
                SamplerKind::Uniform(Uniform::new(lo, hi).expect("validated bounds"))
            }
        };
        Sampler(inner)
    }

    /// One draw from this distribution.
    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        self.sampler().sample(rng)
    }
}

#[derive(Debug, Clone, Copy)]
enum SamplerKind {
    Exp(Exp<f64>),
    Const(f64),
    Gamma(Gamma<f64>),
    Uniform(Uniform<f64>),
}

/// Prepared sampler for a [`DistributionSpec`].
#[derive(Debug, Clone, Copy)]
pub struct Sampler(SamplerKind);

impl Sampler {
    #[inline]
    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        match &self.0 {
            SamplerKind::Exp(d) => d.sample(&mut rng.rng),
            SamplerKind::Const(v) => *v,
            SamplerKind::Gamma(d) => d.sample(&mut rng.rng),
            SamplerKind::Uniform(d) => d.sample(&mut rng.rng),
        }
    }
}

/// A reproducible random stream keyed by `(master_seed, stream_id)`.
///
/// Streams with the same key replay the same sequence; different stream ids
/// select disjoint ChaCha streams under the same seed.
#[derive(Debug, Clone)]
pub struct RngStream {
    master_seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(stream_id);
        Self {
            master_seed,
            stream_id,
            rng,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Underlying generator, for draws that are not one of the specs above.
    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Exponential draw with the given rate.
    #[inline]
    pub fn exp(&mut self, rate: f64) -> f64 {
        Exp::new(rate).expect("positive rate").sample(&mut self.rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn empirical(spec: DistributionSpec, n: usize, stream: u64) -> (f64, f64) {
        let mut rng = RngStream::new(0xC0FFEE, stream);
        let s = spec.sampler();
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for _ in 0..n {
            let x = s.sample(&mut rng);
            assert!(x > 0.0 || matches!(spec, DistributionSpec::Uniform { lo, .. } if lo == 0.0));
            sum += x;
            sum2 += x * x;
        }
        let mean = sum / n as f64;
        (mean, sum2 / n as f64 - mean * mean)
    }

    #[test]
    fn deterministic_returns_mean() {
        let mut rng = RngStream::new(1, 0);
        let d = DistributionSpec::deterministic(1.0);
        for _ in 0..100 {
            assert_eq!(d.sample(&mut rng), 1.0);
        }
    }

    #[test]
    fn exponential_sample_mean() {
        let (m, _) = empirical(DistributionSpec::exponential(0.1), 1_000_000, 1);
        // sd = 0.1, standard error = 1e-4
        assert!((m - 0.1).abs() < 3e-4, "mean {m}");
    }

    #[test]
    fn erlang_sample_variance() {
        let (_, v) = empirical(DistributionSpec::Erlang { shape: 2, mean: 1.0 }, 1_000_000, 2);
        assert!((v - 0.5).abs() < 0.005, "variance {v}");
    }

    #[test]
    fn moments_examples() {
        assert_eq!(DistributionSpec::exponential(2.0).moments(), (2.0, 8.0));
        assert_eq!(DistributionSpec::deterministic(1.0).moments(), (1.0, 1.0));
        let (m, m2) = DistributionSpec::Uniform { lo: 0.0, hi: 2.0 }.moments();
        assert_eq!(m, 1.0);
        assert!((m2 - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn every_kind_matches_moments_within_five_se() {
        let specs = [
            DistributionSpec::exponential(0.7),
            DistributionSpec::deterministic(0.3),
            DistributionSpec::Erlang { shape: 3, mean: 2.0 },
            DistributionSpec::Uniform { lo: 0.5, hi: 1.5 },
        ];
        let n = 1_000_000;
        for (k, spec) in specs.into_iter().enumerate() {
            let (m, _) = empirical(spec, n, 10 + k as u64);
            let se = (spec.variance() / n as f64).sqrt();
            assert!((m - spec.mean()).abs() <= 5.0 * se + 1e-9 * spec.mean(), "{spec:?}: {m}");
        }
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let spec = DistributionSpec::exponential(1.0);
        let draw = |seed, id| {
            let mut r = RngStream::new(seed, id);
            (0..32).map(|_| spec.sample(&mut r)).collect::<Vec<_>>()
        };
        assert_eq!(draw(7, 3), draw(7, 3));
        assert_ne!(draw(7, 3), draw(7, 4));
        assert_ne!(draw(7, 3), draw(8, 3));
    }

    #[test]
    fn json_shapes() {
        let s: DistributionSpec =
            serde_json::from_str(r#"{"dist":"erlang","mean":1.0,"shape":2}"#).unwrap();
        assert_eq!(s, DistributionSpec::Erlang { shape: 2, mean: 1.0 });
        let u: DistributionSpec =
            serde_json::from_str(r#"{"dist":"uniform","mean":1.0,"lo":0,"hi":2}"#).unwrap();
        assert_eq!(u, DistributionSpec::Uniform { lo: 0.0, hi: 2.0 });
        assert!(serde_json::from_str::<DistributionSpec>(r#"{"dist":"uniform","mean":3,"lo":0,"hi":2}"#).is_err());
        assert!(serde_json::from_str::<DistributionSpec>(r#"{"dist":"exponential","mean":0}"#).is_err());
        assert!(serde_json::from_str::<DistributionSpec>(r#"{"dist":"erlang","mean":1}"#).is_err());
        let back: DistributionSpec =
            serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
    }
}
