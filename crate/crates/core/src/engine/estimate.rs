//! Steady-state estimators over simulation output: the regenerative ratio
//! estimator and batch means. Confidence intervals are two-sided 95%.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{regeneration_cycles, SimOutput};
use crate::error::EstimateError;

pub const MIN_REGENERATIONS: usize = 30;
pub const MIN_BATCHES: usize = 10;

/// Point estimate with a 95% confidence half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub half_width: f64,
    /// Number of independent (or nearly so) units behind the interval.
    pub samples: usize,
}

impl Estimate {
    pub fn lo(&self) -> f64 {
        self.mean - self.half_width
    }

    pub fn hi(&self) -> f64 {
        self.mean + self.half_width
    }

    pub fn contains(&self, x: f64) -> bool {
        (x - self.mean).abs() <= self.half_width
    }

    /// Mean and t-interval of i.i.d. observations.
    pub fn from_samples(xs: &[f64]) -> Estimate {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        if n < 2 {
            return Estimate {
                mean,
                half_width: f64::INFINITY,
                samples: n,
            };
        }
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Estimate {
            mean,
            half_width: t_quantile(n - 1) * (var / n as f64).sqrt(),
            samples: n,
        }
    }
}

/// 97.5% quantile of Student's t with `df` degrees of freedom.
pub(crate) fn t_quantile(df: usize) -> f64 {
    StudentsT::new(0.0, 1.0, df as f64)
        .expect("df >= 1")
        .inverse_cdf(0.975)
}

/// An `(∫ N dt, duration)` pair over some stretch of time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Increment {
    pub area: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PalmObservation {
    pub k: u64,
    pub theta: [f64; 2],
    pub psi: f64,
}

fn check_burn_in(out: &SimOutput, burn_in: usize) -> Result<(), EstimateError> {
    if burn_in >= out.palm.len() {
        return Err(EstimateError::TooFewCycles {
            needed: burn_in,
            have: out.palm.len(),
        });
    }
    Ok(())
}

/// Palm observations `(Θ_1k, Θ_2k, Ψ_k)` after dropping `burn_in` cycles.
pub fn palm_series(out: &SimOutput, burn_in: usize) -> Result<Vec<PalmObservation>, EstimateError> {
    check_burn_in(out, burn_in)?;
    Ok(out.palm[burn_in..]
        .iter()
        .map(|r| PalmObservation {
            k: r.k,
            theta: r.theta,
            psi: r.psi,
        })
        .collect())
}

/// Per-cycle `(∫ N_i dt, Ψ_k)` for queue index `i` after `burn_in` cycles.
pub fn cycle_increments(out: &SimOutput, burn_in: usize, i: usize) -> Result<Vec<Increment>, EstimateError> {
    check_burn_in(out, burn_in)?;
    Ok(out.palm[burn_in..]
        .iter()
        .map(|r| Increment {
            area: r.area[i],
            duration: r.psi,
        })
        .collect())
}

/// Most frequent queue-length pair at cycle starts (ties go to the
/// earliest seen). Any Palm state is a regeneration point, since every
/// cycle starts with fresh service and switchover draws and Poisson
/// arrivals.
pub fn modal_palm_state(out: &SimOutput) -> Option<[u64; 2]> {
    let mut counts: std::collections::HashMap<[u64; 2], (usize, usize)> = std::collections::HashMap::new();
    for (pos, r) in out.palm.iter().enumerate() {
        counts.entry(r.n).or_insert((0, pos)).0 += 1;
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)))
        .map(|(n, _)| n)
}

/// Ratio estimate of the time-stationary mean `E[N_i]` from regeneration
/// cycles delimited by cycle starts whose queue lengths equal `reference`.
pub fn regenerative_estimate(out: &SimOutput, reference: [u64; 2]) -> Result<[Estimate; 2], EstimateError> {
    let cycles = regeneration_cycles(&out.palm, reference);
    // hits = complete cycles + 1
    let hits = if cycles.is_empty() {
        out.palm.iter().filter(|r| r.n == reference).count()
    } else {
        cycles.len() + 1
    };
    if hits < MIN_REGENERATIONS {
        return Err(EstimateError::TooFewRegenerations {
            needed: MIN_REGENERATIONS,
            have: hits,
        });
    }
    let n = cycles.len();
    let total_t: f64 = cycles.iter().map(|c| c.duration).sum();
    let mean_t = total_t / n as f64;
    let t = t_quantile(n - 1);
    let est = [0, 1].map(|i| {
        let total_y: f64 = cycles.iter().map(|c| c.area[i]).sum();
        let r = if total_t > 0.0 { total_y / total_t } else { 0.0 };
        let ss: f64 = cycles
            .iter()
            .map(|c| (c.area[i] - r * c.duration).powi(2))
            .sum();
        let s = (ss / (n - 1) as f64).sqrt();
        Estimate {
            mean: r,
            half_width: if mean_t > 0.0 { t * s / (mean_t * (n as f64).sqrt()) } else { 0.0 },
            samples: n,
        }
    });
    Ok(est)
}

/// Ratio `Σ area / Σ duration` of each of `n_batches` consecutive batches.
/// When the series does not divide evenly, the earliest entries are dropped.
pub fn batch_ratios(series: &[Increment], n_batches: usize) -> Result<Vec<f64>, EstimateError> {
    if n_batches < MIN_BATCHES {
        return Err(EstimateError::TooFewBatches {
            min: MIN_BATCHES,
            got: n_batches,
        });
    }
    if series.len() < n_batches {
        return Err(EstimateError::SeriesTooShort {
            len: series.len(),
            batches: n_batches,
        });
    }
    let size = series.len() / n_batches;
    let skip = series.len() - size * n_batches;
    Ok(series[skip..]
        .chunks_exact(size)
        .map(|batch| {
            let (a, d) = batch
                .iter()
                .fold((0.0, 0.0), |(a, d), x| (a + x.area, d + x.duration));
            if d > 0.0 {
                a / d
            } else {
                0.0
            }
        })
        .collect())
}

/// Batch-means estimate of the long-run ratio `∫ N dt / t`.
pub fn batch_means_estimate(series: &[Increment], n_batches: usize) -> Result<Estimate, EstimateError> {
    let ratios = batch_ratios(series, n_batches)?;
    Ok(Estimate::from_samples(&ratios))
}

/// Batch-means time averages `E[N_1]`, `E[N_2]` from per-cycle areas.
pub fn time_average_estimate(
    out: &SimOutput,
    burn_in: usize,
    n_batches: usize,
) -> Result<[Estimate; 2], EstimateError> {
    let a = batch_means_estimate(&cycle_increments(out, burn_in, 0)?, n_batches)?;
    let b = batch_means_estimate(&cycle_increments(out, burn_in, 1)?, n_batches)?;
    Ok([a, b])
}

/// Batch-means estimate of the Palm means `E[Θ_1]`, `E[Θ_2]`.
pub fn palm_mean_estimate(
    out: &SimOutput,
    burn_in: usize,
    n_batches: usize,
) -> Result<[Estimate; 2], EstimateError> {
    let series = palm_series(out, burn_in)?;
    let per = |i: usize| -> Vec<Increment> {
        series
            .iter()
            .map(|o| Increment {
                area: o.theta[i],
                duration: 1.0,
            })
            .collect()
    };
    Ok([
        batch_means_estimate(&per(0), n_batches)?,
        batch_means_estimate(&per(1), n_batches)?,
    ])
}
