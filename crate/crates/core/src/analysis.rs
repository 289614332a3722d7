//! First-moment analysis of the Palm chain observed at server arrivals to
//! `Q_1`.
//!
//! Quantities here are normalized (`Θ = N/μ`) and carry no `μ`: they depend
//! only on the loads, the mean switchover times and the policy. The
//! switching-function residual terms `E[𝓗_ik]/μ` are left out everywhere;
//! they vanish for exhaustive service and are `O(1/μ)` otherwise.

use serde::{Deserialize, Serialize};

use crate::error::AnalysisError;
use crate::policy::{PolicyParams, Queue};

/// `|d|` below this is treated as a singular system.
pub const SINGULAR_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemRates {
    pub mu: f64,
    pub rho: [f64; 2],
    /// Mean switchover times `(s_1, s_2)`.
    pub s: [f64; 2],
}

impl SystemRates {
    pub fn new(mu: f64, rho: [f64; 2], s: [f64; 2]) -> Self {
        Self { mu, rho, s }
    }

    pub fn lambda(&self) -> [f64; 2] {
        [self.rho[0] * self.mu, self.rho[1] * self.mu]
    }

    pub fn total_load(&self) -> f64 {
        self.rho[0] + self.rho[1]
    }
}

/// `η_1 = (1−ρ_1) − α_1^C ρ_2`, `η_2 = (1−ρ_2) − α_2^C ρ_1`.
pub fn etas(rates: &SystemRates, p: &PolicyParams) -> [f64; 2] {
    let [r1, r2] = rates.rho;
    [
        (1.0 - r1) - p.alpha_c[0] * r2,
        (1.0 - r2) - p.alpha_c[1] * r1,
    ]
}

fn checked_etas(rates: &SystemRates, p: &PolicyParams) -> Result<[f64; 2], AnalysisError> {
    let eta = etas(rates, p);
    for q in Queue::BOTH {
        let value = eta[q.idx()];
        if !(value > 0.0) {
            return Err(AnalysisError::NonPositiveEta { queue: q, value });
        }
    }
    Ok(eta)
}

/// `V(θ) = ρ_2 θ_1 + (1−ρ_1) θ_2`.
pub fn lyapunov(x: [f64; 2], rates: &SystemRates) -> f64 {
    rates.rho[1] * x[0] + (1.0 - rates.rho[0]) * x[1]
}

/// Conditional expected visit times `(E[M_1|x], E[M_2|x])` given the Palm
/// state `x = (θ_1, θ_2)` at the start of a cycle.
pub fn expected_visit_times(
    x: [f64; 2],
    rates: &SystemRates,
    p: &PolicyParams,
) -> Result<[f64; 2], AnalysisError> {
    let [e1, e2] = checked_etas(rates, p)?;
    let [r1, r2] = rates.rho;
    let [a1, a2] = p.alpha_c;
    let [b1, b2] = p.beta_c;
    let [t1, t2] = x;
    let m1 = (t1 + a1 * t2 + b1) / e1;
    let m2 = ((1.0 - a1 * a2) * ((1.0 - r1) * t2 + r2 * t1) + b1 * (r2 + a2 * (r1 - 1.0)))
        / (e1 * e2)
        + ((r2 + a2 * r1) * rates.s[0] + b2) / e2;
    Ok([m1, m2])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftBreakdown {
    pub e_m1: f64,
    pub e_m2: f64,
    /// `ΔV(x) = (ρ−1)·E[M_2|x] + ρ_2(s_1+s_2)`.
    pub delta_v: f64,
    /// Always true: the `𝓗/μ` residual terms are not included.
    pub residual_terms_omitted: bool,
}

/// One-cycle expected change of the Lyapunov function from Palm state `x`.
pub fn drift(
    x: [f64; 2],
    rates: &SystemRates,
    p: &PolicyParams,
) -> Result<DriftBreakdown, AnalysisError> {
    let [e_m1, e_m2] = expected_visit_times(x, rates, p)?;
    let rho = rates.total_load();
    Ok(DriftBreakdown {
        e_m1,
        e_m2,
        delta_v: (rho - 1.0) * e_m2 + rates.rho[1] * (rates.s[0] + rates.s[1]),
        residual_terms_omitted: true,
    })
}

/// Coefficients of the linear system for the Palm fixed point,
/// `a11 θ1 + a12 θ2 = a13`, `a21 θ1 + a22 θ2 = a23`, and the closed-form
/// determinant `d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
    pub a13: f64,
    pub a23: f64,
    pub d: f64,
}

impl Coefficients {
    /// `a11·a22 − a12·a21`, which should agree with `d`.
    pub fn matrix_determinant(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    /// Mean-recursion matrix `A = I + [[a11, a12], [a21, a22]]`.
    pub fn recursion_matrix(&self) -> [[f64; 2]; 2] {
        [[1.0 + self.a11, self.a12], [self.a21, 1.0 + self.a22]]
    }
}

pub fn coefficients(rates: &SystemRates, p: &PolicyParams) -> Result<Coefficients, AnalysisError> {
    let [e1, e2] = checked_etas(rates, p)?;
    let [r1, r2] = rates.rho;
    let [a1, a2] = p.alpha_c;
    let [b1, b2] = p.beta_c;
    let [s1, s2] = rates.s;
    let ee = e1 * e2;

    let a11 = ((r1 + r2 - 1.0) - (r1 - 1.0) * r1 * a2 - r1 * r2 * a1 * a2) / ee;
    let a12 = ((1.0 - r1) * r1 - (1.0 - r1) * (1.0 - r2) * a1) / ee;
    let a21 = (-r1 * r2 * a2 - (r2 - 1.0) * r2 * a1 * a2) / ee;
    let a22 = ((1.0 - r1) * (r2 - 1.0) + r2 * (1.0 - r2) * a1 - (r1 + r2 - 1.0) * a1 * a2) / ee;
    let a13 = (1.0 - r1 - r2) * b1 / ee - (r1 * b2 + r1 * s1) / e2 - r1 * s2;
    let a23 = a2 * (r1 + r2 - 1.0) * b1 / ee + ((1.0 - r2) * b2 + r1 * s1 * a2) / e2 - r2 * s2;
    let d = (1.0 - r1 - r2) * (1.0 - a1 * a2) / ee;

    Ok(Coefficients {
        a11,
        a12,
        a21,
        a22,
        a13,
        a23,
        d,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub theta: [f64; 2],
    /// Predicted mean cycle length `E[M_1|θ*] + E[M_2|θ*] + s_1 + s_2`.
    pub psi: f64,
    /// Relative imbalance of the zero-drift identity at `θ*`.
    pub identity_residual: f64,
}

/// Solve for the Palm fixed point `θ*` and the predicted cycle length `ψ*`.
pub fn theta_star(rates: &SystemRates, p: &PolicyParams) -> Result<FixedPoint, AnalysisError> {
    let c = coefficients(rates, p)?;
    if c.d.abs() < SINGULAR_TOL {
        let mut why = Vec::new();
        if (rates.total_load() - 1.0).abs() < 1e-12 {
            why.push("rho1 + rho2 = 1");
        }
        if (p.alpha_c[0] * p.alpha_c[1] - 1.0).abs() < 1e-12 {
            why.push("alphaC1 * alphaC2 = 1");
        }
        if why.is_empty() {
            why.push("determinant is zero");
        }
        return Err(AnalysisError::Singular(why.join(", ")));
    }
    let det = c.matrix_determinant();
    let theta = [
        (c.a13 * c.a22 - c.a12 * c.a23) / det,
        (c.a11 * c.a23 - c.a21 * c.a13) / det,
    ];
    let [m1, m2] = expected_visit_times(theta, rates, p)?;
    Ok(FixedPoint {
        theta,
        psi: m1 + m2 + rates.s[0] + rates.s[1],
        identity_residual: balance_identity_residual(theta, rates, p)?,
    })
}

/// Both sides of the identity that makes the drift vanish at `θ*`:
/// `(1−ρ)(1−α1α2)((1−ρ1)θ2 + ρ2θ1)/(η1η2)` on the left against the
/// switchover and `β` terms on the right.
pub fn balance_identity_sides(
    theta: [f64; 2],
    rates: &SystemRates,
    p: &PolicyParams,
) -> Result<(f64, f64), AnalysisError> {
    let [e1, e2] = checked_etas(rates, p)?;
    let [r1, r2] = rates.rho;
    let [a1, a2] = p.alpha_c;
    let [b1, b2] = p.beta_c;
    let [s1, s2] = rates.s;
    let [t1, t2] = theta;
    let rm1 = r1 + r2 - 1.0;
    let lhs = (1.0 - r1 - r2) * (1.0 - a1 * a2) * ((1.0 - r1) * t2 + r2 * t1) / (e1 * e2);
    let rhs = r2 * (s1 + s2)
        + rm1 * ((r2 + a2 * r1) * s1 + b2) / e2
        + rm1 * b1 * (r2 + a2 * (r1 - 1.0)) / (e1 * e2);
    Ok((lhs, rhs))
}

fn balance_identity_residual(
    theta: [f64; 2],
    rates: &SystemRates,
    p: &PolicyParams,
) -> Result<f64, AnalysisError> {
    let (lhs, rhs) = balance_identity_sides(theta, rates, p)?;
    let scale = lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
    Ok((lhs - rhs).abs() / scale)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InstabilityReason {
    /// `ρ_1 + ρ_2 ≥ 1`.
    #[serde(rename = "load")]
    Load,
    /// `α_1^C·α_2^C ≥ 1`.
    #[serde(rename = "alphaC-product")]
    AlphaProduct,
}

impl InstabilityReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            InstabilityReason::Load => "load",
            InstabilityReason::AlphaProduct => "alphaC-product",
        }
    }
}

/// Sufficient stability condition. `stable == false` means "not certified",
/// not "proven unstable".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub stable: bool,
    pub reasons: Vec<InstabilityReason>,
}

pub fn is_stable(rates: &SystemRates, p: &PolicyParams) -> StabilityVerdict {
    let mut reasons = Vec::new();
    if !(rates.total_load() < 1.0) {
        reasons.push(InstabilityReason::Load);
    }
    if !p.in_stable_class() {
        reasons.push(InstabilityReason::AlphaProduct);
    }
    StabilityVerdict {
        stable: reasons.is_empty(),
        reasons,
    }
}

/// Everything the `analyze` command reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub eta1: f64,
    pub eta2: f64,
    pub a11: Option<f64>,
    pub a12: Option<f64>,
    pub a21: Option<f64>,
    pub a22: Option<f64>,
    pub a13: Option<f64>,
    pub a23: Option<f64>,
    pub d: Option<f64>,
    pub theta1_star: Option<f64>,
    pub theta2_star: Option<f64>,
    pub theta_star: Option<[f64; 2]>,
    pub psi_star: Option<f64>,
    pub stable: bool,
    pub reasons: Vec<String>,
}

pub fn stability_report(rates: &SystemRates, p: &PolicyParams) -> StabilityReport {
    let [eta1, eta2] = etas(rates, p);
    let verdict = is_stable(rates, p);
    let mut reasons: Vec<String> = verdict.reasons.iter().map(|r| r.as_str().to_string()).collect();
    let coeffs = coefficients(rates, p);
    let fixed = theta_star(rates, p);
    if let Err(e) = &coeffs {
        reasons.push(e.to_string());
    } else if let Err(e) = &fixed {
        reasons.push(e.to_string());
    }
    let c = coeffs.ok();
    let f = fixed.ok();
    StabilityReport {
        eta1,
        eta2,
        a11: c.map(|c| c.a11),
        a12: c.map(|c| c.a12),
        a21: c.map(|c| c.a21),
        a22: c.map(|c| c.a22),
        a13: c.map(|c| c.a13),
        a23: c.map(|c| c.a23),
        d: c.map(|c| c.d),
        theta1_star: f.map(|f| f.theta[0]),
        theta2_star: f.map(|f| f.theta[1]),
        theta_star: f.map(|f| f.theta),
        psi_star: f.map(|f| f.psi),
        stable: verdict.stable,
        reasons,
    }
}

/// Iterate `m_{k+1} = A·m_k` from `m0` (deviation of the Palm mean from
/// `θ*`). Returns `steps + 1` points including `m0`.
pub fn palm_mean_recursion(
    m0: [f64; 2],
    rates: &SystemRates,
    p: &PolicyParams,
    steps: usize,
) -> Result<Vec<[f64; 2]>, AnalysisError> {
    let a = coefficients(rates, p)?.recursion_matrix();
    let mut out = Vec::with_capacity(steps + 1);
    let mut m = m0;
    out.push(m);
    for _ in 0..steps {
        m = [
            a[0][0] * m[0] + a[0][1] * m[1],
            a[1][0] * m[0] + a[1][1] * m[1],
        ];
        out.push(m);
    }
    Ok(out)
}

/// Spectral radius of a real 2×2 matrix.
pub fn spectral_radius(a: [[f64; 2]; 2]) -> f64 {
    let tr = a[0][0] + a[1][1];
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let disc = tr * tr - 4.0 * det;
    if disc >= 0.0 {
        let r = disc.sqrt();
        ((tr + r) / 2.0).abs().max(((tr - r) / 2.0).abs())
    } else {
        // complex pair: |λ|² = det
        det.sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sym() -> SystemRates {
        SystemRates::new(20.0, [0.3, 0.3], [1.0, 1.0])
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn eta_examples() {
        let mut p = PolicyParams::default();
        p.alpha_c[0] = -2.0;
        let r = SystemRates::new(1.0, [0.3, 0.4], [1.0, 1.0]);
        assert!(close(etas(&r, &p)[0], 1.5, 1e-15));
        let e = etas(&sym(), &PolicyParams::exhaustive());
        assert!(close(e[0], 0.7, 1e-15) && close(e[1], 0.7, 1e-15));
        let edge = SystemRates::new(1.0, [1.0, 0.0], [1.0, 1.0]);
        assert_eq!(etas(&edge, &PolicyParams::exhaustive())[0], 0.0);
        assert!(expected_visit_times([1.0, 1.0], &edge, &PolicyParams::exhaustive()).is_err());
    }

    #[test]
    fn lyapunov_examples() {
        let r = SystemRates::new(1.0, [0.2, 0.3], [1.0, 1.0]);
        assert!(close(lyapunov([1.0, 2.0], &r), 1.9, 1e-15));
        assert_eq!(lyapunov([0.0, 0.0], &r), 0.0);
        let (x, y) = ([0.4, 1.3], [2.2, 0.7]);
        let v = lyapunov([x[0] + y[0], x[1] + y[1]], &r);
        assert!(close(v, lyapunov(x, &r) + lyapunov(y, &r), 1e-14));
    }

    #[test]
    fn visit_times_exhaustive() {
        let p = PolicyParams::exhaustive();
        let [m1, m2] = expected_visit_times([1.05, 0.30], &sym(), &p).unwrap();
        assert!(close(m1, 1.5, 1e-12));
        assert!(close(m2, 1.5, 1e-12));
        let [z, _] = expected_visit_times([0.0, 0.0], &sym(), &p).unwrap();
        assert_eq!(z, 0.0);
    }

    #[test]
    fn visit_time_affine_in_beta1() {
        let base = PolicyParams::default();
        let mut shifted = base;
        shifted.beta_c[0] = -0.1;
        let r = sym();
        let eta1 = etas(&r, &base)[0];
        let x = [0.1 * eta1 + 0.1, 0.0];
        let a = expected_visit_times(x, &r, &base).unwrap()[0];
        let b = expected_visit_times(x, &r, &shifted).unwrap()[0];
        assert!(close(b - a, -0.1 / eta1, 1e-14));
    }

    #[test]
    fn drift_examples() {
        let p = PolicyParams::exhaustive();
        let at_fixed = drift([1.05, 0.30], &sym(), &p).unwrap();
        assert!(at_fixed.delta_v.abs() < 1e-12);
        let off = drift([2.10, 0.30], &sym(), &p).unwrap();
        assert!(close(off.e_m2, 2.142857142857143, 1e-12));
        assert!(close(off.delta_v, -0.2571428571428571, 1e-12));
        let no_q2 = SystemRates::new(1.0, [0.5, 0.0], [0.5, 0.5]);
        for x in [[0.0, 0.0], [3.0, 1.0], [0.1, 7.0]] {
            assert!(drift(x, &no_q2, &p).unwrap().delta_v <= 0.0);
        }
    }

    #[test]
    fn coefficient_examples() {
        let c = coefficients(&sym(), &PolicyParams::exhaustive()).unwrap();
        assert!(close(c.a11, -0.8163265306122449, 1e-12));
        assert!(close(c.a12, 0.42857142857142855, 1e-12));
        assert!(close(c.a21, 0.0, 1e-15));
        assert!(close(c.a22, -1.0, 1e-12));
        assert!(close(c.a13, -0.7285714285714286, 1e-12));
        assert!(close(c.a23, -0.3, 1e-12));
        assert!(close(c.d, 0.8163265306122449, 1e-12));
        assert!(close(c.matrix_determinant(), c.d, 1e-12));

        let edge = SystemRates::new(1.0, [0.5, 0.5], [1.0, 1.0]);
        let c = coefficients(&edge, &PolicyParams::exhaustive()).unwrap();
        assert_eq!(c.d, 0.0);
        assert!(theta_star(&edge, &PolicyParams::exhaustive()).is_err());
    }

    #[test]
    fn theta_star_exhaustive() {
        let f = theta_star(&sym(), &PolicyParams::exhaustive()).unwrap();
        assert!(close(f.theta[0], 1.05, 1e-12));
        assert!(close(f.theta[1], 0.30, 1e-12));
        assert!(close(f.psi, 5.0, 1e-12));
        assert!(f.identity_residual < 1e-12);

        let no_q2 = SystemRates::new(1.0, [0.5, 0.0], [0.5, 0.5]);
        let f = theta_star(&no_q2, &PolicyParams::exhaustive()).unwrap();
        assert_eq!(f.theta[1], 0.0);
    }

    #[test]
    fn alpha_product_singular() {
        let p = PolicyParams::priority_factor(1.0, 1.0).unwrap();
        let err = theta_star(&sym(), &p).unwrap_err();
        assert!(err.to_string().contains("alphaC1 * alphaC2 = 1"));
    }

    #[test]
    fn stability_examples() {
        let mut p = PolicyParams::default();
        p.alpha_c = [-0.5, -1.5];
        let r = SystemRates::new(1.0, [0.3, 0.3], [1.0, 1.0]);
        assert!(is_stable(&r, &p).stable);
        p.alpha_c = [-2.0, -0.6];
        let v = is_stable(&r, &p);
        assert!(!v.stable);
        assert_eq!(v.reasons, vec![InstabilityReason::AlphaProduct]);
        let heavy = SystemRates::new(1.0, [0.5, 0.55], [1.0, 1.0]);
        let v = is_stable(&heavy, &PolicyParams::exhaustive());
        assert_eq!(v.reasons, vec![InstabilityReason::Load]);
    }

    #[test]
    fn recursion_examples() {
        let p = PolicyParams::exhaustive();
        let traj = palm_mean_recursion([0.0, 0.0], &sym(), &p, 5).unwrap();
        assert!(traj.iter().all(|m| *m == [0.0, 0.0]));
        let traj = palm_mean_recursion([1.0, 0.0], &sym(), &p, 1).unwrap();
        assert!(close(traj[1][0], 0.1836734693877551, 1e-12));
        assert!(close(traj[1][1], 0.0, 1e-15));
        let long = palm_mean_recursion([1.0, -2.0], &sym(), &p, 200).unwrap();
        let last = long[200];
        assert!(last[0].abs() < 1e-9 && last[1].abs() < 1e-9);
    }

    #[test]
    fn report_reasons() {
        let heavy = SystemRates::new(1.0, [0.6, 0.5], [1.0, 1.0]);
        let rep = stability_report(&heavy, &PolicyParams::exhaustive());
        assert!(!rep.stable);
        assert_eq!(rep.reasons[0], "load");
        let p = PolicyParams::priority_factor(0.5, 0.5).unwrap();
        let rep = stability_report(&sym(), &p);
        assert_eq!(rep.reasons[0], "alphaC-product");
        let json = serde_json::to_value(&rep).unwrap();
        for key in ["eta1", "eta2", "a11", "a23", "d", "theta1_star", "psi_star", "stable", "reasons"] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn spectral_radius_cases() {
        assert!(close(spectral_radius([[0.5, 0.0], [0.0, -0.8]]), 0.8, 1e-15));
        // rotation by 90° scaled by 0.9
        assert!(close(spectral_radius([[0.0, -0.9], [0.9, 0.0]]), 0.9, 1e-15));
    }
}
