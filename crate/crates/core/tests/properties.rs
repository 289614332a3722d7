use proptest::prelude::*;

use pollsim::analysis::{coefficients, etas, spectral_radius, theta_star, SystemRates};
use pollsim::engine::{run_with, RunOptions, ServerPhase, TraceKind};
use pollsim::{DistributionSpec, Horizon, PolicyParams, SystemConfig};

fn stable_policy() -> impl Strategy<Value = PolicyParams> {
    (
        prop::array::uniform2(-3.0f64..=0.0),
        prop::array::uniform2(-1.0f64..=0.0),
        prop::array::uniform2(-3.0f64..=0.0),
        prop::array::uniform2(-1.0f64..=0.0),
    )
        .prop_filter("alphaC product", |(_, _, ac, _)| ac[0] * ac[1] < 1.0)
        .prop_map(|(alpha_b, beta_b, alpha_c, beta_c)| PolicyParams {
            alpha_b,
            beta_b,
            alpha_c,
            beta_c,
        })
}

fn loads() -> impl Strategy<Value = [f64; 2]> {
    (0.01f64..0.98, 0.0f64..1.0).prop_map(|(r, share)| [r * share, r * (1.0 - share)])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn recursion_matrix_is_contracting(p in stable_policy(), rho in loads(), s in prop::array::uniform2(0.05f64..3.0)) {
        let rates = SystemRates::new(10.0, rho, s);
        let a = coefficients(&rates, &p).unwrap().recursion_matrix();
        prop_assert!(spectral_radius(a) < 1.0);
    }

    #[test]
    fn analysis_does_not_depend_on_mu(p in stable_policy(), rho in loads(), s in prop::array::uniform2(0.05f64..3.0), mu in 1.0f64..200.0) {
        let a = SystemRates::new(mu, rho, s);
        let b = SystemRates::new(3.0 * mu, rho, s);
        prop_assert_eq!(etas(&a, &p), etas(&b, &p));
        prop_assert_eq!(coefficients(&a, &p).unwrap(), coefficients(&b, &p).unwrap());
        prop_assert_eq!(theta_star(&a, &p).unwrap(), theta_star(&b, &p).unwrap());
    }

    #[test]
    fn exhaustive_fixed_point_closed_form(rho in loads(), s in prop::array::uniform2(0.05f64..3.0)) {
        let rates = SystemRates::new(10.0, rho, s);
        let f = theta_star(&rates, &PolicyParams::exhaustive()).unwrap();
        let r = rho[0] + rho[1];
        let t1 = rho[0] * (1.0 - rho[0]) * (s[0] + s[1]) / (1.0 - r);
        let t2 = rho[1] * s[1];
        prop_assert!((f.theta[0] - t1).abs() <= 1e-9 * t1.max(1.0));
        prop_assert!((f.theta[1] - t2).abs() <= 1e-9 * t2.max(1.0));
        prop_assert!((f.psi - (s[0] + s[1]) / (1.0 - r)).abs() <= 1e-9 * f.psi);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_runs_conserve_and_cycle(p in stable_policy(), rho in loads(), seed in 0u64..1000, cap in prop::option::of(3u64..30)) {
        let sys = SystemConfig::new(6.0, rho, [DistributionSpec::exponential(0.4), DistributionSpec::deterministic(0.3)])
            .with_policy(p)
            .with_buffer_cap(cap)
            .with_horizon(Horizon::Time(300.0))
            .with_seed(seed)
            .resolve()
            .unwrap();
        let out = run_with(&sys, RunOptions { replicate: 0, trace: true }).unwrap();
        let mut n = [0i64; 2];
        let mut last: Option<ServerPhase> = None;
        for e in out.trace.as_ref().unwrap() {
            match e.kind {
                TraceKind::Arrival(q) => n[q.idx()] += 1,
                TraceKind::Departure(q) => n[q.idx()] -= 1,
                TraceKind::Drop(_) => {}
                TraceKind::Phase => {
                    if let Some(prev) = last {
                        prop_assert_eq!(e.phase, prev.successor());
                    }
                    last = Some(e.phase);
                }
            }
            prop_assert_eq!(e.n.map(|x| x as i64), n);
        }
        for r in &out.palm {
            for i in 0..2 {
                prop_assert!((r.m[i] - r.b[i] - r.c[i]).abs() < 1e-9);
                prop_assert!(r.b[i] >= 0.0 && r.c[i] >= 0.0);
            }
            let total = r.m[0] + r.m[1] + r.s[0] + r.s[1];
            prop_assert!((total - r.psi).abs() < 1e-9 * r.psi.max(1.0));
        }
    }
}
