mod common;

use pqlab::eigen::{EigenOptions, Eigenpairs};
use pqlab::fibering::{fibering_consistency, reduced_functional, theta_membership};
use pqlab::functionals::{
    coupling, dirichlet_energy, energy, grad_energy, lr_mass, p_functional, q_functional,
    rayleigh,
};
use pqlab::{GridFunction, ParameterPair, ProblemConfig, ProblemSpec};
use proptest::prelude::*;
use std::sync::OnceLock;

fn instance() -> &'static (ProblemSpec, Eigenpairs) {
    static CELL: OnceLock<(ProblemSpec, Eigenpairs)> = OnceLock::new();
    CELL.get_or_init(|| {
        let mut cfg = ProblemConfig::reference(96);
        cfg.q = 3.0;
        cfg.beta = 4.0;
        let spec = cfg.build().unwrap();
        let eigs = Eigenpairs::compute(&spec, &EigenOptions::default()).unwrap();
        (spec, eigs)
    })
}

fn function_from(spec: &ProblemSpec, c: &[f64]) -> GridFunction {
    GridFunction::interpolate(spec.mesh(), |x| {
        c.iter()
            .enumerate()
            .map(|(k, ck)| ck * ((k + 1) as f64 * std::f64::consts::PI * x).sin())
            .sum()
    })
}

fn coeffs() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 4).prop_filter("nonzero", |c| c[0].abs() > 0.1)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn functionals_are_homogeneous(cu in coeffs(), cv in coeffs(), t in 0.1f64..5.0, s in 0.1f64..5.0) {
        let (spec, _) = instance();
        let (u, v) = (function_from(spec, &cu), function_from(spec, &cv));
        let (p, q) = (spec.p, spec.q);
        prop_assert!(rel(dirichlet_energy(&u.scaled(t), p), t.powf(p) * dirichlet_energy(&u, p)) < 1e-12);
        prop_assert!(rel(lr_mass(&v.scaled(s), q), s.powf(q) * lr_mass(&v, q)) < 1e-12);
        prop_assert!(rel(p_functional(&u.scaled(-t), 12.0, spec), t.powf(p) * p_functional(&u, 12.0, spec)) < 1e-12);
        let f = coupling(&u, &v, spec);
        let fs = coupling(&u.scaled(t), &v.scaled(s), spec);
        prop_assert!((fs - t.powf(spec.alpha) * s.powf(spec.beta) * f).abs()
            <= 1e-12 * t.powf(spec.alpha) * s.powf(spec.beta) * (f.abs() + 1e-12));
    }

    #[test]
    fn gradient_matches_central_differences(
        cu in coeffs(), cv in coeffs(), du in coeffs(), dv in coeffs(),
        lambda in 1.0f64..60.0, mu in 1.0f64..60.0,
    ) {
        let (spec, _) = instance();
        let sigma = ParameterPair { lambda, mu };
        let (u, v) = (function_from(spec, &cu), function_from(spec, &cv));
        let (a, b) = (function_from(spec, &du), function_from(spec, &dv));
        let (gu, gv) = grad_energy(&u, &v, sigma, spec);
        let analytic = gu.dot(&a) + gv.dot(&b);
        let h = 1e-6;
        let at = |e: f64| {
            let uu = GridFunction::interpolate(spec.mesh(), |x| u.eval(x) + e * a.eval(x));
            let vv = GridFunction::interpolate(spec.mesh(), |x| v.eval(x) + e * b.eval(x));
            energy(&uu, &vv, sigma, spec).phi
        };
        let fd = (at(h) - at(-h)) / (2.0 * h);
        let scale = analytic.abs().max(gu.sup_norm() + gv.sup_norm());
        prop_assert!((fd - analytic).abs() <= 1e-5 * scale, "fd {} analytic {}", fd, analytic);
    }

    #[test]
    fn reduced_functional_is_zero_homogeneous(seed in 0u64..10_000, t in 0.05f64..20.0, s in 0.05f64..20.0) {
        let (spec, eigs) = instance();
        let (u, v, sigma) = common::random_theta_member(spec, eigs, &mut common::rng(seed));
        let j = reduced_functional(&u, &v, sigma, spec).unwrap();
        let js = reduced_functional(&u.scaled(t), &v.scaled(s), sigma, spec).unwrap();
        prop_assert!(j < 0.0);
        prop_assert!(rel(j, js) < 1e-10);
    }

    #[test]
    fn fibering_evaluations_agree(seed in 0u64..10_000) {
        let (spec, eigs) = instance();
        let (u, v, sigma) = common::random_theta_member(spec, eigs, &mut common::rng(seed));
        prop_assert!(theta_membership(&u, &v, sigma, spec).unwrap().in_theta);
        let r = fibering_consistency(&u, &v, sigma, spec).unwrap();
        prop_assert!(r.max_relative_gap() < 1e-9, "{:?}", r);
        prop_assert!(r.stationarity_residual < 1e-6, "{:?}", r);
    }

    #[test]
    fn eigenvalues_minimize_the_rayleigh_quotients(cu in coeffs()) {
        let (spec, eigs) = instance();
        let u = function_from(spec, &cu);
        prop_assert!(rayleigh(&u, spec.p).unwrap() >= eigs.lambda1() * (1.0 - 1e-10));
        prop_assert!(rayleigh(&u, spec.q).unwrap() >= eigs.mu1() * (1.0 - 1e-10));
    }

    #[test]
    fn swapping_the_system_swaps_the_energy(cu in coeffs(), cv in coeffs(), lambda in 1.0f64..60.0, mu in 1.0f64..60.0) {
        let (spec, _) = instance();
        let (u, v) = (function_from(spec, &cu), function_from(spec, &cv));
        let sigma = ParameterPair { lambda, mu };
        let e = energy(&u, &v, sigma, spec).phi;
        let es = energy(&v, &u, sigma.swapped(), &spec.swapped()).phi;
        prop_assert!(rel(e, es) < 1e-12);
        prop_assert!(rel(q_functional(&v, mu, spec), p_functional(&v, mu, &spec.swapped())) < 1e-14);
    }
}
