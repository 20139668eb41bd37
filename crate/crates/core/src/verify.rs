//! Self-check battery run by the `verify` command.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{GridFunction, ProblemSpec};
use crate::eigen::Eigenpairs;
use crate::error::Result;
use crate::extremal::{
    classify_parameter, sigma_star, trace_curve, ExtremalOptions, Region,
};
use crate::fibering::{fibering_consistency, theta_membership, NehariClass};
use crate::functionals::{energy, grad_energy, rayleigh, ParameterPair};
use crate::solver::{
    energy_scale, minimize_j_global, minimize_j_local, separation_margins,
    unboundedness_witness, zero_energy_solution, SolverOptions,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    /// Samples per curve branch.
    pub samples: usize,
    pub extremal: ExtremalOptions,
    pub solver: SolverOptions,
    /// Seed of the random pairs used by the algebraic checks.
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            samples: 10,
            extremal: ExtremalOptions::default(),
            solver: SolverOptions::default(),
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub lambda1: f64,
    pub mu1: f64,
    pub sigma_star: f64,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

fn check(checks: &mut Vec<Check>, name: &str, pass: bool, detail: String) {
    log::info!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    checks.push(Check {
        name: name.to_string(),
        pass,
        detail,
    });
}

fn random_function(spec: &ProblemSpec, rng: &mut ChaCha8Rng) -> GridFunction {
    let c: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
    GridFunction::interpolate(spec.mesh(), |x| {
        let s: f64 = c
            .iter()
            .enumerate()
            .map(|(k, ck)| ck * ((k + 1) as f64 * std::f64::consts::PI * x).sin())
            .sum();
        x * (1.0 - x) * (0.5 + s.abs())
    })
}

/// Largest relative error of the energy gradient against central
/// differences along random directions.
fn gradient_check(spec: &ProblemSpec, rng: &mut ChaCha8Rng, pairs: usize) -> f64 {
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let u = random_function(spec, rng);
        let v = random_function(spec, rng);
        let du = random_function(spec, rng);
        let dv = random_function(spec, rng);
        let sigma = ParameterPair {
            lambda: rng.gen_range(5.0..30.0),
            mu: rng.gen_range(5.0..30.0),
        };
        let (gu, gv) = grad_energy(&u, &v, sigma, spec);
        let analytic = gu.dot(&du) + gv.dot(&dv);
        let h = 1e-6;
        let shift = |c: f64| {
            let a = GridFunction::new(
                u.mesh(),
                u.values().iter().zip(du.values()).map(|(x, d)| x + c * d).collect(),
            )
            .expect("finite");
            let b = GridFunction::new(
                v.mesh(),
                v.values().iter().zip(dv.values()).map(|(x, d)| x + c * d).collect(),
            )
            .expect("finite");
            energy(&a, &b, sigma, spec).phi
        };
        let fd = (shift(h) - shift(-h)) / (2.0 * h);
        worst = worst.max((fd - analytic).abs() / analytic.abs().max(1e-12));
    }
    worst
}

/// Worst pairwise gap among the four evaluations of `J` and the worst
/// fiber stationarity residual over random members of `Theta`.
fn fibering_check(
    spec: &ProblemSpec,
    eigs: &Eigenpairs,
    rng: &mut ChaCha8Rng,
    count: usize,
) -> (usize, f64, f64) {
    let phi = &eigs.first.function;
    let psi = &eigs.second.function;
    let neg: Vec<(f64, f64)> = spec
        .weight()
        .breakpoints()
        .windows(2)
        .zip(spec.weight().values())
        .filter(|(_, v)| **v < 0.0)
        .map(|(w, _)| (w[0], w[1]))
        .collect();
    let mut found = 0;
    let mut gap = 0.0f64;
    let mut stat = 0.0f64;
    for _ in 0..count * 20 {
        if found == count {
            break;
        }
        let (a, b) = neg[rng.gen_range(0..neg.len())];
        let c1 = rng.gen_range(0.0..3.0);
        let c2 = rng.gen_range(0.0..3.0);
        let bump = |x: f64| if x > a && x < b { (std::f64::consts::PI * (x - a) / (b - a)).sin() } else { 0.0 };
        let r1 = random_function(spec, rng);
        let r2 = random_function(spec, rng);
        let u = GridFunction::interpolate(spec.mesh(), |x| phi.eval(x) + c1 * bump(x) + 0.2 * r1.eval(x));
        let v = GridFunction::interpolate(spec.mesh(), |x| psi.eval(x) + c2 * bump(x) + 0.2 * r2.eval(x));
        let (Ok(rp), Ok(rq)) = (rayleigh(&u, spec.p), rayleigh(&v, spec.q)) else { continue };
        let sigma = ParameterPair {
            lambda: rp * rng.gen_range(1.1..2.0),
            mu: rq * rng.gen_range(1.1..2.0),
        };
        if !theta_membership(&u, &v, sigma, spec).is_ok_and(|m| m.in_theta) {
            continue;
        }
        if let Ok(r) = fibering_consistency(&u, &v, sigma, spec) {
            found += 1;
            gap = gap.max(r.max_relative_gap());
            stat = stat.max(r.stationarity_residual);
        }
    }
    (found, gap, stat)
}

/// Run the battery on one instance.
pub fn run_verify(spec: &ProblemSpec, eigs: &Eigenpairs, opts: &VerifyOptions) -> Result<VerifyReport> {
    let mut checks = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (l1, m1) = (eigs.lambda1(), eigs.mu1());

    let positive = eigs.first.function.min_interior() > 0.0 && eigs.second.function.min_interior() > 0.0;
    let consistent = (rayleigh(&eigs.first.function, spec.p)? - l1).abs() <= 1e-10 * l1
        && (rayleigh(&eigs.second.function, spec.q)? - m1).abs() <= 1e-10 * m1;
    check(
        &mut checks,
        "eigenpairs",
        positive && consistent,
        format!("lambda_1 = {l1}, mu_1 = {m1}"),
    );

    let g = gradient_check(spec, &mut rng, 20);
    check(&mut checks, "gradient", g <= 1e-5, format!("max relative error {g:e}"));

    let (found, gap, stat) = fibering_check(spec, eigs, &mut rng, 20);
    check(
        &mut checks,
        "fibering",
        found == 20 && gap <= 1e-9 && stat <= 1e-6,
        format!("{found} pairs, J gap {gap:e}, stationarity {stat:e}"),
    );

    let star = sigma_star(spec, eigs, &opts.extremal)?;
    if star.trivial {
        check(
            &mut checks,
            "sigma_star",
            (star.sigma_star - 1.0).abs() <= 1e-6,
            format!("F(phi_1, psi_1) >= 0, sigma* = {}", star.sigma_star),
        );
        return Ok(VerifyReport {
            lambda1: l1,
            mu1: m1,
            sigma_star: star.sigma_star,
            checks,
        });
    }
    check(
        &mut checks,
        "sigma_star",
        star.sigma_star >= 1.0 + 1e-3
            && star.f_residual <= 1e-6
            && star.quotient_gap <= 1e-4 * star.sigma_star,
        format!(
            "sigma* = {}, |F| {:e}, gap {:e}",
            star.sigma_star, star.f_residual, star.quotient_gap
        ),
    );

    let curve = trace_curve(spec, eigs, &star, opts.samples, &opts.extremal)?;
    let end_mu = curve.mu_branch.last().map_or(f64::NAN, |s| s.mu);
    let end_l = curve.lambda_branch.last().map_or(f64::NAN, |s| s.lambda);
    let above = curve.mu_branch[..curve.mu_branch.len() - 1]
        .iter()
        .all(|s| s.mu > star.mu_star);
    check(
        &mut checks,
        "curve",
        curve.monotonicity_violation(1e-6).is_none()
            && above
            && (end_mu - star.mu_star).abs() <= 1e-3 * star.mu_star
            && (end_l - star.lambda_star).abs() <= 1e-3 * star.lambda_star,
        format!("mu_ext(lambda*) = {end_mu}, lambda_ext(mu*) = {end_l}"),
    );

    let mut below_ok = true;
    let mut details = Vec::new();
    let mut chain = Vec::new();
    let mut warm = Vec::new();
    for s in [0.2, 0.5, 0.8] {
        let sigma = ParameterPair {
            lambda: l1 + s * (star.lambda_star - l1),
            mu: m1 + s * (star.mu_star - m1),
        };
        let r = minimize_j_global(sigma, spec, eigs, &warm, &opts.solver)?;
        below_ok &= classify_parameter(sigma, &curve, 1e-3) == Region::GammaMinus
            && r.el_residual <= 1e-6
            && r.energy < 0.0
            && r.nehari == NehariClass::NPlus
            && r.positivity_margin > 0.0;
        details.push(format!("{:e}", r.energy));
        warm = vec![r.normalized(spec)];
        chain.push(r.jhat.unwrap_or(f64::NAN));
    }
    check(&mut checks, "below_curve", below_ok, format!("energies {}", details.join(", ")));
    let monotone = chain.windows(2).all(|w| w[1] <= w[0] + 1e-8);
    check(
        &mut checks,
        "jhat_monotone",
        monotone,
        format!("jhat {}", chain.iter().map(|j| format!("{j:e}")).collect::<Vec<_>>().join(", ")),
    );

    let sample = &curve.mu_branch[curve.mu_branch.len() / 2];
    let z = zero_energy_solution(sample, spec, &opts.solver)?;
    let scale = energy_scale(&z.u, &z.v, spec);
    check(
        &mut checks,
        "zero_energy",
        z.energy.abs() <= 1e-6 * scale && z.nehari == NehariClass::NZero && z.el_residual <= 1e-5,
        format!("energy {:e}, residual {:e}", z.energy, z.el_residual),
    );

    let on = minimize_j_global(sample.point(), spec, eigs, &[], &opts.solver)?;
    let anchor = separation_margins(&on, spec);
    check(
        &mut checks,
        "on_curve",
        on.energy < 0.0 && on.jhat.is_some_and(f64::is_finite) && anchor.is_ok(),
        format!(
            "energy {:e}, anchor {:?}{}",
            on.energy,
            anchor.as_ref().ok(),
            if spec.on_curve_theory_applies() { "" } else { " (outside alpha > p, beta > q)" }
        ),
    );

    if let Ok(anchor) = anchor {
        let omega = anchor.toward(sample.point(), 0.5);
        let mut local = None;
        for f in [1e-3, 1e-2, 1e-1] {
            let d = f * (star.lambda_star - l1);
            let sigma = sample.point().shifted(d, d);
            if let Ok(r) = minimize_j_local(sigma, omega, spec, eigs, &on.normalized(spec), &opts.solver) {
                local = Some((d, r));
                break;
            }
        }
        let pass = local
            .as_ref()
            .is_some_and(|(_, r)| r.interior == Some(true) && r.energy < 0.0);
        check(
            &mut checks,
            "above_curve",
            pass,
            local.map_or("no interior minimizer".into(), |(d, r)| {
                format!("delta {d:e}, energy {:e}", r.energy)
            }),
        );
    }

    let w = unboundedness_witness(star.endpoint().shifted(0.5, 0.5), -1e4, &star.minimizer, spec, 200);
    let pass = w
        .as_ref()
        .is_ok_and(|w| w.j_values.windows(2).all(|p| p[1] < p[0]));
    check(
        &mut checks,
        "unbounded",
        pass,
        w.map_or_else(|e| e.to_string(), |w| format!("{} steps, terminal F {:e}", w.j_values.len(), w.terminal_f)),
    );

    Ok(VerifyReport {
        lambda1: l1,
        mu1: m1,
        sigma_star: star.sigma_star,
        checks,
    })
}
