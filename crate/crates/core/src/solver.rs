//! Positive solutions by minimization of the reduced functional.
//!
//! Below and on the extremal curve `J_sigma` is minimized over all of
//! `Theta_sigma`; just above it the minimization is restricted by an anchor
//! `(nu, nu_bar)` to `R_p(u) <= nu`, `R_q(v) <= nu_bar`. Every minimizer is
//! finished by Newton on the Euler-Lagrange system of the rescaled pair.

use std::cell::Cell;

use serde::{Deserialize, Serialize};

use crate::domain::{GridFunction, ProblemSpec};
use crate::eigen::Eigenpairs;
use crate::error::{Error, Result};
use crate::extremal::{starting_pairs, CurveSample};
use crate::fibering::{
    fibering_scales, nehari_classify, reduced_constant, reduced_from_values,
    reduced_value_grad, theta_membership, FiberingScales, NehariClass,
};
use crate::functionals::{
    coupling, dirichlet_energy, energy, grad_coupling, grad_energy_vecs, p_functional,
    q_functional, rayleigh, ParameterPair,
};
use crate::newton::{critical_point, multiplier_scales, scaled_gradient_norm, NewtonOptions};
use crate::optimize::{descend, normalize_gradient_norm, BlockObjective, DescentOptions};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub seeds: usize,
    pub rng_seed: u64,
    /// Acceptance bound on the Euler-Lagrange residual.
    pub el_tol: f64,
    /// Relative band for the Nehari sign classification.
    pub nehari_tol: f64,
    pub max_iters: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            seeds: 8,
            rng_seed: 7_211_903,
            el_tol: 1e-6,
            nehari_tol: 1e-6,
            max_iters: 4000,
        }
    }
}

/// A candidate solution `(u, v) = (t u0, s v0)` with diagnostics.
#[derive(Clone, Debug)]
pub struct SolveReport {
    pub sigma: ParameterPair,
    pub u: GridFunction,
    pub v: GridFunction,
    /// Scales taking the normalized pair to `(u, v)`.
    pub scales: FiberingScales,
    /// Minimum of the reduced functional; absent for zero-energy solutions.
    pub jhat: Option<f64>,
    pub energy: f64,
    pub el_residual: f64,
    pub positivity_margin: f64,
    pub nehari: NehariClass,
    pub seeds_used: usize,
    /// Anchored runs: whether the minimizer lies strictly inside the anchor set.
    pub interior: Option<bool>,
    /// Anchored runs: largest `F` seen on normalized iterates.
    pub f_bound: Option<f64>,
    /// Anchored runs: the lower bound on `J` implied by `f_bound`.
    pub j_lower_bound: Option<f64>,
    /// Anchored runs: smallest `J` seen on iterates.
    pub j_min_iterate: Option<f64>,
}

/// Scalar part of a [`SolveReport`], for serialization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub lambda: f64,
    pub mu: f64,
    pub t: f64,
    pub s: f64,
    pub jhat: Option<f64>,
    pub energy: f64,
    pub el_residual: f64,
    pub positivity_margin: f64,
    pub nehari: NehariClass,
    pub seeds_used: usize,
    pub interior: Option<bool>,
    pub f_bound: Option<f64>,
    pub j_lower_bound: Option<f64>,
}

impl SolveReport {
    pub fn summary(&self) -> SolveSummary {
        SolveSummary {
            lambda: self.sigma.lambda,
            mu: self.sigma.mu,
            t: self.scales.t,
            s: self.scales.s,
            jhat: self.jhat,
            energy: self.energy,
            el_residual: self.el_residual,
            positivity_margin: self.positivity_margin,
            nehari: self.nehari,
            seeds_used: self.seeds_used,
            interior: self.interior,
            f_bound: self.f_bound,
            j_lower_bound: self.j_lower_bound,
        }
    }

    /// The pair scaled to `||u'||_p = ||v'||_q = 1`.
    pub fn normalized(&self, spec: &ProblemSpec) -> (GridFunction, GridFunction) {
        (
            normalize_gradient_norm(&self.u, spec.p),
            normalize_gradient_norm(&self.v, spec.q),
        )
    }
}

/// `omega = (nu, nu_bar)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub nu: f64,
    pub nu_bar: f64,
}

impl Anchor {
    pub fn pair(&self) -> ParameterPair {
        ParameterPair {
            lambda: self.nu,
            mu: self.nu_bar,
        }
    }

    /// The point a fraction `s` of the way from the anchor to `sigma`.
    pub fn toward(&self, sigma: ParameterPair, s: f64) -> Anchor {
        Anchor {
            nu: self.nu + s * (sigma.lambda - self.nu),
            nu_bar: self.nu_bar + s * (sigma.mu - self.nu_bar),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessSequence {
    pub j_values: Vec<f64>,
    pub f_values: Vec<f64>,
    pub terminal_f: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuityReport {
    pub sigmas: Vec<ParameterPair>,
    pub jhat: Vec<f64>,
    pub jhat_limit: f64,
    /// `|jhat_n - jhat_limit|`.
    pub gaps: Vec<f64>,
    pub final_relative_gap: f64,
}

/// Sup-norm of the energy gradient over `max(1, Dirichlet energies)`.
pub fn el_residual(u: &GridFunction, v: &GridFunction, sigma: ParameterPair, spec: &ProblemSpec) -> f64 {
    scaled_gradient_norm(u, v, sigma, spec)
}

struct ReducedJ<'a> {
    spec: &'a ProblemSpec,
    sigma: ParameterPair,
    anchor: Option<Anchor>,
    max_f: Cell<f64>,
    min_j: Cell<f64>,
}

impl<'a> ReducedJ<'a> {
    fn new(spec: &'a ProblemSpec, sigma: ParameterPair, anchor: Option<Anchor>) -> Self {
        ReducedJ {
            spec,
            sigma,
            anchor,
            max_f: Cell::new(f64::NEG_INFINITY),
            min_j: Cell::new(f64::INFINITY),
        }
    }
}

impl BlockObjective for ReducedJ<'_> {
    fn value(&self, x: &[GridFunction]) -> Option<f64> {
        let p = p_functional(&x[0], self.sigma.lambda, self.spec);
        let q = q_functional(&x[1], self.sigma.mu, self.spec);
        let f = coupling(&x[0], &x[1], self.spec);
        (p < -1e-14 && q < -1e-14 && f < -1e-14)
            .then(|| reduced_from_values(-p, -q, -f, self.spec))
    }

    fn value_grad(&self, x: &[GridFunction]) -> Option<(f64, Vec<Vec<f64>>)> {
        let (j, gu, gv) = reduced_value_grad(&x[0], &x[1], self.sigma, self.spec)?;
        if self.anchor.is_some() {
            self.max_f.set(self.max_f.get().max(coupling(&x[0], &x[1], self.spec)));
            self.min_j.set(self.min_j.get().min(j));
        }
        Some((j, vec![gu, gv]))
    }

    fn accept(&self, x: &[GridFunction]) -> bool {
        match self.anchor {
            None => true,
            Some(a) => {
                rayleigh(&x[0], self.spec.p).is_ok_and(|r| r < a.nu)
                    && rayleigh(&x[1], self.spec.q).is_ok_and(|r| r < a.nu_bar)
            }
        }
    }
}

fn descent_options(opts: &SolverOptions) -> DescentOptions {
    DescentOptions {
        max_iters: opts.max_iters,
        tol: 1e-14,
        patience: 5,
        ..DescentOptions::default()
    }
}

/// Newton on the Euler-Lagrange system from the fiber-scaled pair, then
/// assemble the report.
fn finish(
    u0: &GridFunction,
    v0: &GridFunction,
    sigma: ParameterPair,
    spec: &ProblemSpec,
    opts: &SolverOptions,
    seeds_used: usize,
) -> Result<SolveReport> {
    let sc = fibering_scales(u0, v0, sigma, spec)?;
    let sol = critical_point(&u0.scaled(sc.t), &v0.scaled(sc.s), sigma, spec, &NewtonOptions::default())?;
    let (u, v) = (sol.u, sol.v);
    let un = normalize_gradient_norm(&u, spec.p);
    let vn = normalize_gradient_norm(&v, spec.q);
    let scales = FiberingScales {
        t: dirichlet_energy(&u, spec.p).powf(1.0 / spec.p),
        s: dirichlet_energy(&v, spec.q).powf(1.0 / spec.q),
    };
    let jhat = if theta_membership(&un, &vn, sigma, spec)?.in_theta {
        Some(crate::fibering::reduced_functional(&un, &vn, sigma, spec)?)
    } else {
        None
    };
    let e = energy(&u, &v, sigma, spec);
    Ok(SolveReport {
        sigma,
        scales,
        jhat,
        energy: e.phi,
        el_residual: el_residual(&u, &v, sigma, spec),
        positivity_margin: u.min_interior().min(v.min_interior()),
        nehari: nehari_classify(&u, &v, sigma, spec, opts.nehari_tol),
        seeds_used,
        interior: None,
        f_bound: None,
        j_lower_bound: None,
        j_min_iterate: None,
        u,
        v,
    })
}

fn accept_report(r: &SolveReport, opts: &SolverOptions) -> Result<()> {
    if !(r.el_residual <= opts.el_tol) {
        return Err(Error::numerical(format!(
            "Euler-Lagrange residual {:e} above tolerance",
            r.el_residual
        )));
    }
    if !(r.positivity_margin > 0.0) {
        return Err(Error::numerical("solution is not positive"));
    }
    Ok(())
}

/// Minimize `J_sigma` over `Theta_sigma` from the standard starts plus
/// `warm` starts, then polish the best minimizer.
pub fn minimize_j_global(
    sigma: ParameterPair,
    spec: &ProblemSpec,
    eigs: &Eigenpairs,
    warm: &[(GridFunction, GridFunction)],
    opts: &SolverOptions,
) -> Result<SolveReport> {
    if !(sigma.lambda > eigs.lambda1() && sigma.mu > eigs.mu1()) {
        return Err(Error::invalid(format!(
            "need lambda > lambda_1 and mu > mu_1, got ({}, {})",
            sigma.lambda, sigma.mu
        )));
    }
    let mut seeds: Vec<(GridFunction, GridFunction)> = warm.to_vec();
    seeds.extend(starting_pairs(spec, eigs, opts.seeds, opts.rng_seed));
    let obj = ReducedJ::new(spec, sigma, None);
    let dopts = descent_options(opts);
    let mut found: Vec<(f64, GridFunction, GridFunction)> = Vec::new();
    let mut used = 0;
    for (u, v) in seeds {
        let (u, v) = (u.abs(), v.abs());
        if !theta_membership(&u, &v, sigma, spec).is_ok_and(|m| m.in_theta) {
            continue;
        }
        used += 1;
        if let Some(r) = descend(&obj, vec![u, v], &[spec.p, spec.q], &dopts) {
            let mut it = r.x.into_iter();
            let (a, b) = (it.next().unwrap(), it.next().unwrap());
            log::debug!("J descent at {sigma:?}: {} after {} iterations", r.value, r.iters);
            found.push((r.value, a.abs(), b.abs()));
        }
    }
    if found.is_empty() {
        return Err(Error::Degenerate(format!(
            "no starting pair lies in Theta at ({}, {})",
            sigma.lambda, sigma.mu
        )));
    }
    found.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut last_err = None;
    for (val, a, b) in &found {
        match finish(a, b, sigma, spec, opts, used) {
            Ok(r) => {
                let ok = r.jhat.is_some_and(|j| (j - val).abs() <= 1e-6 * val.abs());
                if ok && accept_report(&r, opts).is_ok() {
                    return Ok(r);
                }
                last_err = Some(Error::numerical(format!(
                    "polished point left the descent minimizer: J {val} -> {:?}, residual {:e}",
                    r.jhat, r.el_residual
                )));
            }
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap_or_else(|| Error::not_converged("global J minimization", opts.max_iters)))
}

/// Rayleigh quotients of a minimizer found on the curve.
pub fn separation_margins(report: &SolveReport, spec: &ProblemSpec) -> Result<Anchor> {
    let nu = rayleigh(&report.u, spec.p)?;
    let nu_bar = rayleigh(&report.v, spec.q)?;
    if !(nu < report.sigma.lambda && nu_bar < report.sigma.mu) {
        return Err(Error::Degenerate(format!(
            "separation margins not positive: nu = {nu} vs {}, nu_bar = {nu_bar} vs {}",
            report.sigma.lambda, report.sigma.mu
        )));
    }
    Ok(Anchor { nu, nu_bar })
}

/// Minimize `J_sigma` over `Theta_sigma` with `R_p(u) <= nu`,
/// `R_q(v) <= nu_bar`, starting from `start`. Trial points leaving the
/// anchor set are rejected by the line search.
pub fn minimize_j_local(
    sigma: ParameterPair,
    anchor: Anchor,
    spec: &ProblemSpec,
    eigs: &Eigenpairs,
    start: &(GridFunction, GridFunction),
    opts: &SolverOptions,
) -> Result<SolveReport> {
    if !(anchor.nu < sigma.lambda && anchor.nu_bar < sigma.mu) {
        return Err(Error::invalid(format!(
            "anchor ({}, {}) must lie below sigma = ({}, {})",
            anchor.nu, anchor.nu_bar, sigma.lambda, sigma.mu
        )));
    }
    if !(anchor.nu > eigs.lambda1() && anchor.nu_bar > eigs.mu1()) {
        return Err(Error::invalid("anchor must exceed the first eigenvalues"));
    }
    let obj = ReducedJ::new(spec, sigma, Some(anchor));
    let x0 = vec![
        normalize_gradient_norm(&start.0.abs(), spec.p),
        normalize_gradient_norm(&start.1.abs(), spec.q),
    ];
    if !(obj.accept(&x0) && obj.value(&x0).is_some()) {
        return Err(Error::invalid("starting pair is outside the anchored set"));
    }
    let r = descend(&obj, x0, &[spec.p, spec.q], &descent_options(opts))
        .ok_or_else(|| Error::numerical("reduced functional undefined along descent"))?;
    let mut it = r.x.into_iter();
    let (a, b) = (it.next().unwrap(), it.next().unwrap());
    let mut rep = finish(&a, &b, sigma, spec, opts, 1)?;
    accept_report(&rep, opts)?;
    let interior = rayleigh(&rep.u, spec.p)? < anchor.nu && rayleigh(&rep.v, spec.q)? < anchor.nu_bar;
    let max_f = obj.max_f.get();
    let d = spec.d();
    // on normalized pairs |P_lambda| <= lambda/lambda_1 - 1 and |Q_mu| <= mu/mu_1 - 1
    let pmax = sigma.lambda / eigs.lambda1() - 1.0;
    let qmax = sigma.mu / eigs.mu1() - 1.0;
    let bound = -reduced_constant(spec)
        * pmax.powf(spec.alpha / (spec.p * d))
        * qmax.powf(spec.beta / (spec.q * d))
        / max_f.abs().powf(1.0 / d);
    rep.interior = Some(interior);
    rep.f_bound = Some(max_f);
    rep.j_lower_bound = Some(bound);
    rep.j_min_iterate = Some(obj.min_j.get());
    if !interior {
        return Err(Error::Degenerate(
            "anchored minimizer lies on the boundary of the anchor set".into(),
        ));
    }
    Ok(rep)
}

/// Rescale a curve minimizer `(u, v)` (with `P = Q = F = 0`) to a solution
/// at the curve point by least squares in `(ln t, ln s)`.
pub fn zero_energy_solution(
    sample: &CurveSample,
    spec: &ProblemSpec,
    opts: &SolverOptions,
) -> Result<SolveReport> {
    let sigma = sample.point();
    let (u, v) = (&sample.minimizer.0, &sample.minimizer.1);
    let (mut t, mut s) = multiplier_scales(u, v, sigma, spec)
        .ok_or_else(|| Error::numerical("no positive multipliers at the curve point"))?;
    // grad_u Phi(tu, sv) = t^{p-1} A_u - t^{α-1} s^β B_u and likewise for v
    let (gu, gv) = grad_energy_vecs(u, v, sigma, spec);
    let (bu, bv) = grad_coupling(u, v, spec);
    let au: Vec<f64> = gu.iter().zip(&bu).map(|(g, b)| g + b).collect();
    let av: Vec<f64> = gv.iter().zip(&bv).map(|(g, b)| g + b).collect();
    let (p, q, al, be) = (spec.p, spec.q, spec.alpha, spec.beta);
    let mut converged = false;
    for _ in 0..100 {
        let cu = t.powf(p - 1.0);
        let ku = t.powf(al - 1.0) * s.powf(be);
        let cv = s.powf(q - 1.0);
        let kv = t.powf(al) * s.powf(be - 1.0);
        let mut jtj = [[0.0; 2]; 2];
        let mut jtr = [0.0; 2];
        for i in 0..au.len() {
            let ru = cu * au[i] - ku * bu[i];
            let j_u = [(p - 1.0) * cu * au[i] - (al - 1.0) * ku * bu[i], -be * ku * bu[i]];
            let rv = cv * av[i] - kv * bv[i];
            let j_v = [-al * kv * bv[i], (q - 1.0) * cv * av[i] - (be - 1.0) * kv * bv[i]];
            for a in 0..2 {
                jtr[a] += j_u[a] * ru + j_v[a] * rv;
                for b in 0..2 {
                    jtj[a][b] += j_u[a] * j_u[b] + j_v[a] * j_v[b];
                }
            }
        }
        let det = jtj[0][0] * jtj[1][1] - jtj[0][1] * jtj[1][0];
        if !(det.abs() > 0.0) {
            break;
        }
        let dl = -(jtj[1][1] * jtr[0] - jtj[0][1] * jtr[1]) / det;
        let ds = -(jtj[0][0] * jtr[1] - jtj[1][0] * jtr[0]) / det;
        t *= dl.clamp(-1.0, 1.0).exp();
        s *= ds.clamp(-1.0, 1.0).exp();
        if dl.abs().max(ds.abs()) < 1e-15 {
            converged = true;
            break;
        }
    }
    if !converged {
        log::debug!("zero-energy scaling stopped before the step vanished");
    }
    let (uu, vv) = (u.scaled(t), v.scaled(s));
    let e = energy(&uu, &vv, sigma, spec);
    let rep = SolveReport {
        sigma,
        scales: FiberingScales { t, s },
        jhat: None,
        energy: e.phi,
        el_residual: el_residual(&uu, &vv, sigma, spec),
        positivity_margin: uu.min_interior().min(vv.min_interior()),
        nehari: nehari_classify(&uu, &vv, sigma, spec, opts.nehari_tol),
        seeds_used: 1,
        interior: None,
        f_bound: None,
        j_lower_bound: None,
        j_min_iterate: None,
        u: uu,
        v: vv,
    };
    if !(rep.positivity_margin > 0.0) {
        return Err(Error::numerical("zero-energy solution is not positive"));
    }
    Ok(rep)
}

/// Natural energy scale `D_p(u)/p + D_q(v)/q` of a pair.
pub fn energy_scale(u: &GridFunction, v: &GridFunction, spec: &ProblemSpec) -> f64 {
    dirichlet_energy(u, spec.p) / spec.p + dirichlet_energy(v, spec.q) / spec.q
}

/// Perturb a pair with `P = Q = F = 0` at a curve point along `-grad F` and
/// evaluate `J_sigma` for `sigma` above the curve as the step shrinks.
pub fn unboundedness_witness(
    sigma: ParameterPair,
    target: f64,
    base: &(GridFunction, GridFunction),
    spec: &ProblemSpec,
    max_halvings: usize,
) -> Result<WitnessSequence> {
    if !(target < 0.0) {
        return Err(Error::invalid("witness target must be negative"));
    }
    let u = normalize_gradient_norm(&base.0, spec.p);
    let v = normalize_gradient_norm(&base.1, spec.q);
    let (fu, fv) = grad_coupling(&u, &v, spec);
    let gmax = fu.iter().chain(&fv).fold(0.0f64, |m, x| m.max(x.abs()));
    if !(gmax > 0.0) {
        return Err(Error::Degenerate("coupling gradient vanishes at the base pair".into()));
    }
    let c = u.sup_norm().max(v.sup_norm()) / gmax;
    let mut eps = 1e-2;
    let mut j_values = Vec::new();
    let mut f_values = Vec::new();
    for _ in 0..max_halvings {
        let uu = GridFunction::from_vec(
            u.mesh(),
            u.values().iter().zip(&fu).map(|(a, g)| a - eps * c * g).collect(),
        );
        let vv = GridFunction::from_vec(
            v.mesh(),
            v.values().iter().zip(&fv).map(|(a, g)| a - eps * c * g).collect(),
        );
        eps *= 0.5;
        let (uu, vv) = (
            normalize_gradient_norm(&uu, spec.p),
            normalize_gradient_norm(&vv, spec.q),
        );
        let p = p_functional(&uu, sigma.lambda, spec);
        let q = q_functional(&vv, sigma.mu, spec);
        let f = coupling(&uu, &vv, spec);
        if !(p < 0.0 && q < 0.0 && f < 0.0) {
            break;
        }
        let j = reduced_from_values(-p, -q, -f, spec);
        if let Some(&last) = j_values.last() {
            if !(j < last) {
                break;
            }
        }
        j_values.push(j);
        f_values.push(f);
        if j <= target {
            return Ok(WitnessSequence {
                j_values,
                terminal_f: f,
                f_values,
            });
        }
    }
    Err(Error::not_converged(
        format!("unboundedness witness (reached J = {:?})", j_values.last()),
        max_halvings,
    ))
}

/// `Ĵ` along a parameter sequence approaching `limit`, each solve warm
/// started from the previous minimizer.
pub fn jhat_continuity_probe(
    sigmas: &[ParameterPair],
    limit: ParameterPair,
    spec: &ProblemSpec,
    eigs: &Eigenpairs,
    opts: &SolverOptions,
) -> Result<ContinuityReport> {
    let lim = minimize_j_global(limit, spec, eigs, &[], opts)?;
    let jl = lim.jhat.ok_or_else(|| Error::numerical("limit minimizer outside Theta"))?;
    let mut warm = vec![lim.normalized(spec)];
    let mut jhat = Vec::with_capacity(sigmas.len());
    for &s in sigmas {
        let r = minimize_j_global(s, spec, eigs, &warm, opts)?;
        warm = vec![r.normalized(spec), lim.normalized(spec)];
        jhat.push(r.jhat.ok_or_else(|| Error::numerical("minimizer outside Theta"))?);
    }
    let gaps: Vec<f64> = jhat.iter().map(|j| (j - jl).abs()).collect();
    let final_relative_gap = gaps.last().map_or(0.0, |g| g / jl.abs());
    Ok(ContinuityReport {
        sigmas: sigmas.to_vec(),
        jhat,
        jhat_limit: jl,
        gaps,
        final_relative_gap,
    })
}
