//! The extremal parameter `sigma*`, the extremal curve and classification of
//! the parameter plane.
//!
//! Each constrained minimization runs in two phases. A penalty phase on
//! normalized pairs (smoothed max, quadratic penalty, continuation) locates
//! the basin of a minimizer from several starts. A bordered Newton iteration
//! then solves the optimality system exactly: at such a minimizer a rescaled
//! pair solves the Euler-Lagrange system with `F = 0`, the extremal
//! parameter being the extra unknown.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{GridFunction, ProblemConfig, ProblemSpec};
use crate::eigen::{EigenOptions, Eigenpairs};
use crate::error::{Error, Result};
use crate::functionals::{
    coupling, coupling_scale, dirichlet_energy, grad_coupling_impl, grad_rayleigh,
    p_functional, rayleigh, ParameterPair,
};
use crate::newton::{bordered, multiplier_scales, NewtonOptions};
use crate::optimize::{descend, normalize_gradient_norm, BlockObjective, DescentOptions};

const KAPPAS: [f64; 4] = [10.0, 100.0, 1e3, 1e4];
const RHOS: [f64; 4] = [10.0, 100.0, 1e3, 1e4];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtremalOptions {
    /// Number of starting pairs per minimization.
    pub seeds: usize,
    pub rng_seed: u64,
    /// Bound on `|F| / integral |f||u|^α|v|^β` at an accepted minimizer.
    pub f_tol: f64,
    /// Bound on the quotient gap relative to `sigma*`.
    pub gap_tol: f64,
    /// Iteration cap of every penalty stage.
    pub stage_iters: usize,
}

impl Default for ExtremalOptions {
    fn default() -> Self {
        ExtremalOptions {
            seeds: 8,
            rng_seed: 20_240_917,
            f_tol: 1e-6,
            gap_tol: 1e-4,
            stage_iters: 1500,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SigmaStarResult {
    pub sigma_star: f64,
    pub lambda_star: f64,
    pub mu_star: f64,
    /// Normalized minimizer, `||u'||_p = ||v'||_q = 1`.
    pub minimizer: (GridFunction, GridFunction),
    /// `|F| / integral |f||u|^α|v|^β` at the minimizer.
    pub f_residual: f64,
    /// `|R_p(u)/lambda_1 - R_q(v)/mu_1|`.
    pub quotient_gap: f64,
    /// True when `F(phi_1, psi_1) >= 0` and no minimization was needed.
    pub trivial: bool,
}

impl SigmaStarResult {
    pub fn endpoint(&self) -> ParameterPair {
        ParameterPair {
            lambda: self.lambda_star,
            mu: self.mu_star,
        }
    }

    /// The same result for the system with the equations exchanged.
    pub fn swapped(&self) -> Self {
        SigmaStarResult {
            lambda_star: self.mu_star,
            mu_star: self.lambda_star,
            minimizer: (self.minimizer.1.clone(), self.minimizer.0.clone()),
            ..self.clone()
        }
    }
}

/// One point of the extremal curve. On the `mu` branch `lambda` is given and
/// `mu` is the computed ordinate; on the `lambda` branch the roles swap.
#[derive(Clone, Debug)]
pub struct CurveSample {
    pub lambda: f64,
    pub mu: f64,
    /// Normalized minimizer.
    pub minimizer: (GridFunction, GridFunction),
    /// Relative residual of the active eigen-type constraint.
    pub residual_p: f64,
    /// Relative residual of `F = 0`.
    pub residual_f: f64,
}

impl CurveSample {
    pub fn point(&self) -> ParameterPair {
        ParameterPair {
            lambda: self.lambda,
            mu: self.mu,
        }
    }

    fn swapped(self) -> Self {
        CurveSample {
            lambda: self.mu,
            mu: self.lambda,
            minimizer: (self.minimizer.1, self.minimizer.0),
            ..self
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExtremalCurve {
    /// Samples `(lambda, mu_ext(lambda))`, increasing in `lambda`.
    pub mu_branch: Vec<CurveSample>,
    /// Samples `(lambda_ext(mu), mu)`, increasing in `mu`.
    pub lambda_branch: Vec<CurveSample>,
    pub lambda1: f64,
    pub mu1: f64,
    pub lambda_star: f64,
    pub mu_star: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    FirstQuadrantBelowEigen,
    GammaMinus,
    OnGamma,
    GammaPlus,
    Indeterminate,
}

/// `g = F / A` with `A = integral |f||u|^α|v|^β`, and its gradient.
fn coupling_ratio(
    u: &GridFunction,
    v: &GridFunction,
    spec: &ProblemSpec,
) -> (f64, Vec<f64>, Vec<f64>) {
    let m = u.mesh().interior();
    let a = coupling_scale(u, v, spec);
    if !(a > 0.0) {
        return (0.0, vec![0.0; m], vec![0.0; m]);
    }
    let g = coupling(u, v, spec) / a;
    let (fu, fv) = grad_coupling_impl(u, v, spec, false);
    let (au, av) = grad_coupling_impl(u, v, spec, true);
    let gu = fu.iter().zip(&au).map(|(f, b)| (f - g * b) / a).collect();
    let gv = fv.iter().zip(&av).map(|(f, b)| (f - g * b) / a).collect();
    (g, gu, gv)
}

fn coupling_ratio_value(u: &GridFunction, v: &GridFunction, spec: &ProblemSpec) -> f64 {
    let a = coupling_scale(u, v, spec);
    if a > 0.0 {
        coupling(u, v, spec) / a
    } else {
        0.0
    }
}

/// Penalized smooth maximum of the two normalized quotients.
struct SigmaPenalty<'a> {
    spec: &'a ProblemSpec,
    l1: f64,
    m1: f64,
    kappa: f64,
    rho: f64,
}

impl BlockObjective for SigmaPenalty<'_> {
    fn value(&self, x: &[GridFunction]) -> Option<f64> {
        let a = rayleigh(&x[0], self.spec.p).ok()? / self.l1;
        let b = rayleigh(&x[1], self.spec.q).ok()? / self.m1;
        let m = a.max(b);
        let smax = m + ((self.kappa * (a - m)).exp() + (self.kappa * (b - m)).exp()).ln() / self.kappa;
        let viol = (-coupling_ratio_value(&x[0], &x[1], self.spec)).max(0.0);
        Some(smax + self.rho * viol * viol).filter(|f| f.is_finite())
    }

    fn value_grad(&self, x: &[GridFunction]) -> Option<(f64, Vec<Vec<f64>>)> {
        let (ra, ga) = grad_rayleigh(&x[0], self.spec.p);
        let (rb, gb) = grad_rayleigh(&x[1], self.spec.q);
        let (a, b) = (ra / self.l1, rb / self.m1);
        let m = a.max(b);
        let ea = (self.kappa * (a - m)).exp();
        let eb = (self.kappa * (b - m)).exp();
        let smax = m + (ea + eb).ln() / self.kappa;
        let (wa, wb) = (ea / (ea + eb), eb / (ea + eb));
        let (g, gu, gv) = coupling_ratio(&x[0], &x[1], self.spec);
        let viol = (-g).max(0.0);
        let c = -2.0 * self.rho * viol;
        let du = ga
            .iter()
            .zip(&gu)
            .map(|(r, q)| wa / self.l1 * r + c * q)
            .collect();
        let dv = gb
            .iter()
            .zip(&gv)
            .map(|(r, q)| wb / self.m1 * r + c * q)
            .collect();
        let f = smax + self.rho * viol * viol;
        f.is_finite().then(|| (f, vec![du, dv]))
    }
}

/// Penalized `R_q(v)/mu_1` subject to `R_p(u) <= lambda` and `F >= 0`.
struct MuExtPenalty<'a> {
    spec: &'a ProblemSpec,
    lambda: f64,
    m1: f64,
    rho: f64,
}

impl BlockObjective for MuExtPenalty<'_> {
    fn value(&self, x: &[GridFunction]) -> Option<f64> {
        let ra = rayleigh(&x[0], self.spec.p).ok()?;
        let rb = rayleigh(&x[1], self.spec.q).ok()?;
        let cp = (1.0 - self.lambda / ra).max(0.0);
        let viol = (-coupling_ratio_value(&x[0], &x[1], self.spec)).max(0.0);
        Some(rb / self.m1 + self.rho * (cp * cp + viol * viol)).filter(|f| f.is_finite())
    }

    fn value_grad(&self, x: &[GridFunction]) -> Option<(f64, Vec<Vec<f64>>)> {
        let (ra, ga) = grad_rayleigh(&x[0], self.spec.p);
        let (rb, gb) = grad_rayleigh(&x[1], self.spec.q);
        let cp = (1.0 - self.lambda / ra).max(0.0);
        let (g, gu, gv) = coupling_ratio(&x[0], &x[1], self.spec);
        let viol = (-g).max(0.0);
        let kp = 2.0 * self.rho * cp * self.lambda / (ra * ra);
        let kf = -2.0 * self.rho * viol;
        let du = ga.iter().zip(&gu).map(|(r, q)| kp * r + kf * q).collect();
        let dv = gb
            .iter()
            .zip(&gv)
            .map(|(r, q)| r / self.m1 + kf * q)
            .collect();
        let f = rb / self.m1 + self.rho * (cp * cp + viol * viol);
        f.is_finite().then(|| (f, vec![du, dv]))
    }
}

fn bump(spec: &ProblemSpec, a: f64, b: f64) -> GridFunction {
    GridFunction::interpolate(spec.mesh(), |x| {
        if x > a && x < b {
            (std::f64::consts::PI * (x - a) / (b - a)).sin()
        } else {
            0.0
        }
    })
}

fn add(u: &GridFunction, w: &GridFunction) -> GridFunction {
    let vals = u.values().iter().zip(w.values()).map(|(a, b)| a + b).collect();
    GridFunction::from_vec(u.mesh(), vals)
}

/// `u * exp(sum_k c_k sin(k pi x))` with random smooth coefficients.
fn perturb(u: &GridFunction, rng: &mut ChaCha8Rng) -> GridFunction {
    let c: Vec<f64> = (1..=4).map(|k| rng.gen_range(-0.6..0.6) / k as f64).collect();
    let mesh = u.mesh();
    let vals = u
        .values()
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let x = mesh.node_x(i + 1);
            let s: f64 = c
                .iter()
                .enumerate()
                .map(|(k, ck)| ck * ((k + 1) as f64 * std::f64::consts::PI * x).sin())
                .sum();
            a * s.exp()
        })
        .collect();
    GridFunction::from_vec(mesh, vals)
}

/// Deterministic starting pairs: the eigenfunctions, bumps on the
/// components of `{f >= 0}` in symmetric and asymmetric combinations, and
/// random smooth perturbations of both.
pub(crate) fn starting_pairs(
    spec: &ProblemSpec,
    eigs: &Eigenpairs,
    count: usize,
    rng_seed: u64,
) -> Vec<(GridFunction, GridFunction)> {
    let phi = eigs.first.function.clone();
    let psi = eigs.second.function.clone();
    let comps: Vec<GridFunction> = spec
        .weight()
        .nonnegative_components()
        .iter()
        .map(|&(a, b)| bump(spec, a, b))
        .collect();
    let mut out = vec![(phi.clone(), psi.clone())];
    if let Some(first) = comps.first() {
        let all = comps.iter().skip(1).fold(first.clone(), |acc, c| add(&acc, c));
        out.push((all.clone(), all.clone()));
        if comps.len() > 1 {
            for c in &comps {
                out.push((c.clone(), c.clone()));
            }
        }
        out.push((comps[0].clone(), all.clone()));
        out.push((all.clone(), comps[0].clone()));
        out.push((phi.clone(), all.clone()));
        out.push((all, psi.clone()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let base = out.clone();
    out.truncate(count.saturating_sub(count / 4).max(1));
    let mut k = 0;
    while out.len() < count {
        let (u, v) = &base[k % base.len()];
        out.push((perturb(u, &mut rng), perturb(v, &mut rng)));
        k += 1;
    }
    out.truncate(count);
    out
}

/// Run the continuation stages, attempting `finish` after every stage from
/// the second on and returning its first success.
fn penalty_stages<'a, T>(
    obj_at: &dyn Fn(usize) -> Box<dyn BlockObjective + 'a>,
    x0: (GridFunction, GridFunction),
    spec: &ProblemSpec,
    opts: &ExtremalOptions,
    finish: &dyn Fn(&GridFunction, &GridFunction) -> Option<T>,
) -> Option<T> {
    let exps = [spec.p, spec.q];
    let dopts = DescentOptions {
        max_iters: opts.stage_iters,
        tol: 1e-13,
        ..DescentOptions::default()
    };
    let mut x = vec![x0.0, x0.1];
    for k in 0..KAPPAS.len() {
        let obj = obj_at(k);
        let r = descend(obj.as_ref(), x, &exps, &dopts)?;
        log::trace!("penalty stage {k}: {} iterations, value {}", r.iters, r.value);
        x = r.x;
        if k >= 1 {
            if let Some(out) = finish(&x[0], &x[1]) {
                return Some(out);
            }
        }
    }
    None
}

fn normalized(u: &GridFunction, v: &GridFunction, spec: &ProblemSpec) -> (GridFunction, GridFunction) {
    (
        normalize_gradient_norm(u, spec.p),
        normalize_gradient_norm(v, spec.q),
    )
}

/// Bordered Newton from a penalty-phase pair; `theta0` is the penalty
/// estimate of the extremal value. The polished point is feasible, so its
/// value bounds the infimum from above while `theta0` sits slightly below
/// it; the result must be positive and lie in a band above `theta0`.
fn polish(
    u: &GridFunction,
    v: &GridFunction,
    base: ParameterPair,
    dir: ParameterPair,
    theta0: f64,
    spec: &ProblemSpec,
) -> Option<(GridFunction, GridFunction, f64)> {
    let sigma = ParameterPair {
        lambda: base.lambda + theta0 * dir.lambda,
        mu: base.mu + theta0 * dir.mu,
    };
    let (t, s) = multiplier_scales(u, v, sigma, spec)?;
    let res = bordered(
        &u.scaled(t),
        &v.scaled(s),
        base,
        dir,
        theta0,
        spec,
        &NewtonOptions::default(),
    )
    .ok()?;
    let ok = res.u.min_interior() > 0.0
        && res.v.min_interior() > 0.0
        && res.theta >= theta0 - 0.02 * theta0.abs()
        && res.theta <= theta0 + 0.1 * theta0.abs();
    if !ok {
        log::debug!(
            "rejected polished point: theta {} vs {theta0}, min u {:e}, min v {:e}",
            res.theta,
            res.u.min_interior(),
            res.v.min_interior()
        );
        return None;
    }
    let (a, b) = normalized(&res.u, &res.v, spec);
    Some((a, b, res.theta))
}

fn relative_f(u: &GridFunction, v: &GridFunction, spec: &ProblemSpec) -> f64 {
    coupling(u, v, spec).abs() / coupling_scale(u, v, spec)
}

/// Minimize `max(R_p(u)/lambda_1, R_q(v)/mu_1)` subject to `F(u, v) >= 0`.
pub fn sigma_star(
    spec: &ProblemSpec,
    eigs: &Eigenpairs,
    opts: &ExtremalOptions,
) -> Result<SigmaStarResult> {
    let (l1, m1) = (eigs.lambda1(), eigs.mu1());
    let phi = &eigs.first.function;
    let psi = &eigs.second.function;
    if coupling(phi, psi, spec) >= 0.0 {
        let (u, v) = normalized(phi, psi, spec);
        return Ok(SigmaStarResult {
            sigma_star: 1.0,
            lambda_star: l1,
            mu_star: m1,
            f_residual: relative_f(&u, &v, spec),
            quotient_gap: (rayleigh(&u, spec.p)? / l1 - rayleigh(&v, spec.q)? / m1).abs(),
            minimizer: (u, v),
            trivial: true,
        });
    }
    let seeds = starting_pairs(spec, eigs, opts.seeds, opts.rng_seed);
    let candidates: Vec<(GridFunction, GridFunction, f64)> = seeds
        .into_par_iter()
        .enumerate()
        .filter_map(|(k, x0)| {
            let make = |i: usize| -> Box<dyn BlockObjective + '_> {
                Box::new(SigmaPenalty {
                    spec,
                    l1,
                    m1,
                    kappa: KAPPAS[i],
                    rho: RHOS[i],
                })
            };
            let finish = |u: &GridFunction, v: &GridFunction| {
                let tau0 = (rayleigh(u, spec.p).ok()? / l1).max(rayleigh(v, spec.q).ok()? / m1);
                polish(
                    u,
                    v,
                    ParameterPair { lambda: 0.0, mu: 0.0 },
                    ParameterPair { lambda: l1, mu: m1 },
                    tau0,
                    spec,
                )
            };
            let out = penalty_stages(&make, x0, spec, opts, &finish);
            log::debug!("sigma* seed {k}: polished {:?}", out.as_ref().map(|o| o.2));
            out
        })
        .collect();
    let best = candidates
        .into_iter()
        .min_by(|a, b| a.2.total_cmp(&b.2))
        .ok_or_else(|| Error::not_converged("sigma* multistart", opts.seeds))?;
    let (u, v, tau) = best;
    let f_residual = relative_f(&u, &v, spec);
    let quotient_gap = (rayleigh(&u, spec.p)? / l1 - rayleigh(&v, spec.q)? / m1).abs();
    if !(f_residual <= opts.f_tol && quotient_gap <= opts.gap_tol * tau) {
        return Err(Error::numerical(format!(
            "sigma* diagnostics out of tolerance: |F| {f_residual:e}, gap {quotient_gap:e}"
        )));
    }
    Ok(SigmaStarResult {
        sigma_star: tau,
        lambda_star: tau * l1,
        mu_star: tau * m1,
        minimizer: (u, v),
        f_residual,
        quotient_gap,
        trivial: false,
    })
}

fn check_lambda(lambda: f64, eigs: &Eigenpairs, star: &SigmaStarResult) -> Result<()> {
    if !(lambda > eigs.lambda1() && lambda <= star.lambda_star * (1.0 + 1e-12)) {
        return Err(Error::invalid(format!(
            "lambda = {lambda} outside ({}, {}]",
            eigs.lambda1(),
            star.lambda_star
        )));
    }
    Ok(())
}

fn mu_ext_from_seeds(
    lambda: f64,
    spec: &ProblemSpec,
    eigs: &Eigenpairs,
    seeds: Vec<(GridFunction, GridFunction)>,
    opts: &ExtremalOptions,
) -> Option<CurveSample> {
    let m1 = eigs.mu1();
    let best = seeds
        .into_iter()
        .filter_map(|x0| {
            let make = |i: usize| -> Box<dyn BlockObjective + '_> {
                Box::new(MuExtPenalty {
                    spec,
                    lambda,
                    m1,
                    rho: RHOS[i],
                })
            };
            let finish = |u: &GridFunction, v: &GridFunction| {
                polish(
                    u,
                    v,
                    ParameterPair { lambda, mu: 0.0 },
                    ParameterPair { lambda: 0.0, mu: 1.0 },
                    rayleigh(v, spec.q).ok()?,
                    spec,
                )
            };
            penalty_stages(&make, x0, spec, opts, &finish)
        })
        .min_by(|a, b| a.2.total_cmp(&b.2))?;
    let (u, v, mu) = best;
    let residual_p = p_functional(&u, lambda, spec).abs() / dirichlet_energy(&u, spec.p);
    let residual_f = relative_f(&u, &v, spec);
    Some(CurveSample {
        lambda,
        mu,
        minimizer: (u, v),
        residual_p,
        residual_f,
    })
}

fn mu_ext_seeds(
    spec: &ProblemSpec,
    eigs: &Eigenpairs,
    star: &SigmaStarResult,
    opts: &ExtremalOptions,
) -> Vec<(GridFunction, GridFunction)> {
    let mut seeds = vec![star.minimizer.clone()];
    seeds.extend(starting_pairs(spec, eigs, opts.seeds.saturating_sub(1), opts.rng_seed));
    seeds
}

/// `inf R_q(v)` subject to `P_lambda(u) <= 0` and `F(u, v) >= 0`, returned
/// as a parameter value (not divided by `mu_1`).
pub fn mu_ext(
    lambda: f64,
    spec: &ProblemSpec,
    eigs: &Eigenpairs,
    star: &SigmaStarResult,
    opts: &ExtremalOptions,
) -> Result<CurveSample> {
    check_lambda(lambda, eigs, star)?;
    mu_ext_from_seeds(lambda, spec, eigs, mu_ext_seeds(spec, eigs, star, opts), opts)
        .ok_or_else(|| Error::not_converged(format!("mu_ext({lambda})"), opts.seeds))
}

/// Mirror image of [`mu_ext`]: `inf R_p(u)` subject to `Q_mu(v) <= 0` and
/// `F(u, v) >= 0`.
pub fn lambda_ext(
    mu: f64,
    spec: &ProblemSpec,
    eigs: &Eigenpairs,
    star: &SigmaStarResult,
    opts: &ExtremalOptions,
) -> Result<CurveSample> {
    mu_ext(mu, &spec.swapped(), &eigs.swapped(), &star.swapped(), opts).map(CurveSample::swapped)
}

/// Geometric grid on `(lo, hi]` accumulating at `lo`; the smallest offset
/// is `1e-2 (hi - lo)` and the last point is `hi`.
pub fn curve_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![hi];
    }
    let ratio = 1e-2f64.powf(1.0 / (n - 1) as f64);
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                lo + (hi - lo) * ratio.powi((n - 1 - i) as i32)
            }
        })
        .collect()
}

fn branch(
    spec: &ProblemSpec,
    eigs: &Eigenpairs,
    star: &SigmaStarResult,
    n: usize,
    opts: &ExtremalOptions,
) -> Result<Vec<CurveSample>> {
    let grid = curve_grid(eigs.lambda1(), star.lambda_star, n);
    let seeds = mu_ext_seeds(spec, eigs, star, opts);
    let mut samples: Vec<CurveSample> = grid
        .par_iter()
        .map(|&l| {
            mu_ext_from_seeds(l, spec, eigs, seeds.clone(), opts)
                .ok_or_else(|| Error::not_converged(format!("mu_ext({l})"), opts.seeds))
        })
        .collect::<Result<_>>()?;
    // neighbours are feasible starts for each other; sweep until no sample improves
    for _ in 0..4 {
        let mut changed = false;
        let order: Vec<usize> = (0..n).chain((0..n).rev()).collect();
        for i in order {
            let mut nb = Vec::new();
            if i > 0 {
                nb.push(samples[i - 1].minimizer.clone());
            }
            if i + 1 < n {
                nb.push(samples[i + 1].minimizer.clone());
            }
            if let Some(s) = mu_ext_from_seeds(grid[i], spec, eigs, nb, opts) {
                if s.mu < samples[i].mu * (1.0 - 1e-10) {
                    log::debug!("mu_ext({}) improved {} -> {}", grid[i], samples[i].mu, s.mu);
                    samples[i] = s;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    Ok(samples)
}

/// Sample both branches of the extremal curve on geometric grids.
pub fn trace_curve(
    spec: &ProblemSpec,
    eigs: &Eigenpairs,
    star: &SigmaStarResult,
    n_samples: usize,
    opts: &ExtremalOptions,
) -> Result<ExtremalCurve> {
    if n_samples < 2 {
        return Err(Error::invalid("trace needs at least two samples per branch"));
    }
    if star.trivial {
        return Err(Error::invalid(
            "F(phi_1, psi_1) >= 0: the extremal curve degenerates to the point (lambda_1, mu_1)",
        ));
    }
    let mu_branch = branch(spec, eigs, star, n_samples, opts)?;
    let lambda_branch = branch(&spec.swapped(), &eigs.swapped(), &star.swapped(), n_samples, opts)?
        .into_iter()
        .map(CurveSample::swapped)
        .collect();
    let curve = ExtremalCurve {
        mu_branch,
        lambda_branch,
        lambda1: eigs.lambda1(),
        mu1: eigs.mu1(),
        lambda_star: star.lambda_star,
        mu_star: star.mu_star,
    };
    if let Some(msg) = curve.monotonicity_violation(1e-6) {
        return Err(Error::numerical(msg));
    }
    Ok(curve)
}

impl ExtremalCurve {
    /// First place where an ordinate increases by more than `slack`.
    pub fn monotonicity_violation(&self, slack: f64) -> Option<String> {
        for w in self.mu_branch.windows(2) {
            if w[1].mu > w[0].mu + slack {
                return Some(format!(
                    "mu_ext increases from {} at {} to {} at {}",
                    w[0].mu, w[0].lambda, w[1].mu, w[1].lambda
                ));
            }
        }
        for w in self.lambda_branch.windows(2) {
            if w[1].lambda > w[0].lambda + slack {
                return Some(format!(
                    "lambda_ext increases from {} at {} to {} at {}",
                    w[0].lambda, w[0].mu, w[1].lambda, w[1].mu
                ));
            }
        }
        None
    }

    /// Piecewise-linear `mu_ext(lambda)`; `Err(lower bound)` left of the
    /// first sample, where only monotonicity is known.
    fn interpolate(samples: &[(f64, f64)], x: f64) -> Option<std::result::Result<f64, f64>> {
        let first = samples.first()?;
        let last = samples.last()?;
        if x > last.0 * (1.0 + 1e-12) {
            return None;
        }
        if x < first.0 {
            return Some(Err(first.1));
        }
        for w in samples.windows(2) {
            if x <= w[1].0 {
                let s = (x - w[0].0) / (w[1].0 - w[0].0);
                return Some(Ok(w[0].1 + s * (w[1].1 - w[0].1)));
            }
        }
        Some(Ok(last.1))
    }

    pub fn mu_ext_at(&self, lambda: f64) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self.mu_branch.iter().map(|s| (s.lambda, s.mu)).collect();
        Self::interpolate(&pts, lambda)?.ok()
    }

    pub fn lambda_ext_at(&self, mu: f64) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self.lambda_branch.iter().map(|s| (s.mu, s.lambda)).collect();
        Self::interpolate(&pts, mu)?.ok()
    }
}

fn compare(
    coord: f64,
    lo: f64,
    samples: &[(f64, f64)],
    other: f64,
    tol: f64,
) -> Option<Region> {
    if !(coord > lo) {
        return None;
    }
    match ExtremalCurve::interpolate(samples, coord)? {
        Ok(c) if (other - c).abs() <= tol * c.abs() => Some(Region::OnGamma),
        Ok(c) if other < c => Some(Region::GammaMinus),
        Ok(_) => Some(Region::GammaPlus),
        // left of the first sample the curve lies above its first ordinate
        Err(bound) if other < bound * (1.0 - tol) => Some(Region::GammaMinus),
        Err(_) => Some(Region::Indeterminate),
    }
}

/// Locate `sigma` relative to the traced curve; `tol` is the relative
/// width of the band counted as on the curve.
pub fn classify_parameter(sigma: ParameterPair, curve: &ExtremalCurve, tol: f64) -> Region {
    let (l, m) = (sigma.lambda, sigma.mu);
    if l < curve.lambda1 && m < curve.mu1 {
        return Region::FirstQuadrantBelowEigen;
    }
    if l > curve.lambda_star && m > curve.mu_star {
        return Region::GammaPlus;
    }
    let mb: Vec<(f64, f64)> = curve.mu_branch.iter().map(|s| (s.lambda, s.mu)).collect();
    let lb: Vec<(f64, f64)> = curve.lambda_branch.iter().map(|s| (s.mu, s.lambda)).collect();
    let a = compare(l, curve.lambda1, &mb, m, tol);
    let b = compare(m, curve.mu1, &lb, l, tol);
    let rank = |r: Option<Region>| match r {
        Some(Region::OnGamma) => 4,
        Some(Region::GammaMinus) => 3,
        Some(Region::GammaPlus) => 2,
        _ => 0,
    };
    let best = if rank(a) >= rank(b) { a } else { b };
    match best {
        Some(r) if rank(Some(r)) > 0 => r,
        _ => Region::Indeterminate,
    }
}

/// Build a spec from a configuration and make sure the coupling of the
/// eigenfunctions is negative, deepening the negative part of the weight
/// if necessary. Returns the factor applied (1 when unchanged).
pub fn ensure_negative_coupling(
    config: &ProblemConfig,
    eig_opts: &EigenOptions,
) -> Result<(ProblemSpec, Eigenpairs, f64)> {
    let mut spec = config.build()?;
    let eigs = Eigenpairs::compute(&spec, eig_opts)?;
    let mut factor = 1.0;
    for _ in 0..30 {
        if coupling(&eigs.first.function, &eigs.second.function, &spec) < 0.0 {
            return Ok((spec, eigs, factor));
        }
        factor *= 2.0;
        log::warn!("F(phi_1, psi_1) >= 0; deepening the negative band by a factor {factor}");
        spec = spec.with_weight(config.build()?.weight().deepen_negative(factor))?;
    }
    Err(Error::numerical("could not make F(phi_1, psi_1) negative"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::build_mesh;

    #[test]
    fn grid_is_geometric_and_ends_at_hi() {
        let g = curve_grid(1.0, 2.0, 5);
        assert_eq!(g.len(), 5);
        assert_eq!(*g.last().unwrap(), 2.0);
        assert!((g[0] - 1.01).abs() < 1e-12);
        let r1 = (g[1] - 1.0) / (g[0] - 1.0);
        let r2 = (g[2] - 1.0) / (g[1] - 1.0);
        assert!((r1 - r2).abs() < 1e-9);
    }

    #[test]
    fn starting_pairs_are_deterministic() {
        let spec = ProblemConfig::reference(32).build().unwrap();
        let eigs = Eigenpairs::compute(&spec, &EigenOptions::default()).unwrap();
        let a = starting_pairs(&spec, &eigs, 8, 3);
        let b = starting_pairs(&spec, &eigs, 8, 3);
        assert_eq!(a.len(), 8);
        assert_eq!(a, b);
        assert!(a.iter().all(|(u, v)| !u.is_zero() && !v.is_zero()));
    }

    #[test]
    fn coupling_ratio_gradient_matches_differences() {
        let spec = ProblemConfig::reference(16).build().unwrap();
        let m = build_mesh(16).unwrap();
        let u = GridFunction::interpolate(m, |x| x * (1.0 - x) * (1.0 + x));
        let v = GridFunction::interpolate(m, |x| (3.0 * x).sin() * (1.0 - x));
        let (_, gu, _) = coupling_ratio(&u, &v, &spec);
        let h = 1e-6;
        for i in [2, 7, 11] {
            let mut up = u.clone();
            up.values_mut()[i] += h;
            let mut um = u.clone();
            um.values_mut()[i] -= h;
            let fd = (coupling_ratio(&up, &v, &spec).0 - coupling_ratio(&um, &v, &spec).0) / (2.0 * h);
            assert!((fd - gu[i]).abs() < 1e-6 * gu[i].abs().max(1e-3));
        }
    }
}
