//! Newton iterations on the discrete Euler-Lagrange system.
//!
//! Two variants: plain Newton on `grad Phi_sigma = 0` for fixed `sigma`, and
//! a bordered system in which `sigma = base + theta * dir` is an additional
//! unknown closed by the equation `F(U, V) = 0`. The bordered matrix is
//! never formed; both solves reuse one banded factorization of the Hessian.

use crate::domain::{GridFunction, ProblemSpec};
use crate::error::{Error, Result};
use crate::functionals::{
    coupling, coupling_scale, deinterleave, dirichlet_energy, grad_coupling, grad_energy_vecs,
    grad_lr_mass, hessian_energy, interleave, ParameterPair,
};

#[derive(Clone, Copy, Debug)]
pub(crate) struct NewtonOptions {
    pub max_iters: usize,
    /// Target for the scaled residual.
    pub tol: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            max_iters: 60,
            tol: 1e-12,
        }
    }
}

/// Sup-norm of the energy gradient over `max(1, Dirichlet energies)`.
pub(crate) fn scaled_gradient_norm(
    u: &GridFunction,
    v: &GridFunction,
    sigma: ParameterPair,
    spec: &ProblemSpec,
) -> f64 {
    let (gu, gv) = grad_energy_vecs(u, v, sigma, spec);
    let sup = gu.iter().chain(&gv).fold(0.0f64, |m, x| m.max(x.abs()));
    let scale = 1f64
        .max(dirichlet_energy(u, spec.p))
        .max(dirichlet_energy(v, spec.q));
    sup / scale
}

fn split(x: &[f64], u: &GridFunction) -> (GridFunction, GridFunction) {
    let (a, b) = deinterleave(x);
    (
        GridFunction::from_vec(u.mesh(), a),
        GridFunction::from_vec(u.mesh(), b),
    )
}

fn axpy(x: &[f64], t: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(a, b)| a + t * b).collect()
}

#[derive(Clone, Debug)]
pub(crate) struct NewtonResult {
    pub u: GridFunction,
    pub v: GridFunction,
    pub theta: f64,
    pub residual: f64,
    pub iters: usize,
}

/// Newton with backtracking on the scaled residual for `grad Phi_sigma = 0`.
pub(crate) fn critical_point(
    u: &GridFunction,
    v: &GridFunction,
    sigma: ParameterPair,
    spec: &ProblemSpec,
    opts: &NewtonOptions,
) -> Result<NewtonResult> {
    let merit = |x: &[f64]| {
        let (a, b) = split(x, u);
        scaled_gradient_norm(&a, &b, sigma, spec)
    };
    let mut x = interleave(u.values(), v.values());
    let mut r = merit(&x);
    let mut it = 0;
    while r > opts.tol && it < opts.max_iters {
        let (a, b) = split(&x, u);
        let (gu, gv) = grad_energy_vecs(&a, &b, sigma, spec);
        let g = interleave(&gu, &gv);
        let lu = hessian_energy(&a, &b, sigma, spec).factor()?;
        let d: Vec<f64> = lu.solve(&g).into_iter().map(|z| -z).collect();
        let mut step = 1.0;
        let mut next = None;
        for _ in 0..30 {
            let xt = axpy(&x, step, &d);
            let rt = merit(&xt);
            if rt.is_finite() && rt < r {
                next = Some((xt, rt));
                break;
            }
            step *= 0.5;
        }
        let Some((xt, rt)) = next else { break };
        x = xt;
        r = rt;
        it += 1;
    }
    let (a, b) = split(&x, u);
    if !(r <= opts.tol * 1e4) {
        return Err(Error::numerical(format!(
            "Newton on the Euler-Lagrange system stalled at residual {r:e}"
        )));
    }
    let res = NewtonResult {
        u: a,
        v: b,
        theta: 0.0,
        residual: r,
        iters: it,
    };
    log::debug!("Newton: residual {:e} after {} steps", res.residual, res.iters);
    Ok(res)
}

/// Solve `grad Phi_{base + theta dir}(U, V) = 0`, `F(U, V) = 0` for
/// `(U, V, theta)`.
pub(crate) fn bordered(
    u: &GridFunction,
    v: &GridFunction,
    base: ParameterPair,
    dir: ParameterPair,
    theta0: f64,
    spec: &ProblemSpec,
    opts: &NewtonOptions,
) -> Result<NewtonResult> {
    let sig = |th: f64| ParameterPair {
        lambda: base.lambda + th * dir.lambda,
        mu: base.mu + th * dir.mu,
    };
    let merit = |x: &[f64], th: f64| {
        let (a, b) = split(x, u);
        let fs = coupling_scale(&a, &b, spec);
        let fr = if fs > 0.0 { coupling(&a, &b, spec).abs() / fs } else { f64::INFINITY };
        scaled_gradient_norm(&a, &b, sig(th), spec).max(fr)
    };
    let mut x = interleave(u.values(), v.values());
    let mut th = theta0;
    let mut r = merit(&x, th);
    let mut it = 0;
    while r > opts.tol && it < opts.max_iters {
        let (a, b) = split(&x, u);
        let sigma = sig(th);
        let (gu, gv) = grad_energy_vecs(&a, &b, sigma, spec);
        let g = interleave(&gu, &gv);
        let lu = hessian_energy(&a, &b, sigma, spec).factor()?;
        let mu_ = grad_lr_mass(&a, spec.p);
        let mv = grad_lr_mass(&b, spec.q);
        let bcol = interleave(
            &mu_.iter().map(|z| -dir.lambda / spec.p * z).collect::<Vec<_>>(),
            &mv.iter().map(|z| -dir.mu / spec.q * z).collect::<Vec<_>>(),
        );
        let (fu, fv) = grad_coupling(&a, &b, spec);
        let c = interleave(&fu, &fv);
        let f = coupling(&a, &b, spec);
        let y: Vec<f64> = lu.solve(&g).into_iter().map(|z| -z).collect();
        let z = lu.solve(&bcol);
        let cy: f64 = c.iter().zip(&y).map(|(p, q)| p * q).sum();
        let cz: f64 = c.iter().zip(&z).map(|(p, q)| p * q).sum();
        if !(cz.abs() > 0.0) {
            return Err(Error::numerical("bordered Newton system is singular"));
        }
        let dth = (cy + f) / cz;
        let d: Vec<f64> = y.iter().zip(&z).map(|(p, q)| p - dth * q).collect();
        let mut step = 1.0;
        let mut next = None;
        for _ in 0..30 {
            let xt = axpy(&x, step, &d);
            let tt = th + step * dth;
            let rt = merit(&xt, tt);
            if rt.is_finite() && rt < r {
                next = Some((xt, tt, rt));
                break;
            }
            step *= 0.5;
        }
        let Some((xt, tt, rt)) = next else { break };
        x = xt;
        th = tt;
        r = rt;
        it += 1;
    }
    let (a, b) = split(&x, u);
    if !(r <= opts.tol * 1e4) {
        return Err(Error::numerical(format!(
            "bordered Newton stalled at residual {r:e}"
        )));
    }
    let res = NewtonResult {
        u: a,
        v: b,
        theta: th,
        residual: r,
        iters: it,
    };
    log::debug!("bordered Newton: residual {:e} after {} steps", res.residual, res.iters);
    Ok(res)
}

/// Fiber scales `(t, s)` that best align `(t u, s v)` with the system, from
/// least-squares multipliers of the two equations.
pub(crate) fn multiplier_scales(
    u: &GridFunction,
    v: &GridFunction,
    sigma: ParameterPair,
    spec: &ProblemSpec,
) -> Option<(f64, f64)> {
    // grad_u Phi = (1/p) grad P - grad_u F, so (1/p) grad P = grad_u Phi + grad_u F
    let (gu, gv) = grad_energy_vecs(u, v, sigma, spec);
    let (fu, fv) = grad_coupling(u, v, spec);
    let ratio = |g: &[f64], f: &[f64]| {
        let num: f64 = g.iter().zip(f).map(|(a, b)| (a + b) * b).sum();
        let den: f64 = f.iter().map(|b| b * b).sum();
        num / den
    };
    let a = ratio(&gu, &fu);
    let b = ratio(&gv, &fv);
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
        return None;
    }
    let (p, q, al, be) = (spec.p, spec.q, spec.alpha, spec.beta);
    // (α-p) ln t + β ln s = ln a,  α ln t + (β-q) ln s = ln b
    let det = -p * q * spec.d();
    let lt = ((be - q) * a.ln() - be * b.ln()) / det;
    let ls = ((al - p) * b.ln() - al * a.ln()) / det;
    Some((lt.exp(), ls.exp()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_mesh, build_weight, Hypothesis};
    use crate::eigen::{EigenOptions, Eigenpairs};
    use crate::fibering::fibering_scales;
    use crate::functionals::energy;

    fn reference() -> ProblemSpec {
        let w = build_weight(vec![0.0, 0.45, 0.55, 1.0], vec![1.0, -4.0, 1.0], Hypothesis::F1)
            .unwrap();
        ProblemSpec::new(2.0, 2.0, 3.0, 3.0, w, build_mesh(64).unwrap()).unwrap()
    }

    #[test]
    fn newton_refines_a_fiber_minimizer_and_scales_are_recovered() {
        let spec = reference();
        let eigs = Eigenpairs::compute(&spec, &EigenOptions::default()).unwrap();
        let sigma = ParameterPair { lambda: eigs.lambda1() + 0.2, mu: eigs.mu1() + 0.2 };
        let u0 = &eigs.first.function;
        let v0 = &eigs.second.function;
        assert!(coupling(u0, v0, &spec) < 0.0);
        let sc = fibering_scales(u0, v0, sigma, &spec).unwrap();
        let sol = critical_point(&u0.scaled(sc.t), &v0.scaled(sc.s), sigma, &spec, &NewtonOptions::default())
            .unwrap();
        assert!(sol.residual <= 1e-8);
        assert!(sol.u.min_interior() > 0.0 && sol.v.min_interior() > 0.0);
        assert!(energy(&sol.u, &sol.v, sigma, &spec).phi < 0.0);

        let (t, s) = multiplier_scales(&sol.u.scaled(0.5), &sol.v.scaled(2.0), sigma, &spec).unwrap();
        assert!((t - 2.0).abs() < 1e-6, "t={t}");
        assert!((s - 0.5).abs() < 1e-6, "s={s}");
    }
}
