//! Projected gradient descent in a Sobolev metric.
//!
//! Every objective minimized in this crate is invariant under independent
//! positive rescaling of its blocks, so iterates are kept on the product of
//! unit spheres `||u'||_r = 1`. The search direction is the gradient
//! represented in a weighted `W^{1,2}_0` inner product (a tridiagonal solve
//! per block), which removes the mesh dependence of plain nodal gradients.

use crate::banded::solve_spd_tridiagonal;
use crate::domain::GridFunction;
use crate::functionals::dirichlet_energy;

/// A smooth function of several grid functions.
pub(crate) trait BlockObjective {
    /// `None` outside the set where the objective is defined.
    fn value(&self, x: &[GridFunction]) -> Option<f64>;

    /// Value and nodal gradient of every block.
    fn value_grad(&self, x: &[GridFunction]) -> Option<(f64, Vec<Vec<f64>>)>;

    /// Optional extra feasibility test applied to trial points.
    fn accept(&self, _x: &[GridFunction]) -> bool {
        true
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct DescentOptions {
    pub max_iters: usize,
    /// Stop once the relative decrease per step stays below this.
    pub tol: f64,
    /// Consecutive small steps required before stopping.
    pub patience: usize,
    pub armijo_c: f64,
    pub max_backtracks: usize,
}

impl Default for DescentOptions {
    fn default() -> Self {
        DescentOptions {
            max_iters: 2000,
            tol: 1e-12,
            patience: 3,
            armijo_c: 1e-4,
            max_backtracks: 60,
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct DescentResult {
    pub x: Vec<GridFunction>,
    pub value: f64,
    pub iters: usize,
    pub converged: bool,
}

/// Scale `u` so that `integral |u'|^r = 1`.
pub(crate) fn normalize_gradient_norm(u: &GridFunction, r: f64) -> GridFunction {
    let d = dirichlet_energy(u, r);
    if d > 0.0 {
        u.scaled(d.powf(-1.0 / r))
    } else {
        u.clone()
    }
}

/// Apply the inverse of the weighted stiffness matrix of `u` to `g`.
///
/// Element weights are `|u'|^(r-2)`, floored at a fraction of the largest
/// slope so the matrix stays uniformly positive definite.
pub(crate) fn sobolev_precondition(u: &GridFunction, r: f64, g: &[f64]) -> Vec<f64> {
    let mesh = u.mesh();
    let n = mesh.elements();
    let h = mesh.h();
    let slopes: Vec<f64> = (0..n)
        .map(|e| ((u.node(e + 1) - u.node(e)) / h).abs())
        .collect();
    let smax = slopes.iter().fold(0.0f64, |m, s| m.max(*s));
    let weights: Vec<f64> = if (r - 2.0).abs() < 1e-14 || smax == 0.0 {
        vec![1.0 / h; n]
    } else {
        let floor = 0.05 * smax;
        let cap = smax;
        slopes
            .iter()
            .map(|&s| s.clamp(floor, cap).powf(r - 2.0) / h)
            .collect()
    };
    let m = mesh.interior();
    let diag: Vec<f64> = (0..m).map(|i| weights[i] + weights[i + 1]).collect();
    let off: Vec<f64> = (0..m.saturating_sub(1)).map(|i| -weights[i + 1]).collect();
    let mut rhs = g.to_vec();
    solve_spd_tridiagonal(&diag, &off, &mut rhs);
    rhs
}

fn step_blocks(x: &[GridFunction], d: &[Vec<f64>], tau: f64, exps: &[f64]) -> Vec<GridFunction> {
    x.iter()
        .zip(d)
        .zip(exps)
        .map(|((u, dir), &r)| {
            let vals: Vec<f64> = u
                .values()
                .iter()
                .zip(dir)
                .map(|(a, b)| a + tau * b)
                .collect();
            normalize_gradient_norm(&GridFunction::from_vec(u.mesh(), vals), r)
        })
        .collect()
}

/// Minimize a scale-invariant objective by preconditioned projected gradient
/// descent with Armijo backtracking. `exps[b]` is the Sobolev exponent used
/// for block `b` (normalization and metric).
pub(crate) fn descend(
    obj: &dyn BlockObjective,
    x0: Vec<GridFunction>,
    exps: &[f64],
    opts: &DescentOptions,
) -> Option<DescentResult> {
    let mut x: Vec<GridFunction> = x0
        .iter()
        .zip(exps)
        .map(|(u, &r)| normalize_gradient_norm(u, r))
        .collect();
    let (mut f, mut g) = obj.value_grad(&x)?;
    let mut tau: f64 = 1.0;
    let mut small = 0;
    for it in 0..opts.max_iters {
        let d: Vec<Vec<f64>> = x
            .iter()
            .zip(&g)
            .zip(exps)
            .map(|((u, gb), &r)| {
                sobolev_precondition(u, r, gb)
                    .into_iter()
                    .map(|v| -v)
                    .collect()
            })
            .collect();
        let slope: f64 = g
            .iter()
            .zip(&d)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>())
            .sum();
        if !(slope < 0.0) {
            return Some(DescentResult {
                x,
                value: f,
                iters: it,
                converged: true,
            });
        }
        let mut accepted = None;
        let mut t = (tau * 2.0).min(1e3);
        for _ in 0..opts.max_backtracks {
            let trial = step_blocks(&x, &d, t, exps);
            if obj.accept(&trial) {
                if let Some(ft) = obj.value(&trial) {
                    if ft.is_finite() && ft <= f + opts.armijo_c * t * slope {
                        accepted = Some((trial, ft));
                        break;
                    }
                }
            }
            t *= 0.5;
        }
        let Some((trial, ft)) = accepted else {
            // no further decrease is representable: stationary to working precision
            return Some(DescentResult {
                x,
                value: f,
                iters: it,
                converged: true,
            });
        };
        tau = t;
        let decrease = f - ft;
        x = trial;
        let (fv, gv) = obj.value_grad(&x)?;
        f = fv;
        g = gv;
        if decrease <= opts.tol * f.abs().max(1e-300) {
            small += 1;
            if small >= opts.patience {
                return Some(DescentResult {
                    x,
                    value: f,
                    iters: it + 1,
                    converged: true,
                });
            }
        } else {
            small = 0;
        }
    }
    Some(DescentResult {
        x,
        value: f,
        iters: opts.max_iters,
        converged: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::build_mesh;
    use crate::functionals::{grad_rayleigh, rayleigh};

    struct Rq(f64);

    impl BlockObjective for Rq {
        fn value(&self, x: &[GridFunction]) -> Option<f64> {
            rayleigh(&x[0], self.0).ok()
        }
        fn value_grad(&self, x: &[GridFunction]) -> Option<(f64, Vec<Vec<f64>>)> {
            let (v, g) = grad_rayleigh(&x[0], self.0);
            Some((v, vec![g]))
        }
    }

    #[test]
    fn descent_reaches_discrete_laplacian_eigenvalue() {
        let n = 64;
        let m = build_mesh(n).unwrap();
        let u0 = GridFunction::interpolate(m, |x| x * (1.0 - x) * (1.0 + 3.0 * x));
        let res = descend(&Rq(2.0), vec![u0], &[2.0], &DescentOptions::default()).unwrap();
        let h = 1.0 / n as f64;
        let c = (std::f64::consts::PI * h).cos();
        let exact = 6.0 / (h * h) * (1.0 - c) / (2.0 + c);
        assert!(res.converged);
        assert!((res.value - exact).abs() < 1e-10 * exact, "{} vs {exact}", res.value);
        assert!(res.iters < 200, "{} iterations", res.iters);
    }
}
