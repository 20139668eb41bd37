//! First Dirichlet eigenpair of the one-dimensional r-Laplacian.

use serde::{Deserialize, Serialize};

use crate::domain::{GridFunction, Mesh, ProblemSpec};
use crate::error::{Error, Result};
use crate::functionals::{grad_rayleigh, lr_mass, rayleigh};
use crate::optimize::{descend, BlockObjective, DescentOptions};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenOptions {
    /// Relative decrease of the quotient per step below which descent stops.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            tol: 1e-12,
            max_iters: 50_000,
        }
    }
}

/// `value` is the first eigenvalue; `function` is normalized so that
/// `integral |function|^r = 1` and is positive in the interior.
#[derive(Clone, Debug)]
pub struct EigenPair {
    pub r: f64,
    pub value: f64,
    pub function: GridFunction,
}

/// First eigenpairs of both operators of a system.
#[derive(Clone, Debug)]
pub struct Eigenpairs {
    /// `(lambda_1, phi_1)` of the p-Laplacian.
    pub first: EigenPair,
    /// `(mu_1, psi_1)` of the q-Laplacian.
    pub second: EigenPair,
}

impl Eigenpairs {
    pub fn compute(spec: &ProblemSpec, opts: &EigenOptions) -> Result<Self> {
        let first = first_eigenpair(spec.p, spec.mesh(), opts)?;
        let second = if spec.q == spec.p {
            first.clone()
        } else {
            first_eigenpair(spec.q, spec.mesh(), opts)?
        };
        Ok(Eigenpairs { first, second })
    }

    pub fn lambda1(&self) -> f64 {
        self.first.value
    }

    pub fn mu1(&self) -> f64 {
        self.second.value
    }

    /// Eigenpairs of the system with the two equations exchanged.
    pub fn swapped(&self) -> Self {
        Eigenpairs {
            first: self.second.clone(),
            second: self.first.clone(),
        }
    }
}

struct Rayleigh(f64);

impl BlockObjective for Rayleigh {
    fn value(&self, x: &[GridFunction]) -> Option<f64> {
        rayleigh(&x[0], self.0).ok()
    }

    fn value_grad(&self, x: &[GridFunction]) -> Option<(f64, Vec<Vec<f64>>)> {
        let (v, g) = grad_rayleigh(&x[0], self.0);
        v.is_finite().then(|| (v, vec![g]))
    }
}

/// Minimize the Rayleigh quotient `integral |u'|^r / integral |u|^r`
/// starting from the interpolant of `x(1-x)`.
pub fn first_eigenpair(r: f64, mesh: Mesh, opts: &EigenOptions) -> Result<EigenPair> {
    if !(r > 1.0 && r.is_finite()) {
        return Err(Error::invalid(format!("eigen exponent must exceed 1, got {r}")));
    }
    let u0 = GridFunction::interpolate(mesh, |x| x * (1.0 - x));
    let dopts = DescentOptions {
        max_iters: opts.max_iters,
        tol: opts.tol,
        ..DescentOptions::default()
    };
    let res = descend(&Rayleigh(r), vec![u0], &[r], &dopts)
        .ok_or_else(|| Error::numerical("Rayleigh quotient undefined along descent"))?;
    if !res.converged {
        return Err(Error::not_converged("first eigenpair", res.iters));
    }
    let mut u = res.x.into_iter().next().expect("one block");
    if u.values().iter().sum::<f64>() < 0.0 {
        u = u.scaled(-1.0);
    }
    let u = u.scaled(lr_mass(&u, r).powf(-1.0 / r));
    if !(u.min_interior() > 0.0) {
        return Err(Error::numerical("first eigenfunction is not positive"));
    }
    log::debug!("eigen r={r}: value {} after {} iterations", res.value, res.iters);
    Ok(EigenPair {
        r,
        value: rayleigh(&u, r)?,
        function: u,
    })
}
