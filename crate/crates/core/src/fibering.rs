//! Fiber scalings and the reduced functional.
//!
//! Along the two-parameter fiber `(t, s) -> Phi(t u, s v)` with
//! `P_lambda(u) < 0`, `Q_mu(v) < 0` and `F(u, v) < 0` there is exactly one
//! critical point `(t_sigma, s_sigma)`. It solves
//!
//! ```text
//! t^p P = α t^α s^β F,    s^q Q = β t^α s^β F
//! ```
//!
//! which is linear in `(ln t, ln s)` with determinant `-p q d`. The value of
//! `Phi` there is the reduced functional `J`.

use serde::{Deserialize, Serialize};

use crate::domain::{GridFunction, ProblemSpec};
use crate::error::{Error, Result};
use crate::functionals::{
    coupling, coupling_scale, dirichlet_energy, energy, grad_coupling, grad_dirichlet,
    grad_lr_mass, lr_mass, p_functional, q_functional, ParameterPair,
};

/// Guard on `|P|`, `|Q|`, `|F|` below which the closed forms are refused.
pub const DEGENERACY_GUARD: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberingScales {
    pub t: f64,
    pub s: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NehariClass {
    NPlus,
    NZero,
    NMinus,
    NotApplicable,
}

/// Signs of `(P, Q, F)` and whether all three are strictly negative.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThetaMembership {
    pub sign_p: i8,
    pub sign_q: i8,
    pub sign_f: i8,
    pub in_theta: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    /// Scaled central-difference gradient of `(t, s) -> Phi(t u, s v)` at
    /// the fiber critical point, relative to `|J|`.
    pub stationarity_residual: f64,
    pub j_direct: f64,
    pub j_closed_form: f64,
    pub j2_value: f64,
    pub j3_value: f64,
}

impl ConsistencyReport {
    /// Largest pairwise relative gap among the four evaluations of `J`.
    pub fn max_relative_gap(&self) -> f64 {
        let v = [self.j_direct, self.j_closed_form, self.j2_value, self.j3_value];
        let mut g = 0.0f64;
        for i in 0..4 {
            for j in i + 1..4 {
                g = g.max((v[i] - v[j]).abs() / v[i].abs().max(v[j].abs()));
            }
        }
        g
    }
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

pub fn theta_membership(
    u: &GridFunction,
    v: &GridFunction,
    sigma: ParameterPair,
    spec: &ProblemSpec,
) -> Result<ThetaMembership> {
    if u.is_zero() || v.is_zero() {
        return Err(Error::invalid("Theta membership of a zero component"));
    }
    let sp = sign(p_functional(u, sigma.lambda, spec));
    let sq = sign(q_functional(v, sigma.mu, spec));
    let sf = sign(coupling(u, v, spec));
    Ok(ThetaMembership {
        sign_p: sp,
        sign_q: sq,
        sign_f: sf,
        in_theta: sp < 0 && sq < 0 && sf < 0,
    })
}

/// Solve the stationarity system from the magnitudes `|P|`, `|Q|`, `|F|`.
pub(crate) fn scales_from_values(pa: f64, qa: f64, fa: f64, spec: &ProblemSpec) -> FiberingScales {
    let (p, q, al, be) = (spec.p, spec.q, spec.alpha, spec.beta);
    let l1 = (pa / (al * fa)).ln();
    let l2 = (qa / (be * fa)).ln();
    let det = -p * q * spec.d();
    let x = ((be - q) * l1 - be * l2) / det;
    let y = ((al - p) * l2 - al * l1) / det;
    FiberingScales { t: x.exp(), s: y.exp() }
}

/// Closed-form constant `C` of the reduced functional.
pub fn reduced_constant(spec: &ProblemSpec) -> f64 {
    let d = spec.d();
    d * spec.alpha.powf(-spec.alpha / (spec.p * d)) * spec.beta.powf(-spec.beta / (spec.q * d))
}

/// `-C |P|^{α/(pd)} |Q|^{β/(qd)} / |F|^{1/d}`.
pub(crate) fn reduced_from_values(pa: f64, qa: f64, fa: f64, spec: &ProblemSpec) -> f64 {
    let d = spec.d();
    let lg = reduced_constant(spec).ln() + spec.alpha / (spec.p * d) * pa.ln()
        + spec.beta / (spec.q * d) * qa.ln()
        - fa.ln() / d;
    -lg.exp()
}

struct Magnitudes {
    p: f64,
    q: f64,
    f: f64,
}

fn theta_magnitudes(
    u: &GridFunction,
    v: &GridFunction,
    sigma: ParameterPair,
    spec: &ProblemSpec,
) -> Result<Magnitudes> {
    let p = p_functional(u, sigma.lambda, spec);
    let q = q_functional(v, sigma.mu, spec);
    let f = coupling(u, v, spec);
    if !(p < 0.0 && q < 0.0 && f < 0.0) {
        return Err(Error::invalid(format!(
            "pair is not in Theta: P={p:e}, Q={q:e}, F={f:e}"
        )));
    }
    if p.abs() < DEGENERACY_GUARD || q.abs() < DEGENERACY_GUARD || f.abs() < DEGENERACY_GUARD {
        return Err(Error::Degenerate(format!(
            "fiber closed forms degenerate: P={p:e}, Q={q:e}, F={f:e}"
        )));
    }
    Ok(Magnitudes {
        p: -p,
        q: -q,
        f: -f,
    })
}

pub fn fibering_scales(
    u: &GridFunction,
    v: &GridFunction,
    sigma: ParameterPair,
    spec: &ProblemSpec,
) -> Result<FiberingScales> {
    let m = theta_magnitudes(u, v, sigma, spec)?;
    Ok(scales_from_values(m.p, m.q, m.f, spec))
}

/// `J_sigma(u, v) = Phi_sigma(t_sigma u, s_sigma v)`, evaluated directly.
pub fn reduced_functional(
    u: &GridFunction,
    v: &GridFunction,
    sigma: ParameterPair,
    spec: &ProblemSpec,
) -> Result<f64> {
    let sc = fibering_scales(u, v, sigma, spec)?;
    Ok(energy(&u.scaled(sc.t), &v.scaled(sc.s), sigma, spec).phi)
}

/// Closed-form `J` and its nodal gradient; `None` outside `Theta_sigma`.
pub(crate) fn reduced_value_grad(
    u: &GridFunction,
    v: &GridFunction,
    sigma: ParameterPair,
    spec: &ProblemSpec,
) -> Option<(f64, Vec<f64>, Vec<f64>)> {
    let m = theta_magnitudes(u, v, sigma, spec).ok()?;
    let j = reduced_from_values(m.p, m.q, m.f, spec);
    let d = spec.d();
    let (fu, fv) = grad_coupling(u, v, spec);
    let du = grad_dirichlet(u, spec.p);
    let mu_ = grad_lr_mass(u, spec.p);
    let dv = grad_dirichlet(v, spec.q);
    let mv = grad_lr_mass(v, spec.q);
    // d ln|J| = a dP/P + b dQ/Q - c dF/F with P, Q, F < 0
    let a = spec.alpha / (spec.p * d) / -m.p;
    let b = spec.beta / (spec.q * d) / -m.q;
    let c = 1.0 / d / -m.f;
    let gu = (0..du.len())
        .map(|i| j * (a * (du[i] - sigma.lambda * mu_[i]) - c * fu[i]))
        .collect();
    let gv = (0..dv.len())
        .map(|i| j * (b * (dv[i] - sigma.mu * mv[i]) - c * fv[i]))
        .collect();
    Some((j, gu, gv))
}

/// Classify by the signs of `(P, Q, F)`; values within `tol` times their
/// natural scale count as zero.
pub fn nehari_classify(
    u: &GridFunction,
    v: &GridFunction,
    sigma: ParameterPair,
    spec: &ProblemSpec,
    tol: f64,
) -> NehariClass {
    let band = |x: f64, scale: f64| -> i8 {
        if x.abs() <= tol * scale {
            0
        } else {
            sign(x)
        }
    };
    let sp = band(
        p_functional(u, sigma.lambda, spec),
        dirichlet_energy(u, spec.p).max(sigma.lambda.abs() * lr_mass(u, spec.p)),
    );
    let sq = band(
        q_functional(v, sigma.mu, spec),
        dirichlet_energy(v, spec.q).max(sigma.mu.abs() * lr_mass(v, spec.q)),
    );
    let sf = band(coupling(u, v, spec), coupling_scale(u, v, spec));
    match (sp, sq, sf) {
        (-1, -1, -1) => NehariClass::NPlus,
        (0, 0, 0) => NehariClass::NZero,
        (1, 1, 1) => NehariClass::NMinus,
        _ => NehariClass::NotApplicable,
    }
}

pub fn fibering_consistency(
    u: &GridFunction,
    v: &GridFunction,
    sigma: ParameterPair,
    spec: &ProblemSpec,
) -> Result<ConsistencyReport> {
    let m = theta_magnitudes(u, v, sigma, spec)?;
    let sc = scales_from_values(m.p, m.q, m.f, spec);
    let d = spec.d();
    let phi = |t: f64, s: f64| energy(&u.scaled(t), &v.scaled(s), sigma, spec).phi;
    let j_direct = phi(sc.t, sc.s);
    let ht = 1e-6 * sc.t;
    let hs = 1e-6 * sc.s;
    let dt = (phi(sc.t + ht, sc.s) - phi(sc.t - ht, sc.s)) / (2.0 * ht);
    let ds = (phi(sc.t, sc.s + hs) - phi(sc.t, sc.s - hs)) / (2.0 * hs);
    let stationarity_residual = (sc.t * dt).abs().max((sc.s * ds).abs()) / j_direct.abs();
    Ok(ConsistencyReport {
        stationarity_residual,
        j_direct,
        j_closed_form: reduced_from_values(m.p, m.q, m.f, spec),
        j2_value: -(d / spec.alpha) * sc.t.powf(spec.p) * m.p,
        j3_value: -(d / spec.beta) * sc.s.powf(spec.q) * m.q,
    })
}
