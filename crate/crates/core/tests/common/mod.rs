#![allow(dead_code)]

use pqlab::eigen::{EigenOptions, Eigenpairs};
use pqlab::functionals::{coupling, p_functional, q_functional, rayleigh};
use pqlab::{GridFunction, ParameterPair, ProblemConfig, ProblemSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// First Dirichlet eigenvalue of the r-Laplacian on (0, 1) by shooting.
///
/// With `w = |u'|^{r-2} u'` the equation is `u' = |w|^{1/(r-1)} sgn w`,
/// `w' = -lambda |u|^{r-2} u`. For `lambda = 1` and `u(0) = 0`, `u'(0) = 1`
/// the first zero `z` of `u` scales as `lambda^{-1/r}`, so
/// `lambda_1 = z^r`.
pub fn shooting_eigenvalue(r: f64, h: f64) -> f64 {
    let rhs = |u: f64, w: f64| -> (f64, f64) {
        (w.abs().powf(1.0 / (r - 1.0)).copysign(w), -u.abs().powf(r - 1.0).copysign(u))
    };
    let (mut x, mut u, mut w) = (0.0f64, 0.0f64, 1.0f64);
    loop {
        let (k1u, k1w) = rhs(u, w);
        let (k2u, k2w) = rhs(u + 0.5 * h * k1u, w + 0.5 * h * k1w);
        let (k3u, k3w) = rhs(u + 0.5 * h * k2u, w + 0.5 * h * k2w);
        let (k4u, k4w) = rhs(u + h * k3u, w + h * k3w);
        let un = u + h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
        let wn = w + h / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w);
        if x > 0.0 && un <= 0.0 {
            // cubic Hermite interpolation of u on [x, x + h]
            let (du0, du1) = (rhs(u, w).0, rhs(un, wn).0);
            let p = |s: f64| {
                let (s2, s3) = (s * s, s * s * s);
                (2.0 * s3 - 3.0 * s2 + 1.0) * u
                    + (s3 - 2.0 * s2 + s) * h * du0
                    + (-2.0 * s3 + 3.0 * s2) * un
                    + (s3 - s2) * h * du1
            };
            let (mut a, mut b) = (0.0, 1.0);
            for _ in 0..60 {
                let m = 0.5 * (a + b);
                if p(m) > 0.0 {
                    a = m;
                } else {
                    b = m;
                }
            }
            return (x + 0.5 * (a + b) * h).powf(r);
        }
        x += h;
        u = un;
        w = wn;
        assert!(x < 100.0, "no zero found");
    }
}

/// `(r - 1) (2 pi / (r sin(pi / r)))^r`
pub fn closed_form_eigenvalue(r: f64) -> f64 {
    let pi = std::f64::consts::PI;
    (r - 1.0) * (2.0 * pi / (r * (pi / r).sin())).powf(r)
}

pub fn reference(n: usize) -> (ProblemSpec, Eigenpairs) {
    let spec = ProblemConfig::reference(n).build().unwrap();
    let eigs = Eigenpairs::compute(&spec, &EigenOptions::default()).unwrap();
    assert!(coupling(&eigs.first.function, &eigs.second.function, &spec) < 0.0);
    (spec, eigs)
}

/// An instance with unequal exponents.
pub fn asymmetric(n: usize) -> (ProblemSpec, Eigenpairs) {
    let mut cfg = ProblemConfig::reference(n);
    cfg.q = 3.0;
    cfg.beta = 4.0;
    let spec = cfg.build().unwrap();
    let eigs = Eigenpairs::compute(&spec, &EigenOptions::default()).unwrap();
    (spec, eigs)
}

/// An instance whose negative band is too shallow to make `F(phi_1, psi_1)`
/// negative.
pub fn shallow(n: usize) -> (ProblemSpec, Eigenpairs) {
    let mut cfg = ProblemConfig::reference(n);
    cfg.weight.values = vec![1.0, -0.1, 1.0];
    let spec = cfg.build().unwrap();
    let eigs = Eigenpairs::compute(&spec, &EigenOptions::default()).unwrap();
    assert!(coupling(&eigs.first.function, &eigs.second.function, &spec) >= 0.0);
    (spec, eigs)
}

/// Random smooth function vanishing at both ends; may change sign.
pub fn random_function(spec: &ProblemSpec, rng: &mut ChaCha8Rng) -> GridFunction {
    let c: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
    GridFunction::interpolate(spec.mesh(), |x| {
        c.iter()
            .enumerate()
            .map(|(k, ck)| ck * ((k + 1) as f64 * std::f64::consts::PI * x).sin() / (k + 1) as f64)
            .sum()
    })
}

/// Random member `(u, v, sigma)` of `Theta_sigma`: positive pairs with extra
/// mass in the negative band, and `sigma` above both Rayleigh quotients.
pub fn random_theta_member(
    spec: &ProblemSpec,
    eigs: &Eigenpairs,
    rng: &mut ChaCha8Rng,
) -> (GridFunction, GridFunction, ParameterPair) {
    let bump = |x: f64| {
        if x > 0.45 && x < 0.55 {
            (std::f64::consts::PI * (x - 0.45) / 0.1).sin()
        } else {
            0.0
        }
    };
    loop {
        let (a, b) = (rng.gen_range(0.5..4.0), rng.gen_range(0.5..4.0));
        let (ru, rv) = (random_function(spec, rng), random_function(spec, rng));
        let phi = &eigs.first.function;
        let psi = &eigs.second.function;
        let u = GridFunction::interpolate(spec.mesh(), |x| phi.eval(x) + a * bump(x) + 0.3 * ru.eval(x));
        let v = GridFunction::interpolate(spec.mesh(), |x| psi.eval(x) + b * bump(x) + 0.3 * rv.eval(x));
        let sigma = ParameterPair {
            lambda: rayleigh(&u, spec.p).unwrap() * rng.gen_range(1.05..2.0),
            mu: rayleigh(&v, spec.q).unwrap() * rng.gen_range(1.05..2.0),
        };
        if p_functional(&u, sigma.lambda, spec) < 0.0
            && q_functional(&v, sigma.mu, spec) < 0.0
            && coupling(&u, &v, spec) < -1e-8
        {
            return (u, v, sigma);
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Critical point of `t^p P / p + s^q Q / q - t^alpha s^beta F` over
/// `t, s > 0` by Newton in `(ln t, ln s)`, with `P, Q, F` the signed values.
pub fn fiber_critical_point(p_val: f64, q_val: f64, f_val: f64, spec: &ProblemSpec) -> (f64, f64) {
    let (p, q, al, be) = (spec.p, spec.q, spec.alpha, spec.beta);
    // stationarity: t^p P = alpha t^alpha s^beta F and s^q Q = beta t^alpha s^beta F
    let res = |a: f64, b: f64| {
        let m = (al * a + be * b).exp() * f_val;
        ((p * a).exp() * p_val - al * m, (q * b).exp() * q_val - be * m)
    };
    let (mut a, mut b) = (0.0f64, 0.0f64);
    for _ in 0..200 {
        let (r1, r2) = res(a, b);
        let m = (al * a + be * b).exp() * f_val;
        let j11 = p * (p * a).exp() * p_val - al * al * m;
        let j12 = -al * be * m;
        let j21 = -be * al * m;
        let j22 = q * (q * b).exp() * q_val - be * be * m;
        let det = j11 * j22 - j12 * j21;
        let da = (r1 * j22 - r2 * j12) / det;
        let db = (j11 * r2 - j21 * r1) / det;
        let step = 1f64.min(1.0 / da.abs().max(db.abs()).max(1e-300));
        a -= step * da;
        b -= step * db;
        if da.abs().max(db.abs()) < 1e-15 {
            break;
        }
    }
    (a.exp(), b.exp())
}
