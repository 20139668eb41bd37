//! Meshes, grid functions, the piecewise-constant weight and the standing
//! hypotheses on the exponents.
//!
//! The domain is the unit interval with homogeneous Dirichlet conditions.
//! Unknowns are continuous piecewise-linear functions stored by their
//! interior nodal values; the two boundary nodes are implicitly zero.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform mesh of `[0, 1]` with `n` elements.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    n: usize,
    h: f64,
}

impl Mesh {
    pub const MIN_ELEMENTS: usize = 4;

    pub fn new(n: usize) -> Result<Self> {
        if n < Self::MIN_ELEMENTS {
            return Err(Error::invalid(format!(
                "mesh needs at least {} elements, got {n}",
                Self::MIN_ELEMENTS
            )));
        }
        Ok(Mesh {
            n,
            h: 1.0 / n as f64,
        })
    }

    /// Number of elements.
    pub fn elements(&self) -> usize {
        self.n
    }

    /// Number of interior (free) nodes.
    pub fn interior(&self) -> usize {
        self.n - 1
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Coordinate of node `j`, `0 <= j <= n`.
    pub fn node_x(&self, j: usize) -> f64 {
        j as f64 / self.n as f64
    }
}

/// Build a uniform mesh; `n >= 4`.
pub fn build_mesh(n: usize) -> Result<Mesh> {
    Mesh::new(n)
}

/// A Dirichlet-zero piecewise-linear function on a [`Mesh`].
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    mesh: Mesh,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(mesh: Mesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.interior() {
            return Err(Error::invalid(format!(
                "grid function needs {} interior values, got {}",
                mesh.interior(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("grid function values must be finite"));
        }
        Ok(GridFunction { mesh, values })
    }

    /// Skips validation; callers guarantee length and finiteness.
    pub(crate) fn from_vec(mesh: Mesh, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), mesh.interior());
        GridFunction { mesh, values }
    }

    pub fn zeros(mesh: Mesh) -> Self {
        GridFunction {
            mesh,
            values: vec![0.0; mesh.interior()],
        }
    }

    /// Nodal interpolant of `f` at the interior nodes.
    pub fn interpolate(mesh: Mesh, f: impl Fn(f64) -> f64) -> Self {
        let values = (1..mesh.elements()).map(|j| f(mesh.node_x(j))).collect();
        GridFunction { mesh, values }
    }

    pub fn mesh(&self) -> Mesh {
        self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[cfg(test)]
    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Value at node `j` including the boundary nodes, which are exactly zero.
    #[inline]
    pub fn node(&self, j: usize) -> f64 {
        if j == 0 || j >= self.mesh.elements() {
            0.0
        } else {
            self.values[j - 1]
        }
    }

    /// Evaluate the piecewise-linear interpolant at `x` in `[0, 1]`.
    pub fn eval(&self, x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            return 0.0;
        }
        let n = self.mesh.elements();
        let pos = x * n as f64;
        let e = (pos.floor() as usize).min(n - 1);
        let xi = pos - e as f64;
        self.node(e) * (1.0 - xi) + self.node(e + 1) * xi
    }

    pub fn scaled(&self, c: f64) -> Self {
        GridFunction {
            mesh: self.mesh,
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    pub fn abs(&self) -> Self {
        GridFunction {
            mesh: self.mesh,
            values: self.values.iter().map(|v| v.abs()).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn min_interior(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn dot(&self, other: &GridFunction) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }

    /// `(x_j, value_j)` for every node including both boundary nodes.
    pub fn nodal_profile(&self) -> Vec<(f64, f64)> {
        (0..=self.mesh.elements())
            .map(|j| (self.mesh.node_x(j), self.node(j)))
            .collect()
    }
}

/// Which of the two admissible structures the zero set of the weight has.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hypothesis {
    /// The zero set of the weight has measure zero.
    F1,
    /// The zero set has positive measure and some connected component of the
    /// interior of `{f >= 0}` meets both `{f = 0}` and `{f > 0}`.
    F2,
}

impl std::str::FromStr for Hypothesis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "F1" => Ok(Hypothesis::F1),
            "F2" => Ok(Hypothesis::F2),
            other => Err(Error::invalid(format!("unknown weight hypothesis `{other}`"))),
        }
    }
}

/// Piecewise-constant sign-changing weight on `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightFunction {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
    hypothesis: Hypothesis,
}

impl WeightFunction {
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn hypothesis(&self) -> Hypothesis {
        self.hypothesis
    }

    /// Value on the subinterval containing `x`; right-continuous except at 1.
    pub fn value_at(&self, x: f64) -> f64 {
        let k = self.breakpoints[1..]
            .iter()
            .position(|&b| x < b)
            .unwrap_or(self.values.len() - 1);
        self.values[k]
    }

    /// Exact integral over `[0, 1]`.
    pub fn integral(&self) -> f64 {
        self.values
            .iter()
            .zip(self.breakpoints.windows(2))
            .map(|(v, w)| v * (w[1] - w[0]))
            .sum()
    }

    /// Copy with the strictly negative values multiplied by `factor`.
    pub fn deepen_negative(&self, factor: f64) -> Self {
        WeightFunction {
            breakpoints: self.breakpoints.clone(),
            values: self
                .values
                .iter()
                .map(|&v| if v < 0.0 { v * factor } else { v })
                .collect(),
            hypothesis: self.hypothesis,
        }
    }

    /// Connected components of the interior of `{f >= 0}` on which `f` is
    /// somewhere positive, as `(start, end)` intervals.
    pub fn nonnegative_components(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let mut start = None;
        let mut has_pos = false;
        for (k, &v) in self.values.iter().enumerate() {
            if v >= 0.0 {
                start.get_or_insert(self.breakpoints[k]);
                has_pos |= v > 0.0;
            } else {
                if let (Some(a), true) = (start, has_pos) {
                    out.push((a, self.breakpoints[k]));
                }
                start = None;
                has_pos = false;
            }
        }
        if let (Some(a), true) = (start, has_pos) {
            out.push((a, 1.0));
        }
        out
    }

    /// Derive the hypothesis satisfied by a partition, if any.
    fn derive_hypothesis(breakpoints: &[f64], values: &[f64]) -> Option<Hypothesis> {
        let zero_len: f64 = values
            .iter()
            .zip(breakpoints.windows(2))
            .filter(|(v, _)| **v == 0.0)
            .map(|(_, w)| w[1] - w[0])
            .sum();
        if zero_len == 0.0 {
            return Some(Hypothesis::F1);
        }
        // Maximal runs of consecutive nonnegative subintervals are the
        // connected components of int{f >= 0}.
        let mut has_zero = false;
        let mut has_pos = false;
        for &v in values.iter().chain(std::iter::once(&-1.0)) {
            if v >= 0.0 {
                has_zero |= v == 0.0;
                has_pos |= v > 0.0;
            } else {
                if has_zero && has_pos {
                    return Some(Hypothesis::F2);
                }
                has_zero = false;
                has_pos = false;
            }
        }
        None
    }
}

/// Validate a piecewise-constant weight against the sign requirements and the
/// declared hypothesis.
pub fn build_weight(
    breakpoints: Vec<f64>,
    values: Vec<f64>,
    hypothesis: Hypothesis,
) -> Result<WeightFunction> {
    if breakpoints.len() != values.len() + 1 || values.is_empty() {
        return Err(Error::invalid(format!(
            "weight needs len(breakpoints) = len(values) + 1, got {} and {}",
            breakpoints.len(),
            values.len()
        )));
    }
    if breakpoints[0] != 0.0 || *breakpoints.last().unwrap() != 1.0 {
        return Err(Error::invalid("weight breakpoints must start at 0 and end at 1"));
    }
    if breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid("weight breakpoints must be strictly increasing"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("weight values must be finite"));
    }
    if !values.iter().any(|&v| v > 0.0) {
        return Err(Error::invalid("positive part of the weight vanishes identically"));
    }
    if !values.iter().any(|&v| v < 0.0) {
        return Err(Error::invalid("negative part of the weight vanishes identically"));
    }
    match WeightFunction::derive_hypothesis(&breakpoints, &values) {
        Some(h) if h == hypothesis => Ok(WeightFunction {
            breakpoints,
            values,
            hypothesis,
        }),
        Some(h) => Err(Error::invalid(format!(
            "declared hypothesis {hypothesis:?} but the partition satisfies {h:?}"
        ))),
        None => Err(Error::invalid(
            "zero set has positive length but no component of int{f >= 0} meets both {f = 0} and {f > 0}",
        )),
    }
}

/// Outcome of checking the exponent conditions.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExponentReport {
    /// `alpha/p + beta/q > 1`
    pub superhomogeneous: bool,
    /// `alpha > p` or `beta > q`
    pub superlinear: bool,
    /// Subcritical growth. Always true on an interval: `W^{1,r}` embeds in
    /// the continuous functions, so the critical exponents are infinite.
    pub subcritical: bool,
    pub d: f64,
    pub note: &'static str,
}

impl ExponentReport {
    pub fn admissible(&self) -> bool {
        self.superhomogeneous && self.superlinear && self.subcritical && self.d > 0.0
    }
}

pub fn validate_exponents(p: f64, q: f64, alpha: f64, beta: f64) -> ExponentReport {
    let d = alpha / p + beta / q - 1.0;
    ExponentReport {
        superhomogeneous: d > 0.0,
        superlinear: alpha > p || beta > q,
        subcritical: true,
        d,
        note: "one-dimensional domain: Sobolev critical exponents are infinite",
    }
}

/// A quadrature node used for integrals against the weight.
#[derive(Clone, Copy, Debug)]
pub(crate) struct WeightedPoint {
    pub elem: usize,
    /// Local coordinate in `[0, 1]` inside the element.
    pub xi: f64,
    /// Quadrature weight including the element width.
    pub w: f64,
    pub f: f64,
}

pub(crate) const GAUSS2: [f64; 2] = [
    0.5 - 0.288_675_134_594_812_9,
    0.5 + 0.288_675_134_594_812_9,
];

/// Two-point Gauss rule on every piece of every element, where elements are
/// split at the weight breakpoints that fall strictly inside them.
fn weighted_points(mesh: Mesh, weight: &WeightFunction) -> Vec<WeightedPoint> {
    let n = mesh.elements();
    let h = mesh.h();
    let mut out = Vec::with_capacity(2 * n + 2 * weight.values.len());
    for e in 0..n {
        let x0 = mesh.node_x(e);
        let x1 = mesh.node_x(e + 1);
        let mut cuts = vec![0.0];
        for &b in &weight.breakpoints[1..weight.breakpoints.len() - 1] {
            if b > x0 && b < x1 {
                cuts.push((b - x0) / h);
            }
        }
        cuts.push(1.0);
        for piece in cuts.windows(2) {
            let (a, b) = (piece[0], piece[1]);
            let mid = x0 + 0.5 * (a + b) * h;
            let f = weight.value_at(mid);
            for &g in &GAUSS2 {
                out.push(WeightedPoint {
                    elem: e,
                    xi: a + (b - a) * g,
                    w: 0.5 * (b - a) * h,
                    f,
                });
            }
        }
    }
    out
}

/// Exponents, weight and mesh of one instance of the system.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub p: f64,
    pub q: f64,
    pub alpha: f64,
    pub beta: f64,
    weight: WeightFunction,
    mesh: Mesh,
    d: f64,
    points: Vec<WeightedPoint>,
}

impl ProblemSpec {
    pub fn new(
        p: f64,
        q: f64,
        alpha: f64,
        beta: f64,
        weight: WeightFunction,
        mesh: Mesh,
    ) -> Result<Self> {
        if !(p > 1.0 && q > 1.0 && p.is_finite() && q.is_finite()) {
            return Err(Error::invalid(format!("need 1 < p, q < inf, got p={p}, q={q}")));
        }
        if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
            return Err(Error::invalid("alpha and beta must be positive and finite"));
        }
        let report = validate_exponents(p, q, alpha, beta);
        if !report.admissible() {
            return Err(Error::invalid(format!(
                "exponents (p, q, alpha, beta) = ({p}, {q}, {alpha}, {beta}) are not admissible: {report:?}"
            )));
        }
        let points = weighted_points(mesh, &weight);
        Ok(ProblemSpec {
            p,
            q,
            alpha,
            beta,
            weight,
            mesh,
            d: report.d,
            points,
        })
    }

    pub fn weight(&self) -> &WeightFunction {
        &self.weight
    }

    pub fn mesh(&self) -> Mesh {
        self.mesh
    }

    /// `alpha/p + beta/q - 1`
    pub fn d(&self) -> f64 {
        self.d
    }

    /// Whether `alpha > p` and `beta > q`, the exponent range in which
    /// negative-energy minimizers on the extremal curve are known to exist.
    pub fn on_curve_theory_applies(&self) -> bool {
        self.alpha > self.p && self.beta > self.q
    }

    pub(crate) fn weighted_points(&self) -> &[WeightedPoint] {
        &self.points
    }

    /// The same system with the roles of the two equations exchanged.
    pub fn swapped(&self) -> Self {
        ProblemSpec {
            p: self.q,
            q: self.p,
            alpha: self.beta,
            beta: self.alpha,
            weight: self.weight.clone(),
            mesh: self.mesh,
            d: self.d,
            points: self.points.clone(),
        }
    }

    /// Same instance on a different mesh.
    pub fn with_mesh(&self, mesh: Mesh) -> Result<Self> {
        ProblemSpec::new(self.p, self.q, self.alpha, self.beta, self.weight.clone(), mesh)
    }

    pub fn with_weight(&self, weight: WeightFunction) -> Result<Self> {
        ProblemSpec::new(self.p, self.q, self.alpha, self.beta, weight, self.mesh)
    }

    /// Parse and validate a JSON configuration.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ProblemConfig = serde_json::from_str(text)?;
        cfg.build()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::invalid(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::from_json(&text)
    }

    pub fn to_config(&self) -> ProblemConfig {
        ProblemConfig {
            p: self.p,
            q: self.q,
            alpha: self.alpha,
            beta: self.beta,
            n: self.mesh.elements(),
            weight: WeightConfig {
                breakpoints: self.weight.breakpoints.clone(),
                values: self.weight.values.clone(),
                hypothesis: self.weight.hypothesis,
            },
        }
    }
}

/// On-disk form of a [`ProblemSpec`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub p: f64,
    pub q: f64,
    pub alpha: f64,
    pub beta: f64,
    pub n: usize,
    pub weight: WeightConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightConfig {
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
    pub hypothesis: Hypothesis,
}

impl ProblemConfig {
    pub fn build(&self) -> Result<ProblemSpec> {
        let weight = build_weight(
            self.weight.breakpoints.clone(),
            self.weight.values.clone(),
            self.weight.hypothesis,
        )?;
        ProblemSpec::new(
            self.p,
            self.q,
            self.alpha,
            self.beta,
            weight,
            Mesh::new(self.n)?,
        )
    }
}

impl ProblemConfig {
    /// The shipped reference instance: `p = q = 2`, `alpha = beta = 3`, a
    /// negative band `[0.45, 0.55]` of depth 4 between two unit bands.
    pub fn reference(n: usize) -> Self {
        ProblemConfig {
            p: 2.0,
            q: 2.0,
            alpha: 3.0,
            beta: 3.0,
            n,
            weight: WeightConfig {
                breakpoints: vec![0.0, 0.45, 0.55, 1.0],
                values: vec![1.0, -4.0, 1.0],
                hypothesis: Hypothesis::F1,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mesh_sizes() {
        let m = build_mesh(4).unwrap();
        assert_eq!(m.h(), 0.25);
        assert_eq!(m.interior(), 3);
        let m = build_mesh(512).unwrap();
        assert_eq!(m.h(), 1.0 / 512.0);
        assert_eq!(m.h() * 512.0, 1.0);
        assert!(build_mesh(2).is_err());
    }

    #[test]
    fn grid_function_boundary_is_zero() {
        let m = build_mesh(8).unwrap();
        let u = GridFunction::interpolate(m, |x| 1.0 + x);
        assert_eq!(u.node(0), 0.0);
        assert_eq!(u.node(8), 0.0);
        assert_eq!(u.eval(0.0), 0.0);
        assert_eq!(u.eval(1.0), 0.0);
        assert_eq!(u.values().len(), 7);
        assert!(GridFunction::new(m, vec![0.0; 6]).is_err());
        assert!(GridFunction::new(m, vec![f64::NAN; 7]).is_err());
    }

    #[test]
    fn weight_examples() {
        let w = build_weight(vec![0.0, 0.5, 1.0], vec![1.0, -1.0], Hypothesis::F1).unwrap();
        assert_eq!(w.hypothesis(), Hypothesis::F1);
        let w = build_weight(
            vec![0.0, 0.3, 0.6, 1.0],
            vec![1.0, 0.0, -1.0],
            Hypothesis::F2,
        )
        .unwrap();
        assert_eq!(w.value_at(0.45), 0.0);
        assert!(build_weight(vec![0.0, 0.5, 1.0], vec![1.0, 2.0], Hypothesis::F1).is_err());
        assert!(build_weight(vec![0.0, 0.5, 1.0], vec![-1.0, -2.0], Hypothesis::F1).is_err());
        // declared flag inconsistent with data
        assert!(build_weight(vec![0.0, 0.5, 1.0], vec![1.0, -1.0], Hypothesis::F2).is_err());
        assert!(build_weight(
            vec![0.0, 0.3, 0.6, 1.0],
            vec![1.0, 0.0, -1.0],
            Hypothesis::F1
        )
        .is_err());
        // zero band isolated between negative bands: neither hypothesis
        assert!(build_weight(
            vec![0.0, 0.2, 0.4, 0.6, 1.0],
            vec![1.0, -1.0, 0.0, -1.0],
            Hypothesis::F2
        )
        .is_err());
        assert!(build_weight(vec![0.0, 0.6, 0.5, 1.0], vec![1.0, 0.0, -1.0], Hypothesis::F2).is_err());
    }

    #[test]
    fn nonnegative_components() {
        let w = build_weight(
            vec![0.0, 0.45, 0.55, 1.0],
            vec![1.0, -4.0, 1.0],
            Hypothesis::F1,
        )
        .unwrap();
        assert_eq!(w.nonnegative_components(), vec![(0.0, 0.45), (0.55, 1.0)]);
        let w = build_weight(
            vec![0.0, 0.2, 0.3, 0.6, 1.0],
            vec![-1.0, 0.0, 2.0, -1.0],
            Hypothesis::F2,
        )
        .unwrap();
        assert_eq!(w.nonnegative_components(), vec![(0.2, 0.6)]);
    }

    #[test]
    fn exponent_examples() {
        let r = validate_exponents(2.0, 2.0, 3.0, 3.0);
        assert!(r.admissible());
        assert_eq!(r.d, 2.0);
        let r = validate_exponents(2.0, 2.0, 1.0, 1.0);
        assert!(!r.admissible());
        let r = validate_exponents(2.0, 3.0, 2.5, 1.0);
        assert!(r.admissible());
        assert!((r.d - (2.5 / 2.0 + 1.0 / 3.0 - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn weighted_points_cover_breakpoints() {
        let w = build_weight(
            vec![0.0, 0.45, 0.55, 1.0],
            vec![1.0, -4.0, 1.0],
            Hypothesis::F1,
        )
        .unwrap();
        let spec = ProblemSpec::new(2.0, 2.0, 3.0, 3.0, w.clone(), build_mesh(512).unwrap()).unwrap();
        let integral: f64 = spec.weighted_points().iter().map(|p| p.w * p.f).sum();
        assert!((integral - w.integral()).abs() <= 1e-12 * w.integral().abs());
        assert!((w.integral() - (0.9 - 0.4)).abs() < 1e-15);
    }

    #[test]
    fn config_round_trip() {
        let text = r#"{"p":2,"q":2,"alpha":3,"beta":3,"n":64,
            "weight":{"breakpoints":[0,0.45,0.55,1],"values":[1,-4,1],"hypothesis":"F1"}}"#;
        let spec = ProblemSpec::from_json(text).unwrap();
        assert_eq!(spec.mesh().elements(), 64);
        let back = serde_json::to_string(&spec.to_config()).unwrap();
        let again = ProblemSpec::from_json(&back).unwrap();
        assert_eq!(again.to_config(), spec.to_config());
        assert!(ProblemSpec::from_json(r#"{"p":2}"#).is_err());
    }
}
