//! Banded LU factorization with partial pivoting.
//!
//! Storage keeps `kl` extra superdiagonals per row for the fill-in produced
//! by row interchanges, as in LAPACK's `gbtrf`. Multipliers live in a
//! separate array because later interchanges never touch them.

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub(crate) struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub(crate) fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        BandMatrix {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.ku + self.kl);
        i * self.width + (j + self.kl - i)
    }

    #[inline]
    pub(crate) fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(j + self.kl >= i && j <= i + self.ku, "({i},{j}) outside band");
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    #[cfg(test)]
    pub(crate) fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.data[self.idx(i, j)] * x[j]).sum()
            })
            .collect()
    }

    pub(crate) fn factor(mut self) -> Result<BandLu> {
        let n = self.n;
        let kl = self.kl;
        let span = self.ku + self.kl;
        let mut piv = vec![0usize; n];
        let mut lmul = vec![0.0; n * kl.max(1)];
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.idx(k, k)].abs();
            for i in k + 1..=last {
                let a = self.data[self.idx(i, k)].abs();
                if a > best {
                    best = a;
                    p = i;
                }
            }
            if !(best > 1e-300 && best > 1e-18 * scale) {
                return Err(Error::numerical(format!("singular band matrix at column {k}")));
            }
            piv[k] = p;
            let cmax = (k + span).min(n - 1);
            if p != k {
                for j in k..=cmax {
                    let a = self.idx(k, j);
                    let b = self.idx(p, j);
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.idx(k, k)];
            for i in k + 1..=last {
                let ik = self.idx(i, k);
                let m = self.data[ik] / pivot;
                self.data[ik] = 0.0;
                lmul[k * kl + (i - k - 1)] = m;
                if m != 0.0 {
                    for j in k + 1..=cmax {
                        let kj = self.data[self.idx(k, j)];
                        let ij = self.idx(i, j);
                        self.data[ij] -= m * kj;
                    }
                }
            }
        }
        Ok(BandLu {
            m: self,
            piv,
            lmul,
        })
    }
}

#[derive(Clone, Debug)]
pub(crate) struct BandLu {
    m: BandMatrix,
    piv: Vec<usize>,
    lmul: Vec<f64>,
}

impl BandLu {
    pub(crate) fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.m.n;
        let kl = self.m.kl;
        let span = self.m.ku + kl;
        let mut x = b.to_vec();
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                x.swap(k, p);
            }
            let xk = x[k];
            if xk != 0.0 {
                let last = (k + kl).min(n - 1);
                for i in k + 1..=last {
                    x[i] -= self.lmul[k * kl + (i - k - 1)] * xk;
                }
            }
        }
        for i in (0..n).rev() {
            let cmax = (i + span).min(n - 1);
            let mut s = x[i];
            for j in i + 1..=cmax {
                s -= self.m.data[self.m.idx(i, j)] * x[j];
            }
            x[i] = s / self.m.data[self.m.idx(i, i)];
        }
        x
    }
}

/// Solve a symmetric positive definite tridiagonal system in place
/// (Thomas algorithm). `diag` and `off` are the main and first off diagonal.
pub(crate) fn solve_spd_tridiagonal(diag: &[f64], off: &[f64], rhs: &mut [f64]) {
    let n = diag.len();
    if n == 0 {
        return;
    }
    let mut c = vec![0.0; n];
    let mut beta = diag[0];
    rhs[0] /= beta;
    for i in 1..n {
        c[i - 1] = off[i - 1] / beta;
        beta = diag[i] - off[i - 1] * c[i - 1];
        rhs[i] = (rhs[i] - off[i - 1] * rhs[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn band_lu_matches_matvec() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(n, kl, ku) in &[(1, 1, 1), (5, 1, 2), (40, 3, 3), (33, 2, 0)] {
            let mut a = BandMatrix::zeros(n, kl, ku);
            for i in 0..n {
                for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                    // weak diagonal forces pivoting; triangular cases keep it well conditioned
                    let v: f64 = rng.gen_range(-1.0..1.0);
                    let weak = i == j && ku > 0;
                    a.add(i, j, if weak { 0.01 * v } else if i == j { 1.0 + v.abs() } else { v });
                }
            }
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b = a.mul_vec(&x);
            let lu = a.clone().factor().unwrap();
            let y = lu.solve(&b);
            for (xi, yi) in x.iter().zip(&y) {
                assert!((xi - yi).abs() < 1e-8, "{xi} vs {yi}");
            }
        }
    }

    #[test]
    fn singular_is_reported() {
        let a = BandMatrix::zeros(4, 1, 1);
        assert!(a.factor().is_err());
    }

    #[test]
    fn thomas_solves_laplacian() {
        let n = 9;
        let diag = vec![2.0; n];
        let off = vec![-1.0; n - 1];
        let x: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut b: Vec<f64> = (0..n)
            .map(|i| {
                2.0 * x[i] - if i > 0 { x[i - 1] } else { 0.0 } - if i + 1 < n { x[i + 1] } else { 0.0 }
            })
            .collect();
        solve_spd_tridiagonal(&diag, &off, &mut b);
        for (a, b) in x.iter().zip(&b) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
