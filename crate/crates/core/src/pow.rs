/// `|x|^r` and its derivatives with integer fast paths.
#[derive(Clone, Copy, Debug)]
pub(crate) struct AbsPow {
    r: f64,
    int: Option<i32>,
}

impl AbsPow {
    pub(crate) fn new(r: f64) -> Self {
        let int = if r.fract() == 0.0 && r.abs() <= 16.0 {
            Some(r as i32)
        } else {
            None
        };
        AbsPow { r, int }
    }

    /// `|x|^r`
    #[inline]
    pub(crate) fn abs(&self, x: f64) -> f64 {
        match self.int {
            Some(k) => x.abs().powi(k),
            None => x.abs().powf(self.r),
        }
    }

    /// `|x|^(r-2) x`, the derivative of `|x|^r / r`.
    #[inline]
    pub(crate) fn signed_m1(&self, x: f64) -> f64 {
        if x == 0.0 {
            return 0.0;
        }
        match self.int {
            Some(k) => x.abs().powi(k - 1).copysign(x),
            None => x.abs().powf(self.r - 1.0).copysign(x),
        }
    }

    /// `|x|^(r-2)`, clamped away from the singularity at zero when r < 2.
    #[inline]
    pub(crate) fn abs_m2(&self, x: f64) -> f64 {
        match self.int {
            Some(2) => 1.0,
            Some(k) if k > 2 => x.abs().powi(k - 2),
            _ => {
                let a = x.abs();
                if self.r < 2.0 {
                    a.max(1e-12).powf(self.r - 2.0)
                } else {
                    a.powf(self.r - 2.0)
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_paths_match_powf() {
        for &r in &[2.0, 3.0, 2.5, 1.5, 4.0] {
            let ap = AbsPow::new(r);
            for &x in &[-1.7, -0.3, 0.2, 2.4] {
                let a: f64 = x;
                assert!((ap.abs(x) - a.abs().powf(r)).abs() < 1e-12 * a.abs().powf(r).max(1.0));
                let d = a.abs().powf(r - 1.0) * a.signum();
                assert!((ap.signed_m1(x) - d).abs() < 1e-12 * d.abs().max(1.0));
                let h = a.abs().powf(r - 2.0);
                assert!((ap.abs_m2(x) - h).abs() < 1e-12 * h.abs().max(1.0));
            }
        }
    }
}
