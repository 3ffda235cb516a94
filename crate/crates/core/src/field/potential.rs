//! The well potential `W` vanishing exactly on the unit sphere.
//!
//! Default choice `W(y) = (1 - |y|^2)^2`: it satisfies the `(1 - |y|)^2`
//! lower bound near the sphere and grows like `|y|^4`, which dominates
//! `|y|^{n-1}` for `n <= 5`.

#[derive(Debug, Clone, Copy, Default)]
pub struct Potential;

impl Potential {
    /// `W(y)`.
    #[inline]
    pub fn eval(&self, y: &[f64]) -> f64 {
        let r2: f64 = y.iter().map(|v| v * v).sum();
        let t = 1.0 - r2;
        t * t
    }

    #[inline]
    pub fn eval_r2(&self, r2: f64) -> f64 {
        let t = 1.0 - r2;
        t * t
    }

    /// Gradient `W'(y) = -4 (1 - |y|^2) y` written into `out`.
    #[inline]
    pub fn grad_into(&self, y: &[f64], out: &mut [f64]) {
        let r2: f64 = y.iter().map(|v| v * v).sum();
        let c = -4.0 * (1.0 - r2);
        for (o, v) in out.iter_mut().zip(y) {
            *o = c * v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_exactly_on_unit_sphere() {
        let w = Potential;
        for k in 0..32 {
            let th = k as f64 * 0.196;
            // cos^2 + sin^2 = 1 up to one ulp; W is quadratically flat there.
            let y = [th.cos(), th.sin()];
            assert!(w.eval(&y) < 1e-30);
            let y = [0.5 * th.cos(), 0.5 * th.sin()];
            assert!(w.eval(&y) > 0.0);
        }
        assert_eq!(w.eval(&[0.0, 0.0]), 1.0);
    }

    #[test]
    fn quadratic_growth_far_out() {
        // W(y) >= |y|^2 for |y| >= 2 (with constant 1 for the default W).
        let w = Potential;
        for k in 1..20 {
            let r = 2.0 + 0.3 * k as f64;
            let y = [r, 0.0];
            assert!(w.eval(&y) >= r * r);
        }
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let w = Potential;
        let y = [0.3, -0.7];
        let mut g = [0.0; 2];
        w.grad_into(&y, &mut g);
        let eps = 1e-6;
        for a in 0..2 {
            let mut yp = y;
            let mut ym = y;
            yp[a] += eps;
            ym[a] -= eps;
            let fd = (w.eval(&yp) - w.eval(&ym)) / (2.0 * eps);
            assert!((fd - g[a]).abs() < 1e-8);
        }
    }
}
