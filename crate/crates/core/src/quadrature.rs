//! Adaptive Simpson quadrature and the exponential weight functions used by
//! the panel schemes.

/// Absolute tolerance for rate integrals.
pub const ABS_TOL: f64 = 1e-10;
/// Maximum bisection depth before a divergence verdict.
pub const MAX_DEPTH: u32 = 60;
const EVAL_BUDGET: usize = 4_000_000;

/// Failure of [`adaptive_simpson`]: the integrand is not integrable on the
/// interval, or evaluated to a non-finite value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diverged {
    /// Best estimate accumulated before giving up.
    pub partial: f64,
}

struct Simpson<'f, F> {
    f: &'f F,
    evals: usize,
    diverged: bool,
}

impl<F: Fn(f64) -> f64> Simpson<'_, F> {
    fn eval(&mut self, x: f64) -> f64 {
        self.evals += 1;
        let v = (self.f)(x);
        if !v.is_finite() {
            self.diverged = true;
            return 0.0;
        }
        v
    }

    #[allow(clippy::too_many_arguments)]
    fn step(&mut self, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = self.eval(lm);
        let frm = self.eval(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let refined = left + right;
        let delta = refined - whole;
        if self.diverged {
            return refined;
        }
        if delta.abs() <= 15.0 * tol {
            return refined + delta / 15.0;
        }
        if (b - a) <= 4.0 * f64::EPSILON * m.abs().max(1.0) {
            // Down to float resolution: a jump leaves a negligible piece
            // here, a non-integrable pole does not.
            if refined.abs() > 1e-6 {
                self.diverged = true;
            }
            return refined + delta / 15.0;
        }
        if depth >= MAX_DEPTH || self.evals > EVAL_BUDGET {
            // Still growing under refinement: the integral blows up here.
            if refined.abs() > whole.abs() * (1.0 + 1e-9) {
                self.diverged = true;
            }
            return refined;
        }
        let half_tol = (0.5 * tol).max(f64::EPSILON * refined.abs());
        self.step(a, m, fa, flm, fm, left, half_tol, depth + 1)
            + self.step(m, b, fm, frm, fb, right, half_tol, depth + 1)
    }
}

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Result<f64, Diverged> {
    if a == b {
        return Ok(0.0);
    }
    let mut s = Simpson { f, evals: 0, diverged: false };
    let fa = s.eval(a);
    let fb = s.eval(b);
    let m = 0.5 * (a + b);
    let fm = s.eval(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let value = s.step(a, b, fa, fm, fb, whole, tol, 0);
    if s.diverged || !value.is_finite() {
        Err(Diverged { partial: value })
    } else {
        Ok(value)
    }
}

/// `(1 - e^{-z}) / z`, the mean of `e^{-s}` over `s in [0, z]`.
pub fn phi1(z: f64) -> f64 {
    if z.abs() < 1e-4 {
        1.0 - z / 2.0 + z * z / 6.0 - z * z * z / 24.0
    } else if z == f64::INFINITY {
        0.0
    } else {
        -(-z).exp_m1() / z
    }
}

/// `(1 - e^{-z}(1 + z)) / z^2`.
pub fn psi(z: f64) -> f64 {
    if z.abs() < 1e-3 {
        0.5 - z / 3.0 + z * z / 8.0 - z * z * z / 30.0
    } else if z == f64::INFINITY {
        0.0
    } else {
        (-(-z).exp_m1() - z * (-z).exp()) / (z * z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_polynomials_and_exponentials() {
        let v = adaptive_simpson(&|x: f64| x * x, 0.0, 3.0, ABS_TOL).unwrap();
        assert!((v - 9.0).abs() < 1e-12);
        let v = adaptive_simpson(&|x: f64| (-x).exp(), 0.0, 5.0, ABS_TOL).unwrap();
        assert!((v - (1.0 - (-5.0f64).exp())).abs() < 1e-10);
    }

    #[test]
    fn simpson_handles_jumps() {
        let step = |x: f64| if x < 0.3 { 1.0 } else { 4.0 };
        let v = adaptive_simpson(&step, 0.0, 1.0, ABS_TOL).unwrap();
        assert!((v - (0.3 + 4.0 * 0.7)).abs() < 1e-9, "{v}");
    }

    #[test]
    fn simpson_reciprocal_singularity() {
        let f = |t: f64| 1.0 / (1.0 - t);
        let v = adaptive_simpson(&f, 0.0, 0.999, ABS_TOL).unwrap();
        assert!((v - 1000f64.ln()).abs() < 1e-8, "{v}");
        // Integrable blow-up is fine, a log singularity at the endpoint is not.
        let g = |t: f64| if t < 1.0 { 1.0 / (1.0 - t) } else { 0.0 };
        assert!(adaptive_simpson(&g, 0.0, 1.5, ABS_TOL).is_err());
        let h = |t: f64| 1.0 / (1.0 - t).sqrt();
        let v = adaptive_simpson(&|t: f64| if t < 1.0 { h(t) } else { 0.0 }, 0.0, 1.0, 1e-6);
        if let Ok(v) = v {
            assert!((v - 2.0).abs() < 1e-3);
        }
    }

    #[test]
    fn simpson_flags_non_finite() {
        assert!(adaptive_simpson(&|_| f64::NAN, 0.0, 1.0, ABS_TOL).is_err());
    }

    #[test]
    fn phi_functions_match_closed_forms() {
        for z in [1e-6f64, 1e-3, 0.05, 0.9, 3.0, 40.0, 1e4] {
            let p1 = -(-z).exp_m1() / z;
            assert!((phi1(z) - p1).abs() < 1e-12 * p1.max(1e-300) + 1e-15, "phi1({z})");
            let s = (1.0 - (-z).exp() * (1.0 + z)) / (z * z);
            if z > 1e-2 {
                assert!((psi(z) - s).abs() < 1e-10, "psi({z})");
            }
        }
        assert_eq!(phi1(0.0), 1.0);
        assert_eq!(psi(0.0), 0.5);
        assert_eq!(phi1(f64::INFINITY), 0.0);
    }
}
