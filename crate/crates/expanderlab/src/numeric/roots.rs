//! Scalar root finding and one-dimensional minimization.
//!
//! Two independent methods are provided for each task. Roots: plain
//! bisection and Brent's inverse-quadratic method. Minima: golden-section
//! and Brent's parabolic method. Callers that need a cross-check run both
//! and compare; the fold locator does exactly that.

use super::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RootError {
    /// The supplied interval does not bracket a sign change.
    NoBracket,
    /// Iteration budget exhausted before meeting the tolerance.
    NoConvergence,
}

impl core::fmt::Display for RootError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            RootError::NoBracket => write!(f, "interval does not bracket a sign change"),
            RootError::NoConvergence => write!(f, "iteration budget exhausted"),
        }
    }
}

const MAX_ITERS: usize = 200;

/// Bisection on a bracketing interval, run to width `xtol`.
pub fn bisect<S: Scalar, F: FnMut(S) -> S>(mut f: F, a: S, b: S, xtol: S) -> Result<S, RootError> {
    let (mut a, mut b) = (a, b);
    let mut fa = f(a);
    let fb = f(b);
    if fa == S::zero() {
        return Ok(a);
    }
    if fb == S::zero() {
        return Ok(b);
    }
    if (fa > S::zero()) == (fb > S::zero()) {
        return Err(RootError::NoBracket);
    }
    for _ in 0..MAX_ITERS {
        let m = S::half() * (a + b);
        if (b - a).abs() <= xtol.max(S::epsilon() * m.abs() * S::lit(4.0)) {
            return Ok(m);
        }
        let fm = f(m);
        if fm == S::zero() {
            return Ok(m);
        }
        if (fm > S::zero()) == (fa > S::zero()) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Err(RootError::NoConvergence)
}

/// Brent's root finder. Converges when the interval shrinks to `xtol` or
/// `|f|` drops below `ftol` (pass zero to disable the residual exit).
pub fn brent_root<S: Scalar, F: FnMut(S) -> S>(
    mut f: F,
    a0: S,
    b0: S,
    xtol: S,
    ftol: S,
) -> Result<S, RootError> {
    let (mut a, mut b) = (a0, b0);
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == S::zero() {
        return Ok(a);
    }
    if fb == S::zero() {
        return Ok(b);
    }
    if (fa > S::zero()) == (fb > S::zero()) {
        return Err(RootError::NoBracket);
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..MAX_ITERS {
        if fb.abs() > fc.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = S::two() * S::epsilon() * b.abs() + S::half() * xtol;
        let xm = S::half() * (c - b);
        if xm.abs() <= tol1 || fb == S::zero() || fb.abs() <= ftol {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            // Inverse quadratic interpolation, falling back to secant.
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = S::two() * xm * s;
                q = S::one() - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (S::two() * xm * qq * (qq - r) - (b - a) * (r - S::one()));
                q = (qq - S::one()) * (r - S::one()) * (s - S::one());
            }
            if p > S::zero() {
                q = -q;
            }
            p = p.abs();
            let min1 = S::lit(3.0) * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if S::two() * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b = b + if d.abs() > tol1 { d } else { tol1 * xm.signum() };
        fb = f(b);
        if (fb > S::zero()) == (fc > S::zero()) {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
    }
    Err(RootError::NoConvergence)
}

/// Golden-section minimization of a unimodal function on `[a, b]`.
pub fn golden_min<S: Scalar, F: FnMut(S) -> S>(mut f: F, a: S, b: S, xtol: S) -> (S, S) {
    let invphi = S::lit(0.618_033_988_749_894_9);
    let (mut a, mut b) = (a, b);
    let mut c = b - invphi * (b - a);
    let mut d = a + invphi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..MAX_ITERS {
        if (b - a).abs() <= xtol {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = f(d);
        }
    }
    let x = S::half() * (a + b);
    let fx = f(x);
    if fc < fx && fc < fd {
        (c, fc)
    } else if fd < fx {
        (d, fd)
    } else {
        (x, fx)
    }
}

/// Brent's parabolic minimizer on `[a, b]`. Returns the argmin and value.
pub fn brent_min<S: Scalar, F: FnMut(S) -> S>(mut f: F, a0: S, b0: S, xtol: S) -> (S, S) {
    let cgold = S::lit(0.381_966_011_250_105_1);
    let (mut a, mut b) = (a0.min(b0), a0.max(b0));
    let mut x = a + cgold * (b - a);
    let mut w = x;
    let mut v = x;
    let mut fx = f(x);
    let mut fw = fx;
    let mut fv = fx;
    let mut d = S::zero();
    let mut e = S::zero();
    for _ in 0..MAX_ITERS {
        let xm = S::half() * (a + b);
        let tol1 = xtol * x.abs() + S::lit(1e-25);
        let tol2 = S::two() * tol1;
        if (x - xm).abs() <= tol2 - S::half() * (b - a) {
            return (x, fx);
        }
        let mut use_golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = S::two() * (q - r);
            if q > S::zero() {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            e = d;
            if p.abs() < (S::half() * q * etemp).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = tol1 * (xm - x).signum();
                }
                use_golden = false;
            }
        }
        if use_golden {
            e = if x >= xm { a - x } else { b - x };
            d = cgold * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1 * d.signum() };
        let fu = f(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, fx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_cubic_root() {
        let r = bisect(|x: f64| x * x * x - 2.0, 0.0, 2.0, 1e-14).unwrap();
        assert!((r - 2.0f64.powf(1.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn brent_root_matches_bisect() {
        let f = |x: f64| x.cos() - x;
        let a = bisect(f, 0.0, 1.0, 1e-14).unwrap();
        let b = brent_root(f, 0.0, 1.0, 1e-14, 0.0).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn brent_root_residual_exit() {
        let r = brent_root(|x: f64| (x - 0.25).powi(3), 0.0, 1.0, 0.0, 1e-30).unwrap();
        assert!(((r - 0.25f64).powi(3)).abs() <= 1e-30);
    }

    #[test]
    fn no_bracket_is_reported() {
        assert_eq!(bisect(|x: f64| x * x + 1.0, -1.0, 1.0, 1e-12), Err(RootError::NoBracket));
        assert_eq!(
            brent_root(|x: f64| x * x + 1.0, -1.0, 1.0, 1e-12, 0.0),
            Err(RootError::NoBracket)
        );
    }

    #[test]
    fn minimizers_agree_on_smooth_well() {
        // Asymmetric single-well function with minimum at a known point.
        let f = |x: f64| (x - 1.3).powi(2) + 0.2 * (x - 1.3).powi(4) + 0.7;
        let (xg, _) = golden_min(f, 0.0, 3.0, 1e-10);
        let (xb, fb) = brent_min(f, 0.0, 3.0, 1e-12);
        assert!((xg - 1.3).abs() < 1e-7, "golden {xg}");
        assert!((xb - 1.3).abs() < 1e-7, "brent {xb}");
        assert!((fb - 0.7).abs() < 1e-12);
    }

    #[test]
    fn generic_at_f32() {
        let r = bisect(|x: f32| x * x - 2.0, 0.0, 2.0, 1e-6).unwrap();
        assert!((r - 2.0f32.sqrt()).abs() < 1e-5);
    }
}
