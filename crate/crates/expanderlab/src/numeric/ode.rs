//! Explicit Runge-Kutta steppers for small autonomous-in-form systems.
//!
//! `integrate_to` is the adaptive workhorse: the Dormand-Prince 5(4)
//! embedded pair with a PI-free step controller, marched exactly to a
//! requested endpoint. `rk4_to` is a deliberately independent fixed-step
//! scheme kept for cross-checks; agreement between the two bounds
//! integrator bias in derived quantities. `hermite` evaluates the cubic
//! interpolant used for event localization between accepted samples.

use super::scalar::Scalar;

/// Hard cap on adaptive substeps per call; hitting it means the tolerance
/// is unreachable (usually a singularity inside the interval).
const MAX_STEPS: usize = 200_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepError {
    /// Step size underflowed below machine-representable increments.
    StepUnderflow,
    /// Substep budget exhausted before reaching the endpoint.
    BudgetExhausted,
}

impl core::fmt::Display for StepError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            StepError::StepUnderflow => write!(f, "adaptive step size underflowed"),
            StepError::BudgetExhausted => write!(f, "adaptive substep budget exhausted"),
        }
    }
}

/// One Dormand-Prince 5(4) step from `(s, y)` with increment `h`.
///
/// Returns the fifth-order solution, the embedded error estimate per
/// component, and the last stage derivative `f(s + h, y5)` (FSAL slot,
/// returned so callers can reuse it for interpolation).
fn dopri_step<S: Scalar, F, const N: usize>(f: &F, s: S, y: &[S; N], h: S) -> ([S; N], [S; N], [S; N])
where
    F: Fn(S, &[S; N]) -> [S; N],
{
    let l = S::lit;
    let k1 = f(s, y);

    let mut t = [S::zero(); N];
    for i in 0..N {
        t[i] = y[i] + h * l(0.2) * k1[i];
    }
    let k2 = f(s + h * l(0.2), &t);

    for i in 0..N {
        t[i] = y[i] + h * (l(3.0 / 40.0) * k1[i] + l(9.0 / 40.0) * k2[i]);
    }
    let k3 = f(s + h * l(0.3), &t);

    for i in 0..N {
        t[i] = y[i] + h * (l(44.0 / 45.0) * k1[i] - l(56.0 / 15.0) * k2[i] + l(32.0 / 9.0) * k3[i]);
    }
    let k4 = f(s + h * l(0.8), &t);

    for i in 0..N {
        t[i] = y[i]
            + h * (l(19372.0 / 6561.0) * k1[i] - l(25360.0 / 2187.0) * k2[i]
                + l(64448.0 / 6561.0) * k3[i]
                - l(212.0 / 729.0) * k4[i]);
    }
    let k5 = f(s + h * l(8.0 / 9.0), &t);

    for i in 0..N {
        t[i] = y[i]
            + h * (l(9017.0 / 3168.0) * k1[i] - l(355.0 / 33.0) * k2[i] + l(46732.0 / 5247.0) * k3[i]
                + l(49.0 / 176.0) * k4[i]
                - l(5103.0 / 18656.0) * k5[i]);
    }
    let k6 = f(s + h, &t);

    let mut y5 = [S::zero(); N];
    for i in 0..N {
        y5[i] = y[i]
            + h * (l(35.0 / 384.0) * k1[i] + l(500.0 / 1113.0) * k3[i] + l(125.0 / 192.0) * k4[i]
                - l(2187.0 / 6784.0) * k5[i]
                + l(11.0 / 84.0) * k6[i]);
    }
    let k7 = f(s + h, &y5);

    // Difference of the order-5 and embedded order-4 weights.
    let mut err = [S::zero(); N];
    for i in 0..N {
        err[i] = h
            * (l(71.0 / 57600.0) * k1[i] - l(71.0 / 16695.0) * k3[i] + l(71.0 / 1920.0) * k4[i]
                - l(17253.0 / 339200.0) * k5[i]
                + l(22.0 / 525.0) * k6[i]
                - l(1.0 / 40.0) * k7[i]);
    }
    (y5, err, k7)
}

/// Integrates `y' = f(s, y)` from `(s0, y0)` to `s1` adaptively.
///
/// `watch` sees every accepted substate `(s, y)` and may abort the march by
/// returning `false`; the state at the abort point is still returned. The
/// suggested initial step `h0` is clamped and adapted immediately.
pub fn integrate_to<S: Scalar, F, W, const N: usize>(
    f: &F,
    s0: S,
    y0: [S; N],
    s1: S,
    tol_abs: S,
    tol_rel: S,
    h0: S,
    watch: &mut W,
) -> Result<(S, [S; N]), StepError>
where
    F: Fn(S, &[S; N]) -> [S; N],
    W: FnMut(S, &[S; N]) -> bool,
{
    let dir = if s1 >= s0 { S::one() } else { -S::one() };
    let mut s = s0;
    let mut y = y0;
    let mut h = (h0.abs().max(S::lit(1e-12))).min((s1 - s0).abs()) * dir;
    if h == S::zero() {
        return Ok((s, y));
    }
    for _ in 0..MAX_STEPS {
        let remaining = s1 - s;
        if remaining.abs() <= S::epsilon() * s.abs().max(S::one()) {
            return Ok((s1, y));
        }
        if h.abs() > remaining.abs() {
            h = remaining;
        }
        let (y5, err, _) = dopri_step(f, s, &y, h);
        let mut norm2 = S::zero();
        for i in 0..N {
            let scale = tol_abs + tol_rel * y[i].abs().max(y5[i].abs());
            let e = err[i] / scale;
            norm2 = norm2 + e * e;
        }
        let errnorm = (norm2 / S::lit(N as f64)).sqrt();
        if errnorm <= S::one() {
            s = s + h;
            y = y5;
            if !watch(s, &y) {
                return Ok((s, y));
            }
        }
        let fac = if errnorm > S::zero() {
            S::lit(0.9) * errnorm.powf(S::lit(-0.2))
        } else {
            S::lit(5.0)
        };
        h = h * fac.max(S::lit(0.2)).min(S::lit(5.0));
        if h.abs() < S::epsilon() * s.abs().max(S::one()) {
            return Err(StepError::StepUnderflow);
        }
    }
    Err(StepError::BudgetExhausted)
}

/// Fixed-step classical RK4 from `s0` to `s1` in `steps` equal increments.
pub fn rk4_to<S: Scalar, F, const N: usize>(f: &F, s0: S, y0: [S; N], s1: S, steps: usize) -> [S; N]
where
    F: Fn(S, &[S; N]) -> [S; N],
{
    let h = (s1 - s0) / S::lit(steps as f64);
    let mut y = y0;
    let mut s = s0;
    for _ in 0..steps {
        let k1 = f(s, &y);
        let mut t = [S::zero(); N];
        for i in 0..N {
            t[i] = y[i] + S::half() * h * k1[i];
        }
        let k2 = f(s + S::half() * h, &t);
        for i in 0..N {
            t[i] = y[i] + S::half() * h * k2[i];
        }
        let k3 = f(s + S::half() * h, &t);
        for i in 0..N {
            t[i] = y[i] + h * k3[i];
        }
        let k4 = f(s + h, &t);
        for i in 0..N {
            y[i] = y[i] + h / S::lit(6.0) * (k1[i] + S::two() * (k2[i] + k3[i]) + k4[i]);
        }
        s = s + h;
    }
    y
}

/// Cubic Hermite value at `s` given endpoint states and derivatives.
pub fn hermite<S: Scalar, const N: usize>(
    s0: S,
    y0: &[S; N],
    d0: &[S; N],
    s1: S,
    y1: &[S; N],
    d1: &[S; N],
    s: S,
) -> [S; N] {
    let h = s1 - s0;
    let t = (s - s0) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = S::two() * t3 - S::lit(3.0) * t2 + S::one();
    let h10 = t3 - S::two() * t2 + t;
    let h01 = -S::two() * t3 + S::lit(3.0) * t2;
    let h11 = t3 - t2;
    let mut out = [S::zero(); N];
    for i in 0..N {
        out[i] = h00 * y0[i] + h10 * h * d0[i] + h01 * y1[i] + h11 * h * d1[i];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_to_tolerance() {
        let f = |_s: f64, y: &[f64; 1]| [y[0]];
        let (_, y) = integrate_to(&f, 0.0, [1.0], 1.0, 1e-12, 1e-12, 0.1, &mut |_, _| true).unwrap();
        assert!((y[0] - 1.0f64.exp()).abs() < 1e-11, "{}", y[0]);
    }

    #[test]
    fn harmonic_oscillator_round_trip() {
        // One full period returns to the initial state.
        let f = |_s: f64, y: &[f64; 2]| [y[1], -y[0]];
        let tau = std::f64::consts::TAU;
        let (_, y) = integrate_to(&f, 0.0, [1.0, 0.0], tau, 1e-13, 1e-13, 0.1, &mut |_, _| true).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-10);
        assert!(y[1].abs() < 1e-10);
    }

    #[test]
    fn backward_integration() {
        let f = |_s: f64, y: &[f64; 1]| [y[0]];
        let (_, y) = integrate_to(&f, 1.0, [1.0f64.exp()], 0.0, 1e-12, 1e-12, 0.1, &mut |_, _| true).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-11);
    }

    #[test]
    fn watcher_can_abort() {
        let f = |_s: f64, y: &[f64; 1]| [y[0]];
        let (s, _) = integrate_to(&f, 0.0, [1.0], 50.0, 1e-10, 1e-10, 0.1, &mut |s, _| s < 2.0).unwrap();
        assert!(s >= 2.0 && s < 50.0);
    }

    #[test]
    fn rk4_matches_adaptive_on_smooth_problem() {
        let f = |s: f64, y: &[f64; 2]| [y[1], -s.sin() - 0.3 * y[0]];
        let (_, a) = integrate_to(&f, 0.0, [0.3, -0.1], 4.0, 1e-12, 1e-12, 0.05, &mut |_, _| true).unwrap();
        let b = rk4_to(&f, 0.0, [0.3, -0.1], 4.0, 40_000);
        assert!((a[0] - b[0]).abs() < 1e-10);
        assert!((a[1] - b[1]).abs() < 1e-10);
    }

    #[test]
    fn hermite_reproduces_cubics() {
        // The interpolant is exact on cubic polynomials.
        let p = |x: f64| 2.0 - x + 3.0 * x * x - 0.5 * x * x * x;
        let d = |x: f64| -1.0 + 6.0 * x - 1.5 * x * x;
        let (s0, s1) = (0.3, 0.9);
        for k in 0..=10 {
            let s = s0 + (s1 - s0) * k as f64 / 10.0;
            let v = hermite(s0, &[p(s0)], &[d(s0)], s1, &[p(s1)], &[d(s1)], s);
            assert!((v[0] - p(s)).abs() < 1e-13);
        }
    }

    #[test]
    fn generic_at_f32() {
        let f = |_s: f32, y: &[f32; 1]| [-y[0]];
        let (_, y) = integrate_to(&f, 0.0f32, [1.0], 1.0, 1e-6, 1e-6, 0.1, &mut |_, _| true).unwrap();
        assert!((y[0] - (-1.0f32).exp()).abs() < 1e-5);
    }
}
