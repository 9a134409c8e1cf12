//! Finite-difference stencils on uniform grids.
//!
//! Fourth-order first and second derivatives are the primary route for
//! curvature and operator coefficients; the second-order central variants
//! exist as an independent cross-check route and are kept deliberately
//! simple. Boundary handling is either one-sided (open arcs) or periodic
//! (closed profile curves). One-sided closures use shifted stencils of the
//! same order, so the convergence rate holds up to the endpoints.

use super::scalar::Scalar;

/// Boundary treatment for a sampled curve.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryMode {
    /// Shifted one-sided stencils at the first and last two samples.
    OneSided,
    /// Index arithmetic wraps; sample `n` is identified with sample `0`.
    Periodic,
}

#[inline]
fn wrap(i: isize, n: usize) -> usize {
    let n = n as isize;
    (((i % n) + n) % n) as usize
}

/// Fourth-order first derivative of `f` sampled at spacing `h`.
///
/// Requires at least five samples; panics below that since no stencil of
/// this order exists.
pub fn deriv1<S: Scalar>(f: &[S], h: S, mode: BoundaryMode) -> Vec<S> {
    let n = f.len();
    assert!(n >= 5, "fourth-order stencil needs at least 5 samples");
    let c12 = S::lit(12.0);
    let denom = c12 * h;
    let mut out = vec![S::zero(); n];

    let central = |im2: S, im1: S, ip1: S, ip2: S| (im2 - ip2 + S::lit(8.0) * (ip1 - im1)) / denom;

    for i in 2..n - 2 {
        out[i] = central(f[i - 2], f[i - 1], f[i + 1], f[i + 2]);
    }
    match mode {
        BoundaryMode::Periodic => {
            for &i in &[0isize, 1, n as isize - 2, n as isize - 1] {
                let iu = i as usize;
                out[iu] = central(
                    f[wrap(i - 2, n)],
                    f[wrap(i - 1, n)],
                    f[wrap(i + 1, n)],
                    f[wrap(i + 2, n)],
                );
            }
        }
        BoundaryMode::OneSided => {
            out[0] = (S::lit(-25.0) * f[0] + S::lit(48.0) * f[1] - S::lit(36.0) * f[2]
                + S::lit(16.0) * f[3]
                - S::lit(3.0) * f[4])
                / denom;
            out[1] = (S::lit(-3.0) * f[0] - S::lit(10.0) * f[1] + S::lit(18.0) * f[2]
                - S::lit(6.0) * f[3]
                + f[4])
                / denom;
            out[n - 2] = -(S::lit(-3.0) * f[n - 1] - S::lit(10.0) * f[n - 2]
                + S::lit(18.0) * f[n - 3]
                - S::lit(6.0) * f[n - 4]
                + f[n - 5])
                / denom;
            out[n - 1] = -(S::lit(-25.0) * f[n - 1] + S::lit(48.0) * f[n - 2]
                - S::lit(36.0) * f[n - 3]
                + S::lit(16.0) * f[n - 4]
                - S::lit(3.0) * f[n - 5])
                / denom;
        }
    }
    out
}

/// Fourth-order second derivative of `f` sampled at spacing `h`.
///
/// One-sided closures use six-point stencils, so `OneSided` mode requires
/// at least six samples.
pub fn deriv2<S: Scalar>(f: &[S], h: S, mode: BoundaryMode) -> Vec<S> {
    let n = f.len();
    assert!(n >= 6, "fourth-order second-derivative stencil needs at least 6 samples");
    let denom = S::lit(12.0) * h * h;
    let mut out = vec![S::zero(); n];

    let central = |im2: S, im1: S, i0: S, ip1: S, ip2: S| {
        (-(im2 + ip2) + S::lit(16.0) * (im1 + ip1) - S::lit(30.0) * i0) / denom
    };

    for i in 2..n - 2 {
        out[i] = central(f[i - 2], f[i - 1], f[i], f[i + 1], f[i + 2]);
    }
    match mode {
        BoundaryMode::Periodic => {
            for &i in &[0isize, 1, n as isize - 2, n as isize - 1] {
                let iu = i as usize;
                out[iu] = central(
                    f[wrap(i - 2, n)],
                    f[wrap(i - 1, n)],
                    f[iu],
                    f[wrap(i + 1, n)],
                    f[wrap(i + 2, n)],
                );
            }
        }
        BoundaryMode::OneSided => {
            let fwd0 = |a: &[S]| {
                (S::lit(45.0) * a[0] - S::lit(154.0) * a[1] + S::lit(214.0) * a[2]
                    - S::lit(156.0) * a[3]
                    + S::lit(61.0) * a[4]
                    - S::lit(10.0) * a[5])
                    / denom
            };
            let fwd1 = |a: &[S]| {
                (S::lit(10.0) * a[0] - S::lit(15.0) * a[1] - S::lit(4.0) * a[2]
                    + S::lit(14.0) * a[3]
                    - S::lit(6.0) * a[4]
                    + a[5])
                    / denom
            };
            let head: Vec<S> = f[..6].to_vec();
            let mut tail: Vec<S> = f[n - 6..].to_vec();
            tail.reverse();
            out[0] = fwd0(&head);
            out[1] = fwd1(&head);
            out[n - 1] = fwd0(&tail);
            out[n - 2] = fwd1(&tail);
        }
    }
    out
}

/// Second-order central first derivative; the independent check route.
pub fn deriv1_low<S: Scalar>(f: &[S], h: S, mode: BoundaryMode) -> Vec<S> {
    let n = f.len();
    assert!(n >= 3);
    let mut out = vec![S::zero(); n];
    for i in 1..n - 1 {
        out[i] = (f[i + 1] - f[i - 1]) / (S::two() * h);
    }
    match mode {
        BoundaryMode::Periodic => {
            out[0] = (f[1] - f[n - 1]) / (S::two() * h);
            out[n - 1] = (f[0] - f[n - 2]) / (S::two() * h);
        }
        BoundaryMode::OneSided => {
            out[0] = (S::lit(-3.0) * f[0] + S::lit(4.0) * f[1] - f[2]) / (S::two() * h);
            out[n - 1] = (S::lit(3.0) * f[n - 1] - S::lit(4.0) * f[n - 2] + f[n - 3]) / (S::two() * h);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, h: f64) -> Vec<f64> {
        (0..n).map(|i| i as f64 * h).collect()
    }

    #[test]
    fn fourth_order_rate_on_smooth_function() {
        // sin is smooth and non-polynomial, so the error is dominated by the
        // leading truncation term and the grid-halving ratio approaches 16.
        let err = |h: f64| {
            let xs = grid((1.0 / h) as usize + 1, h);
            let f: Vec<f64> = xs.iter().map(|x| x.sin()).collect();
            let d1 = deriv1(&f, h, BoundaryMode::OneSided);
            let d2 = deriv2(&f, h, BoundaryMode::OneSided);
            let e1 = xs
                .iter()
                .zip(&d1)
                .map(|(x, d)| (d - x.cos()).abs())
                .fold(0.0f64, f64::max);
            let e2 = xs
                .iter()
                .zip(&d2)
                .map(|(x, d)| (d + x.sin()).abs())
                .fold(0.0f64, f64::max);
            (e1, e2)
        };
        let (a1, a2) = err(1e-2);
        let (b1, b2) = err(5e-3);
        assert!(a1 / b1 > 12.0 && a1 / b1 < 20.0, "rate {}", a1 / b1);
        assert!(a2 / b2 > 12.0 && a2 / b2 < 20.0, "rate {}", a2 / b2);
    }

    #[test]
    fn exact_on_quartics() {
        // Degree-four polynomials are differentiated exactly up to round-off.
        let h = 0.1;
        let xs = grid(12, h);
        let f: Vec<f64> = xs.iter().map(|x| 1.0 + x + x.powi(2) - 2.0 * x.powi(3) + 0.5 * x.powi(4)).collect();
        let d1 = deriv1(&f, h, BoundaryMode::OneSided);
        let d2 = deriv2(&f, h, BoundaryMode::OneSided);
        for (i, x) in xs.iter().enumerate() {
            let t1 = 1.0 + 2.0 * x - 6.0 * x.powi(2) + 2.0 * x.powi(3);
            let t2 = 2.0 - 12.0 * x + 6.0 * x.powi(2);
            assert!((d1[i] - t1).abs() < 1e-11, "d1[{i}] {} vs {}", d1[i], t1);
            assert!((d2[i] - t2).abs() < 1e-9, "d2[{i}] {} vs {}", d2[i], t2);
        }
    }

    #[test]
    fn periodic_mode_wraps() {
        let n = 200;
        let h = std::f64::consts::TAU / n as f64;
        let f: Vec<f64> = (0..n).map(|i| (i as f64 * h).sin()).collect();
        let d1 = deriv1(&f, h, BoundaryMode::Periodic);
        let d2 = deriv2(&f, h, BoundaryMode::Periodic);
        for i in 0..n {
            let x = i as f64 * h;
            assert!((d1[i] - x.cos()).abs() < 1e-6);
            assert!((d2[i] + x.sin()).abs() < 1e-4);
        }
    }

    #[test]
    fn low_order_route_agrees_at_its_own_rate() {
        let h = 1e-3;
        let xs = grid(2001, h);
        let f: Vec<f64> = xs.iter().map(|x| (0.7 * x).exp()).collect();
        let d = deriv1_low(&f, h, BoundaryMode::OneSided);
        for (i, x) in xs.iter().enumerate() {
            assert!((d[i] - 0.7 * (0.7 * x).exp()).abs() < 1e-5);
        }
    }

    #[test]
    fn generic_at_f32() {
        let h = 0.05f32;
        let xs: Vec<f32> = (0..40).map(|i| i as f32 * h).collect();
        let f: Vec<f32> = xs.iter().map(|x| x * x).collect();
        let d = deriv1(&f, h, BoundaryMode::OneSided);
        for (i, x) in xs.iter().enumerate() {
            assert!((d[i] - 2.0 * x).abs() < 1e-3);
        }
    }
}
