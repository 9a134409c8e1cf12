//! Small dense least squares, used for asymptotic-slope and decay-rate fits.
//!
//! Basis sizes stay tiny (at most four columns), so normal equations with a
//! Cholesky solve are adequate; the conditioning is controlled by the
//! callers' choice of basis.

use super::scalar::Scalar;

/// Solves the SPD system G x = b in place via Cholesky. `k` is the
/// dimension; `g` is row-major k*k. Returns false on a non-positive pivot.
fn cholesky_solve<S: Scalar>(g: &mut [S], b: &mut [S], k: usize) -> bool {
    let floor = S::epsilon() * S::lit(64.0);
    for i in 0..k {
        let orig = g[i * k + i];
        for j in 0..=i {
            let mut sum = g[i * k + j];
            for p in 0..j {
                sum = sum - g[i * k + p] * g[j * k + p];
            }
            if i == j {
                // Relative pivot floor: exact rank deficiency only cancels
                // to round-off of the original diagonal entry.
                if sum <= orig * floor {
                    return false;
                }
                g[i * k + i] = sum.sqrt();
            } else {
                g[i * k + j] = sum / g[j * k + j];
            }
        }
    }
    for i in 0..k {
        let mut sum = b[i];
        for p in 0..i {
            sum = sum - g[i * k + p] * b[p];
        }
        b[i] = sum / g[i * k + i];
    }
    for i in (0..k).rev() {
        let mut sum = b[i];
        for p in i + 1..k {
            sum = sum - g[p * k + i] * b[p];
        }
        b[i] = sum / g[i * k + i];
    }
    true
}

/// Least-squares coefficients for y ~ sum_j c_j phi_j(x), where `design`
/// yields the basis row for a sample index. Returns None when the normal
/// matrix is not positive definite (degenerate basis on the data).
pub fn lstsq<S: Scalar, const K: usize>(
    rows: usize,
    design: impl Fn(usize) -> [S; K],
    y: impl Fn(usize) -> S,
) -> Option<[S; K]> {
    assert!(rows >= K);
    let mut g = [S::zero(); 64];
    assert!(K * K <= 64);
    let mut b = [S::zero(); 8];
    assert!(K <= 8);
    for r in 0..rows {
        let phi = design(r);
        let yr = y(r);
        for i in 0..K {
            b[i] = b[i] + phi[i] * yr;
            for j in 0..K {
                g[i * K + j] = g[i * K + j] + phi[i] * phi[j];
            }
        }
    }
    if !cholesky_solve(&mut g[..K * K], &mut b[..K], K) {
        return None;
    }
    let mut out = [S::zero(); K];
    out.copy_from_slice(&b[..K]);
    Some(out)
}

#[derive(Clone, Copy, Debug)]
pub struct LineFit<S> {
    pub slope: S,
    pub intercept: S,
    /// Standard error of the slope under homoscedastic residuals.
    pub slope_stderr: S,
    /// Root-mean-square residual of the fit.
    pub rms: S,
}

/// Ordinary least-squares line through (x_i, y_i).
pub fn line_fit<S: Scalar>(xs: &[S], ys: &[S]) -> Option<LineFit<S>> {
    let n = xs.len();
    if n < 2 || n != ys.len() {
        return None;
    }
    let nf = S::lit(n as f64);
    let mean = |v: &[S]| v.iter().fold(S::zero(), |a, &b| a + b) / nf;
    let mx = mean(xs);
    let my = mean(ys);
    let mut sxx = S::zero();
    let mut sxy = S::zero();
    for i in 0..n {
        let dx = xs[i] - mx;
        sxx = sxx + dx * dx;
        sxy = sxy + dx * (ys[i] - my);
    }
    if !(sxx > S::zero()) {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut ss = S::zero();
    for i in 0..n {
        let r = ys[i] - (intercept + slope * xs[i]);
        ss = ss + r * r;
    }
    let dof = if n > 2 { S::lit((n - 2) as f64) } else { S::one() };
    let var = ss / dof;
    Some(LineFit {
        slope,
        intercept,
        slope_stderr: (var / sxx).sqrt(),
        rms: (ss / nf).sqrt(),
    })
}

/// Observed convergence order from errors at a step and half the step:
/// log2(e_h / e_{h/2}). Returns None on non-positive errors.
pub fn halving_order<S: Scalar>(e_h: S, e_half: S) -> Option<S> {
    if e_h > S::zero() && e_half > S::zero() {
        Some((e_h / e_half).ln() / S::lit(std::f64::consts::LN_2))
    } else {
        None
    }
}
