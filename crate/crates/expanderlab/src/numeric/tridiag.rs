//! Symmetric tridiagonal pencils: inertia counts, bisection eigenvalues,
//! and inverse-iteration eigenvectors.
//!
//! The pencil is (A, M) with M positive definite; both matrices share the
//! storage layout `diag`/`off`. The Sturm count through LDLᵀ pivot signs
//! is the primary route to eigenvalue counts below a shift, so index
//! computations never depend on which individual eigenvalues converged.
//! Bisection then brackets any requested eigenvalue using the same count,
//! and inverse iteration recovers vectors. Simple spectra are expected
//! (Sturm-Liouville discretizations); near-degenerate pairs are handled by
//! deflation against previously computed vectors.

use super::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct SymTridiag<S> {
    pub diag: Vec<S>,
    pub off: Vec<S>,
}

impl<S: Scalar> SymTridiag<S> {
    pub fn new(diag: Vec<S>, off: Vec<S>) -> Self {
        assert!(!diag.is_empty());
        assert_eq!(off.len() + 1, diag.len(), "off-diagonal length mismatch");
        Self { diag, off }
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn matvec(&self, x: &[S]) -> Vec<S> {
        let n = self.n();
        assert_eq!(x.len(), n);
        let mut y = vec![S::zero(); n];
        for i in 0..n {
            let mut v = self.diag[i] * x[i];
            if i > 0 {
                v = v + self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                v = v + self.off[i] * x[i + 1];
            }
            y[i] = v;
        }
        y
    }

    /// Largest absolute row sum; a cheap scale for pivot floors.
    fn row_scale(&self) -> S {
        let n = self.n();
        let mut m = S::zero();
        for i in 0..n {
            let mut v = self.diag[i].abs();
            if i > 0 {
                v = v + self.off[i - 1].abs();
            }
            if i + 1 < n {
                v = v + self.off[i].abs();
            }
            m = m.max(v);
        }
        m
    }
}

fn pivmin<S: Scalar>(a: &SymTridiag<S>, m: &SymTridiag<S>, shift: S) -> S {
    let scale = a.row_scale() + shift.abs() * m.row_scale();
    (scale * S::epsilon() * S::epsilon()).max(S::min_positive_value())
}

/// Number of pencil eigenvalues strictly below `shift`: the count of
/// negative pivots in the LDLᵀ factorization of A - shift M.
pub fn count_below<S: Scalar>(a: &SymTridiag<S>, m: &SymTridiag<S>, shift: S) -> usize {
    let n = a.n();
    assert_eq!(n, m.n());
    let floor = pivmin(a, m, shift);
    let mut count = 0usize;
    let mut d_prev = S::one();
    for i in 0..n {
        let t = a.diag[i] - shift * m.diag[i];
        let mut d = if i == 0 {
            t
        } else {
            let e = a.off[i - 1] - shift * m.off[i - 1];
            t - e * e / d_prev
        };
        if d.abs() < floor {
            d = -floor;
        }
        if d < S::zero() {
            count += 1;
        }
        d_prev = d;
    }
    count
}

/// LDLᵀ factorization of A - shift M. Fails when a pivot falls below the
/// breakdown floor, which signals a (near-)singular shift.
pub struct Ldlt<S> {
    d: Vec<S>,
    l: Vec<S>,
}

pub fn ldlt<S: Scalar>(a: &SymTridiag<S>, m: &SymTridiag<S>, shift: S) -> Option<Ldlt<S>> {
    let n = a.n();
    let floor = pivmin(a, m, shift);
    let mut d = vec![S::zero(); n];
    let mut l = vec![S::zero(); n.saturating_sub(1)];
    for i in 0..n {
        let t = a.diag[i] - shift * m.diag[i];
        let di = if i == 0 { t } else { t - l[i - 1] * l[i - 1] * d[i - 1] };
        if di.abs() < floor {
            return None;
        }
        d[i] = di;
        if i + 1 < n {
            l[i] = (a.off[i] - shift * m.off[i]) / di;
        }
    }
    Some(Ldlt { d, l })
}

impl<S: Scalar> Ldlt<S> {
    pub fn solve(&self, b: &[S]) -> Vec<S> {
        let n = self.d.len();
        assert_eq!(b.len(), n);
        let mut x = b.to_vec();
        for i in 1..n {
            let li = self.l[i - 1];
            x[i] = x[i] - li * x[i - 1];
        }
        for i in 0..n {
            x[i] = x[i] / self.d[i];
        }
        for i in (0..n - 1).rev() {
            let li = self.l[i];
            x[i] = x[i] - li * x[i + 1];
        }
        x
    }

    /// Signs of the pivots as (negative, positive) counts.
    pub fn inertia(&self) -> (usize, usize) {
        let neg = self.d.iter().filter(|d| **d < S::zero()).count();
        (neg, self.d.len() - neg)
    }
}

/// An interval [lo, hi] guaranteed to contain the whole pencil spectrum,
/// found by expanding until the Sturm counts saturate.
pub fn spectrum_bounds<S: Scalar>(a: &SymTridiag<S>, m: &SymTridiag<S>) -> (S, S) {
    let n = a.n();
    let scale = (a.row_scale() / m.diag.iter().fold(S::infinity(), |acc, &d| acc.min(d)).max(S::min_positive_value()))
        .max(S::one());
    let mut lo = -scale;
    let mut hi = scale;
    for _ in 0..120 {
        if count_below(a, m, lo) == 0 {
            break;
        }
        lo = lo * S::two();
    }
    for _ in 0..120 {
        if count_below(a, m, hi) == n {
            break;
        }
        hi = hi * S::two();
    }
    (lo, hi)
}

/// The k-th smallest pencil eigenvalue (0-based), by Sturm bisection.
pub fn eigenvalue_by_index<S: Scalar>(a: &SymTridiag<S>, m: &SymTridiag<S>, k: usize) -> S {
    assert!(k < a.n());
    let (mut lo, mut hi) = spectrum_bounds(a, m);
    // count(lo) <= k < count(hi) is maintained throughout.
    for _ in 0..200 {
        let mid = S::half() * (lo + hi);
        if hi - lo <= S::lit(4.0) * S::epsilon() * mid.abs().max(S::one()) {
            break;
        }
        if count_below(a, m, mid) <= k {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    S::half() * (lo + hi)
}

/// The lowest `k` pencil eigenvalues in ascending order.
pub fn lowest_eigenvalues<S: Scalar>(a: &SymTridiag<S>, m: &SymTridiag<S>, k: usize) -> Vec<S> {
    (0..k.min(a.n())).map(|i| eigenvalue_by_index(a, m, i)).collect()
}

#[derive(Clone, Debug)]
pub struct EigPair<S> {
    pub value: S,
    pub vector: Vec<S>,
    /// Relative residual |A x - value M x| / (|A x| + |value| |M x|).
    pub residual: S,
}

fn norm2<S: Scalar>(x: &[S]) -> S {
    x.iter().fold(S::zero(), |acc, &v| acc + v * v).sqrt()
}

fn m_dot<S: Scalar>(m: &SymTridiag<S>, x: &[S], y: &[S]) -> S {
    let my = m.matvec(y);
    x.iter().zip(&my).fold(S::zero(), |acc, (&a, &b)| acc + a * b)
}

/// Inverse iteration at an eigenvalue estimate, with M-orthogonalization
/// against `prior` vectors (pass vectors already found in the same pencil
/// to keep near-degenerate pairs separated).
pub fn eigenpair<S: Scalar>(
    a: &SymTridiag<S>,
    m: &SymTridiag<S>,
    mu: S,
    prior: &[Vec<S>],
) -> EigPair<S> {
    let n = a.n();
    // A deterministic, sign-varying start vector avoids accidental
    // orthogonality to the target mode.
    let mut x: Vec<S> = (0..n)
        .map(|i| {
            let t = S::lit(((i * 2654435761 % 1000) as f64) / 1000.0 - 0.5);
            S::one() + t
        })
        .collect();
    let mut shift = mu;
    let mut fact = None;
    for attempt in 0..6 {
        if let Some(f) = ldlt(a, m, shift) {
            fact = Some(f);
            break;
        }
        // Exactly singular shift: nudge proportionally to the scale.
        let bump = (mu.abs().max(S::one())) * S::epsilon() * S::lit(64.0 * ((attempt + 1) as f64));
        shift = mu + bump;
    }
    let fact = match fact {
        Some(f) => f,
        None => {
            return EigPair { value: mu, vector: vec![S::zero(); n], residual: S::infinity() };
        }
    };
    let mut value = mu;
    for _ in 0..8 {
        for p in prior {
            let c = m_dot(m, &x, p);
            for i in 0..n {
                x[i] = x[i] - c * p[i];
            }
        }
        let rhs = m.matvec(&x);
        x = fact.solve(&rhs);
        let nm = m_dot(m, &x, &x).sqrt();
        if !(nm > S::zero()) || !nm.is_finite() {
            break;
        }
        for v in x.iter_mut() {
            *v = *v / nm;
        }
        let ax = a.matvec(&x);
        let mx = m.matvec(&x);
        let num = x.iter().zip(&ax).fold(S::zero(), |acc, (&u, &v)| acc + u * v);
        let den = x.iter().zip(&mx).fold(S::zero(), |acc, (&u, &v)| acc + u * v);
        value = num / den;
        let mut r = vec![S::zero(); n];
        for i in 0..n {
            r[i] = ax[i] - value * mx[i];
        }
        let rel = norm2(&r) / (norm2(&ax) + value.abs() * norm2(&mx)).max(S::min_positive_value());
        if rel < S::epsilon() * S::lit(32.0) {
            break;
        }
    }
    let ax = a.matvec(&x);
    let mx = m.matvec(&x);
    let mut r = vec![S::zero(); n];
    for i in 0..n {
        r[i] = ax[i] - value * mx[i];
    }
    let residual = norm2(&r) / (norm2(&ax) + value.abs() * norm2(&mx)).max(S::min_positive_value());
    EigPair { value, vector: x, residual }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Dirichlet stiffness (-1, 2, -1)/h^2 on k interior nodes of [0, 1].
    fn string_stiffness(k: usize) -> (SymTridiag<f64>, f64) {
        let h = 1.0 / (k + 1) as f64;
        let diag = vec![2.0 / (h * h); k];
        let off = vec![-1.0 / (h * h); k - 1];
        (SymTridiag::new(diag, off), h)
    }

    fn identity(k: usize) -> SymTridiag<f64> {
        SymTridiag::new(vec![1.0; k], vec![0.0; k.saturating_sub(1)])
    }

    /// P1 mass matrix on the same grid.
    fn string_mass(k: usize, h: f64) -> SymTridiag<f64> {
        SymTridiag::new(vec![2.0 * h / 3.0; k], vec![h / 6.0; k - 1])
    }

    #[test]
    fn string_spectrum_against_closed_form() {
        // Eigenvalues of the difference matrix are 4 sin^2(j pi h / 2) / h^2.
        let k = 57;
        let (a, h) = string_stiffness(k);
        let m = identity(k);
        for j in 1..=4 {
            let exact = 4.0 * ((j as f64) * std::f64::consts::PI * h / 2.0).sin().powi(2) / (h * h);
            let got = eigenvalue_by_index(&a, &m, j - 1);
            assert!((got - exact).abs() < 1e-9 * exact, "j={j}: {got} vs {exact}");
        }
    }

    #[test]
    fn generalized_pencil_against_closed_form() {
        // P1 finite elements for -u'' on [0,1]: the discrete eigenvalues are
        // (6/h^2) (1 - cos t) / (2 + cos t) with t = j pi h.
        let k = 99;
        let (a, h) = string_stiffness(k);
        let a = SymTridiag::new(a.diag.iter().map(|d| d * h).collect(), a.off.iter().map(|o| o * h).collect());
        let m = string_mass(k, h);
        for j in 1..=3 {
            let t = j as f64 * std::f64::consts::PI * h;
            let exact = (6.0 / (h * h)) * (1.0 - t.cos()) / (2.0 + t.cos());
            let got = eigenvalue_by_index(&a, &m, j - 1);
            assert!((got - exact).abs() < 1e-8 * exact, "j={j}: {got} vs {exact}");
        }
    }

    #[test]
    fn count_below_is_monotone_and_consistent() {
        let k = 40;
        let (a, h) = string_stiffness(k);
        let m = string_mass(k, h);
        let a = SymTridiag::new(a.diag.iter().map(|d| d * h).collect(), a.off.iter().map(|o| o * h).collect());
        let e0 = eigenvalue_by_index(&a, &m, 0);
        let e1 = eigenvalue_by_index(&a, &m, 1);
        assert_eq!(count_below(&a, &m, e0 - 1.0), 0);
        assert_eq!(count_below(&a, &m, 0.5 * (e0 + e1)), 1);
        assert_eq!(count_below(&a, &m, 1e12), k);
    }

    #[test]
    fn inverse_iteration_recovers_sine_mode() {
        let k = 80;
        let (a, _) = string_stiffness(k);
        let m = identity(k);
        let mu = eigenvalue_by_index(&a, &m, 0);
        let pair = eigenpair(&a, &m, mu, &[]);
        assert!(pair.residual < 1e-12, "residual {}", pair.residual);
        // Vector is proportional to sin(pi x_i).
        let h = 1.0 / (k + 1) as f64;
        let ref0: Vec<f64> = (1..=k).map(|i| (std::f64::consts::PI * i as f64 * h).sin()).collect();
        let scale = pair.vector[k / 2] / ref0[k / 2];
        for i in 0..k {
            assert!((pair.vector[i] - scale * ref0[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn deflation_separates_close_modes() {
        // Two nearly equal diagonal entries give a near-degenerate pair.
        let a = SymTridiag::new(vec![1.0, 1.0 + 1e-9, 5.0], vec![1e-12, 1e-12]);
        let m = identity(3);
        let e0 = eigenvalue_by_index(&a, &m, 0);
        let e1 = eigenvalue_by_index(&a, &m, 1);
        let p0 = eigenpair(&a, &m, e0, &[]);
        let p1 = eigenpair(&a, &m, e1, &[p0.vector.clone()]);
        let dot: f64 = p0.vector.iter().zip(&p1.vector).map(|(x, y)| x * y).sum();
        assert!(dot.abs() < 1e-6, "vectors not separated: {dot}");
    }

    #[test]
    fn ldlt_solve_round_trip() {
        let k = 30;
        let (a, h) = string_stiffness(k);
        let m = string_mass(k, h);
        let f = ldlt(&a, &m, -3.0).unwrap();
        let x0: Vec<f64> = (0..k).map(|i| (i as f64 * 0.37).sin()).collect();
        // b = (A + 3 M) x0, solve recovers x0.
        let ax = a.matvec(&x0);
        let mx = m.matvec(&x0);
        let b: Vec<f64> = ax.iter().zip(&mx).map(|(p, q)| p + 3.0 * q).collect();
        let x = f.solve(&b);
        for i in 0..k {
            assert!((x[i] - x0[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn generic_at_f32() {
        let a = SymTridiag::<f32>::new(vec![2.0, 2.0, 2.0], vec![-1.0, -1.0]);
        let m = SymTridiag::<f32>::new(vec![1.0, 1.0, 1.0], vec![0.0, 0.0]);
        let e = eigenvalue_by_index(&a, &m, 0);
        // Smallest eigenvalue of the 3x3 (-1,2,-1) matrix is 2 - sqrt(2).
        assert!((e - (2.0 - 2.0f32.sqrt())).abs() < 1e-5);
    }
}
