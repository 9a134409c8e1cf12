//! Gaussian-weighted Jacobi spectra on rotationally symmetric surfaces.
//!
//! Separating the stability operator on angular modes m reduces it to a
//! family of one-dimensional pencils: with weight a(s) = omega_{n-1}
//! r^{n-1} e^{|x|^2/4}, the m-th quadratic form is
//!
//!   Q_m[f,g] = int (f'g' + V_m f g) a ds,
//!   V_m = 1/2 - |A|^2 + m(m+n-2)/r^2,
//!
//! against the mass form B_m[f,g] = int f g a ds. Each mode carries the
//! multiplicity of its spherical-harmonic eigenspace, and the Morse index
//! is the multiplicity-weighted count of negative eigenvalues across
//! modes. V_m grows strictly with m, so the scan stops at the first mode
//! whose bottom eigenvalue is positive.
//!
//! Discretization is P1 finite elements with the weight interpolated
//! linearly on each element and Dirichlet conditions at the truncation
//! radius. Eigenvalue counts come from Sturm bisection on the assembled
//! pencil, which makes the index an exact count for the discrete problem
//! rather than a byproduct of an iterative solver.

use serde::Serialize;

use crate::geometry::{unit_sphere_area, GeomError, SurfaceGrid, NATURAL_WEIGHT};
use crate::numeric::fit::line_fit;
use crate::numeric::tridiag::{count_below, eigenpair, ldlt, lowest_eigenvalues, EigPair, SymTridiag};
use crate::Real;

#[derive(thiserror::Error, Debug)]
pub enum SpecError {
    #[error(transparent)]
    Geometry(#[from] GeomError),
    #[error("truncation window too small: {reason}")]
    TruncationTooSmall { reason: String },
    #[error("mode scan hit its cap at m = {m} with bottom eigenvalue {mu1} still non-positive")]
    IndexIncomplete { m: usize, mu1: Real },
    #[error("weight spans {log_range} e-folds; element entries would flush to zero")]
    OverflowGuard { log_range: Real },
    #[error("fit window holds {got} samples, need {need}")]
    FitWindow { got: usize, need: usize },
    #[error("bad input: {reason}")]
    BadInput { reason: String },
}

#[derive(Clone, Debug)]
pub struct SpectralConfig {
    /// Dirichlet truncation: nodes with |s| <= s_trunc enter the pencil.
    pub s_trunc: Real,
    /// Subsampling stride applied to the profile when building the grid.
    pub stride: usize,
    /// Eigenvalues within null_tol of zero count toward the nullity.
    pub null_tol: Real,
    /// Eigenvalues reported per mode.
    pub k_eigs: usize,
    /// Hard cap on the mode scan; None lets monotonicity decide (cap 64).
    pub m_max: Option<usize>,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        SpectralConfig { s_trunc: 10.0, stride: 2, null_tol: 1e-6, k_eigs: 8, m_max: None }
    }
}

/// Multiplicity of the degree-m spherical harmonic eigenspace on S^{n-1}.
pub fn mode_multiplicity(n: usize, m: usize) -> usize {
    if m == 0 {
        return 1;
    }
    // (2m + n - 2) (m + n - 3)! / (m! (n - 2)!), computed as
    // (2m + n - 2) C(m + n - 3, n - 2) / m in exact integers.
    let mut binom: u128 = 1;
    for i in 0..n.saturating_sub(2) {
        binom = binom * (m + i) as u128 / (i as u128 + 1);
    }
    let num = (2 * m + n - 2) as u128 * binom;
    debug_assert_eq!(num % m as u128, 0);
    (num / m as u128) as usize
}

/// The assembled P1 pencil on an index window of a surface grid, with
/// Dirichlet conditions at the window ends. All matrices share one
/// log-scale factor, so generalized eigenvalues and Rayleigh quotients
/// are unaffected by it.
#[derive(Clone, Debug)]
pub struct Assembled {
    /// Gradient part: int u' v' a ds.
    pub stiff: SymTridiag<Real>,
    /// Operator form: stiffness plus the interpolated potential mass.
    pub apot: SymTridiag<Real>,
    /// Mass: int u v a ds.
    pub mass: SymTridiag<Real>,
    /// Surface-grid index of the first interior unknown.
    pub lo: usize,
    /// Log of the factored-out weight peak.
    pub log_scale: Real,
    pub h: Real,
}

impl Assembled {
    pub fn unknowns(&self) -> usize {
        self.mass.n()
    }
}

/// Assembles the pencil for the form int (u'v' + V u v) a_beta ds over the
/// node window [lo, hi] of the grid, Dirichlet at both window ends.
/// `potential` holds V at every grid node.
pub fn assemble_operator(
    surf: &SurfaceGrid,
    lo: usize,
    hi: usize,
    beta: Real,
    potential: &[Real],
) -> Result<Assembled, SpecError> {
    if surf.closed {
        return Err(SpecError::BadInput { reason: "pencil assembly expects an open grid".into() });
    }
    if potential.len() != surf.len() {
        return Err(SpecError::BadInput {
            reason: format!("potential has {} nodes, grid has {}", potential.len(), surf.len()),
        });
    }
    if hi <= lo + 2 || hi >= surf.len() {
        return Err(SpecError::TruncationTooSmall {
            reason: format!("window [{lo}, {hi}] leaves no interior nodes"),
        });
    }
    let log_omega = unit_sphere_area(surf.n - 1).ln();
    let log_a: Vec<Real> = (lo..=hi)
        .map(|i| log_omega + (surf.n as Real - 1.0) * surf.r[i].ln() + beta * surf.xnorm2[i])
        .collect();
    let log_scale = log_a.iter().cloned().fold(Real::NEG_INFINITY, Real::max);
    let log_min = log_a.iter().cloned().fold(Real::INFINITY, Real::min);
    if log_scale - log_min > 600.0 {
        return Err(SpecError::OverflowGuard { log_range: log_scale - log_min });
    }
    let a: Vec<Real> = log_a.iter().map(|l| (l - log_scale).exp()).collect();
    let h = surf.h;
    let nu = hi - lo - 1;
    let mut sd = vec![0.0; nu];
    let mut so = vec![0.0; nu - 1];
    let mut pd = vec![0.0; nu];
    let mut po = vec![0.0; nu - 1];
    let mut md = vec![0.0; nu];
    let mut mo = vec![0.0; nu - 1];
    for e in 0..(hi - lo) {
        let (a0, a1) = (a[e], a[e + 1]);
        let (c0, c1) = (a0 * potential[lo + e], a1 * potential[lo + e + 1]);
        let k_el = (a0 + a1) / (2.0 * h);
        let m00 = h * (3.0 * a0 + a1) / 12.0;
        let m11 = h * (a0 + 3.0 * a1) / 12.0;
        let m01 = h * (a0 + a1) / 12.0;
        let p00 = h * (3.0 * c0 + c1) / 12.0;
        let p11 = h * (c0 + 3.0 * c1) / 12.0;
        let p01 = h * (c0 + c1) / 12.0;
        // Window node indices of the element ends are e and e+1; unknown
        // index is the window index minus one.
        let left = e.checked_sub(1);
        let right = if e + 1 <= nu { Some(e) } else { None };
        if let Some(i) = left {
            sd[i] += k_el;
            pd[i] += p00;
            md[i] += m00;
        }
        if let Some(j) = right {
            sd[j] += k_el;
            pd[j] += p11;
            md[j] += m11;
        }
        if let (Some(i), Some(j)) = (left, right) {
            debug_assert_eq!(i + 1, j);
            so[i] += -k_el;
            po[i] += p01;
            mo[i] += m01;
        }
    }
    let mut ad = vec![0.0; nu];
    let mut ao = vec![0.0; nu - 1];
    for i in 0..nu {
        ad[i] = sd[i] + pd[i];
    }
    for i in 0..nu - 1 {
        ao[i] = so[i] + po[i];
    }
    Ok(Assembled {
        stiff: SymTridiag::new(sd, so),
        apot: SymTridiag::new(ad, ao),
        mass: SymTridiag::new(md, mo),
        lo: lo + 1,
        log_scale,
        h,
    })
}

/// V_m at every node of the grid.
pub fn mode_potential(surf: &SurfaceGrid, m: usize) -> Vec<Real> {
    let mfac = (m * (m + surf.n - 2)) as Real;
    (0..surf.len())
        .map(|i| 0.5 - surf.norm_a2[i] + mfac / (surf.r[i] * surf.r[i]))
        .collect()
}

/// Assembles the m-th Jacobi mode pencil at the natural weight.
pub fn assemble_mode(
    surf: &SurfaceGrid,
    m: usize,
    cfg: &SpectralConfig,
) -> Result<Assembled, SpecError> {
    let (lo, hi) = surf.index_range_abs_s(cfg.s_trunc);
    if lo >= hi {
        return Err(SpecError::TruncationTooSmall {
            reason: format!("no nodes with |s| <= {}", cfg.s_trunc),
        });
    }
    assemble_operator(surf, lo, hi, NATURAL_WEIGHT, &mode_potential(surf, m))
}

#[derive(Clone, Debug, Serialize)]
pub struct ModeSpectrum {
    pub m: usize,
    pub mult: usize,
    pub eigs: Vec<Real>,
    pub neg: usize,
    pub zero: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumReport {
    pub modes: Vec<ModeSpectrum>,
    /// Multiplicity-weighted count of eigenvalues below -null_tol.
    pub index: usize,
    /// Multiplicity-weighted count within [-null_tol, null_tol].
    pub nullity: usize,
    /// First mode whose bottom eigenvalue is positive; the scan stops there.
    pub m_stop: usize,
    pub unknowns: usize,
}

/// Morse index and nullity of the weighted stability pencil, scanning
/// angular modes until monotonicity guarantees the remainder is positive.
pub fn morse_index(surf: &SurfaceGrid, cfg: &SpectralConfig) -> Result<SpectrumReport, SpecError> {
    let cap = cfg.m_max.unwrap_or(64);
    let mut modes = Vec::new();
    let mut index = 0usize;
    let mut nullity = 0usize;
    let mut unknowns = 0usize;
    let mut m_stop = None;
    for m in 0..=cap {
        let asm = assemble_mode(surf, m, cfg)?;
        unknowns = asm.unknowns();
        let neg = count_below(&asm.apot, &asm.mass, -cfg.null_tol);
        let nonpos = count_below(&asm.apot, &asm.mass, cfg.null_tol);
        let zero = nonpos - neg;
        let k = cfg.k_eigs.max(nonpos + 1).min(asm.unknowns());
        let eigs = lowest_eigenvalues(&asm.apot, &asm.mass, k);
        let mu1 = eigs[0];
        let mult = mode_multiplicity(surf.n, m);
        index += mult * neg;
        nullity += mult * zero;
        modes.push(ModeSpectrum { m, mult, eigs, neg, zero });
        if mu1 > cfg.null_tol {
            m_stop = Some(m);
            break;
        }
    }
    match m_stop {
        Some(m_stop) => Ok(SpectrumReport { modes, index, nullity, m_stop, unknowns }),
        None => {
            let mu1 = modes.last().map(|md| md.eigs[0]).unwrap_or(Real::NEG_INFINITY);
            Err(SpecError::IndexIncomplete { m: cap, mu1 })
        }
    }
}

/// Eigenpairs of one mode pencil, deflated in order. Vectors live on the
/// interior unknowns; `pad_to_grid` maps them back to surface nodes.
pub fn mode_eigenpairs(
    asm: &Assembled,
    k: usize,
) -> Vec<EigPair<Real>> {
    let vals = lowest_eigenvalues(&asm.apot, &asm.mass, k.min(asm.unknowns()));
    let mut out: Vec<EigPair<Real>> = Vec::with_capacity(vals.len());
    for &mu in &vals {
        let prior: Vec<Vec<Real>> = out.iter().map(|p| p.vector.clone()).collect();
        out.push(eigenpair(&asm.apot, &asm.mass, mu, &prior));
    }
    out
}

/// Zero-pads an interior eigenvector onto the full surface grid and fixes
/// its sign so the largest component is positive.
pub fn pad_to_grid(surf: &SurfaceGrid, asm: &Assembled, vector: &[Real]) -> Vec<Real> {
    let mut full = vec![0.0; surf.len()];
    let mut peak = 0.0;
    let mut sign = 1.0;
    for &v in vector {
        if v.abs() > peak {
            peak = v.abs();
            sign = if v < 0.0 { -1.0 } else { 1.0 };
        }
    }
    for (j, &v) in vector.iter().enumerate() {
        full[asm.lo + j] = sign * v;
    }
    full
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct DecayFit {
    /// Least-squares slope of -log|u| against |x|^2.
    pub pointwise_rate: Real,
    /// Weighted-membership exponent: u lies in the beta-weighted L2 space
    /// for every beta below this value. Twice the pointwise rate, because
    /// u^2 e^{beta |x|^2} integrates iff beta < 2 * rate.
    pub beta_fit: Real,
    pub stderr: Real,
    pub samples: usize,
    /// |x|^2 range of the fit window.
    pub window_x2: (Real, Real),
}

/// Fits the Gaussian decay rate of a sampled function on the outer part
/// of the grid, skipping the boundary-distorted fringe.
pub fn decay_fit(surf: &SurfaceGrid, u: &[Real]) -> Result<DecayFit, SpecError> {
    if u.len() != surf.len() {
        return Err(SpecError::BadInput {
            reason: format!("{} samples on a grid of {}", u.len(), surf.len()),
        });
    }
    let floor = 1e-280;
    let xmax = (0..u.len())
        .filter(|&i| u[i].abs() > floor)
        .map(|i| surf.xnorm2[i].sqrt())
        .fold(0.0 as Real, Real::max);
    if xmax == 0.0 {
        return Err(SpecError::BadInput { reason: "function is identically negligible".into() });
    }
    let (x_lo, x_hi) = (0.45 * xmax, 0.85 * xmax);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 0..u.len() {
        let x = surf.xnorm2[i].sqrt();
        if x >= x_lo && x <= x_hi && u[i].abs() > floor {
            xs.push(surf.xnorm2[i]);
            ys.push(-u[i].abs().ln());
        }
    }
    if xs.len() < 30 {
        return Err(SpecError::FitWindow { got: xs.len(), need: 30 });
    }
    let lf = line_fit(&xs, &ys).ok_or(SpecError::BadInput {
        reason: "degenerate decay fit".into(),
    })?;
    Ok(DecayFit {
        pointwise_rate: lf.slope,
        beta_fit: 2.0 * lf.slope,
        stderr: lf.slope_stderr,
        samples: xs.len(),
        window_x2: (x_lo * x_lo, x_hi * x_hi),
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ConcentrationReport {
    /// Smallest sampled radius whose exterior 3/8-weighted energy is at
    /// most eps times the natural-weight mass of u.
    pub r1: Real,
    /// Achieved tail fraction at r1.
    pub tail_fraction: Real,
    pub eps: Real,
}

/// Locates the concentration radius: beyond r1 the function carries, in
/// the strictly heavier 3/8-weight, at most eps of its natural mass.
pub fn concentration_check(
    surf: &SurfaceGrid,
    u: &[Real],
    eps: Real,
) -> Result<ConcentrationReport, SpecError> {
    if u.len() != surf.len() {
        return Err(SpecError::BadInput {
            reason: format!("{} samples on a grid of {}", u.len(), surf.len()),
        });
    }
    if !(eps > 0.0) {
        return Err(SpecError::BadInput { reason: format!("eps must be positive, got {eps}") });
    }
    // Gradient energy per node from the flanking P1 elements: exact for
    // the piecewise-linear object, and free of the stencil ringing a
    // high-order difference would produce at a Dirichlet cut.
    let len = u.len();
    let h2 = surf.h * surf.h;
    let grad_sq: Vec<Real> = (0..len)
        .map(|i| {
            let left = if i > 0 { (u[i] - u[i - 1]).powi(2) / h2 } else { 0.0 };
            let right = if i + 1 < len { (u[i + 1] - u[i]).powi(2) / h2 } else { 0.0 };
            let sides = (i > 0) as usize + (i + 1 < len) as usize;
            (left + right) / sides.max(1) as Real
        })
        .collect();
    let natural = surf.weighted(NATURAL_WEIGHT);
    let (b_scaled, b_shift) = natural.quadrature_log(|i| u[i] * u[i]);
    if b_scaled == 0.0 {
        return Err(SpecError::BadInput { reason: "function has zero mass".into() });
    }
    let heavy = surf.weighted(0.375);
    // Nodes sorted by decreasing radius; the tail at radius |x_k| is the
    // prefix sum of the weighted energy over nodes further out.
    let mut order: Vec<usize> = (0..u.len()).collect();
    order.sort_by(|&a, &b| surf.xnorm2[b].partial_cmp(&surf.xnorm2[a]).unwrap());
    // log budget: eps * B[u] in the heavy quadrature's scale.
    let budget = eps * b_scaled * (b_shift - heavy.log_shift).exp();
    let mut acc = 0.0;
    let mut r1 = surf.xnorm2[order[0]].sqrt();
    let mut included = 0usize;
    for &i in &order {
        let term = (heavy.log_weight(i) - heavy.log_shift).exp() * (grad_sq[i] + u[i] * u[i]);
        if acc + term > budget {
            break;
        }
        acc += term;
        r1 = surf.xnorm2[i].sqrt();
        included += 1;
    }
    if included == 0 {
        return Err(SpecError::TruncationTooSmall {
            reason: format!(
                "outermost sample alone exceeds the eps = {eps} budget; extend the grid"
            ),
        });
    }
    Ok(ConcentrationReport { r1, tail_fraction: acc / budget * eps, eps })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct IsoReport {
    pub beta: Real,
    /// Measured |u|_{W^1_beta} / |f|_{L^2_beta}; bounded by 2.
    pub ratio: Real,
    pub unknowns: usize,
}

/// Solves (-div(a grad) + a/2) u = a f weakly at weight beta and measures
/// the first-order norm of u against the source norm. Testing the weak
/// equation with u gives int(|du|^2 + u^2/2) = int f u <= |f| |u|, hence
/// int(|du|^2 + u^2) <= 4 int f^2: the measured ratio certifies the
/// conditioning constant 2 of the shifted operator.
pub fn iso_conditioning(
    surf: &SurfaceGrid,
    beta: Real,
    f: &[Real],
    cfg: &SpectralConfig,
) -> Result<IsoReport, SpecError> {
    if f.len() != surf.len() {
        return Err(SpecError::BadInput {
            reason: format!("{} samples on a grid of {}", f.len(), surf.len()),
        });
    }
    if beta < 0.25 {
        return Err(SpecError::BadInput {
            reason: format!("conditioning bound needs beta >= 1/4, got {beta}"),
        });
    }
    let (lo, hi) = surf.index_range_abs_s(cfg.s_trunc);
    let half = vec![0.5; surf.len()];
    let asm = assemble_operator(surf, lo, hi, beta, &half)?;
    let fi: Vec<Real> = (0..asm.unknowns()).map(|j| f[asm.lo + j]).collect();
    let rhs = asm.mass.matvec(&fi);
    let fact = ldlt(&asm.apot, &asm.mass, 0.0).ok_or(SpecError::BadInput {
        reason: "operator factorization failed; potential is not coercive".into(),
    })?;
    let u = fact.solve(&rhs);
    let su = asm.stiff.matvec(&u);
    let mu = asm.mass.matvec(&u);
    let mf = asm.mass.matvec(&fi);
    let dot = |x: &[Real], y: &[Real]| x.iter().zip(y).map(|(a, b)| a * b).sum::<Real>();
    let num = dot(&u, &su) + dot(&u, &mu);
    let den = dot(&fi, &mf);
    if !(den > 0.0) {
        return Err(SpecError::BadInput { reason: "source has zero mass in the window".into() });
    }
    Ok(IsoReport { beta, ratio: (num / den).sqrt(), unknowns: asm.unknowns() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ProfileCurve, ProfileSample};
    use crate::numeric::ode::integrate_to;
    use crate::shooting::{integrate_profile, ShootConfig};

    fn annulus(n: usize, ra: Real, rb: Real, step: Real) -> SurfaceGrid {
        let count = ((rb - ra) / step).round() as usize + 1;
        let samples: Vec<ProfileSample> = (0..count)
            .map(|i| ProfileSample { s: i as Real * step, r: ra + i as Real * step, z: 0.0, theta: 0.0 })
            .collect();
        let p = ProfileCurve { n, step, samples };
        SurfaceGrid::from_profile(&p, false, 1).unwrap()
    }

    /// Dirichlet eigenvalues of the annulus mode operator by shooting:
    /// integrate f'' = -((n-1)/r + r/2) f' + (V - mu) f from f(ra) = 0,
    /// f'(ra) = 1 and bisect mu on the sign of f(rb).
    fn annulus_eigs_by_shooting(n: usize, m: usize, ra: Real, rb: Real, k: usize) -> Vec<Real> {
        let mfac = (m * (m + n - 2)) as Real;
        let end = |mu: Real| -> Real {
            let rhs = move |r: Real, y: &[Real; 2]| {
                let v = 0.5 + mfac / (r * r);
                [y[1], -((n as Real - 1.0) / r + 0.5 * r) * y[1] + (v - mu) * y[0]]
            };
            let mut watch = |_: Real, _: &[Real; 2]| true;
            let (_, y) = integrate_to(&rhs, ra, [0.0, 1.0], rb, 1e-12, 1e-12, 1e-3, &mut watch).unwrap();
            y[0]
        };
        let mut eigs = Vec::new();
        let mut mu = 0.0;
        let mut prev = end(mu);
        while eigs.len() < k {
            let next = mu + 0.05;
            let f_next = end(next);
            if (prev > 0.0) != (f_next > 0.0) {
                let (mut a, mut b) = (mu, next);
                for _ in 0..80 {
                    let c = 0.5 * (a + b);
                    if (end(c) > 0.0) == (end(a) > 0.0) {
                        a = c;
                    } else {
                        b = c;
                    }
                }
                eigs.push(0.5 * (a + b));
            }
            mu = next;
            prev = f_next;
        }
        eigs
    }

    #[test]
    fn annulus_pencil_matches_independent_shooting() {
        let n = 2;
        let surf = annulus(n, 0.5, 6.0, 1e-3);
        for m in [0usize, 2] {
            let asm = assemble_operator(&surf, 0, surf.len() - 1, NATURAL_WEIGHT, &mode_potential(&surf, m)).unwrap();
            let fem = lowest_eigenvalues(&asm.apot, &asm.mass, 3);
            let oracle = annulus_eigs_by_shooting(n, m, 0.5, 6.0, 3);
            for (f, o) in fem.iter().zip(&oracle) {
                assert!(
                    (f - o).abs() < 1e-4 * (1.0 + o.abs()),
                    "m = {m}: pencil {f} vs shooting {o}"
                );
            }
        }
    }

    #[test]
    fn rotation_field_is_a_discrete_zero_mode() {
        // Rotations of the ambient space preserve the expander equation, so
        // x.T on the m = 1 mode is an exact Jacobi field. Its interior
        // Galerkin rows must vanish at the consistency order h^2.
        let shoot = ShootConfig::default();
        let profile = integrate_profile(1.0, 2, &shoot).unwrap();
        let cfg = SpectralConfig { s_trunc: 8.0, ..Default::default() };
        let mut sup_by_stride = Vec::new();
        for stride in [4usize, 2] {
            let surf = SurfaceGrid::from_profile(&profile, true, stride).unwrap();
            let (lo, hi) = surf.index_range_abs_s(cfg.s_trunc);
            let asm = assemble_operator(&surf, lo, hi, NATURAL_WEIGHT, &mode_potential(&surf, 1)).unwrap();
            let g: Vec<Real> = (0..asm.unknowns()).map(|j| surf.xdott[asm.lo + j]).collect();
            let rows = asm.apot.matvec(&g);
            // Normalize each row by its mass diagonal to get back to
            // pointwise operator scale; an exact Jacobi field leaves only
            // the h^2 consistency error.
            let nu = asm.unknowns();
            let (q1, q3) = (nu / 4, 3 * nu / 4);
            let mut sup = 0.0 as Real;
            for j in q1..q3 {
                sup = sup.max((rows[j] / asm.mass.diag[j]).abs());
            }
            sup_by_stride.push(sup);
        }
        let ratio = sup_by_stride[0] / sup_by_stride[1];
        assert!(sup_by_stride[1] < 5e-3, "residual {}", sup_by_stride[1]);
        assert!(ratio > 2.5 && ratio < 6.0, "halving ratio {ratio}");
    }

    #[test]
    fn truncation_shift_is_negligible() {
        let shoot = ShootConfig::default();
        let profile = integrate_profile(1.0, 2, &shoot).unwrap();
        let surf = SurfaceGrid::from_profile(&profile, true, 2).unwrap();
        let mut mu = Vec::new();
        for s_trunc in [8.0, 10.0] {
            let cfg = SpectralConfig { s_trunc, ..Default::default() };
            let asm = assemble_mode(&surf, 0, &cfg).unwrap();
            mu.push(lowest_eigenvalues(&asm.apot, &asm.mass, 1)[0]);
        }
        assert!((mu[0] - mu[1]).abs() < 1e-8, "truncation shift {}", (mu[0] - mu[1]).abs());
    }

    #[test]
    fn unit_neck_spectrum_is_clean() {
        let shoot = ShootConfig::default();
        let profile = integrate_profile(1.0, 2, &shoot).unwrap();
        let surf = SurfaceGrid::from_profile(&profile, true, 2).unwrap();
        let cfg = SpectralConfig::default();
        let report = morse_index(&surf, &cfg).unwrap();
        assert_eq!(report.nullity, 0, "generic member of the family has no kernel");
        assert!(report.m_stop <= 8);
        assert_eq!(report.modes[0].mult, 1);
        if report.modes.len() > 1 {
            assert_eq!(report.modes[1].mult, 2);
        }
        // The headline counts agree with the reported eigenvalue lists.
        let recount: usize = report
            .modes
            .iter()
            .map(|md| md.mult * md.eigs.iter().filter(|&&e| e < -cfg.null_tol).count())
            .sum();
        assert_eq!(recount, report.index);
        for md in &report.modes {
            for w in md.eigs.windows(2) {
                assert!(w[0] <= w[1] + 1e-12);
            }
        }
        // Eigenvector residuals at the reported bottom eigenvalues.
        let asm = assemble_mode(&surf, 0, &cfg).unwrap();
        for pair in mode_eigenpairs(&asm, 3) {
            assert!(pair.residual < 1e-9, "residual {}", pair.residual);
        }
    }

    #[test]
    fn mode_multiplicities_match_closed_forms() {
        for m in 1..8 {
            assert_eq!(mode_multiplicity(2, m), 2);
            assert_eq!(mode_multiplicity(3, m), 2 * m + 1);
            assert_eq!(mode_multiplicity(4, m), (m + 1) * (m + 1));
        }
        assert_eq!(mode_multiplicity(2, 0), 1);
        assert_eq!(mode_multiplicity(5, 2), 14);
    }

    #[test]
    fn synthetic_gaussian_decay_rate_is_recovered() {
        let shoot = ShootConfig::default();
        let profile = integrate_profile(1.0, 2, &shoot).unwrap();
        let surf = SurfaceGrid::from_profile(&profile, true, 2).unwrap();
        let u: Vec<Real> = (0..surf.len()).map(|i| (-0.45 * surf.xnorm2[i]).exp()).collect();
        let fit = decay_fit(&surf, &u).unwrap();
        assert!((fit.pointwise_rate - 0.45).abs() < 1e-3, "rate {}", fit.pointwise_rate);
        assert!((fit.beta_fit - 0.9).abs() < 2e-3);
        assert!(fit.stderr < 1e-6);
    }

    #[test]
    fn bottom_mode_concentrates() {
        let shoot = ShootConfig::default();
        let profile = integrate_profile(1.0, 2, &shoot).unwrap();
        let surf = SurfaceGrid::from_profile(&profile, true, 2).unwrap();
        let cfg = SpectralConfig::default();
        let asm = assemble_mode(&surf, 0, &cfg).unwrap();
        let pair = &mode_eigenpairs(&asm, 1)[0];
        let u = pad_to_grid(&surf, &asm, &pair.vector);
        let loose = concentration_check(&surf, &u, 1e-3).unwrap();
        let tight = concentration_check(&surf, &u, 1e-6).unwrap();
        assert!(loose.r1 <= tight.r1, "tighter budget cannot shrink the radius");
        assert!(tight.r1 < 11.0);
        assert!(loose.tail_fraction <= loose.eps);
        // A compactly supported function meets any budget at its support
        // radius; an unachievable budget needs full support to trigger.
        let wide: Vec<Real> = (0..surf.len()).map(|i| (-0.3 * surf.xnorm2[i]).exp()).collect();
        assert!(concentration_check(&surf, &wide, 1e-300).is_err());
    }

    #[test]
    fn shifted_solve_is_two_conditioned() {
        let shoot = ShootConfig::default();
        let profile = integrate_profile(1.0, 2, &shoot).unwrap();
        let surf = SurfaceGrid::from_profile(&profile, true, 2).unwrap();
        let cfg = SpectralConfig::default();
        let f: Vec<Real> = (0..surf.len())
            .map(|i| {
                let t: Real = (surf.s[i] - 1.0) / 2.0;
                if t.abs() < 1.0 { ((-1.0) / (1.0 - t * t)).exp() } else { 0.0 }
            })
            .collect();
        for beta in [0.25, 0.375] {
            let rep = iso_conditioning(&surf, beta, &f, &cfg).unwrap();
            assert!(rep.ratio <= 2.0 * 1.01, "beta {beta}: ratio {}", rep.ratio);
            assert!(rep.ratio > 0.1, "solve produced a trivial answer");
        }
        assert!(iso_conditioning(&surf, 0.1, &f, &cfg).is_err());
    }
}
