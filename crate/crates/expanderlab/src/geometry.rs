//! Profile curves for rotationally symmetric hypersurfaces, their
//! curvature, the expander and shrinker residuals, Gaussian-weighted
//! measures and Sobolev-type norms, and cone-scale diagnostics.
//!
//! A profile is an arclength-sampled curve s -> (r(s), z(s)) in the open
//! half-plane r > 0 together with the tangent angle theta, so that
//! (r', z') = (cos theta, sin theta). The hypersurface is its orbit under
//! rotation about the z axis. The unit normal used throughout is
//! nu = (-sin theta, cos theta); with the divergence convention for the
//! scalar mean curvature this gives
//!
//!   H = -(theta' + (n-1) sin(theta) / r),
//!   x . n = -r sin(theta) + z cos(theta),
//!
//! and the expander and shrinker residuals are H + (x.n)/2 and
//! H - (x.n)/2. Signs are pinned by the unit tests: round spheres and
//! cylinders of the critical radii solve the shrinker equation exactly,
//! hyperplanes through the origin solve both.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::stencil::{deriv1, deriv2, BoundaryMode};
use crate::Real;

/// Exponent of the natural expander weight e^{|x|^2/4}.
pub const NATURAL_WEIGHT: Real = 0.25;

#[derive(Error, Debug)]
pub enum GeomError {
    #[error("profile needs at least {need} samples, got {got}")]
    TooShort { got: usize, need: usize },
    #[error("surface dimension must be at least 2, got {0}")]
    BadDimension(usize),
    #[error("sample spacing breaks at index {index}: {found} vs declared step {step}")]
    NonUniformSpacing { index: usize, found: Real, step: Real },
    #[error("non-positive radius {r} at sample {index}")]
    NonPositiveRadius { index: usize, r: Real },
    #[error("tangent angle disagrees with positions at sample {index}: deviation {dev}, bound {bound}")]
    NotUnitSpeed { index: usize, dev: Real, bound: Real },
    #[error("profile does not start on the z = 0 plane with a vertical tangent; cannot mirror")]
    MirrorJunction,
    #[error("stride {0} leaves fewer than 6 samples")]
    BadStride(usize),
    #[error("field has {found} entries, grid has {expected}")]
    LengthMismatch { found: usize, expected: usize },
    #[error("weighted integrand grows along the tail at beta = {beta}; truncated integral is not converging")]
    DivergentTail { beta: Real },
    #[error("cone-scale estimates hold at no sampled radius; profile too short or not asymptotically conical")]
    ConeScaleUnresolved,
}

/// One arclength sample of a profile curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileSample {
    pub s: Real,
    pub r: Real,
    pub z: Real,
    pub theta: Real,
}

/// Uniformly sampled profile curve of an n-dimensional rotationally
/// symmetric hypersurface in R^{n+1}.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProfileCurve {
    pub n: usize,
    pub step: Real,
    pub samples: Vec<ProfileSample>,
}

impl ProfileCurve {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn s_max(&self) -> Real {
        self.samples.last().map(|q| q.s).unwrap_or(0.0)
    }

    /// Sanity gate for externally supplied profiles: uniform spacing,
    /// positive radius, and tangent angle consistent with the positions.
    /// The tangent check compares central differences of (r, z) against
    /// (cos theta, sin theta) with bound `tol * step`; it catches wrong
    /// parameterizations, not discretization error, so `tol` is generous
    /// (10.0 by default at call sites).
    pub fn validate(&self, tol: Real) -> Result<(), GeomError> {
        if self.len() < 6 {
            return Err(GeomError::TooShort { got: self.len(), need: 6 });
        }
        if self.n < 2 {
            return Err(GeomError::BadDimension(self.n));
        }
        let h = self.step;
        for (i, q) in self.samples.iter().enumerate() {
            if !(q.r > 0.0) {
                return Err(GeomError::NonPositiveRadius { index: i, r: q.r });
            }
            if i > 0 {
                let ds = q.s - self.samples[i - 1].s;
                if (ds - h).abs() > 1e-9 * h.max(1.0) {
                    return Err(GeomError::NonUniformSpacing { index: i, found: ds, step: h });
                }
            }
        }
        let bound = tol * h;
        for i in 1..self.len() - 1 {
            let dr = (self.samples[i + 1].r - self.samples[i - 1].r) / (2.0 * h);
            let dz = (self.samples[i + 1].z - self.samples[i - 1].z) / (2.0 * h);
            let dev = (dr - self.samples[i].theta.cos()).hypot(dz - self.samples[i].theta.sin());
            if dev > bound {
                return Err(GeomError::NotUnitSpeed { index: i, dev, bound });
            }
        }
        Ok(())
    }
}

/// Area of the unit sphere S^dim in R^{dim+1}: 2 pi^{(dim+1)/2} / Gamma((dim+1)/2).
pub fn unit_sphere_area(dim: usize) -> Real {
    let k = dim + 1;
    let pi = std::f64::consts::PI;
    // Gamma(k/2) by the half-integer recursion.
    let gamma_half_k = if k % 2 == 0 {
        let m = k / 2;
        (1..m).fold(1.0, |acc, j| acc * j as Real)
    } else {
        let m = k / 2; // Gamma(m + 1/2)
        let mut g = pi.sqrt();
        for j in 0..m {
            g *= j as Real + 0.5;
        }
        g
    };
    2.0 * pi.powf(k as Real / 2.0) / gamma_half_k
}

/// Pointwise curvature and position-projection fields along a profile.
#[derive(Clone, Debug)]
pub struct CurvatureData {
    /// Turning rate of the profile curve; the primary route (theta').
    pub kappa_prof: Vec<Real>,
    /// Cross-check route r' z'' - z' r'' from position derivatives alone.
    pub kappa_prof_alt: Vec<Real>,
    /// Rotational principal curvature sin(theta)/r.
    pub kappa_rot: Vec<Real>,
    /// Scalar mean curvature in the divergence convention.
    pub h_mean: Vec<Real>,
    /// Squared norm of the second fundamental form.
    pub norm_a2: Vec<Real>,
    /// x . n per sample.
    pub xdotn: Vec<Real>,
    /// x . T per sample; |x^T| is its absolute value.
    pub xdott: Vec<Real>,
    /// Sup distance between the two profile-curvature routes.
    pub route_gap: Real,
}

pub(crate) fn curvature_arrays(
    n: usize,
    h: Real,
    r: &[Real],
    z: &[Real],
    theta: &[Real],
    mode: BoundaryMode,
) -> CurvatureData {
    let len = r.len();
    // theta' directly for open arcs; closed profiles wrap theta by -2 pi
    // per period, so differentiate (cos theta, sin theta) there instead.
    let kappa_prof: Vec<Real> = match mode {
        BoundaryMode::OneSided => deriv1(theta, h, mode),
        BoundaryMode::Periodic => {
            let ct: Vec<Real> = theta.iter().map(|t| t.cos()).collect();
            let st: Vec<Real> = theta.iter().map(|t| t.sin()).collect();
            let dct = deriv1(&ct, h, mode);
            let dst = deriv1(&st, h, mode);
            (0..len).map(|i| ct[i] * dst[i] - st[i] * dct[i]).collect()
        }
    };
    let rp = deriv1(r, h, mode);
    let zp = deriv1(z, h, mode);
    let rpp = deriv2(r, h, mode);
    let zpp = deriv2(z, h, mode);
    let kappa_prof_alt: Vec<Real> = (0..len)
        .map(|i| {
            let g = rp[i] * rp[i] + zp[i] * zp[i];
            (rp[i] * zpp[i] - zp[i] * rpp[i]) / g.powf(1.5)
        })
        .collect();
    let mut route_gap: Real = 0.0;
    for i in 0..len {
        route_gap = route_gap.max((kappa_prof[i] - kappa_prof_alt[i]).abs());
    }
    let kappa_rot: Vec<Real> = (0..len).map(|i| theta[i].sin() / r[i]).collect();
    let h_mean: Vec<Real> = (0..len)
        .map(|i| -(kappa_prof[i] + (n as Real - 1.0) * kappa_rot[i]))
        .collect();
    let norm_a2: Vec<Real> = (0..len)
        .map(|i| kappa_prof[i] * kappa_prof[i] + (n as Real - 1.0) * kappa_rot[i] * kappa_rot[i])
        .collect();
    let xdotn: Vec<Real> = (0..len)
        .map(|i| -r[i] * theta[i].sin() + z[i] * theta[i].cos())
        .collect();
    let xdott: Vec<Real> = (0..len)
        .map(|i| r[i] * theta[i].cos() + z[i] * theta[i].sin())
        .collect();
    CurvatureData {
        kappa_prof,
        kappa_prof_alt,
        kappa_rot,
        h_mean,
        norm_a2,
        xdotn,
        xdott,
        route_gap,
    }
}

/// Curvature fields of an open profile arc.
pub fn curvature(p: &ProfileCurve) -> Result<CurvatureData, GeomError> {
    p.validate(10.0)?;
    let r: Vec<Real> = p.samples.iter().map(|q| q.r).collect();
    let z: Vec<Real> = p.samples.iter().map(|q| q.z).collect();
    let th: Vec<Real> = p.samples.iter().map(|q| q.theta).collect();
    Ok(curvature_arrays(p.n, p.step, &r, &z, &th, BoundaryMode::OneSided))
}

/// Pointwise PDE residual along a profile plus summary norms.
#[derive(Clone, Debug)]
pub struct ResidualReport {
    pub per_sample: Vec<Real>,
    pub sup: Real,
    /// L^2 norm against the natural weight e^{|x|^2/4}.
    pub l2_weighted: Real,
}

fn residual_impl(p: &ProfileCurve, sign: Real, mode: BoundaryMode) -> Result<ResidualReport, GeomError> {
    p.validate(10.0)?;
    let r: Vec<Real> = p.samples.iter().map(|q| q.r).collect();
    let z: Vec<Real> = p.samples.iter().map(|q| q.z).collect();
    let th: Vec<Real> = p.samples.iter().map(|q| q.theta).collect();
    let cur = curvature_arrays(p.n, p.step, &r, &z, &th, mode);
    let per_sample: Vec<Real> = (0..p.len())
        .map(|i| cur.h_mean[i] + sign * 0.5 * cur.xdotn[i])
        .collect();
    let sup = per_sample.iter().fold(0.0 as Real, |a, &v| a.max(v.abs()));
    let xnorm2: Vec<Real> = (0..p.len()).map(|i| r[i] * r[i] + z[i] * z[i]).collect();
    let wg = WeightedGrid::from_arrays(
        p.n,
        p.step,
        &r,
        &xnorm2,
        NATURAL_WEIGHT,
        mode == BoundaryMode::Periodic,
    );
    let (scaled, shift) = wg.quadrature_log(|i| per_sample[i] * per_sample[i]);
    let l2_weighted = if scaled > 0.0 { (0.5 * (scaled.ln() + shift)).exp() } else { 0.0 };
    Ok(ResidualReport { per_sample, sup, l2_weighted })
}

/// Residual of the self-expander equation H + (x.n)/2 = 0.
pub fn expander_residual(p: &ProfileCurve) -> Result<ResidualReport, GeomError> {
    residual_impl(p, 1.0, BoundaryMode::OneSided)
}

/// Residual of the self-shrinker equation H - (x.n)/2 = 0. Pass
/// `closed = true` for a full closed profile sampled over one period
/// without a duplicated seam point.
pub fn shrinker_residual(p: &ProfileCurve, closed: bool) -> Result<ResidualReport, GeomError> {
    residual_impl(p, -1.0, if closed { BoundaryMode::Periodic } else { BoundaryMode::OneSided })
}

/// Discrete hypersurface carrier: profile samples (optionally mirrored
/// across z = 0 into a double cone shape), curvature fields, and the
/// projections entering operator coefficients. All grids are uniform in
/// arclength.
#[derive(Clone, Debug)]
pub struct SurfaceGrid {
    pub n: usize,
    pub h: Real,
    pub closed: bool,
    pub s: Vec<Real>,
    pub r: Vec<Real>,
    pub z: Vec<Real>,
    pub theta: Vec<Real>,
    pub kappa_prof: Vec<Real>,
    pub kappa_rot: Vec<Real>,
    pub norm_a2: Vec<Real>,
    pub xdotn: Vec<Real>,
    pub xdott: Vec<Real>,
    pub xnorm2: Vec<Real>,
}

impl SurfaceGrid {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    /// dr/ds at node i.
    pub fn rprime(&self, i: usize) -> Real {
        self.theta[i].cos()
    }

    fn boundary_mode(&self) -> BoundaryMode {
        if self.closed {
            BoundaryMode::Periodic
        } else {
            BoundaryMode::OneSided
        }
    }

    /// Builds the grid from a profile arc starting on the z = 0 plane.
    /// With `mirror` the arc is reflected across that plane, producing an
    /// even r and odd z; the reflection is C^1 because the arc starts with
    /// a vertical tangent. `stride` subsamples the profile.
    pub fn from_profile(p: &ProfileCurve, mirror: bool, stride: usize) -> Result<Self, GeomError> {
        p.validate(10.0)?;
        if stride == 0 || (p.len() - 1) / stride < 5 {
            return Err(GeomError::BadStride(stride));
        }
        let h = p.step * stride as Real;
        let picked: Vec<&ProfileSample> = p.samples.iter().step_by(stride).collect();
        let m = picked.len() - 1;
        if mirror {
            let q0 = picked[0];
            if q0.z.abs() > 1e-9 || (q0.theta - std::f64::consts::FRAC_PI_2).abs() > 1e-9 {
                return Err(GeomError::MirrorJunction);
            }
        }
        let (s, r, z, theta): (Vec<Real>, Vec<Real>, Vec<Real>, Vec<Real>) = if mirror {
            let len = 2 * m + 1;
            let mut s = Vec::with_capacity(len);
            let mut r = Vec::with_capacity(len);
            let mut z = Vec::with_capacity(len);
            let mut th = Vec::with_capacity(len);
            for i in 0..len {
                let k = i as isize - m as isize;
                let q = picked[k.unsigned_abs()];
                s.push(k as Real * h);
                r.push(q.r);
                if k < 0 {
                    z.push(-q.z);
                    th.push(std::f64::consts::PI - q.theta);
                } else {
                    z.push(q.z);
                    th.push(q.theta);
                }
            }
            (s, r, z, th)
        } else {
            (
                picked.iter().map(|q| q.s).collect(),
                picked.iter().map(|q| q.r).collect(),
                picked.iter().map(|q| q.z).collect(),
                picked.iter().map(|q| q.theta).collect(),
            )
        };
        let cur = curvature_arrays(p.n, h, &r, &z, &theta, BoundaryMode::OneSided);
        let xnorm2: Vec<Real> = r.iter().zip(&z).map(|(a, b)| a * a + b * b).collect();
        Ok(SurfaceGrid {
            n: p.n,
            h,
            closed: false,
            s,
            r,
            z,
            theta,
            kappa_prof: cur.kappa_prof,
            kappa_rot: cur.kappa_rot,
            norm_a2: cur.norm_a2,
            xdotn: cur.xdotn,
            xdott: cur.xdott,
            xnorm2,
        })
    }

    /// Builds the grid from a closed profile sampled over one period
    /// without a duplicated seam sample; stencils wrap periodically.
    pub fn from_closed_profile(p: &ProfileCurve) -> Result<Self, GeomError> {
        p.validate(10.0)?;
        let r: Vec<Real> = p.samples.iter().map(|q| q.r).collect();
        let z: Vec<Real> = p.samples.iter().map(|q| q.z).collect();
        let theta: Vec<Real> = p.samples.iter().map(|q| q.theta).collect();
        let s: Vec<Real> = p.samples.iter().map(|q| q.s).collect();
        let cur = curvature_arrays(p.n, p.step, &r, &z, &theta, BoundaryMode::Periodic);
        let xnorm2: Vec<Real> = r.iter().zip(&z).map(|(a, b)| a * a + b * b).collect();
        Ok(SurfaceGrid {
            n: p.n,
            h: p.step,
            closed: true,
            s,
            r,
            z,
            theta,
            kappa_prof: cur.kappa_prof,
            kappa_rot: cur.kappa_rot,
            norm_a2: cur.norm_a2,
            xdotn: cur.xdotn,
            xdott: cur.xdott,
            xnorm2,
        })
    }

    /// Weighted measure omega_{n-1} r^{n-1} e^{beta |x|^2} ds on this grid.
    pub fn weighted(&self, beta: Real) -> WeightedGrid {
        WeightedGrid::from_arrays(self.n, self.h, &self.r, &self.xnorm2, beta, self.closed)
    }

    /// Derivative of per-node samples along the grid, at the grid's
    /// boundary mode (fourth order).
    pub fn deriv(&self, values: &[Real]) -> Vec<Real> {
        deriv1(values, self.h, self.boundary_mode())
    }

    /// Inclusive index range of nodes with |s| <= s_lim.
    pub fn index_range_abs_s(&self, s_lim: Real) -> (usize, usize) {
        let mut lo = self.len();
        let mut hi = 0;
        for (i, &s) in self.s.iter().enumerate() {
            if s.abs() <= s_lim + 1e-12 {
                lo = lo.min(i);
                hi = hi.max(i);
            }
        }
        (lo, hi)
    }
}

/// Quadrature weights for the measure omega_{n-1} r^{n-1} e^{beta |x|^2} ds
/// (trapezoid rule; rectangle rule on closed grids). Weights are built in
/// the log domain and factored against their peak so that large exponents
/// never overflow intermediates.
#[derive(Clone, Debug)]
pub struct WeightedGrid {
    pub beta: Real,
    /// Peak log-weight factored out of `w`.
    pub log_shift: Real,
    w: Vec<Real>,
}

impl WeightedGrid {
    pub fn from_arrays(
        n: usize,
        h: Real,
        r: &[Real],
        xnorm2: &[Real],
        beta: Real,
        closed: bool,
    ) -> Self {
        let len = r.len();
        let log_omega = unit_sphere_area(n - 1).ln();
        let mut log_w: Vec<Real> = (0..len)
            .map(|i| log_omega + (n as Real - 1.0) * r[i].ln() + beta * xnorm2[i] + h.ln())
            .collect();
        if !closed {
            log_w[0] -= std::f64::consts::LN_2;
            log_w[len - 1] -= std::f64::consts::LN_2;
        }
        let log_shift = log_w.iter().cloned().fold(Real::NEG_INFINITY, Real::max);
        let w = log_w.iter().map(|lw| (lw - log_shift).exp()).collect();
        WeightedGrid { beta, log_shift, w }
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    /// Weight of node i in absolute scale. May overflow for extreme
    /// exponents; use `log_weight` where that matters.
    pub fn weight(&self, i: usize) -> Real {
        self.log_shift.exp() * self.w[i]
    }

    pub fn log_weight(&self, i: usize) -> Real {
        self.log_shift + self.w[i].ln()
    }

    /// Sum of w_i f(i) in absolute scale.
    pub fn quadrature(&self, f: impl Fn(usize) -> Real) -> Real {
        let (scaled, shift) = self.quadrature_log(&f);
        shift.exp() * scaled
    }

    /// Sum returned as (scaled value, log shift): the integral equals
    /// scaled * e^{shift}. Immune to overflow of the weight scale.
    pub fn quadrature_log(&self, f: impl Fn(usize) -> Real) -> (Real, Real) {
        let mut acc = 0.0;
        for (i, wi) in self.w.iter().enumerate() {
            acc += wi * f(i);
        }
        (acc, self.log_shift)
    }
}

fn max_abs(v: &[Real]) -> Real {
    v.iter().fold(0.0 as Real, |a, &x| a.max(x.abs()))
}

/// Flags integrands whose weighted tail grows toward an open end of the
/// grid: the truncated sum then tracks the truncation radius instead of
/// converging. `g` must be the already-weighted per-node integrand (any
/// common scale).
fn tail_grows(g: &[Real]) -> bool {
    let len = g.len();
    let k = (len / 16).clamp(16, len / 4).max(4);
    let check = |window: &mut dyn Iterator<Item = usize>| -> bool {
        let idx: Vec<usize> = window.collect();
        let vals: Vec<Real> = idx.iter().map(|&i| g[i]).collect();
        let mx = max_abs(&vals);
        if !(mx > 0.0) {
            return false;
        }
        let argmax = vals
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        let mut inner: Vec<Real> = vals[..vals.len() / 2].iter().map(|v| v.abs()).collect();
        inner.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let inner_median = inner[inner.len() / 2];
        // Peak in the outer half of the window and well above the inner
        // half's level: the integrand is still climbing at the cutoff.
        argmax >= vals.len() / 2 && mx > 3.0 * inner_median
    };
    // Outer windows at both open ends, ordered inner to outer.
    check(&mut (len - k..len)) || check(&mut (0..k).rev())
}

/// Weighted Sobolev-type norm of a profile function: order 0 is the
/// weighted L^2 norm, order 1 adds the gradient, order 2 adds the
/// rotationally symmetric Hessian surrogate f''^2 + (n-1)(r' f' / r)^2.
/// `grad` may be omitted, in which case it is differenced from `values`.
/// Growth of the weighted integrand along an open tail is an error: the
/// truncated quadrature would silently track the truncation radius.
pub fn weighted_norm(
    surf: &SurfaceGrid,
    values: &[Real],
    grad: Option<&[Real]>,
    beta: Real,
    order: usize,
) -> Result<Real, GeomError> {
    let len = surf.len();
    if values.len() != len {
        return Err(GeomError::LengthMismatch { found: values.len(), expected: len });
    }
    if let Some(g) = grad {
        if g.len() != len {
            return Err(GeomError::LengthMismatch { found: g.len(), expected: len });
        }
    }
    assert!(order <= 2, "orders above 2 are not defined here");
    let grad_own;
    let grad_ref: Option<&[Real]> = if order >= 1 {
        match grad {
            Some(g) => Some(g),
            None => {
                grad_own = surf.deriv(values);
                Some(&grad_own)
            }
        }
    } else {
        None
    };
    let second: Option<Vec<Real>> = if order >= 2 { Some(surf.deriv(grad_ref.unwrap())) } else { None };
    let nm1 = surf.n as Real - 1.0;
    let density = |i: usize| -> Real {
        let mut v = values[i] * values[i];
        if let Some(g) = grad_ref {
            v += g[i] * g[i];
        }
        if let Some(sec) = &second {
            let ang = surf.rprime(i) * grad_ref.unwrap()[i] / surf.r[i];
            v += sec[i] * sec[i] + nm1 * ang * ang;
        }
        v
    };
    let wg = surf.weighted(beta);
    if !surf.closed {
        let g: Vec<Real> = (0..len).map(|i| density(i) * wg.w[i]).collect();
        if tail_grows(&g) {
            return Err(GeomError::DivergentTail { beta });
        }
    }
    let (scaled, shift) = wg.quadrature_log(density);
    if scaled <= 0.0 {
        return Ok(0.0);
    }
    Ok((0.5 * (scaled.ln() + shift)).exp())
}

/// Convenience wrapper building the half-profile grid first.
pub fn weighted_norm_on_profile(
    p: &ProfileCurve,
    values: &[Real],
    grad: Option<&[Real]>,
    beta: Real,
    order: usize,
) -> Result<Real, GeomError> {
    let surf = SurfaceGrid::from_profile(p, false, 1)?;
    weighted_norm(&surf, values, grad, beta, order)
}

/// Cone-scale diagnostics of an asymptotically conical end.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SurfaceDiagnostics {
    /// sup (1 + |x|^2) |A|^2 over the sampled surface.
    pub k_sigma: Real,
    /// Smallest sampled radius >= 1 beyond which the weakly conical
    /// estimates hold with constant `c0`: | |grad |x|| - 1 | <= c0 |x|^-4
    /// and |A|^2 <= c0 |x|^-2, both <= 1/4.
    pub r0: Real,
    pub c0: Real,
    /// Smallest sampled radius >= r0 beyond which |x^T| >= |x| - 1/|x|;
    /// anchors the boundary-trace Poincare inequality.
    pub r1: Real,
    /// min | grad |x| | beyond r0 (>= 3/4 when the estimates hold).
    pub grad_r_min: Real,
}

pub fn surface_diagnostics(surf: &SurfaceGrid) -> Result<SurfaceDiagnostics, GeomError> {
    let len = surf.len();
    let mut order: Vec<usize> = (0..len).collect();
    order.sort_by(|&a, &b| surf.xnorm2[b].partial_cmp(&surf.xnorm2[a]).unwrap());

    let mut k_sigma: Real = 0.0;
    for i in 0..len {
        k_sigma = k_sigma.max((1.0 + surf.xnorm2[i]) * surf.norm_a2[i]);
    }

    // Walk from the largest radius inward, keeping suffix maxima of the
    // two cone-scale expressions and the suffix validity of the x^T bound.
    let mut best_r0: Option<(Real, Real)> = None;
    let mut best_r1: Option<Real> = None;
    let mut suffix_c0: Real = 0.0;
    let mut xt_ok = true;
    let mut grad_r_min: Real = Real::INFINITY;
    let mut r0_grad_min: Real = Real::INFINITY;
    for &i in &order {
        let x = surf.xnorm2[i].sqrt();
        let grad_r = surf.xdott[i].abs() / x;
        let c_grad = (grad_r - 1.0).abs() * x.powi(4);
        let c_a2 = surf.norm_a2[i] * x * x;
        suffix_c0 = suffix_c0.max(c_grad).max(c_a2);
        grad_r_min = grad_r_min.min(grad_r);
        if xt_ok && surf.xdott[i].abs() + 1e-14 < x - 1.0 / x {
            xt_ok = false;
        }
        if x >= 1.0 && suffix_c0 <= x * x / 4.0 {
            best_r0 = Some((x, suffix_c0));
            r0_grad_min = grad_r_min;
        }
        if xt_ok && x >= 1.0 {
            best_r1 = Some(x);
        }
    }
    let (r0, c0) = best_r0.ok_or(GeomError::ConeScaleUnresolved)?;
    let r1 = best_r1.unwrap_or(Real::INFINITY).max(r0);
    Ok(SurfaceDiagnostics { k_sigma, r0, c0, r1, grad_r_min: r0_grad_min })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Arc of the circle of radius `rho` centered at (c + rho, 0), starting
    /// at (c, 0) with a vertical tangent: r = c + rho (1 - cos(s/rho)),
    /// z = rho sin(s/rho), theta = pi/2 - s/rho.
    fn circle_arc(n: usize, c: Real, rho: Real, step: Real, count: usize) -> ProfileCurve {
        let samples = (0..count)
            .map(|i| {
                let s = i as Real * step;
                ProfileSample {
                    s,
                    r: c + rho * (1.0 - (s / rho).cos()),
                    z: rho * (s / rho).sin(),
                    theta: std::f64::consts::FRAC_PI_2 - s / rho,
                }
            })
            .collect();
        ProfileCurve { n, step, samples }
    }

    /// Radial ray in the z = 0 hyperplane starting at r = r_start.
    fn plane_ray(n: usize, r_start: Real, step: Real, count: usize) -> ProfileCurve {
        let samples = (0..count)
            .map(|i| {
                let s = i as Real * step;
                ProfileSample { s, r: r_start + s, z: 0.0, theta: 0.0 }
            })
            .collect();
        ProfileCurve { n, step, samples }
    }

    /// Sphere of radius `rr` about the origin, sampled away from the poles:
    /// r = rr sin(s/rr), z = rr cos(s/rr), theta = -s/rr (tangent
    /// (cos, sin) = (cos(s/rr), -sin(s/rr))).
    fn sphere_arc(n: usize, rr: Real, step: Real) -> ProfileCurve {
        let s0 = 0.3 * rr;
        let s1 = std::f64::consts::PI * rr - 0.3 * rr;
        let count = ((s1 - s0) / step) as usize;
        let samples = (0..count)
            .map(|i| {
                let s = s0 + i as Real * step;
                ProfileSample {
                    s: i as Real * step,
                    r: rr * (s / rr).sin(),
                    z: rr * (s / rr).cos(),
                    theta: -s / rr,
                }
            })
            .collect();
        ProfileCurve { n, step, samples }
    }

    #[test]
    fn sphere_answers_the_shrinker_equation() {
        for n in [2usize, 3, 4] {
            let rr = (2.0 * n as Real).sqrt();
            let p = sphere_arc(n, rr, 1e-3);
            let rep = shrinker_residual(&p, false).unwrap();
            assert!(rep.sup < 1e-9, "n={n}: sup {}", rep.sup);
            // And it does not answer the expander equation.
            let exp = expander_residual(&p).unwrap();
            assert!(exp.sup > 1.0, "n={n}: expander residual should be O(|x.n|)");
        }
    }

    #[test]
    fn critical_cylinder_answers_the_shrinker_equation() {
        let n = 3usize;
        let r0 = (2.0 * (n as Real - 1.0)).sqrt();
        let samples: Vec<ProfileSample> = (0..4000)
            .map(|i| {
                let s = i as Real * 1e-3;
                ProfileSample { s, r: r0, z: s - 2.0, theta: std::f64::consts::FRAC_PI_2 }
            })
            .collect();
        let p = ProfileCurve { n, step: 1e-3, samples };
        let rep = shrinker_residual(&p, false).unwrap();
        assert!(rep.sup < 1e-10, "sup {}", rep.sup);
    }

    #[test]
    fn hyperplane_answers_both_equations() {
        let p = plane_ray(2, 0.05, 1e-3, 8000);
        assert!(expander_residual(&p).unwrap().sup < 1e-12);
        assert!(shrinker_residual(&p, false).unwrap().sup < 1e-12);
    }

    #[test]
    fn curvature_routes_agree_on_circle_arc() {
        let p = circle_arc(2, 1.0, 0.7, 1e-3, 1400);
        let cur = curvature(&p).unwrap();
        for i in 0..p.len() {
            assert!((cur.kappa_prof[i] + 1.0 / 0.7).abs() < 1e-9, "kappa_prof[{i}]");
        }
        assert!(cur.route_gap < 1e-7, "route gap {}", cur.route_gap);
    }

    #[test]
    fn validate_rejects_broken_profiles() {
        let mut p = circle_arc(2, 1.0, 0.7, 1e-3, 300);
        p.samples[120].theta += 0.5;
        assert!(matches!(p.validate(10.0), Err(GeomError::NotUnitSpeed { .. })));

        let mut p2 = circle_arc(2, 1.0, 0.7, 1e-3, 300);
        p2.samples[50].s += 1e-4;
        assert!(matches!(p2.validate(10.0), Err(GeomError::NonUniformSpacing { .. })));

        let mut p3 = circle_arc(2, 1.0, 0.7, 1e-3, 300);
        p3.samples[10].r = -0.2;
        assert!(matches!(p3.validate(10.0), Err(GeomError::NonPositiveRadius { .. })));

        assert!(matches!(
            ProfileCurve { n: 1, step: 1e-3, samples: p3.samples.clone() }.validate(10.0),
            Err(GeomError::BadDimension(1))
        ));
    }

    #[test]
    fn unit_sphere_areas() {
        assert!((unit_sphere_area(0) - 2.0).abs() < 1e-14);
        assert!((unit_sphere_area(1) - std::f64::consts::TAU).abs() < 1e-13);
        assert!((unit_sphere_area(2) - 4.0 * std::f64::consts::PI).abs() < 1e-13);
        assert!((unit_sphere_area(3) - 2.0 * std::f64::consts::PI.powi(2)).abs() < 1e-12);
    }

    #[test]
    fn gaussian_quadrature_on_plane() {
        // integral over R^2 of e^{-|x|^2/4} = 4 pi, computed on the radial
        // profile with the weight at beta = -1/4.
        let p = plane_ray(2, 1e-3, 1e-3, 40_000);
        let surf = SurfaceGrid::from_profile(&p, false, 1).unwrap();
        let wg = surf.weighted(-0.25);
        let total = wg.quadrature(|_| 1.0);
        assert!(
            (total - 4.0 * std::f64::consts::PI).abs() < 1e-4,
            "total {total} vs {}",
            4.0 * std::f64::consts::PI
        );
    }

    #[test]
    fn weighted_norm_closed_forms() {
        // f = e^{-r^2/8} on the plane: |f|_{W0,beta=1/8}^2 = 8 pi and the
        // gradient part adds 4 pi.
        let p = plane_ray(2, 1e-3, 1e-3, 30_000);
        let surf = SurfaceGrid::from_profile(&p, false, 1).unwrap();
        let f: Vec<Real> = surf.r.iter().map(|r| (-r * r / 8.0).exp()).collect();
        let g: Vec<Real> = surf.r.iter().map(|r| -r / 4.0 * (-r * r / 8.0).exp()).collect();
        let n0 = weighted_norm(&surf, &f, Some(&g), 0.125, 0).unwrap();
        let n1 = weighted_norm(&surf, &f, Some(&g), 0.125, 1).unwrap();
        assert!((n0.powi(2) - 8.0 * std::f64::consts::PI).abs() < 1e-3, "n0^2 = {}", n0.powi(2));
        assert!((n1.powi(2) - 12.0 * std::f64::consts::PI).abs() < 1e-3, "n1^2 = {}", n1.powi(2));
        // Scaling homogeneity of the order-2 norm.
        let n2a = weighted_norm(&surf, &f, Some(&g), 0.125, 2).unwrap();
        let f2: Vec<Real> = f.iter().map(|v| 2.0 * v).collect();
        let g2: Vec<Real> = g.iter().map(|v| 2.0 * v).collect();
        let n2b = weighted_norm(&surf, &f2, Some(&g2), 0.125, 2).unwrap();
        assert!((n2b / n2a - 2.0).abs() < 1e-12);
    }

    #[test]
    fn divergent_tail_is_flagged_not_summed() {
        // f ~ e^{-|x|^2/4}: at beta = 3/8 the weighted integrand decays,
        // at beta = 0.6 it grows toward the truncation and must be flagged.
        let p = plane_ray(2, 1e-3, 1e-3, 12_000);
        let surf = SurfaceGrid::from_profile(&p, false, 1).unwrap();
        let f: Vec<Real> = surf.xnorm2.iter().map(|x2| (-x2 / 4.0).exp()).collect();
        assert!(weighted_norm(&surf, &f, None, 0.375, 0).is_ok());
        assert!(matches!(
            weighted_norm(&surf, &f, None, 0.6, 0),
            Err(GeomError::DivergentTail { .. })
        ));
        // Compact support never triggers the flag even at large beta.
        let mut bump = vec![0.0; surf.len()];
        for i in 2000..3000 {
            bump[i] = 1.0;
        }
        assert!(weighted_norm(&surf, &bump, None, 0.6, 0).is_ok());
    }

    #[test]
    fn mirror_is_c1_and_even() {
        let p = circle_arc(3, 2.0, 5.0, 1e-3, 2001);
        let surf = SurfaceGrid::from_profile(&p, true, 2).unwrap();
        let m = surf.len() / 2;
        assert_eq!(surf.len(), 2 * m + 1);
        assert!((surf.s[m]).abs() < 1e-14);
        for k in 1..=m {
            assert_eq!(surf.r[m + k], surf.r[m - k]);
            assert_eq!(surf.z[m + k], -surf.z[m - k]);
            assert!((surf.theta[m - k] - (std::f64::consts::PI - surf.theta[m + k])).abs() < 1e-14);
            // x.T is odd, x.n is even across the junction.
            assert!((surf.xdott[m + k] + surf.xdott[m - k]).abs() < 1e-11);
            assert!((surf.xdotn[m + k] - surf.xdotn[m - k]).abs() < 1e-11);
        }
        // Curvature of the circle is constant through the junction: the
        // mirrored extension is C^1 and the stencils see a smooth curve.
        for i in 0..surf.len() {
            assert!((surf.kappa_prof[i] + 0.2).abs() < 1e-9, "kappa at {i}: {}", surf.kappa_prof[i]);
        }
    }

    #[test]
    fn mirror_requires_vertical_start() {
        let p = plane_ray(2, 0.5, 1e-3, 100);
        assert!(matches!(
            SurfaceGrid::from_profile(&p, true, 1),
            Err(GeomError::MirrorJunction)
        ));
    }

    #[test]
    fn plane_diagnostics_are_trivial() {
        let p = plane_ray(2, 1e-2, 1e-3, 12_000);
        let surf = SurfaceGrid::from_profile(&p, false, 1).unwrap();
        let d = surface_diagnostics(&surf).unwrap();
        assert!(d.k_sigma < 1e-12);
        assert!((d.r0 - 1.0).abs() < 0.01, "r0 = {}", d.r0);
        assert!(d.c0 < 1e-9);
        assert!((d.r1 - d.r0).abs() < 1e-12);
        assert!((d.grad_r_min - 1.0).abs() < 1e-12);
    }

    #[test]
    fn profile_json_schema_is_stable() {
        let p = circle_arc(2, 1.0, 0.7, 1e-3, 10);
        let text = serde_json::to_string(&p).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["n"], 2);
        assert!(v["step"].as_f64().unwrap() > 0.0);
        let q = &v["samples"][3];
        for key in ["s", "r", "z", "theta"] {
            assert!(q[key].is_f64(), "missing key {key}");
        }
        let back: ProfileCurve = serde_json::from_str(&text).unwrap();
        assert_eq!(back.samples.len(), p.samples.len());
        assert_eq!(back.samples[3], p.samples[3]);
    }
}
