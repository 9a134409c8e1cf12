//! Weighted bilinear forms, transverse sections, and perturbation checks.
//!
//! Everything here lives on the natural Gaussian measure dmu = omega_{n-1}
//! r^{n-1} e^{|x|^2/4} ds of a rotationally symmetric surface, restricted
//! to rotationally invariant functions:
//!
//!   B[u,w] = int u w dmu,   D[u,w] = int u'w' dmu,
//!   Q[u,w] = D[u,w] + int (1/2 - |A|^2) u w dmu,
//!
//! so that Q[u,w] = -B[u, Lw] for the stability operator L = Delta +
//! x.grad/2 + |A|^2 - 1/2 and compactly supported entries.
//!
//! A transverse section is the equivariant vector field W = vr dr + vz dz
//! with W.n nowhere zero; the section-weighted forms dress both entries
//! by W.n, e.g. Q_v[u,w] = Q[(W.n)u, (W.n)w]. Integration by parts turns
//! that into int (u'w' + a' u w)(W.n)^2 dmu with a' = -(W.n)^{-1} L(W.n),
//! which is kept as an independent route for testing.
//!
//! Perturbed surfaces enter as pullbacks: moving each point by
//! eps u(s) W multiplies the measure by Omega_f, rescales the profile
//! metric by 1 + Delta_g, and shifts |A|^2 and W.n. All perturbed arrays
//! are built as base + (formula(perturbed) - formula(base)), which makes
//! the eps = 0 pullback reproduce the plain forms bitwise and cancels
//! shared evaluation error for eps > 0.

use rand::Rng;
use serde::Serialize;

use crate::geometry::{GeomError, SurfaceGrid, WeightedGrid, NATURAL_WEIGHT};
use crate::Real;

#[derive(thiserror::Error, Debug)]
pub enum FormError {
    #[error(transparent)]
    Geometry(#[from] GeomError),
    #[error("section is not transverse: min |W.n| = {min_abs}")]
    NotTransverse { min_abs: Real },
    #[error("test function support reaches the grid boundary")]
    SupportClipped,
    #[error("perturbation too large near node {index}: {reason}")]
    StepTooLarge { index: usize, reason: String },
    #[error("bad input: {reason}")]
    BadInput { reason: String },
}

/// A smooth compactly supported profile function with analytic
/// derivatives sampled on the grid.
#[derive(Clone, Debug)]
pub struct TestFunction {
    pub values: Vec<Real>,
    pub deriv: Vec<Real>,
    pub second: Vec<Real>,
    /// Inclusive node range outside which all arrays are exactly zero.
    pub support: (usize, usize),
}

impl TestFunction {
    /// The standard bump exp(1 - 1/(1 - t^2)) with t = (s - center)/width,
    /// normalized to peak value 1.
    pub fn bump(surf: &SurfaceGrid, center: Real, width: Real) -> Result<Self, FormError> {
        if !(width > 0.0) {
            return Err(FormError::BadInput { reason: format!("width {width} must be positive") });
        }
        let len = surf.len();
        let mut values = vec![0.0; len];
        let mut deriv = vec![0.0; len];
        let mut second = vec![0.0; len];
        let (mut lo, mut hi) = (len, 0usize);
        for i in 0..len {
            let t = (surf.s[i] - center) / width;
            let om = 1.0 - t * t;
            if om <= 0.0 {
                continue;
            }
            let expo = 1.0 - 1.0 / om;
            if expo < -690.0 {
                continue;
            }
            let u = expo.exp();
            let qp = -2.0 * t / (om * om);
            let qpp = -2.0 / (om * om) - 8.0 * t * t / (om * om * om);
            values[i] = u;
            deriv[i] = u * qp / width;
            second[i] = u * (qp * qp + qpp) / (width * width);
            lo = lo.min(i);
            hi = hi.max(i);
        }
        if lo > hi {
            return Err(FormError::BadInput { reason: "bump support misses the grid".into() });
        }
        if lo == 0 || hi + 1 == len {
            return Err(FormError::SupportClipped);
        }
        Ok(TestFunction { values, deriv, second, support: (lo, hi) })
    }

    /// Wraps sampled values (an eigenfunction, say), differentiating on
    /// the grid. The support is trimmed to the nonzero range.
    pub fn from_samples(surf: &SurfaceGrid, values: Vec<Real>) -> Result<Self, FormError> {
        if values.len() != surf.len() {
            return Err(FormError::BadInput {
                reason: format!("{} samples on a grid of {}", values.len(), surf.len()),
            });
        }
        let deriv = surf.deriv(&values);
        let second = surf.deriv(&deriv);
        let mut lo = values.len();
        let mut hi = 0usize;
        for (i, &v) in values.iter().enumerate() {
            if v != 0.0 {
                lo = lo.min(i);
                hi = hi.max(i);
            }
        }
        if lo > hi {
            return Err(FormError::BadInput { reason: "all samples are zero".into() });
        }
        Ok(TestFunction { values, deriv, second, support: (lo, hi) })
    }
}

/// Equivariant transverse field W = vr dr + vz dz with pointwise normal
/// and tangential components along the profile.
#[derive(Clone, Debug)]
pub struct TransverseSection {
    pub vr: Real,
    pub vz: Real,
    /// W.n = -vr sin(theta) + vz cos(theta).
    pub vdotn: Vec<Real>,
    /// W.T = vr cos(theta) + vz sin(theta).
    pub vdott: Vec<Real>,
    /// d(W.n)/ds = -kappa_prof (W.T), analytically.
    pub vdotn_prime: Vec<Real>,
    pub min_abs: Real,
}

impl TransverseSection {
    pub fn new(surf: &SurfaceGrid, vr: Real, vz: Real) -> Result<Self, FormError> {
        let len = surf.len();
        let mut vdotn = Vec::with_capacity(len);
        let mut vdott = Vec::with_capacity(len);
        let mut vdotn_prime = Vec::with_capacity(len);
        let mut min_abs = Real::INFINITY;
        for i in 0..len {
            let (st, ct) = surf.theta[i].sin_cos();
            let vn = -vr * st + vz * ct;
            let vt = vr * ct + vz * st;
            vdotn.push(vn);
            vdott.push(vt);
            vdotn_prime.push(-surf.kappa_prof[i] * vt);
            min_abs = min_abs.min(vn.abs());
        }
        let scale = vr.hypot(vz);
        if !(min_abs > 1e-3 * scale) {
            return Err(FormError::NotTransverse { min_abs });
        }
        Ok(TransverseSection { vr, vz, vdotn, vdott, vdotn_prime, min_abs })
    }

    /// The dressed zeroth-order coefficient a' = -(W.n)^{-1} L(W.n),
    /// with L applied by grid differentiation.
    pub fn aprime(&self, surf: &SurfaceGrid) -> Vec<Real> {
        let d1 = surf.deriv(&self.vdotn);
        let d2 = surf.deriv(&d1);
        (0..surf.len())
            .map(|i| {
                let drift =
                    (surf.n as Real - 1.0) * surf.theta[i].cos() / surf.r[i] + 0.5 * surf.xdott[i];
                let l = d2[i] + drift * d1[i] + (surf.norm_a2[i] - 0.5) * self.vdotn[i];
                -l / self.vdotn[i]
            })
            .collect()
    }
}

/// The plain forms on one surface at the natural weight.
pub struct FormSet<'a> {
    pub surf: &'a SurfaceGrid,
    wg: WeightedGrid,
}

impl<'a> FormSet<'a> {
    pub fn new(surf: &'a SurfaceGrid) -> Self {
        FormSet { surf, wg: surf.weighted(NATURAL_WEIGHT) }
    }

    pub fn b(&self, u: &TestFunction, w: &TestFunction) -> Real {
        self.wg.quadrature(|i| u.values[i] * w.values[i])
    }

    pub fn d(&self, u: &TestFunction, w: &TestFunction) -> Real {
        self.wg.quadrature(|i| u.deriv[i] * w.deriv[i])
    }

    pub fn q(&self, u: &TestFunction, w: &TestFunction) -> Real {
        self.wg.quadrature(|i| {
            u.deriv[i] * w.deriv[i]
                + (0.5 - self.surf.norm_a2[i]) * u.values[i] * w.values[i]
        })
    }

    /// Section-weighted form Q_v[u,w] = Q[(W.n)u, (W.n)w], expanded with
    /// the analytic derivative of W.n.
    pub fn q_vweighted(&self, sec: &TransverseSection, u: &TestFunction, w: &TestFunction) -> Real {
        self.wg.quadrature(|i| {
            let phi = sec.vdotn[i];
            let phip = sec.vdotn_prime[i];
            let du = phi * u.deriv[i] + phip * u.values[i];
            let dw = phi * w.deriv[i] + phip * w.values[i];
            du * dw + (0.5 - self.surf.norm_a2[i]) * phi * phi * u.values[i] * w.values[i]
        })
    }

    /// The same form through the integrated-by-parts route
    /// int (u'w' + a' u w) (W.n)^2 dmu.
    pub fn q_vweighted_by_parts(
        &self,
        sec: &TransverseSection,
        aprime: &[Real],
        u: &TestFunction,
        w: &TestFunction,
    ) -> Real {
        self.wg.quadrature(|i| {
            let phi2 = sec.vdotn[i] * sec.vdotn[i];
            (u.deriv[i] * w.deriv[i] + aprime[i] * u.values[i] * w.values[i]) * phi2
        })
    }

    /// |Q[u,w] + B[u, Lw]| relative to the scale of the two terms; zero in
    /// exact arithmetic for compactly supported entries.
    pub fn symmetry_residual(&self, u: &TestFunction, w: &TestFunction) -> Real {
        let q = self.q(u, w);
        let lw: Vec<Real> = (0..self.surf.len())
            .map(|i| {
                let drift = (self.surf.n as Real - 1.0) * self.surf.theta[i].cos()
                    / self.surf.r[i]
                    + 0.5 * self.surf.xdott[i];
                w.second[i] + drift * w.deriv[i] + (self.surf.norm_a2[i] - 0.5) * w.values[i]
            })
            .collect();
        let blw = self.wg.quadrature(|i| u.values[i] * lw[i]);
        let scale = q.abs().max(blw.abs()).max(1e-300);
        (q + blw).abs() / scale
    }
}

/// Pullback data of the surface moved by eps u W: enough to evaluate the
/// perturbed forms on the base grid.
#[derive(Clone, Debug)]
pub struct Pullback {
    pub eps: Real,
    /// Perturbed profile points (exact, for independent graph routes).
    pub rt: Vec<Real>,
    pub zt: Vec<Real>,
    /// Measure ratio Omega_f and companions, with Omega - 1 kept separately
    /// at full precision.
    pub omega: Vec<Real>,
    pub omega_m1: Vec<Real>,
    pub inv_omega: Vec<Real>,
    /// Inverse profile metric coefficient 1/(1 + Delta_g).
    pub inv_gss: Vec<Real>,
    /// |A|^2 of the perturbed surface at the image point.
    pub norm_a2: Vec<Real>,
    /// W . (normal of the perturbed surface at the image point).
    pub vdotn: Vec<Real>,
    pub vdotn_prime: Vec<Real>,
    pub support: (usize, usize),
}

fn a2_formula(n: usize, rp: Real, zp: Real, rpp: Real, zpp: Real, rad: Real) -> Real {
    let g = rp * rp + zp * zp;
    let kp = (rp * zpp - zp * rpp) / (g * g.sqrt());
    let kr = zp / (rad * g.sqrt());
    kp * kp + (n as Real - 1.0) * kr * kr
}

fn vdotn_formula(vr: Real, vz: Real, rp: Real, zp: Real) -> Real {
    let g = (rp * rp + zp * zp).sqrt();
    (-vr * zp + vz * rp) / g
}

fn vdotn_prime_formula(vr: Real, vz: Real, rp: Real, zp: Real, rpp: Real, zpp: Real) -> Real {
    let g = rp * rp + zp * zp;
    let phi = (-vr * zp + vz * rp) / g.sqrt();
    (-vr * zpp + vz * rpp) / g.sqrt() - phi * (rp * rpp + zp * zpp) / g
}

/// Builds the pullback of the surface moved by eps * shape * W. The
/// perturbed first and second profile derivatives are analytic (constant
/// direction, analytic bump), and every derived quantity is written as
/// base + (formula(perturbed) - formula(base)) so the zero-eps pullback
/// is bitwise the identity.
pub fn transverse_pullback(
    surf: &SurfaceGrid,
    sec: &TransverseSection,
    shape: &TestFunction,
    eps: Real,
) -> Result<Pullback, FormError> {
    let len = surf.len();
    let n = surf.n;
    let w2 = sec.vr * sec.vr + sec.vz * sec.vz;
    let mut out = Pullback {
        eps,
        rt: Vec::with_capacity(len),
        zt: Vec::with_capacity(len),
        omega: Vec::with_capacity(len),
        omega_m1: Vec::with_capacity(len),
        inv_omega: Vec::with_capacity(len),
        inv_gss: Vec::with_capacity(len),
        norm_a2: Vec::with_capacity(len),
        vdotn: Vec::with_capacity(len),
        vdotn_prime: Vec::with_capacity(len),
        support: shape.support,
    };
    for i in 0..len {
        let (st, ct) = surf.theta[i].sin_cos();
        let kap = surf.kappa_prof[i];
        let (u, up, upp) = (shape.values[i], shape.deriv[i], shape.second[i]);
        let rt = surf.r[i] + eps * u * sec.vr;
        let zt = surf.z[i] + eps * u * sec.vz;
        // Analytic derivatives of the perturbed profile.
        let rp = ct + eps * sec.vr * up;
        let zp = st + eps * sec.vz * up;
        let rpp = -st * kap + eps * sec.vr * upp;
        let zpp = ct * kap + eps * sec.vz * upp;
        // Base-formula inputs: the same expressions at eps = 0.
        let (rp0, zp0, rpp0, zpp0) = (ct, st, -st * kap, ct * kap);
        let dg = 2.0 * eps * sec.vdott[i] * up + eps * eps * w2 * up * up;
        if dg <= -0.9 {
            return Err(FormError::StepTooLarge {
                index: i,
                reason: format!("metric degenerates (Delta_g = {dg})"),
            });
        }
        let dr_rel = eps * u * sec.vr / surf.r[i];
        if dr_rel <= -0.9 {
            return Err(FormError::StepTooLarge {
                index: i,
                reason: format!("profile radius collapses (relative shift {dr_rel})"),
            });
        }
        let wx = sec.vr * surf.r[i] + sec.vz * surf.z[i];
        let log_omega = 0.5 * dg.ln_1p()
            + (n as Real - 1.0) * dr_rel.ln_1p()
            + (2.0 * eps * u * wx + eps * eps * u * u * w2) / 4.0;
        let omega_m1 = log_omega.exp_m1();
        out.rt.push(rt);
        out.zt.push(zt);
        out.omega.push(1.0 + omega_m1);
        out.omega_m1.push(omega_m1);
        out.inv_omega.push((-log_omega).exp());
        out.inv_gss.push(1.0 / (1.0 + dg));
        out.norm_a2.push(
            surf.norm_a2[i] + (a2_formula(n, rp, zp, rpp, zpp, rt)
                - a2_formula(n, rp0, zp0, rpp0, zpp0, surf.r[i])),
        );
        out.vdotn.push(
            sec.vdotn[i]
                + (vdotn_formula(sec.vr, sec.vz, rp, zp) - vdotn_formula(sec.vr, sec.vz, rp0, zp0)),
        );
        out.vdotn_prime.push(
            sec.vdotn_prime[i]
                + (vdotn_prime_formula(sec.vr, sec.vz, rp, zp, rpp, zpp)
                    - vdotn_prime_formula(sec.vr, sec.vz, rp0, zp0, rpp0, zpp0)),
        );
    }
    Ok(out)
}

impl<'a> FormSet<'a> {
    pub fn b_pulled(&self, p: &Pullback, u: &TestFunction, w: &TestFunction) -> Real {
        self.wg.quadrature(|i| u.values[i] * w.values[i] * p.omega[i])
    }

    pub fn d_pulled(&self, p: &Pullback, u: &TestFunction, w: &TestFunction) -> Real {
        self.wg.quadrature(|i| p.inv_gss[i] * u.deriv[i] * w.deriv[i] * p.omega[i])
    }

    pub fn q_pulled(&self, p: &Pullback, u: &TestFunction, w: &TestFunction) -> Real {
        self.wg.quadrature(|i| {
            (p.inv_gss[i] * u.deriv[i] * w.deriv[i]
                + (0.5 - p.norm_a2[i]) * u.values[i] * w.values[i])
                * p.omega[i]
        })
    }

    /// Section-weighted pulled-back form: both entries dressed by the
    /// perturbed normal component of W.
    pub fn q_pulled_vweighted(&self, p: &Pullback, u: &TestFunction, w: &TestFunction) -> Real {
        self.wg.quadrature(|i| {
            let phi = p.vdotn[i];
            let phip = p.vdotn_prime[i];
            let du = phi * u.deriv[i] + phip * u.values[i];
            let dw = phi * w.deriv[i] + phip * w.values[i];
            (p.inv_gss[i] * du * dw
                + (0.5 - p.norm_a2[i]) * phi * phi * u.values[i] * w.values[i])
                * p.omega[i]
        })
    }
}

/// Measured premise sizes of a pullback relative to an eigenfunction u
/// with Q[u] = mu B[u], mu <= 1/4, and the resulting certified delta for
/// the perturbation inequalities.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DeltaPremise {
    /// sqrt of int (|du|^2 + u^2)(1 - Omega)^2 (1 + Omega^{-1}) dmu / B[u].
    pub d_omega: Real,
    /// sup |g_f^{-1} g - 1| over the support.
    pub d_metric: Real,
    /// sup | |A_f|^2 - |A|^2 | over the support.
    pub d_curv: Real,
    /// sqrt of int (|du|^2 + u^2)(Omega + Omega^{-1}) dmu / B[u].
    pub c1: Real,
    /// max(d_omega, d_metric, d_curv).
    pub delta_prime: Real,
    /// delta_prime scaled by the constant bookkeeping of the estimates.
    pub delta: Real,
}

pub fn delta_premise(
    fs: &FormSet,
    p: &Pullback,
    u: &TestFunction,
    k_sigma: Real,
) -> DeltaPremise {
    let b_u = fs.b(u, u);
    let num_omega = fs.wg.quadrature(|i| {
        (u.deriv[i] * u.deriv[i] + u.values[i] * u.values[i])
            * p.omega_m1[i]
            * p.omega_m1[i]
            * (1.0 + p.inv_omega[i])
    });
    let num_c1 = fs.wg.quadrature(|i| {
        (u.deriv[i] * u.deriv[i] + u.values[i] * u.values[i]) * (p.omega[i] + p.inv_omega[i])
    });
    let d_omega = (num_omega / b_u).sqrt();
    let c1 = (num_c1 / b_u).sqrt();
    let (lo, hi) = p.support;
    let mut d_metric = 0.0 as Real;
    let mut d_curv = 0.0 as Real;
    for i in lo..=hi {
        d_metric = d_metric.max((p.inv_gss[i] - 1.0).abs());
        d_curv = d_curv.max((p.norm_a2[i] - fs.surf.norm_a2[i]).abs());
    }
    let delta_prime = d_omega.max(d_metric).max(d_curv);
    let book = (8.0 * (2.0 + k_sigma.sqrt()))
        .max(8.0 * (c1 + 1.0))
        .max(4.0 * (k_sigma + 2.0));
    DeltaPremise { d_omega, d_metric, d_curv, c1, delta_prime, delta: delta_prime * book }
}

/// One row of the perturbation-inequality check at a given eps.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct PerturbRow {
    pub eps: Real,
    pub premise: DeltaPremise,
    /// |B_f[u,v] - B[u,v]|^2 / (delta^2 B[u] B[v]).
    pub ratio_b_base: Real,
    /// |B_f[u,v] - B[u,v]|^2 / (delta^2 B[u] B_f[v]).
    pub ratio_b_pulled: Real,
    /// |Q_f[u,v] - Q[u,v]|^2 / (delta^2 B[u] (D[v] + B[v])).
    pub ratio_q_base: Real,
    /// |Q_f[u,v] - Q[u,v]|^2 / (delta^2 B[u] (D_f[v] + B_f[v])).
    pub ratio_q_pulled: Real,
}

#[derive(Clone, Debug, Serialize)]
pub struct PerturbReport {
    pub rows: Vec<PerturbRow>,
    pub max_ratio: Real,
    /// Spread of delta/eps across the sweep; order one when the premise
    /// scales linearly in the step.
    pub delta_slope_spread: Real,
}

/// Verifies the four form-perturbation inequalities for the pullbacks of
/// eps * shape * W across a sweep of eps, with u an eigenfunction-type
/// entry (Q[u] = mu B[u], mu <= 1/4) and v arbitrary.
pub fn perturbation_check(
    fs: &FormSet,
    sec: &TransverseSection,
    shape: &TestFunction,
    u: &TestFunction,
    v: &TestFunction,
    eps_list: &[Real],
    k_sigma: Real,
) -> Result<PerturbReport, FormError> {
    if eps_list.is_empty() {
        return Err(FormError::BadInput { reason: "empty eps sweep".into() });
    }
    let b_uu = fs.b(u, u);
    let b_vv = fs.b(v, v);
    let d_vv = fs.d(v, v);
    let b_uv = fs.b(u, v);
    let q_uv = fs.q(u, v);
    let mut rows = Vec::with_capacity(eps_list.len());
    let mut max_ratio = 0.0 as Real;
    let mut slopes = Vec::new();
    for &eps in eps_list {
        let p = transverse_pullback(fs.surf, sec, shape, eps)?;
        let premise = delta_premise(fs, &p, u, k_sigma);
        let d2 = premise.delta * premise.delta;
        let bf_uv = fs.b_pulled(&p, u, v);
        let qf_uv = fs.q_pulled(&p, u, v);
        let bf_vv = fs.b_pulled(&p, v, v);
        let df_vv = fs.d_pulled(&p, v, v);
        let row = PerturbRow {
            eps,
            premise,
            ratio_b_base: (bf_uv - b_uv).powi(2) / (d2 * b_uu * b_vv),
            ratio_b_pulled: (bf_uv - b_uv).powi(2) / (d2 * b_uu * bf_vv),
            ratio_q_base: (qf_uv - q_uv).powi(2) / (d2 * b_uu * (d_vv + b_vv)),
            ratio_q_pulled: (qf_uv - q_uv).powi(2) / (d2 * b_uu * (df_vv + bf_vv)),
        };
        max_ratio = max_ratio
            .max(row.ratio_b_base)
            .max(row.ratio_b_pulled)
            .max(row.ratio_q_base)
            .max(row.ratio_q_pulled);
        slopes.push(premise.delta / eps.abs());
        rows.push(row);
    }
    let s_max = slopes.iter().cloned().fold(0.0 as Real, Real::max);
    let s_min = slopes.iter().cloned().fold(Real::INFINITY, Real::min);
    Ok(PerturbReport { rows, max_ratio, delta_slope_spread: s_max / s_min })
}

/// Weighted-area difference of the pullback surface against the base,
/// integrated over the support. At a critical point its first variation
/// in eps vanishes and its second equals Q[(W.n) shape].
pub fn area_difference(fs: &FormSet, p: &Pullback) -> Real {
    fs.wg.quadrature(|i| p.omega_m1[i])
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct VariationReport {
    /// First-variation finite differences at eps and eps/2; both should be
    /// near zero, shrinking by about 4.
    pub first_var: Real,
    pub first_var_half: Real,
    /// Richardson-extrapolated second difference against Q[(W.n)u].
    pub second_rel_err: Real,
    /// Mixed four-point polarization against Q[(W.n)u, (W.n)w].
    pub mixed_rel_err: Real,
}

/// Checks the variational meaning of the forms on an expander: the
/// weighted area is critical, and its Hessian in a transverse direction
/// is the section-weighted quadratic form.
pub fn variation_check(
    fs: &FormSet,
    sec: &TransverseSection,
    u: &TestFunction,
    w: &TestFunction,
    eps: Real,
) -> Result<VariationReport, FormError> {
    let de = |shape: &TestFunction, e: Real| -> Result<Real, FormError> {
        Ok(area_difference(fs, &transverse_pullback(fs.surf, sec, shape, e)?))
    };
    let second = |shape: &TestFunction, e: Real| -> Result<Real, FormError> {
        Ok((de(shape, e)? + de(shape, -e)?) / (e * e))
    };
    let first_var = (de(u, eps)? - de(u, -eps)?) / (2.0 * eps);
    let first_var_half = (de(u, 0.5 * eps)? - de(u, -0.5 * eps)?) / eps;
    let richardson = |shape: &TestFunction| -> Result<Real, FormError> {
        Ok((4.0 * second(shape, 0.5 * eps)? - second(shape, eps)?) / 3.0)
    };
    let q_uu = fs.q_vweighted(sec, u, u);
    let second_rel_err = (richardson(u)? - q_uu).abs() / q_uu.abs().max(1e-300);
    // Polarization: E[u + w] - E[u] - E[w] parallels 2 Q[u, w].
    let sum = TestFunction {
        values: u.values.iter().zip(&w.values).map(|(a, b)| a + b).collect(),
        deriv: u.deriv.iter().zip(&w.deriv).map(|(a, b)| a + b).collect(),
        second: u.second.iter().zip(&w.second).map(|(a, b)| a + b).collect(),
        support: (u.support.0.min(w.support.0), u.support.1.max(w.support.1)),
    };
    let mixed = (richardson(&sum)? - richardson(u)? - richardson(w)?) / 2.0;
    let q_uw = fs.q_vweighted(sec, u, w);
    let mixed_rel_err = (mixed - q_uw).abs() / q_uw.abs().max(1e-300);
    Ok(VariationReport { first_var, first_var_half, second_rel_err, mixed_rel_err })
}

/// The perturbed profile rewritten as a normal graph over the base:
/// height along the base normal at each node, plus the reparametrization
/// that links the two descriptions of one surface. The transverse map
/// sends base parameter s to a point that sits on the normal line of a
/// *different* base parameter rho(s); forms pulled back through the two
/// maps agree exactly on entries composed with that slide.
#[derive(Clone, Debug)]
pub struct NormalGraph {
    pub heights: Vec<Real>,
    /// Per node: the perturbed-polyline segment and fraction hit by this
    /// node's normal line. The slid parameter is s[seg] + frac * h.
    pub seg: Vec<(usize, Real)>,
}

impl NormalGraph {
    /// Entry values composed with the slide, by linear interpolation on
    /// the hit segment.
    pub fn slide_values(&self, values: &[Real]) -> Vec<Real> {
        self.seg
            .iter()
            .map(|&(j, frac)| values[j] + frac * (values[j + 1] - values[j]))
            .collect()
    }
}

/// Builds the normal-graph description by intersecting each base normal
/// line with the perturbed polyline near the same index.
pub fn normal_graph(surf: &SurfaceGrid, p: &Pullback) -> Result<NormalGraph, FormError> {
    let len = surf.len();
    let t_max = 40.0 * surf.h.max(1e-6);
    let mut heights = vec![0.0; len];
    let mut seg = vec![(0usize, 0.0); len];
    for i in 0..len {
        let (st, ct) = surf.theta[i].sin_cos();
        let (pr, pz) = (surf.r[i], surf.z[i]);
        let (nr, nz) = (-st, ct);
        let mut best: Option<(Real, usize, Real)> = None;
        let reach = 64usize;
        let lo = i.saturating_sub(reach);
        let hi = (i + reach).min(len - 1);
        for j in lo..hi {
            let (ar, az) = (p.rt[j], p.zt[j]);
            let (br, bz) = (p.rt[j + 1], p.zt[j + 1]);
            let (er, ez) = (br - ar, bz - az);
            let det = nr * (-ez) - nz * (-er);
            if det.abs() < 1e-14 {
                continue;
            }
            let (wr, wz) = (ar - pr, az - pz);
            let t = (wr * (-ez) - (-er) * wz) / det;
            let sigma = (nr * wz - nz * wr) / det;
            if !(-1e-9..=1.0 + 1e-9).contains(&sigma) {
                continue;
            }
            if t.abs() <= t_max && best.map(|b| t.abs() < b.0.abs()).unwrap_or(true) {
                best = Some((t, j, sigma));
            }
        }
        let (t, j, sigma) = best.ok_or(FormError::StepTooLarge {
            index: i,
            reason: "no normal-line intersection with the perturbed polyline".into(),
        })?;
        heights[i] = t;
        seg[i] = (j, sigma);
    }
    Ok(NormalGraph { heights, seg })
}

/// The pulled-back quadratic form evaluated through the independent
/// normal-graph route: heights from polyline intersections, entries
/// composed with the slide, derivatives by grid differencing. Shares no
/// perturbed arrays with the transverse route.
pub fn q_pulled_graph_route(
    fs: &FormSet,
    graph: &NormalGraph,
    u: &TestFunction,
    w: &TestFunction,
) -> Real {
    let surf = fs.surf;
    let n = surf.n;
    let len = surf.len();
    let mut rg = Vec::with_capacity(len);
    let mut zg = Vec::with_capacity(len);
    for i in 0..len {
        let (st, ct) = surf.theta[i].sin_cos();
        rg.push(surf.r[i] - graph.heights[i] * st);
        zg.push(surf.z[i] + graph.heights[i] * ct);
    }
    let rp = surf.deriv(&rg);
    let zp = surf.deriv(&zg);
    let rpp = surf.deriv(&rp);
    let zpp = surf.deriv(&zp);
    let us = graph.slide_values(&u.values);
    let ws = graph.slide_values(&w.values);
    let usp = surf.deriv(&us);
    let wsp = surf.deriv(&ws);
    fs.wg.quadrature(|i| {
        let g = rp[i] * rp[i] + zp[i] * zp[i];
        let a2 = a2_formula(n, rp[i], zp[i], rpp[i], zpp[i], rg[i]);
        let dx2 = rg[i] * rg[i] + zg[i] * zg[i] - surf.xnorm2[i];
        let omega = (0.5 * g.ln()
            + (n as Real - 1.0) * (rg[i] / surf.r[i]).ln()
            + dx2 / 4.0)
            .exp();
        (usp[i] * wsp[i] / g + (0.5 - a2) * us[i] * ws[i]) * omega
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityReport {
    /// max |Q[u_i]/B[u_i] - mu_i| over the supplied eigenpairs (identity
    /// route: quadrature against the assembled pencil).
    pub rayleigh_gap: Real,
    /// Relative gap between the transverse and normal-graph routes to
    /// Q_f on the supplied test entries.
    pub route_gap: Real,
    /// Q_f keeps the sign of each eigenvalue under the perturbation.
    pub signs_ok: bool,
    /// |Q_{f,v}[u/(W.n_f)] - Q_f[u]| / |Q_f[u]|: the dressing identity.
    pub vweight_identity: Real,
}

/// Stability of the quadratic form data under pullback: Rayleigh
/// quotients reproduce eigenvalues, the two independent routes to the
/// perturbed form agree, and small perturbations keep eigenvalue signs.
pub fn quadform_stability_check(
    fs: &FormSet,
    sec: &TransverseSection,
    shape: &TestFunction,
    eps: Real,
    pairs: &[(Real, TestFunction)],
) -> Result<StabilityReport, FormError> {
    if pairs.is_empty() {
        return Err(FormError::BadInput { reason: "no eigenpairs supplied".into() });
    }
    let mut rayleigh_gap = 0.0 as Real;
    for (mu, u) in pairs {
        let quot = fs.q(u, u) / fs.b(u, u);
        rayleigh_gap = rayleigh_gap.max((quot - mu).abs());
    }
    let p = transverse_pullback(fs.surf, sec, shape, eps)?;
    let graph = normal_graph(fs.surf, &p)?;
    let mut route_gap = 0.0 as Real;
    let mut signs_ok = true;
    let mut vweight_identity = 0.0 as Real;
    for (mu, u) in pairs {
        let qt = fs.q_pulled(&p, u, u);
        let qg = q_pulled_graph_route(fs, &graph, u, u);
        route_gap = route_gap.max((qt - qg).abs() / qt.abs().max(1e-300));
        if mu.abs() > 1e-3 && (qt < 0.0) != (*mu < 0.0) {
            signs_ok = false;
        }
        // Dressing identity: dividing the entry by the perturbed W.n and
        // applying the section-weighted form returns Q_f.
        let dressed_vals: Vec<Real> =
            (0..u.values.len()).map(|i| u.values[i] / p.vdotn[i]).collect();
        let dressed_deriv: Vec<Real> = (0..u.values.len())
            .map(|i| {
                (u.deriv[i] - u.values[i] * p.vdotn_prime[i] / p.vdotn[i]) / p.vdotn[i]
            })
            .collect();
        let dressed = TestFunction {
            values: dressed_vals,
            deriv: dressed_deriv,
            second: vec![0.0; u.values.len()],
            support: u.support,
        };
        let qv = fs.q_pulled_vweighted(&p, &dressed, &dressed);
        vweight_identity = vweight_identity.max((qv - qt).abs() / qt.abs().max(1e-300));
    }
    Ok(StabilityReport { rayleigh_gap, route_gap, signs_ok, vweight_identity })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct PoincareRow {
    /// int (4n + |x|^2) f^2 dmu_beta / int |grad f|^2 dmu_beta; at most 16.
    pub pi1: Real,
    /// (4 beta - 1) int |x_tan|^2 f^2 / int |grad f|^2; at most 4.
    pub pi2: Real,
    /// max over sphere radii of R e^{beta R^2} int_{S_R} f^2 /
    /// int_{|x| >= R} |grad f|^2 dmu_beta; at most 2 beyond the cone scale.
    pub boundary: Real,
    pub beta: Real,
}

/// Evaluates the three Poincare-type ratios for one compactly supported
/// function at one weight on an expander surface.
pub fn poincare_check(
    surf: &SurfaceGrid,
    f: &TestFunction,
    beta: Real,
    r1: Real,
) -> Result<PoincareRow, FormError> {
    if beta < 0.25 {
        return Err(FormError::BadInput {
            reason: format!("the estimates need beta >= 1/4, got {beta}"),
        });
    }
    let wg = surf.weighted(beta);
    let grad2 = wg.quadrature(|i| f.deriv[i] * f.deriv[i]);
    if !(grad2 > 0.0) {
        return Err(FormError::BadInput { reason: "gradient has zero mass".into() });
    }
    let num1 = wg.quadrature(|i| {
        (4.0 * surf.n as Real + surf.xnorm2[i]) * f.values[i] * f.values[i]
    });
    let num2 = wg.quadrature(|i| surf.xdott[i] * surf.xdott[i] * f.values[i] * f.values[i]);
    let pi1 = num1 / grad2;
    let pi2 = (4.0 * beta - 1.0) * num2 / grad2;
    // Sphere-crossing sweep. Radii run from just beyond the cone scale to
    // just inside the largest support radius.
    let (lo, hi) = f.support;
    let x_sup = (lo..=hi).map(|i| surf.xnorm2[i]).fold(0.0 as Real, Real::max).sqrt();
    let x_inf = (lo..=hi).map(|i| surf.xnorm2[i]).fold(Real::INFINITY, Real::min).sqrt();
    let r_start = (r1 * 1.05).max(x_inf * 1.01);
    let mut boundary = 0.0 as Real;
    if r_start < x_sup {
        let area = crate::geometry::unit_sphere_area(surf.n - 1);
        let sweep = 24usize;
        for k in 0..sweep {
            let rr = r_start + (x_sup * 0.999 - r_start) * k as Real / (sweep - 1) as Real;
            let rr2 = rr * rr;
            // Crossing sum of f^2 over the sphere slice.
            let mut slice = 0.0 as Real;
            for i in 0..surf.len() - 1 {
                let (x0, x1) = (surf.xnorm2[i], surf.xnorm2[i + 1]);
                if (x0 < rr2) == (x1 < rr2) {
                    continue;
                }
                let t = (rr2 - x0) / (x1 - x0);
                let fv = f.values[i] + t * (f.values[i + 1] - f.values[i]);
                let rc = surf.r[i] + t * (surf.r[i + 1] - surf.r[i]);
                slice += fv * fv * area * rc.powi(surf.n as i32 - 1);
            }
            if slice == 0.0 {
                continue;
            }
            // Exterior weighted gradient energy, trapezoid over runs.
            let mut tail = 0.0 as Real;
            for i in 0..surf.len() {
                if surf.xnorm2[i] < rr2 {
                    continue;
                }
                let interior_left = i > 0 && surf.xnorm2[i - 1] >= rr2;
                let interior_right = i + 1 < surf.len() && surf.xnorm2[i + 1] >= rr2;
                // Trapezoid over each exterior run; dropping the partial
                // boundary cells undercounts the tail, which only makes
                // the audited ratio larger.
                let w_end = if interior_left && interior_right { 1.0 } else { 0.5 };
                // WeightedGrid already halves the open grid ends; rebuild
                // the plain trapezoid weight from the log form instead.
                let log_w = (surf.n as Real - 1.0) * surf.r[i].ln()
                    + beta * surf.xnorm2[i]
                    + area.ln()
                    + surf.h.ln();
                tail += w_end * log_w.exp() * f.deriv[i] * f.deriv[i];
            }
            if tail < 1e-12 * grad2 {
                continue;
            }
            boundary = boundary.max(rr * (beta * rr2).exp() * slice / tail);
        }
    }
    Ok(PoincareRow { pi1, pi2, boundary, beta })
}

#[derive(Clone, Debug, Serialize)]
pub struct AuditLine {
    pub id: String,
    pub constant: Real,
    pub max_ratio: Real,
    pub samples: usize,
    pub seed: u64,
}

/// Randomized audit of the Poincare-type inequalities: random bumps
/// placed beyond the cone scale, both weights, worst ratios reported.
pub fn poincare_audit(
    surf: &SurfaceGrid,
    r1: Real,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<AuditLine>, FormError> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let s_max = surf.s.iter().cloned().fold(0.0 as Real, Real::max);
    // Smallest |s| with |x| comfortably beyond the cone scale.
    let s_beyond = surf
        .s
        .iter()
        .enumerate()
        .filter(|(i, _)| surf.xnorm2[*i].sqrt() >= r1)
        .map(|(_, &s)| s.abs())
        .fold(Real::INFINITY, Real::min);
    if !s_beyond.is_finite() || s_beyond + 1.0 > s_max {
        return Err(FormError::BadInput {
            reason: "grid has no room beyond the cone scale".into(),
        });
    }
    let mut worst = [0.0 as Real; 3];
    let mut count = 0usize;
    while count < n_samples {
        let width = rng.gen_range(0.3..1.5);
        let room = s_max - s_beyond - 2.0 * width - 3.0 * surf.h;
        if room <= 0.0 {
            return Err(FormError::BadInput { reason: "bump width exceeds the grid".into() });
        }
        let center_abs = s_beyond + width + rng.gen_range(0.0..room);
        let center = if rng.gen_bool(0.5) && surf.s[0] < 0.0 { -center_abs } else { center_abs };
        let f = TestFunction::bump(surf, center, width)?;
        for beta in [0.25, 0.375] {
            let row = poincare_check(surf, &f, beta, r1)?;
            worst[0] = worst[0].max(row.pi1);
            worst[1] = worst[1].max(row.pi2);
            worst[2] = worst[2].max(row.boundary);
        }
        count += 1;
    }
    Ok(vec![
        AuditLine {
            id: "drift_poincare".into(),
            constant: 16.0,
            max_ratio: worst[0],
            samples: 2 * n_samples,
            seed,
        },
        AuditLine {
            id: "tangential_weight".into(),
            constant: 4.0,
            max_ratio: worst[1],
            samples: 2 * n_samples,
            seed,
        },
        AuditLine {
            id: "sphere_trace".into(),
            constant: 2.0,
            max_ratio: worst[2],
            samples: 2 * n_samples,
            seed,
        },
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shooting::{integrate_profile, ShootConfig};
    use crate::spectral::{assemble_mode, mode_eigenpairs, pad_to_grid, SpectralConfig};

    fn unit_neck_grid() -> SurfaceGrid {
        let shoot = ShootConfig::default();
        let profile = integrate_profile(1.0, 2, &shoot).unwrap();
        SurfaceGrid::from_profile(&profile, true, 2).unwrap()
    }

    #[test]
    fn zero_step_pullback_is_bitwise_identity() {
        let surf = unit_neck_grid();
        let sec = TransverseSection::new(&surf, -1.0, 0.2).unwrap();
        let shape = TestFunction::bump(&surf, 1.0, 2.0).unwrap();
        let p = transverse_pullback(&surf, &sec, &shape, 0.0).unwrap();
        for i in 0..surf.len() {
            assert_eq!(p.omega[i], 1.0);
            assert_eq!(p.omega_m1[i], 0.0);
            assert_eq!(p.inv_gss[i], 1.0);
            assert_eq!(p.norm_a2[i], surf.norm_a2[i]);
            assert_eq!(p.vdotn[i], sec.vdotn[i]);
        }
        let fs = FormSet::new(&surf);
        let u = TestFunction::bump(&surf, -0.5, 1.2).unwrap();
        let w = TestFunction::bump(&surf, 0.3, 1.0).unwrap();
        assert_eq!(fs.q_pulled(&p, &u, &w), fs.q(&u, &w));
        assert_eq!(fs.b_pulled(&p, &u, &w), fs.b(&u, &w));
    }

    #[test]
    fn form_is_the_operator_pairing() {
        let surf = unit_neck_grid();
        let fs = FormSet::new(&surf);
        let u = TestFunction::bump(&surf, 0.8, 1.5).unwrap();
        let w = TestFunction::bump(&surf, 1.4, 1.1).unwrap();
        let res = fs.symmetry_residual(&u, &w);
        assert!(res < 1e-6, "integration-by-parts residual {res}");
    }

    #[test]
    fn section_weighted_form_matches_by_parts_route() {
        let surf = unit_neck_grid();
        let fs = FormSet::new(&surf);
        let sec = TransverseSection::new(&surf, -1.0, 0.15).unwrap();
        let ap = sec.aprime(&surf);
        let u = TestFunction::bump(&surf, 0.6, 1.3).unwrap();
        let w = TestFunction::bump(&surf, 1.1, 1.0).unwrap();
        let q1 = fs.q_vweighted(&sec, &u, &w);
        let q2 = fs.q_vweighted_by_parts(&sec, &ap, &u, &w);
        assert!(
            (q1 - q2).abs() / q1.abs().max(q2.abs()) < 1e-6,
            "route gap {} vs {}",
            q1,
            q2
        );
    }

    #[test]
    fn vertical_section_fails_transversality_at_the_neck() {
        let surf = unit_neck_grid();
        assert!(matches!(
            TransverseSection::new(&surf, 0.0, 1.0),
            Err(FormError::NotTransverse { .. })
        ));
        assert!(TransverseSection::new(&surf, 1.0, 0.0).is_ok());
    }

    #[test]
    fn area_hessian_is_the_section_weighted_form() {
        let surf = unit_neck_grid();
        let fs = FormSet::new(&surf);
        let sec = TransverseSection::new(&surf, -1.0, 0.0).unwrap();
        let u = TestFunction::bump(&surf, 0.5, 1.4).unwrap();
        let w = TestFunction::bump(&surf, 1.2, 1.1).unwrap();
        let rep = variation_check(&fs, &sec, &u, &w, 1e-3).unwrap();
        // The surface is critical: the first variation vanishes at O(eps^2).
        let fv_scale = fs.q_vweighted(&sec, &u, &u).abs();
        assert!(rep.first_var.abs() < 1e-4 * fv_scale, "first variation {}", rep.first_var);
        let shrink = rep.first_var.abs() / rep.first_var_half.abs().max(1e-300);
        assert!(shrink > 2.5, "first variation does not vanish quadratically: {shrink}");
        assert!(rep.second_rel_err < 1e-4, "Hessian mismatch {}", rep.second_rel_err);
        assert!(rep.mixed_rel_err < 1e-3, "polarization mismatch {}", rep.mixed_rel_err);
    }

    #[test]
    fn perturbation_inequalities_hold_with_margin() {
        let surf = unit_neck_grid();
        let fs = FormSet::new(&surf);
        let sec = TransverseSection::new(&surf, -1.0, 0.1).unwrap();
        let shape = TestFunction::bump(&surf, 0.4, 1.8).unwrap();
        let cfg = SpectralConfig::default();
        let asm = assemble_mode(&surf, 0, &cfg).unwrap();
        let pair = &mode_eigenpairs(&asm, 1)[0];
        let u = TestFunction::from_samples(&surf, pad_to_grid(&surf, &asm, &pair.vector)).unwrap();
        let v = TestFunction::bump(&surf, -0.7, 1.2).unwrap();
        let k_sigma = crate::geometry::surface_diagnostics(&surf).unwrap().k_sigma;
        let eps_list = [1e-3, 3e-3, 1e-2, 3e-2];
        let rep =
            perturbation_check(&fs, &sec, &shape, &u, &v, &eps_list, k_sigma).unwrap();
        assert!(rep.max_ratio <= 1.0, "an inequality failed: max ratio {}", rep.max_ratio);
        assert!(rep.delta_slope_spread < 2.0, "delta is not linear in eps: {}", rep.delta_slope_spread);
        // The check must not be vacuous: ratios are finite and positive.
        assert!(rep.rows.iter().all(|r| r.ratio_b_base > 0.0));
    }

    #[test]
    fn quadform_data_survives_pullback() {
        let surf = unit_neck_grid();
        let fs = FormSet::new(&surf);
        let sec = TransverseSection::new(&surf, -1.0, 0.1).unwrap();
        let shape = TestFunction::bump(&surf, 0.4, 1.8).unwrap();
        let cfg = SpectralConfig::default();
        let asm = assemble_mode(&surf, 0, &cfg).unwrap();
        let pairs_raw = mode_eigenpairs(&asm, 3);
        let pairs: Vec<(Real, TestFunction)> = pairs_raw
            .iter()
            .map(|p| {
                (
                    p.value,
                    TestFunction::from_samples(&surf, pad_to_grid(&surf, &asm, &p.vector))
                        .unwrap(),
                )
            })
            .collect();
        let rep = quadform_stability_check(&fs, &sec, &shape, 1e-3, &pairs).unwrap();
        assert!(rep.rayleigh_gap < 1e-4, "Rayleigh gap {}", rep.rayleigh_gap);
        assert!(rep.route_gap < 1e-4, "route gap {}", rep.route_gap);
        assert!(rep.signs_ok, "a perturbed eigenvalue changed sign");
        assert!(rep.vweight_identity < 1e-10, "dressing identity {}", rep.vweight_identity);
    }

    #[test]
    fn poincare_audit_respects_all_three_constants() {
        let surf = unit_neck_grid();
        let diag = crate::geometry::surface_diagnostics(&surf).unwrap();
        let lines = poincare_audit(&surf, diag.r1, 40, 0xC0FFEE).unwrap();
        for line in &lines {
            assert!(
                line.max_ratio <= line.constant,
                "{}: ratio {} exceeds {}",
                line.id,
                line.max_ratio,
                line.constant
            );
            assert!(line.max_ratio > 0.0, "{}: audit is vacuous", line.id);
        }
    }
}
