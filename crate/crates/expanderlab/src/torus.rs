//! The closed rotationally symmetric self-shrinker (a torus of revolution)
//! and the separation machinery built on it.
//!
//! Shooting the shrinker profile ODE from an inner equator (a, 0) with a
//! vertical tangent produces a half loop that returns to z = 0; the return
//! angle misses -pi/2 by an amount with a sign change in a, and the root is
//! the closed orbit. Mirroring across z = 0 yields the full profile, which
//! carries its own residual certificate.
//!
//! The torus clears the solid double cone {r <= delta |z|} exactly for
//! delta below the slope floor delta0 = min r/|z| over the profile. For an
//! expander Sigma starting at time 0 and the shrinker Lambda arriving at
//! time 1, the evolutions are sqrt(t) Sigma and sqrt(1-t) Lambda, and
//! `avoidance_check` measures their smallest separation over an interior
//! t grid; its precondition is that the asymptotic cone of Sigma clears
//! the torus, since that cone is the t -> 0 limit of the expander family.
//!
//! `barrier_eval` audits the ambient quadratic barrier
//! 2n + |x|^2 + h - (1 + eta^-2)(x.v)^2 on an expander surface, where the
//! drift operator L0 = Delta + x.grad/2 satisfies
//! (L0 - 1) f = -2 (1 + eta^-2) |grad (x.v)|^2 - h. Positivity of f needs
//! the slab |x.v| < eta sqrt(2n + h); the wider slab eta (2n + h) is also
//! counted because the sqrt is easy to drop by accident, and on wide cones
//! the difference is invisible.

use rayon::prelude::*;
use serde::Serialize;

use crate::geometry::{shrinker_residual, GeomError, ProfileCurve, ProfileSample, SurfaceGrid};
use crate::numeric::ode::{integrate_to, StepError};
use crate::numeric::roots::{bisect, brent_root};
use crate::numeric::stencil::{deriv1, deriv2, BoundaryMode};
use crate::shooting::{shrinker_rhs, RotationalExpander};
use crate::Real;

use std::f64::consts::{FRAC_PI_2, PI};

#[derive(thiserror::Error, Debug)]
pub enum TorusError {
    #[error(transparent)]
    Geometry(#[from] GeomError),
    #[error("adaptive integrator failed: {0}")]
    Integrator(StepError),
    #[error("no closed profile bracketed: {reason}")]
    BracketError { reason: String },
    #[error("closed profile failed its residual certificate: sup {sup} exceeds {tol}")]
    ResidualCertificate { sup: Real, tol: Real },
    #[error("profile does not close: gap {gap} exceeds {tol}")]
    ClosureGap { gap: Real, tol: Real },
    #[error("bad input: {reason}")]
    BadInput { reason: String },
    #[error("separation precondition broken: {inclusion}")]
    ConeObstructed { inclusion: String },
}

#[derive(Clone, Debug)]
pub struct TorusConfig {
    /// Target sample spacing of the closed profile; the actual step
    /// divides the half period exactly and is at most this.
    pub step: Real,
    /// Absolute and relative tolerances of the adaptive stepper.
    pub tol_abs: Real,
    pub tol_rel: Real,
    /// Arclength budget for one half loop before a shoot is classified
    /// as climbed away.
    pub s_budget: Real,
    /// Certificate threshold on the pointwise shrinker residual.
    pub residual_tol: Real,
    /// Threshold on |z| + |theta + pi/2| at the half period.
    pub closure_tol: Real,
    /// Scan window for the inner equator radius, as fractions of the
    /// cylinder radius sqrt(2(n-1)).
    pub scan_window: (Real, Real),
    pub scan_points: usize,
}

impl Default for TorusConfig {
    fn default() -> Self {
        TorusConfig {
            step: 1e-3,
            tol_abs: 1e-12,
            tol_rel: 1e-12,
            s_budget: 25.0,
            residual_tol: 1e-8,
            closure_tol: 1e-8,
            scan_window: (0.15, 0.995),
            scan_points: 201,
        }
    }
}

/// Outcome of shooting the shrinker ODE from (a, 0, pi/2).
#[derive(Clone, Copy, Debug)]
enum HalfShot {
    /// Back on z = 0 at arclength `s_cross` with tangent angle
    /// `theta_end`; the closed orbit has theta_end = -pi/2 there.
    Returned { s_cross: Real, theta_end: Real },
    /// Fell onto the rotation axis.
    AxisHit,
    /// Left the turning window or exhausted the arclength budget.
    ClimbedAway,
}

/// Mapping non-returning shoots to +-pi keeps the return-angle miss
/// bracketed for the root polish: an axis fall is an overshoot past the
/// vertical-down tangent, a climb-away never turns down far enough.
fn miss_value(shot: &HalfShot) -> Real {
    match shot {
        HalfShot::Returned { theta_end, .. } => theta_end + FRAC_PI_2,
        HalfShot::AxisHit => -PI,
        HalfShot::ClimbedAway => PI,
    }
}

const THETA_WINDOW: Real = 0.95 * PI;
const SHOOT_CHUNK: Real = 0.02;

fn shoot_half(a: Real, n: usize, cfg: &TorusConfig) -> Result<HalfShot, TorusError> {
    let rhs = shrinker_rhs(n);
    let chunks = (cfg.s_budget / SHOOT_CHUNK).ceil() as usize;
    let r_floor = (1e-6 as Real).min(1e-3 * a);
    let mut y = [a, 0.0, FRAC_PI_2];
    let mut s = 0.0_f64;
    for k in 1..=chunks {
        let s1 = k as Real * SHOOT_CHUNK;
        let mut hit_axis = false;
        let mut hit_window = false;
        let mut watch = |_s: Real, yy: &[Real; 3]| {
            if yy[0] < r_floor {
                hit_axis = true;
                return false;
            }
            if yy[2].abs() >= THETA_WINDOW {
                hit_window = true;
                return false;
            }
            true
        };
        let (_, ynew) =
            integrate_to(&rhs, s, y, s1, cfg.tol_abs, cfg.tol_rel, SHOOT_CHUNK, &mut watch)
                .map_err(TorusError::Integrator)?;
        if hit_axis {
            return Ok(HalfShot::AxisHit);
        }
        if hit_window {
            return Ok(HalfShot::ClimbedAway);
        }
        if ynew[1] <= 0.0 && k >= 2 {
            // z crossed inside this chunk; polish the crossing time by
            // bisection on re-integrations from the chunk start.
            let (s0, y0) = (s, y);
            let zeval = |sc: Real| -> Real {
                if sc <= s0 {
                    return y0[1];
                }
                let mut pass = |_: Real, _: &[Real; 3]| true;
                match integrate_to(&rhs, s0, y0, sc, cfg.tol_abs, cfg.tol_rel, SHOOT_CHUNK, &mut pass)
                {
                    Ok((_, yy)) => yy[1],
                    Err(_) => Real::NAN,
                }
            };
            let s_cross = bisect(zeval, s0, s1, 1e-13).map_err(|e| TorusError::BracketError {
                reason: format!("z-crossing polish failed: {e}"),
            })?;
            let mut pass = |_: Real, _: &[Real; 3]| true;
            let (_, yc) =
                integrate_to(&rhs, s0, y0, s_cross, cfg.tol_abs, cfg.tol_rel, SHOOT_CHUNK, &mut pass)
                    .map_err(TorusError::Integrator)?;
            return Ok(HalfShot::Returned { s_cross, theta_end: yc[2] });
        }
        y = ynew;
        s = s1;
    }
    Ok(HalfShot::ClimbedAway)
}

/// Integrates the half loop at a uniform output step dividing `s_cross`
/// and returns the samples plus the closure gap at the half period.
fn resample_half(
    a: Real,
    n: usize,
    cfg: &TorusConfig,
    s_cross: Real,
) -> Result<(Vec<ProfileSample>, Real, Real), TorusError> {
    let count = ((s_cross / cfg.step).ceil() as usize).max(64);
    let h = s_cross / count as Real;
    let rhs = shrinker_rhs(n);
    let mut samples = Vec::with_capacity(2 * count);
    samples.push(ProfileSample { s: 0.0, r: a, z: 0.0, theta: FRAC_PI_2 });
    let mut y = [a, 0.0, FRAC_PI_2];
    for k in 1..=count {
        let s0 = (k - 1) as Real * h;
        let s1 = k as Real * h;
        let mut pass = |_: Real, _: &[Real; 3]| true;
        let (_, ynew) = integrate_to(&rhs, s0, y, s1, cfg.tol_abs, cfg.tol_rel, h, &mut pass)
            .map_err(TorusError::Integrator)?;
        y = ynew;
        samples.push(ProfileSample { s: s1, r: y[0], z: y[1], theta: y[2] });
    }
    let gap = y[1].abs() + (y[2] + FRAC_PI_2).abs();
    Ok((samples, h, gap))
}

/// |x| extremes over a closed profile, refined by the parabola through
/// each discrete extremum. Extremes of |x| sit at interior critical
/// points, so the vertex correction removes the O(h^2) sampling bias.
fn extremal_norms(p: &ProfileCurve) -> (Real, Real) {
    let vals: Vec<Real> = p.samples.iter().map(|q| q.r.hypot(q.z)).collect();
    let len = vals.len();
    let mut lo = (0usize, Real::INFINITY);
    let mut hi = (0usize, Real::NEG_INFINITY);
    for (i, &v) in vals.iter().enumerate() {
        if v < lo.1 {
            lo = (i, v);
        }
        if v > hi.1 {
            hi = (i, v);
        }
    }
    let vertex = |i: usize| -> Real {
        let a = vals[(i + len - 1) % len];
        let b = vals[i];
        let c = vals[(i + 1) % len];
        let denom = a - 2.0 * b + c;
        if denom.abs() < 1e-300 {
            return b;
        }
        b - (a - c) * (a - c) / (8.0 * denom)
    };
    (vertex(lo.0), vertex(hi.0))
}

/// Slope floor of a profile against solid double cones {r <= delta |z|}.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Delta0Report {
    /// Largest slope cleared by the whole profile: min r/|z| over the
    /// samples, sharpened by the parabola vertex at the minimizer.
    pub delta0: Real,
    /// The same floor over samples outside the closed ball of radius
    /// min |x|. The avoided set of the separation argument is the union
    /// of the cone with that ball, so points inside it never bind; the
    /// two floors coincide whenever the tangency sits outside the ball.
    pub delta0_refined: Real,
    /// Distance from the cone of slope `delta0` to its nearest sample;
    /// tangency makes it vanish.
    pub tangency_gap: Real,
    /// Index of the minimizing sample.
    pub index: usize,
}

/// Largest double cone cleared by the profile. Samples on the z = 0
/// plane have infinite slope and never bind. Neighbor indexing for the
/// vertex sharpening wraps only when the endpoints meet.
pub fn compute_delta0(p: &ProfileCurve) -> Result<Delta0Report, TorusError> {
    p.validate(10.0)?;
    let len = p.len();
    let slope = |i: usize| -> Real {
        let q = &p.samples[i];
        let az = q.z.abs();
        if az < 1e-12 * (1.0 + q.r) {
            Real::INFINITY
        } else {
            q.r / az
        }
    };
    let closed = {
        let f = &p.samples[0];
        let l = &p.samples[len - 1];
        (f.r - l.r).hypot(f.z - l.z) <= 2.0 * p.step
    };
    // Vertex of the parabola through the minimizer and its neighbors;
    // removes the O(h^2) sampling bias of the discrete minimum.
    let polished = |i0: usize, d_raw: Real| -> Real {
        let neighbor = |off: isize| -> Option<Real> {
            let j = i0 as isize + off;
            let j = if closed {
                j.rem_euclid(len as isize) as usize
            } else if (0..len as isize).contains(&j) {
                j as usize
            } else {
                return None;
            };
            Some(slope(j))
        };
        match (neighbor(-1), neighbor(1)) {
            (Some(a), Some(c)) if a.is_finite() && c.is_finite() => {
                let denom = a - 2.0 * d_raw + c;
                if denom > 1e-300 {
                    (d_raw - (a - c) * (a - c) / (8.0 * denom)).min(d_raw)
                } else {
                    d_raw
                }
            }
            _ => d_raw,
        }
    };
    let floor_over = |keep: &dyn Fn(usize) -> bool| -> Option<(usize, Real)> {
        let mut best = (usize::MAX, Real::INFINITY);
        for i in 0..len {
            if !keep(i) {
                continue;
            }
            let v = slope(i);
            if v < best.1 {
                best = (i, v);
            }
        }
        (best.0 != usize::MAX && best.1.is_finite()).then(|| (best.0, polished(best.0, best.1)))
    };
    let Some((i0, delta0)) = floor_over(&|_| true) else {
        return Err(TorusError::BadInput { reason: "every sample sits on the z = 0 plane".into() });
    };
    let rmin2 = p.samples.iter().map(|q| q.r * q.r + q.z * q.z).fold(Real::INFINITY, Real::min);
    let outside = |i: usize| {
        let q = &p.samples[i];
        q.r * q.r + q.z * q.z > rmin2 + 1e-9 * (1.0 + rmin2)
    };
    let delta0_refined = floor_over(&outside).map(|(_, d)| d).unwrap_or(Real::INFINITY);
    let norm = delta0.hypot(1.0);
    let mut gap = Real::INFINITY;
    for q in &p.samples {
        gap = gap.min((q.r - delta0 * q.z.abs()) / norm);
    }
    Ok(Delta0Report { delta0, delta0_refined, tangency_gap: gap, index: i0 })
}

/// A certified closed rotationally symmetric self-shrinker.
#[derive(Clone, Debug, Serialize)]
pub struct ShrinkerTorus {
    #[serde(flatten)]
    pub profile: ProfileCurve,
    /// Smallest |x| over the profile; the ball B_Rminus is cleared.
    #[serde(rename = "Rminus")]
    pub rminus: Real,
    /// Largest |x| over the profile.
    #[serde(rename = "Rplus")]
    pub rplus: Real,
    /// Discrete slope floor min r/|z|.
    pub delta0: Real,
    /// Vertex-refined slope floor.
    pub delta0_refined: Real,
    /// |z| + |theta + pi/2| at the half period before mirroring.
    pub closure_gap: Real,
    /// Sup of the pointwise shrinker residual over the closed profile.
    pub residual_sup: Real,
    /// Inner equator radius: the shooting parameter of the closed orbit.
    pub a_star: Real,
    /// Total arclength of the closed profile.
    pub s_period: Real,
}

/// Finds the closed shrinker profile by scanning inner equator radii,
/// bracketing the return-angle sign change, polishing the root, and
/// mirroring the half loop. The profile is certified by its closure gap
/// and pointwise residual before it is returned.
pub fn integrate_shrinker_torus(n: usize, cfg: &TorusConfig) -> Result<ShrinkerTorus, TorusError> {
    if n < 2 {
        return Err(GeomError::BadDimension(n).into());
    }
    let (w0, w1) = cfg.scan_window;
    if !(w0 > 0.0 && w1 < 1.0 && w0 < w1) {
        return Err(TorusError::BadInput {
            reason: format!("scan window ({w0}, {w1}) must sit inside (0, 1)"),
        });
    }
    if cfg.scan_points < 16 {
        return Err(TorusError::BadInput {
            reason: format!("{} scan points cannot bracket reliably", cfg.scan_points),
        });
    }
    let r_cyl = (2.0 * (n as Real - 1.0)).sqrt();
    let m = cfg.scan_points;
    let grid: Vec<Real> =
        (0..m).map(|i| r_cyl * (w0 + (w1 - w0) * i as Real / (m - 1) as Real)).collect();
    let shots: Result<Vec<HalfShot>, TorusError> =
        grid.par_iter().map(|&a| shoot_half(a, n, cfg)).collect();
    let shots = shots?;
    let mut brackets = Vec::new();
    for w in 0..m - 1 {
        if let (
            HalfShot::Returned { theta_end: t0, .. },
            HalfShot::Returned { theta_end: t1, .. },
        ) = (&shots[w], &shots[w + 1])
        {
            let (m0, m1) = (t0 + FRAC_PI_2, t1 + FRAC_PI_2);
            if m0 == 0.0 || (m0 > 0.0) != (m1 > 0.0) {
                brackets.push((grid[w], grid[w + 1]));
            }
        }
    }
    if brackets.is_empty() {
        let mut counts = [0usize; 3];
        for sh in &shots {
            let slot = match sh {
                HalfShot::Returned { .. } => 0,
                HalfShot::AxisHit => 1,
                HalfShot::ClimbedAway => 2,
            };
            counts[slot] += 1;
        }
        return Err(TorusError::BracketError {
            reason: format!(
                "no return-angle sign change among {m} shoots in ({:.4}, {:.4}) \
                 ({} returned, {} hit the axis, {} climbed away)",
                grid[0], grid[m - 1], counts[0], counts[1], counts[2]
            ),
        });
    }
    // The first bracket in ascending a is the embedded torus; later sign
    // changes near the cylinder radius belong to immersed loops. Fall
    // through to them only if the first certificate fails.
    let mut last_err = None;
    for (alo, ahi) in brackets {
        match close_orbit(alo, ahi, n, cfg, r_cyl) {
            Ok(t) => return Ok(t),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap())
}

fn close_orbit(
    alo: Real,
    ahi: Real,
    n: usize,
    cfg: &TorusConfig,
    r_cyl: Real,
) -> Result<ShrinkerTorus, TorusError> {
    let miss = |a: Real| match shoot_half(a, n, cfg) {
        Ok(sh) => miss_value(&sh),
        Err(_) => Real::NAN,
    };
    let a_star = brent_root(miss, alo, ahi, 1e-13 * r_cyl, 0.0).map_err(|e| {
        TorusError::BracketError { reason: format!("return-angle polish failed: {e}") }
    })?;
    let HalfShot::Returned { s_cross, .. } = shoot_half(a_star, n, cfg)? else {
        return Err(TorusError::BracketError {
            reason: format!("polished orbit at a = {a_star} did not return"),
        });
    };
    let (half, h, gap) = resample_half(a_star, n, cfg, s_cross)?;
    if gap > cfg.closure_tol {
        return Err(TorusError::ClosureGap { gap, tol: cfg.closure_tol });
    }
    // Mirror across z = 0. The reflected tangent angle -pi - theta keeps
    // theta continuous (winding by -2 pi over the period); the seam at
    // index 0 closes modulo 2 pi, which the periodic curvature stencils
    // absorb by differentiating (cos theta, sin theta).
    let count = half.len() - 1;
    let mut samples = half;
    for k in (count + 1)..(2 * count) {
        let j = 2 * count - k;
        let q = samples[j];
        samples.push(ProfileSample { s: k as Real * h, r: q.r, z: -q.z, theta: -PI - q.theta });
    }
    let profile = ProfileCurve { n, step: h, samples };
    let res = shrinker_residual(&profile, true)?;
    if res.sup > cfg.residual_tol {
        return Err(TorusError::ResidualCertificate { sup: res.sup, tol: cfg.residual_tol });
    }
    let (rminus, rplus) = extremal_norms(&profile);
    let d0 = compute_delta0(&profile)?;
    Ok(ShrinkerTorus {
        profile,
        rminus,
        rplus,
        delta0: d0.delta0,
        delta0_refined: d0.delta0_refined,
        closure_gap: gap,
        residual_sup: res.sup,
        a_star,
        s_period: 2.0 * count as Real * h,
    })
}

/// Separation of the families sqrt(t) Sigma and sqrt(1-t) Lambda over an
/// interior t grid.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct AvoidanceReport {
    pub t_steps: usize,
    /// Smallest sampled distance over the grid; an upper bound for the
    /// true family separation.
    pub min_distance: Real,
    pub t_at_min: Real,
    /// Distance from the asymptotic double cone of Sigma to the torus in
    /// the profile plane; negative when the cone cuts through it.
    pub cone_clearance: Real,
    /// Lower bound for distances realized beyond the last expander
    /// sample, minimized over the grid; negative means the truncated
    /// tail gives no guarantee.
    pub far_field_floor: Real,
    /// Certified lower bound: sampled minimum capped by the tail floor.
    pub min_overall: Real,
    /// Scaled sample spacing at the minimizing t; sampled minima are
    /// only trustworthy a few multiples above this.
    pub resolution: Real,
}

/// Smallest pairwise distance between the point sets sqrt(t) X and
/// sqrt(1-t) Y. Exact on the given samples, so it is Lipschitz in t with
/// constant bounded through the scale factors alone.
pub fn scaled_min_distance(xs: &[(Real, Real)], ys: &[(Real, Real)], t: Real) -> Real {
    let (a, b) = (t.sqrt(), (1.0 - t).sqrt());
    let mut best = Real::INFINITY;
    for &(xr, xz) in xs {
        let (pr, pz) = (a * xr, a * xz);
        for &(yr, yz) in ys {
            let dr = pr - b * yr;
            let dz = pz - b * yz;
            let d2 = dr * dr + dz * dz;
            if d2 < best {
                best = d2;
            }
        }
    }
    best.sqrt()
}

fn point_segment_dist2(p: (Real, Real), a: (Real, Real), b: (Real, Real)) -> Real {
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let (wx, wy) = (p.0 - a.0, p.1 - a.1);
    let vv = vx * vx + vy * vy;
    let t = if vv > 0.0 { ((wx * vx + wy * vy) / vv).clamp(0.0, 1.0) } else { 0.0 };
    let (dx, dy) = (wx - t * vx, wy - t * vy);
    dx * dx + dy * dy
}

/// Coarse point-point minimum over strided samples, then a full-rate
/// point-segment polish around the coarse minimizer. Both curves are
/// symmetric across z = 0, so upper halves suffice: reflecting one point
/// of a pair never decreases |z1 - z2| when both are nonnegative.
fn refined_gap(
    xs: &[(Real, Real)],
    ys: &[(Real, Real)],
    se: usize,
    st: usize,
    t: Real,
) -> Real {
    let (a, b) = (t.sqrt(), (1.0 - t).sqrt());
    let mut best = Real::INFINITY;
    let (mut i0, mut j0) = (0usize, 0usize);
    let mut i = 0;
    while i < xs.len() {
        let (pr, pz) = (a * xs[i].0, a * xs[i].1);
        let mut j = 0;
        while j < ys.len() {
            let dr = pr - b * ys[j].0;
            let dz = pz - b * ys[j].1;
            let d2 = dr * dr + dz * dz;
            if d2 < best {
                best = d2;
                i0 = i;
                j0 = j;
            }
            j += st;
        }
        i += se;
    }
    let ilo = i0.saturating_sub(3 * se);
    let ihi = (i0 + 3 * se + 1).min(xs.len());
    let jlo = j0.saturating_sub(3 * st);
    let jhi = (j0 + 3 * st + 1).min(ys.len());
    let mut d2 = best;
    for i in ilo..ihi {
        let p = (a * xs[i].0, a * xs[i].1);
        for j in jlo..jhi.saturating_sub(1) {
            let s0 = (b * ys[j].0, b * ys[j].1);
            let s1 = (b * ys[j + 1].0, b * ys[j + 1].1);
            d2 = d2.min(point_segment_dist2(p, s0, s1));
        }
    }
    for j in jlo..jhi {
        let p = (b * ys[j].0, b * ys[j].1);
        for i in ilo..ihi.saturating_sub(1) {
            let s0 = (a * xs[i].0, a * xs[i].1);
            let s1 = (a * xs[i + 1].0, a * xs[i + 1].1);
            d2 = d2.min(point_segment_dist2(p, s0, s1));
        }
    }
    d2.sqrt()
}

/// Raw scaled-family separation over the interior grid t_k = k/(steps+1).
/// No cone precondition: this is also the crossing diagnosis for pairs
/// whose asymptotic cone cuts the torus.
pub fn scaled_family_gap(
    exp: &RotationalExpander,
    torus: &ShrinkerTorus,
    t_steps: usize,
) -> Result<AvoidanceReport, TorusError> {
    if t_steps < 2 {
        return Err(TorusError::BadInput {
            reason: format!("{t_steps} interior grid points cannot scan (0, 1)"),
        });
    }
    if exp.profile.len() < 16 || torus.profile.len() < 16 {
        return Err(TorusError::BadInput { reason: "profiles too short to compare".into() });
    }
    let delta = exp.slope.delta;
    let cone_norm = delta.hypot(1.0);
    let mut clearance = Real::INFINITY;
    for q in &torus.profile.samples {
        clearance = clearance.min((q.r - delta * q.z.abs()) / cone_norm);
    }
    let xs: Vec<(Real, Real)> = exp.profile.samples.iter().map(|q| (q.r, q.z)).collect();
    let ys: Vec<(Real, Real)> =
        torus.profile.samples.iter().filter(|q| q.z >= -1e-9).map(|q| (q.r, q.z)).collect();

    // Tail certificate: beyond the last sample the expander stays inside
    // the tube of width w around its cone (w is measured on the last
    // tenth and decays outward), and keeps |x| above the last sample.
    let tail_from = xs.len() * 9 / 10;
    let mut w: Real = 0.0;
    for &(r, z) in &xs[tail_from..] {
        w = w.max((r - delta * z).abs() / cone_norm);
    }
    let m_end = {
        let &(r, z) = xs.last().unwrap();
        r.hypot(z)
    };

    let se = (xs.len() / 1200).max(1);
    let st = (ys.len() / 1200).max(1);
    let h_exp = exp.profile.step;
    let h_tor = torus.profile.step;
    let rows: Vec<(Real, Real, Real)> = (1..=t_steps)
        .into_par_iter()
        .map(|k| {
            let t = k as Real / (t_steps as Real + 1.0);
            let d = refined_gap(&xs, &ys, se, st, t);
            let res = (t.sqrt() * h_exp * se as Real).max((1.0 - t).sqrt() * h_tor * st as Real);
            (t, d, res)
        })
        .collect();

    let mut min_distance = Real::INFINITY;
    let mut t_at_min = rows[0].0;
    let mut resolution = rows[0].2;
    let mut far_floor = Real::INFINITY;
    for &(t, d, res) in &rows {
        if d < min_distance {
            min_distance = d;
            t_at_min = t;
            resolution = res;
        }
        let cone_bound = (1.0 - t).sqrt() * clearance - t.sqrt() * w;
        let radial_bound = t.sqrt() * m_end - (1.0 - t).sqrt() * torus.rplus;
        far_floor = far_floor.min(cone_bound.max(radial_bound));
    }
    Ok(AvoidanceReport {
        t_steps,
        min_distance,
        t_at_min,
        cone_clearance: clearance,
        far_field_floor: far_floor,
        min_overall: min_distance.min(far_floor.max(0.0)),
        resolution,
    })
}

/// Scaled-family separation with the geometric precondition of the
/// avoidance argument: the asymptotic cone of the expander must be
/// disjoint from the torus, because the cone is the t -> 0 limit of
/// sqrt(t) Sigma. The cone is covered by the solid double cone of its
/// slope (widened by the fit uncertainty) together with the ball the
/// torus clears around the origin; the error names whichever inclusion
/// failed.
pub fn avoidance_check(
    exp: &RotationalExpander,
    torus: &ShrinkerTorus,
    t_steps: usize,
) -> Result<AvoidanceReport, TorusError> {
    if !(torus.rminus > 1e-9) {
        return Err(TorusError::ConeObstructed {
            inclusion: format!(
                "the torus does not clear a ball around the origin: Rminus = {:.3e}, so the \
                 cone tip cannot be excluded",
                torus.rminus
            ),
        });
    }
    let dm = exp.slope.delta + exp.slope.fit_error;
    let norm = dm.hypot(1.0);
    let mut clearance = Real::INFINITY;
    for q in &torus.profile.samples {
        clearance = clearance.min((q.r - dm * q.z.abs()) / norm);
    }
    if !(clearance > 0.0) {
        return Err(TorusError::ConeObstructed {
            inclusion: format!(
                "the solid cone r <= {dm:.6} |z| (slope {:.6} plus fit error {:.2e}) is not \
                 disjoint from the torus: signed clearance {clearance:.3e}; the torus clears \
                 slopes only below delta0 = {:.6}",
                exp.slope.delta, exp.slope.fit_error, torus.delta0_refined
            ),
        });
    }
    scaled_family_gap(exp, torus, t_steps)
}

/// Axis direction, slab width, and offset of the ambient quadratic
/// barrier 2n + |x|^2 + h - (1 + eta^-2)(x.v)^2.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct BarrierParams {
    /// Axis direction (vr, vz); normalized internally.
    pub vr: Real,
    pub vz: Real,
    /// Slab width parameter; positivity holds on |x.v| < eta sqrt(2n+h).
    pub eta: Real,
    /// Constant offset h > -2n.
    pub h: Real,
}

#[derive(Clone, Debug, Serialize)]
pub struct BarrierReport {
    /// Barrier values per sample, as azimuthal slots (f0, f1, f2) with
    /// f = f0 + f1 w + f2 w^2 in the first-harmonic coordinate w of the
    /// orbit sphere.
    pub f_slots: Vec<[Real; 3]>,
    /// Drift identity residual per sample and slot: (L0 - 1) applied to
    /// the slot minus its closed form.
    pub residual_slots: Vec<[Real; 3]>,
    /// Sup of the identity residual per slot, over rows with centered
    /// stencils; the one-sided closures at open ends amplify roundoff
    /// by an order of magnitude and are reported only per sample.
    pub identity_residual: [Real; 3],
    /// Sup residual of (L0 - 1)(2n + |x|^2) = 0 on the same rows.
    pub eigen_residual: Real,
    /// Sup residuals of L0 z = z/2 and L0 (r w) = (r w)/2.
    pub half_residual: [Real; 2],
    /// Barrier sign violations at samples inside |x.v| < eta sqrt(2n+h).
    pub violations_sqrt: usize,
    /// Violations inside the wider slab |x.v| < eta (2n+h), which the
    /// drift identity does not protect.
    pub violations_linear: usize,
    /// Smallest barrier value seen inside the sqrt slab.
    pub min_f_sqrt: Real,
    /// Sample spacing, for convergence-order bookkeeping.
    pub h_step: Real,
}

/// Audits the barrier on a surface satisfying the expander equation; the
/// drift identity (L0 - 1) f = -2 (1+eta^-2) |grad (x.v)|^2 - h and its
/// building blocks L0 |x|^2 = 2n + |x|^2, L0 (x.v) = (x.v)/2 hold only
/// there. The function x.v = vr r w + vz z splits over the orbit sphere
/// into slots {1, w, w^2}; each slot is checked separately, so an error
/// in one harmonic cannot hide behind another.
pub fn barrier_eval(surf: &SurfaceGrid, params: &BarrierParams) -> Result<BarrierReport, TorusError> {
    if surf.len() < 8 {
        return Err(TorusError::BadInput { reason: "surface too short for the stencils".into() });
    }
    if !(params.eta > 0.0) || !params.eta.is_finite() {
        return Err(TorusError::BadInput { reason: format!("eta = {} must be positive", params.eta) });
    }
    let n = surf.n as Real;
    let ph = params.h;
    if !(2.0 * n + ph > 0.0) {
        return Err(TorusError::BadInput {
            reason: format!("offset h = {ph} pushes 2n + h below zero"),
        });
    }
    let scale = params.vr.hypot(params.vz);
    if !(scale > 0.0) {
        return Err(TorusError::BadInput { reason: "axis direction vanishes".into() });
    }
    let (vr, vz) = (params.vr / scale, params.vz / scale);
    let kk = 1.0 + 1.0 / (params.eta * params.eta);
    let len = surf.len();
    let h = surf.h;
    let mode = if surf.closed { BoundaryMode::Periodic } else { BoundaryMode::OneSided };
    let nm1 = n - 1.0;

    // L0 on a radial function: G'' + ((n-1) cos(theta)/r + (x.T)/2) G'.
    let dop = |g: &[Real]| -> Vec<Real> {
        let gp = deriv1(g, h, mode);
        let gpp = deriv2(g, h, mode);
        (0..len)
            .map(|i| gpp[i] + (nm1 * surf.theta[i].cos() / surf.r[i] + 0.5 * surf.xdott[i]) * gp[i])
            .collect()
    };

    let slot_a: Vec<Real> =
        (0..len).map(|i| 2.0 * n + surf.xnorm2[i] + ph - kk * vz * vz * surf.z[i] * surf.z[i]).collect();
    let slot_b: Vec<Real> = (0..len).map(|i| -2.0 * kk * vr * vz * surf.r[i] * surf.z[i]).collect();
    let slot_c: Vec<Real> = (0..len).map(|i| -kk * vr * vr * surf.r[i] * surf.r[i]).collect();
    let da = dop(&slot_a);
    let db = dop(&slot_b);
    let dc = dop(&slot_c);

    // Angular parts on the orbit sphere of radius r: the first harmonic w
    // has Laplacian -(n-1) w, its square 2 - 2n w^2; the drift never
    // touches them because x is orthogonal to the orbit tangents.
    let mut f_slots = Vec::with_capacity(len);
    let mut residual_slots = Vec::with_capacity(len);
    for i in 0..len {
        let st = surf.theta[i].sin();
        let ct = surf.theta[i].cos();
        let r2 = surf.r[i] * surf.r[i];
        let l0 = [
            da[i] + 2.0 * slot_c[i] / r2,
            db[i] - nm1 * slot_b[i] / r2,
            dc[i] - 2.0 * n * slot_c[i] / r2,
        ];
        let rhs = [
            -2.0 * kk * (vz * vz * st * st + vr * vr) - ph,
            -4.0 * kk * vr * vz * st * ct,
            2.0 * kk * vr * vr * st * st,
        ];
        let f = [slot_a[i], slot_b[i], slot_c[i]];
        f_slots.push(f);
        residual_slots.push([l0[0] - f[0] - rhs[0], l0[1] - f[1] - rhs[1], l0[2] - f[2] - rhs[2]]);
    }

    // Sup only over rows whose stencils are centered: the one-sided
    // closures at open ends carry coefficient sums ten times larger and
    // their roundoff floor would mask genuine interior convergence.
    let trim = if surf.closed { 0 } else { 3.min(len / 2) };
    let sup_rows = trim..len - trim;
    let mut identity_residual = [0.0 as Real; 3];
    for i in sup_rows.clone() {
        for k in 0..3 {
            identity_residual[k] = identity_residual[k].max(residual_slots[i][k].abs());
        }
    }

    let uu: Vec<Real> = (0..len).map(|i| 2.0 * n + surf.xnorm2[i]).collect();
    let du = dop(&uu);
    let dz = dop(&surf.z);
    let dr = dop(&surf.r);
    let mut eigen_residual: Real = 0.0;
    let mut half_residual = [0.0 as Real; 2];
    for i in sup_rows {
        eigen_residual = eigen_residual.max((du[i] - uu[i]).abs());
        half_residual[0] = half_residual[0].max((dz[i] - 0.5 * surf.z[i]).abs());
        half_residual[1] =
            half_residual[1].max((dr[i] - nm1 / surf.r[i] - 0.5 * surf.r[i]).abs());
    }

    let thr_sqrt = params.eta * (2.0 * n + ph).sqrt();
    let thr_linear = params.eta * (2.0 * n + ph);
    let mut violations_sqrt = 0usize;
    let mut violations_linear = 0usize;
    let mut min_f_sqrt = Real::INFINITY;
    let omega_grid = 21usize;
    for i in 0..len {
        for k in 0..omega_grid {
            let wv = -1.0 + 2.0 * k as Real / (omega_grid - 1) as Real;
            let xv = vr * surf.r[i] * wv + vz * surf.z[i];
            let f = 2.0 * n + surf.xnorm2[i] + ph - kk * xv * xv;
            if xv.abs() < thr_sqrt {
                if f <= 0.0 {
                    violations_sqrt += 1;
                }
                min_f_sqrt = min_f_sqrt.min(f);
            }
            if xv.abs() < thr_linear && f <= 0.0 {
                violations_linear += 1;
            }
        }
    }

    Ok(BarrierReport {
        f_slots,
        residual_slots,
        identity_residual,
        eigen_residual,
        half_residual,
        violations_sqrt,
        violations_linear,
        min_f_sqrt,
        h_step: h,
    })
}
