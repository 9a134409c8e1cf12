//! Shooting for rotationally symmetric self-expander profiles.
//!
//! The profile ODE in arclength, with the sign conventions of `geometry`,
//! is
//!
//!   r' = cos theta,  z' = sin theta,
//!   theta' = (z cos theta - r sin theta)/2 - (n-1) sin(theta)/r,
//!
//! started at (r0, 0, pi/2): the neck of the double-cone-symmetric
//! expander, which mirrors across z = 0. The end is asymptotic to the cone
//! r = delta z; `asymptotic_slope` extracts delta by fitting r/z against
//! 1/z^2 powers, which matches the end expansion r = delta z + a/z + O(z^-3).
//!
//! The slope map r0 -> delta(r0) blows up at both ends of the neck range
//! and has a single interior minimum delta_star (the fold). Above the fold
//! each slope is hit by exactly two necks; `find_branches` locates both.

use rayon::prelude::*;
use serde::Serialize;

use crate::geometry::{
    expander_residual, surface_diagnostics, GeomError, ProfileCurve, ProfileSample,
    SurfaceDiagnostics,
};
use crate::numeric::fit::lstsq;
use crate::numeric::ode::{integrate_to, StepError};
use crate::numeric::roots::{brent_min, brent_root, golden_min};
use crate::Real;

use std::f64::consts::{FRAC_PI_2, PI};

#[derive(thiserror::Error, Debug)]
pub enum ShootError {
    #[error("neck radius must be positive and finite, got {0}")]
    BadNeck(Real),
    #[error(transparent)]
    Geometry(#[from] GeomError),
    #[error("profile left the graphical envelope at s = {s} (theta = {theta})")]
    NonGraphical { s: Real, theta: Real, partial: Box<ProfileCurve> },
    #[error("profile collapsed onto the rotation axis at s = {s}")]
    AxisCollision { s: Real, partial: Box<ProfileCurve> },
    #[error("adaptive integrator failed: {0}")]
    Integrator(StepError),
    #[error("asymptotic slope fit unreliable: {reason}")]
    FitUnreliable { reason: String },
    #[error("bracketing failed: {reason}")]
    BracketError { reason: String },
    #[error("cone slope {delta} lies inside the fold exclusion zone around delta_star = {delta_star}")]
    FoldProximity { delta: Real, delta_star: Real },
    #[error("residual certificate failed: sup {sup} exceeds {tol}")]
    ResidualCertificate { sup: Real, tol: Real },
}

#[derive(Clone, Debug)]
pub struct ShootConfig {
    /// Arclength span of the computed half profile.
    pub s_max: Real,
    /// Output sample spacing.
    pub step: Real,
    /// Absolute and relative tolerances of the adaptive stepper.
    pub tol_abs: Real,
    pub tol_rel: Real,
    /// Slope-fit window: samples with |x| >= r_fit and z >= z_fit_min.
    pub r_fit: Real,
    pub z_fit_min: Real,
    /// Neck radii searched by the fold locator and branch solver.
    pub r0_window: (Real, Real),
    /// Certificate threshold on the pointwise expander residual.
    pub residual_tol: Real,
    /// Residual target for |delta(r0) - delta| in branch solves.
    pub root_ftol: Real,
}

impl Default for ShootConfig {
    fn default() -> Self {
        ShootConfig {
            s_max: 12.0,
            step: 1e-3,
            // Tighter than the slope fit needs: the residual certificate
            // differentiates the samples, which amplifies integrator noise
            // by 1/step.
            tol_abs: 1e-12,
            tol_rel: 1e-12,
            r_fit: 8.0,
            z_fit_min: 2.0,
            r0_window: (1e-2, 10.0),
            residual_tol: 1e-8,
            root_ftol: 1e-8,
        }
    }
}

/// Right-hand side of the expander profile ODE.
pub fn expander_rhs(n: usize) -> impl Fn(Real, &[Real; 3]) -> [Real; 3] {
    let nm1 = n as Real - 1.0;
    move |_s, y| {
        let (r, z, th) = (y[0], y[1], y[2]);
        let (st, ct) = th.sin_cos();
        [ct, st, 0.5 * (z * ct - r * st) - nm1 * st / r]
    }
}

/// Right-hand side of the shrinker profile ODE (reversed Gaussian drift).
pub fn shrinker_rhs(n: usize) -> impl Fn(Real, &[Real; 3]) -> [Real; 3] {
    let nm1 = n as Real - 1.0;
    move |_s, y| {
        let (r, z, th) = (y[0], y[1], y[2]);
        let (st, ct) = th.sin_cos();
        [ct, st, 0.5 * (r * st - z * ct) - nm1 * st / r]
    }
}

enum Guard {
    Axis(Real),
    Envelope(Real, Real),
}

/// Integrates the half profile with neck radius `r0` out to `cfg.s_max`,
/// sampling every `cfg.step`. Aborts with a partial profile if the curve
/// reaches the rotation axis or its tangent angle leaves (-pi/2, pi).
pub fn integrate_profile(r0: Real, n: usize, cfg: &ShootConfig) -> Result<ProfileCurve, ShootError> {
    if !(r0 > 0.0) || !r0.is_finite() {
        return Err(ShootError::BadNeck(r0));
    }
    if n < 2 {
        return Err(GeomError::BadDimension(n).into());
    }
    let rhs = expander_rhs(n);
    let steps = (cfg.s_max / cfg.step).round() as usize;
    let mut samples = Vec::with_capacity(steps + 1);
    samples.push(ProfileSample { s: 0.0, r: r0, z: 0.0, theta: FRAC_PI_2 });
    let mut y = [r0, 0.0, FRAC_PI_2];
    let r_floor = (1e-6 as Real).min(1e-3 * r0);
    let mut guard: Option<Guard> = None;
    for k in 1..=steps {
        let s0 = (k - 1) as Real * cfg.step;
        let s1 = k as Real * cfg.step;
        let mut watch = |s: Real, yy: &[Real; 3]| {
            if yy[0] < r_floor {
                guard = Some(Guard::Axis(s));
                return false;
            }
            if yy[2] <= -FRAC_PI_2 || yy[2] >= PI {
                guard = Some(Guard::Envelope(s, yy[2]));
                return false;
            }
            true
        };
        let (_, ynew) = integrate_to(&rhs, s0, y, s1, cfg.tol_abs, cfg.tol_rel, cfg.step, &mut watch)
            .map_err(ShootError::Integrator)?;
        y = ynew;
        if let Some(g) = guard {
            let partial = Box::new(ProfileCurve { n, step: cfg.step, samples });
            return Err(match g {
                Guard::Axis(s) => ShootError::AxisCollision { s, partial },
                Guard::Envelope(s, theta) => ShootError::NonGraphical { s, theta, partial },
            });
        }
        samples.push(ProfileSample { s: s1, r: y[0], z: y[1], theta: y[2] });
    }
    Ok(ProfileCurve { n, step: cfg.step, samples })
}

/// Asymptotic cone slope extracted from the far end of a profile.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SlopeFit {
    pub delta: Real,
    /// Spread between sub-window refits plus the statistical noise floor;
    /// an honest absolute uncertainty for `delta`.
    pub fit_error: Real,
    /// Coefficients of r/z against {1, z^-2, z^-4}; coeffs[0] is delta.
    pub coeffs: [Real; 3],
    /// z range of the fit window.
    pub window_z: (Real, Real),
    pub samples: usize,
}

pub fn asymptotic_slope(p: &ProfileCurve, cfg: &ShootConfig) -> Result<SlopeFit, ShootError> {
    let idx: Vec<usize> = (0..p.len())
        .filter(|&i| {
            let q = &p.samples[i];
            q.z >= cfg.z_fit_min && q.r.hypot(q.z) >= cfg.r_fit
        })
        .collect();
    if idx.len() < 40 {
        return Err(ShootError::FitUnreliable {
            reason: format!("only {} samples in the fit window", idx.len()),
        });
    }
    let fit = |ids: &[usize]| -> Option<[Real; 3]> {
        lstsq::<Real, 3>(
            ids.len(),
            |row| {
                let q = &p.samples[ids[row]];
                let u = 1.0 / (q.z * q.z);
                [1.0, u, u * u]
            },
            |row| {
                let q = &p.samples[ids[row]];
                q.r / q.z
            },
        )
    };
    let coeffs = fit(&idx).ok_or_else(|| ShootError::FitUnreliable {
        reason: "degenerate fit basis on the window".into(),
    })?;
    let delta = coeffs[0];
    if !(delta > 0.0) {
        return Err(ShootError::FitUnreliable { reason: format!("non-positive slope {delta}") });
    }
    let half = idx.len() / 2;
    let d_lo = fit(&idx[..half]);
    let d_hi = fit(&idx[half..]);
    let mut fit_error: Real = 1e-14;
    for d in [d_lo, d_hi].into_iter().flatten() {
        fit_error = fit_error.max((d[0] - delta).abs());
    }
    Ok(SlopeFit {
        delta,
        fit_error,
        coeffs,
        window_z: (p.samples[idx[0]].z, p.samples[*idx.last().unwrap()].z),
        samples: idx.len(),
    })
}

/// Slope of the expander with the given neck radius.
pub fn slope_of_neck(r0: Real, n: usize, cfg: &ShootConfig) -> Result<(SlopeFit, ProfileCurve), ShootError> {
    let p = integrate_profile(r0, n, cfg)?;
    let fit = asymptotic_slope(&p, cfg)?;
    Ok((fit, p))
}

fn delta_or_inf(r0: Real, n: usize, cfg: &ShootConfig) -> Real {
    slope_of_neck(r0, n, cfg).map(|(f, _)| f.delta).unwrap_or(Real::INFINITY)
}

/// One row of the neck-to-slope map.
#[derive(Clone, Debug, Serialize)]
pub struct MapSample {
    pub r0: Real,
    pub delta: Option<Real>,
    pub fit_error: Option<Real>,
    pub residual_sup: Option<Real>,
    pub s_max: Real,
    /// Short failure tag when the solve or fit did not complete.
    pub flag: Option<String>,
}

/// Evaluates the slope map over a list of neck radii in parallel.
pub fn shooting_map(r0s: &[Real], n: usize, cfg: &ShootConfig) -> Vec<MapSample> {
    r0s.par_iter()
        .map(|&r0| match slope_of_neck(r0, n, cfg) {
            Ok((fit, p)) => {
                let res = expander_residual(&p).map(|r| r.sup).ok();
                MapSample {
                    r0,
                    delta: Some(fit.delta),
                    fit_error: Some(fit.fit_error),
                    residual_sup: res,
                    s_max: p.s_max(),
                    flag: None,
                }
            }
            Err(e) => {
                let s_max = match &e {
                    ShootError::NonGraphical { partial, .. }
                    | ShootError::AxisCollision { partial, .. } => partial.s_max(),
                    _ => 0.0,
                };
                MapSample {
                    r0,
                    delta: None,
                    fit_error: None,
                    residual_sup: None,
                    s_max,
                    flag: Some(error_tag(&e).to_string()),
                }
            }
        })
        .collect()
}

/// Renders a slope sweep as CSV. Failed solves keep their row with the
/// numeric cells left empty, so the column layout never shifts.
pub fn map_to_csv(samples: &[MapSample]) -> String {
    let mut out = String::from("r0,delta,fit_error,residual_sup,s_max\n");
    let cell = |v: Option<Real>| v.map(|x| format!("{x:.12}")).unwrap_or_default();
    for s in samples {
        out.push_str(&format!(
            "{:.12},{},{},{},{:.12}\n",
            s.r0,
            cell(s.delta),
            cell(s.fit_error),
            cell(s.residual_sup),
            s.s_max
        ));
    }
    out
}

fn error_tag(e: &ShootError) -> &'static str {
    match e {
        ShootError::BadNeck(_) => "bad_neck",
        ShootError::Geometry(_) => "geometry",
        ShootError::NonGraphical { .. } => "non_graphical",
        ShootError::AxisCollision { .. } => "axis_collision",
        ShootError::Integrator(_) => "integrator",
        ShootError::FitUnreliable { .. } => "fit_unreliable",
        ShootError::BracketError { .. } => "bracket",
        ShootError::FoldProximity { .. } => "fold_proximity",
        ShootError::ResidualCertificate { .. } => "residual",
    }
}

/// The fold of the slope map: the interior minimum of delta(r0).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct FoldInfo {
    pub n: usize,
    pub r0_star: Real,
    pub delta_star: Real,
    /// Independent locations from the two minimizer routes.
    pub golden: (Real, Real),
    pub parabolic: (Real, Real),
    /// Disagreement of the two routes in delta.
    pub spread: Real,
}

pub fn find_delta_star(n: usize, cfg: &ShootConfig) -> Result<FoldInfo, ShootError> {
    let (lo, hi) = cfg.r0_window;
    let m = 48usize;
    let grid: Vec<Real> = (0..m)
        .map(|i| lo * (hi / lo).powf(i as Real / (m - 1) as Real))
        .collect();
    let vals: Vec<Real> = grid.par_iter().map(|&r0| delta_or_inf(r0, n, cfg)).collect();
    let mut best: Option<usize> = None;
    for (i, &v) in vals.iter().enumerate() {
        if v.is_finite() && best.map(|b| v < vals[b]).unwrap_or(true) {
            best = Some(i);
        }
    }
    let i = best.ok_or_else(|| ShootError::BracketError {
        reason: "no finite slope anywhere in the neck window".into(),
    })?;
    if i == 0 || i + 1 == m || !vals[i - 1].is_finite() || !vals[i + 1].is_finite() {
        return Err(ShootError::BracketError {
            reason: format!("slope minimum sits at the edge of the neck window (r0 = {})", grid[i]),
        });
    }
    let f = |r0: Real| delta_or_inf(r0, n, cfg);
    let (rg, dg) = golden_min(f, grid[i - 1], grid[i + 1], 1e-7 * grid[i]);
    let (rb, db) = brent_min(f, grid[i - 1], grid[i + 1], 1e-9);
    let (r0_star, delta_star) = if db <= dg { (rb, db) } else { (rg, dg) };
    Ok(FoldInfo {
        n,
        r0_star,
        delta_star,
        golden: (rg, dg),
        parabolic: (rb, db),
        spread: (dg - db).abs(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Small,
    Large,
}

/// A certified rotationally symmetric self-expander.
#[derive(Clone, Debug)]
pub struct RotationalExpander {
    pub profile: ProfileCurve,
    pub r0: Real,
    pub branch: Branch,
    pub slope: SlopeFit,
    pub residual_sup: Real,
    pub diagnostics: SurfaceDiagnostics,
}

/// Integrates at a certified step: the one-sided residual certificate
/// needs finer sampling when the neck curvature is large. Halves the step
/// until the certificate passes.
fn solve_certified(
    r0: Real,
    n: usize,
    branch: Branch,
    cfg: &ShootConfig,
) -> Result<RotationalExpander, ShootError> {
    let kappa0 = 0.5 * r0 + (n as Real - 1.0) / r0;
    let mut local = cfg.clone();
    local.step = cfg.step.min(0.01 / kappa0);
    let mut last_sup = Real::INFINITY;
    for _ in 0..4 {
        let profile = integrate_profile(r0, n, &local)?;
        let res = expander_residual(&profile)?;
        last_sup = res.sup;
        if res.sup <= cfg.residual_tol {
            let slope = asymptotic_slope(&profile, cfg)?;
            let surf = crate::geometry::SurfaceGrid::from_profile(&profile, false, 1)?;
            let diagnostics = surface_diagnostics(&surf)?;
            return Ok(RotationalExpander {
                profile,
                r0,
                branch,
                slope,
                residual_sup: res.sup,
                diagnostics,
            });
        }
        local.step *= 0.5;
    }
    Err(ShootError::ResidualCertificate { sup: last_sup, tol: cfg.residual_tol })
}

/// All expanders in the neck window whose asymptotic slope equals `delta`.
/// Slopes strictly below the fold have none; slopes above it have one on
/// each side of the fold neck. Slopes within 1e-6 of the fold are rejected
/// as numerically indistinguishable from it.
pub fn find_branches(
    delta: Real,
    n: usize,
    fold: &FoldInfo,
    cfg: &ShootConfig,
) -> Result<Vec<RotationalExpander>, ShootError> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(ShootError::BracketError { reason: format!("bad slope request {delta}") });
    }
    let guard = 1e-6 * fold.delta_star.max(1.0);
    if (delta - fold.delta_star).abs() < guard {
        return Err(ShootError::FoldProximity { delta, delta_star: fold.delta_star });
    }
    if delta < fold.delta_star {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for (side_lo, side_hi, branch) in [
        (cfg.r0_window.0, fold.r0_star, Branch::Small),
        (fold.r0_star, cfg.r0_window.1, Branch::Large),
    ] {
        let m = 48usize;
        let grid: Vec<Real> = (0..m)
            .map(|i| side_lo * (side_hi / side_lo).powf(i as Real / (m - 1) as Real))
            .collect();
        let g = |r0: Real| delta_or_inf(r0, n, cfg) - delta;
        let vals: Vec<Real> = grid.par_iter().map(|&r0| g(r0)).collect();
        let mut bracket = None;
        for w in 0..m - 1 {
            let (a, b) = (vals[w], vals[w + 1]);
            if a.is_finite() && b.is_finite() && (a > 0.0) != (b > 0.0) {
                bracket = Some((grid[w], grid[w + 1]));
                // Keep the crossing adjacent to the fold: on the small side
                // delta decreases toward the fold, so the last crossing is
                // the relevant one; scanning continues to find it.
            }
        }
        let (a, b) = bracket.ok_or_else(|| ShootError::BracketError {
            reason: format!(
                "no crossing of delta = {delta} on the {branch:?} side within the neck window"
            ),
        })?;
        let root = brent_root(g, a, b, 1e-13 * fold.r0_star, cfg.root_ftol)
            .map_err(|e| ShootError::BracketError { reason: format!("polish failed: {e}") })?;
        out.push(solve_certified(root, n, branch, cfg)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::ode::rk4_to;

    fn cfg_fast() -> ShootConfig {
        ShootConfig { s_max: 12.0, ..Default::default() }
    }

    #[test]
    fn initial_turning_rate_matches_the_equation() {
        let rhs = expander_rhs(3);
        let d = rhs(0.0, &[0.7, 0.0, FRAC_PI_2]);
        assert!((d[0]).abs() < 1e-15);
        assert!((d[1] - 1.0).abs() < 1e-15);
        assert!((d[2] - (-0.35 - 2.0 / 0.7)).abs() < 1e-14);
    }

    #[test]
    fn residual_certificate_at_unit_neck() {
        let p = integrate_profile(1.0, 2, &cfg_fast()).unwrap();
        assert_eq!(p.len(), 12001);
        let res = expander_residual(&p).unwrap();
        assert!(res.sup < 1e-8, "sup residual {}", res.sup);
    }

    #[test]
    fn adaptive_and_fixed_step_integrators_agree() {
        let n = 2;
        let rhs = expander_rhs(n);
        let cfg = cfg_fast();
        let p = integrate_profile(1.3, n, &cfg).unwrap();
        let k = (4.0 / cfg.step) as usize;
        let fixed = rk4_to(&rhs, 0.0, [1.3, 0.0, FRAC_PI_2], 4.0, 80_000);
        let q = &p.samples[k];
        assert!((q.r - fixed[0]).abs() < 1e-10, "r gap {}", (q.r - fixed[0]).abs());
        assert!((q.z - fixed[1]).abs() < 1e-10);
        assert!((q.theta - fixed[2]).abs() < 1e-10);
    }

    #[test]
    fn slope_fit_is_stable_under_step_halving() {
        let n = 2;
        let mut cfg = cfg_fast();
        let (f1, p) = slope_of_neck(0.8, n, &cfg).unwrap();
        cfg.step = 5e-4;
        let (f2, _) = slope_of_neck(0.8, n, &cfg).unwrap();
        // The gap is dominated by the truncated 1/z^6 tail of the fit
        // model, not by integrator error; 1e-8 is the honest scale.
        assert!((f1.delta - f2.delta).abs() < 1e-8, "delta moved {}", (f1.delta - f2.delta).abs());
        // The fitted model reproduces the raw ratio at the far end.
        let q = p.samples.last().unwrap();
        let u = 1.0 / (q.z * q.z);
        let model = f1.coeffs[0] + f1.coeffs[1] * u + f1.coeffs[2] * u * u;
        assert!((q.r / q.z - model).abs() < 1e-6, "model gap {}", (q.r / q.z - model).abs());
        // The reported uncertainty is dominated by the truncated u^3 model
        // term and is deliberately conservative.
        assert!(f1.fit_error < 1e-4, "fit error {}", f1.fit_error);
    }

    #[test]
    fn fold_exists_and_routes_agree() {
        let fold = find_delta_star(2, &cfg_fast()).unwrap();
        assert!(fold.r0_star > 0.05 && fold.r0_star < 5.0, "r0* = {}", fold.r0_star);
        assert!(fold.delta_star > 0.0);
        assert!(fold.spread < 1e-6 * fold.delta_star.max(1.0), "spread {}", fold.spread);
        // The fold is a genuine interior minimum.
        let cfg = cfg_fast();
        assert!(delta_or_inf(0.3 * fold.r0_star, 2, &cfg) > fold.delta_star);
        assert!(delta_or_inf(3.0 * fold.r0_star, 2, &cfg) > fold.delta_star);
    }

    #[test]
    fn two_branches_above_the_fold() {
        let cfg = cfg_fast();
        let fold = find_delta_star(2, &cfg).unwrap();
        let delta = 2.0 * fold.delta_star;
        let sols = find_branches(delta, 2, &fold, &cfg).unwrap();
        assert_eq!(sols.len(), 2);
        assert_eq!(sols[0].branch, Branch::Small);
        assert_eq!(sols[1].branch, Branch::Large);
        assert!(sols[0].r0 < fold.r0_star && fold.r0_star < sols[1].r0);
        for s in &sols {
            assert!(s.residual_sup < cfg.residual_tol);
            assert!((s.slope.delta - delta).abs() < 1e-7, "slope gap {}", (s.slope.delta - delta).abs());
        }
    }

    #[test]
    fn no_branches_below_the_fold_and_guard_at_it() {
        let cfg = cfg_fast();
        let fold = find_delta_star(2, &cfg).unwrap();
        assert!(find_branches(0.5 * fold.delta_star, 2, &fold, &cfg).unwrap().is_empty());
        assert!(matches!(
            find_branches(fold.delta_star, 2, &fold, &cfg),
            Err(ShootError::FoldProximity { .. })
        ));
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let cfg = cfg_fast();
        assert!(matches!(integrate_profile(-1.0, 2, &cfg), Err(ShootError::BadNeck(_))));
        assert!(matches!(integrate_profile(f64::NAN, 2, &cfg), Err(ShootError::BadNeck(_))));
        assert!(integrate_profile(1.0, 1, &cfg).is_err());
    }

    #[test]
    fn sweep_csv_keeps_columns_on_failed_rows() {
        let samples = [
            MapSample {
                r0: 1.0,
                delta: Some(2.0),
                fit_error: Some(1e-9),
                residual_sup: Some(1e-11),
                s_max: 12.0,
                flag: None,
            },
            MapSample {
                r0: 20.0,
                delta: None,
                fit_error: None,
                residual_sup: None,
                s_max: 0.5,
                flag: Some("nongraphical".into()),
            },
        ];
        let csv = map_to_csv(&samples);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "r0,delta,fit_error,residual_sup,s_max");
        assert_eq!(lines.len(), 3);
        // Every row has the full column count even when cells are empty.
        assert!(lines.iter().all(|l| l.matches(',').count() == 4));
        assert!(lines[2].starts_with("20.000000000000,,,,"));
    }
}
