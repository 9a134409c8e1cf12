//! Signed count of annular expanders at a fixed cone slope.
//!
//! Away from the fold every slope is a regular value of the slope map on
//! the shooting family, and the signed count sum (-1)^index over the
//! solutions is the mapping degree of the family restricted to the
//! rotationally symmetric annular class. The count is 0 on both sides of
//! the fold: empty below it, an index-parity pair above it. A slope inside
//! the fold exclusion zone is refused outright, because the linearization
//! carries a kernel exactly where branches merge and the index is not
//! defined there.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::geometry::{GeomError, SurfaceGrid};
use crate::shooting::{
    find_branches, find_delta_star, integrate_profile, Branch, FoldInfo, ShootConfig, ShootError,
};
use crate::spectral::{assemble_mode, mode_eigenpairs, morse_index, SpecError, SpectralConfig};
use crate::Real;

#[derive(Debug, Error)]
pub enum DegreeError {
    #[error(transparent)]
    Shoot(#[from] ShootError),
    #[error(transparent)]
    Spectral(#[from] SpecError),
    #[error(transparent)]
    Geometry(#[from] GeomError),
    #[error(
        "slope {delta} is within the fold exclusion zone {delta_star} +- {zone}; \
         the nearest admissible slopes are {suggest_below} and {suggest_above}"
    )]
    FoldProximity { delta: Real, delta_star: Real, zone: Real, suggest_below: Real, suggest_above: Real },
    #[error("bad input: {reason}")]
    BadInput { reason: String },
}

/// One solved expander with its spectral bookkeeping.
#[derive(Clone, Debug, Serialize)]
pub struct SolutionEntry {
    pub r0: Real,
    pub branch: Branch,
    pub index: usize,
    pub nullity: usize,
    pub residual_sup: Real,
}

#[derive(Clone, Debug, Serialize)]
pub struct DegreeReport {
    pub delta: Real,
    pub solutions: Vec<SolutionEntry>,
    /// Signed count sum (-1)^index; 0 for an empty solution set.
    pub degree: i64,
    /// Anomalies that do not invalidate the arithmetic: a solution with
    /// nonzero nullity means the slope sits closer to a fold than the
    /// exclusion zone knows about.
    pub flags: Vec<String>,
}

/// The pure arithmetic: sum of (-1)^index over a list of indices.
pub fn signed_count(indices: &[usize]) -> i64 {
    indices.iter().map(|&k| if k % 2 == 0 { 1i64 } else { -1i64 }).sum()
}

/// Half-width of the slope interval around the fold where index counting
/// is refused. Ten times the worse of the fold locator's route spread and
/// the branch solver's own merge guard.
pub fn fold_exclusion_zone(fold: &FoldInfo) -> Real {
    10.0 * fold.spread.max(1e-6 * fold.delta_star.max(1.0))
}

fn spectral_entry(
    exp: &crate::shooting::RotationalExpander,
    cfg: &SpectralConfig,
) -> Result<SolutionEntry, DegreeError> {
    let surf = SurfaceGrid::from_profile(&exp.profile, true, cfg.stride)?;
    let spec = morse_index(&surf, cfg)?;
    Ok(SolutionEntry {
        r0: exp.r0,
        branch: exp.branch,
        index: spec.index,
        nullity: spec.nullity,
        residual_sup: exp.residual_sup,
    })
}

/// Solves every annular expander with asymptotic slope `delta`, attaches
/// Morse indices, and returns the signed count.
pub fn degree_at(
    delta: Real,
    n: usize,
    fold: &FoldInfo,
    shoot: &ShootConfig,
    spec: &SpectralConfig,
) -> Result<DegreeReport, DegreeError> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(DegreeError::BadInput { reason: format!("slope must be positive, got {delta}") });
    }
    if fold.n != n {
        return Err(DegreeError::BadInput {
            reason: format!("fold located for n = {}, requested n = {n}", fold.n),
        });
    }
    let zone = fold_exclusion_zone(fold);
    if (delta - fold.delta_star).abs() <= zone {
        return Err(DegreeError::FoldProximity {
            delta,
            delta_star: fold.delta_star,
            zone,
            suggest_below: fold.delta_star - 2.0 * zone,
            suggest_above: fold.delta_star + 2.0 * zone,
        });
    }
    let branches = find_branches(delta, n, fold, shoot)?;
    let solutions = branches
        .par_iter()
        .map(|exp| spectral_entry(exp, spec))
        .collect::<Result<Vec<_>, _>>()?;
    let mut flags = Vec::new();
    for s in &solutions {
        if s.nullity > 0 {
            flags.push(format!(
                "kernel: r0 = {:.6} has nullity {} at delta = {delta:.6}",
                s.r0, s.nullity
            ));
        }
    }
    let degree = signed_count(&solutions.iter().map(|s| s.index).collect::<Vec<_>>());
    Ok(DegreeReport { delta, solutions, degree, flags })
}

/// Per-slope outcome of a sweep; failed points carry the error text and
/// no report.
#[derive(Clone, Debug, Serialize)]
pub struct SweepEntry {
    pub delta: Real,
    pub report: Option<DegreeReport>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    pub n: usize,
    pub delta_star: Real,
    pub entries: Vec<SweepEntry>,
    /// True iff every point succeeded and every degree is 0.
    pub pass: bool,
}

/// Evaluates the degree on a slope grid, continuing past failures. The
/// verdict passes only when every point resolves and the count is the
/// constant 0 (empty below the fold, a cancelling pair above).
pub fn degree_sweep(
    deltas: &[Real],
    n: usize,
    shoot: &ShootConfig,
    spec: &SpectralConfig,
) -> Result<SweepReport, DegreeError> {
    if deltas.is_empty() {
        return Err(DegreeError::BadInput { reason: "empty slope grid".into() });
    }
    let fold = find_delta_star(n, shoot)?;
    let entries: Vec<SweepEntry> = deltas
        .par_iter()
        .map(|&delta| match degree_at(delta, n, &fold, shoot, spec) {
            Ok(report) => SweepEntry { delta, report: Some(report), error: None },
            Err(e) => SweepEntry { delta, report: None, error: Some(e.to_string()) },
        })
        .collect();
    let pass = entries.iter().all(|e| {
        e.error.is_none()
            && e.report.as_ref().map(|r| r.degree == 0 && r.flags.is_empty()).unwrap_or(false)
    });
    Ok(SweepReport { n, delta_star: fold.delta_star, entries, pass })
}

/// Sweep rows in the exchange layout: delta, solution count, semicolon
/// list of indices, degree, semicolon list of flags.
pub fn sweep_to_csv(sweep: &SweepReport) -> String {
    let mut out = String::from("delta,n_solutions,indices,degree,flags\n");
    for e in &sweep.entries {
        match (&e.report, &e.error) {
            (Some(r), _) => {
                let indices =
                    r.solutions.iter().map(|s| s.index.to_string()).collect::<Vec<_>>().join(";");
                let flags = r.flags.join(";").replace(',', " ");
                out.push_str(&format!(
                    "{:.12},{},{},{},{}\n",
                    e.delta,
                    r.solutions.len(),
                    indices,
                    r.degree,
                    flags
                ));
            }
            (None, err) => {
                let msg = err.as_deref().unwrap_or("unknown").replace(',', " ");
                out.push_str(&format!("{:.12},0,,,error: {}\n", e.delta, msg));
            }
        }
    }
    out
}

/// Bottom eigenvalue of the rotationally invariant mode: the eigenvalue
/// that crosses zero at the fold. The fold solution is weakly stable, so
/// there the bottom eigenvalue is also the smallest-magnitude one; away
/// from the fold the bottom keeps tracking the crossing branch while the
/// smallest-magnitude eigenvalue would jump to an unrelated positive one.
pub fn mu_bottom_m0(
    profile: &crate::geometry::ProfileCurve,
    spec: &SpectralConfig,
) -> Result<Real, DegreeError> {
    let surf = SurfaceGrid::from_profile(profile, true, spec.stride)?;
    let asm = assemble_mode(&surf, 0, spec)?;
    let pairs = mode_eigenpairs(&asm, 1);
    pairs
        .first()
        .map(|p| p.value)
        .ok_or_else(|| DegreeError::BadInput { reason: "empty spectrum".into() })
}

#[derive(Clone, Debug, Serialize)]
pub struct FoldNullityReport {
    pub delta_star: Real,
    pub r0_star: Real,
    /// mu_min of the m = 0 pencil at the fold neck, at the working stride
    /// and at half that stride (refinement trend).
    pub mu_fold_coarse: Real,
    pub mu_fold_fine: Real,
    /// mu_min per branch just above the fold (small neck, large neck).
    pub mu_near: (Real, Real),
    /// The slope used for the near-fold pair.
    pub delta_near: Real,
    /// mu_min per branch far above the fold, at delta = 2 delta*.
    pub mu_far: (Real, Real),
}

/// Kernel crossing at the fold: the m = 0 pencil of the fold solution has
/// an eigenvalue at zero (to discretization accuracy, shrinking under
/// refinement), and that eigenvalue changes sign between the two branches
/// just above the fold while staying far from zero away from it.
pub fn fold_nullity_check(
    n: usize,
    shoot: &ShootConfig,
    spec: &SpectralConfig,
) -> Result<FoldNullityReport, DegreeError> {
    let fold = find_delta_star(n, shoot)?;
    let profile = integrate_profile(fold.r0_star, n, shoot)?;
    let coarse = SpectralConfig { stride: spec.stride * 2, ..spec.clone() };
    let mu_fold_coarse = mu_bottom_m0(&profile, &coarse)?;
    let mu_fold_fine = mu_bottom_m0(&profile, spec)?;

    let zone = fold_exclusion_zone(&fold);
    let delta_near = fold.delta_star + (1e-3 * fold.delta_star).max(4.0 * zone);
    let near = find_branches(delta_near, n, &fold, shoot)?;
    let far = find_branches(2.0 * fold.delta_star, n, &fold, shoot)?;
    if near.len() < 2 || far.len() < 2 {
        return Err(DegreeError::BadInput {
            reason: format!(
                "expected two branches above the fold, found {} near and {} far",
                near.len(),
                far.len()
            ),
        });
    }
    let mu_of = |exp: &crate::shooting::RotationalExpander| mu_bottom_m0(&exp.profile, spec);
    Ok(FoldNullityReport {
        delta_star: fold.delta_star,
        r0_star: fold.r0_star,
        mu_fold_coarse,
        mu_fold_fine,
        mu_near: (mu_of(&near[0])?, mu_of(&near[1])?),
        delta_near,
        mu_far: (mu_of(&far[0])?, mu_of(&far[1])?),
    })
}
