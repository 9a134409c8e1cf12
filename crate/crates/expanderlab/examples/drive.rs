//! End-to-end drive of the laboratory through the public API: shoot an
//! expander, close the shrinking torus, run the avoidance diagnosis and
//! the barrier audit, and print the headline numbers.

use expanderlab::degree::{degree_at, fold_nullity_check};
use expanderlab::geometry::{expander_residual, surface_diagnostics, SurfaceGrid};
use expanderlab::shooting::{find_branches, find_delta_star, integrate_profile, ShootConfig};
use expanderlab::spectral::SpectralConfig;
use expanderlab::torus::{
    avoidance_check, barrier_eval, integrate_shrinker_torus, scaled_family_gap, BarrierParams,
    TorusConfig, TorusError,
};

fn main() {
    let cfg = ShootConfig::default();
    let fold = find_delta_star(2, &cfg).expect("fold");
    println!("fold: delta* = {:.9} at r0 = {:.9}", fold.delta_star, fold.r0_star);

    let wide = 1.5 * fold.delta_star;
    let pair = find_branches(wide, 2, &fold, &cfg).expect("branches at 1.5 delta*");
    assert!(pair.len() >= 2, "expected two branches, found {}", pair.len());
    println!(
        "branches at delta = {:.6}: r0 = {:.9} (small), {:.9} (large)",
        wide, pair[0].r0, pair[1].r0
    );

    let spec = SpectralConfig::default();
    for delta in [0.5 * fold.delta_star, wide] {
        let rep = degree_at(delta, 2, &fold, &cfg, &spec).expect("degree");
        let indices: Vec<usize> = rep.solutions.iter().map(|s| s.index).collect();
        println!(
            "degree at delta = {:.6}: {} solutions, indices {:?}, degree = {}",
            delta,
            rep.solutions.len(),
            indices,
            rep.degree
        );
    }
    let nullity = fold_nullity_check(2, &cfg, &spec).expect("fold nullity");
    println!(
        "fold kernel: mu(m=0) = {:.3e} (coarse {:.3e}); near-fold branches ({:.3e}, {:.3e});          at 2 delta*: ({:.4}, {:.4})",
        nullity.mu_fold_fine,
        nullity.mu_fold_coarse,
        nullity.mu_near.0,
        nullity.mu_near.1,
        nullity.mu_far.0,
        nullity.mu_far.1
    );

    let torus = integrate_shrinker_torus(2, &TorusConfig::default()).expect("torus");
    println!(
        "torus: R- = {:.9}, R+ = {:.9}, delta0 = {:.9}, residual = {:.3e}",
        torus.rminus, torus.rplus, torus.delta0, torus.residual_sup
    );

    match avoidance_check(&pair[0], &torus, 100) {
        Err(TorusError::ConeObstructed { inclusion }) => {
            println!("avoidance precondition failed as diagnosed: {inclusion}");
        }
        other => panic!("wide pair should fail the cone precondition, got {other:?}"),
    }
    let gap = scaled_family_gap(&pair[0], &torus, 100).expect("raw family gap");
    println!(
        "raw family gap: min = {:.3e} at t = {:.4} (resolution {:.3e})",
        gap.min_distance, gap.t_at_min, gap.resolution
    );

    let profile = integrate_profile(1.0, 2, &ShootConfig { s_max: 6.0, ..cfg }).expect("profile");
    let res = expander_residual(&profile).expect("residual");
    let surf = SurfaceGrid::from_profile(&profile, false, 4).expect("surface");
    let diag = surface_diagnostics(&surf).expect("diagnostics");
    let rep = barrier_eval(&surf, &BarrierParams { vr: 0.6, vz: 0.8, eta: 1.5, h: 0.5 })
        .expect("barrier");
    println!(
        "expander r0 = 1: residual = {:.3e}, K_Sigma = {:.3}, barrier identity sup = {:.3e}, \
         sqrt-slab violations = {}",
        res.sup,
        diag.k_sigma,
        rep.identity_residual.iter().fold(rep.eigen_residual, |a, v| a.max(*v)),
        rep.violations_sqrt
    );
}
