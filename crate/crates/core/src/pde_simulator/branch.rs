//! Singular data launched at `t = δ` on the North and South branches.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use super::flow::{evolve, OriginBc, RadialField, Run, SimConfig};
use super::grid::RadialGrid;
use super::supersolution::smooth_step;
use super::PdeError;
use crate::ode_core::{Dimension, Pole};
use crate::profile_solver::{critical_params, reflect, shoot_for_limit, Profile};

/// Smooth cutoff, 0 on `[0, 1/2]` and 1 on `[1, ∞)`.
pub fn cutoff_chi(r: f64) -> f64 {
    smooth_step(2.0 * r - 1.0)
}

/// Expander with limit `ell` on the requested branch: the primary North
/// profile for `ell < π/2`, and the first profile past the equator for
/// `π/2 < ell ≤ ℓ*` (reflected for South).
pub fn branch_profile(d: Dimension, ell: f64, branch: Pole, tol: f64) -> Result<Profile, PdeError> {
    let name = match branch {
        Pole::North => "North",
        Pole::South => "South",
    };
    let range_err = || PdeError::RangeError { ell, branch: name };
    let target = match branch {
        Pole::North => ell,
        Pole::South => PI - ell,
    };
    if !(target > 0.0 && target < PI) || target == FRAC_PI_2 {
        return Err(range_err());
    }
    let crossings = if target < FRAC_PI_2 {
        0
    } else {
        let crit = critical_params(d, tol.max(1e-10))?;
        if !crit.is_finite() || target > crit.ell_star {
            return Err(range_err());
        }
        1
    };
    let shot = shoot_for_limit(d, target, crossings, tol).map_err(|_| range_err())?;
    Ok(match branch {
        Pole::North => shot.profile,
        Pole::South => reflect(&shot.profile),
    })
}

#[derive(Debug, Clone)]
pub struct BranchData {
    pub field: RadialField,
    pub profile: Profile,
}

/// Initial field `ψ(r/√δ) + (h0(r) − ℓ)·χ(r)` at `t = δ`.
pub fn make_branch_data(
    d: Dimension,
    ell: f64,
    branch: Pole,
    h0: &(dyn Fn(f64) -> f64 + Sync),
    delta: f64,
    grid: Arc<RadialGrid>,
    tol: f64,
) -> Result<BranchData, PdeError> {
    if !(delta > 0.0) {
        return Err(PdeError::InvalidConfig("delta must be positive".into()));
    }
    let profile = branch_profile(d, ell, branch, tol)?;
    let bc = match branch {
        Pole::North => OriginBc::DirichletZero,
        Pole::South => OriginBc::DirichletPi,
    };
    let sd = delta.sqrt();
    let field = RadialField::from_fn(delta, grid, bc, |r| profile.psi(r / sd) + (h0(r) - ell) * cutoff_chi(r));
    Ok(BranchData { field, profile })
}

#[derive(Debug, Clone)]
pub struct NonuniquenessPair {
    pub north: Run,
    pub south: Run,
    pub north_profile: Profile,
    pub south_profile: Profile,
}

/// North and South evolutions from the same data, run concurrently.
pub fn nonuniqueness_pair(
    d: Dimension,
    ell: f64,
    h0: &(dyn Fn(f64) -> f64 + Sync),
    config: &SimConfig,
    grid: Arc<RadialGrid>,
    tol: f64,
) -> Result<NonuniquenessPair, PdeError> {
    if !(3..=6).contains(&d.get()) {
        return Err(PdeError::InvalidConfig("the pair needs 3 <= d <= 6".into()));
    }
    let delta = config.delta_start;
    let launch = |pole| -> Result<(Run, Profile), PdeError> {
        let data = make_branch_data(d, ell, pole, h0, delta, grid.clone(), tol)?;
        Ok((evolve(&data.field, config)?, data.profile))
    };
    let (n, s) = rayon::join(|| launch(Pole::North), || launch(Pole::South));
    let (north, north_profile) = n?;
    let (south, south_profile) = s?;
    Ok(NonuniquenessPair { north, south, north_profile, south_profile })
}

/// `sup_r |h_N − h_S|` per common snapshot.
pub fn separation(a: &Run, b: &Run) -> Vec<(f64, f64)> {
    a.snapshots
        .iter()
        .zip(&b.snapshots)
        .map(|(x, y)| {
            let sup = x.values.iter().zip(&y.values).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
            (x.time, sup)
        })
        .collect()
}

/// Largest `ζ` such that `|h − ψ(r/√t)| < ε` at every sampled point with
/// `t + r < ζ`. Returns the largest sampled `t + r` if the bound never fails.
pub fn closeness_zeta(run: &Run, profile: &Profile, eps: f64) -> f64 {
    let mut zeta = f64::INFINITY;
    let mut reach: f64 = 0.0;
    for snap in &run.snapshots {
        let st = snap.time.sqrt();
        for (&r, &h) in snap.r().iter().zip(&snap.values) {
            reach = reach.max(snap.time + r);
            if (h - profile.psi(r / st)).abs() >= eps {
                zeta = zeta.min(snap.time + r);
            }
        }
    }
    zeta.min(reach)
}
