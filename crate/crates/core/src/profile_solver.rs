//! Shooting for expander profiles `ψ_α`, the branch map `α ↦ ψ_α(∞)`, the
//! critical values `α₀, α*, ℓ*`, and the linear equations carried along a
//! profile (`φ_α`, `ρψ'/α`, `w`, `y`).

use crate::asymptotics::{self, AsymptoticsError, TAIL_DEGREE};
use crate::ode_core::{
    integrate_with, series_coefficients, series_launch, Dimension, FnField, IntegratorOptions, OdeError, Pole,
};
use crate::Trajectory;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProfileError {
    #[error("integration failed: {0}")]
    IntegrationFailure(#[from] OdeError),
    #[error(transparent)]
    Fit(#[from] AsymptoticsError),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("no bracket for limit {ell} on branch {branch}")]
    NoBracket { ell: f64, branch: usize },
    #[error("solution lost positivity at rho = {rho}")]
    PositivityLost { rho: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileParams {
    pub d: Dimension,
    pub alpha: f64,
    pub pole: Pole,
    pub rho_max: f64,
    pub tol: f64,
}

impl ProfileParams {
    pub fn new(d: Dimension, alpha: f64, pole: Pole) -> Self {
        Self { d, alpha, pole, rho_max: 30.0, tol: 1e-10 }
    }

    pub fn with(self, rho_max: f64, tol: f64) -> Self {
        Self { rho_max, tol, ..self }
    }

    fn validate(&self) -> Result<(), ProfileError> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(ProfileError::InvalidParams(format!("alpha = {}", self.alpha)));
        }
        if !(self.rho_max >= 10.0) {
            return Err(ProfileError::InvalidParams(format!("rho_max = {} < 10", self.rho_max)));
        }
        if !(self.tol > 0.0 && self.tol <= 1e-6) {
            return Err(ProfileError::InvalidParams(format!("tol = {} outside (0, 1e-6]", self.tol)));
        }
        Ok(())
    }

    /// Launch radius: `1e-4`, shrunk for steep profiles so that `αρ₀ ≤ 1e-3`.
    pub fn rho0(&self) -> f64 {
        if self.alpha > 10.0 {
            1e-3 / self.alpha
        } else {
            1e-4
        }
    }

    pub fn series_order(&self) -> u32 {
        if self.alpha > 5.0 {
            5
        } else {
            3
        }
    }
}

/// Solved expander profile.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub params: ProfileParams,
    /// States `(ψ, ψ')`.
    pub trajectory: Trajectory,
    pub psi_inf: f64,
    pub psi_inf_error: f64,
    /// Raw value at `rho_max`, kept for diagnostics.
    pub psi_end: f64,
    /// Number of solutions of `ψ = π/2`, including one beyond `rho_max` when
    /// the extrapolated limit lies on the other side of the equator.
    pub crossings_of_equator: usize,
    /// Polished crossing radii inside the span (`f64::INFINITY` for a crossing
    /// inferred beyond the span).
    pub crossing_radii: Vec<f64>,
}

impl Profile {
    pub fn psi(&self, rho: f64) -> f64 {
        if rho <= 0.0 {
            return match self.params.pole {
                Pole::North => 0.0,
                Pole::South => PI,
            };
        }
        if rho < self.trajectory.first_node() {
            let s = series_launch(self.params.d, self.params.alpha, self.params.pole, rho.min(0.1), 5);
            return s.value;
        }
        if rho >= self.trajectory.last_node() {
            // Past the span use the leading algebraic tail.
            let end = self.trajectory.last_node();
            return self.psi_inf + (self.psi_end - self.psi_inf) * (end / rho).powi(2);
        }
        self.trajectory.eval(rho)[0]
    }

    /// `ψ'(ρ)`, using the same extensions as [`Self::psi`] outside the span.
    pub fn dpsi(&self, rho: f64) -> f64 {
        if rho < self.trajectory.first_node() {
            let s = series_launch(self.params.d, self.params.alpha, self.params.pole, rho.clamp(1e-300, 0.1), 5);
            return s.derivative;
        }
        if rho >= self.trajectory.last_node() {
            let end = self.trajectory.last_node();
            return -2.0 * (self.psi_end - self.psi_inf) * end * end / rho.powi(3);
        }
        self.trajectory.eval(rho)[1]
    }

    /// `H(ρ) = ρ²ψ'² − (d−1) sin²ψ` at every node.
    pub fn monotone_quantity(&self) -> Vec<f64> {
        let dm1 = self.params.d.dm1();
        (0..self.trajectory.len())
            .map(|i| {
                let rho = self.trajectory.nodes()[i];
                let s = self.trajectory.state(i);
                rho * rho * s[1] * s[1] - dm1 * s[0].sin().powi(2)
            })
            .collect()
    }
}

/// Window used for limit extrapolation on a span ending at `rho_max`.
pub fn tail_window(rho_max: f64) -> Option<(f64, f64)> {
    let a = (rho_max / 2.0).max(10.0);
    (rho_max > a + 2.0).then_some((a, rho_max))
}

fn integrator(tol: f64) -> IntegratorOptions<f64> {
    IntegratorOptions::with_tol(tol)
}

fn limit_of(traj: &Trajectory, k: usize, rho_max: f64) -> Result<(f64, f64), ProfileError> {
    match tail_window(rho_max) {
        Some(w) => {
            let t = asymptotics::tail_extrapolate_with(traj, k, w, TAIL_DEGREE)?;
            Ok((t.limit, t.error))
        }
        None => Ok((traj.last_state()[k], f64::NAN)),
    }
}

/// Integrate the expander equation from the series launch to `rho_max`.
pub fn solve_profile(params: ProfileParams) -> Result<Profile, ProfileError> {
    params.validate()?;
    if params.pole == Pole::South {
        // ψ ↦ π − ψ maps North solutions to South ones exactly.
        let north = solve_profile(ProfileParams { pole: Pole::North, ..params })?;
        return Ok(reflect(&north));
    }
    let d = params.d;
    let rho0 = params.rho0();
    let launch = series_launch(d, params.alpha, Pole::North, rho0, params.series_order());
    let field = crate::ode_core::expander_field(d);
    let traj = integrate_with(&field, &[launch.value, launch.derivative], (rho0, params.rho_max), &integrator(params.tol))?;
    let (psi_inf, psi_inf_error) = limit_of(&traj, 0, params.rho_max)?;
    let psi_end = traj.last_state()[0];
    let mut crossing_radii = equator_crossings(&traj);
    let side = |v: f64| (v - FRAC_PI_2).signum();
    if side(psi_end) * side(psi_inf) < 0.0 {
        crossing_radii.push(f64::INFINITY);
    }
    Ok(Profile {
        params,
        crossings_of_equator: crossing_radii.len(),
        crossing_radii,
        psi_end,
        psi_inf,
        psi_inf_error,
        trajectory: traj,
    })
}

fn equator_crossings(traj: &Trajectory) -> Vec<f64> {
    let psi = traj.component(0);
    let nodes = traj.nodes();
    let mut out = Vec::new();
    for i in 0..psi.len() - 1 {
        let (a, b) = (psi[i] - FRAC_PI_2, psi[i + 1] - FRAC_PI_2);
        if a == 0.0 && i > 0 {
            out.push(nodes[i]);
        } else if a * b < 0.0 {
            let (mut lo, mut hi) = (nodes[i], nodes[i + 1]);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                let m = traj.eval(mid)[0] - FRAC_PI_2;
                if m * a > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            out.push(0.5 * (lo + hi));
        }
    }
    out
}

/// South profile `π − ψ` from a North profile.
pub fn reflect(north: &Profile) -> Profile {
    let t = &north.trajectory;
    let n = t.len();
    let mut states = Vec::with_capacity(2 * n);
    let mut slopes = Vec::with_capacity(2 * n);
    for i in 0..n {
        let (s, f) = (t.state(i), t.slope(i));
        states.extend_from_slice(&[PI - s[0], -s[1]]);
        slopes.extend_from_slice(&[-f[0], -f[1]]);
    }
    Profile {
        params: ProfileParams { pole: Pole::South, ..north.params },
        trajectory: Trajectory::from_samples(2, t.nodes().to_vec(), states, slopes, t.tolerance_used()),
        psi_inf: PI - north.psi_inf,
        psi_inf_error: north.psi_inf_error,
        psi_end: PI - north.psi_end,
        crossings_of_equator: north.crossings_of_equator,
        crossing_radii: north.crossing_radii.clone(),
    }
}

/// Linear equations solved along a profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VariationKind {
    /// `∂ψ_α/∂α`, zero mode of the linearized operator.
    PhiAlpha,
    /// `ρψ'_α/α`.
    UnderlinePhi,
    /// Positive solution with the extra `κ/Z` potential.
    W,
    /// Solution of the shifted equation with `+y/2`.
    Y,
    /// `Y` along the profile at `α₀` (upper barrier).
    VUpper,
    /// `Y` along the profile at `α` (lower barrier).
    WUpper,
    Phi1,
    Phi2,
}

/// Solution `(u, u')` of one of the linear companion equations.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationSolution {
    pub kind: VariationKind,
    pub d: Dimension,
    pub base: Option<ProfileParams>,
    /// States `(u, u')`.
    pub trajectory: Trajectory,
    /// `u(∞)`; for `Y`-type kinds the limit of `ρ·u`.
    pub limit: Option<f64>,
    /// `κ` for kind `W`.
    pub parameter: Option<f64>,
    /// First sign change of `u` past the launch radius, if any.
    pub first_zero: Option<f64>,
}

impl VariationSolution {
    pub fn value(&self, rho: f64) -> f64 {
        if rho <= 0.0 {
            return 0.0;
        }
        if rho < self.trajectory.first_node() {
            return rho;
        }
        let end = self.trajectory.last_node();
        if rho > end {
            let last = self.trajectory.last_state()[0];
            return match (self.limit, self.kind) {
                (Some(l), VariationKind::Y | VariationKind::VUpper | VariationKind::WUpper) => {
                    (l + (end * last - l) * (end / rho).powi(2)) / rho
                }
                (Some(l), _) => l + (last - l) * (end / rho).powi(2),
                (None, _) => last,
            };
        }
        self.trajectory.eval(rho)[0]
    }

    /// `u'(ρ)`, consistent with [`Self::value`] outside the span.
    pub fn derivative(&self, rho: f64) -> f64 {
        if rho < self.trajectory.first_node() {
            return 1.0;
        }
        let end = self.trajectory.last_node();
        if rho > end {
            let h = 1e-6 * rho;
            return (self.value(rho + h) - self.value(rho - h)) / (2.0 * h);
        }
        self.trajectory.eval(rho)[1]
    }

    pub fn min_value_after_launch(&self) -> f64 {
        self.trajectory.component(0)[1..].iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }

    pub fn is_positive(&self) -> bool {
        self.first_zero.is_none() && self.min_value_after_launch() > 0.0
    }
}

/// The interpolated weight: `ρ` on `[0,1]`, `ρ²` on `[2,∞)`, and the cubic
/// Hermite bridge `1 + t + 3t² − t³` (`t = ρ − 1`) in between.
pub fn weight_z(rho: f64) -> f64 {
    if rho <= 1.0 {
        rho
    } else if rho >= 2.0 {
        rho * rho
    } else {
        let t = rho - 1.0;
        1.0 + t + 3.0 * t * t - t * t * t
    }
}

/// Coefficients of `u'' + p u' − V u + c u + κ u/Z = 0` beyond the profile.
#[derive(Debug, Clone, Copy)]
struct LinearTerms {
    shift: f64,
    kappa: f64,
}

fn solve_linear(
    profile: &Profile,
    kind: VariationKind,
    terms: LinearTerms,
) -> Result<VariationSolution, ProfileError> {
    let p = profile.params;
    let d = p.d;
    let dm1 = d.dm1();
    let df = d.as_f64();
    let alpha = p.alpha;
    let rho0 = p.rho0();
    let launch = series_launch(d, alpha, Pole::North, rho0, p.series_order());
    let LinearTerms { shift, kappa } = terms;

    // u = ρ + bρ² + eρ³ (+ fρ⁵ for the exact α-derivative of the quintic series).
    let b = -kappa / (df + 1.0);
    let e = -(0.5 + shift + 2.0 * dm1 * alpha * alpha + kappa * b) / (2.0 * df + 4.0);
    let (mut u0, mut du0) = (rho0 + b * rho0 * rho0 + e * rho0.powi(3), 1.0 + 2.0 * b * rho0 + 3.0 * e * rho0 * rho0);
    if kind == VariationKind::PhiAlpha && p.series_order() == 5 {
        let (a, _) = series_coefficients::<f64>(d, alpha);
        let da = -(0.5 + 2.0 * dm1 * alpha * alpha) / (2.0 * df + 4.0);
        let db = -(1.5 * da + dm1 * (4.0 * alpha * a + 2.0 * alpha * alpha * da - (2.0 / 3.0) * alpha.powi(4)))
            / (4.0 * df + 16.0);
        u0 += db * rho0.powi(5);
        du0 += 5.0 * db * rho0.powi(4);
    }

    let field = FnField::new(4, move |rho: f64, y: &[f64], out: &mut [f64]| {
        let drift = dm1 / rho + 0.5 * rho;
        out[0] = y[1];
        out[1] = -drift * y[1] + dm1 / (2.0 * rho * rho) * (2.0 * y[0]).sin();
        let v = dm1 / (rho * rho) * (2.0 * y[0]).cos();
        out[2] = y[3];
        out[3] = -drift * y[3] + (v - shift - kappa / weight_z(rho)) * y[2];
    });
    let joint = integrate_with(&field, &[launch.value, launch.derivative, u0, du0], (rho0, p.rho_max), &integrator(p.tol))?;
    let n = joint.len();
    let mut states = Vec::with_capacity(2 * n);
    let mut slopes = Vec::with_capacity(2 * n);
    for i in 0..n {
        let (s, f) = (joint.state(i), joint.slope(i));
        states.extend_from_slice(&[s[2], s[3]]);
        slopes.extend_from_slice(&[f[2], f[3]]);
    }
    let trajectory = Trajectory::from_samples(2, joint.nodes().to_vec(), states, slopes, p.tol);
    let first_zero = first_sign_change(&trajectory);
    let scaled_by_rho = matches!(kind, VariationKind::Y | VariationKind::VUpper | VariationKind::WUpper);
    let limit = if scaled_by_rho {
        let rho_u = times_rho(&trajectory);
        limit_of(&rho_u, 0, p.rho_max)?.0
    } else {
        limit_of(&trajectory, 0, p.rho_max)?.0
    };
    Ok(VariationSolution {
        kind,
        d,
        base: Some(p),
        trajectory,
        limit: Some(limit),
        parameter: (kind == VariationKind::W).then_some(kappa),
        first_zero,
    })
}

fn times_rho(t: &Trajectory) -> Trajectory {
    let n = t.len();
    let mut states = Vec::with_capacity(2 * n);
    let mut slopes = Vec::with_capacity(2 * n);
    for (i, &rho) in t.nodes().iter().enumerate() {
        let (s, f) = (t.state(i), t.slope(i));
        states.extend_from_slice(&[rho * s[0], s[0] + rho * s[1]]);
        slopes.extend_from_slice(&[s[0] + rho * s[1], 2.0 * s[1] + rho * f[1]]);
    }
    Trajectory::from_samples(2, t.nodes().to_vec(), states, slopes, t.tolerance_used())
}

fn first_sign_change(t: &Trajectory) -> Option<f64> {
    let u = t.component(0);
    let nodes = t.nodes();
    (1..u.len()).find(|&i| u[i] <= 0.0).map(|i| {
        let (a, b) = (u[i - 1], u[i]);
        nodes[i - 1] + (nodes[i] - nodes[i - 1]) * a / (a - b)
    })
}

/// `φ_α = ∂ψ_α/∂α` with `φ(0) = 0`, `φ'(0) = 1`.
pub fn solve_variation_phi(profile: &Profile) -> Result<VariationSolution, ProfileError> {
    solve_linear(profile, VariationKind::PhiAlpha, LinearTerms { shift: 0.0, kappa: 0.0 })
}

/// Solution of the equation with the additional `κ/Z` potential.
///
/// Returns [`ProfileError::PositivityLost`] if `w` vanishes.
pub fn solve_w(profile: &Profile, kappa: f64) -> Result<VariationSolution, ProfileError> {
    if !(kappa >= 0.0) {
        return Err(ProfileError::InvalidParams(format!("kappa = {kappa}")));
    }
    let sol = solve_linear(profile, VariationKind::W, LinearTerms { shift: 0.0, kappa })?;
    if let Some(rho) = sol.first_zero {
        return Err(ProfileError::PositivityLost { rho });
    }
    if !(sol.limit.unwrap_or(0.0) > 0.0) {
        return Err(ProfileError::PositivityLost { rho: f64::INFINITY });
    }
    Ok(sol)
}

/// Solution of `L[y] − V y + y/2 = 0`; the recorded limit is that of `ρ y`.
pub fn solve_y(profile: &Profile) -> Result<VariationSolution, ProfileError> {
    solve_linear(profile, VariationKind::Y, LinearTerms { shift: 0.5, kappa: 0.0 })
}

/// The barrier functions `V` (along the profile at `α₀`) and `W` (along the
/// profile at `α`); both solve the `y` equation.
pub fn solve_barrier(profile: &Profile, upper: bool) -> Result<VariationSolution, ProfileError> {
    let kind = if upper { VariationKind::VUpper } else { VariationKind::WUpper };
    solve_linear(profile, kind, LinearTerms { shift: 0.5, kappa: 0.0 })
}

/// `ρψ'/α` evaluated directly from the profile.
pub fn solve_variation_underline(profile: &Profile) -> Result<VariationSolution, ProfileError> {
    let p = profile.params;
    if !(p.alpha > 0.0) {
        return Err(ProfileError::InvalidParams("alpha must be positive".into()));
    }
    let dm1 = p.d.dm1();
    let t = &profile.trajectory;
    // South profiles are reflected, so ψ' changes sign; normalize to slope +1.
    let sgn = if p.pole == Pole::South { -1.0 } else { 1.0 };
    let n = t.len();
    let mut states = Vec::with_capacity(2 * n);
    let mut slopes = Vec::with_capacity(2 * n);
    for (i, &rho) in t.nodes().iter().enumerate() {
        let (psi, dpsi) = (t.state(i)[0], t.state(i)[1]);
        let drift = dm1 / rho + 0.5 * rho;
        let ddpsi = -drift * dpsi + dm1 / (2.0 * rho * rho) * (2.0 * psi).sin();
        let dddpsi = -(0.5 - dm1 / (rho * rho)) * dpsi - drift * ddpsi - dm1 / rho.powi(3) * (2.0 * psi).sin()
            + dm1 / (rho * rho) * (2.0 * psi).cos() * dpsi;
        let k = sgn / p.alpha;
        states.extend_from_slice(&[k * rho * dpsi, k * (dpsi + rho * ddpsi)]);
        slopes.extend_from_slice(&[k * (dpsi + rho * ddpsi), k * (2.0 * ddpsi + rho * dddpsi)]);
    }
    let trajectory = Trajectory::from_samples(2, t.nodes().to_vec(), states, slopes, p.tol);
    Ok(VariationSolution {
        kind: VariationKind::UnderlinePhi,
        d: p.d,
        base: Some(p),
        first_zero: first_sign_change(&trajectory),
        limit: Some(0.0),
        parameter: None,
        trajectory,
    })
}

/// Residual of `u'' + p u' − V u + c u = 0` at the nodes of `sol`, using the
/// stored second derivative.
pub fn linear_residual(profile: &Profile, sol: &VariationSolution, shift: f64) -> Vec<f64> {
    let dm1 = profile.params.d.dm1();
    let t = &sol.trajectory;
    t.nodes()
        .iter()
        .enumerate()
        .map(|(i, &rho)| {
            let psi = profile.psi(rho);
            let v = dm1 / (rho * rho) * (2.0 * psi).cos();
            let (u, du, ddu) = (t.state(i)[0], t.state(i)[1], t.slope(i)[1]);
            ddu + (dm1 / rho + 0.5 * rho) * du - v * u + shift * u
        })
        .collect()
}

/// Sampled graph of `α ↦ ψ_α(∞)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchScan {
    pub d: Dimension,
    pub alphas: Vec<f64>,
    pub limits: Vec<f64>,
    pub crossings: Vec<usize>,
}

/// Integration settings shared by scans, shooting, and critical values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootSettings {
    pub rho_max: f64,
    pub ode_tol: f64,
    pub scan_range: (f64, f64),
    pub scan_n: usize,
}

impl ShootSettings {
    pub fn for_dimension(d: Dimension) -> Self {
        // The first equator crossing moves to larger α as d approaches 7.
        let hi = match d.get() {
            3 | 4 => 200.0,
            5 => 2e3,
            _ => 2e4,
        };
        Self { rho_max: 30.0, ode_tol: 1e-10, scan_range: (1e-3, hi), scan_n: 240 }
    }
}

/// Uniform-in-log α grid; a zero lower end contributes α = 0 plus a log grid
/// starting four decades below `hi`.
pub fn alpha_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if lo == 0.0 {
        let mut v = vec![0.0];
        v.extend(asymptotics::log_space(hi * 1e-4, hi, n - 1));
        v
    } else {
        asymptotics::log_space(lo, hi, n)
    }
}

pub fn scan_branches(d: Dimension, alpha_range: (f64, f64), n: usize) -> Result<BranchScan, ProfileError> {
    let s = ShootSettings::for_dimension(d);
    scan_branches_with(d, alpha_range, n, s.rho_max, s.ode_tol)
}

pub fn scan_branches_with(
    d: Dimension,
    alpha_range: (f64, f64),
    n: usize,
    rho_max: f64,
    tol: f64,
) -> Result<BranchScan, ProfileError> {
    let (lo, hi) = alpha_range;
    if !(lo >= 0.0 && hi > lo && n >= 2) {
        return Err(ProfileError::InvalidParams(format!("scan range ({lo}, {hi}) with n = {n}")));
    }
    let alphas = alpha_grid(lo, hi, n);
    let results: Vec<Result<(f64, usize), ProfileError>> = alphas
        .par_iter()
        .map(|&a| {
            let p = solve_profile(ProfileParams::new(d, a, Pole::North).with(rho_max, tol))?;
            Ok((p.psi_inf, p.crossings_of_equator))
        })
        .collect();
    let mut limits = Vec::with_capacity(n);
    let mut crossings = Vec::with_capacity(n);
    for r in results {
        let (l, c) = r?;
        limits.push(l);
        crossings.push(c);
    }
    Ok(BranchScan { d, alphas, limits, crossings })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShootResult {
    pub alpha: f64,
    pub target_ell: f64,
    pub branch: usize,
    pub bracket_history: Vec<(f64, f64)>,
    pub iterations: usize,
    pub profile: Profile,
}

pub fn shoot_for_limit(d: Dimension, ell: f64, branch: usize, tol: f64) -> Result<ShootResult, ProfileError> {
    shoot_for_limit_with(d, ell, branch, tol, &ShootSettings::for_dimension(d))
}

/// Bisection on `ψ_α(∞) − ℓ` inside the first scan cell (smallest α) whose
/// endpoints bracket `ℓ` and carry the requested crossing count.
pub fn shoot_for_limit_with(
    d: Dimension,
    ell: f64,
    branch: usize,
    tol: f64,
    s: &ShootSettings,
) -> Result<ShootResult, ProfileError> {
    if !(ell > 0.0 && ell < PI) {
        return Err(ProfileError::InvalidParams(format!("ell = {ell} outside (0, pi)")));
    }
    if !(tol > 0.0) {
        return Err(ProfileError::InvalidParams("tol must be positive".into()));
    }
    let ode_tol = s.ode_tol.min(tol * 1e-2).max(1e-13);
    let scan = scan_branches_with(d, (0.0_f64.max(s.scan_range.0), s.scan_range.1), s.scan_n, s.rho_max, ode_tol)?;
    let mut alphas = vec![0.0];
    let mut limits = vec![0.0];
    let mut crossings = vec![0usize];
    alphas.extend(&scan.alphas);
    limits.extend(&scan.limits);
    crossings.extend(&scan.crossings);

    let cell = (0..alphas.len() - 1).find(|&i| {
        let (f0, f1) = (limits[i] - ell, limits[i + 1] - ell);
        f0 * f1 <= 0.0 && f0 != f1 && (crossings[i] == branch || crossings[i + 1] == branch)
    });
    let Some(i) = cell else {
        return Err(ProfileError::NoBracket { ell, branch });
    };
    let solve = |a: f64| solve_profile(ProfileParams::new(d, a, Pole::North).with(s.rho_max, ode_tol));
    let (mut lo, mut hi) = (alphas[i], alphas[i + 1]);
    let f_lo_sign = (limits[i] - ell).signum();
    let mut history = vec![(lo, hi)];
    let mut best: Option<Profile> = None;
    for it in 1..=200 {
        let mid = 0.5 * (lo + hi);
        let p = solve(mid)?;
        let f = p.psi_inf - ell;
        if f.abs() <= tol && p.crossings_of_equator == branch {
            return Ok(ShootResult { alpha: mid, target_ell: ell, branch, bracket_history: history, iterations: it, profile: p });
        }
        if f.signum() == f_lo_sign || f == 0.0 && f_lo_sign == 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        history.push((lo, hi));
        if p.crossings_of_equator == branch && best.as_ref().is_none_or(|b| (b.psi_inf - ell).abs() > f.abs()) {
            best = Some(p);
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
    }
    match best {
        Some(p) if (p.psi_inf - ell).abs() <= tol => Ok(ShootResult {
            alpha: p.params.alpha,
            target_ell: ell,
            branch,
            iterations: history.len(),
            bracket_history: history,
            profile: p,
        }),
        _ => Err(ProfileError::NoBracket { ell, branch }),
    }
}

/// South-pole profile with limit `ell`, obtained by reflecting the branch-1
/// North profile with limit `π − ell`.
pub fn south_profile(d: Dimension, ell: f64, tol: f64) -> Result<Profile, ProfileError> {
    south_profile_with(d, ell, tol, &ShootSettings::for_dimension(d))
}

pub fn south_profile_with(d: Dimension, ell: f64, tol: f64, s: &ShootSettings) -> Result<Profile, ProfileError> {
    if !(ell < FRAC_PI_2) {
        return Err(ProfileError::NoBracket { ell, branch: 1 });
    }
    let shot = shoot_for_limit_with(d, PI - ell, 1, tol, s)?;
    Ok(reflect(&shot.profile))
}

/// `α₀`, `α*`, `ℓ*`, `δ*`; infinities for `d ≥ 7`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalParams {
    pub alpha0: f64,
    pub alpha_star: f64,
    pub ell_star: f64,
    pub delta_star: f64,
    pub tol: f64,
}

impl CriticalParams {
    pub fn is_finite(&self) -> bool {
        self.alpha0.is_finite()
    }
}

pub fn critical_params(d: Dimension, tol: f64) -> Result<CriticalParams, ProfileError> {
    critical_params_with(d, tol, &ShootSettings::for_dimension(d))
}

/// Bisection on the predicates "ψ reaches π/2" (for `α₀`) and "φ_α is no
/// longer positive" (for `α*`), each started from the first flipping cell of
/// a log-uniform scan.
pub fn critical_params_with(d: Dimension, tol: f64, s: &ShootSettings) -> Result<CriticalParams, ProfileError> {
    if d.get() >= 7 {
        return Ok(CriticalParams {
            alpha0: f64::INFINITY,
            alpha_star: f64::INFINITY,
            ell_star: f64::NAN,
            delta_star: f64::NAN,
            tol,
        });
    }
    let params = |a: f64| ProfileParams::new(d, a, Pole::North).with(s.rho_max, s.ode_tol);
    let reaches = |a: f64| -> Result<bool, ProfileError> { Ok(solve_profile(params(a))?.crossings_of_equator > 0) };
    let phi_fails = |a: f64| -> Result<bool, ProfileError> {
        let phi = solve_variation_phi(&solve_profile(params(a))?)?;
        Ok(!phi.is_positive() || phi.limit.unwrap_or(0.0) <= 0.0)
    };

    let grid = alpha_grid(s.scan_range.0, s.scan_range.1, s.scan_n);
    let flags: Vec<bool> = grid.par_iter().map(|&a| reaches(a)).collect::<Result<_, _>>()?;
    let k = flags.iter().position(|&f| f).ok_or(ProfileError::NoBracket { ell: FRAC_PI_2, branch: 0 })?;
    let lo0 = if k == 0 { 0.0 } else { grid[k - 1] };
    let alpha0 = bisect_predicate(lo0, grid[k], tol, &reaches)?;

    // Fine scan above α₀ for the first loss of positivity of φ_α.
    let fine = asymptotics::log_space(alpha0 * (1.0 + 1e-9), alpha0 * 50.0, 200);
    let flags: Vec<bool> = fine.par_iter().map(|&a| phi_fails(a)).collect::<Result<_, _>>()?;
    let k = flags.iter().position(|&f| f).ok_or(ProfileError::NoBracket { ell: FRAC_PI_2, branch: 1 })?;
    let lo = if k == 0 { alpha0 } else { fine[k - 1] };
    let alpha_star = bisect_predicate(lo, fine[k], tol, &phi_fails)?;
    let ell_star = solve_profile(params(alpha_star))?.psi_inf;
    Ok(CriticalParams { alpha0, alpha_star, ell_star, delta_star: ell_star - FRAC_PI_2, tol })
}

/// Smallest point (to `tol`, relative for α > 1) where `pred` becomes true on `[lo, hi]`.
fn bisect_predicate(
    mut lo: f64,
    mut hi: f64,
    tol: f64,
    pred: &dyn Fn(f64) -> Result<bool, ProfileError>,
) -> Result<f64, ProfileError> {
    while hi - lo > tol * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if pred(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Empirical positivity threshold `κ̂` of Eq. (3) for the given profile:
/// bisection on the `PositivityLost` signal up to `kappa_hi`.
pub fn kappa_threshold(profile: &Profile, kappa_hi: f64, tol: f64) -> Result<f64, ProfileError> {
    let lost = |k: f64| match solve_w(profile, k) {
        Ok(_) => Ok(false),
        Err(ProfileError::PositivityLost { .. }) => Ok(true),
        Err(e) => Err(e),
    };
    if !lost(kappa_hi)? {
        return Ok(kappa_hi);
    }
    let (mut lo, mut hi) = (0.0, kappa_hi);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if lost(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(lo)
}
