//! Residuals of the barrier functions `±(η w + (M + A/ρ²) φ(e^{s/2}ρ))`.

use serde::{Deserialize, Serialize};

use crate::asymptotics::log_space;
use crate::profile_solver::{weight_z, Profile, VariationSolution};

/// C∞ step: 0 for `x ≤ 0`, 1 for `x ≥ 1`.
pub fn smooth_step(x: f64) -> f64 {
    smooth_step_derivatives(x).0
}

/// `(S, S', S'')` for [`smooth_step`].
pub fn smooth_step_derivatives(x: f64) -> (f64, f64, f64) {
    if x <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    if x >= 1.0 {
        return (1.0, 0.0, 0.0);
    }
    let q = 1.0 / x - 1.0 / (1.0 - x);
    let s = if q > 0.0 {
        let e = (-q).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + q.exp())
    };
    let dq = -1.0 / (x * x) - 1.0 / ((1.0 - x) * (1.0 - x));
    let ddq = 2.0 / (x * x * x) - 2.0 / ((1.0 - x) * (1.0 - x) * (1.0 - x));
    let ss = s * (1.0 - s);
    let d1 = -ss * dq;
    let d2 = -d1 * (1.0 - 2.0 * s) * dq - ss * ddq;
    (s, d1, d2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupersolutionParams {
    pub eta: f64,
    pub m: f64,
    pub a: f64,
    /// Cutoff radius: `φ = 0` on `[0, R]`, `φ = 1` on `[2R, ∞)`.
    pub r: f64,
    pub s0: f64,
}

impl SupersolutionParams {
    /// `φ(x)` and its first two derivatives.
    pub fn cutoff(&self, x: f64) -> (f64, f64, f64) {
        let (s, d1, d2) = smooth_step_derivatives((x - self.r) / self.r);
        (s, d1 / self.r, d2 / (self.r * self.r))
    }
}

/// `u_s + H_α u + J(u)/ρ²` for `u = sign·(η w + (M + A/ρ²)φ(e^{s/2}ρ))`,
/// indexed `[s][ρ]`. `w` must be the weight solution with parameter `κ`.
pub fn supersolution_residual(
    params: &SupersolutionParams,
    profile: &Profile,
    w: &VariationSolution,
    s_grid: &[f64],
    rho_grid: &[f64],
    sign: f64,
) -> Vec<Vec<f64>> {
    let kappa = w.parameter.unwrap_or(0.0);
    let dm1 = profile.params.d.dm1();
    let column: Vec<_> = rho_grid
        .iter()
        .map(|&rho| {
            let psi = profile.psi(rho);
            let wv = w.value(rho);
            (psi, wv, weight_z(rho))
        })
        .collect();
    s_grid
        .iter()
        .map(|&s| {
            let e = (0.5 * s).exp();
            rho_grid
                .iter()
                .zip(&column)
                .map(|(&rho, &(psi, wv, z))| {
                    let (phi, dphi, ddphi) = params.cutoff(e * rho);
                    let m = params.m + params.a / (rho * rho);
                    let dm = -2.0 * params.a / rho.powi(3);
                    let ddm = 6.0 * params.a / rho.powi(4);
                    let g_r = dm * phi + m * e * dphi;
                    let g_rr = ddm * phi + 2.0 * dm * e * dphi + m * e * e * ddphi;
                    let g_s = 0.5 * m * dphi * e * rho;
                    let p = dm1 / rho + 0.5 * rho;
                    let pot = dm1 * (2.0 * psi).cos() / (rho * rho);
                    let linear = params.eta * (kappa * wv / z - pot * wv) + g_s - g_rr - p * g_r;
                    let u = sign * (params.eta * wv + m * phi);
                    // sin(2ψ + 2u) − sin(2ψ) written to avoid cancellation.
                    let jump = 2.0 * (2.0 * psi + u).cos() * u.sin();
                    sign * linear + dm1 / (2.0 * rho * rho) * jump
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SupersolutionSearch {
    pub params: SupersolutionParams,
    pub min_upper: f64,
    pub max_lower: f64,
    pub s_grid: Vec<f64>,
    pub points_per_slice: usize,
}

/// Radii covering the core and the cutoff transition at time `s`.
fn slice_grid(r: f64, s: f64) -> Vec<f64> {
    let edge = r * (-0.5 * s).exp();
    let mut g = log_space(1e-3, 50.0f64.max(0.5 * edge), 1500);
    g.extend((0..=600).map(|k| edge * (1.0 + k as f64 / 600.0)));
    g.extend(log_space(2.0 * edge, 20.0 * edge, 200));
    g.sort_by(f64::total_cmp);
    g.dedup();
    g
}

/// Scan `(η, A, s₀)` for barriers with `min R₊ ≥ −tol` and `max R₋ ≤ tol`.
///
/// Candidates are tried from the largest `η` and smallest `A` outward; the
/// first admissible triple is returned together with the attained extremes.
pub fn find_supersolution(
    profile: &Profile,
    w: &VariationSolution,
    m: f64,
    r: f64,
    tol: f64,
) -> Option<SupersolutionSearch> {
    let etas = [0.5, 0.2, 0.1, 0.05, 0.02, 0.01, 1e-3];
    let amps = [1.0, 1e1, 1e2, 1e3, 1e4, 1e5, 1e6, 1e8, 1e10, 1e12];
    let s0s = [0.0, -2.0, -5.0, -10.0, -20.0];
    for &s0 in &s0s {
        let s_grid: Vec<f64> = [0.01, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 30.0].iter().map(|o| s0 - o).collect();
        for &eta in &etas {
            for &a in &amps {
                let params = SupersolutionParams { eta, m, a, r, s0 };
                let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                let mut points = 0;
                for &s in &s_grid {
                    let rho = slice_grid(r, s);
                    points = points.max(rho.len());
                    let up = supersolution_residual(&params, profile, w, &[s], &rho, 1.0);
                    lo = up[0].iter().fold(lo, |a, &b| a.min(b));
                    if lo < -tol {
                        break;
                    }
                    let dn = supersolution_residual(&params, profile, w, &[s], &rho, -1.0);
                    hi = dn[0].iter().fold(hi, |a, &b| a.max(b));
                    if hi > tol {
                        break;
                    }
                }
                if lo >= -tol && hi <= tol {
                    return Some(SupersolutionSearch {
                        params,
                        min_upper: lo,
                        max_lower: hi,
                        s_grid,
                        points_per_slice: points,
                    });
                }
            }
        }
    }
    None
}
