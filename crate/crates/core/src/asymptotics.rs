//! Large-ρ behaviour of the linearized expander equation
//! `φ'' + ((d−1)/ρ + ρ/2) φ' − V φ = 0`, tail extrapolation of limits and
//! decay-rate fits.

use crate::ode_core::{integrate_with, Dimension, FnField, IntegratorOptions, OdeError};
use crate::profile_solver::{Profile, VariationKind, VariationSolution};
use crate::Trajectory;
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AsymptoticsError {
    #[error("fit rejected: {0}")]
    BadFit(String),
    #[error(transparent)]
    Integration(#[from] OdeError),
}

/// A potential `V(ρ)` with a sampled bound `|V| ≤ C0/ρ²`, `|V'| ≤ C0/ρ³`.
#[derive(Clone)]
pub struct Potential {
    eval: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub bound_c0: f64,
}

impl std::fmt::Debug for Potential {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Potential").field("bound_c0", &self.bound_c0).finish()
    }
}

impl Potential {
    /// Wrap `v` and estimate `C0` on 100 log-spaced points of `[lo, hi]`.
    pub fn new(v: impl Fn(f64) -> f64 + Send + Sync + 'static, lo: f64, hi: f64) -> Self {
        let eval: Arc<dyn Fn(f64) -> f64 + Send + Sync> = Arc::new(v);
        let mut c0: f64 = 0.0;
        for rho in log_space(lo, hi, 100) {
            let dv = (eval(rho * (1.0 + 1e-6)) - eval(rho * (1.0 - 1e-6))) / (2e-6 * rho);
            c0 = c0.max(eval(rho).abs() * rho * rho).max(dv.abs() * rho.powi(3));
        }
        Self { eval, bound_c0: c0 }
    }

    pub fn zero() -> Self {
        Self { eval: Arc::new(|_| 0.0), bound_c0: 0.0 }
    }

    /// `V_α = (d−1)/ρ² cos(2ψ_α)`, frozen at `ψ(∞)` beyond the profile span.
    pub fn from_profile(profile: &Profile) -> Self {
        let dm1 = profile.params.d.dm1();
        let traj = profile.trajectory.clone();
        let (end, limit) = (traj.last_node(), profile.psi_inf);
        Self::new(
            move |rho| {
                let psi = if rho >= end { limit } else { traj.eval(rho)[0] };
                dm1 / (rho * rho) * (2.0 * psi).cos()
            },
            1.0,
            end,
        )
    }

    pub fn eval(&self, rho: f64) -> f64 {
        (self.eval)(rho)
    }
}

/// `n` logarithmically spaced points from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2);
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Least-squares fit of `y ≈ Σ_k c_k x^k`; returns coefficients and RMS residual.
fn polyfit(x: &[f64], y: &[f64], degree: usize) -> Result<(Vec<f64>, f64), AsymptoticsError> {
    let n = x.len();
    if n <= degree {
        return Err(AsymptoticsError::BadFit(format!("{n} samples for a degree-{degree} fit")));
    }
    // Scale the abscissa to [0, 1] so the Vandermonde stays well conditioned.
    let xmax = x.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let a = DMatrix::from_fn(n, degree + 1, |i, k| (x[i] / xmax).powi(k as i32));
    let b = DVector::from_column_slice(y);
    let svd = a.clone().svd(true, true);
    let c = svd
        .solve(&b, 1e-14)
        .map_err(|e| AsymptoticsError::BadFit(e.to_string()))?;
    let r = &a * &c - &b;
    let rms = (r.norm_squared() / n as f64).sqrt();
    let coeffs = (0..=degree).map(|k| c[k] / xmax.powi(k as i32)).collect();
    Ok((coeffs, rms))
}

/// Result of a limit extrapolation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailLimit {
    pub limit: f64,
    pub error: f64,
    /// Coefficient of the leading `1/ρ²` correction.
    pub c2: f64,
}

/// Polynomial degree in `1/ρ²` used by default. The linear model alone leaves
/// a bias near 1e−7 on `[15, 30]`; degree 4 brings it to about 1e−11.
pub const TAIL_DEGREE: usize = 4;

/// Fit component 0 by `L + c/ρ²` on `window`; see [`tail_extrapolate_with`].
pub fn tail_extrapolate(trajectory: &Trajectory, window: (f64, f64)) -> Result<(f64, f64), AsymptoticsError> {
    let t = tail_extrapolate_with(trajectory, 0, window, TAIL_DEGREE)?;
    Ok((t.limit, t.error))
}

/// Least-squares extrapolation of component `k` in powers of `1/ρ²`.
///
/// The reported error is the larger of the RMS residual and the change of the
/// limit when the polynomial degree is raised by one.
pub fn tail_extrapolate_with(
    trajectory: &Trajectory,
    k: usize,
    window: (f64, f64),
    degree: usize,
) -> Result<TailLimit, AsymptoticsError> {
    let (a, b) = window;
    if a < 10.0 || b <= a {
        return Err(AsymptoticsError::BadFit(format!("window ({a}, {b}) must satisfy 10 <= a < b")));
    }
    if a < trajectory.first_node() || b > trajectory.last_node() * (1.0 + 1e-12) {
        return Err(AsymptoticsError::BadFit("window outside trajectory".into()));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, &rho) in trajectory.nodes().iter().enumerate() {
        if rho >= a && rho <= b * (1.0 + 1e-12) {
            xs.push(1.0 / (rho * rho));
            ys.push(trajectory.state(i)[k]);
        }
    }
    extrapolate_samples(&xs, &ys, degree)
}

/// Extrapolate samples `y(x)` to `x = 0` where `x = 1/ρ²`.
pub fn extrapolate_samples(xs: &[f64], ys: &[f64], degree: usize) -> Result<TailLimit, AsymptoticsError> {
    let scale = ys.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Ok(TailLimit { limit: 0.0, error: 0.0, c2: 0.0 });
    }
    let spread = ys.iter().fold(0.0f64, |m, v| m.max((v - ys[0]).abs()));
    if spread <= 4.0 * f64::EPSILON * scale {
        return Ok(TailLimit { limit: ys[ys.len() - 1], error: 0.0, c2: 0.0 });
    }
    let need = degree + 3;
    if xs.len() < need {
        return Err(AsymptoticsError::BadFit(format!("only {} samples in window", xs.len())));
    }
    let (c, rms) = polyfit(xs, ys, degree)?;
    let (c_hi, _) = polyfit(xs, ys, degree + 1)?;
    let error = rms.max((c_hi[0] - c[0]).abs());
    if !(error <= 1e-4 * scale.max(1.0)) {
        return Err(AsymptoticsError::BadFit(format!("residual {error:e} too large")));
    }
    Ok(TailLimit { limit: c[0], error, c2: c.get(1).copied().unwrap_or(0.0) })
}

/// Decay model for [`fit_decay`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecayModel {
    /// `|v| ≈ P ρ^p`.
    Power,
    /// `|v| / (ρ^{1−d} e^{−ρ²/4}) ≈ P ρ^p`.
    GaussianWeighted(Dimension),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub exponent: f64,
    /// Signed prefactor (sign of the data).
    pub prefactor: f64,
    /// RMS residual of the log-log fit.
    pub residual: f64,
}

/// Log-log least-squares slope of `values` against `rho`.
pub fn fit_decay(rho: &[f64], values: &[f64], model: DecayModel) -> Result<DecayFit, AsymptoticsError> {
    if rho.len() != values.len() || rho.len() < 10 {
        return Err(AsymptoticsError::BadFit("need at least 10 samples".into()));
    }
    let (lo, hi) = rho.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
    if !(lo > 0.0 && hi >= 3.0 * lo) {
        return Err(AsymptoticsError::BadFit("samples must span a factor of 3".into()));
    }
    let sign = values.iter().map(|v| v.signum()).sum::<f64>().signum();
    let mut xs = Vec::with_capacity(rho.len());
    let mut ys = Vec::with_capacity(rho.len());
    for (&r, &v) in rho.iter().zip(values) {
        let w = match model {
            DecayModel::Power => 0.0,
            DecayModel::GaussianWeighted(d) => (1.0 - d.as_f64()) * r.ln() - r * r / 4.0,
        };
        if v == 0.0 {
            return Err(AsymptoticsError::BadFit("zero sample in log fit".into()));
        }
        xs.push(r.ln());
        ys.push(v.abs().ln() - w);
    }
    let (c, rms) = polyfit(&xs, &ys, 1)?;
    if !(rms < 0.1) {
        return Err(AsymptoticsError::BadFit(format!("log-log residual {rms}")));
    }
    Ok(DecayFit { exponent: c[1], prefactor: sign * c[0].exp(), residual: rms })
}

/// Log-linear fit `|v(s)| ≈ P e^{−λ s}`; returns `λ` as the exponent.
pub fn fit_exponential_rate(s: &[f64], values: &[f64]) -> Result<DecayFit, AsymptoticsError> {
    if s.len() != values.len() || s.len() < 3 {
        return Err(AsymptoticsError::BadFit("need at least 3 samples".into()));
    }
    let ys: Vec<f64> = values.iter().map(|v| v.abs().ln()).collect();
    let (c, rms) = polyfit(s, &ys, 1)?;
    Ok(DecayFit { exponent: -c[1], prefactor: c[0].exp(), residual: rms })
}

/// Integration settings for the basis computation.
#[derive(Debug, Clone, Copy)]
pub struct BasisOptions {
    pub rho_max: f64,
    pub tol: f64,
}

impl Default for BasisOptions {
    fn default() -> Self {
        Self { rho_max: 30.0, tol: 1e-10 }
    }
}

/// The decaying solution `φ₁ ~ ρ^{−d} e^{−ρ²/4}` and the bounded solution
/// `φ₂ → 1` on `[R, ρ_max]`.
///
/// `φ₁` is integrated backward as `g = φ₁ ρ^d e^{ρ²/4}`, which solves
/// `g'' − ((d+1)/ρ + ρ/2) g' + (2d/ρ² − V) g = 0` and stays O(1).
pub fn basis_at_infinity(
    potential: &Potential,
    d: Dimension,
    r: f64,
    opts: BasisOptions,
) -> Result<(VariationSolution, VariationSolution), AsymptoticsError> {
    let df = d.as_f64();
    let dm1 = d.dm1();
    let int = IntegratorOptions::with_tol(opts.tol);

    let v2 = potential.clone();
    let f2 = FnField::new(2, move |rho: f64, y: &[f64], out: &mut [f64]| {
        out[0] = y[1];
        out[1] = -(dm1 / rho + 0.5 * rho) * y[1] + v2.eval(rho) * y[0];
    });
    let raw2 = integrate_with(&f2, &[1.0, 0.0], (r, opts.rho_max), &int)?;
    let window = ((opts.rho_max / 2.0).max(10.0), opts.rho_max);
    let lim2 = if window.0 < r {
        raw2.last_state()[0]
    } else {
        tail_extrapolate_with(&raw2, 0, window, TAIL_DEGREE)?.limit
    };
    let phi2 = scaled(&raw2, 1.0 / lim2);

    let v1 = potential.clone();
    let f1 = FnField::new(2, move |rho: f64, y: &[f64], out: &mut [f64]| {
        out[0] = y[1];
        out[1] = ((df + 1.0) / rho + 0.5 * rho) * y[1] - (2.0 * df / (rho * rho) - v1.eval(rho)) * y[0];
    });
    let g = integrate_with(&f1, &[1.0, 0.0], (opts.rho_max, r), &int)?;
    let mut states = Vec::with_capacity(2 * g.len());
    let mut slopes = Vec::with_capacity(2 * g.len());
    for (i, &rho) in g.nodes().iter().enumerate() {
        let (gv, gp) = (g.state(i)[0], g.state(i)[1]);
        let e = (-df * rho.ln() - rho * rho / 4.0).exp();
        let m = -df / rho - rho / 2.0;
        let phi = e * gv;
        let dphi = e * (gp + m * gv);
        let ddphi = -(dm1 / rho + 0.5 * rho) * dphi + potential.eval(rho) * phi;
        states.extend_from_slice(&[phi, dphi]);
        slopes.extend_from_slice(&[dphi, ddphi]);
    }
    let phi1 = Trajectory::from_samples(2, g.nodes().to_vec(), states, slopes, opts.tol);

    let make = |kind, trajectory, limit| VariationSolution {
        kind,
        d,
        base: None,
        trajectory,
        limit,
        parameter: None,
        first_zero: None,
    };
    Ok((make(VariationKind::Phi1, phi1, Some(0.0)), make(VariationKind::Phi2, phi2, Some(1.0))))
}

fn scaled(t: &Trajectory, s: f64) -> Trajectory {
    let n = t.len();
    let mut states = Vec::with_capacity(n * t.dim());
    let mut slopes = Vec::with_capacity(n * t.dim());
    for i in 0..n {
        states.extend(t.state(i).iter().map(|v| v * s));
        slopes.extend(t.slope(i).iter().map(|v| v * s));
    }
    Trajectory::from_samples(t.dim(), t.nodes().to_vec(), states, slopes, t.tolerance_used())
}

/// Outcome of a single launch `φ(R) = 0, φ'(R) = 1` for the zero-count test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaunchProbe {
    pub r: f64,
    pub zeros_after: usize,
    pub limit: f64,
}

/// Probe launches with value 0 and unit slope at each `R` in `probes`, and
/// return the smallest probe radius from which every larger probe has no
/// further zero and a nonzero limit.
pub fn estimate_r0(
    potential: &Potential,
    d: Dimension,
    probes: &[f64],
    opts: BasisOptions,
) -> Result<(Option<f64>, Vec<LaunchProbe>), AsymptoticsError> {
    let dm1 = d.dm1();
    let int = IntegratorOptions::with_tol(opts.tol);
    let mut out = Vec::with_capacity(probes.len());
    for &r in probes {
        let v = potential.clone();
        let f = FnField::new(2, move |rho: f64, y: &[f64], o: &mut [f64]| {
            o[0] = y[1];
            o[1] = -(dm1 / rho + 0.5 * rho) * y[1] + v.eval(rho) * y[0];
        });
        let t = integrate_with(&f, &[0.0, 1.0], (r, opts.rho_max), &int)?;
        let u = t.component(0);
        let zeros_after = u[1..].windows(2).filter(|w| w[0] * w[1] < 0.0).count();
        let window = ((opts.rho_max / 2.0).max(10.0), opts.rho_max);
        let limit = if window.0 > r {
            tail_extrapolate_with(&t, 0, window, TAIL_DEGREE)?.limit
        } else {
            t.last_state()[0]
        };
        out.push(LaunchProbe { r, zeros_after, limit });
    }
    let mut r0 = None;
    for p in out.iter().rev() {
        if p.zeros_after == 0 && p.limit.abs() > 1e-8 {
            r0 = Some(p.r);
        } else {
            break;
        }
    }
    Ok((r0, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(f: impl Fn(f64) -> f64) -> Trajectory {
        let nodes: Vec<f64> = (0..=200).map(|i| 10.0 + 0.1 * i as f64).collect();
        let states: Vec<f64> = nodes.iter().flat_map(|&r| [f(r), 0.0]).collect();
        let slopes = vec![0.0; states.len()];
        Trajectory::from_samples(2, nodes, states, slopes, 0.0)
    }

    #[test]
    fn constant_tail_is_exact() {
        let t = synthetic(|_| 0.75);
        assert_eq!(tail_extrapolate(&t, (10.0, 30.0)).unwrap(), (0.75, 0.0));
    }

    #[test]
    fn model_tail_is_exact() {
        let t = synthetic(|r| 1.0 + 3.0 / (r * r));
        let (l, e) = tail_extrapolate(&t, (10.0, 30.0)).unwrap();
        assert!((l - 1.0).abs() < 1e-10 && e < 1e-10, "{l} {e}");
    }

    #[test]
    fn window_must_start_beyond_ten() {
        let t = synthetic(|r| 1.0 / r);
        assert!(matches!(tail_extrapolate(&t, (5.0, 30.0)), Err(AsymptoticsError::BadFit(_))));
    }

    #[test]
    fn power_fit_recovers_exponent() {
        let r = log_space(3.0, 30.0, 40);
        let v: Vec<f64> = r.iter().map(|x| 2.5 * x.powi(-3)).collect();
        let fit = fit_decay(&r, &v, DecayModel::Power).unwrap();
        assert!((fit.exponent + 3.0).abs() < 1e-9);
        assert!((fit.prefactor - 2.5).abs() < 1e-9);
    }

    #[test]
    fn gaussian_fit_divides_weight() {
        let d = Dimension::new(4).unwrap();
        let r = log_space(5.0, 20.0, 30);
        let v: Vec<f64> = r.iter().map(|&x| -0.5 * x.powi(-3) * (-x * x / 4.0).exp()).collect();
        let fit = fit_decay(&r, &v, DecayModel::GaussianWeighted(d)).unwrap();
        assert!(fit.exponent.abs() < 1e-9);
        assert!((fit.prefactor + 0.5).abs() < 1e-9);
    }

    #[test]
    fn zero_potential_keeps_phi2_constant() {
        let d = Dimension::new(3).unwrap();
        let (phi1, phi2) = basis_at_infinity(&Potential::zero(), d, 10.0, BasisOptions::default()).unwrap();
        assert!(phi2.trajectory.component(0).iter().all(|&v| v == 1.0));
        let t = &phi1.trajectory;
        for (i, &rho) in t.nodes().iter().enumerate() {
            let g = t.state(i)[0] * rho.powi(3) * (rho * rho / 4.0).exp();
            assert!((g - 1.0).abs() < 0.05, "rho {rho} g {g}");
        }
    }
}
