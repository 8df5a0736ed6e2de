//! Post-processing checks on simulated runs.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use super::flow::{gradient, RadialField, Run};
use super::selfsim::SelfSimRun;
use super::PdeError;
use crate::profile_solver::{Profile, VariationSolution};

/// `4(d−1)/(d−2)²`, the Hardy-type constant separating `d ≤ 6` from `d ≥ 7`.
pub fn hardy_constant(d: u32) -> f64 {
    let d = f64::from(d);
    4.0 * (d - 1.0) / ((d - 2.0) * (d - 2.0))
}

/// Largest `(sub − super)₊` over all common snapshots.
pub fn check_comparison(sub: &Run, sup: &Run) -> f64 {
    sub.snapshots
        .iter()
        .zip(&sup.snapshots)
        .flat_map(|(a, b)| a.values.iter().zip(&b.values).map(|(x, y)| (x - y).max(0.0)))
        .fold(0.0, f64::max)
}

/// Largest violation of `u⁻ ≤ v ≤ u⁺` along a self-similar run, where
/// `u⁺ = min(ψ_{α₀}, ψ_α + b e^{−(s−s₀)/2} V)` and
/// `u⁻ = max(0, ψ_α − b e^{−(s−s₀)/2} W)`.
pub fn sandwich_violation(
    run: &SelfSimRun,
    upper_profile: &Profile,
    upper: &VariationSolution,
    lower: &VariationSolution,
    b: f64,
) -> f64 {
    let s0 = run.snapshots[0].time;
    let rho = run.snapshots[0].r().to_vec();
    let cap: Vec<f64> = rho.iter().map(|&r| upper_profile.psi(r)).collect();
    let vv: Vec<f64> = rho.iter().map(|&r| upper.value(r)).collect();
    let ww: Vec<f64> = rho.iter().map(|&r| lower.value(r)).collect();
    let mut worst: f64 = 0.0;
    for snap in &run.snapshots {
        let pert = run.perturbation(snap);
        let amp = b * (-0.5 * (snap.time - s0)).exp();
        for i in 0..rho.len() {
            let v = run.base[i] + pert[i];
            let hi = cap[i].min(run.base[i] + amp * vv[i]);
            let lo = (run.base[i] - amp * ww[i]).max(0.0);
            worst = worst.max(v - hi).max(lo - v);
        }
    }
    worst
}

/// Space-time test functions `τ(t, r)` and `ψ^ℓ = q(t, r) x_ℓ/r`.
pub trait TestFunctionPair {
    /// `(τ, τ_t, τ_r)`.
    fn tau(&self, t: f64, r: f64) -> (f64, f64, f64);
    /// `(q, q_r)`.
    fn q(&self, t: f64, r: f64) -> (f64, f64);
    /// Closed support box `((t_lo, t_hi), (r_lo, r_hi))`.
    fn support(&self) -> ((f64, f64), (f64, f64));
}

/// Products of standard bumps in `t` and `r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BumpTest {
    pub t_range: (f64, f64),
    pub r_range: (f64, f64),
    pub q_amplitude: f64,
}

fn bump(x: f64, (a, b): (f64, f64)) -> (f64, f64) {
    let z = (2.0 * x - a - b) / (b - a);
    if z.abs() >= 1.0 {
        return (0.0, 0.0);
    }
    let den = 1.0 - z * z;
    let v = (1.0 - 1.0 / den).exp();
    (v, v * (-2.0 * z / (den * den)) * 2.0 / (b - a))
}

impl TestFunctionPair for BumpTest {
    fn tau(&self, t: f64, r: f64) -> (f64, f64, f64) {
        let (bt, dbt) = bump(t, self.t_range);
        let (br, dbr) = bump(r, self.r_range);
        (bt * br, dbt * br, bt * dbr)
    }

    fn q(&self, t: f64, r: f64) -> (f64, f64) {
        let (bt, _) = bump(t, self.t_range);
        let (br, dbr) = bump(r, self.r_range);
        (self.q_amplitude * bt * br, self.q_amplitude * bt * dbr)
    }

    fn support(&self) -> ((f64, f64), (f64, f64)) {
        (self.t_range, self.r_range)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
}

fn trapezoid_weights(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut w = vec![0.0; n];
    for i in 0..n - 1 {
        let h = 0.5 * (x[i + 1] - x[i]);
        w[i] += h;
        w[i + 1] += h;
    }
    w
}

/// Both sides of the localized energy inequality in radial form, with the
/// sphere measure factored out; `margin = LHS − RHS`.
pub fn energy_inequality_check(run: &Run, tests: &dyn TestFunctionPair) -> Result<EnergyReport, PdeError> {
    let snaps = &run.snapshots;
    let first = &snaps[0];
    let r = first.r();
    let ((t_lo, t_hi), (r_lo, r_hi)) = tests.support();
    if r_lo < r[1] {
        return Err(PdeError::UnresolvedRegion);
    }
    let t_first = first.time;
    let t_last = snaps[snaps.len() - 1].time;
    if r_hi > first.grid.r_max() || t_lo < t_first || t_hi > t_last || snaps.len() < 3 {
        return Err(PdeError::InvalidConfig("test support must lie inside the run".into()));
    }
    let dm1 = f64::from(run.config.d) - 1.0;
    let rw: Vec<f64> = trapezoid_weights(r).iter().zip(r).map(|(w, x)| w * x.powf(dm1)).collect();
    let grad2 = |f: &RadialField, hr: &[f64], i: usize| {
        let s = f.values[i].sin();
        let ang = if r[i] > 0.0 { dm1 * s * s / (r[i] * r[i]) } else { 0.0 };
        hr[i] * hr[i] + ang
    };

    let lhs = {
        let hr = first.gradient();
        (1..r.len()).map(|i| 0.5 * tests.tau(t_first, r[i]).0 * grad2(first, &hr, i) * rw[i]).sum::<f64>()
    };

    let times: Vec<f64> = snaps.iter().map(|s| s.time).collect();
    let tw = trapezoid_weights(&times);
    let mut rhs = 0.0;
    for n in 1..snaps.len() - 1 {
        let t = times[n];
        if t <= t_lo || t >= t_hi {
            continue;
        }
        let f = &snaps[n];
        let hr = f.gradient();
        let (tm, tp) = (times[n] - times[n - 1], times[n + 1] - times[n]);
        let mut slice = 0.0;
        for i in 1..r.len() {
            if r[i] <= r_lo || r[i] >= r_hi {
                continue;
            }
            let (um, u0, up) = (snaps[n - 1].values[i], f.values[i], snaps[n + 1].values[i]);
            let ht = (tm * tm * (up - u0) + tp * tp * (u0 - um)) / (tm * tp * (tm + tp));
            let (tau, tau_t, tau_r) = tests.tau(t, r[i]);
            let (q, q_r) = tests.q(t, r[i]);
            let g2 = grad2(f, &hr, i);
            let div = q_r + dm1 * q / r[i];
            let val = tau * ht * ht - 0.5 * (tau_t + div) * g2
                + tau_r * hr[i] * ht
                + q * ht * hr[i]
                + (q / r[i]) * g2
                + (q_r - q / r[i]) * hr[i] * hr[i];
            slice += val * rw[i];
        }
        rhs += slice * tw[n];
    }
    Ok(EnergyReport { lhs, rhs, margin: lhs - rhs })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub times: Vec<f64>,
    /// `sup r |h_r|`.
    pub r_grad: Vec<f64>,
    /// `sup (r + √t)|h_r| / (1 + log⁺(√t/r))`.
    pub parabolic_grad: Vec<f64>,
    /// `sup (t + r²)|h_t|`, centred in time (absent at the end snapshots).
    pub time_derivative: Vec<f64>,
    /// `sup |h(r) − h(r')| / |r − r'|^{1/2}` over neighbours with `r ≤ 2√t`.
    pub holder_half: Vec<f64>,
    /// Ratio of the late-third to early-third maximum of each monitor.
    pub trend: [f64; 4],
}

impl RegularityReport {
    /// Any monitor more than doubling between the first and last third.
    pub fn flags_growth(&self) -> bool {
        self.trend.iter().any(|&t| t > 2.0)
    }
}

fn third_ratio(v: &[f64]) -> f64 {
    let v: Vec<f64> = v.iter().copied().filter(|x| x.is_finite()).collect();
    if v.len() < 3 {
        return 1.0;
    }
    let k = v.len() / 3;
    let early = v[..k.max(1)].iter().fold(0.0f64, |a, &b| a.max(b));
    let late = v[v.len() - k.max(1)..].iter().fold(0.0f64, |a, &b| a.max(b));
    if early <= 1e-300 {
        if late <= 1e-300 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        late / early
    }
}

pub fn regularity_monitors(run: &Run) -> RegularityReport {
    let snaps = &run.snapshots;
    let r = snaps[0].r();
    let mut rep = RegularityReport {
        times: snaps.iter().map(|s| s.time).collect(),
        r_grad: Vec::new(),
        parabolic_grad: Vec::new(),
        time_derivative: Vec::new(),
        holder_half: Vec::new(),
        trend: [1.0; 4],
    };
    for (n, f) in snaps.iter().enumerate() {
        let g = gradient(r, &f.values);
        let st = f.time.max(0.0).sqrt();
        let (mut a, mut b, mut hol) = (0.0f64, 0.0f64, 0.0f64);
        for i in 1..r.len() {
            a = a.max(r[i] * g[i].abs());
            let log = if r[i] < st { 1.0 + (st / r[i]).ln() } else { 1.0 };
            b = b.max((r[i] + st) * g[i].abs() / log);
            if r[i] <= 2.0 * st.max(r[1]) {
                hol = hol.max((f.values[i] - f.values[i - 1]).abs() / (r[i] - r[i - 1]).sqrt());
            }
        }
        rep.r_grad.push(a);
        rep.parabolic_grad.push(b);
        rep.holder_half.push(hol);
        let td = if n > 0 && n + 1 < snaps.len() {
            let dt = snaps[n + 1].time - snaps[n - 1].time;
            (1..r.len())
                .map(|i| (f.time + r[i] * r[i]) * ((snaps[n + 1].values[i] - snaps[n - 1].values[i]) / dt).abs())
                .fold(0.0, f64::max)
        } else {
            f64::NAN
        };
        rep.time_derivative.push(td);
    }
    rep.trend = [
        third_ratio(&rep.r_grad),
        third_ratio(&rep.parabolic_grad),
        third_ratio(&rep.time_derivative),
        third_ratio(&rep.holder_half),
    ];
    rep
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaReport {
    /// `(t, sup_r θ)`.
    pub series: Vec<(f64, f64)>,
    /// `max_t sup θ(t) / sup θ(t₀)` (1 when both vanish).
    pub constant: f64,
}

/// `θ = (1 − cos(h₁ − h₂))/(cos h₁ cos h₂)` per snapshot for two runs valued
/// in `[0, π/2 − δ]`.
pub fn theta_stability(run1: &Run, run2: &Run, delta: f64) -> Result<ThetaReport, PdeError> {
    let top = FRAC_PI_2 - delta;
    let mut series = Vec::with_capacity(run1.snapshots.len());
    for (a, b) in run1.snapshots.iter().zip(&run2.snapshots) {
        let mut sup: f64 = 0.0;
        for (&x, &y) in a.values.iter().zip(&b.values) {
            if !(-1e-12..=top).contains(&x) || !(-1e-12..=top).contains(&y) {
                return Err(PdeError::DomainViolation { time: a.time });
            }
            sup = sup.max((1.0 - (x - y).cos()) / (x.cos() * y.cos()));
        }
        series.push((a.time, sup));
    }
    let base = series.first().map_or(0.0, |s| s.1);
    let peak = series.iter().fold(0.0f64, |m, s| m.max(s.1));
    let constant = if base > 0.0 { peak / base } else if peak > 0.0 { f64::INFINITY } else { 1.0 };
    Ok(ThetaReport { series, constant })
}
