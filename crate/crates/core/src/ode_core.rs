//! Adaptive Dormand–Prince 5(4) integration on the half-line and the series
//! launch at the regular-singular origin of the expander equation.
//!
//! The integrator is generic over the scalar type; everything above this
//! module works in `f64`.

use num_traits::{Float, FromPrimitive};
use std::fmt::Debug;
use thiserror::Error;

/// Scalar types the numerical kernels accept (`f32`, `f64`).
pub trait Scalar: Float + FromPrimitive + Debug + Send + Sync + 'static {
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable")
    }
}
impl Scalar for f32 {}
impl Scalar for f64 {}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("step size underflow at rho = {rho:e} (h = {h:e})")]
    StepUnderflow { rho: f64, h: f64 },
    #[error("non-finite state at rho = {rho:e}")]
    NonFiniteState { rho: f64 },
    #[error("step budget of {0} exhausted")]
    TooManySteps(usize),
    #[error("invalid integration request: {0}")]
    InvalidInput(&'static str),
}

/// Spatial dimension of the domain, `d >= 3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Dimension(u32);

impl Dimension {
    pub fn new(d: u32) -> Option<Self> {
        (d >= 3).then_some(Self(d))
    }

    pub fn get(self) -> u32 {
        self.0
    }

    /// `d - 1` as a float, the coefficient that appears everywhere.
    pub fn dm1(self) -> f64 {
        f64::from(self.0 - 1)
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.0)
    }
}

/// First-order system `y' = f(rho, y)`.
pub trait VectorField<T: Scalar> {
    fn dimension(&self) -> usize;
    fn eval(&self, rho: T, state: &[T], out: &mut [T]);
}

/// Adapter turning a closure into a [`VectorField`].
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F> FnField<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<T: Scalar, F: Fn(T, &[T], &mut [T])> VectorField<T> for FnField<F> {
    fn dimension(&self) -> usize {
        self.dim
    }
    fn eval(&self, rho: T, state: &[T], out: &mut [T]) {
        (self.f)(rho, state, out)
    }
}

/// Accepted steps of an integration, with slopes for Hermite dense output.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    dim: usize,
    nodes: Vec<T>,
    states: Vec<T>,
    slopes: Vec<T>,
    tolerance_used: T,
}

impl<T: Scalar> Trajectory<T> {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn tolerance_used(&self) -> T {
        self.tolerance_used
    }

    pub fn state(&self, i: usize) -> &[T] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn slope(&self, i: usize) -> &[T] {
        &self.slopes[i * self.dim..(i + 1) * self.dim]
    }

    /// Component `k` at every node.
    pub fn component(&self, k: usize) -> Vec<T> {
        (0..self.len()).map(|i| self.states[i * self.dim + k]).collect()
    }

    pub fn first_node(&self) -> T {
        self.nodes[0]
    }

    pub fn last_node(&self) -> T {
        self.nodes[self.len() - 1]
    }

    pub fn last_state(&self) -> &[T] {
        self.state(self.len() - 1)
    }

    /// Index `i` with `nodes[i] <= rho <= nodes[i+1]`, clamped to the span.
    fn bracket(&self, rho: T) -> usize {
        let n = self.nodes.len();
        if n < 2 || rho <= self.nodes[0] {
            return 0;
        }
        if rho >= self.nodes[n - 1] {
            return n - 2;
        }
        self.nodes.partition_point(|&x| x <= rho).saturating_sub(1).min(n - 2)
    }

    /// Cubic Hermite interpolation of all components; clamps outside the span.
    pub fn eval(&self, rho: T) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim];
        self.eval_into(rho, &mut out);
        out
    }

    pub fn eval_into(&self, rho: T, out: &mut [T]) {
        if self.len() == 1 {
            out.copy_from_slice(self.state(0));
            return;
        }
        let i = self.bracket(rho);
        let (x0, x1) = (self.nodes[i], self.nodes[i + 1]);
        let h = x1 - x0;
        let t = ((rho - x0) / h).max(T::zero()).min(T::one());
        let two = T::lit(2.0);
        let three = T::lit(3.0);
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = two * t3 - three * t2 + T::one();
        let h10 = t3 - two * t2 + t;
        let h01 = three * t2 - two * t3;
        let h11 = t3 - t2;
        let (y0, y1) = (self.state(i), self.state(i + 1));
        let (f0, f1) = (self.slope(i), self.slope(i + 1));
        for k in 0..self.dim {
            out[k] = h00 * y0[k] + h * h10 * f0[k] + h01 * y1[k] + h * h11 * f1[k];
        }
    }

    /// Build a trajectory from explicit samples (states and slopes flat, row-major).
    pub fn from_samples(dim: usize, nodes: Vec<T>, states: Vec<T>, slopes: Vec<T>, tol: T) -> Self {
        assert_eq!(states.len(), nodes.len() * dim);
        assert_eq!(slopes.len(), nodes.len() * dim);
        Self { dim, nodes, states, slopes, tolerance_used: tol }
    }

    fn reverse(&mut self) {
        let d = self.dim;
        let n = self.nodes.len();
        self.nodes.reverse();
        for buf in [&mut self.states, &mut self.slopes] {
            let mut out = Vec::with_capacity(buf.len());
            for i in (0..n).rev() {
                out.extend_from_slice(&buf[i * d..(i + 1) * d]);
            }
            *buf = out;
        }
    }
}

/// Step-control knobs; `Default` gives the settings used by the profile solver.
#[derive(Debug, Clone, Copy)]
pub struct IntegratorOptions<T> {
    pub tol: T,
    /// Absolute error floor added to the relative scale.
    pub abs_floor: T,
    pub initial_step: Option<T>,
    pub max_step: Option<T>,
    pub max_steps: usize,
}

impl<T: Scalar> IntegratorOptions<T> {
    pub fn with_tol(tol: T) -> Self {
        Self { tol, abs_floor: T::lit(1e-14), initial_step: None, max_step: None, max_steps: 2_000_000 }
    }
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrate forward over `rho_span = (a, b)` with `0 < a < b`.
pub fn integrate_adaptive<T: Scalar, F: VectorField<T> + ?Sized>(
    field: &F,
    state0: &[T],
    rho_span: (T, T),
    tol: T,
) -> Result<Trajectory<T>, OdeError> {
    let (a, b) = rho_span;
    if !(a > T::zero() && a < b) {
        return Err(OdeError::InvalidInput("need 0 < rho_a < rho_b"));
    }
    if !(tol > T::zero()) {
        return Err(OdeError::InvalidInput("tol must be positive"));
    }
    integrate_with(field, state0, rho_span, &IntegratorOptions::with_tol(tol))
}

/// General driver: the span may run in either direction. Nodes of the result
/// are always returned in increasing order.
pub fn integrate_with<T: Scalar, F: VectorField<T> + ?Sized>(
    field: &F,
    state0: &[T],
    rho_span: (T, T),
    opts: &IntegratorOptions<T>,
) -> Result<Trajectory<T>, OdeError> {
    let n = field.dimension();
    if state0.len() != n {
        return Err(OdeError::InvalidInput("state length does not match field dimension"));
    }
    let (a, b) = rho_span;
    if a == b {
        return Err(OdeError::InvalidInput("empty span"));
    }
    let dir = if b > a { T::one() } else { -T::one() };
    let span = (b - a).abs();
    let eps = T::epsilon();

    let mut k: Vec<Vec<T>> = vec![vec![T::zero(); n]; 7];
    let mut y = state0.to_vec();
    let mut x = a;
    field.eval(x, &y, &mut k[0]);
    check_finite(x, &k[0])?;

    let mut traj = Trajectory {
        dim: n,
        nodes: vec![a],
        states: y.clone(),
        slopes: k[0].clone(),
        tolerance_used: opts.tol,
    };

    let scale = |yi: T, yn: T| opts.abs_floor + opts.tol * yi.abs().max(yn.abs());
    let max_step = opts.max_step.unwrap_or(span);
    let mut h = match opts.initial_step {
        Some(h0) => h0.abs().min(span),
        None => initial_step(field, x, &y, &k[0], dir, opts, span),
    };

    let safe = T::lit(0.9);
    let beta = T::lit(0.04);
    let expo1 = T::lit(0.2) - beta * T::lit(0.75);
    let fac_min = T::lit(0.2);
    let fac_max = T::lit(10.0);
    let mut err_old = T::lit(1e-4);
    let mut rejected = false;
    let mut ytmp = vec![T::zero(); n];
    let mut ynew = vec![T::zero(); n];

    for _ in 0..opts.max_steps {
        let remaining = (b - x) * dir;
        if remaining <= T::zero() {
            break;
        }
        h = h.min(max_step);
        let last = h >= remaining * (T::one() - T::lit(1e-12));
        if last {
            h = remaining;
        }
        if h <= T::lit(16.0) * eps * x.abs().max(T::min_positive_value()) {
            return Err(OdeError::StepUnderflow { rho: x.to_f64().unwrap_or(f64::NAN), h: h.to_f64().unwrap_or(0.0) });
        }
        let hs = h * dir;
        for s in 1..6 {
            for i in 0..n {
                let mut acc = y[i];
                for j in 0..s {
                    let aij = A[s][j];
                    if aij != 0.0 {
                        acc = acc + hs * T::lit(aij) * k[j][i];
                    }
                }
                ytmp[i] = acc;
            }
            let xs = x + T::lit(C[s]) * hs;
            field.eval(xs, &ytmp, &mut k[s]);
        }
        // Stage 6 is evaluated at the fifth-order solution (FSAL).
        for i in 0..n {
            let mut acc = y[i];
            for j in 0..6 {
                let aij = A[6][j];
                if aij != 0.0 {
                    acc = acc + hs * T::lit(aij) * k[j][i];
                }
            }
            ynew[i] = acc;
        }
        let xnew = if last { b } else { x + hs };
        field.eval(xnew, &ynew, &mut k[6]);

        let mut err = T::zero();
        let mut finite = true;
        for i in 0..n {
            let mut e = T::zero();
            for (s, &es) in E.iter().enumerate() {
                if es != 0.0 {
                    e = e + T::lit(es) * k[s][i];
                }
            }
            let e = (hs * e).abs() / scale(y[i], ynew[i]);
            if !e.is_finite() || !ynew[i].is_finite() || !k[6][i].is_finite() {
                finite = false;
            }
            err = err.max(e);
        }
        if !finite {
            // Treat a blow-up inside the step as a rejection; repeated failure is reported.
            h = h * T::lit(0.25);
            rejected = true;
            if h <= T::lit(16.0) * eps * x.abs() {
                return Err(OdeError::NonFiniteState { rho: x.to_f64().unwrap_or(f64::NAN) });
            }
            continue;
        }

        let fac11 = err.powf(expo1);
        let mut fac = fac11 / err_old.powf(beta);
        fac = (fac / safe).max(T::one() / fac_max).min(T::one() / fac_min);
        let hnew = h / fac;

        if err <= T::one() {
            err_old = err.max(T::lit(1e-4));
            x = xnew;
            y.copy_from_slice(&ynew);
            let k6 = k[6].clone();
            k[0].copy_from_slice(&k6);
            traj.nodes.push(x);
            traj.states.extend_from_slice(&y);
            traj.slopes.extend_from_slice(&k[0]);
            h = if rejected { hnew.min(h) } else { hnew };
            rejected = false;
            if last {
                break;
            }
        } else {
            h = h / (T::one() / fac_min).min(fac11 / safe);
            rejected = true;
        }
    }
    if (b - x) * dir > T::zero() {
        return Err(OdeError::TooManySteps(opts.max_steps));
    }
    if dir < T::zero() {
        traj.reverse();
    }
    Ok(traj)
}

fn check_finite<T: Scalar>(x: T, v: &[T]) -> Result<(), OdeError> {
    if v.iter().all(|z| z.is_finite()) {
        Ok(())
    } else {
        Err(OdeError::NonFiniteState { rho: x.to_f64().unwrap_or(f64::NAN) })
    }
}

/// Starting step after Hairer–Nørsett–Wanner, with an extra cap at a tenth of
/// the distance from the origin (the fields here carry 1/rho coefficients).
fn initial_step<T: Scalar, F: VectorField<T> + ?Sized>(
    field: &F,
    x: T,
    y: &[T],
    f0: &[T],
    dir: T,
    opts: &IntegratorOptions<T>,
    span: T,
) -> T {
    let n = y.len();
    let sc: Vec<T> = y.iter().map(|v| opts.abs_floor + opts.tol * v.abs()).collect();
    let norm = |v: &[T]| {
        let s = v.iter().zip(&sc).fold(T::zero(), |acc, (a, s)| acc + (*a / *s).powi(2));
        (s / T::from_usize(n).unwrap()).sqrt()
    };
    let d0 = norm(y);
    let d1 = norm(f0);
    let tiny = T::lit(1e-10);
    let mut h0 = if d0 < tiny || d1 < tiny { T::lit(1e-6) } else { T::lit(0.01) * d0 / d1 };
    h0 = h0.min(span);
    let y1: Vec<T> = (0..n).map(|i| y[i] + dir * h0 * f0[i]).collect();
    let mut f1 = vec![T::zero(); n];
    field.eval(x + dir * h0, &y1, &mut f1);
    let diff: Vec<T> = (0..n).map(|i| f1[i] - f0[i]).collect();
    let d2 = norm(&diff) / h0;
    let m = d1.max(d2);
    let h1 = if m <= T::lit(1e-15) {
        (h0 * T::lit(1e-3)).max(T::lit(1e-6))
    } else {
        (T::lit(0.01) / m).powf(T::lit(0.2))
    };
    let mut h = (T::lit(100.0) * h0).min(h1).min(span);
    if x.abs() > T::zero() {
        h = h.min(T::lit(0.1) * x.abs());
    }
    h
}

/// Which pole the profile emanates from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Pole {
    North,
    South,
}

/// Truncated power series of the profile at `rho0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesLaunch<T> {
    pub rho0: T,
    pub order: u32,
    pub value: T,
    pub derivative: T,
}

/// Odd Taylor coefficients `(a, b)` of `psi = alpha*rho + a*rho^3 + b*rho^5`.
pub fn series_coefficients<T: Scalar>(d: Dimension, alpha: T) -> (T, T) {
    let dm1 = T::lit(d.dm1());
    let df = T::lit(d.as_f64());
    let a = -(alpha / T::lit(2.0) + T::lit(2.0 / 3.0) * dm1 * alpha.powi(3)) / (T::lit(2.0) * df + T::lit(4.0));
    let b = -(T::lit(1.5) * a + dm1 * (T::lit(2.0) * alpha * alpha * a - T::lit(2.0 / 15.0) * alpha.powi(5)))
        / (T::lit(4.0) * df + T::lit(16.0));
    (a, b)
}

/// Launch data for the expander profile near the origin.
///
/// # Panics
/// If `order` is not 3 or 5, or `rho0` is outside `(0, 0.1]`.
pub fn series_launch<T: Scalar>(d: Dimension, alpha: T, pole: Pole, rho0: T, order: u32) -> SeriesLaunch<T> {
    assert!(order == 3 || order == 5, "series order must be 3 or 5");
    assert!(rho0 > T::zero() && rho0 <= T::lit(0.1), "rho0 must lie in (0, 0.1]");
    let (a, b) = series_coefficients(d, alpha);
    let r = rho0;
    let (mut value, mut derivative) = (alpha * r + a * r.powi(3), alpha + T::lit(3.0) * a * r * r);
    if order == 5 {
        value = value + b * r.powi(5);
        derivative = derivative + T::lit(5.0) * b * r.powi(4);
    }
    if pole == Pole::South {
        value = T::lit(std::f64::consts::PI) - value;
        derivative = -derivative;
    }
    SeriesLaunch { rho0, order, value, derivative }
}

/// Residual of the expander equation at `rho` for the given `(psi, psi', psi'')`.
pub fn expander_residual(d: Dimension, rho: f64, psi: f64, dpsi: f64, ddpsi: f64) -> f64 {
    let dm1 = d.dm1();
    ddpsi + (dm1 / rho + rho / 2.0) * dpsi - dm1 / (2.0 * rho * rho) * (2.0 * psi).sin()
}

/// Expander equation as a first-order system on `(psi, psi')`.
pub fn expander_field(d: Dimension) -> impl VectorField<f64> + Sync {
    let dm1 = d.dm1();
    FnField::new(2, move |rho: f64, y: &[f64], out: &mut [f64]| {
        out[0] = y[1];
        out[1] = -(dm1 / rho + 0.5 * rho) * y[1] + dm1 / (2.0 * rho * rho) * (2.0 * y[0]).sin();
    })
}
