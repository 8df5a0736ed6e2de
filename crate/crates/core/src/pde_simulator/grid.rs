//! Radial grids and the finite-volume radial Laplacian.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Spacing {
    Uniform,
    /// `r(ξ) = R (e^{βξ} − 1)/(e^β − 1)` on a uniform `ξ` grid.
    Graded { stretch: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    nodes: Vec<f64>,
    pub spacing: Spacing,
}

impl RadialGrid {
    pub fn uniform(r_max: f64, m: usize) -> Self {
        assert!(r_max > 0.0 && m >= 2);
        let nodes = (0..=m).map(|i| r_max * i as f64 / m as f64).collect();
        Self { nodes, spacing: Spacing::Uniform }
    }

    /// Graded grid whose first interior node sits at `r1`.
    ///
    /// # Panics
    /// If `r1` is not below the uniform spacing `r_max/m`.
    pub fn graded(r_max: f64, m: usize, r1: f64) -> Self {
        assert!(r1 > 0.0 && r1 < r_max / m as f64, "graded grid needs r1 < r_max/m");
        let first = |beta: f64| ((beta / m as f64).exp_m1()) / beta.exp_m1();
        let target = r1 / r_max;
        let (mut lo, mut hi) = (1e-8, 1.0);
        while first(hi) > target {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if first(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Self::with_stretch(r_max, m, 0.5 * (lo + hi))
    }

    pub fn with_stretch(r_max: f64, m: usize, stretch: f64) -> Self {
        assert!(r_max > 0.0 && m >= 2 && stretch > 0.0);
        let den = stretch.exp_m1();
        let nodes = (0..=m).map(|i| r_max * (stretch * i as f64 / m as f64).exp_m1() / den).collect();
        Self { nodes, spacing: Spacing::Graded { stretch } }
    }

    /// Same mapping with twice as many cells; every old node is kept.
    pub fn refined(&self) -> Self {
        let m = 2 * self.cells();
        match self.spacing {
            Spacing::Uniform => Self::uniform(self.r_max(), m),
            Spacing::Graded { stretch } => Self::with_stretch(self.r_max(), m, stretch),
        }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn cells(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn r_max(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    pub fn r1(&self) -> f64 {
        self.nodes[1]
    }
}

/// Vertex-centred finite-volume discretization of `r^{1−d}(r^{d−1} u_r)_r`.
///
/// Row `i` reads `lower[i] (u[i-1] − u[i]) + upper[i] (u[i+1] − u[i])`; the
/// outer face carries no flux (boundary terms are added by the caller).
#[derive(Debug, Clone)]
pub struct RadialLaplacian {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Dual-cell volumes `∫ r^{d−1} dr`.
    pub volume: Vec<f64>,
    /// Discrete replacement for `(d−1)/r²`, exact on `u = r`.
    pub inv_r2: Vec<f64>,
    /// `r_M^{d−1}/V_M`, the outer face area over the last volume.
    pub outer_face: f64,
}

impl RadialLaplacian {
    pub fn new(grid: &RadialGrid, d: u32) -> Self {
        let r = grid.nodes();
        let n = r.len();
        let df = f64::from(d);
        let face = |i: usize| 0.5 * (r[i] + r[i + 1]);
        let mut volume = vec![0.0; n];
        let mut lower = vec![0.0; n];
        let mut upper = vec![0.0; n];
        for (i, vol) in volume.iter_mut().enumerate() {
            let left = if i == 0 { 0.0 } else { face(i - 1) };
            let right = if i + 1 == n { r[n - 1] } else { face(i) };
            *vol = (right.powf(df) - left.powf(df)) / df;
        }
        for i in 0..n - 1 {
            let k = face(i).powf(df - 1.0) / (r[i + 1] - r[i]);
            upper[i] = k / volume[i];
            lower[i + 1] = k / volume[i + 1];
        }
        let mut inv_r2 = vec![0.0; n];
        for i in 1..n - 1 {
            inv_r2[i] = (face(i).powf(df - 1.0) - face(i - 1).powf(df - 1.0)) / (volume[i] * r[i]);
        }
        inv_r2[n - 1] = (df - 1.0) / (r[n - 1] * r[n - 1]);
        inv_r2[0] = inv_r2[1];
        let outer_face = r[n - 1].powf(df - 1.0) / volume[n - 1];
        Self { lower, upper, volume, inv_r2, outer_face }
    }

    pub fn apply(&self, u: &[f64], i: usize) -> f64 {
        let mut acc = 0.0;
        if i > 0 {
            acc += self.lower[i] * (u[i - 1] - u[i]);
        }
        if i + 1 < u.len() {
            acc += self.upper[i] * (u[i + 1] - u[i]);
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graded_hits_first_node_and_refines_nested() {
        let g = RadialGrid::graded(10.0, 200, 0.01);
        assert!((g.r1() - 0.01).abs() < 1e-9);
        assert!(g.nodes().windows(2).all(|w| w[0] < w[1]));
        let f = g.refined();
        for i in 0..g.len() {
            assert!((f.nodes()[2 * i] - g.nodes()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn laplacian_exact_on_quadratics_uniform() {
        let g = RadialGrid::uniform(1.0, 20);
        let lap = RadialLaplacian::new(&g, 3);
        let u: Vec<f64> = g.nodes().iter().map(|r| r * r).collect();
        for i in 0..20 {
            assert!((lap.apply(&u, i) - 6.0).abs() < 1e-9, "{i}");
        }
    }

    #[test]
    fn inverse_square_is_consistent() {
        let g = RadialGrid::graded(5.0, 400, 1e-3);
        let lap = RadialLaplacian::new(&g, 4);
        for i in (100..399).step_by(37) {
            let r = g.nodes()[i];
            assert!(((lap.inv_r2[i] * r * r) / 3.0 - 1.0).abs() < 1e-3);
        }
    }
}
