//! Finite-volume simulation of the corotational heat flow, in physical and
//! self-similar variables, plus the numerical checks run on its output.

mod branch;
mod checks;
mod flow;
mod grid;
mod selfsim;
mod supersolution;
mod tridiag;

pub use branch::{
    branch_profile, closeness_zeta, cutoff_chi, make_branch_data, nonuniqueness_pair, separation, BranchData,
    NonuniquenessPair,
};
pub use checks::{
    check_comparison, energy_inequality_check, hardy_constant, regularity_monitors, sandwich_violation,
    theta_stability, BumpTest, EnergyReport, RegularityReport, TestFunctionPair, ThetaReport,
};
pub use flow::{
    evolve, step, step_by, step_explicit, Nonlinearity, OriginBc, OuterBc, RadialField, Run, SimConfig, SnapshotDiagnostics,
    TimeGrid,
};
pub use grid::{RadialGrid, RadialLaplacian, Spacing};
pub use selfsim::{evolve_selfsimilar, SelfSimConfig, SelfSimMode, SelfSimRun};
pub use supersolution::{
    find_supersolution, smooth_step, supersolution_residual, SupersolutionParams, SupersolutionSearch,
};
pub use tridiag::solve_tridiagonal;


use thiserror::Error;

use crate::profile_solver::ProfileError;

#[derive(Debug, Error)]
pub enum PdeError {
    #[error("tridiagonal solve hit a zero pivot")]
    LinearSolveFailure,
    #[error("explicit step dt = {dt} exceeds the stability limit {limit}")]
    CflViolation { dt: f64, limit: f64 },
    #[error("non-finite value in the state")]
    NonFinite,
    #[error("value {value} at node {node} left the sanity window [-pi, 2pi]")]
    OutOfWindow { node: usize, value: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("limit {ell} is outside the admissible range of the {branch} branch")]
    RangeError { ell: f64, branch: &'static str },
    #[error("test function support reaches below the first grid node")]
    UnresolvedRegion,
    #[error("run leaves the admissible range at t = {time}")]
    DomainViolation { time: f64 },
    #[error(transparent)]
    Profile(#[from] ProfileError),
}
