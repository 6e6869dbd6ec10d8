//! Finite-difference solvers for fully nonlinear obstacle problems and
//! impulse-control quasi-variational inequalities on boxes, with probes that
//! measure the regularity of the computed solutions.
//!
//! All numerics are generic over the scalar (`f32` or `f64`); the aliases
//! below fix the common choices.

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod elliptic;
pub mod grid;
pub mod intervention;
pub mod obstacle;
pub mod penalty;
pub mod probe;
pub mod qvi;
pub mod scalar;

pub use elliptic::{
    apply_operator, complementarity_residual, discrete_hessian, eigen_decomposition, interior_sup,
    ObstacleSide, OperatorError, OperatorKind, OperatorSpec, SymMat,
};
pub use grid::{
    distance_to_set, nearest_in_set, Grid, GridError, GridFunction, NearestMap, NodeSet,
};
pub use intervention::{
    argmin_set, cone_min, intervention_operator, separation_delta, CostFunction, InterventionError,
    Separation,
};
pub use obstacle::{
    solve_obstacle, solve_obstacle_from, solve_unconstrained, ObstacleProblem, SolveError,
    SolveReport, SolverOptions,
};
pub use penalty::{
    epsilon_sweep, mollify_obstacle, solve_penalized, DecayPoint, DecayReport, PenaltyError,
    PenaltyFamily, PenaltyKind, SweepSetup,
};
pub use probe::{
    contact_oscillation, extract_contact_set, growth_constant, holder_seminorm, second_increment,
    semiconcavity_modulus, ContactSet, Direction, HessianField, ModulusFamily, ProbeError,
    ProbeReport,
};
pub use qvi::{check_qvi, solve_qvi, QviCheck, QviError, QviOptions, QviProblem, QviReport};
pub use scalar::Real;

pub type Grid64 = Grid<f64>;
pub type GridFunction64 = GridFunction<f64>;
pub type NodeSet64 = NodeSet<f64>;
pub type OperatorSpec64 = OperatorSpec<f64>;
pub type SolverOptions64 = SolverOptions<f64>;
pub type ObstacleProblem64 = ObstacleProblem<f64>;
pub type CostFunction64 = CostFunction<f64>;
pub type QviProblem64 = QviProblem<f64>;
pub type PenaltyFamily64 = PenaltyFamily<f64>;

pub type Grid32 = Grid<f32>;
pub type GridFunction32 = GridFunction<f32>;
pub type NodeSet32 = NodeSet<f32>;
pub type OperatorSpec32 = OperatorSpec<f32>;
pub type SolverOptions32 = SolverOptions<f32>;
pub type ObstacleProblem32 = ObstacleProblem<f32>;
pub type CostFunction32 = CostFunction<f32>;
pub type QviProblem32 = QviProblem<f32>;
pub type PenaltyFamily32 = PenaltyFamily<f32>;
