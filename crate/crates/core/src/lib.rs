//! Noiseless inverse optimization as scenario programs.

pub mod bounds;
pub mod error;
pub mod estimators;
pub mod evaluation;
pub mod instances;
pub mod linalg;
pub mod losses;
pub mod model;
pub mod rng;
pub mod solvers;

pub use error::{Error, Result};
pub use model::{
    delta_features, greedy_action_set, tie_break, Action, ActionSpace, Context, Dataset, Demonstration, GreedySet,
    Instance, Parameter, Slice, TieBreak, DEFAULT_TIE_TOL,
};
pub use estimators::{fit, EstimatorConfig, EstimatorKind, EstimatorResult, Objective};
pub use solvers::{ConstraintSystem, SolveReport, SolveStatus};
