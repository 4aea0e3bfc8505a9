//! Flexible inverted pendulum on a cart: constrained Euler–Lagrange model,
//! its reduction to the length-constraint manifold, and an energy-shaping
//! controller built from partial feedback linearization and a PID on
//! passive outputs.

pub mod analysis;
pub mod control;
pub mod error;
pub mod model;
pub mod params;
pub mod quadrature;
pub mod reduced;
pub mod sim;

pub use analysis::{
    eigenvalues, equilibria_scan, level_grid, linearize, lyapunov_audit, Equilibrium,
    EquilibriumSet, LevelGrid, LinearizedSystem, LyapunovReport,
};
pub use control::{
    check_gains, ConditionCheck, ControllerState, FeasibilityReport, Gains, PassiveOutputs,
};
pub use error::{Error, Result};
pub use model::{FullCoeffs, FullMatrices, ModeShapeEval, Model};
pub use params::{PhysicalParams, THETA_MAX, THETA_MIN};
pub use reduced::{CoefficientSource, LookupRecord, LookupTable, ManifoldSample, ReducedCoeffs};
pub use sim::{
    cross_check_pfl, integrate_closed_loop, Abort, ClosedLoop, Form, InitialConditions,
    ReducedState, Trajectory, TrajectorySample,
};
