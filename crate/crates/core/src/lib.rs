//! Density-based topology optimization of structures and compliant
//! mechanisms under design-dependent pressure loads.
//!
//! The pressure field comes from a Darcy flow problem with a drainage term
//! whose coefficients follow the material density, so the loaded boundary
//! moves with the design. Nodal loads are obtained from the pressure
//! gradient, and both the structural and the load sensitivities are
//! computed with adjoints. Designs are updated with MMA.

// `!(x > 0.0)` style checks are meant to reject NaN too; element kernels
// index several small arrays with one counter.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod config;
pub mod darcy;
pub mod driver;
pub mod elasticity;
pub mod error;
pub mod export;
pub mod filter;
pub mod library;
pub mod linalg;
pub mod load_transfer;
pub mod mesh;
pub mod optimizer;
pub mod sensitivity;

pub use analysis::{
    check_gradients, fd_oracle, Analysis, Counters, DesignGradients, Evaluator, GradientCheck, Problem,
};
pub use config::{load_config, LengthRule, ProblemSpec};
pub use darcy::{DarcyModel, DarcyParams, FlowAnalysis, PressureState};
pub use driver::{run, ConvergenceHistory, IterationRecord, RunCounters, RunOptions, RunResult};
pub use elasticity::{ElasticAnalysis, ElasticState, MaterialModel, ObjectiveKind, Spring};
pub use error::{Error, Result};
pub use export::{export, ExportFormat};
pub use filter::{DensityField, DensityFilter};
pub use load_transfer::ConversionMatrix;
pub use mesh::{BoundarySpec, Mesh, OutputPort, PressureSet, Region, Side};
pub use optimizer::{mma_update, MmaSettings, MmaState, MmaStep};
pub use sensitivity::{AdjointSet, GradientReport};
