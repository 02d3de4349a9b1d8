//! Ahead-of-execution compilation for tool-using web agents.
//!
//! Plans are small programs over a set of tool manifests. Each manifest
//! carries precondition/postcondition contracts over an abstract page state,
//! so a plan can be checked for state-flow and type errors before it runs,
//! then ranked by a loop-depth aware cost model. A Monte Carlo scheduler picks
//! between serial, parallel and hedged execution from per-element latency
//! distributions fitted to execution traces, and a discrete-event simulator
//! serves as the ground-truth oracle for both.
//!
//! The numeric core (`cost`, `distributions`, `metrics`, `scheduler`) is
//! generic over the scalar type. The aliases below pin the common choices.

pub mod cost;
pub mod distributions;
pub mod metrics;
pub mod planlang;
pub mod planner;
pub mod protocol;
pub mod rng;
pub mod scalar;
pub mod scheduler;
pub mod simulator;
pub mod traces;
pub mod validator;

pub use scalar::{CostScalar, Real};

/// Exact rational scalar for cost and Pass@k computations.
pub type Rational = num_rational::BigRational;

pub type CostModel64 = cost::CostModel<f64>;
pub type CostModel32 = cost::CostModel<f32>;
pub type ExactCostModel = cost::CostModel<Rational>;

pub type LatencyDistribution64 = distributions::LatencyDistribution<f64>;
pub type LatencyDistribution32 = distributions::LatencyDistribution<f32>;
pub type ElementStats64 = distributions::ElementStats<f64>;
pub type SchedulerCache64 = distributions::SchedulerCache<f64>;

pub type SchedulerConfig64 = scheduler::SchedulerConfig<f64>;
pub type StrategyEstimate64 = scheduler::StrategyEstimate<f64>;
pub type Selection64 = scheduler::Selection<f64>;

pub type PlannerConfig64 = planner::PlannerConfig<f64>;
pub type PlannerOutcome64 = planner::PlannerOutcome<f64>;

/// Version stamped into every JSON document this crate writes.
pub const SCHEMA_VERSION: u32 = 1;
