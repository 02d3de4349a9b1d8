//! Seeded workloads for end-to-end checks: the worked-example fixtures, a
//! cost-rank corpus, contract fuzz plans with call-swap mutants, and a
//! scheduler agreement suite. Every generator is a pure function of its seed.

pub mod corpus;
pub mod fixtures;
pub mod fuzz;
pub mod stats;
pub mod suite;
