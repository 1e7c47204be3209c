//! Decision-diagram Benders decomposition for the stochastic generalized
//! unsplittable flow problem.

pub mod benders;
pub mod diagram;
pub mod engine;
pub mod genio;
pub mod model;
pub mod oracle;
pub mod report;
pub mod simplexlp;
pub mod transform;
