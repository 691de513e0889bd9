//! Building blocks for a desk-scale chest X-ray vision-language pipeline.
//!
//! * [`corpus`] turns heterogeneous source annotations into instruction
//!   triplets and ships a synthetic data generator.
//! * [`metrics`] holds every scoring function and statistical test.
//! * [`bench`] assembles the evaluation tasks, runs a [`bench::Generator`]
//!   over them and writes result tables.

pub mod bbox;
pub mod bench;
pub mod corpus;
pub mod metrics;
pub mod seed;

pub use bbox::BBox;
