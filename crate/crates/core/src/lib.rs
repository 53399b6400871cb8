//! Distribution property testers built from one robust l2 closeness tester
//! and the split-distribution reduction.
//!
//! Every tester only sees its inputs through [`dist_core::SampleOracle`].
//! Explicit distributions exist for instance generation, exact distances
//! and validation.

pub mod dist_core;
pub mod error;
pub mod hard_instances;
pub mod harness;
pub mod l2_engine;
pub mod rng;
pub mod split_reduction;
pub mod testers;

pub use error::{Error, Result};
