//! Exact distributions, seeded sampling, Poissonization and exact distances.

mod format;
mod metrics;
mod oracle;
mod sampling;
mod types;

pub use format::{
    read_distribution, read_joint, read_joint_samples, read_labeled_samples, read_samples,
    read_tuple_samples, write_distribution, write_joint, write_joint_samples,
    write_labeled_samples, write_samples,
};
pub use metrics::{
    chi_sq, condition, hellinger_sq, l1_distance, l23_quasinorm, l2_distance, l2_norm, restrict,
};
pub use oracle::{poissonized_oracle_counts, DistributionOracle, ReplayOracle, SampleOracle};
pub use sampling::{ln_factorial, poisson, poissonized_counts, sample, AliasTable};
pub use types::{
    CountVector, ExplicitDistribution, JointDistribution, MassVector, PseudoDistribution,
};
