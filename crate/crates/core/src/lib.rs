//! Disjoint and sliding blocks estimators of cluster indices for regularly
//! varying series, the internal/boundary cluster decomposition of their
//! difference, and a seeded Monte Carlo harness for rate experiments.

pub mod analytic;
pub mod blocks;
pub mod cli;
pub mod cluster;
pub mod error;
pub mod expansion;
pub mod harness;
pub mod models;
pub mod reduce;
pub mod series_io;
pub mod verify;

pub use blocks::{disjoint_stat, empirical_cluster_measure, sliding_stat, BlockConfig, BlockStatistic, WSource};
pub use cluster::{
    eval_functional, exceedance_pattern, induced_bc, induced_ic, BcMode, ClusterFunctional, ExceedancePattern,
    FunctionalRegistry,
};
pub use error::{Error, Result};
pub use models::{derive_seed, sample_tail_and_z, MagnitudeSeries, ModelSpec, TailPath, TailSampler};
