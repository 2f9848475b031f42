//! Temporal exponential random graph models for sequences of directed networks.

pub mod degeneracy;
pub mod error;
pub mod estimator;
pub mod evaluation;
pub mod inference;
pub mod ingest;
pub mod model;
pub mod network;
pub mod rng;
pub mod sampler;
pub mod statistics;

pub use degeneracy::{
    degeneracy_bounds, entropy_bruteforce, entropy_edgecount, BoundOptions, DegeneracyReport,
    InitialDistribution,
};
pub use error::{Result, TergmError};
pub use estimator::{fit_exact, fit_sampled, FitConfig, FitResult, InitScheme};
pub use evaluation::{
    crossval_assess, recovery_experiment, CrossValConfig, FitAssessment, RecoveryConfig,
    RecoveryReport,
};
pub use inference::{
    likelihood_ratio_test, mcgem_classify, ClassificationResult, GAConfig, HypothesisSpec,
    McgemConfig, TestResult,
};
pub use model::{ParameterVector, TransitionModel};
pub use network::{Adjacency, Network, NetworkSeries, NodeAttributes};
pub use sampler::{sample_initial, sample_transition, simulate_chain, InitialLaw, SamplerConfig};
pub use statistics::{CustomStatistic, DyadScores, Statistic, StatisticSet, Term};
