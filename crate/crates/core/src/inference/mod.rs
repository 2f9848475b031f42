//! Hypothesis testing and label inference.

pub mod ga;
pub mod lrt;
pub mod mcgem;

pub use ga::{GAConfig, GaOutcome};
pub use lrt::{likelihood_ratio_test, HypothesisSpec, TestResult};
pub use mcgem::{majority_baseline, mcgem_classify, ClassificationResult, McgemConfig};
