//! Likelihood-ratio test between two dyad-factorized models with a
//! supremum p-value over the composite null.
//!
//! For a null parameter `θ0` the rejection probability
//! `P(lr ≤ observed lr | θ0)` is estimated by simulating series from the null
//! (conditioning on the observed first network) and refitting both models
//! on each. A genetic search over `θ0` maximises this probability.

use serde::{Deserialize, Serialize};

use super::ga::{self, GAConfig};
use crate::error::{Result, TergmError};
use crate::estimator::{fit_design, FitConfig, FitResult};
use crate::model::{series_labels, ParameterVector, SeriesDesign, TransitionModel};
use crate::network::NetworkSeries;
use crate::rng;
use crate::sampler::{simulate_chain, SamplerConfig};
use crate::statistics::StatisticSet;

/// Largest share of failed refits a candidate may have and still count.
pub const MAX_FAILURE_RATE: f64 = 0.05;

#[derive(Clone, Debug)]
pub struct HypothesisSpec {
    pub null_stats: StatisticSet,
    pub alt_stats: StatisticSet,
}

impl HypothesisSpec {
    pub fn parse(null: &str, alt: &str) -> Result<Self> {
        Ok(HypothesisSpec {
            null_stats: StatisticSet::parse(null)?,
            alt_stats: StatisticSet::parse(alt)?,
        })
    }

    pub fn is_nested(&self) -> bool {
        let alt = self.alt_stats.names();
        self.null_stats.names().iter().all(|s| alt.contains(s))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub null_statistics: Vec<String>,
    pub alt_statistics: Vec<String>,
    /// Null over alternative maximised likelihood.
    pub lr_statistic: f64,
    pub log_lr: f64,
    pub p_value: f64,
    /// Null parameter attaining the reported p-value.
    pub p_value_theta: Vec<f64>,
    pub null_fit: FitResult,
    pub alt_fit: FitResult,
    /// Running best p-value per GA generation.
    pub ga_trace: Vec<f64>,
    pub candidates_evaluated: usize,
    /// Candidates dropped for exceeding the refit failure budget.
    pub invalid_candidates: usize,
    pub failed_sequences: usize,
    pub simulated_sequences: usize,
}

/// A refit is usable when it returns a finite likelihood and either
/// converged or stopped on a flagged separation, where the reported
/// likelihood approaches the supremum.
fn usable(fit: &Result<FitResult>) -> Option<f64> {
    match fit {
        Ok(f) if f.converged || f.has_separation() => f.log_likelihood.filter(|l| l.is_finite()),
        _ => None,
    }
}

/// `log L_null - log L_alt` at both maxima, or `None` if either refit failed.
fn log_ratio(
    spec: &HypothesisSpec,
    series: &NetworkSeries,
    labels: Option<&[usize]>,
    fit: &FitConfig,
) -> Option<f64> {
    let null = SeriesDesign::new(&spec.null_stats, series, labels)
        .map(|d| fit_design(&d, &spec.null_stats.names(), fit));
    let alt = SeriesDesign::new(&spec.alt_stats, series, labels)
        .map(|d| fit_design(&d, &spec.alt_stats.names(), fit));
    let l0 = usable(&null.and_then(|r| r))?;
    let l1 = usable(&alt.and_then(|r| r))?;
    Some(l0 - l1)
}

/// Outcome of simulating under one null parameter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CandidateEstimate {
    /// Share of usable sequences with `lr ≤` the observed value; NaN if the
    /// candidate exceeded the failure budget.
    pub frequency: f64,
    pub failures: usize,
    pub sequences: usize,
}

/// Estimates `P(lr ≤ exp(observed_log_lr) | θ0)` from `sequences` simulated series.
pub fn rejection_frequency(
    spec: &HypothesisSpec,
    series: &NetworkSeries,
    theta0: &[f64],
    observed_log_lr: f64,
    sequences: usize,
    fit: &FitConfig,
    seed: u64,
) -> Result<CandidateEstimate> {
    let labels = union_labels(spec, series)?;
    let model = TransitionModel::new(
        spec.null_stats.clone(),
        ParameterVector(theta0.to_vec()),
        labels.clone(),
    )?;
    let first = &series.networks()[0];
    let tol = 1e-9 * (1.0 + observed_log_lr.abs());
    let mut hits = 0usize;
    let mut failures = 0usize;
    for s in 0..sequences {
        let cfg = SamplerConfig::with_seed(rng::derive_seed(seed, &[s as u64]));
        let sim = simulate_chain(&model, first, series.len(), &cfg)?;
        match log_ratio(spec, &sim, labels.as_deref(), fit) {
            Some(l) if l <= observed_log_lr + tol => hits += 1,
            Some(_) => {}
            None => failures += 1,
        }
    }
    let valid = sequences - failures;
    let frequency = if failures as f64 > MAX_FAILURE_RATE * sequences as f64 || valid == 0 {
        f64::NAN
    } else {
        hits as f64 / valid as f64
    };
    Ok(CandidateEstimate {
        frequency,
        failures,
        sequences,
    })
}

fn union_labels(spec: &HypothesisSpec, series: &NetworkSeries) -> Result<Option<Vec<usize>>> {
    if spec.null_stats.requires_labels() || spec.alt_stats.requires_labels() {
        let needs = if spec.alt_stats.requires_labels() {
            &spec.alt_stats
        } else {
            &spec.null_stats
        };
        series_labels(needs, series)
    } else {
        Ok(None)
    }
}

/// Fits both models, forms the ratio and searches the null parameter space
/// for the largest rejection probability.
pub fn likelihood_ratio_test(
    spec: &HypothesisSpec,
    series: &NetworkSeries,
    ga_config: &GAConfig,
    fit: &FitConfig,
) -> Result<TestResult> {
    series.require_transitions()?;
    ga_config.validate()?;
    for stats in [&spec.null_stats, &spec.alt_stats] {
        if !stats.is_factorized() {
            return Err(TergmError::NotFactorized("likelihood-ratio test".into()));
        }
    }
    let labels = union_labels(spec, series)?;
    let null_fit = fit_design(
        &SeriesDesign::new(&spec.null_stats, series, labels.as_deref())?,
        &spec.null_stats.names(),
        fit,
    )?;
    let alt_fit = fit_design(
        &SeriesDesign::new(&spec.alt_stats, series, labels.as_deref())?,
        &spec.alt_stats.names(),
        fit,
    )?;
    let (l0, l1) = match (null_fit.log_likelihood, alt_fit.log_likelihood) {
        (Some(a), Some(b)) if a.is_finite() && b.is_finite() => (a, b),
        _ => {
            return Err(TergmError::Numerical(
                "observed-data fit has no finite likelihood".into(),
            ))
        }
    };
    if !(null_fit.converged || null_fit.has_separation())
        || !(alt_fit.converged || alt_fit.has_separation())
    {
        return Err(TergmError::Numerical(
            "observed-data fit did not converge".into(),
        ));
    }
    let log_lr = l0 - l1;

    let tally = std::sync::Mutex::new((0usize, 0usize));
    let outcome = ga::maximize(null_fit.theta_hat.as_slice(), ga_config, |theta0, seed| {
        match rejection_frequency(
            spec,
            series,
            theta0,
            log_lr,
            ga_config.sequences_per_candidate,
            fit,
            seed,
        ) {
            Ok(est) => {
                let mut t = tally.lock().expect("tally lock");
                t.0 += est.failures;
                t.1 += est.sequences;
                est.frequency
            }
            Err(_) => f64::NAN,
        }
    })?;
    let (failed_sequences, simulated_sequences) = tally.into_inner().expect("tally lock");
    if outcome.best_value.is_nan() {
        return Err(TergmError::Numerical(
            "every null candidate exceeded the refit failure budget".into(),
        ));
    }
    Ok(TestResult {
        null_statistics: spec.null_stats.names(),
        alt_statistics: spec.alt_stats.names(),
        lr_statistic: log_lr.exp(),
        log_lr,
        p_value: outcome.best_value,
        p_value_theta: outcome.best,
        null_fit,
        alt_fit,
        ga_trace: outcome.trace,
        candidates_evaluated: outcome.evaluated,
        invalid_candidates: outcome.invalid,
        failed_sequences,
        simulated_sequences,
    })
}
