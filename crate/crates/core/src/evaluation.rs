//! Experiment harnesses: parameter recovery on simulated series, and
//! leave-one-transition-out predictive checks with percentile bands.

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TergmError};
use crate::estimator::{fit_design, fit_exact, fit_sampled, random_init, FitConfig, InitScheme};
use crate::model::{
    series_labels, EdgeProbabilities, ParameterVector, SeriesDesign, TransitionModel,
};
use crate::network::{dyads, NetworkSeries};
use crate::rng;
use crate::sampler::{sample_initial, simulate_chain, InitialLaw, SamplerConfig};
use crate::statistics::{ChangeScoreTable, StatisticSet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecoveryConfig {
    pub n: usize,
    /// Number of transitions; the series holds one more network.
    pub transitions: usize,
    pub seeds: usize,
    pub seed: u64,
    /// Fixed true parameter over `{D, S, R, T}`; drawn per seed when absent.
    pub theta: Option<Vec<f64>>,
    pub initial_law: InitialLaw,
    /// Sweeps for self-ERGM initial networks.
    pub initial_burn_in: usize,
    pub run_sampled: bool,
    pub exact_fit: FitConfig,
    pub sampled_fit: FitConfig,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        RecoveryConfig {
            n: 100,
            transitions: 11,
            seeds: 10,
            seed: 0,
            theta: None,
            initial_law: InitialLaw::SelfErgm,
            initial_burn_in: 1000,
            run_sampled: true,
            exact_fit: FitConfig::default(),
            sampled_fit: FitConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRecord {
    pub seed: u64,
    pub true_theta: Vec<f64>,
    pub exact_theta: Option<Vec<f64>>,
    pub sampled_theta: Option<Vec<f64>>,
    pub loss_exact_vs_truth: Option<f64>,
    pub loss_sampled_vs_truth: Option<f64>,
    pub loss_sampled_vs_exact: Option<f64>,
    pub exact_iterations: Option<usize>,
    pub sampled_iterations: Option<usize>,
    pub exact_converged: bool,
    pub sampled_converged: bool,
    pub initial_density: f64,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub statistics: Vec<String>,
    pub n: usize,
    pub transitions: usize,
    pub records: Vec<RecoveryRecord>,
    pub mean_loss_exact_vs_truth: Option<f64>,
    pub mean_loss_sampled_vs_truth: Option<f64>,
    pub mean_loss_sampled_vs_exact: Option<f64>,
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn recovery_seed(config: &RecoveryConfig, stats: &StatisticSet, index: usize) -> RecoveryRecord {
    let seed = rng::derive_seed(config.seed, &[index as u64]);
    let mut record = RecoveryRecord {
        seed,
        true_theta: Vec::new(),
        exact_theta: None,
        sampled_theta: None,
        loss_exact_vs_truth: None,
        loss_sampled_vs_truth: None,
        loss_sampled_vs_exact: None,
        exact_iterations: None,
        sampled_iterations: None,
        exact_converged: false,
        sampled_converged: false,
        initial_density: 0.0,
        error: None,
    };
    let run = |record: &mut RecoveryRecord| -> Result<()> {
        let truth = match &config.theta {
            Some(t) => ParameterVector(t.clone()),
            None => random_init(stats, InitScheme::Recovery, seed)?,
        };
        record.true_theta = truth.0.clone();
        let sampler = SamplerConfig {
            initial_burn_in: config.initial_burn_in,
            ..SamplerConfig::with_seed(seed)
        };
        let first = sample_initial(
            stats,
            truth.as_slice(),
            config.n,
            None,
            &sampler,
            config.initial_law,
        )?;
        record.initial_density = first.density();
        let model = TransitionModel::new(stats.clone(), truth.clone(), None)?;
        let series = simulate_chain(&model, &first, config.transitions + 1, &sampler)?;

        let exact = fit_exact(stats, &series, &config.exact_fit)?;
        record.exact_converged = exact.converged;
        record.exact_iterations = Some(exact.iterations);
        record.loss_exact_vs_truth = Some(exact.theta_hat.distance(&truth));
        record.exact_theta = Some(exact.theta_hat.0.clone());
        if config.run_sampled {
            let cfg = FitConfig {
                seed: rng::derive_seed(seed, &[1]),
                ..config.sampled_fit.clone()
            };
            let sampled = fit_sampled(stats, &series, &cfg)?;
            record.sampled_converged = sampled.converged;
            record.sampled_iterations = Some(sampled.iterations);
            record.loss_sampled_vs_truth = Some(sampled.theta_hat.distance(&truth));
            record.loss_sampled_vs_exact = Some(sampled.theta_hat.distance(&exact.theta_hat));
            record.sampled_theta = Some(sampled.theta_hat.0);
        }
        Ok(())
    };
    if let Err(e) = run(&mut record) {
        record.error = Some(e.to_string());
    }
    record
}

/// Simulates `seeds` series from `{D, S, R, T}` models and fits each both ways.
/// A failing seed is recorded with its error; the others proceed.
pub fn recovery_experiment(config: &RecoveryConfig) -> Result<RecoveryReport> {
    if config.n < 3 || config.transitions == 0 || config.seeds == 0 {
        return Err(TergmError::InvalidConfig(
            "recovery needs n >= 3, at least one transition and one seed".into(),
        ));
    }
    let stats = StatisticSet::parse("D,S,R,T")?;
    if let Some(t) = &config.theta {
        if t.len() != 4 {
            return Err(TergmError::ParameterLength {
                expected: 4,
                found: t.len(),
            });
        }
    }
    let records: Vec<RecoveryRecord> = (0..config.seeds)
        .into_par_iter()
        .map(|s| recovery_seed(config, &stats, s))
        .collect();
    Ok(RecoveryReport {
        statistics: stats.names(),
        n: config.n,
        transitions: config.transitions,
        mean_loss_exact_vs_truth: mean(records.iter().map(|r| r.loss_exact_vs_truth)),
        mean_loss_sampled_vs_truth: mean(records.iter().map(|r| r.loss_sampled_vs_truth)),
        mean_loss_sampled_vs_exact: mean(records.iter().map(|r| r.loss_sampled_vs_exact)),
        records,
    })
}

impl RecoveryReport {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "seed",
            "loss_exact_vs_truth",
            "loss_sampled_vs_truth",
            "loss_sampled_vs_exact",
            "exact_iterations",
            "sampled_iterations",
            "error",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let opt_n = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.records {
            w.write_record([
                r.seed.to_string(),
                opt(r.loss_exact_vs_truth),
                opt(r.loss_sampled_vs_truth),
                opt(r.loss_sampled_vs_exact),
                opt_n(r.exact_iterations),
                opt_n(r.sampled_iterations),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
        csv_string(w)
    }
}

fn csv_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| TergmError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Nearest-rank percentile of sorted values: the `ceil(p/100 * m)`-th smallest.
pub fn nearest_rank(sorted: &[f64], percent: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    let m = sorted.len();
    let rank = ((percent / 100.0) * m as f64).ceil() as usize;
    sorted[rank.clamp(1, m) - 1]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossValConfig {
    pub fit: FitConfig,
    /// Networks drawn per held-out transition.
    pub samples: usize,
    pub seed: u64,
    pub lower_percentile: f64,
    pub upper_percentile: f64,
}

impl Default for CrossValConfig {
    fn default() -> Self {
        CrossValConfig {
            fit: FitConfig::default(),
            samples: 500,
            seed: 0,
            lower_percentile: 5.0,
            upper_percentile: 95.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    /// Time point of the held-out target network (1-based).
    pub t: usize,
    pub valid: bool,
    pub theta: Option<Vec<f64>>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssessmentCell {
    pub t: usize,
    pub statistic: String,
    pub observed: f64,
    pub sampled: Vec<f64>,
    pub p_lo: f64,
    pub p_hi: f64,
    pub inside: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitAssessment {
    pub statistics: Vec<String>,
    pub samples_per_transition: usize,
    pub folds: Vec<FoldRecord>,
    pub cells: Vec<AssessmentCell>,
    pub fits_performed: usize,
    /// Share of cells whose observed value falls inside its band.
    pub coverage: f64,
    /// Present when the bands rest on fewer than 100 samples.
    pub warning: Option<String>,
}

impl FitAssessment {
    /// Columns `t, statistic, observed, p5, p95, inside`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["t", "statistic", "observed", "p5", "p95", "inside"])?;
        for c in &self.cells {
            w.write_record([
                c.t.to_string(),
                c.statistic.clone(),
                c.observed.to_string(),
                c.p_lo.to_string(),
                c.p_hi.to_string(),
                c.inside.to_string(),
            ])?;
        }
        csv_string(w)
    }
}

fn sample_statistics(
    table: &ChangeScoreTable,
    probs: &EdgeProbabilities,
    rng: &mut rng::StreamRng,
) -> DVector<f64> {
    let mut psi = DVector::from_column_slice(table.base());
    for (i, j) in dyads(table.n()) {
        if rng.random::<f64>() < probs.get(i, j) {
            for (m, d) in table.dyad(i, j).iter().enumerate() {
                psi[m] += d;
            }
        }
    }
    psi
}

/// For each transition, fits on all other transitions and compares the
/// held-out statistics with draws from the fitted transition law.
pub fn crossval_assess(
    stats: &StatisticSet,
    series: &NetworkSeries,
    config: &CrossValConfig,
) -> Result<FitAssessment> {
    if series.len() < 3 {
        return Err(TergmError::SeriesTooShort {
            needed: 3,
            found: series.len(),
        });
    }
    if config.samples == 0 {
        return Err(TergmError::InvalidConfig(
            "need at least one sample per transition".into(),
        ));
    }
    if !(0.0..=100.0).contains(&config.lower_percentile)
        || !(0.0..=100.0).contains(&config.upper_percentile)
        || config.lower_percentile > config.upper_percentile
    {
        return Err(TergmError::InvalidConfig(
            "percentiles must satisfy 0 <= lower <= upper <= 100".into(),
        ));
    }
    let labels = series_labels(stats, series)?;
    let design = SeriesDesign::new(stats, series, labels.as_deref())?;
    let names = stats.names();
    let folds: Vec<(FoldRecord, Vec<AssessmentCell>)> = (0..design.transitions().len())
        .into_par_iter()
        .map(|held| {
            let t = held + 2;
            let fitted = design
                .excluding(held)
                .and_then(|d| fit_design(&d, &names, &config.fit));
            let theta = match fitted {
                Ok(f) if f.converged => f.theta_hat,
                Ok(f) => {
                    let why = if f.has_separation() {
                        "estimate does not exist (separation)"
                    } else {
                        "fit did not converge"
                    };
                    return (
                        FoldRecord {
                            t,
                            valid: false,
                            theta: Some(f.theta_hat.0),
                            error: Some(why.into()),
                        },
                        Vec::new(),
                    );
                }
                Err(e) => {
                    return (
                        FoldRecord {
                            t,
                            valid: false,
                            theta: None,
                            error: Some(e.to_string()),
                        },
                        Vec::new(),
                    )
                }
            };
            let data = &design.transitions()[held];
            let probs = EdgeProbabilities::from_table(&data.table, theta.as_slice());
            let draws: Vec<DVector<f64>> = (0..config.samples)
                .map(|b| {
                    sample_statistics(
                        &data.table,
                        &probs,
                        &mut rng::stream(config.seed, &[held as u64, b as u64]),
                    )
                })
                .collect();
            let observed = data.observed_statistics();
            let cells = names
                .iter()
                .enumerate()
                .map(|(m, name)| {
                    let sampled: Vec<f64> = draws.iter().map(|d| d[m]).collect();
                    let mut sorted = sampled.clone();
                    sorted.sort_by(f64::total_cmp);
                    let p_lo = nearest_rank(&sorted, config.lower_percentile);
                    let p_hi = nearest_rank(&sorted, config.upper_percentile);
                    AssessmentCell {
                        t,
                        statistic: name.clone(),
                        observed: observed[m],
                        sampled,
                        p_lo,
                        p_hi,
                        inside: p_lo <= observed[m] && observed[m] <= p_hi,
                    }
                })
                .collect();
            (
                FoldRecord {
                    t,
                    valid: true,
                    theta: Some(theta.0),
                    error: None,
                },
                cells,
            )
        })
        .collect();
    let fits_performed = folds.len();
    let mut records = Vec::with_capacity(folds.len());
    let mut cells = Vec::new();
    for (r, c) in folds {
        records.push(r);
        cells.extend(c);
    }
    let coverage = if cells.is_empty() {
        0.0
    } else {
        cells.iter().filter(|c| c.inside).count() as f64 / cells.len() as f64
    };
    let warning =
        (config.samples < 100).then(|| format!("bands rest on only {} samples", config.samples));
    Ok(FitAssessment {
        statistics: names,
        samples_per_transition: config.samples,
        folds: records,
        cells,
        fits_performed,
        coverage,
        warning,
    })
}
