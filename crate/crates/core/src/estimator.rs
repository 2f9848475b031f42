//! Maximum likelihood estimation.
//!
//! `fit_exact` runs damped Newton-Raphson on the exact log-likelihood of a
//! dyad-factorized model. `fit_sampled` runs the sampling-based Newton
//! scheme: conditional moments of the statistics are estimated from `B`
//! simulated networks per transition and plugged into the Newton update.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TergmError};
use crate::model::{
    series_labels, transition_moments, EdgeProbabilities, ParameterVector, SeriesDesign,
    TransitionModel,
};
use crate::network::{dyads, Network, NetworkSeries};
use crate::rng::{self, StreamRng};
use crate::sampler::{sample_transition_gibbs, SamplerConfig};
use crate::statistics::{ChangeScoreTable, Statistic, StatisticSet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub max_iterations: usize,
    /// Stop when successive iterates are closer than this (Euclidean).
    pub convergence_epsilon: f64,
    pub b_initial: usize,
    pub b_boost: usize,
    /// Switch to `b_boost` samples once successive iterates are closer than this.
    pub b_boost_trigger: f64,
    /// Multiplier on the Newton step, in `(0, 1]`.
    pub step_damping: f64,
    /// Halve the exact Newton step while it lowers the likelihood.
    pub line_search: bool,
    /// Sampled fits: also require the Monte Carlo gradient to be consistent
    /// with zero before declaring convergence.
    pub stationarity_check: bool,
    pub seed: u64,
    /// Starting point; zeros when absent.
    pub init: Option<Vec<f64>>,
    /// Gibbs sweeps before the first sample (non-factorized models only).
    pub burn_in: usize,
    /// Gibbs sweeps between samples (non-factorized models only).
    pub thinning: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_iterations: 200,
            convergence_epsilon: 0.1,
            b_initial: 100,
            b_boost: 1000,
            b_boost_trigger: 1.0,
            step_damping: 1.0,
            line_search: true,
            stationarity_check: true,
            seed: 0,
            init: None,
            burn_in: 10,
            thinning: 1,
        }
    }
}

impl FitConfig {
    pub fn validate(&self, k: usize) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(TergmError::InvalidConfig(
                "max_iterations must be positive".into(),
            ));
        }
        if !(self.convergence_epsilon > 0.0) {
            return Err(TergmError::InvalidConfig(
                "convergence_epsilon must be positive".into(),
            ));
        }
        if self.b_initial == 0 || self.b_boost < self.b_initial {
            return Err(TergmError::InvalidConfig(
                "need b_boost >= b_initial >= 1".into(),
            ));
        }
        if !(self.step_damping > 0.0 && self.step_damping <= 1.0) {
            return Err(TergmError::InvalidConfig(
                "step_damping must lie in (0, 1]".into(),
            ));
        }
        if self.thinning == 0 {
            return Err(TergmError::InvalidConfig(
                "thinning must be at least 1".into(),
            ));
        }
        if let Some(init) = &self.init {
            if init.len() != k {
                return Err(TergmError::ParameterLength {
                    expected: k,
                    found: init.len(),
                });
            }
            if init.iter().any(|v| !v.is_finite()) {
                return Err(TergmError::InvalidConfig("init must be finite".into()));
            }
        }
        Ok(())
    }

    fn start(&self, k: usize) -> DVector<f64> {
        match &self.init {
            Some(v) => DVector::from_column_slice(v),
            None => DVector::zeros(k),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    /// Iterate after this step.
    pub theta: Vec<f64>,
    pub step_size: f64,
    /// `B` used for the moment estimates; absent for exact fits.
    pub samples: Option<usize>,
    pub log_likelihood: Option<f64>,
    /// Distance from the previous iterate.
    pub distance: f64,
    pub regularized: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FitDiagnostic {
    /// `-H` was not positive definite and a ridge was added.
    RegularizedSolve {
        iteration: usize,
        ridge: f64,
    },
    /// The observed total of a statistic sits at the edge of its attainable
    /// range, so the likelihood keeps increasing along that coordinate.
    Separation {
        statistic: String,
        extreme: String,
    },
    /// The step was halved because the update was not finite.
    StepHalved {
        iteration: usize,
        halvings: usize,
    },
    MaxIterations {
        iterations: usize,
    },
    Diverged {
        norm: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub statistics: Vec<String>,
    pub theta_hat: ParameterVector,
    /// Exact log-likelihood at `theta_hat` when it is computable.
    pub log_likelihood: Option<f64>,
    pub gradient_norm: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<TraceEntry>,
    pub diagnostics: Vec<FitDiagnostic>,
}

impl FitResult {
    pub fn has_separation(&self) -> bool {
        self.diagnostics
            .iter()
            .any(|d| matches!(d, FitDiagnostic::Separation { .. }))
    }
}

const DIVERGENCE_NORM: f64 = 1e8;

/// Solves `(-H) d = g`, adding a ridge to `-H` when it is not positive definite.
/// Returns the direction and the ridge used (0 when none).
pub(crate) fn newton_direction(
    gradient: &DVector<f64>,
    hessian: &DMatrix<f64>,
) -> (DVector<f64>, f64) {
    let neg = -hessian;
    if let Some(ch) = neg.clone().cholesky() {
        let d = ch.solve(gradient);
        if d.iter().all(|v| v.is_finite()) {
            return (d, 0.0);
        }
    }
    let scale = neg
        .diagonal()
        .iter()
        .fold(1e-300f64, |m, v| m.max(v.abs()))
        .max(1e-12);
    let mut ridge = scale * 1e-10;
    loop {
        let mut m = neg.clone();
        for a in 0..m.nrows() {
            m[(a, a)] += ridge;
        }
        if let Some(ch) = m.cholesky() {
            let d = ch.solve(gradient);
            if d.iter().all(|v| v.is_finite()) {
                return (d, ridge);
            }
        }
        ridge *= 10.0;
        if !ridge.is_finite() {
            return (DVector::zeros(gradient.len()), f64::INFINITY);
        }
    }
}

/// Upper 0.999 quantile of chi-square with `k` degrees of freedom
/// (Wilson-Hilferty).
fn chi_square_999(k: usize) -> f64 {
    let k = k as f64;
    let c = 2.0 / (9.0 * k);
    k * (1.0 - c + 3.090_232 * c.sqrt()).powi(3)
}

fn gradient_tolerance(ll: f64) -> f64 {
    1e-6 * (1.0 + ll.abs())
}

/// Statistics whose observed total equals the largest or smallest value
/// attainable given the previous networks.
pub fn separation_diagnostics(design: &SeriesDesign, names: &[String]) -> Vec<FitDiagnostic> {
    let k = design.k();
    let mut hi = vec![0.0; k];
    let mut lo = vec![0.0; k];
    for t in design.transitions() {
        for m in 0..k {
            hi[m] += t.table.base()[m];
            lo[m] += t.table.base()[m];
        }
        for (i, j) in dyads(design.n()) {
            for (m, &d) in t.table.dyad(i, j).iter().enumerate() {
                if d > 0.0 {
                    hi[m] += d;
                } else {
                    lo[m] += d;
                }
            }
        }
    }
    let observed = design.observed_statistic_total();
    let mut out = Vec::new();
    for m in 0..k {
        let tol = 1e-9 * (1.0 + hi[m].abs().max(lo[m].abs()));
        if hi[m] - lo[m] <= tol {
            continue;
        }
        let extreme = if observed[m] >= hi[m] - tol {
            "maximum"
        } else if observed[m] <= lo[m] + tol {
            "minimum"
        } else {
            continue;
        };
        out.push(FitDiagnostic::Separation {
            statistic: names[m].clone(),
            extreme: extreme.into(),
        });
    }
    out
}

/// Damped Newton-Raphson on a precomputed design.
pub fn fit_design(
    design: &SeriesDesign,
    names: &[String],
    config: &FitConfig,
) -> Result<FitResult> {
    let k = design.k();
    config.validate(k)?;
    let mut diagnostics = separation_diagnostics(design, names);
    let separated = !diagnostics.is_empty();
    let mut theta = config.start(k);
    let mut terms = design.evaluate(theta.as_slice());
    let mut trace = Vec::new();
    let mut converged = false;
    for iteration in 1..=config.max_iterations {
        let (direction, ridge) = newton_direction(&terms.gradient, &terms.hessian);
        if ridge > 0.0 {
            diagnostics.push(FitDiagnostic::RegularizedSolve { iteration, ridge });
        }
        let mut step = config.step_damping;
        let mut next = &theta + &direction * step;
        let mut next_ll = design.log_likelihood(next.as_slice());
        if config.line_search {
            let floor = terms.log_likelihood - 1e-12 * (1.0 + terms.log_likelihood.abs());
            let mut halvings = 0;
            while !(next_ll >= floor) && halvings < 60 {
                step *= 0.5;
                next = &theta + &direction * step;
                next_ll = design.log_likelihood(next.as_slice());
                halvings += 1;
            }
            if !(next_ll >= floor) {
                // no ascent along the direction: stay put
                next = theta.clone();
                step = 0.0;
            }
        }
        let distance = (&next - &theta).norm();
        theta = next;
        terms = design.evaluate(theta.as_slice());
        trace.push(TraceEntry {
            iteration,
            theta: theta.iter().copied().collect(),
            step_size: step,
            samples: None,
            log_likelihood: Some(terms.log_likelihood),
            distance,
            regularized: ridge > 0.0,
        });
        if theta.norm() > DIVERGENCE_NORM || !terms.log_likelihood.is_finite() {
            diagnostics.push(FitDiagnostic::Diverged { norm: theta.norm() });
            break;
        }
        let flat = terms.gradient.norm() < gradient_tolerance(terms.log_likelihood);
        if flat && distance < config.convergence_epsilon {
            converged = !separated;
            break;
        }
        if step == 0.0 && distance == 0.0 {
            break;
        }
    }
    if !converged && trace.len() == config.max_iterations {
        diagnostics.push(FitDiagnostic::MaxIterations {
            iterations: config.max_iterations,
        });
    }
    Ok(FitResult {
        statistics: names.to_vec(),
        theta_hat: ParameterVector(theta.iter().copied().collect()),
        log_likelihood: Some(terms.log_likelihood),
        gradient_norm: Some(terms.gradient.norm()),
        iterations: trace.len(),
        converged,
        trace,
        diagnostics,
    })
}

/// Exact MLE for a dyad-factorized model. Labels come from the series attributes.
pub fn fit_exact(
    stats: &StatisticSet,
    series: &NetworkSeries,
    config: &FitConfig,
) -> Result<FitResult> {
    let labels = series_labels(stats, series)?;
    let design = SeriesDesign::new(stats, series, labels.as_deref())?;
    fit_design(&design, &stats.names(), config)
}

/// Where the sampled Newton scheme gets its conditional moments.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MomentSource {
    /// Monte Carlo estimates from `B` simulated networks per transition.
    Sampled,
    /// Closed-form moments (factorized models only); the `B → ∞` limit.
    Exact,
}

/// Draws one network from the factorized law and returns its statistics,
/// without materialising the network.
fn draw_statistics(
    table: &ChangeScoreTable,
    probs: &EdgeProbabilities,
    rng: &mut StreamRng,
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

fn sample_moments(draws: &[DVector<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let k = draws[0].len();
    let b = draws.len() as f64;
    let mut mean = DVector::zeros(k);
    for d in draws {
        mean += d;
    }
    mean /= b;
    let mut cov = DMatrix::zeros(k, k);
    for d in draws {
        let c = d - &mean;
        cov += &c * c.transpose();
    }
    cov /= b;
    (mean, cov)
}

enum Transitions<'a> {
    Factorized(SeriesDesign),
    General {
        stats: &'a StatisticSet,
        labels: Option<Vec<usize>>,
        pairs: Vec<(Network, Network)>,
        observed: Vec<DVector<f64>>,
    },
}

impl Transitions<'_> {
    /// Per-transition `(observed Ψ, mean, covariance)`.
    fn moments(
        &self,
        theta: &[f64],
        samples: usize,
        source: MomentSource,
        seed: u64,
        config: &FitConfig,
    ) -> Result<Vec<(DVector<f64>, DVector<f64>, DMatrix<f64>)>> {
        match self {
            Transitions::Factorized(design) => Ok(design
                .transitions()
                .par_iter()
                .enumerate()
                .map(|(t, data)| {
                    let observed = DVector::from_vec(data.observed_statistics());
                    match source {
                        MomentSource::Exact => {
                            let m = transition_moments(&data.table, theta);
                            (observed, m.mean, m.covariance)
                        }
                        MomentSource::Sampled => {
                            let probs = EdgeProbabilities::from_table(&data.table, theta);
                            let draws: Vec<_> = (0..samples)
                                .map(|b| {
                                    draw_statistics(
                                        &data.table,
                                        &probs,
                                        &mut rng::stream(seed, &[t as u64, b as u64]),
                                    )
                                })
                                .collect();
                            let (mean, cov) = sample_moments(&draws);
                            (observed, mean, cov)
                        }
                    }
                })
                .collect()),
            Transitions::General {
                stats,
                labels,
                pairs,
                observed,
            } => {
                if source == MomentSource::Exact {
                    return Err(TergmError::NotFactorized("exact moments".into()));
                }
                let model = TransitionModel::new(
                    (*stats).clone(),
                    ParameterVector(theta.to_vec()),
                    labels.clone(),
                )?;
                pairs
                    .par_iter()
                    .enumerate()
                    .map(|(t, (prev, _))| {
                        let cfg = SamplerConfig {
                            seed: rng::derive_seed(seed, &[t as u64]),
                            burn_in: config.burn_in,
                            thinning: config.thinning,
                            samples,
                            ..SamplerConfig::default()
                        };
                        let draws = sample_transition_gibbs(&model, prev, &cfg)?
                            .iter()
                            .map(|a| {
                                Ok(DVector::from_vec(stats.evaluate_all(
                                    a,
                                    prev,
                                    labels.as_deref(),
                                )?))
                            })
                            .collect::<Result<Vec<_>>>()?;
                        let (mean, cov) = sample_moments(&draws);
                        Ok((observed[t].clone(), mean, cov))
                    })
                    .collect()
            }
        }
    }
}

/// Sampling-based Newton iterations with Monte Carlo moments.
pub fn fit_sampled(
    stats: &StatisticSet,
    series: &NetworkSeries,
    config: &FitConfig,
) -> Result<FitResult> {
    fit_sampled_with(stats, series, config, MomentSource::Sampled)
}

pub fn fit_sampled_with(
    stats: &StatisticSet,
    series: &NetworkSeries,
    config: &FitConfig,
    source: MomentSource,
) -> Result<FitResult> {
    let k = stats.len();
    config.validate(k)?;
    series.require_transitions()?;
    let labels = series_labels(stats, series)?;
    let transitions = if stats.is_factorized() {
        Transitions::Factorized(SeriesDesign::new(stats, series, labels.as_deref())?)
    } else {
        let pairs: Vec<(Network, Network)> = series
            .transitions()
            .map(|(p, c)| (p.clone(), c.clone()))
            .collect();
        let observed = pairs
            .iter()
            .map(|(p, c)| {
                Ok(DVector::from_vec(stats.evaluate_all(
                    c,
                    p,
                    labels.as_deref(),
                )?))
            })
            .collect::<Result<Vec<_>>>()?;
        Transitions::General {
            stats,
            labels,
            pairs,
            observed,
        }
    };

    let mut diagnostics = Vec::new();
    let mut theta = config.start(k);
    let mut samples = config.b_initial;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut last_gradient = None;
    for iteration in 1..=config.max_iterations {
        let seed = rng::derive_seed(config.seed, &[iteration as u64]);
        let parts = transitions.moments(theta.as_slice(), samples, source, seed, config)?;
        let mut gradient = DVector::zeros(k);
        let mut hessian = DMatrix::zeros(k, k);
        for (observed, mean, cov) in parts {
            gradient += observed - mean;
            hessian -= cov;
        }
        last_gradient = Some(gradient.norm());
        let (direction, ridge) = newton_direction(&gradient, &hessian);
        if ridge > 0.0 {
            diagnostics.push(FitDiagnostic::RegularizedSolve { iteration, ridge });
        }
        // At a maximum, B g' (sum cov)^-1 g is approximately chi-square with k dof.
        let stationary = source == MomentSource::Exact
            || !config.stationarity_check
            || samples as f64 * gradient.dot(&direction) <= chi_square_999(k);
        let mut step = config.step_damping;
        let mut next = &theta + &direction * step;
        let mut halvings = 0;
        while next.iter().any(|v| !v.is_finite()) && halvings < 30 {
            step *= 0.5;
            next = &theta + &direction * step;
            halvings += 1;
        }
        if halvings > 0 {
            diagnostics.push(FitDiagnostic::StepHalved {
                iteration,
                halvings,
            });
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(TergmError::Numerical(format!(
                "non-finite Newton update at iteration {iteration}"
            )));
        }
        let distance = (&next - &theta).norm();
        trace.push(TraceEntry {
            iteration,
            theta: next.iter().copied().collect(),
            step_size: step,
            samples: Some(if source == MomentSource::Exact {
                usize::MAX
            } else {
                samples
            }),
            log_likelihood: None,
            distance,
            regularized: ridge > 0.0,
        });
        theta = next;
        if theta.norm() > DIVERGENCE_NORM {
            diagnostics.push(FitDiagnostic::Diverged { norm: theta.norm() });
            break;
        }
        if distance < config.convergence_epsilon && stationary {
            converged = true;
            break;
        }
        if distance < config.b_boost_trigger {
            samples = config.b_boost;
        }
    }
    if !converged && trace.len() == config.max_iterations {
        diagnostics.push(FitDiagnostic::MaxIterations {
            iterations: config.max_iterations,
        });
    }
    let (log_likelihood, gradient_norm) = match &transitions {
        Transitions::Factorized(design) => {
            let t = design.evaluate(theta.as_slice());
            (Some(t.log_likelihood), Some(t.gradient.norm()))
        }
        Transitions::General { .. } => (None, last_gradient),
    };
    Ok(FitResult {
        statistics: stats.names(),
        theta_hat: ParameterVector(theta.iter().copied().collect()),
        log_likelihood,
        gradient_norm,
        iterations: trace.len(),
        converged,
        trace,
        diagnostics,
    })
}

/// Starting-point schemes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitScheme {
    /// Each component uniform on `[a, b)`.
    Uniform(f64, f64),
    /// Stability, reciprocity and transitivity uniform on `[0, 10)`, density
    /// set to `-5` times their sum. Needs exactly `{D, S, R, T}`.
    Recovery,
}

impl std::str::FromStr for InitScheme {
    type Err = TergmError;
    fn from_str(s: &str) -> Result<Self> {
        if s == "recovery" {
            return Ok(InitScheme::Recovery);
        }
        let bad = || TergmError::InvalidConfig(format!("unknown init scheme `{s}`"));
        let range = s.strip_prefix("uniform:").ok_or_else(bad)?;
        let (a, b) = range.split_once(',').ok_or_else(bad)?;
        Ok(InitScheme::Uniform(
            a.trim().parse().map_err(|_| bad())?,
            b.trim().parse().map_err(|_| bad())?,
        ))
    }
}

pub fn random_init(stats: &StatisticSet, scheme: InitScheme, seed: u64) -> Result<ParameterVector> {
    let mut rng = rng::stream(seed, &[0x1a17]);
    match scheme {
        InitScheme::Uniform(a, b) => {
            if !(a <= b) || !a.is_finite() || !b.is_finite() {
                return Err(TergmError::InvalidConfig(format!(
                    "bad uniform range [{a}, {b})"
                )));
            }
            Ok(ParameterVector(
                (0..stats.len())
                    .map(|_| if a == b { a } else { rng.random_range(a..b) })
                    .collect(),
            ))
        }
        InitScheme::Recovery => {
            let want = [
                Statistic::Density,
                Statistic::Stability,
                Statistic::Reciprocity,
                Statistic::Transitivity,
            ];
            let builtins = stats.builtins().unwrap_or_default();
            if builtins.len() != 4 || want.iter().any(|s| !builtins.contains(s)) {
                return Err(TergmError::InvalidConfig(
                    "the recovery scheme needs exactly D, S, R, T".into(),
                ));
            }
            let mut theta = vec![0.0; 4];
            let mut sum = 0.0;
            for s in &want[1..] {
                let v = rng.random_range(0.0..10.0);
                sum += v;
                theta[builtins.iter().position(|b| b == s).expect("checked")] = v;
            }
            theta[builtins
                .iter()
                .position(|b| *b == Statistic::Density)
                .expect("checked")] = -5.0 * sum;
            Ok(ParameterVector(theta))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::log_likelihood;
    use crate::sampler::simulate_chain;

    fn stats(s: &str) -> StatisticSet {
        StatisticSet::parse(s).unwrap()
    }

    fn simulated(list: &str, theta: Vec<f64>, n: usize, len: usize, seed: u64) -> NetworkSeries {
        let m = TransitionModel::new(stats(list), ParameterVector(theta), None).unwrap();
        let first = crate::sampler::sample_initial(
            &stats(list),
            &vec![0.0; m.stats().len()],
            n,
            None,
            &SamplerConfig::with_seed(seed),
            crate::sampler::InitialLaw::Bernoulli(0.3),
        )
        .unwrap();
        simulate_chain(&m, &first, len, &SamplerConfig::with_seed(seed)).unwrap()
    }

    #[test]
    fn exact_fit_satisfies_gradient_criterion_and_ascends() {
        let s = stats("D,S,R,T");
        let series = simulated("D,S,R,T", vec![-1.0, 2.0, 1.5, 0.8], 12, 6, 21);
        let fit = fit_exact(&s, &series, &FitConfig::default()).unwrap();
        assert!(fit.converged, "{:?}", fit.diagnostics);
        let ll = fit.log_likelihood.unwrap();
        assert!(fit.gradient_norm.unwrap() < 1e-6 * (1.0 + ll.abs()));
        for w in fit.trace.windows(2) {
            assert!(w[1].log_likelihood.unwrap() >= w[0].log_likelihood.unwrap() - 1e-9);
        }
        let m = TransitionModel::new(s, fit.theta_hat.clone(), None).unwrap();
        assert!((log_likelihood(&m, &series).unwrap() - ll).abs() < 1e-9);
    }

    #[test]
    fn exact_fit_recovers_zero_on_fair_coins() {
        let series = simulated("D,S,R,T", vec![0.0; 4], 30, 12, 22);
        let fit = fit_exact(&stats("D,S,R,T"), &series, &FitConfig::default()).unwrap();
        assert!(fit.converged);
        let m = TransitionModel::new(stats("D,S,R,T"), fit.theta_hat.clone(), None).unwrap();
        let cov = (-crate::model::hessian(&m, &series).unwrap())
            .try_inverse()
            .unwrap();
        for (a, v) in fit.theta_hat.0.iter().enumerate() {
            assert!(v.abs() < 4.0 * cov[(a, a)].sqrt(), "{:?}", fit.theta_hat);
        }
    }

    #[test]
    fn stability_at_maximum_is_flagged() {
        let a = Network::from_edges(4, &[(0, 1), (1, 2), (3, 0)]).unwrap();
        let series = NetworkSeries::new(vec![a.clone(), a.clone(), a]).unwrap();
        let fit = fit_exact(&stats("D,S"), &series, &FitConfig::default()).unwrap();
        assert!(!fit.converged);
        assert!(fit.has_separation());
    }

    #[test]
    fn exact_moments_reproduce_exact_newton_trajectory() {
        let s = stats("D,S,R,T");
        let series = simulated("D,S,R,T", vec![-0.5, 1.5, 1.0, 0.5], 10, 5, 23);
        let cfg = FitConfig {
            line_search: false,
            convergence_epsilon: 1e-9,
            max_iterations: 8,
            ..FitConfig::default()
        };
        let exact = fit_exact(&s, &series, &cfg).unwrap();
        let limit = fit_sampled_with(&s, &series, &cfg, MomentSource::Exact).unwrap();
        assert!(!exact.trace.is_empty());
        for (a, b) in exact.trace.iter().zip(&limit.trace) {
            for (x, y) in a.theta.iter().zip(&b.theta) {
                assert!((x - y).abs() < 1e-8 * (1.0 + x.abs()), "{x} vs {y}");
            }
        }
    }

    #[test]
    fn sampled_fit_close_to_exact_and_reproducible() {
        let s = stats("D,S,R,T");
        let series = simulated("D,S,R,T", vec![-2.0, 3.0, 1.0, 1.0], 20, 8, 24);
        let exact = fit_exact(&s, &series, &FitConfig::default()).unwrap();
        let cfg = FitConfig {
            seed: 5,
            ..FitConfig::default()
        };
        let sampled = fit_sampled(&s, &series, &cfg).unwrap();
        assert!(sampled.converged);
        assert!(
            sampled.theta_hat.distance(&exact.theta_hat) < 0.5,
            "{:?} vs {:?}",
            sampled.theta_hat,
            exact.theta_hat
        );
        assert_eq!(sampled, fit_sampled(&s, &series, &cfg).unwrap());
    }

    #[test]
    fn permuting_nodes_leaves_estimate_unchanged() {
        let s = stats("D,S,R,T,P,G");
        let series = simulated("D,S,R,T", vec![-1.0, 2.0, 1.0, 1.0], 9, 5, 25);
        let perm = [3, 8, 1, 0, 5, 7, 2, 6, 4];
        let a = fit_exact(&s, &series, &FitConfig::default()).unwrap();
        let b = fit_exact(&s, &series.permuted(&perm), &FitConfig::default()).unwrap();
        assert!(a.theta_hat.distance(&b.theta_hat) < 1e-6);
    }

    #[test]
    fn init_schemes() {
        let s = stats("D,S,R,T");
        assert_eq!(
            random_init(&s, InitScheme::Uniform(0.0, 0.0), 1).unwrap().0,
            vec![0.0; 4]
        );
        let th = random_init(&s, InitScheme::Recovery, 9).unwrap().0;
        assert!(th[1..].iter().all(|v| (0.0..10.0).contains(v)));
        assert!((th[0] + 5.0 * (th[1] + th[2] + th[3])).abs() < 1e-12);
        assert_eq!(th, random_init(&s, InitScheme::Recovery, 9).unwrap().0);
        assert!(random_init(&stats("D,S,R"), InitScheme::Recovery, 9).is_err());
        let shuffled = random_init(&stats("T,S,D,R"), InitScheme::Recovery, 9)
            .unwrap()
            .0;
        assert!((shuffled[2] + 5.0 * (shuffled[0] + shuffled[1] + shuffled[3])).abs() < 1e-12);
        assert_eq!(
            "uniform:-1,2".parse::<InitScheme>().unwrap(),
            InitScheme::Uniform(-1.0, 2.0)
        );
    }

    #[test]
    fn config_validation() {
        let bad = FitConfig {
            b_boost: 10,
            b_initial: 20,
            ..FitConfig::default()
        };
        assert!(bad.validate(4).is_err());
        let bad = FitConfig {
            step_damping: 0.0,
            ..FitConfig::default()
        };
        assert!(bad.validate(4).is_err());
        let bad = FitConfig {
            init: Some(vec![0.0; 3]),
            ..FitConfig::default()
        };
        assert!(bad.validate(4).is_err());
        let parsed: FitConfig = serde_json::from_str(r#"{"step_damping": 0.5}"#).unwrap();
        assert_eq!(parsed.step_damping, 0.5);
        assert_eq!(parsed.b_initial, 100);
    }

    #[test]
    fn newton_direction_regularizes_singular_hessian() {
        let g = DVector::from_vec(vec![1.0, 1.0]);
        let h = DMatrix::from_row_slice(2, 2, &[-1.0, -1.0, -1.0, -1.0]);
        let (d, ridge) = newton_direction(&g, &h);
        assert!(ridge > 0.0);
        assert!(d.iter().all(|v| v.is_finite()));
    }
}
