//! The conditional law `P(A^t | A^{t-1}, θ) ∝ exp{θ'Ψ(A^t, A^{t-1})}`.
//!
//! For dyad-factorized statistics every dyad is an independent logistic
//! coin with logit `θ · delta_ij`, which gives the likelihood, its gradient
//! `Σ_t (Ψ(N^t, N^{t-1}) - M(t, θ))` and Hessian `-Σ_t Cov_θ[Ψ]` in closed form.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TergmError};
use crate::network::{dyads, Network, NetworkSeries};
use crate::statistics::{ChangeScoreTable, StatisticSet};

/// `θ ∈ R^k`, index-aligned with a [`StatisticSet`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterVector(pub Vec<f64>);

impl ParameterVector {
    pub fn zeros(k: usize) -> Self {
        ParameterVector(vec![0.0; k])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn distance(&self, other: &ParameterVector) -> f64 {
        euclidean(&self.0, &other.0)
    }
}

impl From<Vec<f64>> for ParameterVector {
    fn from(v: Vec<f64>) -> Self {
        ParameterVector(v)
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Log-probability of a Bernoulli outcome with logit `eta`.
#[inline]
pub(crate) fn log_bernoulli(edge: bool, eta: f64) -> f64 {
    if edge {
        -softplus(-eta)
    } else {
        -softplus(eta)
    }
}

/// Statistic set, parameters and (optional) node labels.
#[derive(Clone, Debug)]
pub struct TransitionModel {
    stats: StatisticSet,
    theta: ParameterVector,
    labels: Option<Vec<usize>>,
}

impl TransitionModel {
    pub fn new(
        stats: StatisticSet,
        theta: ParameterVector,
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        if theta.len() != stats.len() {
            return Err(TergmError::ParameterLength {
                expected: stats.len(),
                found: theta.len(),
            });
        }
        if let Some(bad) = theta.0.iter().find(|v| !v.is_finite()) {
            return Err(TergmError::InvalidConfig(format!(
                "non-finite parameter {bad}"
            )));
        }
        if stats.requires_labels() && labels.is_none() {
            let name = stats
                .terms()
                .iter()
                .find(|t| t.requires_labels())
                .map(|t| t.name().to_string());
            return Err(TergmError::MissingLabels(name.unwrap_or_default()));
        }
        Ok(TransitionModel {
            stats,
            theta,
            labels,
        })
    }

    pub fn stats(&self) -> &StatisticSet {
        &self.stats
    }

    pub fn theta(&self) -> &ParameterVector {
        &self.theta
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn with_theta(&self, theta: ParameterVector) -> Result<Self> {
        TransitionModel::new(self.stats.clone(), theta, self.labels.clone())
    }

    pub fn change_scores(&self, prev: &Network) -> Result<ChangeScoreTable> {
        self.stats.change_scores(prev, self.labels())
    }
}

/// Labels for a statistic set taken from the series attributes, if needed.
pub fn series_labels(stats: &StatisticSet, series: &NetworkSeries) -> Result<Option<Vec<usize>>> {
    if !stats.requires_labels() {
        return Ok(None);
    }
    match series.attributes() {
        Some(a) => Ok(Some(a.complete_labels()?)),
        None => {
            let name = stats
                .terms()
                .iter()
                .find(|t| t.requires_labels())
                .map(|t| t.name().to_string());
            Err(TergmError::MissingLabels(name.unwrap_or_default()))
        }
    }
}

/// `P(A^t_ij = 1 | A^{t-1})` for every dyad; diagonal fixed at 0.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeProbabilities {
    n: usize,
    p: Vec<f64>,
}

impl EdgeProbabilities {
    pub fn from_table(table: &ChangeScoreTable, theta: &[f64]) -> Self {
        let n = table.n();
        let mut p = table.linear_predictor(theta);
        for (i, j) in dyads(n) {
            p[i * n + j] = logistic(p[i * n + j]);
        }
        EdgeProbabilities { n, p }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }

    pub fn expected_edges(&self) -> f64 {
        dyads(self.n).map(|(i, j)| self.get(i, j)).sum()
    }

    /// Probabilities clamped into `[eps, 1 - eps]` for display only.
    pub fn clamped_for_report(&self, eps: f64) -> Vec<f64> {
        self.p.iter().map(|&v| v.clamp(eps, 1.0 - eps)).collect()
    }
}

pub fn edge_probabilities(model: &TransitionModel, prev: &Network) -> Result<EdgeProbabilities> {
    let table = model.change_scores(prev)?;
    Ok(EdgeProbabilities::from_table(
        &table,
        model.theta().as_slice(),
    ))
}

/// `θ'Ψ(cur, prev)`; valid for any statistic set.
pub fn unnormalized_log_density(
    model: &TransitionModel,
    cur: &Network,
    prev: &Network,
) -> Result<f64> {
    let psi = model.stats().evaluate_all(cur, prev, model.labels())?;
    Ok(psi
        .iter()
        .zip(model.theta().as_slice())
        .map(|(a, b)| a * b)
        .sum())
}

/// First and second conditional moments of `Ψ` for one transition.
#[derive(Clone, Debug)]
pub struct Moments {
    /// `M(t, θ) = E[Ψ]`.
    pub mean: DVector<f64>,
    /// `Cov[Ψ] = C(t, θ) - M M'`.
    pub covariance: DMatrix<f64>,
}

pub fn transition_moments(table: &ChangeScoreTable, theta: &[f64]) -> Moments {
    let n = table.n();
    let k = table.k();
    let mut mean = DVector::from_column_slice(table.base());
    let mut covariance = DMatrix::zeros(k, k);
    for (i, j) in dyads(n) {
        let d = table.dyad(i, j);
        let eta: f64 = d.iter().zip(theta).map(|(a, b)| a * b).sum();
        let p = logistic(eta);
        let w = p * (1.0 - p);
        for a in 0..k {
            mean[a] += d[a] * p;
            if d[a] == 0.0 {
                continue;
            }
            for b in a..k {
                covariance[(a, b)] += w * d[a] * d[b];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            covariance[(a, b)] = covariance[(b, a)];
        }
    }
    Moments { mean, covariance }
}

/// Log-likelihood with gradient and Hessian at one `θ`.
#[derive(Clone, Debug)]
pub struct LikelihoodTerms {
    pub log_likelihood: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

/// One observed transition: change scores given `A^{t-1}` and the observed `A^t`.
#[derive(Clone, Debug)]
pub struct TransitionData {
    pub table: ChangeScoreTable,
    pub observed: Network,
}

impl TransitionData {
    pub fn observed_statistics(&self) -> Vec<f64> {
        self.table.reconstruct(&self.observed)
    }

    fn log_likelihood(&self, theta: &[f64]) -> f64 {
        let n = self.table.n();
        dyads(n)
            .map(|(i, j)| {
                let eta: f64 = self
                    .table
                    .dyad(i, j)
                    .iter()
                    .zip(theta)
                    .map(|(a, b)| a * b)
                    .sum();
                log_bernoulli(self.observed.has_edge(i, j), eta)
            })
            .sum()
    }

    fn terms(&self, theta: &[f64]) -> LikelihoodTerms {
        let n = self.table.n();
        let k = self.table.k();
        let mut ll = 0.0;
        let mut gradient = DVector::zeros(k);
        let mut hessian = DMatrix::zeros(k, k);
        for (i, j) in dyads(n) {
            let d = self.table.dyad(i, j);
            let eta: f64 = d.iter().zip(theta).map(|(a, b)| a * b).sum();
            let edge = self.observed.has_edge(i, j);
            ll += log_bernoulli(edge, eta);
            let p = logistic(eta);
            let resid = f64::from(u8::from(edge)) - p;
            let w = p * (1.0 - p);
            for a in 0..k {
                if d[a] == 0.0 {
                    continue;
                }
                gradient[a] += d[a] * resid;
                for b in a..k {
                    hessian[(a, b)] -= w * d[a] * d[b];
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                hessian[(a, b)] = hessian[(b, a)];
            }
        }
        LikelihoodTerms {
            log_likelihood: ll,
            gradient,
            hessian,
        }
    }
}

/// Precomputed change scores for every transition of a series, so the
/// likelihood can be re-evaluated cheaply at many `θ`.
#[derive(Clone, Debug)]
pub struct SeriesDesign {
    k: usize,
    n: usize,
    transitions: Vec<TransitionData>,
}

impl SeriesDesign {
    pub fn new(
        stats: &StatisticSet,
        series: &NetworkSeries,
        labels: Option<&[usize]>,
    ) -> Result<Self> {
        series.require_transitions()?;
        if !stats.is_factorized() {
            let name = stats
                .terms()
                .iter()
                .find(|t| !t.is_factorized())
                .map(|t| t.name().to_string());
            return Err(TergmError::NotFactorized(name.unwrap_or_default()));
        }
        let pairs: Vec<(&Network, &Network)> = series.transitions().collect();
        let transitions = pairs
            .par_iter()
            .map(|(prev, cur)| {
                Ok(TransitionData {
                    table: stats.change_scores(prev, labels)?,
                    observed: (*cur).clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SeriesDesign {
            k: stats.len(),
            n: series.n(),
            transitions,
        })
    }

    pub fn from_transitions(transitions: Vec<TransitionData>) -> Result<Self> {
        let first = transitions.first().ok_or(TergmError::SeriesTooShort {
            needed: 2,
            found: 1,
        })?;
        let (k, n) = (first.table.k(), first.table.n());
        if transitions
            .iter()
            .any(|t| t.table.k() != k || t.table.n() != n || t.observed.n() != n)
        {
            return Err(TergmError::InvalidConfig(
                "inconsistent transition data".into(),
            ));
        }
        Ok(SeriesDesign { k, n, transitions })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn transitions(&self) -> &[TransitionData] {
        &self.transitions
    }

    /// Same design without transition `index` (0-based over transitions).
    pub fn excluding(&self, index: usize) -> Result<SeriesDesign> {
        let rest: Vec<_> = self
            .transitions
            .iter()
            .enumerate()
            .filter(|&(t, _)| t != index)
            .map(|(_, d)| d.clone())
            .collect();
        SeriesDesign::from_transitions(rest)
    }

    pub fn log_likelihood(&self, theta: &[f64]) -> f64 {
        let parts: Vec<f64> = self
            .transitions
            .par_iter()
            .map(|t| t.log_likelihood(theta))
            .collect();
        parts.into_iter().sum()
    }

    pub fn evaluate(&self, theta: &[f64]) -> LikelihoodTerms {
        // collect-then-fold keeps the reduction order fixed
        let parts: Vec<LikelihoodTerms> = self
            .transitions
            .par_iter()
            .map(|t| t.terms(theta))
            .collect();
        let mut total = LikelihoodTerms {
            log_likelihood: 0.0,
            gradient: DVector::zeros(self.k),
            hessian: DMatrix::zeros(self.k, self.k),
        };
        for p in parts {
            total.log_likelihood += p.log_likelihood;
            total.gradient += p.gradient;
            total.hessian += p.hessian;
        }
        total
    }

    /// `Σ_t Ψ(N^t, N^{t-1})`.
    pub fn observed_statistic_total(&self) -> DVector<f64> {
        let mut total = DVector::zeros(self.k);
        for t in &self.transitions {
            total += DVector::from_vec(t.observed_statistics());
        }
        total
    }
}

fn design_for(model: &TransitionModel, series: &NetworkSeries) -> Result<SeriesDesign> {
    SeriesDesign::new(model.stats(), series, model.labels())
}

/// `log P(N^2..N^T | N^1, θ)`.
pub fn log_likelihood(model: &TransitionModel, series: &NetworkSeries) -> Result<f64> {
    Ok(design_for(model, series)?.log_likelihood(model.theta().as_slice()))
}

pub fn gradient(model: &TransitionModel, series: &NetworkSeries) -> Result<DVector<f64>> {
    Ok(design_for(model, series)?
        .evaluate(model.theta().as_slice())
        .gradient)
}

pub fn hessian(model: &TransitionModel, series: &NetworkSeries) -> Result<DMatrix<f64>> {
    Ok(design_for(model, series)?
        .evaluate(model.theta().as_slice())
        .hessian)
}
