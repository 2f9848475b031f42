//! Transductive label inference by Monte Carlo generalized EM.
//!
//! Each iteration Gibbs-samples the unknown node labels under the current
//! parameters, averages the complete-data gradient and Hessian over those
//! samples and takes one Newton step on the resulting Monte Carlo
//! objective. Final predictions are posterior modes under the estimate.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TergmError};
use crate::estimator::{fit_design, newton_direction, FitConfig, FitResult};
use crate::model::{log_bernoulli, logistic, LikelihoodTerms, ParameterVector, SeriesDesign};
use crate::network::{dyads, Network, NetworkSeries, NodeAttributes};
use crate::rng::{self, StreamRng};
use crate::statistics::{ChangeScoreTable, Statistic, StatisticSet, Term};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McgemConfig {
    pub fit: FitConfig,
    /// Label sweeps discarded before each E-step's samples.
    pub burn_in_sweeps: usize,
    /// Label vectors per E-step.
    pub samples: usize,
    /// Sweeps between retained label vectors.
    pub thinning: usize,
    /// Label vectors drawn under the final estimate for the predictions.
    pub final_samples: usize,
    /// Prior label probabilities; uniform when absent.
    pub prior: Option<Vec<f64>>,
}

impl Default for McgemConfig {
    fn default() -> Self {
        McgemConfig {
            fit: FitConfig::default(),
            burn_in_sweeps: 20,
            samples: 50,
            thinning: 1,
            final_samples: 200,
            prior: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McgemStep {
    pub iteration: usize,
    pub theta: Vec<f64>,
    pub step_size: f64,
    /// Monte Carlo objective before and after the step, on the same samples.
    pub objective_before: f64,
    pub objective_after: f64,
    pub objective_se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationResult {
    pub statistics: Vec<String>,
    /// Nodes whose labels were inferred.
    pub unknown_nodes: Vec<usize>,
    pub predicted_labels: Vec<String>,
    /// Share of final samples agreeing with each prediction.
    pub posterior_mode_frequencies: Vec<f64>,
    pub theta_hat: ParameterVector,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<McgemStep>,
    pub diagnostics: Vec<String>,
    pub accuracy: Option<f64>,
    /// Set when every label was observed and the fit is a plain exact fit.
    pub exact_fit: Option<FitResult>,
}

/// Accuracy on unobserved nodes of predicting the most common observed label
/// (ties go to the earlier label in the alphabet).
pub fn majority_baseline(known: &NodeAttributes, truth: &[usize]) -> Result<f64> {
    if truth.len() != known.n() {
        return Err(TergmError::DimensionMismatch {
            expected: known.n(),
            found: truth.len(),
        });
    }
    let mut counts = vec![0usize; known.alphabet().len()];
    for (l, &obs) in known.labels().iter().zip(known.observed()) {
        if let (Some(l), true) = (l, obs) {
            counts[*l] += 1;
        }
    }
    let majority = (0..counts.len()).fold(0, |b, c| if counts[c] > counts[b] { c } else { b });
    let unknown = known.unknown_nodes();
    if unknown.is_empty() {
        return Err(TergmError::InvalidConfig(
            "no unobserved nodes to predict".into(),
        ));
    }
    Ok(unknown.iter().filter(|&&v| truth[v] == majority).count() as f64 / unknown.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum LabelTerm {
    Within,
    Between,
    WithinRecip,
    BetweenRecip,
}

struct LabelTransition {
    free: ChangeScoreTable,
    prev: Network,
    cur: Network,
    /// Dyads `(i, j)` with a previous edge `j -> i`.
    reversed: Vec<(usize, usize)>,
}

/// Log-likelihood of a series as a function of both `θ` and the labels.
/// Label-free terms use precomputed change scores; the party terms are
/// evaluated on the fly from the label vector.
struct LabelDesign {
    n: usize,
    k: usize,
    free_positions: Vec<usize>,
    label_terms: Vec<(usize, LabelTerm)>,
    transitions: Vec<LabelTransition>,
}

/// Per-transition denominators of the within/between reciprocity terms.
type Denominators = Vec<(f64, f64)>;

impl LabelDesign {
    fn new(stats: &StatisticSet, series: &NetworkSeries) -> Result<Self> {
        series.require_transitions()?;
        let mut free_positions = Vec::new();
        let mut free_terms = Vec::new();
        let mut label_terms = Vec::new();
        for (m, t) in stats.terms().iter().enumerate() {
            let role = match t {
                Term::Builtin(Statistic::WithinDensity) => Some(LabelTerm::Within),
                Term::Builtin(Statistic::BetweenDensity) => Some(LabelTerm::Between),
                Term::Builtin(Statistic::WithinReciprocity) => Some(LabelTerm::WithinRecip),
                Term::Builtin(Statistic::BetweenReciprocity) => Some(LabelTerm::BetweenRecip),
                other if other.requires_labels() => {
                    return Err(TergmError::InvalidConfig(format!(
                        "label inference does not support `{}`",
                        other.name()
                    )))
                }
                other if !other.is_factorized() => {
                    return Err(TergmError::NotFactorized(other.name().to_string()))
                }
                _ => None,
            };
            match role {
                Some(r) => label_terms.push((m, r)),
                None => {
                    free_positions.push(m);
                    free_terms.push(t.clone());
                }
            }
        }
        if label_terms.is_empty() {
            return Err(TergmError::InvalidConfig(
                "label inference needs at least one label-dependent statistic".into(),
            ));
        }
        let free_set = if free_terms.is_empty() {
            None
        } else {
            Some(StatisticSet::new(free_terms)?)
        };
        let n = series.n();
        let transitions = series
            .transitions()
            .map(|(prev, cur)| {
                let free = match &free_set {
                    Some(s) => s.change_scores(prev, None)?,
                    None => StatisticSet::new(Vec::new())?.change_scores(prev, None)?,
                };
                let reversed = dyads(n).filter(|&(i, j)| prev.has_edge(j, i)).collect();
                Ok(LabelTransition {
                    free,
                    prev: prev.clone(),
                    cur: cur.clone(),
                    reversed,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LabelDesign {
            n,
            k: stats.len(),
            free_positions,
            label_terms,
            transitions,
        })
    }

    fn uses_reciprocity(&self, theta: &[f64]) -> bool {
        self.label_terms.iter().any(|&(m, r)| {
            matches!(r, LabelTerm::WithinRecip | LabelTerm::BetweenRecip) && theta[m] != 0.0
        })
    }

    fn denominators(&self, labels: &[usize]) -> Denominators {
        self.transitions
            .iter()
            .map(|t| {
                let within = t
                    .prev
                    .edges()
                    .filter(|&(i, j)| labels[i] == labels[j])
                    .count() as f64;
                (within, t.prev.edge_count() as f64 - within)
            })
            .collect()
    }

    fn features(
        &self,
        t: usize,
        i: usize,
        j: usize,
        labels: &[usize],
        dens: &Denominators,
        out: &mut [f64],
    ) {
        let tr = &self.transitions[t];
        let free = tr.free.dyad(i, j);
        for (slot, &m) in self.free_positions.iter().enumerate() {
            out[m] = free[slot];
        }
        let same = labels[i] == labels[j];
        let nf = self.n as f64;
        let recip = f64::from(tr.prev.at_u8(j, i));
        let (dw, db) = dens[t];
        for &(m, role) in &self.label_terms {
            out[m] = match role {
                LabelTerm::Within if same => 1.0 / (nf - 1.0),
                LabelTerm::Between if !same => 1.0 / (nf - 1.0),
                LabelTerm::WithinRecip if same && dw > 0.0 => nf * recip / dw,
                LabelTerm::BetweenRecip if !same && db > 0.0 => nf * recip / db,
                _ => 0.0,
            };
        }
    }

    fn dyad_ll(
        &self,
        t: usize,
        i: usize,
        j: usize,
        labels: &[usize],
        dens: &Denominators,
        theta: &[f64],
        buf: &mut [f64],
    ) -> f64 {
        self.features(t, i, j, labels, dens, buf);
        let eta: f64 = buf.iter().zip(theta).map(|(a, b)| a * b).sum();
        log_bernoulli(self.transitions[t].cur.has_edge(i, j), eta)
    }

    fn log_likelihood(&self, theta: &[f64], labels: &[usize]) -> f64 {
        let dens = self.denominators(labels);
        let mut buf = vec![0.0; self.k];
        let mut ll = 0.0;
        for t in 0..self.transitions.len() {
            for (i, j) in dyads(self.n) {
                ll += self.dyad_ll(t, i, j, labels, &dens, theta, &mut buf);
            }
        }
        ll
    }

    fn terms(&self, theta: &[f64], labels: &[usize]) -> LikelihoodTerms {
        let dens = self.denominators(labels);
        let k = self.k;
        let mut x = vec![0.0; k];
        let mut out = LikelihoodTerms {
            log_likelihood: 0.0,
            gradient: DVector::zeros(k),
            hessian: DMatrix::zeros(k, k),
        };
        for (t, tr) in self.transitions.iter().enumerate() {
            for (i, j) in dyads(self.n) {
                self.features(t, i, j, labels, &dens, &mut x);
                let eta: f64 = x.iter().zip(theta).map(|(a, b)| a * b).sum();
                let edge = tr.cur.has_edge(i, j);
                out.log_likelihood += log_bernoulli(edge, eta);
                let p = logistic(eta);
                let resid = f64::from(u8::from(edge)) - p;
                let w = p * (1.0 - p);
                for a in 0..k {
                    if x[a] == 0.0 {
                        continue;
                    }
                    out.gradient[a] += x[a] * resid;
                    for b in a..k {
                        out.hessian[(a, b)] -= w * x[a] * x[b];
                    }
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                out.hessian[(a, b)] = out.hessian[(b, a)];
            }
        }
        out
    }

    /// Log-likelihood of the dyads whose terms can change when node `v`
    /// is relabelled.
    fn local_ll(
        &self,
        v: usize,
        labels: &[usize],
        dens: &Denominators,
        theta: &[f64],
        reciprocity: bool,
        buf: &mut [f64],
    ) -> f64 {
        let mut ll = 0.0;
        for t in 0..self.transitions.len() {
            for u in 0..self.n {
                if u != v {
                    ll += self.dyad_ll(t, v, u, labels, dens, theta, buf);
                    ll += self.dyad_ll(t, u, v, labels, dens, theta, buf);
                }
            }
            if reciprocity {
                for &(i, j) in &self.transitions[t].reversed {
                    if i != v && j != v {
                        ll += self.dyad_ll(t, i, j, labels, dens, theta, buf);
                    }
                }
            }
        }
        ll
    }

    fn relabelled_denominators(
        &self,
        v: usize,
        from: usize,
        to: usize,
        labels: &[usize],
        dens: &Denominators,
    ) -> Denominators {
        self.transitions
            .iter()
            .zip(dens)
            .map(|(tr, &(mut w, mut b))| {
                for u in 0..self.n {
                    if u == v {
                        continue;
                    }
                    let edges = f64::from(tr.prev.at_u8(v, u)) + f64::from(tr.prev.at_u8(u, v));
                    if edges == 0.0 {
                        continue;
                    }
                    let before = labels[u] == from;
                    let after = labels[u] == to;
                    let shift = f64::from(u8::from(after)) - f64::from(u8::from(before));
                    w += edges * shift;
                    b -= edges * shift;
                }
                (w, b)
            })
            .collect()
    }
}

trait AtU8 {
    fn at_u8(&self, i: usize, j: usize) -> u8;
}

impl AtU8 for Network {
    #[inline]
    fn at_u8(&self, i: usize, j: usize) -> u8 {
        u8::from(self.has_edge(i, j))
    }
}

/// Gibbs chain over the unknown labels.
struct LabelChain<'a> {
    design: &'a LabelDesign,
    unknown: Vec<usize>,
    log_prior: Vec<f64>,
    labels: Vec<usize>,
    dens: Denominators,
    rng: StreamRng,
    moves: usize,
}

impl LabelChain<'_> {
    fn sweep(&mut self, theta: &[f64]) {
        let reciprocity = self.design.uses_reciprocity(theta);
        let alphabet = self.log_prior.len();
        let mut buf = vec![0.0; self.design.k];
        for idx in 0..self.unknown.len() {
            let v = self.unknown[idx];
            let current = self.labels[v];
            let base =
                self.design
                    .local_ll(v, &self.labels, &self.dens, theta, reciprocity, &mut buf);
            let mut weights = Vec::with_capacity(alphabet);
            let mut candidate_dens = Vec::with_capacity(alphabet);
            for c in 0..alphabet {
                if c == current {
                    weights.push(self.log_prior[c]);
                    candidate_dens.push(None);
                    continue;
                }
                let dens =
                    self.design
                        .relabelled_denominators(v, current, c, &self.labels, &self.dens);
                self.labels[v] = c;
                let ll = self
                    .design
                    .local_ll(v, &self.labels, &dens, theta, reciprocity, &mut buf);
                self.labels[v] = current;
                weights.push(self.log_prior[c] + ll - base);
                candidate_dens.push(Some(dens));
            }
            let top = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let probs: Vec<f64> = weights.iter().map(|w| (w - top).exp()).collect();
            let total: f64 = probs.iter().sum();
            let mut u = self.rng.random::<f64>() * total;
            let mut pick = alphabet - 1;
            for (c, p) in probs.iter().enumerate() {
                if u < *p {
                    pick = c;
                    break;
                }
                u -= p;
            }
            if pick != current {
                self.labels[v] = pick;
                self.dens = candidate_dens[pick]
                    .take()
                    .expect("computed for non-current labels");
                self.moves += 1;
            }
        }
    }

    fn draw(
        &mut self,
        theta: &[f64],
        burn_in: usize,
        thinning: usize,
        count: usize,
    ) -> Vec<Vec<usize>> {
        for _ in 0..burn_in {
            self.sweep(theta);
        }
        (0..count)
            .map(|_| {
                for _ in 0..thinning {
                    self.sweep(theta);
                }
                self.labels.clone()
            })
            .collect()
    }
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let m = values.iter().sum::<f64>() / values.len() as f64;
    if values.len() < 2 {
        return (m, 0.0);
    }
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64;
    (m, (var / values.len() as f64).sqrt())
}

/// Jointly estimates `θ` and the unobserved labels of `known`.
/// `truth`, when given, is used only to report accuracy.
pub fn mcgem_classify(
    stats: &StatisticSet,
    series: &NetworkSeries,
    known: &NodeAttributes,
    config: &McgemConfig,
    truth: Option<&[usize]>,
) -> Result<ClassificationResult> {
    let n = series.n();
    if known.n() != n {
        return Err(TergmError::DimensionMismatch {
            expected: n,
            found: known.n(),
        });
    }
    if !stats.requires_labels() {
        return Err(TergmError::InvalidConfig(
            "label inference needs label-dependent statistics".into(),
        ));
    }
    config.fit.validate(stats.len())?;
    if config.samples == 0 || config.thinning == 0 || config.final_samples == 0 {
        return Err(TergmError::InvalidConfig(
            "sample counts and thinning must be positive".into(),
        ));
    }
    let alphabet = known.alphabet().len();
    let prior = config
        .prior
        .clone()
        .unwrap_or_else(|| vec![1.0 / alphabet as f64; alphabet]);
    if prior.len() != alphabet || prior.iter().any(|p| !(*p > 0.0)) {
        return Err(TergmError::InvalidConfig(
            "prior needs one positive weight per label".into(),
        ));
    }
    if let Some(t) = truth {
        if t.len() != n || t.iter().any(|&l| l >= alphabet) {
            return Err(TergmError::InvalidConfig(
                "truth labels do not match the alphabet".into(),
            ));
        }
    }
    let unknown = known.unknown_nodes();
    if unknown.is_empty() {
        let labels = known.complete_labels()?;
        let design = SeriesDesign::new(stats, series, Some(&labels))?;
        let fit = fit_design(&design, &stats.names(), &config.fit)?;
        return Ok(ClassificationResult {
            statistics: stats.names(),
            unknown_nodes: Vec::new(),
            predicted_labels: Vec::new(),
            posterior_mode_frequencies: Vec::new(),
            theta_hat: fit.theta_hat.clone(),
            iterations: fit.iterations,
            converged: fit.converged,
            trace: Vec::new(),
            diagnostics: Vec::new(),
            accuracy: None,
            exact_fit: Some(fit),
        });
    }

    let design = LabelDesign::new(stats, series)?;
    let mut rng = rng::stream(config.fit.seed, &[0x1abe1]);
    let total_prior: f64 = prior.iter().sum();
    let log_prior: Vec<f64> = prior.iter().map(|p| (p / total_prior).ln()).collect();
    let mut labels: Vec<usize> = known.labels().iter().map(|l| l.unwrap_or(0)).collect();
    for &v in &unknown {
        let mut u = rng.random::<f64>() * total_prior;
        labels[v] = alphabet - 1;
        for (c, p) in prior.iter().enumerate() {
            if u < *p {
                labels[v] = c;
                break;
            }
            u -= p;
        }
    }
    let dens = design.denominators(&labels);
    let mut chain = LabelChain {
        design: &design,
        unknown: unknown.clone(),
        log_prior,
        labels,
        dens,
        rng,
        moves: 0,
    };

    let k = stats.len();
    let mut theta = match &config.fit.init {
        Some(v) => DVector::from_column_slice(v),
        None => DVector::zeros(k),
    };
    let mut trace = Vec::new();
    let mut diagnostics = Vec::new();
    let mut converged = false;
    for iteration in 1..=config.fit.max_iterations {
        let samples = chain.draw(
            theta.as_slice(),
            config.burn_in_sweeps,
            config.thinning,
            config.samples,
        );
        let parts: Vec<LikelihoodTerms> = samples
            .iter()
            .map(|l| design.terms(theta.as_slice(), l))
            .collect();
        let s = parts.len() as f64;
        let gradient = parts.iter().fold(DVector::zeros(k), |a, p| a + &p.gradient) / s;
        let hessian = parts
            .iter()
            .fold(DMatrix::zeros(k, k), |a, p| a + &p.hessian)
            / s;
        let before: Vec<f64> = parts.iter().map(|p| p.log_likelihood).collect();
        let (direction, ridge) = newton_direction(&gradient, &hessian);
        if ridge > 0.0 {
            diagnostics.push(format!(
                "iteration {iteration}: regularized Newton solve (ridge {ridge:.3e})"
            ));
        }
        let objective = |th: &DVector<f64>| -> Vec<f64> {
            samples
                .iter()
                .map(|l| design.log_likelihood(th.as_slice(), l))
                .collect()
        };
        let (q0, _) = mean_and_se(&before);
        let mut step = config.fit.step_damping;
        let mut next = &theta + &direction * step;
        let mut after = objective(&next);
        let mut halvings = 0;
        while !(mean_and_se(&after).0 >= q0) && halvings < 40 {
            step *= 0.5;
            next = &theta + &direction * step;
            after = objective(&next);
            halvings += 1;
        }
        let diffs: Vec<f64> = after.iter().zip(&before).map(|(a, b)| a - b).collect();
        let (gain, se) = mean_and_se(&diffs);
        if gain < -2.0 * se {
            diagnostics.push(format!(
                "iteration {iteration}: Monte Carlo objective fell by {:.3e} (se {se:.3e})",
                -gain
            ));
            next = theta.clone();
            step = 0.0;
        }
        let distance = (&next - &theta).norm();
        theta = next;
        trace.push(McgemStep {
            iteration,
            theta: theta.iter().copied().collect(),
            step_size: step,
            objective_before: q0,
            objective_after: mean_and_se(&after).0,
            objective_se: se,
        });
        if distance < config.fit.convergence_epsilon {
            converged = true;
            break;
        }
    }
    if !converged {
        diagnostics.push(format!(
            "no convergence within {} iterations",
            config.fit.max_iterations
        ));
    }

    let moves_before = chain.moves;
    let finals = chain.draw(
        theta.as_slice(),
        config.burn_in_sweeps,
        1,
        config.final_samples,
    );
    if chain.moves == moves_before {
        diagnostics.push("label chain never moved while drawing final samples".into());
    }
    let mut predicted = Vec::with_capacity(unknown.len());
    let mut frequencies = Vec::with_capacity(unknown.len());
    for &v in &unknown {
        let mut counts = vec![0usize; alphabet];
        for l in &finals {
            counts[l[v]] += 1;
        }
        let mode = (0..alphabet).fold(0, |b, c| if counts[c] > counts[b] { c } else { b });
        predicted.push(mode);
        frequencies.push(counts[mode] as f64 / finals.len() as f64);
    }
    let accuracy = truth.map(|t| {
        unknown
            .iter()
            .zip(&predicted)
            .filter(|(&v, &p)| t[v] == p)
            .count() as f64
            / unknown.len() as f64
    });
    Ok(ClassificationResult {
        statistics: stats.names(),
        unknown_nodes: unknown,
        predicted_labels: predicted
            .iter()
            .map(|&l| known.label_name(l).to_string())
            .collect(),
        posterior_mode_frequencies: frequencies,
        theta_hat: ParameterVector(theta.iter().copied().collect()),
        iterations: trace.len(),
        converged,
        trace,
        diagnostics,
        accuracy,
        exact_fit: None,
    })
}

/// Predicted label indices of a result, in `unknown_nodes` order.
pub fn predicted_indices(result: &ClassificationResult, known: &NodeAttributes) -> Vec<usize> {
    result
        .predicted_labels
        .iter()
        .map(|name| {
            known
                .alphabet()
                .iter()
                .position(|a| a == name)
                .expect("label from this alphabet")
        })
        .collect()
}
