//! Drawing networks from the transition law and simulating chains.
//!
//! Dyad-factorized models are sampled exactly by independent coin flips.
//! Anything else goes through a systematic-scan Gibbs sampler that visits
//! dyads in row-major order and resamples each from its full conditional.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TergmError};
use crate::model::{logistic, EdgeProbabilities, TransitionModel};
use crate::network::{dyads, Network, NetworkSeries};
use crate::rng::{self, StreamRng};
use crate::statistics::{SelfTally, StatisticSet, Term};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub seed: u64,
    /// Gibbs sweeps discarded before the first retained sample.
    pub burn_in: usize,
    /// Gibbs sweeps between retained samples.
    pub thinning: usize,
    /// Samples per transition (`B`).
    pub samples: usize,
    /// Sweeps used when drawing an initial network from the static model.
    pub initial_burn_in: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            seed: 0,
            burn_in: 10,
            thinning: 1,
            samples: 1,
            initial_burn_in: 1000,
        }
    }
}

impl SamplerConfig {
    pub fn with_seed(seed: u64) -> Self {
        SamplerConfig {
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.thinning == 0 || self.samples == 0 {
            return Err(TergmError::InvalidConfig(
                "thinning and samples must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Law of the first network of a simulated series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialLaw {
    /// Every dyad independently present with probability `q`.
    Bernoulli(f64),
    /// `N ∝ exp{θ'Ψ(N, N)}`, sampled by Gibbs.
    SelfErgm,
}

impl std::str::FromStr for InitialLaw {
    type Err = TergmError;
    fn from_str(s: &str) -> Result<Self> {
        if s == "self-ergm" {
            return Ok(InitialLaw::SelfErgm);
        }
        if let Some(q) = s.strip_prefix("bernoulli:") {
            let q: f64 = q
                .parse()
                .map_err(|_| TergmError::InvalidConfig(format!("bad Bernoulli rate `{q}`")))?;
            return Ok(InitialLaw::Bernoulli(q));
        }
        Err(TergmError::InvalidConfig(format!(
            "unknown initial law `{s}`"
        )))
    }
}

pub(crate) fn draw_from_probabilities(probs: &EdgeProbabilities, rng: &mut StreamRng) -> Network {
    let n = probs.n();
    let mut net = Network::empty(n);
    for (i, j) in dyads(n) {
        if rng.random::<f64>() < probs.get(i, j) {
            net.set(i, j, true);
        }
    }
    net
}

/// `B` independent draws from a factorized model; draw `b` uses stream `(seed, b)`.
pub fn sample_transition_exact(
    model: &TransitionModel,
    prev: &Network,
    config: &SamplerConfig,
) -> Result<Vec<Network>> {
    config.validate()?;
    let table = model.change_scores(prev)?;
    let probs = EdgeProbabilities::from_table(&table, model.theta().as_slice());
    Ok((0..config.samples)
        .into_par_iter()
        .map(|b| draw_from_probabilities(&probs, &mut rng::stream(config.seed, &[b as u64])))
        .collect())
}

/// Full conditional of one dyad given everything else.
trait DyadConditional {
    /// `log P(x_ij = 1 | rest) - log P(x_ij = 0 | rest)`.
    fn log_odds(&self, state: &Network, i: usize, j: usize) -> f64;
    /// Called before `state[i][j]` is changed to `value`.
    fn record(&mut self, _state: &Network, _i: usize, _j: usize, _value: bool) {}
}

fn sweep<C: DyadConditional>(target: &mut C, state: &mut Network, rng: &mut StreamRng) {
    let n = state.n();
    for (i, j) in dyads(n) {
        let value = rng.random::<f64>() < logistic(target.log_odds(state, i, j));
        if value != state.has_edge(i, j) {
            target.record(state, i, j, value);
            state.set(i, j, value);
        }
    }
}

/// Transition law with a fixed previous network. Factorized terms enter
/// through precomputed logits, the rest through their toggle changes.
struct TransitionConditional<'a> {
    model: &'a TransitionModel,
    prev: &'a Network,
    fixed_logit: Vec<f64>,
    general: Vec<(usize, &'a Term)>,
}

impl<'a> TransitionConditional<'a> {
    fn new(model: &'a TransitionModel, prev: &'a Network) -> Result<Self> {
        let n = prev.n();
        let theta = model.theta().as_slice();
        let mut factorized = Vec::new();
        let mut factorized_theta = Vec::new();
        let mut general = Vec::new();
        for (m, term) in model.stats().terms().iter().enumerate() {
            if term.is_factorized() {
                factorized.push(term.clone());
                factorized_theta.push(theta[m]);
            } else {
                general.push((m, term));
            }
        }
        let fixed_logit = if factorized.is_empty() {
            vec![0.0; n * n]
        } else {
            StatisticSet::new(factorized)?
                .change_scores(prev, model.labels())?
                .linear_predictor(&factorized_theta)
        };
        model.stats().check_labels(n, model.labels())?;
        Ok(TransitionConditional {
            model,
            prev,
            fixed_logit,
            general,
        })
    }
}

impl DyadConditional for TransitionConditional<'_> {
    fn log_odds(&self, state: &Network, i: usize, j: usize) -> f64 {
        let theta = self.model.theta().as_slice();
        let mut lo = self.fixed_logit[i * state.n() + j];
        for &(m, term) in &self.general {
            if let Term::Custom(c) = term {
                lo += theta[m] * c.toggle_change(state, self.prev, self.model.labels(), i, j);
            }
        }
        lo
    }
}

/// Systematic-scan Gibbs from the transition law, started at `prev`.
/// After `burn_in` sweeps, one sample is kept every `thinning` sweeps.
pub fn sample_transition_gibbs(
    model: &TransitionModel,
    prev: &Network,
    config: &SamplerConfig,
) -> Result<Vec<Network>> {
    config.validate()?;
    let mut target = TransitionConditional::new(model, prev)?;
    let mut rng = rng::stream(config.seed, &[]);
    let mut state = prev.clone();
    for _ in 0..config.burn_in {
        sweep(&mut target, &mut state, &mut rng);
    }
    let mut out = Vec::with_capacity(config.samples);
    for _ in 0..config.samples {
        for _ in 0..config.thinning {
            sweep(&mut target, &mut state, &mut rng);
        }
        out.push(state.clone());
    }
    Ok(out)
}

/// Draws `B` networks from `P(· | prev, θ)`, exactly when possible.
pub fn sample_transition(
    model: &TransitionModel,
    prev: &Network,
    config: &SamplerConfig,
) -> Result<Vec<Network>> {
    if model.stats().is_factorized() {
        sample_transition_exact(model, prev, config)
    } else {
        sample_transition_gibbs(model, prev, config)
    }
}

/// Series `A^1..A^T` where each `A^t` is drawn given `A^{t-1}`.
/// Step `t` uses stream `(seed, t)`.
pub fn simulate_chain(
    model: &TransitionModel,
    first: &Network,
    length: usize,
    config: &SamplerConfig,
) -> Result<NetworkSeries> {
    if length == 0 {
        return Err(TergmError::InvalidConfig(
            "series length must be at least 1".into(),
        ));
    }
    let mut networks = Vec::with_capacity(length);
    networks.push(first.clone());
    for t in 2..=length {
        let step = SamplerConfig {
            seed: rng::derive_seed(config.seed, &[t as u64]),
            samples: 1,
            ..config.clone()
        };
        let prev = networks.last().expect("non-empty");
        let next = sample_transition(model, prev, &step)?
            .pop()
            .expect("one sample");
        networks.push(next);
    }
    NetworkSeries::new(networks)
}

struct SelfConditional<'a> {
    tally: SelfTally,
    theta: &'a [f64],
    labels: Option<&'a [usize]>,
}

impl DyadConditional for SelfConditional<'_> {
    fn log_odds(&self, state: &Network, i: usize, j: usize) -> f64 {
        self.tally.log_odds(state, self.labels, self.theta, i, j)
    }
    fn record(&mut self, state: &Network, i: usize, j: usize, value: bool) {
        self.tally.apply(state, self.labels, i, j, value);
    }
}

/// One initial network from `law`. The static model is run for
/// `config.initial_burn_in` sweeps from the empty network.
pub fn sample_initial(
    stats: &StatisticSet,
    theta: &[f64],
    n: usize,
    labels: Option<&[usize]>,
    config: &SamplerConfig,
    law: InitialLaw,
) -> Result<Network> {
    let mut rng = rng::stream(config.seed, &[0x1417]);
    match law {
        InitialLaw::Bernoulli(q) => {
            if !(0.0..=1.0).contains(&q) {
                return Err(TergmError::InvalidConfig(format!(
                    "Bernoulli rate {q} outside [0, 1]"
                )));
            }
            let mut net = Network::empty(n);
            for (i, j) in dyads(n) {
                if rng.random::<f64>() < q {
                    net.set(i, j, true);
                }
            }
            Ok(net)
        }
        InitialLaw::SelfErgm => {
            if theta.len() != stats.len() {
                return Err(TergmError::ParameterLength {
                    expected: stats.len(),
                    found: theta.len(),
                });
            }
            let builtins = stats.builtins().ok_or_else(|| {
                TergmError::InvalidConfig(
                    "self-ergm initial networks need built-in statistics".into(),
                )
            })?;
            let mut state = Network::empty(n);
            let tally = SelfTally::new(&builtins, &state, labels)?;
            let mut target = SelfConditional {
                tally,
                theta,
                labels,
            };
            for _ in 0..config.initial_burn_in {
                sweep(&mut target, &mut state, &mut rng);
            }
            Ok(state)
        }
    }
}
