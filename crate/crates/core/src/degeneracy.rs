//! Nondegeneracy diagnostics for dyad-factorized transition models.
//!
//! When every per-edge statistic term lies in `[-β, β]`, each edge
//! probability is bounded away from 0 and 1 by `p = 1 / (exp{2β Σ|θ_k|} + 1)`,
//! which bounds both the expected edge count and the entropy of the next
//! network. Exact entropies are available by enumeration for tiny `n`,
//! and by edge-count classes for the density/stability model.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TergmError};
use crate::model::{logistic, EdgeProbabilities, TransitionModel};
use crate::network::{dyads, Network};
use crate::statistics::{Statistic, StatisticSet, Term};

/// Where the per-edge bound `β` came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BetaSource {
    /// Worst case over every possible previous network.
    Global,
    /// Computed for one supplied previous network.
    PreviousNetwork,
    Explicit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegeneracyReport {
    pub beta: f64,
    pub beta_source: BetaSource,
    pub p_bound: f64,
    pub expected_edges_lo: f64,
    pub expected_edges_hi: f64,
    /// Nats.
    pub entropy_lower_bound: f64,
}

/// Options for [`degeneracy_bounds`].
#[derive(Clone, Copy, Debug, Default)]
pub struct BoundOptions<'a> {
    /// Tighten `β` to this previous network; the bounds then hold conditionally on it.
    pub previous: Option<&'a Network>,
    pub labels: Option<&'a [usize]>,
    /// Use this `β` instead of deriving one (needed for custom terms without a bound).
    pub beta: Option<f64>,
}

/// `-p ln p - (1-p) ln(1-p)`.
pub fn binary_entropy(p: f64) -> f64 {
    let h = |x: f64| if x <= 0.0 { 0.0 } else { -x * x.ln() };
    h(p) + h(1.0 - p)
}

fn instance_beta(term: &Term, table_delta: impl Iterator<Item = f64>, n: usize) -> f64 {
    // Off-state per-edge terms are zero for every built-in except stability,
    // whose two states both sit in [0, 1/(n-1)].
    let widest = table_delta.fold(0.0f64, |m, d| m.max(d.abs()));
    match term {
        Term::Builtin(Statistic::Stability) => 1.0 / (n as f64 - 1.0),
        _ => widest,
    }
}

/// Edge-count interval and entropy lower bound implied by the per-edge range `β`.
pub fn degeneracy_bounds(
    stats: &StatisticSet,
    theta: &[f64],
    n: usize,
    options: BoundOptions<'_>,
) -> Result<DegeneracyReport> {
    if theta.len() != stats.len() {
        return Err(TergmError::ParameterLength {
            expected: stats.len(),
            found: theta.len(),
        });
    }
    if n < 2 {
        return Err(TergmError::InvalidConfig("need at least two nodes".into()));
    }
    if !stats.is_factorized() {
        let name = stats
            .terms()
            .iter()
            .find(|t| !t.is_factorized())
            .map(|t| t.name().to_string());
        return Err(TergmError::NotFactorized(name.unwrap_or_default()));
    }
    let active = |m: usize| theta[m] != 0.0;
    let (beta, beta_source) = if let Some(b) = options.beta {
        if !(b > 0.0) || !b.is_finite() {
            return Err(TergmError::InvalidConfig(format!(
                "explicit bound {b} must be positive"
            )));
        }
        (b, BetaSource::Explicit)
    } else if let Some(prev) = options.previous {
        if prev.n() != n {
            return Err(TergmError::DimensionMismatch {
                expected: n,
                found: prev.n(),
            });
        }
        let custom = stats
            .terms()
            .iter()
            .enumerate()
            .find(|(m, t)| active(*m) && t.as_builtin().is_none());
        if let Some((_, t)) = custom {
            return Err(TergmError::InvalidConfig(format!(
                "custom term `{}` needs an explicit bound",
                t.name()
            )));
        }
        let table = stats.change_scores(prev, options.labels)?;
        let beta = stats
            .terms()
            .iter()
            .enumerate()
            .filter(|&(m, _)| active(m))
            .map(|(m, t)| instance_beta(t, dyads(n).map(|(i, j)| table.delta(m, i, j)), n))
            .fold(0.0, f64::max);
        (beta, BetaSource::PreviousNetwork)
    } else {
        let mut beta = 0.0f64;
        for (_, t) in stats.terms().iter().enumerate().filter(|&(m, _)| active(m)) {
            let b = match t {
                Term::Builtin(s) => s.global_edge_bound(n),
                Term::Custom(c) => c.edge_bound(n).ok_or_else(|| {
                    TergmError::InvalidConfig(format!(
                        "custom term `{}` needs an explicit bound",
                        c.name()
                    ))
                })?,
            };
            beta = beta.max(b);
        }
        (beta, BetaSource::Global)
    };
    let total: f64 = theta.iter().map(|v| v.abs()).sum();
    let p = logistic(-2.0 * beta * total);
    let dyad_count = (n * (n - 1)) as f64;
    Ok(DegeneracyReport {
        beta,
        beta_source,
        p_bound: p,
        expected_edges_lo: dyad_count * p,
        expected_edges_hi: dyad_count * (1.0 - p),
        entropy_lower_bound: dyad_count * binary_entropy(p),
    })
}

/// Law of the first network for exact entropy computations.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialDistribution {
    Bernoulli(f64),
    /// Weighted networks; weights are normalised.
    Explicit(Vec<(Network, f64)>),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyResult {
    /// `H(A^2)` in nats.
    pub entropy: f64,
    /// `E[edges of A^2]`.
    pub expected_edges: f64,
}

pub const MAX_ENUMERATION_NODES: usize = 4;

/// Product Bernoulli distribution over all `2^d` states, state bit `d`
/// being dyad `d` in row-major order.
fn product_distribution(probs: &[f64], out: &mut [f64]) {
    out[0] = 1.0;
    let mut len = 1;
    for &p in probs {
        for s in 0..len {
            let v = out[s];
            out[s] = v * (1.0 - p);
            out[s + len] = v * p;
        }
        len *= 2;
    }
}

/// Exact `H(A^2)` with `A^1` drawn from `initial` and `A^2 | A^1` from the
/// model, by enumerating every pair of networks.
pub fn entropy_bruteforce(
    model: &TransitionModel,
    initial: &InitialDistribution,
    n: usize,
) -> Result<EntropyResult> {
    if n > MAX_ENUMERATION_NODES {
        return Err(TergmError::TooLarge(format!(
            "enumeration needs n <= {MAX_ENUMERATION_NODES}, got {n}"
        )));
    }
    if n < 2 {
        return Err(TergmError::InvalidConfig("need at least two nodes".into()));
    }
    let d = n * (n - 1);
    let states = 1usize << d;
    let first: Vec<(Network, f64)> = match initial {
        InitialDistribution::Bernoulli(q) => {
            if !(0.0..=1.0).contains(q) {
                return Err(TergmError::InvalidConfig(format!(
                    "Bernoulli rate {q} outside [0, 1]"
                )));
            }
            (0..states as u64)
                .map(|bits| {
                    let e = bits.count_ones() as i32;
                    (
                        Network::from_bits(n, bits),
                        q.powi(e) * (1.0 - q).powi(d as i32 - e),
                    )
                })
                .filter(|(_, w)| *w > 0.0)
                .collect()
        }
        InitialDistribution::Explicit(list) => {
            let total: f64 = list.iter().map(|(_, w)| *w).sum();
            if list.is_empty() || !(total > 0.0) || list.iter().any(|(a, w)| a.n() != n || *w < 0.0)
            {
                return Err(TergmError::InvalidConfig(
                    "explicit initial law needs non-negative weights on n-node networks".into(),
                ));
            }
            list.iter().map(|(a, w)| (a.clone(), w / total)).collect()
        }
    };

    const CHUNK: usize = 64;
    let partials: Vec<Result<(Vec<f64>, f64)>> = first
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = vec![0.0; states];
            let mut buf = vec![0.0; states];
            let mut edges = 0.0;
            for (prev, w) in chunk {
                let table = model.change_scores(prev)?;
                let probs = EdgeProbabilities::from_table(&table, model.theta().as_slice());
                let per_dyad: Vec<f64> = dyads(n).map(|(i, j)| probs.get(i, j)).collect();
                edges += w * per_dyad.iter().sum::<f64>();
                product_distribution(&per_dyad, &mut buf);
                for (a, b) in acc.iter_mut().zip(&buf) {
                    *a += w * b;
                }
            }
            Ok((acc, edges))
        })
        .collect();
    let mut marginal = vec![0.0; states];
    let mut expected_edges = 0.0;
    for part in partials {
        let (acc, edges) = part?;
        for (m, a) in marginal.iter_mut().zip(acc) {
            *m += a;
        }
        expected_edges += edges;
    }
    let entropy = marginal
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum();
    Ok(EntropyResult {
        entropy,
        expected_edges,
    })
}

pub const MAX_EDGECOUNT_NODES: usize = 40;

fn ln_binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k)
        .map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln())
        .sum()
}

/// Exact `H(A^2)` for a density/stability model with `A^1` Bernoulli(`q`).
///
/// Every `A^2` with the same number of edges has the same marginal
/// probability, so the entropy is a sum over edge counts weighted by the
/// number of networks in each class.
pub fn entropy_edgecount(stats: &StatisticSet, theta: &[f64], n: usize, q: f64) -> Result<f64> {
    if theta.len() != stats.len() {
        return Err(TergmError::ParameterLength {
            expected: stats.len(),
            found: theta.len(),
        });
    }
    let mut theta_d = 0.0;
    let mut theta_s = 0.0;
    for (t, &v) in stats.terms().iter().zip(theta) {
        match t.as_builtin() {
            Some(Statistic::Density) => theta_d = v,
            Some(Statistic::Stability) => theta_s = v,
            _ => {
                return Err(TergmError::InvalidConfig(format!(
                    "edge-count entropy supports only D and S, found `{}`",
                    t.name()
                )))
            }
        }
    }
    entropy_edgecount_ds(theta_d, theta_s, n, q)
}

pub fn entropy_edgecount_ds(theta_d: f64, theta_s: f64, n: usize, q: f64) -> Result<f64> {
    if !(2..=MAX_EDGECOUNT_NODES).contains(&n) {
        return Err(TergmError::TooLarge(format!(
            "edge-count entropy needs 2 <= n <= {MAX_EDGECOUNT_NODES}"
        )));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(TergmError::InvalidConfig(format!(
            "Bernoulli rate {q} outside [0, 1]"
        )));
    }
    let scale = 1.0 / (n as f64 - 1.0);
    // an edge kept or created, given the dyad was present or absent before
    let r = q * logistic((theta_d + theta_s) * scale)
        + (1.0 - q) * logistic((theta_d - theta_s) * scale);
    let d = n * (n - 1);
    let mut h = 0.0;
    for e in 0..=d {
        let ln_p = log_power(r, e) + log_power(1.0 - r, d - e);
        if ln_p == f64::NEG_INFINITY {
            continue;
        }
        h -= (ln_binomial(d, e) + ln_p).exp() * ln_p;
    }
    Ok(h)
}

/// `k ln x`, with `0 ln 0 = 0`.
fn log_power(x: f64, k: usize) -> f64 {
    if k == 0 {
        0.0
    } else {
        k as f64 * x.ln()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyCell {
    pub theta_d: f64,
    pub theta_s: f64,
    pub entropy: f64,
}

/// Edge-count entropy over the `steps x steps` grid of `[lo, hi]^2`, density
/// varying slowest.
pub fn entropy_grid(n: usize, q: f64, lo: f64, hi: f64, steps: usize) -> Result<Vec<EntropyCell>> {
    if steps < 2 || !(lo < hi) {
        return Err(TergmError::InvalidConfig(
            "grid needs lo < hi and at least two steps".into(),
        ));
    }
    let at = |s: usize| lo + (hi - lo) * s as f64 / (steps - 1) as f64;
    let cells: Vec<(f64, f64)> = (0..steps)
        .flat_map(|a| (0..steps).map(move |b| (a, b)))
        .map(|(a, b)| (at(a), at(b)))
        .collect();
    cells
        .par_iter()
        .map(|&(theta_d, theta_s)| {
            Ok(EntropyCell {
                theta_d,
                theta_s,
                entropy: entropy_edgecount_ds(theta_d, theta_s, n, q)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ParameterVector;
    use crate::rng;
    use crate::sampler::{sample_transition_exact, SamplerConfig};
    use rand::Rng;

    fn model(stats: &str, theta: Vec<f64>) -> TransitionModel {
        TransitionModel::new(
            StatisticSet::parse(stats).unwrap(),
            ParameterVector(theta),
            None,
        )
        .unwrap()
    }

    #[test]
    fn zero_theta_bounds() {
        let s = StatisticSet::parse("D,S,R,T").unwrap();
        let r = degeneracy_bounds(&s, &[0.0; 4], 5, BoundOptions::default()).unwrap();
        assert_eq!(r.p_bound, 0.5);
        assert_eq!(r.expected_edges_lo, 10.0);
        assert_eq!(r.expected_edges_hi, 10.0);
        assert!((r.entropy_lower_bound - 20.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn density_stability_worked_example() {
        let s = StatisticSet::parse("D,S").unwrap();
        let r = degeneracy_bounds(&s, &[1.0, 1.0], 3, BoundOptions::default()).unwrap();
        assert_eq!(r.beta, 0.5);
        let p = 1.0 / (2f64.exp() + 1.0);
        assert!((r.p_bound - p).abs() < 1e-15);
        assert!((r.p_bound - 0.1192).abs() < 1e-4);
        assert!((r.expected_edges_lo - 0.7153).abs() < 1e-4);
        assert!((r.expected_edges_hi - 5.2847).abs() < 1e-4);
        assert!((r.entropy_lower_bound - 6.0 * binary_entropy(p)).abs() < 1e-12);
        assert!((r.entropy_lower_bound - 2.19).abs() < 0.01);

        // simulated edge counts from an arbitrary previous network stay inside
        let m = model("D,S", vec![1.0, 1.0]);
        let prev = Network::from_edges(3, &[(0, 1), (2, 0)]).unwrap();
        let draws = sample_transition_exact(
            &m,
            &prev,
            &SamplerConfig {
                samples: 10_000,
                ..SamplerConfig::with_seed(31)
            },
        )
        .unwrap();
        let mean = draws.iter().map(|a| a.edge_count() as f64).sum::<f64>() / 10_000.0;
        assert!(mean > r.expected_edges_lo && mean < r.expected_edges_hi);
    }

    #[test]
    fn p_bound_monotone() {
        let s = StatisticSet::parse("D,S").unwrap();
        let mut last = 0.5;
        for k in 1..20 {
            let r = degeneracy_bounds(
                &s,
                &[0.3 * k as f64, -0.1 * k as f64],
                6,
                BoundOptions::default(),
            )
            .unwrap();
            assert!(r.p_bound < last);
            last = r.p_bound;
        }
        let loose = degeneracy_bounds(
            &s,
            &[1.0, 1.0],
            6,
            BoundOptions {
                beta: Some(1.0),
                ..Default::default()
            },
        )
        .unwrap();
        let tight = degeneracy_bounds(
            &s,
            &[1.0, 1.0],
            6,
            BoundOptions {
                beta: Some(0.5),
                ..Default::default()
            },
        )
        .unwrap();
        assert!(loose.p_bound < tight.p_bound);
    }

    #[test]
    fn instance_beta_is_tighter_and_valid() {
        let s = StatisticSet::parse("D,S,R,T").unwrap();
        let prev = Network::from_edges(4, &[(0, 1), (1, 2), (2, 0), (3, 1)]).unwrap();
        let th = [0.5, 1.0, -0.7, 0.4];
        let global = degeneracy_bounds(&s, &th, 4, BoundOptions::default()).unwrap();
        let local = degeneracy_bounds(
            &s,
            &th,
            4,
            BoundOptions {
                previous: Some(&prev),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(local.beta_source, BetaSource::PreviousNetwork);
        assert!(local.beta <= global.beta);
        let p = crate::model::edge_probabilities(&model("D,S,R,T", th.to_vec()), &prev).unwrap();
        for (i, j) in dyads(4) {
            assert!(p.get(i, j) >= local.p_bound && p.get(i, j) <= 1.0 - local.p_bound);
        }
    }

    #[test]
    fn bruteforce_uniform_at_zero() {
        for n in 2..=3 {
            let m = model("D,S,R,T", vec![0.0; 4]);
            let h = entropy_bruteforce(&m, &InitialDistribution::Bernoulli(0.25), n).unwrap();
            assert!((h.entropy - (n * (n - 1)) as f64 * 2f64.ln()).abs() < 1e-10);
            assert!((h.expected_edges - (n * (n - 1)) as f64 / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn copy_channel_limit() {
        let m = model("D,S", vec![0.0, 50.0]);
        let h = entropy_bruteforce(&m, &InitialDistribution::Bernoulli(0.25), 2).unwrap();
        assert!((h.entropy - 2.0 * binary_entropy(0.25)).abs() < 1e-9);
        assert!((h.entropy - 1.1246).abs() < 1e-4);
    }

    #[test]
    fn stability_lowers_entropy() {
        let zero = entropy_bruteforce(
            &model("D,S", vec![0.0, 0.0]),
            &InitialDistribution::Bernoulli(0.25),
            3,
        )
        .unwrap();
        let five = entropy_bruteforce(
            &model("D,S", vec![0.0, 5.0]),
            &InitialDistribution::Bernoulli(0.25),
            3,
        )
        .unwrap();
        assert!(zero.entropy >= five.entropy);
    }

    #[test]
    fn explicit_initial_law() {
        let m = model("D,S", vec![0.0, 50.0]);
        let a = Network::from_edges(3, &[(0, 1)]).unwrap();
        let h = entropy_bruteforce(&m, &InitialDistribution::Explicit(vec![(a, 2.0)]), 3).unwrap();
        assert!(h.entropy < 1e-6);
        assert!(entropy_bruteforce(&m, &InitialDistribution::Bernoulli(0.5), 5).is_err());
    }

    #[test]
    fn edgecount_matches_bruteforce_and_closed_form() {
        let mut rng = rng::stream(32, &[]);
        for n in 3..=4 {
            for _ in 0..20 {
                let (td, ts) = (rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
                let q = 0.25;
                let fast = entropy_edgecount(&StatisticSet::parse("D,S").unwrap(), &[td, ts], n, q)
                    .unwrap();
                let slow = entropy_bruteforce(
                    &model("D,S", vec![td, ts]),
                    &InitialDistribution::Bernoulli(q),
                    n,
                )
                .unwrap();
                assert!(
                    (fast - slow.entropy).abs() < 1e-9,
                    "n={n} {td} {ts}: {fast} vs {}",
                    slow.entropy
                );
                let s = 1.0 / (n as f64 - 1.0);
                let r = q * logistic((td + ts) * s) + (1.0 - q) * logistic((td - ts) * s);
                assert!((fast - (n * (n - 1)) as f64 * binary_entropy(r)).abs() < 1e-9);
            }
        }
        let zero = entropy_edgecount_ds(0.0, 0.0, 7, 0.25).unwrap();
        assert!((zero - 42.0 * 2f64.ln()).abs() < 1e-9);
        assert!(
            entropy_edgecount(&StatisticSet::parse("D,R").unwrap(), &[0.0, 0.0], 4, 0.25).is_err()
        );
    }

    #[test]
    fn grid_shape() {
        let g = entropy_grid(7, 0.25, -10.0, 10.0, 5).unwrap();
        assert_eq!(g.len(), 25);
        let best = g
            .iter()
            .max_by(|a, b| a.entropy.total_cmp(&b.entropy))
            .unwrap();
        assert_eq!((best.theta_d, best.theta_s), (0.0, 0.0));
    }
}
