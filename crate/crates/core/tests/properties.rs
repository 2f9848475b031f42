use std::sync::Arc;

use proptest::prelude::*;
use tempfile::TempDir;

use tergm_core::degeneracy::{degeneracy_bounds, BoundOptions};
use tergm_core::evaluation::nearest_rank;
use tergm_core::ingest::{
    build_sliding_windows, load_series, save_series, LoadOptions, SeriesFormat, SponsorshipEvent,
};
use tergm_core::model::{edge_probabilities, log_likelihood};
use tergm_core::sampler::{sample_transition_exact, sample_transition_gibbs, SamplerConfig};
use tergm_core::{
    CustomStatistic, Network, NetworkSeries, NodeAttributes, ParameterVector, Statistic,
    StatisticSet, Term, TransitionModel,
};

fn network(n: usize) -> impl Strategy<Value = Network> {
    proptest::collection::vec(any::<bool>(), n * n).prop_map(move |bits| {
        let mut net = Network::empty(n);
        for i in 0..n {
            for j in 0..n {
                if i != j && bits[i * n + j] {
                    net.set(i, j, true);
                }
            }
        }
        net
    })
}

fn instance(max_n: usize, networks: usize) -> impl Strategy<Value = (Vec<Network>, Vec<usize>)> {
    (2..=max_n).prop_flat_map(move |n| {
        (
            proptest::collection::vec(network(n), networks),
            proptest::collection::vec(0..2usize, n),
        )
    })
}

fn all_builtins() -> StatisticSet {
    StatisticSet::builtin(&Statistic::ALL).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dense_json_file_round_trip((nets, labels) in instance(6, 3), hidden in 0..6usize) {
        let n = nets[0].n();
        let attrs = NodeAttributes::fully_observed(vec!["x".into(), "y".into()], labels).unwrap().with_hidden(&[hidden % n]);
        let series = NetworkSeries::new(nets).unwrap().with_attributes(attrs).unwrap();
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("series.json");
        save_series(&series, &path).unwrap();
        let back = load_series(&path, SeriesFormat::DenseJson, &LoadOptions::default()).unwrap();
        prop_assert_eq!(back, series);
    }

    #[test]
    fn snapshot_count_formula(events in 1..200usize, window in 1..200usize, step in 1..60usize) {
        prop_assume!(window <= events);
        let evs: Vec<SponsorshipEvent> = (0..events)
            .map(|e| SponsorshipEvent { proposal_id: e.to_string(), sponsor: e % 5, cosponsors: vec![(e + 1) % 5] })
            .collect();
        let series = build_sliding_windows(&evs, window, step, 5).unwrap();
        prop_assert_eq!(series.len(), (events - window) / step + 1);
    }

    #[test]
    fn single_window_ignores_event_order(seed in any::<u64>(), count in 2..40usize) {
        let evs: Vec<SponsorshipEvent> = (0..count)
            .map(|e| {
                let s = (seed.wrapping_mul(e as u64 + 1) % 8) as usize;
                SponsorshipEvent { proposal_id: e.to_string(), sponsor: s, cosponsors: vec![(s + 1 + e % 7) % 8] }
            })
            .collect();
        let mut reversed = evs.clone();
        reversed.reverse();
        reversed.rotate_left((seed % count as u64) as usize);
        prop_assert_eq!(build_sliding_windows(&evs, count, 1, 8).unwrap(), build_sliding_windows(&reversed, count, 1, 8).unwrap());
    }

    #[test]
    fn statistics_lie_in_zero_to_n((nets, labels) in instance(6, 2)) {
        let n = nets[0].n() as f64;
        let values = all_builtins().evaluate_all(&nets[1], &nets[0], Some(&labels)).unwrap();
        for (name, v) in all_builtins().names().iter().zip(values) {
            prop_assert!((-1e-12..=n + 1e-12).contains(&v), "{} = {} outside [0, {}]", name, v, n);
        }
    }

    #[test]
    fn statistics_are_linear_in_the_current_network((nets, labels) in instance(6, 2)) {
        let stats = all_builtins();
        let table = stats.change_scores(&nets[0], Some(&labels)).unwrap();
        let direct = stats.evaluate_all(&nets[1], &nets[0], Some(&labels)).unwrap();
        for (a, b) in table.reconstruct(&nets[1]).iter().zip(&direct) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn edge_probabilities_are_normalized((nets, _) in instance(5, 1), theta in proptest::collection::vec(-20.0..20.0f64, 4)) {
        let model = TransitionModel::new(StatisticSet::parse("D,S,R,T").unwrap(), ParameterVector(theta), None).unwrap();
        let probs = edge_probabilities(&model, &nets[0]).unwrap();
        for &p in probs.as_slice() {
            prop_assert!((0.0..=1.0).contains(&p));
            prop_assert_eq!(p + (1.0 - p), 1.0);
        }
    }

    #[test]
    fn log_likelihood_is_concave_along_segments(
        (nets, labels) in instance(4, 3),
        a in proptest::collection::vec(-5.0..5.0f64, 13),
        b in proptest::collection::vec(-5.0..5.0f64, 13),
        w in 0.0..1.0f64,
    ) {
        let series = NetworkSeries::new(nets).unwrap();
        let ll = |t: Vec<f64>| log_likelihood(&TransitionModel::new(all_builtins(), ParameterVector(t), Some(labels.clone())).unwrap(), &series).unwrap();
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| w * x + (1.0 - w) * y).collect();
        let (la, lb, lm) = (ll(a), ll(b), ll(mid));
        prop_assert!(lm >= w * la + (1.0 - w) * lb - 1e-9 * (1.0 + lm.abs()));
    }

    #[test]
    fn p_bound_decreases_with_parameter_size(theta in proptest::collection::vec(-5.0..5.0f64, 4), grow in 1.0..3.0f64, n in 3..30usize) {
        let stats = StatisticSet::parse("D,S,R,T").unwrap();
        let bigger: Vec<f64> = theta.iter().map(|v| v * grow).collect();
        let small = degeneracy_bounds(&stats, &theta, n, BoundOptions::default()).unwrap();
        let large = degeneracy_bounds(&stats, &bigger, n, BoundOptions::default()).unwrap();
        prop_assert!(large.p_bound <= small.p_bound);
        prop_assert!(small.expected_edges_lo <= small.expected_edges_hi);
    }

    #[test]
    fn nearest_rank_bands_stay_ordered(mut values in proptest::collection::vec(-100.0..100.0f64, 1..300), extra in -200.0..200.0f64) {
        values.sort_by(f64::total_cmp);
        prop_assert!(nearest_rank(&values, 5.0) <= nearest_rank(&values, 95.0));
        values.push(extra);
        values.sort_by(f64::total_cmp);
        prop_assert!(nearest_rank(&values, 5.0) <= nearest_rank(&values, 95.0));
    }
}

/// Mutual dyads of the current network: not linear in single dyads.
#[derive(Debug)]
struct Mutuality;

impl CustomStatistic for Mutuality {
    fn name(&self) -> &str {
        "mutual"
    }

    fn evaluate(&self, cur: &Network, _prev: &Network, _labels: Option<&[usize]>) -> f64 {
        let n = cur.n();
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| cur.has_edge(i, j) && cur.has_edge(j, i))
            .count() as f64
    }
}

fn mutual_model(theta: Vec<f64>) -> TransitionModel {
    let stats = StatisticSet::new(vec![
        Term::Builtin(Statistic::Density),
        Term::Builtin(Statistic::Stability),
        Term::Custom(Arc::new(Mutuality)),
    ])
    .unwrap();
    TransitionModel::new(stats, ParameterVector(theta), None).unwrap()
}

/// Total variation between Gibbs draws and the enumerated law over all networks on `n` nodes.
fn gibbs_total_variation(n: usize, theta: Vec<f64>, prev: &Network, sweeps: usize) -> f64 {
    let model = mutual_model(theta.clone());
    let states = 1u64 << (n * (n - 1));
    let weights: Vec<f64> = (0..states)
        .map(|b| {
            let cur = Network::from_bits(n, b);
            let psi = model.stats().evaluate_all(&cur, prev, None).unwrap();
            psi.iter()
                .zip(&theta)
                .map(|(p, t)| p * t)
                .sum::<f64>()
                .exp()
        })
        .collect();
    let z: f64 = weights.iter().sum();
    let cfg = SamplerConfig {
        seed: 17,
        burn_in: 50,
        thinning: 1,
        samples: sweeps,
        ..SamplerConfig::default()
    };
    let mut counts = vec![0usize; states as usize];
    for net in sample_transition_gibbs(&model, prev, &cfg).unwrap() {
        counts[net.to_bits() as usize] += 1;
    }
    0.5 * counts
        .iter()
        .zip(&weights)
        .map(|(&c, w)| (c as f64 / sweeps as f64 - w / z).abs())
        .sum::<f64>()
}

#[test]
fn gibbs_stationary_law_matches_enumeration_on_two_nodes() {
    let prev = Network::from_edges(2, &[(0, 1)]).unwrap();
    let tv = gibbs_total_variation(2, vec![-0.5, 1.0, 1.5], &prev, 100_000);
    assert!(tv < 0.02, "total variation {tv}");
}

#[test]
fn gibbs_stationary_law_matches_enumeration_on_three_nodes() {
    let prev = Network::from_edges(3, &[(0, 1), (1, 2), (2, 0)]).unwrap();
    let tv = gibbs_total_variation(3, vec![-1.0, 2.0, 1.0], &prev, 50_000);
    assert!(tv < 0.05, "total variation {tv}");
}

#[test]
fn exact_and_gibbs_samplers_agree_on_factorized_models() {
    let stats = StatisticSet::parse("D,S,R,T").unwrap();
    let model = TransitionModel::new(
        stats.clone(),
        ParameterVector(vec![-2.0, 3.0, 1.0, 0.5]),
        None,
    )
    .unwrap();
    let prev =
        Network::from_edges(6, &[(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (1, 0), (5, 3)]).unwrap();
    let cfg = SamplerConfig {
        seed: 5,
        burn_in: 10,
        thinning: 2,
        samples: 4000,
        ..SamplerConfig::default()
    };
    let moments = |draws: Vec<Network>| {
        let values: Vec<Vec<f64>> = draws
            .iter()
            .map(|a| stats.evaluate_all(a, &prev, None).unwrap())
            .collect();
        let b = values.len() as f64;
        (0..stats.len())
            .map(|m| {
                let mean = values.iter().map(|v| v[m]).sum::<f64>() / b;
                let var = values.iter().map(|v| (v[m] - mean).powi(2)).sum::<f64>() / (b - 1.0);
                (mean, var / b)
            })
            .collect::<Vec<_>>()
    };
    let exact = moments(sample_transition_exact(&model, &prev, &cfg).unwrap());
    let gibbs = moments(
        sample_transition_gibbs(
            &model,
            &prev,
            &SamplerConfig {
                seed: 6,
                ..cfg.clone()
            },
        )
        .unwrap(),
    );
    for (m, ((a, va), (b, vb))) in exact.iter().zip(&gibbs).enumerate() {
        assert!(
            (a - b).abs() <= 3.0 * (va + vb).sqrt(),
            "statistic {m}: {a} vs {b}"
        );
    }
}
