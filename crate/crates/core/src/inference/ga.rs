//! Real-valued genetic search for a noisy objective.
//!
//! Elitism keeps the best member; the rest of each generation is bred by
//! tournament selection, uniform crossover and Gaussian mutation whose
//! scale shrinks geometrically. The reported optimum is a running maximum
//! over every candidate ever evaluated.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TergmError};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GAConfig {
    pub population: usize,
    pub generations: usize,
    pub mutation_sigma_initial: f64,
    /// Mutation scale multiplier per generation, in `(0, 1)`.
    pub sigma_decay: f64,
    pub tournament_size: usize,
    /// Simulated series per candidate when estimating its objective.
    pub sequences_per_candidate: usize,
    pub seed: u64,
}

impl Default for GAConfig {
    fn default() -> Self {
        GAConfig {
            population: 20,
            generations: 30,
            mutation_sigma_initial: 10.0,
            sigma_decay: 0.9,
            tournament_size: 3,
            sequences_per_candidate: 200,
            seed: 0,
        }
    }
}

impl GAConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(TergmError::InvalidConfig(
                "GA population must be at least 2".into(),
            ));
        }
        if self.generations == 0 || self.sequences_per_candidate == 0 || self.tournament_size == 0 {
            return Err(TergmError::InvalidConfig(
                "GA counts must be positive".into(),
            ));
        }
        if !(self.sigma_decay > 0.0 && self.sigma_decay < 1.0) {
            return Err(TergmError::InvalidConfig(
                "sigma_decay must lie in (0, 1)".into(),
            ));
        }
        if !(self.mutation_sigma_initial >= 0.0) || !self.mutation_sigma_initial.is_finite() {
            return Err(TergmError::InvalidConfig(
                "mutation sigma must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaOutcome {
    pub best: Vec<f64>,
    /// Running maximum of the objective; NaN only if every candidate was invalid.
    pub best_value: f64,
    /// Running maximum after each generation.
    pub trace: Vec<f64>,
    pub evaluated: usize,
    /// Candidates whose objective came back NaN.
    pub invalid: usize,
}

fn better(a: f64, b: f64) -> bool {
    !a.is_nan() && (b.is_nan() || a > b)
}

/// Maximises `objective(x, stream_seed)` starting from a cloud around `center`.
/// `NaN` marks an invalid candidate: it never wins a tournament nor the maximum.
pub fn maximize<F>(center: &[f64], config: &GAConfig, objective: F) -> Result<GaOutcome>
where
    F: Fn(&[f64], u64) -> f64 + Sync,
{
    config.validate()?;
    let dim = center.len();
    let init_noise = Normal::new(0.0, config.mutation_sigma_initial.max(f64::MIN_POSITIVE))
        .map_err(|e| TergmError::InvalidConfig(e.to_string()))?;
    let mut rng = rng::stream(config.seed, &[0]);
    let mut population: Vec<Vec<f64>> = (0..config.population)
        .map(|m| {
            if m == 0 {
                center.to_vec()
            } else {
                center
                    .iter()
                    .map(|c| c + init_noise.sample(&mut rng))
                    .collect()
            }
        })
        .collect();
    // the carried-over elite keeps its score instead of being re-estimated
    let mut elite: Option<(Vec<f64>, f64)> = None;
    let mut best = center.to_vec();
    let mut best_value = f64::NAN;
    let mut trace = Vec::with_capacity(config.generations);
    let mut evaluated = 0;
    let mut invalid = 0;
    for generation in 0..config.generations {
        let scores: Vec<f64> = population
            .par_iter()
            .enumerate()
            .map(|(m, x)| match &elite {
                Some((e, v)) if m == 0 && e == x => *v,
                _ => objective(
                    x,
                    rng::derive_seed(config.seed, &[1, generation as u64, m as u64]),
                ),
            })
            .collect();
        for (m, (x, &v)) in population.iter().zip(&scores).enumerate() {
            if m == 0 && elite.is_some() {
                continue;
            }
            evaluated += 1;
            if v.is_nan() {
                invalid += 1;
            }
            if better(v, best_value) {
                best_value = v;
                best = x.clone();
            }
        }
        trace.push(best_value);
        if generation + 1 == config.generations {
            break;
        }

        let mut rng = rng::stream(config.seed, &[2, generation as u64]);
        let sigma = config.mutation_sigma_initial * config.sigma_decay.powi(generation as i32 + 1);
        let mutation = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE))
            .map_err(|e| TergmError::InvalidConfig(e.to_string()))?;
        let leader =
            (0..population.len()).fold(0, |b, m| if better(scores[m], scores[b]) { m } else { b });
        let tournament = |rng: &mut rng::StreamRng| {
            let mut pick = rng.random_range(0..population.len());
            for _ in 1..config.tournament_size {
                let c = rng.random_range(0..population.len());
                if better(scores[c], scores[pick]) {
                    pick = c;
                }
            }
            pick
        };
        let mut next = Vec::with_capacity(config.population);
        next.push(population[leader].clone());
        while next.len() < config.population {
            let a = tournament(&mut rng);
            let b = tournament(&mut rng);
            let child: Vec<f64> = (0..dim)
                .map(|d| {
                    let gene = if rng.random::<bool>() {
                        population[a][d]
                    } else {
                        population[b][d]
                    };
                    gene + if sigma > 0.0 {
                        mutation.sample(&mut rng)
                    } else {
                        0.0
                    }
                })
                .collect();
            next.push(child);
        }
        elite = Some((population[leader].clone(), scores[leader]));
        population = next;
    }
    Ok(GaOutcome {
        best,
        best_value,
        trace,
        evaluated,
        invalid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(x: &[f64], _: u64) -> f64 {
        -x.iter().map(|v| (v - 1.5) * (v - 1.5)).sum::<f64>()
    }

    #[test]
    fn finds_sphere_optimum() {
        let cfg = GAConfig {
            population: 30,
            generations: 60,
            mutation_sigma_initial: 3.0,
            ..GAConfig::default()
        };
        let out = maximize(&[0.0, 0.0, 0.0], &cfg, sphere).unwrap();
        assert!(out.best_value > -0.05, "{out:?}");
        assert!(out.trace.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn more_generations_never_lower_the_maximum() {
        let noisy = |x: &[f64], seed: u64| {
            let mut r = rng::stream(seed, &[]);
            sphere(x, 0) + r.random::<f64>()
        };
        let short = GAConfig {
            population: 6,
            generations: 4,
            seed: 3,
            ..GAConfig::default()
        };
        let long = GAConfig {
            generations: 12,
            ..short.clone()
        };
        let a = maximize(&[0.0, 0.0], &short, noisy).unwrap();
        let b = maximize(&[0.0, 0.0], &long, noisy).unwrap();
        assert_eq!(&b.trace[..4], &a.trace[..]);
        assert!(b.best_value >= a.best_value);
    }

    #[test]
    fn invalid_candidates_are_skipped() {
        let cfg = GAConfig {
            population: 8,
            generations: 5,
            mutation_sigma_initial: 1.0,
            ..GAConfig::default()
        };
        let out = maximize(
            &[0.0],
            &cfg,
            |x, _| if x[0] > 0.0 { f64::NAN } else { x[0] },
        )
        .unwrap();
        assert!(out.best_value <= 0.0);
        assert!(out.invalid > 0);
        assert_eq!(out.evaluated, 8 + 4 * 7);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(GAConfig {
            population: 1,
            ..GAConfig::default()
        }
        .validate()
        .is_err());
        assert!(GAConfig {
            sigma_decay: 1.0,
            ..GAConfig::default()
        }
        .validate()
        .is_err());
    }
}
