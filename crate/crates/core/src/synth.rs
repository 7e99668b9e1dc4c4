//! Synthetic episodes with label-dependent (missing-not-at-random)
//! measurement schedules.
//!
//! Per episode:
//! 1. labels `y_k ~ Bernoulli(prevalence_k)`;
//! 2. per variable, a mean-reverting latent walk around a label-dependent
//!    level, squashed through the logistic into the variable's range;
//! 3. per variable, either missing for the whole stay or measured in each
//!    hour with probability `base · exp(β · s_v(y))` clipped to `[0, 1]`,
//!    where `s_v` is a fixed random projection of the label vector.
//!
//! With `β = 0` the schedule is independent of the labels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{discretize, Observation, RawEpisode, VariableSpec};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthVariable {
    pub name: String,
    pub low: f64,
    pub high: f64,
    /// Target fraction of missing cells in the hourly grid.
    pub fraction_missing: f64,
    /// Probability the variable is never measured during a stay.
    pub missing_entirely: f64,
}

impl SynthVariable {
    /// Hourly measurement probability that yields `fraction_missing` given
    /// `missing_entirely`: `f = e + (1 − e)(1 − p)`.
    pub fn hourly_rate(&self) -> f64 {
        if self.missing_entirely >= 1.0 {
            return 0.0;
        }
        (1.0 - (self.fraction_missing - self.missing_entirely) / (1.0 - self.missing_entirely))
            .clamp(0.0, 1.0)
    }
}

/// Measurement statistics of the 13 pediatric ICU variables, paired with
/// static ranges.
#[allow(clippy::approx_constant)]
pub fn default_variables() -> Vec<SynthVariable> {
    let stats: [(f64, f64); 13] = [
        (0.1571, 0.0135),
        (0.1569, 0.0135),
        (0.5250, 0.0140),
        (0.5727, 0.5710),
        (0.7873, 0.1545),
        (0.5250, 0.0149),
        (0.9265, 0.1323),
        (0.0329, 0.0133),
        (0.9384, 0.3053),
        (0.0465, 0.0147),
        (0.0326, 0.0022),
        (0.5235, 0.0137),
        (0.5980, 0.0353),
    ];
    crate::ingest::default_variable_specs()
        .into_iter()
        .zip(stats)
        .map(|(s, (fraction_missing, missing_entirely))| SynthVariable {
            name: s.name,
            low: s.range_low,
            high: s.range_high,
            fraction_missing,
            missing_entirely,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub num_episodes: usize,
    pub num_labels: usize,
    /// Stay length in whole hours, uniform on `[min_hours, max_hours]`.
    pub min_hours: usize,
    pub max_hours: usize,
    pub variables: Vec<SynthVariable>,
    /// Label prevalences are drawn uniformly from this range.
    pub prevalence: (f64, f64),
    /// MNAR coupling strength β.
    pub mnar_strength: f64,
    /// Standard deviation of the label → schedule projection entries.
    pub projection_scale: f64,
    /// Standard deviation of the label → latent level effects.
    pub value_effect: f64,
    /// Chance of a second measurement in an hour that is measured.
    pub extra_measurement_prob: f64,
    /// Measurement noise as a fraction of the variable range.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_episodes: 1000,
            num_labels: 10,
            min_hours: 12,
            max_hours: 96,
            variables: default_variables(),
            prevalence: (0.05, 0.3),
            mnar_strength: 1.0,
            projection_scale: 0.3,
            value_effect: 0.4,
            extra_measurement_prob: 0.2,
            noise: 0.03,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Config(m));
        if self.num_episodes < 1 {
            return bad("num_episodes must be at least 1".into());
        }
        if self.num_labels < 1 {
            return bad("num_labels must be at least 1".into());
        }
        if self.variables.is_empty() {
            return bad("at least one variable is required".into());
        }
        if self.min_hours < 1 || self.min_hours > self.max_hours {
            return bad(format!(
                "invalid hour range {}..={}",
                self.min_hours, self.max_hours
            ));
        }
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !prob(self.prevalence.0)
            || !prob(self.prevalence.1)
            || self.prevalence.0 > self.prevalence.1
        {
            return bad("prevalence range must lie in [0, 1]".into());
        }
        if self.mnar_strength.is_nan() || self.mnar_strength < 0.0 {
            return bad("mnar_strength must be non-negative".into());
        }
        if !prob(self.extra_measurement_prob) {
            return bad("extra_measurement_prob must lie in [0, 1]".into());
        }
        if self.projection_scale < 0.0 || self.value_effect < 0.0 || self.noise < 0.0 {
            return bad("scales must be non-negative".into());
        }
        for v in &self.variables {
            if !prob(v.fraction_missing) || !prob(v.missing_entirely) {
                return bad(format!("{}: probabilities must lie in [0, 1]", v.name));
            }
            if v.fraction_missing < v.missing_entirely {
                return bad(format!(
                    "{}: fraction_missing below missing_entirely",
                    v.name
                ));
            }
            if v.low.partial_cmp(&v.high) != Some(std::cmp::Ordering::Less) {
                return bad(format!("{}: low must be below high", v.name));
            }
        }
        Ok(())
    }

    pub fn variable_specs(&self) -> Vec<VariableSpec> {
        self.variables
            .iter()
            .enumerate()
            .map(|(i, v)| VariableSpec::new(i, &v.name, v.low, v.high))
            .collect()
    }
}

/// Fixed per-world parameters shared by every episode of one seed.
struct World {
    prevalence: Vec<f64>,
    /// `D × K` label → schedule projection.
    schedule: Vec<Vec<f64>>,
    /// Baseline latent level per variable.
    level: Vec<f64>,
    /// `D × K` label → latent level effects.
    level_effect: Vec<Vec<f64>>,
}

impl World {
    fn sample(cfg: &SynthConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(0);
        let d = cfg.variables.len();
        let k = cfg.num_labels;
        let (lo, hi) = cfg.prevalence;
        let prevalence = (0..k).map(|_| lo + (hi - lo) * rng.gen::<f64>()).collect();
        let gaussian_table = |scale: f64, rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
            let n = Normal::new(0.0, 1.0).unwrap();
            (0..d)
                .map(|_| (0..k).map(|_| scale * n.sample(rng)).collect())
                .collect()
        };
        let schedule = gaussian_table(cfg.projection_scale, &mut rng);
        let level_effect = gaussian_table(cfg.value_effect, &mut rng);
        let level = (0..d).map(|_| rng.gen_range(-2.0..1.0)).collect();
        Self {
            prevalence,
            schedule,
            level,
            level_effect,
        }
    }
}

fn sample_episode(cfg: &SynthConfig, world: &World, index: usize) -> RawEpisode {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64 + 1);
    let std_normal = Normal::new(0.0, 1.0).unwrap();

    let labels: Vec<u8> = world
        .prevalence
        .iter()
        .map(|&p| (rng.gen::<f64>() < p) as u8)
        .collect();
    let hours = rng.gen_range(cfg.min_hours..=cfg.max_hours);
    let offset = rng.gen_range(0.0..24.0);

    // (hour, variable, within-hour fraction, value)
    let mut events: Vec<(usize, usize, f64, f64)> = Vec::new();
    for (v, var) in cfg.variables.iter().enumerate() {
        let y_dot =
            |row: &[f64]| -> f64 { row.iter().zip(&labels).map(|(a, &y)| a * y as f64).sum() };
        let mean_level = world.level[v] + y_dot(&world.level_effect[v]);
        let rate = (var.hourly_rate() * (cfg.mnar_strength * y_dot(&world.schedule[v])).exp())
            .clamp(0.0, 1.0);
        let absent = rng.gen::<f64>() < var.missing_entirely;
        let mut z = mean_level + 0.5 * std_normal.sample(&mut rng);
        for h in 0..hours {
            z = 0.9 * z + 0.1 * mean_level + 0.2 * std_normal.sample(&mut rng);
            if absent || rng.gen::<f64>() >= rate {
                continue;
            }
            let n = if rng.gen::<f64>() < cfg.extra_measurement_prob {
                2
            } else {
                1
            };
            for _ in 0..n {
                let frac = z.exp() / (1.0 + z.exp()) + cfg.noise * std_normal.sample(&mut rng);
                let value = var.low + (var.high - var.low) * frac;
                events.push((h, v, rng.gen::<f64>(), value));
            }
        }
    }
    if events.is_empty() {
        // keep the episode valid: a single measurement of the most frequently
        // charted variable at the start of the stay
        let v = (0..cfg.variables.len())
            .max_by(|&a, &b| {
                cfg.variables[a]
                    .hourly_rate()
                    .total_cmp(&cfg.variables[b].hourly_rate())
            })
            .unwrap();
        let var = &cfg.variables[v];
        events.push((0, v, 0.0, 0.5 * (var.low + var.high)));
    }
    // the earliest event sits exactly on its hour boundary so that hourly
    // bins after anchoring coincide with the generating hours
    let first = events
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 .0, a.1 .2).partial_cmp(&(b.1 .0, b.1 .2)).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    events[first].2 = 0.0;
    let observations = events
        .into_iter()
        .map(|(h, variable, frac, value)| Observation {
            variable,
            time: offset + h as f64 + frac,
            value,
        })
        .collect();
    RawEpisode {
        id: format!("ep{index:06}"),
        observations,
        labels,
    }
}

pub fn generate(cfg: &SynthConfig) -> Result<Vec<RawEpisode>, SynthError> {
    cfg.validate()?;
    let world = World::sample(cfg);
    Ok((0..cfg.num_episodes)
        .map(|i| sample_episode(cfg, &world, i))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingnessSummary {
    /// Mean raw measurements per hour over episodes where the variable
    /// appears at least once.
    pub measurements_per_hour: f64,
    /// Fraction of episodes with no measurement at all.
    pub missing_entirely: f64,
    /// Fraction of unobserved cells across all hourly grids.
    pub fraction_missing: f64,
}

pub fn summarize_missingness(episodes: &[RawEpisode], num_vars: usize) -> Vec<MissingnessSummary> {
    assert!(!episodes.is_empty(), "need at least one episode");
    let mut rate_sum = vec![0.0; num_vars];
    let mut present = vec![0usize; num_vars];
    let mut missing_cells = vec![0usize; num_vars];
    let mut total_cells = 0usize;
    for ep in episodes {
        let g = discretize(ep, num_vars, 1.0).expect("episode satisfies ingest preconditions");
        let steps = g.num_steps();
        total_cells += steps;
        let mut counts = vec![0usize; num_vars];
        for o in &ep.observations {
            counts[o.variable] += 1;
        }
        for v in 0..num_vars {
            if counts[v] > 0 {
                present[v] += 1;
                rate_sum[v] += counts[v] as f64 / steps as f64;
            }
            missing_cells[v] += (0..steps).filter(|&t| !g.observed(t, v)).count();
        }
    }
    let n = episodes.len() as f64;
    (0..num_vars)
        .map(|v| MissingnessSummary {
            measurements_per_hour: if present[v] > 0 {
                rate_sum[v] / present[v] as f64
            } else {
                0.0
            },
            missing_entirely: 1.0 - present[v] as f64 / n,
            fraction_missing: missing_cells[v] as f64 / total_cells as f64,
        })
        .collect()
}
