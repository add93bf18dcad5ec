//! Monte Carlo oracle for finite stochastic chains.
//!
//! Streams come from ChaCha20 (`rand_chacha::ChaCha20Rng`) seeded with
//! `seed_from_u64(seed)`; replica `r` uses stream `4 r + task`, where task 0
//! is the long path, 1 the k-step restarts and 2 the return excursions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::banded::DenseMatrix;
use crate::error::{Error, Result};
use crate::scalar::CompensatedSum;

/// Below this many samples the estimates carry a warning.
pub const MIN_SAMPLES: u64 = 100_000;
const BATCHES: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub steps: u64,
    pub replicas: u32,
    pub start_state: usize,
    pub burn_in: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { seed: 0, steps: 1_000_000, replicas: 1, start_state: 0, burn_in: 1000 }
    }
}

/// Cumulative distribution of every row, restricted to its nonzero span.
#[derive(Debug, Clone)]
pub struct Sampler {
    rows: Vec<(usize, Vec<f64>)>,
}

impl Sampler {
    pub fn new(t: &DenseMatrix, tol_row: f64) -> Result<Self> {
        let n = t.nrows();
        if t.ncols() != n {
            return Err(Error::DimensionMismatch(format!("{}x{} matrix is not square", n, t.ncols())));
        }
        let mut rows = Vec::with_capacity(n);
        for i in 0..n {
            let lo = (0..n).find(|&j| t[(i, j)] != 0.0).unwrap_or(0);
            let hi = (0..n).rev().find(|&j| t[(i, j)] != 0.0).unwrap_or(0);
            let mut acc = CompensatedSum::default();
            let mut cdf = Vec::with_capacity(hi + 1 - lo);
            for j in lo..=hi {
                if t[(i, j)] < 0.0 {
                    return Err(Error::NotStochastic { row: i, sum: t.row(i).sum() });
                }
                acc.add(t[(i, j)]);
                cdf.push(acc.value());
            }
            let sum = acc.value();
            if (sum - 1.0).abs() > tol_row {
                return Err(Error::NotStochastic { row: i, sum });
            }
            rows.push((lo, cdf));
        }
        Ok(Sampler { rows })
    }

    pub fn states(&self) -> usize {
        self.rows.len()
    }

    #[inline]
    pub fn step(&self, state: usize, rng: &mut impl Rng) -> usize {
        let (lo, cdf) = &self.rows[state];
        let u: f64 = rng.gen::<f64>() * cdf[cdf.len() - 1];
        let k = cdf.partition_point(|&c| c <= u);
        lo + k.min(cdf.len() - 1)
    }
}

fn stream(seed: u64, replica: u32, task: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(4 * replica as u64 + task);
    rng
}

fn check_start(sampler: &Sampler, cfg: &SimConfig) -> Result<()> {
    if cfg.start_state >= sampler.states() {
        return Err(Error::StateOutOfRange { state: cfg.start_state, max: sampler.states() - 1 });
    }
    if cfg.steps == 0 || cfg.replicas == 0 {
        return Err(Error::InvalidInput("steps and replicas must be at least 1".into()));
    }
    Ok(())
}

/// Path of replica 0: `steps + 1` states starting at `start_state`.
pub fn sample_path(t: &DenseMatrix, cfg: &SimConfig) -> Result<Vec<usize>> {
    let sampler = Sampler::new(t, 1e-12)?;
    check_start(&sampler, cfg)?;
    let mut rng = stream(cfg.seed, 0, 0);
    let mut path = Vec::with_capacity(cfg.steps as usize + 1);
    let mut x = cfg.start_state;
    path.push(x);
    for _ in 0..cfg.steps {
        x = sampler.step(x, &mut rng);
        path.push(x);
    }
    Ok(path)
}

#[derive(Debug, Clone, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Estimates {
    /// Occupancy fractions after burn-in.
    pub stationary: Vec<Estimate>,
    /// `(T^k)_{start, m}` from restarts at the start state.
    pub kstep: Vec<Estimate>,
    pub k: u32,
    /// `f^r_{start,start}` for `r = 1..=first_passage.len()`.
    pub first_passage: Vec<Estimate>,
    pub return_time: Estimate,
    /// Excursions cut off by the step budget.
    pub censored_excursions: u64,
    pub samples: u64,
    pub warnings: Vec<String>,
}

struct ReplicaOut {
    batches: Vec<Vec<f64>>,
    kstep_counts: Vec<u64>,
    kstep_trials: u64,
    first_passage: Vec<u64>,
    returns: Vec<u64>,
    censored: u64,
}

fn run_replica(sampler: &Sampler, cfg: &SimConfig, replica: u32, k: u32, max_r: usize) -> ReplicaOut {
    let n = sampler.states();
    let steps = cfg.steps;
    // Long path for occupancy, split into batches for batch-means errors.
    let mut rng = stream(cfg.seed, replica, 0);
    let mut x = cfg.start_state;
    for _ in 0..cfg.burn_in {
        x = sampler.step(x, &mut rng);
    }
    let per_batch = (steps / BATCHES as u64).max(1);
    let mut batches = Vec::with_capacity(BATCHES);
    let mut done = 0;
    while done < steps {
        let len = per_batch.min(steps - done);
        let mut counts = vec![0u64; n];
        for _ in 0..len {
            x = sampler.step(x, &mut rng);
            counts[x] += 1;
        }
        if len == per_batch {
            batches.push(counts.iter().map(|&c| c as f64 / len as f64).collect());
        }
        done += len;
    }

    let mut rng = stream(cfg.seed, replica, 1);
    let mut kstep_counts = vec![0u64; n];
    let trials = (steps / k.max(1) as u64).max(1);
    for _ in 0..trials {
        let mut y = cfg.start_state;
        for _ in 0..k {
            y = sampler.step(y, &mut rng);
        }
        kstep_counts[y] += 1;
    }

    let mut rng = stream(cfg.seed, replica, 2);
    let mut first_passage = vec![0u64; max_r];
    let mut returns = Vec::new();
    let mut censored = 0;
    let mut budget = steps;
    while budget > 0 {
        let mut y = cfg.start_state;
        let mut r = 0u64;
        loop {
            y = sampler.step(y, &mut rng);
            r += 1;
            budget -= 1;
            if y == cfg.start_state {
                if (r as usize) <= max_r {
                    first_passage[r as usize - 1] += 1;
                }
                returns.push(r);
                break;
            }
            if budget == 0 {
                censored += 1;
                break;
            }
        }
    }
    ReplicaOut { batches, kstep_counts, kstep_trials: trials, first_passage, returns, censored }
}

fn binomial(count: u64, trials: u64) -> Estimate {
    let p = count as f64 / trials as f64;
    Estimate { value: p, se: (p * (1.0 - p) / trials as f64).sqrt() }
}

fn mean_se(values: impl Iterator<Item = f64> + Clone) -> Estimate {
    let n = values.clone().count() as f64;
    let mean: CompensatedSum = values.clone().collect();
    let mean = mean.value() / n;
    let var: CompensatedSum = values.map(|v| (v - mean) * (v - mean)).collect();
    let var = if n > 1.0 { var.value() / (n - 1.0) } else { 0.0 };
    Estimate { value: mean, se: (var / n).sqrt() }
}

/// Occupancy, k-step, first-passage and return-time estimates with standard
/// errors. Replicas run in parallel and are merged in replica order.
pub fn empirical_estimates(t: &DenseMatrix, cfg: &SimConfig, k: u32, max_r: usize) -> Result<Estimates> {
    let sampler = Sampler::new(t, 1e-12)?;
    check_start(&sampler, cfg)?;
    let n = sampler.states();
    let outs: Vec<ReplicaOut> =
        (0..cfg.replicas).into_par_iter().map(|r| run_replica(&sampler, cfg, r, k, max_r)).collect();

    let batches: Vec<&Vec<f64>> = outs.iter().flat_map(|o| o.batches.iter()).collect();
    let stationary = (0..n).map(|s| mean_se(batches.iter().map(move |b| b[s]))).collect();

    let trials: u64 = outs.iter().map(|o| o.kstep_trials).sum();
    let kstep = (0..n).map(|m| binomial(outs.iter().map(|o| o.kstep_counts[m]).sum(), trials)).collect();

    let returns: Vec<u64> = outs.iter().flat_map(|o| o.returns.iter().copied()).collect();
    let censored: u64 = outs.iter().map(|o| o.censored).sum();
    let excursions = returns.len() as u64 + censored;
    let first_passage =
        (0..max_r).map(|r| binomial(outs.iter().map(|o| o.first_passage[r]).sum(), excursions.max(1))).collect();
    let return_time = mean_se(returns.iter().map(|&r| r as f64));

    let samples = cfg.steps * cfg.replicas as u64;
    let mut warnings = Vec::new();
    if samples < MIN_SAMPLES {
        warnings.push(Error::InsufficientSamples { samples, min: MIN_SAMPLES }.to_string());
    }
    Ok(Estimates { stationary, kstep, k, first_passage, return_time, censored_excursions: censored, samples, warnings })
}

/// Killed-walk estimate of the first-return generating function
/// `F_{m,m}(s)`: each excursion from `m` survives every step with
/// probability `s` and counts as a return when it reaches `m` alive.
/// Excursions are started until `steps` transitions have been spent.
pub fn first_return_gf(t: &DenseMatrix, state: usize, s: f64, steps: u64, seed: u64) -> Result<Estimate> {
    if !(0.0..1.0).contains(&s) {
        return Err(Error::SOutOfRange { s });
    }
    let sampler = Sampler::new(t, 1e-12)?;
    if state >= sampler.states() {
        return Err(Error::StateOutOfRange { state, max: sampler.states() - 1 });
    }
    let mut rng = stream(seed, 0, 3);
    let (mut returned, mut trials, mut spent) = (0u64, 0u64, 0u64);
    while spent < steps {
        trials += 1;
        let mut y = state;
        loop {
            if rng.gen::<f64>() >= s {
                break;
            }
            y = sampler.step(y, &mut rng);
            spent += 1;
            if y == state {
                returned += 1;
                break;
            }
        }
    }
    Ok(binomial(returned, trials))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> DenseMatrix {
        DenseMatrix::from_row_slice(2, 2, &[2.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0])
    }

    #[test]
    fn paths_repeat_per_seed() {
        let cfg = SimConfig { seed: 9, steps: 1000, ..Default::default() };
        let a = sample_path(&fixture(), &cfg).unwrap();
        assert_eq!(a.len(), 1001);
        assert_eq!(a, sample_path(&fixture(), &cfg).unwrap());
        let other = SimConfig { seed: 10, ..cfg };
        assert_ne!(a, sample_path(&fixture(), &other).unwrap());
    }

    #[test]
    fn rejects_non_stochastic() {
        let t = DenseMatrix::from_row_slice(2, 2, &[0.5, 0.4, 0.5, 0.5]);
        assert!(matches!(Sampler::new(&t, 1e-12), Err(Error::NotStochastic { row: 0, .. })));
    }

    #[test]
    fn small_runs_warn() {
        let cfg = SimConfig { steps: 1000, burn_in: 0, ..Default::default() };
        let e = empirical_estimates(&fixture(), &cfg, 2, 5).unwrap();
        assert_eq!(e.warnings.len(), 1);
    }
}
