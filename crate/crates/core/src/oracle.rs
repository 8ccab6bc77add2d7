//! Seeded Monte Carlo simulation of qudit loss, storage and depolarization.
//!
//! Used as an independent check of [`crate::fidelity`]. Trials are split into
//! fixed blocks of [`BLOCK_TRIALS`]; block `b` draws from a ChaCha8 stream keyed
//! by the seed (little-endian in the first 8 key bytes, zeros elsewhere) with
//! stream id `b`. Uniform reals are `(next_u64 >> 11) * 2^-53`. Block tallies
//! are integers, so the estimate does not depend on how many workers ran the
//! blocks.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, structural, Result};
use crate::fidelity::{qrs_tolerance, Coding, Configuration, FidelityParams};

/// Generator recorded alongside every estimate.
pub const GENERATOR: &str = "chacha8";

/// Trials per independent substream.
pub const BLOCK_TRIALS: u64 = 1 << 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialPlan {
    pub config: Configuration,
    pub params: FidelityParams,
    pub trials: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub trials: u64,
}

impl Estimate {
    /// Distance from `value` in units of the standard error.
    ///
    /// A zero standard error yields 0 for an exact match and infinity otherwise.
    pub fn z_score(&self, value: f64) -> f64 {
        let diff = (value - self.mean).abs();
        if self.std_error > 0.0 {
            diff / self.std_error
        } else if diff <= 1e-12 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

fn block_rng(seed: u64, block: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(block);
    rng
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn bernoulli(rng: &mut ChaCha8Rng, p: f64) -> bool {
    uniform(rng) < p
}

fn blocks(trials: u64) -> Vec<(u64, u64)> {
    let count = trials.div_ceil(BLOCK_TRIALS);
    (0..count)
        .map(|b| (b, BLOCK_TRIALS.min(trials - b * BLOCK_TRIALS)))
        .collect()
}

fn run_blocks<T, F, M>(workers: Option<usize>, trials: u64, block: F, merge: M) -> Result<T>
where
    T: Send + Default,
    F: Fn(u64, u64) -> T + Sync + Send,
    M: Fn(T, T) -> T + Sync + Send,
{
    let work = blocks(trials);
    let go = || {
        work.par_iter()
            .map(|&(b, n)| block(b, n))
            .reduce(T::default, &merge)
    };
    match workers {
        None => Ok(go()),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w.max(1))
                .build()
                .map_err(|e| domain(format!("cannot start worker pool: {e}")))?;
            Ok(pool.install(go))
        }
    }
}

fn check_plan(plan: &TrialPlan) -> Result<()> {
    if plan.trials == 0 {
        return Err(domain("a trial plan needs at least one trial"));
    }
    if plan.config.paths() != plan.params.paths() {
        return Err(structural("configuration and parameters disagree on the path count"));
    }
    Ok(())
}

/// Histogram of outcomes `D^-m` (index `m`) plus the count of lost packets.
#[derive(Debug, Default, Clone)]
struct UnencodedTally {
    by_depolarized: Vec<u64>,
}

impl UnencodedTally {
    fn merge(mut self, other: Self) -> Self {
        if other.by_depolarized.len() > self.by_depolarized.len() {
            self.by_depolarized.resize(other.by_depolarized.len(), 0);
        }
        for (a, b) in self.by_depolarized.iter_mut().zip(&other.by_depolarized) {
            *a += b;
        }
        self
    }
}

/// Monte Carlo estimate of the unencoded packet fidelity.
pub fn simulate_unencoded(plan: &TrialPlan) -> Result<Estimate> {
    simulate_unencoded_on(plan, None)
}

/// As [`simulate_unencoded`], on a dedicated pool of `workers` threads.
pub fn simulate_unencoded_with_workers(plan: &TrialPlan, workers: usize) -> Result<Estimate> {
    simulate_unencoded_on(plan, Some(workers))
}

fn simulate_unencoded_on(plan: &TrialPlan, workers: Option<usize>) -> Result<Estimate> {
    check_plan(plan)?;
    let Coding::Unencoded { dimension } = plan.config.coding() else {
        return Err(structural("unencoded simulation of an encoded configuration"));
    };
    let counts = plan.config.counts();
    let params = &plan.params;
    // the last used path to arrive sets the completion time
    let completion = counts
        .iter()
        .zip(params.dwell_s())
        .filter(|(&c, _)| c > 0)
        .map(|(_, &d)| d)
        .fold(f64::INFINITY, f64::min);
    let p_d: Vec<f64> = (0..counts.len())
        .map(|k| params.depolarization_between(k, completion))
        .collect();
    let total_qudits: u32 = counts.iter().sum();

    let tally = run_blocks(
        workers,
        plan.trials,
        |block, n| {
            let mut rng = block_rng(plan.seed, block);
            // slot 0..=total counts depolarized qudits, last slot counts losses
            let mut hist = vec![0u64; total_qudits as usize + 2];
            for _ in 0..n {
                let mut lost = false;
                let mut depolarized = 0usize;
                for (k, &count) in counts.iter().enumerate() {
                    for _ in 0..count {
                        if !bernoulli(&mut rng, params.p()[k]) {
                            lost = true;
                        } else if p_d[k] > 0.0 && bernoulli(&mut rng, p_d[k]) {
                            depolarized += 1;
                        }
                    }
                }
                if lost {
                    hist[total_qudits as usize + 1] += 1;
                } else {
                    hist[depolarized] += 1;
                }
            }
            UnencodedTally { by_depolarized: hist }
        },
        UnencodedTally::merge,
    )?;

    let d = f64::from(dimension);
    let trials = plan.trials as f64;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for (m, &count) in tally.by_depolarized.iter().enumerate().take(total_qudits as usize + 1) {
        let value = d.powi(-(m as i32));
        sum += count as f64 * value;
        sum_sq += count as f64 * value * value;
    }
    let mean = sum / trials;
    let variance = (sum_sq / trials - mean * mean).max(0.0);
    Ok(Estimate {
        mean,
        std_error: (variance / trials).sqrt(),
        trials: plan.trials,
    })
}

/// Monte Carlo estimate of the encoded decoding success probability.
pub fn simulate_encoded(plan: &TrialPlan) -> Result<Estimate> {
    simulate_encoded_on(plan, None)
}

/// As [`simulate_encoded`], on a dedicated pool of `workers` threads.
pub fn simulate_encoded_with_workers(plan: &TrialPlan, workers: usize) -> Result<Estimate> {
    simulate_encoded_on(plan, Some(workers))
}

fn simulate_encoded_on(plan: &TrialPlan, workers: Option<usize>) -> Result<Estimate> {
    check_plan(plan)?;
    let Coding::Qrs { n } = plan.config.coding() else {
        return Err(structural("encoded simulation of an unencoded configuration"));
    };
    let (t, _) = qrs_tolerance(n)?;
    let counts = plan.config.counts();
    let params = &plan.params;
    let dwell = params.dwell_s();
    let error_scale = 1.0 - 1.0 / f64::from(n * n);

    // candidate decode moments: arrival times of used paths, earliest first
    let mut moments: Vec<f64> = counts
        .iter()
        .zip(dwell)
        .filter(|(&c, _)| c > 0)
        .map(|(_, &d)| d)
        .collect();
    moments.sort_by(|a, b| b.total_cmp(a));
    moments.dedup();

    let successes = run_blocks(
        workers,
        plan.trials,
        |block, trials| {
            let mut rng = block_rng(plan.seed, block);
            let mut lost = vec![0u32; counts.len()];
            let mut ok = 0u64;
            for _ in 0..trials {
                for (k, &count) in counts.iter().enumerate() {
                    lost[k] = (0..count)
                        .filter(|_| !bernoulli(&mut rng, params.p()[k]))
                        .count() as u32;
                }
                let moment = moments.iter().copied().find_map(|m| {
                    let erased: u32 = (0..counts.len())
                        .map(|k| if dwell[k] >= m { lost[k] } else { counts[k] })
                        .sum();
                    (erased <= t).then_some((m, erased))
                });
                let Some((m, erased)) = moment else {
                    continue;
                };
                let mut errors = 0u32;
                for k in 0..counts.len() {
                    if counts[k] == 0 || dwell[k] <= m {
                        continue;
                    }
                    let p_err = params.depolarization_between(k, m) * error_scale;
                    for _ in 0..counts[k] - lost[k] {
                        if bernoulli(&mut rng, p_err) {
                            errors += 1;
                        }
                    }
                }
                if 2 * errors + erased <= t {
                    ok += 1;
                }
            }
            ok
        },
        |a, b| a + b,
    )?;

    let mean = successes as f64 / plan.trials as f64;
    Ok(Estimate {
        mean,
        std_error: (mean * (1.0 - mean) / plan.trials as f64).sqrt(),
        trials: plan.trials,
    })
}

/// Runs whichever simulator matches the plan's coding.
pub fn simulate(plan: &TrialPlan) -> Result<Estimate> {
    match plan.config.coding() {
        Coding::Unencoded { .. } => simulate_unencoded(plan),
        Coding::Qrs { .. } => simulate_encoded(plan),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan(label: &str, p1: f64, p2: f64, p_d: f64, trials: u64) -> TrialPlan {
        TrialPlan {
            config: label.parse().unwrap(),
            params: FidelityParams::with_depolarization(vec![p1, p2], &[p_d, 0.0]).unwrap(),
            trials,
            seed: 0x5eed,
        }
    }

    #[test]
    fn lossless_runs_are_exact() {
        let e = simulate_unencoded(&plan("5+0/u7", 1.0, 0.5, 0.0, 10_000)).unwrap();
        assert_eq!(e.mean, 1.0);
        assert_eq!(e.std_error, 0.0);
        let e = simulate_encoded(&plan("5+2/n7", 1.0, 1.0, 0.0, 10_000)).unwrap();
        assert_eq!(e.mean, 1.0);
    }

    #[test]
    fn zero_trials_rejected() {
        assert!(matches!(
            simulate_unencoded(&plan("5+0/u7", 0.9, 0.9, 0.0, 0)),
            Err(crate::Error::Domain(_))
        ));
        assert!(simulate_encoded(&plan("5+0/n5", 0.9, 0.9, 0.0, 0)).is_err());
    }

    #[test]
    fn wrong_coding_rejected() {
        assert!(simulate_unencoded(&plan("5+0/n5", 0.9, 0.9, 0.0, 10)).is_err());
        assert!(simulate_encoded(&plan("5+0/u7", 0.9, 0.9, 0.0, 10)).is_err());
    }

    #[test]
    fn block_layout() {
        assert_eq!(blocks(1), vec![(0, 1)]);
        assert_eq!(blocks(BLOCK_TRIALS + 3), vec![(0, BLOCK_TRIALS), (1, 3)]);
    }

    #[test]
    fn same_seed_same_estimate() {
        let p = plan("4+1/u7", 0.95, 0.945, 0.05, 200_000);
        let a = simulate_unencoded(&p).unwrap();
        let b = simulate_unencoded(&p).unwrap();
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
    }

    #[test]
    fn worker_count_does_not_change_totals() {
        let p = plan("5+2/n7", 0.9, 0.7, 0.3, 300_000);
        let one = simulate_encoded_with_workers(&p, 1).unwrap();
        let three = simulate_encoded_with_workers(&p, 3).unwrap();
        let eight = simulate_encoded_with_workers(&p, 8).unwrap();
        assert_eq!(one, three);
        assert_eq!(one, eight);
        let p = plan("3+2/u7", 0.9, 0.7, 0.3, 300_000);
        assert_eq!(
            simulate_unencoded_with_workers(&p, 1).unwrap(),
            simulate_unencoded_with_workers(&p, 5).unwrap()
        );
    }

    #[test]
    fn different_seeds_differ() {
        let mut p = plan("5+0/n5", 0.9, 0.0, 0.0, 100_000);
        let a = simulate_encoded(&p).unwrap();
        p.seed += 1;
        let b = simulate_encoded(&p).unwrap();
        assert_ne!(a.mean, b.mean);
    }
}
