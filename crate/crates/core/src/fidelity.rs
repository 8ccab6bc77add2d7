//! End-to-end fidelity of packets split over an aggregated route.
//!
//! Paths are indexed in arrival order (ascending delay, so nonincreasing dwell).
//! Unencoded packets fail on any qudit loss and every qudit stored while waiting
//! for a later path is depolarized with probability `p_d`. Encoded packets use
//! a quantum Reed-Solomon code of length `n` over dimension-`n` qudits that
//! corrects `e` erasures and `u` unlocated errors whenever `2u + e <= t`,
//! `t = (n - 1) / 2`.
//!
//! Encoded decoding happens at the earliest arrival time at which the qudits
//! still in flight, counted as erasures, keep the erasure budget within `t`.
//! Survivors that had to wait before that moment suffer an unlocated error with
//! probability `p_d * (1 - 1/n^2)`; the identity component of a uniformly
//! random qudit error is harmless. A failed decode contributes fidelity 0.
//! With more than two paths every stored qudit decoheres for the time between
//! its own arrival and the decode (or completion) time.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{domain, structural, Error, Result};

/// How a user's logical state is carried.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Coding {
    /// A packet of bare qudits of the given dimension.
    Unencoded { dimension: u32 },
    /// Quantum Reed-Solomon code of length `n` (odd, >= 3) over dimension-`n` qudits.
    Qrs { n: u32 },
}

impl Coding {
    pub fn unencoded(dimension: u32) -> Result<Self> {
        let c = Coding::Unencoded { dimension };
        c.validate()?;
        Ok(c)
    }

    pub fn qrs(n: u32) -> Result<Self> {
        let c = Coding::Qrs { n };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Coding::Unencoded { dimension } if dimension < 2 => {
                Err(domain(format!("qudit dimension must be >= 2, got {dimension}")))
            }
            Coding::Qrs { n } => qrs_tolerance(n).map(|_| ()),
            _ => Ok(()),
        }
    }

    /// Dimension of each transmitted qudit.
    pub fn dimension(&self) -> u32 {
        match *self {
            Coding::Unencoded { dimension } => dimension,
            Coding::Qrs { n } => n,
        }
    }

    pub fn is_encoded(&self) -> bool {
        matches!(self, Coding::Qrs { .. })
    }
}

/// Qudit counts per path together with the coding they carry.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Configuration {
    counts: Vec<u32>,
    coding: Coding,
}

impl Configuration {
    pub fn new(counts: Vec<u32>, coding: Coding) -> Result<Self> {
        coding.validate()?;
        if counts.is_empty() || counts.iter().all(|&c| c == 0) {
            return Err(structural("a configuration needs at least one qudit"));
        }
        if let Coding::Qrs { n } = coding {
            let total: u32 = counts.iter().sum();
            if total != n {
                return Err(structural(format!(
                    "QRS code of length {n} needs {n} qudits, configuration carries {total}"
                )));
            }
        }
        Ok(Self { counts, coding })
    }

    pub fn unencoded(counts: &[u32], dimension: u32) -> Result<Self> {
        Self::new(counts.to_vec(), Coding::unencoded(dimension)?)
    }

    pub fn qrs(counts: &[u32], n: u32) -> Result<Self> {
        Self::new(counts.to_vec(), Coding::qrs(n)?)
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn coding(&self) -> Coding {
        self.coding
    }

    pub fn total(&self) -> u32 {
        self.counts.iter().sum()
    }

    pub fn paths(&self) -> usize {
        self.counts.len()
    }

    /// Number of paths that carry at least one qudit.
    pub fn used_paths(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    /// Whether some qudits have to wait in receiver memory for a later path.
    ///
    /// Unencoded packets wait whenever two paths are used; encoded packets
    /// follow [`needs_memory`].
    pub fn uses_storage(&self) -> bool {
        match self.coding {
            Coding::Unencoded { .. } => self.used_paths() > 1,
            Coding::Qrs { .. } => needs_memory(self).unwrap_or(false),
        }
    }

    /// Label of the form `5+2/n7` (encoded) or `4+1/u7` (unencoded).
    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let counts: Vec<String> = self.counts.iter().map(u32::to_string).collect();
        match self.coding {
            Coding::Unencoded { dimension } => write!(f, "{}/u{dimension}", counts.join("+")),
            Coding::Qrs { n } => write!(f, "{}/n{n}", counts.join("+")),
        }
    }
}

impl FromStr for Configuration {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("bad configuration label `{s}`"));
        let (counts, coding) = s.trim().split_once('/').ok_or_else(bad)?;
        let counts = counts
            .split('+')
            .map(|c| c.trim().parse::<u32>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?;
        let (kind, value) = coding.split_at(coding.len().min(1));
        let value: u32 = value.parse().map_err(|_| bad())?;
        let coding = match kind {
            "n" => Coding::qrs(value)?,
            "u" => Coding::unencoded(value)?,
            _ => return Err(bad()),
        };
        Configuration::new(counts, coding)
    }
}

/// Per-path transmission probabilities and memory dwell times plus the
/// receiver coherence time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityParams {
    p: Vec<f64>,
    dwell_s: Vec<f64>,
    t2_s: f64,
}

impl FidelityParams {
    /// `dwell_s[k]` is the time path `k` arrivals wait for the slowest path,
    /// so it must be nonincreasing. `t2_s` may be `f64::INFINITY`.
    pub fn new(p: Vec<f64>, dwell_s: Vec<f64>, t2_s: f64) -> Result<Self> {
        if p.is_empty() || p.len() != dwell_s.len() {
            return Err(structural(format!(
                "{} transmission probabilities for {} dwell times",
                p.len(),
                dwell_s.len()
            )));
        }
        if let Some(bad) = p.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(domain(format!("transmission probability {bad} outside [0, 1]")));
        }
        if let Some(bad) = dwell_s.iter().find(|d| !(**d >= 0.0) || !d.is_finite()) {
            return Err(domain(format!("dwell time {bad} must be finite and >= 0")));
        }
        if dwell_s.windows(2).any(|w| w[1] > w[0]) {
            return Err(structural("paths must be listed in arrival order (nonincreasing dwell)"));
        }
        if !(t2_s > 0.0) {
            return Err(domain(format!("coherence time must be > 0, got {t2_s}")));
        }
        Ok(Self { p, dwell_s, t2_s })
    }

    /// Two paths where path-1 arrivals wait `dwell_s` for path 2.
    pub fn two_path(p1: f64, p2: f64, dwell_s: f64, t2_s: f64) -> Result<Self> {
        Self::new(vec![p1, p2], vec![dwell_s, 0.0], t2_s)
    }

    /// Parameters with memory noise given directly as a depolarization
    /// probability per path (relative to the slowest path).
    pub fn with_depolarization(p: Vec<f64>, p_d: &[f64]) -> Result<Self> {
        if let Some(bad) = p_d.iter().find(|x| !(0.0..1.0).contains(*x)) {
            return Err(domain(format!("depolarization probability {bad} outside [0, 1)")));
        }
        // unit coherence time; dwell chosen so that 1 - exp(-dwell) = p_d
        let dwell = p_d.iter().map(|&x| -(-x).ln_1p()).collect();
        Self::new(p, dwell, 1.0)
    }

    pub fn paths(&self) -> usize {
        self.p.len()
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn dwell_s(&self) -> &[f64] {
        &self.dwell_s
    }

    pub fn t2_s(&self) -> f64 {
        self.t2_s
    }

    pub fn with_p(&self, path: usize, value: f64) -> Result<Self> {
        let mut p = self.p.clone();
        *p.get_mut(path)
            .ok_or_else(|| structural(format!("no path {path}")))? = value;
        Self::new(p, self.dwell_s.clone(), self.t2_s)
    }

    pub fn with_t2(&self, t2_s: f64) -> Result<Self> {
        Self::new(self.p.clone(), self.dwell_s.clone(), t2_s)
    }

    pub fn with_dwell(&self, dwell_s: Vec<f64>) -> Result<Self> {
        Self::new(self.p.clone(), dwell_s, self.t2_s)
    }

    /// Depolarization of a qudit from path `k` held until path `until` arrives.
    pub fn depolarization_between(&self, k: usize, until_dwell: f64) -> f64 {
        let wait = (self.dwell_s[k] - until_dwell).max(0.0);
        depolarization(wait, self.t2_s)
    }

    /// Depolarization of a path-`k` qudit that waits for the slowest path.
    pub fn depolarization(&self, k: usize) -> f64 {
        depolarization(self.dwell_s[k], self.t2_s)
    }

    fn check(&self, config: &Configuration) -> Result<()> {
        if config.paths() != self.paths() {
            return Err(structural(format!(
                "configuration {config} spans {} paths, parameters describe {}",
                config.paths(),
                self.paths()
            )));
        }
        Ok(())
    }
}

fn depolarization(dwell_s: f64, t2_s: f64) -> f64 {
    if dwell_s == 0.0 || t2_s.is_infinite() {
        0.0
    } else {
        -(-dwell_s / t2_s).exp_m1()
    }
}

/// `1 - exp(-dwell / T2)`, and 0 for an infinite coherence time.
pub fn memory_depolarization_prob(dwell_s: f64, t2_s: f64) -> Result<f64> {
    if !(t2_s > 0.0) {
        return Err(domain(format!("coherence time must be > 0, got {t2_s}")));
    }
    if !(dwell_s >= 0.0) {
        return Err(domain(format!("dwell time must be >= 0, got {dwell_s}")));
    }
    Ok(depolarization(dwell_s, t2_s))
}

/// Overlap of a stored qudit with its original pure state: `(1 - p_d) + p_d / D`.
pub fn storage_fidelity_factor(p_d: f64, dimension: u32) -> f64 {
    debug_assert!((0.0..=1.0).contains(&p_d));
    (1.0 - p_d) + p_d / f64::from(dimension)
}

/// Erasures tolerated `t` and code distance `d` of the length-`n` QRS code.
pub fn qrs_tolerance(n: u32) -> Result<(u32, u32)> {
    if n < 3 || n.is_multiple_of(2) {
        return Err(domain(format!("QRS length must be odd and >= 3, got {n}")));
    }
    Ok(((n - 1) / 2, n.div_ceil(2)))
}

/// Fidelity of an unencoded packet.
pub fn unencoded_fidelity(config: &Configuration, params: &FidelityParams) -> Result<f64> {
    let Coding::Unencoded { dimension } = config.coding() else {
        return Err(structural(format!("{config} is not an unencoded configuration")));
    };
    params.check(config)?;
    let counts = config.counts();
    // the packet is complete when the last used path delivers
    let completion = completion_dwell(counts, params.dwell_s());
    let mut fidelity = 1.0;
    for (k, &count) in counts.iter().enumerate() {
        if count == 0 {
            continue;
        }
        let p_d = params.depolarization_between(k, completion);
        let per_qudit = params.p[k] * storage_fidelity_factor(p_d, dimension);
        fidelity *= per_qudit.powi(count as i32);
    }
    Ok(fidelity)
}

fn completion_dwell(counts: &[u32], dwell: &[f64]) -> f64 {
    counts
        .iter()
        .zip(dwell)
        .filter(|(&c, _)| c > 0)
        .map(|(_, &d)| d)
        .fold(f64::INFINITY, f64::min)
}

/// Whether some survivable loss pattern leaves early survivors waiting in memory.
///
/// Paths are taken to arrive strictly one after another in index order. A
/// pattern waits when the qudits of the first arrivals, with everything still
/// in flight counted as erased, cannot be decoded yet.
pub fn needs_memory(config: &Configuration) -> Result<bool> {
    let Coding::Qrs { n } = config.coding() else {
        return Err(structural(format!("{config} is not an encoded configuration")));
    };
    let (t, _) = qrs_tolerance(n)?;
    let used: Vec<u32> = config.counts().iter().copied().filter(|&c| c > 0).collect();
    let mut found = false;
    for_each_pattern(&used, |losses| {
        if found || losses.iter().sum::<u32>() > t {
            return;
        }
        let Some(stage) = decode_stage(&used, losses, t) else {
            return;
        };
        found = (0..stage).any(|k| used[k] > losses[k]);
    });
    Ok(found)
}

/// First arrival stage at which arrived losses plus in-flight qudits fit within `t`.
fn decode_stage(counts: &[u32], losses: &[u32], t: u32) -> Option<usize> {
    (0..counts.len()).find(|&stage| {
        let arrived: u32 = losses[..=stage].iter().sum();
        let in_flight: u32 = counts[stage + 1..].iter().sum();
        arrived + in_flight <= t
    })
}

/// Calls `f` for every loss vector `0 <= losses[k] <= counts[k]`.
fn for_each_pattern(counts: &[u32], mut f: impl FnMut(&[u32])) {
    let mut losses = vec![0u32; counts.len()];
    loop {
        f(&losses);
        let mut k = 0;
        loop {
            if k == counts.len() {
                return;
            }
            if losses[k] < counts[k] {
                losses[k] += 1;
                break;
            }
            losses[k] = 0;
            k += 1;
        }
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
}

fn binomial_pmf(n: u32, k: u32, p: f64) -> f64 {
    binomial(n, k) * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
}

/// Erasure-only success probability with ideal memories: the probability that
/// at most `t` of the `n` qudits are lost.
pub fn encoded_success_ideal(config: &Configuration, p: &[f64]) -> Result<f64> {
    let Coding::Qrs { n } = config.coding() else {
        return Err(structural(format!("{config} is not an encoded configuration")));
    };
    if p.len() != config.paths() {
        return Err(structural(format!(
            "{config} spans {} paths, got {} probabilities",
            config.paths(),
            p.len()
        )));
    }
    let (t, _) = qrs_tolerance(n)?;
    // distribution of the total number of losses, path by path
    let mut dist = vec![1.0];
    for (&count, &pk) in config.counts().iter().zip(p) {
        let mut next = vec![0.0; dist.len() + count as usize];
        for (have, &w) in dist.iter().enumerate() {
            for lost in 0..=count {
                next[have + lost as usize] += w * binomial_pmf(count, lost, 1.0 - pk);
            }
        }
        dist = next;
    }
    Ok(dist.iter().take(t as usize + 1).sum())
}

/// Fidelity of an encoded logical qudit under loss and memory decoherence.
pub fn encoded_fidelity(config: &Configuration, params: &FidelityParams) -> Result<f64> {
    let Coding::Qrs { n } = config.coding() else {
        return Err(structural(format!("{config} is not an encoded configuration")));
    };
    params.check(config)?;
    let (t, _) = qrs_tolerance(n)?;
    let error_scale = 1.0 - 1.0 / f64::from(n * n);

    let used: Vec<usize> = (0..config.paths()).filter(|&k| config.counts()[k] > 0).collect();
    let counts: Vec<u32> = used.iter().map(|&k| config.counts()[k]).collect();
    let p: Vec<f64> = used.iter().map(|&k| params.p[k]).collect();
    let dwell: Vec<f64> = used.iter().map(|&k| params.dwell_s[k]).collect();

    // arrival groups: paths sharing a delay arrive together
    let mut levels: Vec<f64> = dwell.clone();
    levels.dedup();

    let mut total = 0.0;
    for_each_pattern(&counts, |losses| {
        let weight: f64 = counts
            .iter()
            .zip(losses)
            .zip(&p)
            .map(|((&c, &l), &pk)| binomial_pmf(c, l, 1.0 - pk))
            .product();
        if weight == 0.0 {
            return;
        }
        let stage = levels.iter().copied().find_map(|level| {
            let erasures: u32 = counts
                .iter()
                .zip(losses)
                .zip(&dwell)
                .map(|((&c, &l), &d)| if d >= level { l } else { c })
                .sum();
            (erasures <= t).then_some((level, erasures))
        });
        let Some((level, erasures)) = stage else {
            return;
        };
        let budget = (t - erasures) / 2;
        // distribution of unlocated errors among stored survivors, capped at budget
        let mut errors = vec![0.0; budget as usize + 1];
        errors[0] = 1.0;
        for (k, (&c, &l)) in counts.iter().zip(losses).enumerate() {
            if dwell[k] <= level {
                continue;
            }
            let p_err = depolarization(dwell[k] - level, params.t2_s) * error_scale;
            let survivors = c - l;
            let mut next = vec![0.0; errors.len()];
            for (have, &w) in errors.iter().enumerate() {
                for extra in 0..=survivors {
                    let idx = have + extra as usize;
                    if idx >= next.len() {
                        break;
                    }
                    next[idx] += w * binomial_pmf(survivors, extra, p_err);
                }
            }
            errors = next;
        }
        total += weight * errors.iter().sum::<f64>();
    });
    Ok(total.clamp(0.0, 1.0))
}

/// Fidelity of any configuration, dispatching on its coding.
pub fn fidelity(config: &Configuration, params: &FidelityParams) -> Result<f64> {
    match config.coding() {
        Coding::Unencoded { .. } => unencoded_fidelity(config, params),
        Coding::Qrs { .. } => encoded_fidelity(config, params),
    }
}

/// Infidelity `1 - F`, the loss metric.
pub fn loss_metric(fidelity: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&fidelity) {
        return Err(domain(format!("fidelity {fidelity} outside [0, 1]")));
    }
    Ok(1.0 - fidelity)
}
