//! Operating regimes and the numerical solvers behind them.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::enumerate::AssignmentRow;
use crate::error::{domain, structural, Error, Result};
use crate::fidelity::{fidelity, Configuration, FidelityParams};

/// Fidelities closer than this are treated as tied when ranking rows.
const TIE: f64 = 1e-12;
const SCAN_POINTS: usize = 64;
const T2_SCAN: (f64, f64) = (1e-6, 1e-1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
#[derive(Default)]
pub enum Regime {
    /// One user gets the best fidelity available.
    #[default]
    Greedy,
    /// A few users with fidelities as close as possible.
    Restricted { max_users: u32 },
    /// As many users as possible; `fair` then narrows the fidelity spread,
    /// otherwise the top user is favored.
    Balanced { fair: bool },
}

impl Regime {
    pub fn restricted(max_users: u32) -> Result<Self> {
        if max_users < 2 {
            return Err(domain(format!(
                "restricted regime needs max_users >= 2, got {max_users}"
            )));
        }
        Ok(Regime::Restricted { max_users })
    }
}


impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regime::Greedy => write!(f, "greedy"),
            Regime::Restricted { max_users } => write!(f, "restricted:{max_users}"),
            Regime::Balanced { fair: true } => write!(f, "balanced-fair"),
            Regime::Balanced { fair: false } => write!(f, "balanced-unfair"),
        }
    }
}

impl FromStr for Regime {
    type Err = Error;

    /// `greedy`, `restricted`, `restricted:M`, `balanced` (fair),
    /// `balanced-fair`, `balanced-unfair`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "greedy" => Ok(Regime::Greedy),
            "restricted" => Regime::restricted(2),
            "balanced" | "balanced-fair" => Ok(Regime::Balanced { fair: true }),
            "balanced-unfair" => Ok(Regime::Balanced { fair: false }),
            other => match other.strip_prefix("restricted:") {
                Some(m) => Regime::restricted(
                    m.parse()
                        .map_err(|_| Error::Parse(format!("bad user limit in regime '{s}'")))?,
                ),
                None => Err(Error::Parse(format!("unknown regime '{s}'"))),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rationale {
    BestSingleUser,
    SmallestGap,
    MostUsersFair,
    MostUsersTopUser,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    /// Index of the chosen row in the candidate list.
    pub row_index: usize,
    pub chosen_row: AssignmentRow,
    /// Fidelity of each slot of the chosen row (shared by its users).
    pub slot_fidelity: Vec<f64>,
    /// Slot of the best-served user.
    pub favored_slot: usize,
    pub rationale: Rationale,
}

impl Decision {
    /// One entry per served user, slots expanded by degeneracy.
    pub fn per_user_fidelity(&self) -> Vec<f64> {
        self.chosen_row
            .slots
            .iter()
            .zip(&self.slot_fidelity)
            .flat_map(|(s, &f)| std::iter::repeat_n(f, s.degeneracy as usize))
            .collect()
    }

    pub fn favored_fidelity(&self) -> f64 {
        self.slot_fidelity[self.favored_slot]
    }

    pub fn favored_config(&self) -> &Configuration {
        &self.chosen_row.slots[self.favored_slot].config
    }
}

/// Slot fidelities of every row.
pub fn score_rows(rows: &[AssignmentRow], params: &FidelityParams) -> Result<Vec<Vec<f64>>> {
    rows.iter()
        .map(|r| r.slots.iter().map(|s| fidelity(&s.config, params)).collect())
        .collect()
}

/// Picks a row under `regime`.
///
/// Ties go to the higher minimum user fidelity, then to fewer slots exposed to
/// memory noise, then to the earlier row.
pub fn select(regime: Regime, rows: &[AssignmentRow], params: &FidelityParams) -> Result<Decision> {
    if rows.is_empty() {
        return Err(structural("no assignment rows to select from"));
    }
    let scores = score_rows(rows, params)?;
    let row_index = select_scored(regime, rows, &scores)?;
    let slot_fidelity = scores[row_index].clone();
    let favored_slot = argmax(&slot_fidelity);
    let rationale = match regime {
        Regime::Greedy => Rationale::BestSingleUser,
        Regime::Restricted { .. } => Rationale::SmallestGap,
        Regime::Balanced { fair: true } => Rationale::MostUsersFair,
        Regime::Balanced { fair: false } => Rationale::MostUsersTopUser,
    };
    Ok(Decision {
        row_index,
        chosen_row: rows[row_index].clone(),
        slot_fidelity,
        favored_slot,
        rationale,
    })
}

/// Row choice from precomputed slot fidelities (`scores[r][s]`).
pub fn select_scored(regime: Regime, rows: &[AssignmentRow], scores: &[Vec<f64>]) -> Result<usize> {
    if rows.is_empty() {
        return Err(structural("no assignment rows to select from"));
    }
    if rows.len() != scores.len()
        || rows.iter().zip(scores).any(|(r, s)| r.slots.len() != s.len() || s.is_empty())
    {
        return Err(structural("scores do not match the rows"));
    }
    let candidates: Vec<usize> = match regime {
        Regime::Restricted { max_users } => {
            let within = |r: &AssignmentRow, least: usize| {
                (least..=max_users as usize).contains(&r.slots.len())
            };
            let pairs: Vec<usize> = (0..rows.len()).filter(|&i| within(&rows[i], 2)).collect();
            if !pairs.is_empty() {
                pairs
            } else {
                let small: Vec<usize> = (0..rows.len()).filter(|&i| within(&rows[i], 1)).collect();
                if small.is_empty() {
                    (0..rows.len()).collect()
                } else {
                    small
                }
            }
        }
        _ => (0..rows.len()).collect(),
    };

    // larger key wins; all entries are "more is better"
    let key = |i: usize| -> Vec<f64> {
        let f = &scores[i];
        let best = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let worst = f.iter().cloned().fold(f64::INFINITY, f64::min);
        let flagged = rows[i].slots.iter().filter(|s| s.memory).count() as f64;
        let primary = match regime {
            Regime::Greedy => vec![best],
            Regime::Restricted { .. } => vec![-(best - worst)],
            Regime::Balanced { fair: true } => vec![f64::from(rows[i].served_users), -(best - worst)],
            Regime::Balanced { fair: false } => vec![f64::from(rows[i].served_users), best],
        };
        primary.into_iter().chain([worst, -flagged]).collect()
    };

    let mut best = candidates[0];
    let mut best_key = key(best);
    for &i in &candidates[1..] {
        let k = key(i);
        if compare_keys(&k, &best_key) == Ordering::Greater {
            best = i;
            best_key = k;
        }
    }
    Ok(best)
}

fn compare_keys(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        if (x - y).abs() > TIE {
            return x.partial_cmp(y).unwrap_or(Ordering::Equal);
        }
    }
    Ordering::Equal
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] + TIE {
            best = i;
        }
    }
    best
}

/// All roots of `f` on `[lo, hi]`: sign changes on a 64-interval grid, each
/// refined by bisection until the bracket is narrower than `tol`.
pub fn find_roots<F>(f: F, lo: f64, hi: f64, tol: f64) -> Result<Vec<f64>>
where
    F: Fn(f64) -> Result<f64>,
{
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(domain(format!("empty bracket [{lo}, {hi}]")));
    }
    let xs: Vec<f64> = (0..=SCAN_POINTS)
        .map(|i| lo + (hi - lo) * i as f64 / SCAN_POINTS as f64)
        .collect();
    let ys = xs.iter().map(|&x| f(x)).collect::<Result<Vec<_>>>()?;
    if ys.iter().all(|&y| y == 0.0) {
        return Ok(Vec::new());
    }
    let mut roots = Vec::new();
    for i in 0..xs.len() {
        if ys[i] == 0.0 {
            roots.push(xs[i]);
            continue;
        }
        if i + 1 < xs.len() && ys[i + 1] != 0.0 && (ys[i] < 0.0) != (ys[i + 1] < 0.0) {
            roots.push(bisect(&f, xs[i], xs[i + 1], ys[i], tol)?);
        }
    }
    Ok(roots)
}

fn bisect<F>(f: &F, mut a: f64, mut b: f64, mut fa: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    for _ in 0..200 {
        if b - a <= tol {
            break;
        }
        let mid = 0.5 * (a + b);
        let fm = f(mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm < 0.0) == (fa < 0.0) {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

fn check_pair(a: &Configuration, b: &Configuration, params: &FidelityParams) -> Result<()> {
    if a.paths() != params.paths() || b.paths() != params.paths() {
        return Err(structural("configurations and parameters disagree on the path count"));
    }
    if params.paths() < 2 {
        return Err(structural("crossing searches need at least two paths"));
    }
    Ok(())
}

/// Values of p2 in `[lo, hi]` where `F_a = F_b`, ascending; empty when the
/// difference never changes sign (or vanishes identically).
pub fn crossing_point(
    a: &Configuration,
    b: &Configuration,
    params: &FidelityParams,
    lo: f64,
    hi: f64,
) -> Result<Vec<f64>> {
    check_pair(a, b, params)?;
    if lo < 0.0 || hi > 1.0 {
        return Err(domain(format!("p2 bracket [{lo}, {hi}] outside [0, 1]")));
    }
    if a == b {
        return Ok(Vec::new());
    }
    find_roots(
        |p2| {
            let q = params.with_p(1, p2)?;
            Ok(fidelity(a, &q)? - fidelity(b, &q)?)
        },
        lo,
        hi,
        1e-10,
    )
}

/// Coherence time in `[1e-6, 1e-1]` s where `F_a = F_b` for the fixed
/// transmission probabilities and dwell times in `params` (the smallest one if
/// several exist).
pub fn t2_threshold(a: &Configuration, b: &Configuration, params: &FidelityParams) -> Result<Option<f64>> {
    check_pair(a, b, params)?;
    if a == b {
        return Ok(None);
    }
    let roots = find_roots(
        |log_t2| {
            let q = params.with_t2(log_t2.exp())?;
            Ok(fidelity(a, &q)? - fidelity(b, &q)?)
        },
        T2_SCAN.0.ln(),
        T2_SCAN.1.ln(),
        1e-13,
    )?;
    Ok(roots.first().map(|r| r.exp()))
}

/// Path-1 depolarization probability at which `F_a = F_b` on a two-path route
/// (path 1 stores, path 2 is the slowest).
pub fn depolarization_crossing(
    a: &Configuration,
    b: &Configuration,
    p1: f64,
    p2: f64,
) -> Result<Option<f64>> {
    let probe = FidelityParams::two_path(p1, p2, 0.0, f64::INFINITY)?;
    check_pair(a, b, &probe)?;
    if a == b {
        return Ok(None);
    }
    let roots = find_roots(
        |pd| {
            let q = FidelityParams::with_depolarization(vec![p1, p2], &[pd, 0.0])?;
            Ok(fidelity(a, &q)? - fidelity(b, &q)?)
        },
        0.0,
        1.0 - 1e-9,
        1e-14,
    )?;
    Ok(roots.first().copied())
}

/// Depolarization probability at which every mixed unencoded configuration
/// matches the all-on-path-2 one: the solution of `(1 - p_d) + p_d / D = p2 / p1`.
pub fn unencoded_common_crossing(p1: f64, p2: f64, dimension: u32) -> Result<Option<f64>> {
    if !(p1 > 0.0 && p1 <= 1.0) || !(p2 > 0.0 && p2 <= 1.0) {
        return Err(domain(format!("need 0 < p1, p2 <= 1, got p1={p1}, p2={p2}")));
    }
    if dimension < 2 {
        return Err(domain(format!("dimension must be >= 2, got {dimension}")));
    }
    if p2 > p1 {
        return Ok(None);
    }
    let d = f64::from(dimension);
    let pd = d / (d - 1.0) * (1.0 - p2 / p1);
    Ok((pd <= 1.0 + 1e-15).then(|| pd.min(1.0)))
}

/// Interval of p2 over which one pair has the smallest gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSegment {
    pub pair: usize,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapTable {
    pub p2: Vec<f64>,
    /// `gaps[pair][point] = |F_a - F_b|`.
    pub gaps: Vec<Vec<f64>>,
    pub segments: Vec<GapSegment>,
}

impl GapTable {
    /// Interior points where the minimizing pair changes.
    pub fn boundaries(&self) -> Vec<f64> {
        self.segments.iter().skip(1).map(|s| s.lo).collect()
    }
}

/// `|F_a - F_b|` for each pair on a uniform p2 grid, plus the p2 intervals on
/// which each pair has the smallest gap (boundaries refined by bisection).
pub fn fidelity_gap_table(
    pairs: &[(Configuration, Configuration)],
    params: &FidelityParams,
    lo: f64,
    hi: f64,
    points: usize,
) -> Result<GapTable> {
    if pairs.is_empty() {
        return Err(structural("no configuration pairs"));
    }
    if points < 2 || !(lo < hi) || lo < 0.0 || hi > 1.0 {
        return Err(domain(format!("bad p2 grid [{lo}, {hi}] with {points} points")));
    }
    for (a, b) in pairs {
        check_pair(a, b, params)?;
    }
    let gap = |pair: usize, p2: f64| -> Result<f64> {
        let q = params.with_p(1, p2)?;
        let (a, b) = &pairs[pair];
        Ok((fidelity(a, &q)? - fidelity(b, &q)?).abs())
    };
    let grid: Vec<f64> = (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect();
    let gaps = (0..pairs.len())
        .map(|k| grid.iter().map(|&x| gap(k, x)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let winner = |i: usize| -> usize {
        let mut best = 0;
        for k in 1..pairs.len() {
            if gaps[k][i] < gaps[best][i] - TIE {
                best = k;
            }
        }
        best
    };

    let mut segments = vec![GapSegment {
        pair: winner(0),
        lo,
        hi,
    }];
    for i in 1..grid.len() {
        let current = segments.last().unwrap().pair;
        let next = winner(i);
        if next == current {
            continue;
        }
        let edge = bisect(
            &|x| Ok(gap(next, x)? - gap(current, x)?),
            grid[i - 1],
            grid[i],
            gaps[next][i - 1] - gaps[current][i - 1],
            1e-12,
        )?;
        segments.last_mut().unwrap().hi = edge;
        segments.push(GapSegment {
            pair: next,
            lo: edge,
            hi,
        });
    }
    Ok(GapTable {
        p2: grid,
        gaps,
        segments,
    })
}
