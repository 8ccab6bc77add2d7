//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines always reach the terminal.

mod common;
#[path = "common/closed_forms.rs"]
mod closed_forms;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use aqnet::enumerate::{enumerate_encoded, enumerate_unencoded, AssignmentRow, CapacityModel, Packet};
use aqnet::fidelity::{fidelity, needs_memory, unencoded_fidelity, Configuration, FidelityParams};
use aqnet::oracle::{simulate, TrialPlan};
use aqnet::policy::{crossing_point, depolarization_crossing, fidelity_gap_table, t2_threshold};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn cfg(label: &str) -> Configuration {
    label.parse().unwrap()
}

const MIXED: [&str; 4] = ["4+1/u7", "3+2/u7", "2+3/u7", "1+4/u7"];
const DWELL: f64 = 6.159e-7;

fn closed_form_equivalence() -> Outcome {
    let mut worst: f64 = 0.0;
    for i in 0..10 {
        for j in 0..10 {
            for k in 0..5 {
                let p1 = 0.5 + 0.5 * f64::from(i) / 9.0;
                let p2 = 0.5 + 0.5 * f64::from(j) / 9.0;
                let pd = 0.2 * f64::from(k) / 4.0;
                let params = FidelityParams::with_depolarization(vec![p1, p2], &[pd, 0.0]).unwrap();
                for (label, closed) in closed_forms::CASES {
                    let err = (unencoded_fidelity(&cfg(label), &params).unwrap() - closed(p1, p2, pd)).abs();
                    worst = worst.max(err);
                }
            }
        }
    }
    outcome(worst <= 1e-12, format!("max abs error {worst:.2e} over 500 grid points x 6 configurations"))
}

fn greedy_crossing() -> Outcome {
    let params = FidelityParams::two_path(0.9, 0.5, 0.0, f64::INFINITY).unwrap();
    let roots = crossing_point(&cfg("5+2/n7"), &cfg("5+0/n5"), &params, 0.0, 1.0).unwrap();
    let at_09 = roots.iter().any(|r| (r - 0.75).abs() <= 1e-6);
    let mut detail = format!("p1=0.9 roots {roots:?}");
    let mut closed_ok = true;
    for p1 in [0.8, 0.9, 0.95] {
        let params = params.with_p(0, p1).unwrap();
        let roots = crossing_point(&cfg("5+2/n7"), &cfg("5+0/n5"), &params, 0.0, 1.0).unwrap();
        let r = (p1 / (1.0 - p1)).sqrt();
        let closed = r / (1.0 + r);
        let hit = roots.iter().any(|x| (x - closed).abs() <= 1e-6);
        closed_ok &= hit;
        detail += &format!("; p1={p1}: closed form {closed:.6}{}", if hit { "" } else { " missed" });
    }
    outcome(at_09 && closed_ok, detail)
}

fn common_crossing() -> Outcome {
    let (p1, p2) = (0.95, 0.945);
    let expected = 7.0 / 6.0 * (1.0 - p2 / p1);
    let found: Vec<f64> = MIXED
        .iter()
        .map(|l| depolarization_crossing(&cfg(l), &cfg("0+5/u7"), p1, p2).unwrap().unwrap_or(f64::NAN))
        .collect();
    let spread = found.iter().fold(0.0f64, |m, x| m.max((x - found[0]).abs()));
    let off = found.iter().fold(0.0f64, |m, x| m.max((x - expected).abs()));
    let params = FidelityParams::two_path(p1, p2, DWELL, f64::INFINITY).unwrap();
    let t2: Vec<f64> = MIXED
        .iter()
        .map(|l| t2_threshold(&cfg(l), &cfg("0+5/u7"), &params).unwrap().unwrap_or(f64::NAN))
        .collect();
    let t2_ok = t2.iter().all(|t| ((t - 1e-4) / 1e-4).abs() <= 0.01);
    outcome(
        spread <= 1e-9 && off <= 1e-9 && t2_ok,
        format!("p_d* = {:.10} (spread {spread:.1e}, expected {expected:.10}); T2 = {:.6e} s", found[0], t2[0]),
    )
}

fn key(row: &AssignmentRow) -> Vec<(String, u32)> {
    let mut k: Vec<(String, u32)> = row.slots.iter().map(|s| (s.config.label(), s.degeneracy)).collect();
    k.sort();
    k
}

fn keys(rows: &[AssignmentRow]) -> Vec<Vec<(String, u32)>> {
    let mut k: Vec<_> = rows.iter().map(key).collect();
    k.sort();
    k
}

fn table(spec: &[&[(&str, u32)]]) -> Vec<Vec<(String, u32)>> {
    let mut t: Vec<Vec<(String, u32)>> = spec
        .iter()
        .map(|row| {
            let mut r: Vec<(String, u32)> = row.iter().map(|(l, g)| (l.to_string(), *g)).collect();
            r.sort();
            r
        })
        .collect();
    t.sort();
    t
}

fn tables() -> Outcome {
    let cap = CapacityModel::new(vec![5, 5], 9).unwrap();
    let unencoded = enumerate_unencoded(&cap, 5, &[7, 3]).unwrap();
    let first = table(&[
        &[("5+0/u7", 1), ("0+5/u7", 1)],
        &[("4+1/u7", 1), ("1+4/u7", 1)],
        &[("3+2/u7", 1), ("2+3/u7", 1)],
        &[("5+0/u3", 2), ("0+5/u3", 2)],
    ]);
    let n_u1: Vec<u32> = unencoded.iter().map(|r| r.served_users).collect();
    let flags1: Vec<Vec<bool>> = unencoded.iter().map(|r| r.memory_flags()).collect();
    let ok1 = keys(&unencoded) == first
        && n_u1 == [2, 2, 2, 4]
        && flags1 == [vec![false, false], vec![true, true], vec![true, true], vec![false, false]];

    let encoded = enumerate_encoded(&cap, &[7, 5, 3]).unwrap();
    let second = table(&[
        &[("5+2/n7", 1), ("0+3/n3", 2)],
        &[("4+3/n7", 1), ("1+2/n3", 2)],
        &[("3+4/n7", 1), ("2+1/n3", 2)],
        &[("2+5/n7", 1), ("3+0/n3", 2)],
        &[("5+0/n5", 1), ("0+5/n5", 1)],
        &[("4+1/n5", 1), ("1+4/n5", 1)],
        &[("3+2/n5", 1), ("2+3/n5", 1)],
        &[("3+0/n3", 2), ("2+1/n3", 2), ("0+3/n3", 2)],
        &[("3+0/n3", 2), ("1+2/n3", 2), ("1+2/n3", 2)],
        &[("2+1/n3", 2), ("2+1/n3", 2), ("1+2/n3", 2)],
    ]);
    let n_u2: Vec<u32> = encoded.iter().map(|r| r.served_users).collect();
    let rule = encoded
        .iter()
        .flat_map(|r| &r.slots)
        .all(|s| s.memory == needs_memory(&s.config).unwrap());
    let ok2 = keys(&encoded) == second && n_u2 == [3, 3, 3, 3, 2, 2, 2, 6, 6, 6] && rule;
    outcome(
        ok1 && ok2,
        format!(
            "unencoded {} rows N_u {n_u1:?}; encoded {} rows N_u {n_u2:?}; 1+2/n3 flagged in both rows 9 and 10 (the reference table leaves the row 9 entry unmarked)",
            unencoded.len(),
            encoded.len()
        ),
    )
}

fn oracle_agreement() -> Outcome {
    const LABELS: [&str; 12] = [
        "4+1/u7", "3+2/u7", "2+3/u3", "1+4/u7", "5+0/u7", "5+2/n7", "3+4/n7", "4+1/n5", "2+3/n5", "2+1/n3",
        "1+2/n3", "6+1/n7",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut worst: f64 = 0.0;
    let sets = 24;
    for i in 0..sets {
        let p1 = rng.gen_range(0.5..=1.0);
        let p2 = rng.gen_range(0.5..=1.0);
        let dwell = rng.gen_range(0.0..=1e-5);
        let t2 = if i % 3 == 0 { f64::INFINITY } else { 10f64.powf(rng.gen_range(-5.0..-2.0)) };
        let params = FidelityParams::two_path(p1, p2, dwell, t2).unwrap();
        let config = cfg(LABELS[i % LABELS.len()]);
        let analytic = fidelity(&config, &params).unwrap();
        let est = simulate(&TrialPlan {
            config,
            params,
            trials: 1_000_000,
            seed: 1000 + i as u64,
        })
        .unwrap();
        worst = worst.max(est.z_score(analytic));
    }
    outcome(worst <= 4.0, format!("{sets} parameter sets at 1e6 trials, max |z| = {worst:.3}"))
}

fn below_threshold() -> Outcome {
    let (p1, p2) = (0.95, 0.945);
    let base = FidelityParams::two_path(p1, p2, DWELL, f64::INFINITY).unwrap();
    let t2_dagger = t2_threshold(&cfg("4+1/u7"), &cfg("0+5/u7"), &base).unwrap().unwrap();
    let f = |params: &FidelityParams, l: &str| unencoded_fidelity(&cfg(l), params).unwrap();
    let short = base.with_t2(0.5 * t2_dagger).unwrap();
    let floor = f(&short, "5+0/u7").min(f(&short, "0+5/u7"));
    let below = MIXED.iter().all(|l| f(&short, l) < floor);
    let long = base.with_t2(2.0 * t2_dagger).unwrap();
    let above = f(&long, "4+1/u7") > f(&long, "0+5/u7");
    outcome(
        below && above,
        format!("T2+ = {t2_dagger:.6e} s; mixed below min(F50, F05) at T2+/2: {below}; F41 > F05 at 2 T2+: {above}"),
    )
}

fn gap_boundaries() -> Outcome {
    let pairs: Vec<(Configuration, Configuration)> = [("3+4/n7", "2+1/n3"), ("2+5/n7", "3+0/n3"), ("3+2/n5", "2+3/n5")]
        .iter()
        .map(|(a, b)| (cfg(a), cfg(b)))
        .collect();
    let params = FidelityParams::two_path(0.9, 0.9, 0.0, f64::INFINITY).unwrap();
    let table = fidelity_gap_table(&pairs, &params, 0.5, 1.0, 501).unwrap();
    let b = table.boundaries();
    let near = |x: f64| b.iter().any(|y| (y - x).abs() <= 0.03);
    outcome(near(0.71) && near(0.81), format!("boundaries {b:.4?}, targets 0.71 and 0.81 within 0.03 (soft)"))
}

fn asymptotic_regime() -> Outcome {
    let cap = CapacityModel::new(vec![5, 5], 9).unwrap();
    let mut worst: f64 = 0.0;
    for n in [7, 5, 3] {
        let configs = aqnet::enumerate::candidate_configs(&cap, &Packet::qrs(n).unwrap()).unwrap();
        for dwell in [0.0, 1e-7, 5e-7, 1e-6] {
            for i in 0..=10 {
                for j in 0..=10 {
                    let p1 = 0.5 + 0.05 * f64::from(i);
                    let p2 = 0.5 + 0.05 * f64::from(j);
                    let ideal = FidelityParams::two_path(p1, p2, dwell, f64::INFINITY).unwrap();
                    let finite = ideal.with_t2(1e-3).unwrap();
                    for c in &configs {
                        let a = fidelity(c, &ideal).unwrap();
                        let b = fidelity(c, &finite).unwrap();
                        if a > 0.0 {
                            worst = worst.max((a - b).abs() / a);
                        }
                    }
                }
            }
        }
    }
    outcome(worst <= 0.01, format!("max relative change {worst:.3e} at T2 = 1 ms"))
}

fn router_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut failures = Vec::new();
    let mut events = 0;
    for case in 0..100 {
        let users = rng.gen_range(0..30);
        let (mut router, schedule) = common::random_case(&mut rng, users, 16);
        let mut fresh = router.clone();
        let log = router.run(&schedule, 16);
        events += log.len();
        if let Err(e) = common::audit(&router, &schedule, &log) {
            failures.push(format!("case {case}: {e}"));
        } else if !common::replay_matches(&mut fresh, &schedule, 16, &log) {
            failures.push(format!("case {case}: replay differs"));
        }
    }
    match failures.first() {
        None => outcome(true, format!("100 schedules, {events} events, no violations")),
        Some(first) => outcome(false, format!("{} failing schedules, first: {first}", failures.len())),
    }
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, fn() -> Outcome, Duration, bool); 9] = [
        (1, "closed-form unencoded equivalence", closed_form_equivalence, Duration::from_secs(1), false),
        (2, "greedy crossing", greedy_crossing, Duration::from_secs(1), false),
        (3, "common unencoded crossing", common_crossing, Duration::from_secs(1), false),
        (4, "assignment tables", tables, Duration::from_secs(5), false),
        (5, "oracle agreement", oracle_agreement, Duration::from_secs(120), false),
        (6, "below-threshold aggregation", below_threshold, Duration::from_secs(1), false),
        (7, "gap segment boundaries", gap_boundaries, Duration::from_secs(60), true),
        (8, "asymptotic coherence regime", asymptotic_regime, Duration::from_secs(1), false),
        (9, "router protocol properties", router_properties, Duration::from_secs(30), false),
    ];
    let mut failed = 0;
    for (n, name, run, budget, soft) in criteria {
        let start = Instant::now();
        let mut result = run();
        let took = start.elapsed();
        if took > budget {
            result.pass = false;
            result.detail += &format!("; took {took:.2?}, budget {budget:?}");
        }
        let tag = match (result.pass, soft) {
            (true, _) => "PASS",
            (false, true) => "SOFT-FAIL",
            (false, false) => "FAIL",
        };
        println!("{tag} criterion {n}: {name} ({took:.2?}) {}", result.detail);
        if !result.pass && !soft {
            failed += 1;
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
