#![allow(dead_code)]

use std::collections::HashMap;
use std::path::PathBuf;

use aqnet::cli::Scenario;
use aqnet::enumerate::Packet;
use aqnet::fidelity::fidelity;
use aqnet::policy::Regime;
use aqnet::routersim::{EventKind, RouterEvent, RouterState, ScheduledRequest, UserRequest};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn scenario(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name);
    Scenario::load(&path).unwrap()
}

pub const TOPOLOGIES: [&str; 4] = [
    "unencoded.toml",
    "unencoded-inset.toml",
    "encoded.toml",
    "encoded-finite.toml",
];

const PAYLOADS: [&str; 7] = [
    "qrs:7",
    "qrs:5",
    "qrs:3",
    "unencoded:7x5",
    "unencoded:3x5",
    "unencoded:7x2",
    "unencoded:11x5",
];

const REGIMES: [&str; 5] = ["greedy", "restricted:2", "restricted:3", "balanced-fair", "balanced-unfair"];

/// Random router and request schedule; `users` ids are unique.
pub fn random_case<R: Rng>(rng: &mut R, users: usize, horizon: u64) -> (RouterState, Vec<ScheduledRequest>) {
    let name = TOPOLOGIES.choose(rng).unwrap();
    let slot = *[1e-3, 1e-6, 2e-7, 1e-7].choose(rng).unwrap();
    let router = scenario(name)
        .router()
        .unwrap()
        .with_queue_limit(rng.gen_range(0..6))
        .with_slot_duration(slot)
        .unwrap();
    let schedule = (0..users)
        .map(|i| {
            let payload: Packet = PAYLOADS.choose(rng).unwrap().parse().unwrap();
            let regime: Regime = REGIMES.choose(rng).unwrap().parse().unwrap();
            let mut request = UserRequest::new(format!("u{i}"), payload, regime);
            match rng.gen_range(0..6) {
                0 => request = request.with_threshold(rng.gen_range(0.5..1.0)),
                1 => request = request.with_threshold(1.5),
                _ => {}
            }
            ScheduledRequest {
                slot: rng.gen_range(0..horizon),
                request,
            }
        })
        .collect();
    (router, schedule)
}

/// Checks a finished run and returns a description of the first violation.
pub fn audit(router: &RouterState, schedule: &[ScheduledRequest], log: &[RouterEvent]) -> Result<(), String> {
    // channels in use never exceed the installed channels
    let cap = &router.capacity().channels_per_path;
    let end = router.transmissions().iter().map(|t| t.release_slot).max().unwrap_or(0);
    for slot in 0..end {
        let mut used = vec![0u32; cap.len()];
        for t in router.transmissions().iter().filter(|t| t.start_slot <= slot && slot < t.release_slot) {
            for (u, x) in used.iter_mut().zip(&t.usage) {
                *u += x;
            }
        }
        if used.iter().zip(cap).any(|(u, c)| u > c) {
            return Err(format!("slot {slot} oversubscribed: {used:?} of {cap:?}"));
        }
    }

    // each request ends exactly once, and is queued at most once
    let mut terminal: HashMap<&str, usize> = HashMap::new();
    let mut queued: HashMap<&str, usize> = HashMap::new();
    for e in log {
        if e.is_terminal() {
            *terminal.entry(&e.user_id).or_default() += 1;
        }
        if e.kind == EventKind::Queued {
            *queued.entry(&e.user_id).or_default() += 1;
        }
    }
    for s in schedule {
        let id = s.request.user_id.as_str();
        if terminal.get(id) != Some(&1) {
            return Err(format!("{id} ended {:?} times", terminal.get(id)));
        }
        if queued.get(id).copied().unwrap_or(0) > 1 {
            return Err(format!("{id} queued more than once"));
        }
    }
    if router.queue_len() != 0 {
        return Err("queue not drained".into());
    }

    // promised fidelities recompute exactly and honour thresholds
    let params = router.params();
    let thresholds: HashMap<&str, Option<f64>> = schedule
        .iter()
        .map(|s| (s.request.user_id.as_str(), s.request.min_fidelity))
        .collect();
    for e in log.iter().filter(|e| e.kind == EventKind::Assigned) {
        let config = e.configuration.as_deref().unwrap().parse().unwrap();
        let promised = e.fidelity.unwrap();
        let actual = fidelity(&config, &params).unwrap();
        if actual.to_bits() != promised.to_bits() {
            return Err(format!("{}: promised {promised}, recomputed {actual}", e.user_id));
        }
        if let Some(Some(min)) = thresholds.get(e.user_id.as_str()) {
            if promised < *min {
                return Err(format!("{}: {promised} below threshold {min}", e.user_id));
            }
        }
    }

    // nobody waited while the free channels could have served them
    for w in router.waits() {
        if router.could_serve(&w.request, &w.free) {
            return Err(format!("{} waited at slot {} with {:?} free", w.request.user_id, w.slot, w.free));
        }
    }
    Ok(())
}

pub fn replay_matches(fresh: &mut RouterState, schedule: &[ScheduledRequest], slots: u64, log: &[RouterEvent]) -> bool {
    let again = fresh.run(schedule, slots);
    again.len() == log.len() && again.iter().zip(log).all(|(a, b)| a.to_json() == b.to_json())
}
