//! Time-slotted router: requests are queued, assigned channels or denied.
//!
//! Each slot the router releases finished transmissions, accepts the requests
//! scheduled for that slot and walks the queue oldest first. A request is
//! assigned the best-served configuration of the row its regime picks on the
//! channels still free. A transmission holds its channels for one slot plus its
//! memory dwell rounded up to whole slots.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::enumerate::{candidate_configs, enumerate_rows, CapacityModel, Packet};
use crate::error::{domain, structural, Result};
use crate::fidelity::{fidelity, Configuration, FidelityParams};
use crate::netmodel::{dwell_times, AggregatedRoute};
use crate::policy::{select, Regime};

pub const DEFAULT_QUEUE_LIMIT: u32 = 8;
pub const DEFAULT_SLOT_DURATION_S: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRequest {
    pub user_id: String,
    pub destination: String,
    pub payload: Packet,
    pub regime: Regime,
    pub min_fidelity: Option<f64>,
}

impl UserRequest {
    pub fn new(user_id: impl Into<String>, payload: Packet, regime: Regime) -> Self {
        Self {
            user_id: user_id.into(),
            destination: "R".into(),
            payload,
            regime,
            min_fidelity: None,
        }
    }

    pub fn with_threshold(mut self, min_fidelity: f64) -> Self {
        self.min_fidelity = Some(min_fidelity);
        self
    }

    fn well_formed(&self) -> bool {
        !self.user_id.is_empty()
            && self.payload.coding.validate().is_ok()
            && self.payload.size > 0
            && (!self.payload.coding.is_encoded() || self.payload.size == self.payload.coding.dimension())
            && self.min_fidelity.is_none_or(|f| (0.0..=1.0).contains(&f))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Requested,
    Queued,
    Assigned,
    Denied,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DenyReason {
    Malformed,
    Infeasible,
    Coherence,
    Timeout,
}

impl fmt::Display for DenyReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DenyReason::Malformed => "malformed",
            DenyReason::Infeasible => "infeasible",
            DenyReason::Coherence => "coherence",
            DenyReason::Timeout => "timeout",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouterEvent {
    pub slot: u64,
    pub kind: EventKind,
    pub user_id: String,
    pub configuration: Option<String>,
    pub fidelity: Option<f64>,
    pub reason: Option<DenyReason>,
}

impl RouterEvent {
    fn new(slot: u64, kind: EventKind, user_id: &str) -> Self {
        Self {
            slot,
            kind,
            user_id: user_id.to_string(),
            configuration: None,
            fidelity: None,
            reason: None,
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self.kind, EventKind::Assigned | EventKind::Denied)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("router events always serialize")
    }
}

/// A request that waited, with the channels that were free when it was checked.
#[derive(Debug, Clone, PartialEq)]
pub struct WaitRecord {
    pub slot: u64,
    pub request: UserRequest,
    pub free: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transmission {
    pub user_id: String,
    pub config: Configuration,
    pub usage: Vec<u32>,
    pub start_slot: u64,
    pub release_slot: u64,
}

#[derive(Debug, Clone, PartialEq)]
struct Pending {
    request: UserRequest,
    age: u32,
    queued: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduledRequest {
    pub slot: u64,
    pub request: UserRequest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouterState {
    p: Vec<f64>,
    dwell_s: Vec<f64>,
    capacity: CapacityModel,
    receiver_t2_s: f64,
    slot_duration_s: f64,
    queue_limit_slots: u32,
    /// Extra slots for classical signalling; not modeled, kept at zero.
    pub classical_latency_slots: u32,
    slot: u64,
    queue: VecDeque<Pending>,
    active: Vec<Transmission>,
    history: Vec<Transmission>,
    waits: Vec<WaitRecord>,
}

struct Choice {
    config: Configuration,
    fidelity: f64,
}

impl RouterState {
    /// `p` and `dwell_s` are per path in arrival order.
    pub fn new(p: Vec<f64>, dwell_s: Vec<f64>, capacity: CapacityModel, receiver_t2_s: f64) -> Result<Self> {
        FidelityParams::new(p.clone(), dwell_s.clone(), receiver_t2_s)?;
        if p.len() != capacity.paths() {
            return Err(structural(format!(
                "{} paths in the route but {} in the capacity model",
                p.len(),
                capacity.paths()
            )));
        }
        Ok(Self {
            p,
            dwell_s,
            capacity,
            receiver_t2_s,
            slot_duration_s: DEFAULT_SLOT_DURATION_S,
            queue_limit_slots: DEFAULT_QUEUE_LIMIT,
            classical_latency_slots: 0,
            slot: 0,
            queue: VecDeque::new(),
            active: Vec::new(),
            history: Vec::new(),
            waits: Vec::new(),
        })
    }

    pub fn from_route(route: &AggregatedRoute, receiver_t2_s: f64) -> Result<Self> {
        Self::new(
            route.transmission_probabilities()?,
            dwell_times(route)?,
            CapacityModel::from_route(route)?,
            receiver_t2_s,
        )
    }

    pub fn with_queue_limit(mut self, slots: u32) -> Self {
        self.queue_limit_slots = slots;
        self
    }

    pub fn with_slot_duration(mut self, seconds: f64) -> Result<Self> {
        if !(seconds > 0.0 && seconds.is_finite()) {
            return Err(domain(format!("slot duration must be > 0, got {seconds}")));
        }
        self.slot_duration_s = seconds;
        Ok(self)
    }

    pub fn capacity(&self) -> &CapacityModel {
        &self.capacity
    }

    pub fn queue_limit_slots(&self) -> u32 {
        self.queue_limit_slots
    }

    pub fn current_slot(&self) -> u64 {
        self.slot
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    /// Parameters the router uses to promise fidelities.
    pub fn params(&self) -> FidelityParams {
        FidelityParams::new(self.p.clone(), self.dwell_s.clone(), self.receiver_t2_s)
            .expect("validated at construction")
    }

    /// Channels in use per path right now.
    pub fn occupancy(&self) -> Vec<u32> {
        let mut used = vec![0; self.capacity.paths()];
        for t in &self.active {
            used.iter_mut().zip(&t.usage).for_each(|(u, x)| *u += x);
        }
        used
    }

    pub fn free_channels(&self) -> Vec<u32> {
        self.capacity
            .channels_per_path
            .iter()
            .zip(self.occupancy())
            .map(|(c, u)| c - u)
            .collect()
    }

    /// Every transmission assigned so far.
    pub fn transmissions(&self) -> &[Transmission] {
        &self.history
    }

    /// Every time a queued request could not be served.
    pub fn waits(&self) -> &[WaitRecord] {
        &self.waits
    }

    /// Appends a request to the queue.
    pub fn submit(&mut self, request: UserRequest) -> Vec<RouterEvent> {
        let mut events = vec![RouterEvent::new(self.slot, EventKind::Requested, &request.user_id)];
        let verdict = if request.well_formed() {
            self.hopeless(&request)
        } else {
            Some(DenyReason::Malformed)
        };
        match verdict {
            Some(reason) => events.push(self.denial(&request.user_id, reason)),
            None => self.queue.push_back(Pending {
                request,
                age: 0,
                queued: false,
            }),
        }
        events
    }

    /// Walks the queue oldest first, assigning, aging or denying each request.
    pub fn process_slot(&mut self) -> Vec<RouterEvent> {
        let mut events = Vec::new();
        let mut waiting = VecDeque::new();
        while let Some(mut pending) = self.queue.pop_front() {
            let free = self.free_channels();
            match self.evaluate(&pending.request, &free, self.receiver_t2_s) {
                Ok(Some(choice)) => events.push(self.assign(&pending.request, choice)),
                Ok(None) => {
                    self.waits.push(WaitRecord {
                        slot: self.slot,
                        request: pending.request.clone(),
                        free,
                    });
                    pending.age += 1;
                    if pending.age > self.queue_limit_slots {
                        events.push(self.denial(&pending.request.user_id, DenyReason::Timeout));
                    } else {
                        if !pending.queued {
                            events.push(RouterEvent::new(
                                self.slot,
                                EventKind::Queued,
                                &pending.request.user_id,
                            ));
                            pending.queued = true;
                        }
                        waiting.push_back(pending);
                    }
                }
                Err(_) => events.push(self.denial(&pending.request.user_id, DenyReason::Infeasible)),
            }
        }
        self.queue = waiting;
        events
    }

    /// Moves to the next slot and frees channels of finished transmissions.
    pub fn advance(&mut self) {
        self.slot += 1;
        let now = self.slot;
        self.active.retain(|t| t.release_slot > now);
    }

    /// Replays `schedule` for at least `slots` slots and until every request
    /// has terminated. Requests scheduled for the same slot keep their order.
    pub fn run(&mut self, schedule: &[ScheduledRequest], slots: u64) -> Vec<RouterEvent> {
        let mut order: Vec<&ScheduledRequest> = schedule.iter().collect();
        order.sort_by_key(|s| s.slot);
        let mut next = 0;
        let mut log = Vec::new();
        let start = self.slot;
        loop {
            let elapsed = self.slot - start;
            if elapsed >= slots && next == order.len() && self.queue.is_empty() {
                break;
            }
            while next < order.len() && order[next].slot <= elapsed {
                log.extend(self.submit(order[next].request.clone()));
                next += 1;
            }
            log.extend(self.process_slot());
            self.advance();
        }
        log
    }

    fn denial(&self, user_id: &str, reason: DenyReason) -> RouterEvent {
        RouterEvent {
            reason: Some(reason),
            ..RouterEvent::new(self.slot, EventKind::Denied, user_id)
        }
    }

    fn assign(&mut self, request: &UserRequest, choice: Choice) -> RouterEvent {
        let usage = self
            .capacity
            .channels_for(&choice.config, 1)
            .expect("chosen configurations fit the capacity model");
        let duration = 1 + self.classical_latency_slots as u64 + self.hold_slots(&choice.config);
        let t = Transmission {
            user_id: request.user_id.clone(),
            config: choice.config.clone(),
            usage,
            start_slot: self.slot,
            release_slot: self.slot + duration,
        };
        self.active.push(t.clone());
        self.history.push(t);
        RouterEvent {
            configuration: Some(choice.config.label()),
            fidelity: Some(choice.fidelity),
            ..RouterEvent::new(self.slot, EventKind::Assigned, &request.user_id)
        }
    }

    /// Extra slots the receiver holds the earliest qudits of `config`.
    fn hold_slots(&self, config: &Configuration) -> u64 {
        let used: Vec<f64> = config
            .counts()
            .iter()
            .zip(&self.dwell_s)
            .filter(|(c, _)| **c > 0)
            .map(|(_, d)| *d)
            .collect();
        let longest = used.iter().cloned().fold(0.0, f64::max);
        let shortest = used.iter().cloned().fold(f64::INFINITY, f64::min);
        let wait = if used.is_empty() { 0.0 } else { longest - shortest };
        (wait / self.slot_duration_s).ceil() as u64
    }

    /// Denial reason if not even an empty network could serve the request.
    fn hopeless(&self, request: &UserRequest) -> Option<DenyReason> {
        if self
            .capacity
            .qudits_per_channel(request.payload.coding.dimension())
            .is_err()
        {
            return Some(DenyReason::Infeasible);
        }
        let all = self.capacity.channels_per_path.clone();
        match self.evaluate(request, &all, self.receiver_t2_s) {
            Ok(Some(_)) => None,
            Ok(None) => match self.evaluate(request, &all, f64::INFINITY) {
                Ok(Some(_)) => Some(DenyReason::Coherence),
                _ => Some(DenyReason::Infeasible),
            },
            Err(_) => Some(DenyReason::Infeasible),
        }
    }

    /// What the request would get on `free` channels, if anything acceptable.
    fn evaluate(&self, request: &UserRequest, free: &[u32], t2_s: f64) -> Result<Option<Choice>> {
        let Ok(cap) = CapacityModel::new(free.to_vec(), self.capacity.channel_capacity) else {
            return Ok(None);
        };
        let rows = enumerate_rows(&cap, &[request.payload])?;
        if rows.is_empty() {
            return Ok(None);
        }
        let params = FidelityParams::new(self.p.clone(), self.dwell_s.clone(), t2_s)?;
        let decision = select(request.regime, &rows, &params)?;
        let choice = Choice {
            config: decision.favored_config().clone(),
            fidelity: decision.favored_fidelity(),
        };
        let Some(threshold) = request.min_fidelity else {
            return Ok(Some(choice));
        };
        if choice.fidelity >= threshold {
            return Ok(Some(choice));
        }
        // reroute: anything meeting the threshold, storage-free first
        let mut best: Option<(bool, Choice)> = None;
        for config in candidate_configs(&cap, &request.payload)? {
            let f = fidelity(&config, &params)?;
            if f < threshold {
                continue;
            }
            let stores = config.uses_storage();
            let better = match &best {
                None => true,
                Some((s, c)) => (!stores && *s) || (stores == *s && f > c.fidelity),
            };
            if better {
                best = Some((stores, Choice { config, fidelity: f }));
            }
        }
        Ok(best.map(|(_, c)| c))
    }

    /// Whether `request` could have been served on `free` channels.
    pub fn could_serve(&self, request: &UserRequest, free: &[u32]) -> bool {
        matches!(self.evaluate(request, free, self.receiver_t2_s), Ok(Some(_)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn router(channels: Vec<u32>) -> RouterState {
        let cap = CapacityModel::new(channels, 9).unwrap();
        RouterState::new(vec![0.95, 0.945], vec![6.159e-7, 0.0], cap, f64::INFINITY).unwrap()
    }

    fn u7(id: &str) -> UserRequest {
        UserRequest::new(id, "unencoded:7x5".parse().unwrap(), Regime::Greedy)
    }

    fn at(slot: u64, request: UserRequest) -> ScheduledRequest {
        ScheduledRequest { slot, request }
    }

    #[test]
    fn uncontended_request_assigned_immediately() {
        let mut r = router(vec![5, 5]);
        let log = r.run(&[at(0, u7("a"))], 1);
        let kinds: Vec<EventKind> = log.iter().map(|e| e.kind).collect();
        assert_eq!(kinds, vec![EventKind::Requested, EventKind::Assigned]);
        assert_eq!(log[1].slot, 0);
        assert_eq!(log[1].configuration.as_deref(), Some("5+0/u7"));
    }

    #[test]
    fn two_greedy_users_split_paths() {
        let mut r = router(vec![5, 5]);
        let log = r.run(&[at(0, u7("a")), at(0, u7("b"))], 1);
        let assigned: Vec<_> = log
            .iter()
            .filter(|e| e.kind == EventKind::Assigned)
            .map(|e| (e.user_id.as_str(), e.configuration.as_deref().unwrap()))
            .collect();
        assert_eq!(assigned, vec![("a", "5+0/u7"), ("b", "0+5/u7")]);
    }

    #[test]
    fn oversized_dimension_infeasible() {
        let mut r = router(vec![5, 5]);
        let req = UserRequest::new("a", "qrs:11".parse().unwrap(), Regime::Greedy);
        let log = r.run(&[at(0, req)], 1);
        assert_eq!(log.last().unwrap().reason, Some(DenyReason::Infeasible));
    }

    #[test]
    fn malformed_threshold() {
        let mut r = router(vec![5, 5]);
        let log = r.run(&[at(0, u7("a").with_threshold(1.5))], 1);
        assert_eq!(log.last().unwrap().reason, Some(DenyReason::Malformed));
    }

    #[test]
    fn zero_threshold_always_assignable() {
        let mut r = router(vec![5, 5]);
        let log = r.run(&[at(0, u7("a").with_threshold(0.0))], 1);
        assert_eq!(log.last().unwrap().kind, EventKind::Assigned);
    }

    #[test]
    fn zero_queue_limit_times_out() {
        let mut r = router(vec![5, 0]).with_queue_limit(0);
        let log = r.run(&[at(0, u7("a")), at(0, u7("b"))], 1);
        let last = log.last().unwrap();
        assert_eq!((last.user_id.as_str(), last.reason), ("b", Some(DenyReason::Timeout)));
        assert_eq!(last.slot, 0);
    }

    #[test]
    fn waiting_request_gets_released_channels() {
        let mut r = router(vec![5, 0]);
        let log = r.run(&[at(0, u7("a")), at(0, u7("b"))], 1);
        let b: Vec<_> = log.iter().filter(|e| e.user_id == "b").map(|e| e.kind).collect();
        assert_eq!(b, vec![EventKind::Requested, EventKind::Queued, EventKind::Assigned]);
    }

    #[test]
    fn storage_request_denied_on_coherence() {
        let cap = CapacityModel::new(vec![3, 5], 9).unwrap();
        let r = RouterState::new(vec![0.95, 0.945], vec![6.159e-7, 0.0], cap, 1e-6).unwrap();
        let params = r.params().with_t2(f64::INFINITY).unwrap();
        let f05 = fidelity(&"0+5/u7".parse().unwrap(), &params).unwrap();
        let f32 = fidelity(&"3+2/u7".parse().unwrap(), &params).unwrap();
        let mut r = r;
        let log = r.run(&[at(0, u7("a").with_threshold(0.5 * (f05 + f32)))], 1);
        assert_eq!(log.last().unwrap().reason, Some(DenyReason::Coherence));
    }

    #[test]
    fn event_json_fields() {
        let e = RouterEvent::new(3, EventKind::Queued, "u1");
        assert_eq!(
            e.to_json(),
            r#"{"slot":3,"kind":"queued","user_id":"u1","configuration":null,"fidelity":null,"reason":null}"#
        );
    }
}
