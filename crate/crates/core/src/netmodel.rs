//! Network description and the four QoS metrics: bandwidth, loss, delay, jitter.
//!
//! Units are kilometres and seconds throughout. Probabilities are plain `f64`
//! values in `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, structural, Result};

/// One transmission medium on a link.
///
/// `capacity` is the largest product of qudit dimensions the channel can carry
/// in one slot: a capacity-9 channel takes one qudit of dimension up to 9, or
/// two qutrits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub capacity: u32,
}

impl ChannelSpec {
    pub fn new(capacity: u32) -> Result<Self> {
        if capacity < 2 {
            return Err(domain(format!("channel capacity must be >= 2, got {capacity}")));
        }
        Ok(Self { capacity })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub length_km: f64,
    pub channels: Vec<ChannelSpec>,
}

impl LinkSpec {
    pub fn new(length_km: f64, channels: Vec<ChannelSpec>) -> Result<Self> {
        if !(length_km >= 0.0) || !length_km.is_finite() {
            return Err(domain(format!("link length must be finite and >= 0, got {length_km}")));
        }
        if channels.is_empty() {
            return Err(structural("a link needs at least one channel"));
        }
        Ok(Self { length_km, channels })
    }

    /// `count` identical channels of the given capacity.
    pub fn uniform(length_km: f64, count: usize, capacity: u32) -> Result<Self> {
        let channel = ChannelSpec::new(capacity)?;
        Self::new(length_km, vec![channel; count])
    }

    /// Aggregate capacity of all channels on the link.
    pub fn capacity(&self) -> u64 {
        self.channels.iter().map(|c| u64::from(c.capacity)).sum()
    }
}

/// A sequence of links from sender to receiver plus its loss and delay parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSpec {
    pub links: Vec<LinkSpec>,
    /// Extra loss term from memories, converters and similar components.
    pub eta: f64,
    pub attenuation_length_km: f64,
    pub light_speed_km_per_s: f64,
    pub congestion_time_s: f64,
    /// When set, replaces `eta * exp(-L / L_att)` as the transmission probability.
    pub transmission_override: Option<f64>,
}

impl PathSpec {
    pub fn new(
        links: Vec<LinkSpec>,
        eta: f64,
        attenuation_length_km: f64,
        light_speed_km_per_s: f64,
        congestion_time_s: f64,
    ) -> Self {
        Self {
            links,
            eta,
            attenuation_length_km,
            light_speed_km_per_s,
            congestion_time_s,
            transmission_override: None,
        }
    }

    pub fn with_transmission(mut self, p: f64) -> Self {
        self.transmission_override = Some(p);
        self
    }

    /// Total length, the sum of the link lengths.
    pub fn length_km(&self) -> f64 {
        self.links.iter().map(|l| l.length_km).sum()
    }

    /// Channel count of the bottleneck link (fewest channels).
    pub fn channel_count(&self) -> usize {
        self.links.iter().map(|l| l.channels.len()).min().unwrap_or(0)
    }

    /// Smallest channel capacity found anywhere on the path.
    pub fn min_channel_capacity(&self) -> Option<u32> {
        self.links
            .iter()
            .flat_map(|l| l.channels.iter().map(|c| c.capacity))
            .min()
    }
}

/// Paths joining one sender to one receiver, kept in ascending delay order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedRoute {
    paths: Vec<PathSpec>,
}

impl AggregatedRoute {
    /// Builds a route, stably sorting the paths by delay.
    pub fn new(paths: Vec<PathSpec>) -> Result<Self> {
        if paths.is_empty() {
            return Err(structural("an aggregated route needs at least one path"));
        }
        let mut keyed = paths
            .into_iter()
            .map(|p| path_delay(&p).map(|d| (d, p)))
            .collect::<Result<Vec<_>>>()?;
        keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self {
            paths: keyed.into_iter().map(|(_, p)| p).collect(),
        })
    }

    pub fn paths(&self) -> &[PathSpec] {
        &self.paths
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn delays(&self) -> Result<Vec<f64>> {
        self.paths.iter().map(path_delay).collect()
    }

    pub fn transmission_probabilities(&self) -> Result<Vec<f64>> {
        self.paths.iter().map(transmission_probability).collect()
    }
}

/// Per-route metric summary. `loss` stays `None` until a fidelity is known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QosReport {
    pub bandwidth_per_slot: u64,
    pub delay_s: Vec<f64>,
    pub jitter_s: f64,
    pub loss: Option<f64>,
}

impl QosReport {
    /// Bandwidth, delays and arrival spread of `route`.
    pub fn for_route(route: &AggregatedRoute) -> Result<Self> {
        let delay_s = route.delays()?;
        Ok(Self {
            bandwidth_per_slot: aggregate_bandwidth(route)?,
            jitter_s: jitter(&delay_s)?,
            delay_s,
            loss: None,
        })
    }

    pub fn with_fidelity(mut self, fidelity: f64) -> Result<Self> {
        self.loss = Some(crate::fidelity::loss_metric(fidelity)?);
        Ok(self)
    }
}

/// Survival probability of one qudit over the path: `eta * exp(-L / L_att)`.
pub fn transmission_probability(path: &PathSpec) -> Result<f64> {
    if let Some(p) = path.transmission_override {
        if !(0.0..=1.0).contains(&p) {
            return Err(domain(format!("transmission probability {p} outside [0, 1]")));
        }
        return Ok(p);
    }
    if !(0.0..=1.0).contains(&path.eta) {
        return Err(domain(format!("eta {} outside [0, 1]", path.eta)));
    }
    if !(path.attenuation_length_km > 0.0) {
        return Err(domain(format!(
            "attenuation length must be > 0, got {}",
            path.attenuation_length_km
        )));
    }
    let p = path.eta * (-path.length_km() / path.attenuation_length_km).exp();
    Ok(p.clamp(0.0, 1.0))
}

/// Propagation plus congestion time, `L / c + t_c`.
pub fn path_delay(path: &PathSpec) -> Result<f64> {
    if !(path.congestion_time_s >= 0.0) || !path.congestion_time_s.is_finite() {
        return Err(domain(format!(
            "congestion time must be finite and >= 0, got {}",
            path.congestion_time_s
        )));
    }
    let length = path.length_km();
    if length == 0.0 {
        return Ok(path.congestion_time_s);
    }
    if !(path.light_speed_km_per_s > 0.0) {
        return Err(domain(format!(
            "light speed must be > 0, got {}",
            path.light_speed_km_per_s
        )));
    }
    Ok(length / path.light_speed_km_per_s + path.congestion_time_s)
}

/// Capacity of the bottleneck link.
pub fn path_bandwidth(path: &PathSpec) -> Result<u64> {
    path.links
        .iter()
        .map(LinkSpec::capacity)
        .min()
        .ok_or_else(|| structural("path has no links"))
}

/// Sum of the path bandwidths.
pub fn aggregate_bandwidth(route: &AggregatedRoute) -> Result<u64> {
    route.paths.iter().map(path_bandwidth).sum()
}

/// Spread of arrival times, `max - min`.
pub fn jitter(arrival_times: &[f64]) -> Result<f64> {
    let first = *arrival_times
        .first()
        .ok_or_else(|| structural("jitter of an empty arrival set"))?;
    let (lo, hi) = arrival_times
        .iter()
        .fold((first, first), |(lo, hi), &t| (lo.min(t), hi.max(t)));
    Ok(hi - lo)
}

/// Time each path's arrivals wait for the slowest path: `tau_max - tau_i`.
pub fn dwell_times(route: &AggregatedRoute) -> Result<Vec<f64>> {
    let delays = route.delays()?;
    Ok(dwell_from_delays(&delays))
}

pub(crate) fn dwell_from_delays(delays: &[f64]) -> Vec<f64> {
    let max = delays.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    delays.iter().map(|&d| max - d).collect()
}
