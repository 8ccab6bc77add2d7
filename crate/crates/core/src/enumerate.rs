//! Feasible channel assignments ("rows") under a per-path channel capacity model.
//!
//! A channel carries any set of qudits whose dimension product stays within the
//! channel capacity, so a capacity-9 channel carries one qudit of dimension 4..=9
//! or two qutrits. Users whose packets share the same channels form one slot;
//! the slot's degeneracy is the number of such users (at most the number of
//! qudits of that dimension a channel can hold). A slot of degeneracy `g` whose
//! configuration puts `c` qudits on a path uses `ceil(g * c / m)` channels there,
//! `m` being the qudits per channel.
//!
//! A row is a multiset of slots. Emitted rows satisfy, in order:
//! 1. the channel usage fits every path;
//! 2. no slot could take one more user and no further single-user slot fits;
//! 3. built around a lead packet (the largest dimension present): the number of
//!    users of the lead packet, then of each smaller packet in turn, is the most
//!    that fits next to the larger ones;
//! 4. faster paths are filled first: no slot can move a qudit to a faster path;
//! 5. among rows serving the same users per packet, only those using the fewest
//!    channels.
//!
//! Unencoded packets of a dimension that shares channels stay on a single path.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{domain, structural, Result};
use crate::fidelity::{Coding, Configuration};
use crate::netmodel::AggregatedRoute;

/// Channels available on each path and the capacity shared by every channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapacityModel {
    pub channels_per_path: Vec<u32>,
    pub channel_capacity: u32,
}

impl CapacityModel {
    pub fn new(channels_per_path: Vec<u32>, channel_capacity: u32) -> Result<Self> {
        if channels_per_path.is_empty() {
            return Err(structural("capacity model without paths"));
        }
        if channels_per_path.iter().all(|&c| c == 0) {
            return Err(structural("capacity model without channels"));
        }
        if channel_capacity < 2 {
            return Err(domain(format!(
                "channel capacity must be >= 2, got {channel_capacity}"
            )));
        }
        Ok(Self {
            channels_per_path,
            channel_capacity,
        })
    }

    /// Bottleneck channel count and smallest channel capacity of each path.
    pub fn from_route(route: &AggregatedRoute) -> Result<Self> {
        let channels = route.paths().iter().map(|p| p.channel_count() as u32).collect();
        let capacity = route
            .paths()
            .iter()
            .filter_map(|p| p.min_channel_capacity())
            .min()
            .ok_or_else(|| structural("route without channels"))?;
        Self::new(channels, capacity)
    }

    pub fn paths(&self) -> usize {
        self.channels_per_path.len()
    }

    /// How many qudits of `dimension` fit on one channel.
    pub fn qudits_per_channel(&self, dimension: u32) -> Result<u32> {
        if dimension < 2 {
            return Err(domain(format!("qudit dimension must be >= 2, got {dimension}")));
        }
        if dimension > self.channel_capacity {
            return Err(domain(format!(
                "a dimension-{dimension} qudit exceeds channel capacity {}",
                self.channel_capacity
            )));
        }
        let mut per_channel = 0;
        let mut product = 1u64;
        while product * u64::from(dimension) <= u64::from(self.channel_capacity) {
            product *= u64::from(dimension);
            per_channel += 1;
        }
        Ok(per_channel)
    }

    /// Channels used on each path by `degeneracy` users sharing `config`.
    pub fn channels_for(&self, config: &Configuration, degeneracy: u32) -> Result<Vec<u32>> {
        let m = self.qudits_per_channel(config.coding().dimension())?;
        Ok(usage(config.counts(), degeneracy, m))
    }

    /// Whether `usage` fits within the channels of every path.
    pub fn fits(&self, usage: &[u32]) -> bool {
        usage.len() == self.paths()
            && usage.iter().zip(&self.channels_per_path).all(|(u, c)| u <= c)
    }
}

fn usage(counts: &[u32], degeneracy: u32, per_channel: u32) -> Vec<u32> {
    counts
        .iter()
        .map(|&c| (degeneracy * c).div_ceil(per_channel))
        .collect()
}

/// What one user sends: a coding and the number of qudits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Packet {
    pub coding: Coding,
    pub size: u32,
}

impl Packet {
    pub fn qrs(n: u32) -> Result<Self> {
        Ok(Self {
            coding: Coding::qrs(n)?,
            size: n,
        })
    }

    pub fn unencoded(dimension: u32, size: u32) -> Result<Self> {
        if size == 0 {
            return Err(domain("packet size must be >= 1"));
        }
        Ok(Self {
            coding: Coding::unencoded(dimension)?,
            size,
        })
    }

    fn confined(&self, per_channel: u32) -> bool {
        !self.coding.is_encoded() && per_channel > 1
    }
}

impl std::fmt::Display for Packet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.coding {
            Coding::Qrs { n } => write!(f, "qrs:{n}"),
            Coding::Unencoded { dimension } => write!(f, "unencoded:{dimension}x{}", self.size),
        }
    }
}

impl std::str::FromStr for Packet {
    type Err = crate::Error;

    /// `qrs:N` or `unencoded:DxSIZE`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || crate::Error::Parse(format!("bad payload '{s}', expected qrs:N or unencoded:DxSIZE"));
        let (kind, rest) = s.trim().split_once(':').ok_or_else(bad)?;
        match kind {
            "qrs" => Packet::qrs(rest.parse().map_err(|_| bad())?),
            "unencoded" => {
                let (d, size) = rest.split_once('x').ok_or_else(bad)?;
                Packet::unencoded(d.parse().map_err(|_| bad())?, size.parse().map_err(|_| bad())?)
            }
            _ => Err(bad()),
        }
    }
}

/// One assignment inside a row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub config: Configuration,
    pub degeneracy: u32,
    /// Whether the slot's qudits are exposed to receiver-memory decoherence.
    pub memory: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentRow {
    pub slots: Vec<Slot>,
    pub served_users: u32,
}

impl AssignmentRow {
    pub fn new(slots: Vec<(Configuration, u32)>) -> Self {
        let slots: Vec<Slot> = slots
            .into_iter()
            .map(|(config, degeneracy)| Slot {
                memory: config.uses_storage(),
                config,
                degeneracy,
            })
            .collect();
        let served_users = slots.iter().map(|s| s.degeneracy).sum();
        Self { slots, served_users }
    }

    pub fn memory_flags(&self) -> Vec<bool> {
        self.slots.iter().map(|s| s.memory).collect()
    }

    /// Channels used per path by all slots together.
    pub fn channel_usage(&self, cap: &CapacityModel) -> Result<Vec<u32>> {
        let mut total = vec![0; cap.paths()];
        for slot in &self.slots {
            if slot.config.paths() != cap.paths() {
                return Err(structural(format!(
                    "slot {} does not match the {}-path capacity model",
                    slot.config,
                    cap.paths()
                )));
            }
            for (t, u) in total.iter_mut().zip(cap.channels_for(&slot.config, slot.degeneracy)?) {
                *t += u;
            }
        }
        Ok(total)
    }

    /// Labels of the slots, e.g. `["5+2/n7", "0+3/n3"]`.
    pub fn labels(&self) -> Vec<String> {
        self.slots.iter().map(|s| s.config.label()).collect()
    }
}

/// Recomputes every slot's memory flag from its configuration.
pub fn mark_memory_flags(row: AssignmentRow) -> AssignmentRow {
    let slots = row
        .slots
        .into_iter()
        .map(|s| Slot {
            memory: s.config.uses_storage(),
            ..s
        })
        .collect();
    AssignmentRow { slots, ..row }
}

/// Rows for unencoded packets of `packet_size` qudits over the dimension palette.
pub fn enumerate_unencoded(
    cap: &CapacityModel,
    packet_size: u32,
    dims: &[u32],
) -> Result<Vec<AssignmentRow>> {
    if dims.is_empty() {
        return Err(structural("empty dimension palette"));
    }
    let palette = dims
        .iter()
        .map(|&d| Packet::unencoded(d, packet_size))
        .collect::<Result<Vec<_>>>()?;
    enumerate_rows(cap, &palette)
}

/// Rows for QRS-encoded users over the code palette.
pub fn enumerate_encoded(cap: &CapacityModel, codes: &[u32]) -> Result<Vec<AssignmentRow>> {
    if codes.is_empty() {
        return Err(structural("empty code palette"));
    }
    let palette = codes.iter().map(|&n| Packet::qrs(n)).collect::<Result<Vec<_>>>()?;
    enumerate_rows(cap, &palette)
}

/// All splits of one packet that a single user could be given on `cap`.
pub fn candidate_configs(cap: &CapacityModel, packet: &Packet) -> Result<Vec<Configuration>> {
    let m = cap.qudits_per_channel(packet.coding.dimension())?;
    splits(packet.size, cap.paths())
        .into_iter()
        .filter(|c| !packet.confined(m) || c.iter().filter(|&&x| x > 0).count() == 1)
        .filter(|c| cap.fits(&usage(c, 1, m)))
        .map(|c| Configuration::new(c, packet.coding))
        .collect()
}

/// Count vectors of `total` qudits over `paths` paths, path 1 count descending.
pub fn splits(total: u32, paths: usize) -> Vec<Vec<u32>> {
    fn go(prefix: &mut Vec<u32>, left: u32, paths: usize, out: &mut Vec<Vec<u32>>) {
        if prefix.len() + 1 == paths {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for take in (0..=left).rev() {
            prefix.push(take);
            go(prefix, left - take, paths, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if paths > 0 {
        go(&mut Vec::new(), total, paths, &mut out);
    }
    out
}

/// A slot shape available to the search: packet index, split, degeneracy.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Option_ {
    packet: usize,
    counts: Vec<u32>,
    degeneracy: u32,
    usage: Vec<u32>,
}

struct Search<'a> {
    cap: &'a CapacityModel,
    palette: Vec<Packet>,
    per_channel: Vec<u32>,
    options: Vec<Vec<Option_>>,
}

impl<'a> Search<'a> {
    fn new(cap: &'a CapacityModel, palette: &[Packet]) -> Result<Self> {
        let mut palette = palette.to_vec();
        palette.sort_by_key(|p| Reverse((p.coding.dimension(), p.size)));
        palette.dedup();
        let per_channel = palette
            .iter()
            .map(|p| cap.qudits_per_channel(p.coding.dimension()))
            .collect::<Result<Vec<_>>>()?;
        let options = palette
            .iter()
            .enumerate()
            .map(|(i, packet)| {
                let m = per_channel[i];
                splits(packet.size, cap.paths())
                    .into_iter()
                    .filter(|c| !packet.confined(m) || c.iter().filter(|&&x| x > 0).count() == 1)
                    .flat_map(|counts| {
                        (1..=m).rev().map(move |g| Option_ {
                            packet: i,
                            usage: usage(&counts, g, m),
                            counts: counts.clone(),
                            degeneracy: g,
                        })
                    })
                    .filter(|o| cap.fits(&o.usage))
                    .collect()
            })
            .collect();
        Ok(Self {
            cap,
            palette,
            per_channel,
            options,
        })
    }

    fn residual(&self, used: &[u32]) -> Vec<u32> {
        self.cap
            .channels_per_path
            .iter()
            .zip(used)
            .map(|(c, u)| c.saturating_sub(*u))
            .collect()
    }

    /// Multisets of options of packet `i` that fit `residual`, with their user counts.
    fn fills(&self, i: usize, residual: &[u32]) -> Vec<(Vec<usize>, u32)> {
        fn go(
            opts: &[Option_],
            start: usize,
            residual: &mut Vec<u32>,
            picked: &mut Vec<usize>,
            users: u32,
            out: &mut Vec<(Vec<usize>, u32)>,
        ) {
            out.push((picked.clone(), users));
            for j in start..opts.len() {
                let o = &opts[j];
                if o.usage.iter().zip(residual.iter()).any(|(u, r)| u > r) {
                    continue;
                }
                residual.iter_mut().zip(&o.usage).for_each(|(r, u)| *r -= u);
                picked.push(j);
                go(opts, j, residual, picked, users + o.degeneracy, out);
                picked.pop();
                residual.iter_mut().zip(&o.usage).for_each(|(r, u)| *r += u);
            }
        }
        let mut out = Vec::new();
        go(&self.options[i], 0, &mut residual.to_vec(), &mut Vec::new(), 0, &mut out);
        out
    }

    fn rows(&self) -> Vec<Vec<Option_>> {
        let mut found = Vec::new();
        for lead in 0..self.palette.len() {
            self.extend(lead, true, Vec::new(), &mut found);
        }
        found
    }

    fn extend(&self, i: usize, is_lead: bool, row: Vec<Option_>, found: &mut Vec<Vec<Option_>>) {
        if i == self.palette.len() {
            found.push(row);
            return;
        }
        let used = total_usage(&row, self.cap.paths());
        let fills = self.fills(i, &self.residual(&used));
        let best = fills.iter().map(|f| f.1).max().unwrap_or(0);
        if is_lead && best == 0 {
            return;
        }
        for (picked, users) in fills {
            if users != best {
                continue;
            }
            let mut next = row.clone();
            next.extend(picked.iter().map(|&j| self.options[i][j].clone()));
            self.extend(i + 1, false, next, found);
        }
    }

    fn acceptable(&self, row: &[Option_]) -> bool {
        let used = total_usage(row, self.cap.paths());
        if !self.cap.fits(&used) {
            return false;
        }
        let residual = self.residual(&used);
        // no further single user fits
        let room = self.options.iter().flatten().any(|o| {
            o.degeneracy == 1 && o.usage.iter().zip(&residual).all(|(u, r)| u <= r)
        });
        if room {
            return false;
        }
        for (idx, slot) in row.iter().enumerate() {
            let m = self.per_channel[slot.packet];
            if slot.degeneracy < m {
                let grown = usage(&slot.counts, slot.degeneracy + 1, m);
                if self.fits_with(row, idx, &grown) {
                    return false;
                }
            }
            let packet = &self.palette[slot.packet];
            for from in 1..slot.counts.len() {
                if slot.counts[from] == 0 {
                    continue;
                }
                for to in 0..from {
                    let mut moved = slot.counts.clone();
                    moved[from] -= 1;
                    moved[to] += 1;
                    if packet.confined(m) && moved.iter().filter(|&&x| x > 0).count() > 1 {
                        continue;
                    }
                    if self.fits_with(row, idx, &usage(&moved, slot.degeneracy, m)) {
                        return false;
                    }
                }
            }
        }
        true
    }

    fn fits_with(&self, row: &[Option_], replaced: usize, new_usage: &[u32]) -> bool {
        let mut total = new_usage.to_vec();
        for (j, o) in row.iter().enumerate() {
            if j != replaced {
                total.iter_mut().zip(&o.usage).for_each(|(t, u)| *t += u);
            }
        }
        self.cap.fits(&total)
    }

    fn users_by_packet(&self, row: &[Option_]) -> Vec<u32> {
        let mut users = vec![0; self.palette.len()];
        for o in row {
            users[o.packet] += o.degeneracy;
        }
        users
    }

    fn build_row(&self, row: &[Option_]) -> Result<AssignmentRow> {
        let mut slots = row
            .iter()
            .map(|o| {
                Configuration::new(o.counts.clone(), self.palette[o.packet].coding)
                    .map(|c| (c, o.degeneracy))
            })
            .collect::<Result<Vec<_>>>()?;
        slots.sort_by_key(|s| Reverse(slot_key(s)));
        Ok(AssignmentRow::new(slots))
    }
}

fn total_usage(row: &[Option_], paths: usize) -> Vec<u32> {
    let mut total = vec![0; paths];
    for o in row {
        total.iter_mut().zip(&o.usage).for_each(|(t, u)| *t += u);
    }
    total
}

type SlotKey = (u32, u32, Vec<u32>, u32);

fn slot_key((config, degeneracy): &(Configuration, u32)) -> SlotKey {
    (
        config.coding().dimension(),
        config.total(),
        config.counts().to_vec(),
        *degeneracy,
    )
}

fn row_key(row: &AssignmentRow) -> Vec<SlotKey> {
    row.slots
        .iter()
        .map(|s| slot_key(&(s.config.clone(), s.degeneracy)))
        .collect()
}

/// Rows for an arbitrary palette of packets, in canonical order.
///
/// Canonical order: slots inside a row by descending dimension then descending
/// path counts; rows by descending lead dimension then descending slot list.
pub fn enumerate_rows(cap: &CapacityModel, palette: &[Packet]) -> Result<Vec<AssignmentRow>> {
    if palette.is_empty() {
        return Err(structural("empty packet palette"));
    }
    let search = Search::new(cap, palette)?;
    let candidates: Vec<Vec<Option_>> = search
        .rows()
        .into_iter()
        .filter(|r| !r.is_empty() && search.acceptable(r))
        .collect();

    let mut fewest: BTreeMap<Vec<u32>, u32> = BTreeMap::new();
    for row in &candidates {
        let channels: u32 = total_usage(row, cap.paths()).iter().sum();
        let entry = fewest.entry(search.users_by_packet(row)).or_insert(u32::MAX);
        *entry = (*entry).min(channels);
    }

    let mut seen = BTreeSet::new();
    let mut rows = Vec::new();
    for row in &candidates {
        let channels: u32 = total_usage(row, cap.paths()).iter().sum();
        if fewest[&search.users_by_packet(row)] != channels {
            continue;
        }
        let row = search.build_row(row)?;
        if seen.insert(row_key(&row)) {
            rows.push(row);
        }
    }
    rows.sort_by_key(|r| Reverse(row_key(r)));
    Ok(rows)
}
