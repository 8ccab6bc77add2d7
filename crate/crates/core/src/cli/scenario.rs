//! Scenario files (TOML).
//!
//! ```toml
//! T2 = "inf"            # seconds, or "inf"
//! seed = 7
//! regime = "greedy"     # greedy | restricted[:M] | balanced[-fair|-unfair]
//! capacity = 9
//! dims = [7, 3]         # unencoded palette
//! codes = [7, 5, 3]     # QRS palette
//! packet_size = 5
//!
//! [[paths]]
//! p = 0.9               # or length / eta / att_length
//! channels = 5
//! light_speed = 2e5     # km/s
//! t_congestion = 0.0    # s
//!
//! [sweep]
//! var = "p2"            # pK, or T2 (log spaced)
//! lo = 0.5
//! hi = 1.0
//! points = 51
//!
//! [router]
//! queue_limit = 8
//! slot_duration = 1e-3
//! ```

use std::path::Path;

use serde::Deserialize;

use crate::enumerate::CapacityModel;
use crate::error::{Error, Result};
use crate::fidelity::{Configuration, FidelityParams};
use crate::netmodel::{dwell_times, AggregatedRoute, LinkSpec, PathSpec};
use crate::policy::Regime;
use crate::routersim::{RouterState, DEFAULT_QUEUE_LIMIT, DEFAULT_SLOT_DURATION_S};

const DEFAULT_LIGHT_SPEED_KM_S: f64 = 2e5;

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Seconds {
    Value(f64),
    Text(String),
}

impl Seconds {
    fn resolve(&self) -> Result<f64> {
        let t = match self {
            Seconds::Value(v) => *v,
            Seconds::Text(s) if s.trim().eq_ignore_ascii_case("inf") => f64::INFINITY,
            Seconds::Text(s) => s
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad coherence time '{s}'")))?,
        };
        if !(t > 0.0) {
            return Err(Error::Domain(format!("coherence time must be > 0, got {t}")));
        }
        Ok(t)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct PathEntry {
    p: Option<f64>,
    length: Option<f64>,
    #[serde(default = "one")]
    eta: f64,
    att_length: Option<f64>,
    #[serde(default = "light_speed")]
    light_speed: f64,
    #[serde(default)]
    t_congestion: f64,
    channels: u32,
}

fn one() -> f64 {
    1.0
}

fn light_speed() -> f64 {
    DEFAULT_LIGHT_SPEED_KM_S
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepEntry {
    var: String,
    lo: f64,
    hi: f64,
    points: usize,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RouterEntry {
    queue_limit: Option<u32>,
    slot_duration: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(rename = "T2", alias = "t2")]
    t2: Option<Seconds>,
    #[serde(default)]
    seed: u64,
    regime: Option<String>,
    #[serde(default = "nine")]
    capacity: u32,
    #[serde(default)]
    dims: Vec<u32>,
    #[serde(default)]
    codes: Vec<u32>,
    #[serde(default = "five")]
    packet_size: u32,
    paths: Vec<PathEntry>,
    sweep: Option<SweepEntry>,
    #[serde(default)]
    router: RouterEntry,
    #[serde(default)]
    pairs: Vec<[String; 2]>,
}

fn nine() -> u32 {
    9
}

fn five() -> u32 {
    5
}

/// Swept quantity: a path's transmission probability or the coherence time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepVar {
    /// Zero-based path index.
    P(usize),
    T2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub var: SweepVar,
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Sweep {
    /// Grid values; coherence times are spaced evenly in log scale.
    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.lo];
        }
        let step = |i: usize| i as f64 / (self.points - 1) as f64;
        match self.var {
            SweepVar::P(_) => (0..self.points)
                .map(|i| self.lo + (self.hi - self.lo) * step(i))
                .collect(),
            SweepVar::T2 => {
                let (a, b) = (self.lo.ln(), self.hi.ln());
                (0..self.points).map(|i| (a + (b - a) * step(i)).exp()).collect()
            }
        }
    }

    pub fn column(&self) -> String {
        match self.var {
            SweepVar::P(k) => format!("p{}", k + 1),
            SweepVar::T2 => "T2_s".into(),
        }
    }

    /// `params` with the swept quantity set to `value`.
    pub fn apply(&self, params: &FidelityParams, value: f64) -> Result<FidelityParams> {
        match self.var {
            SweepVar::P(k) => params.with_p(k, value),
            SweepVar::T2 => params.with_t2(value),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub route: AggregatedRoute,
    pub p: Vec<f64>,
    pub dwell_s: Vec<f64>,
    pub capacity: CapacityModel,
    pub dims: Vec<u32>,
    pub codes: Vec<u32>,
    pub packet_size: u32,
    pub t2_s: f64,
    pub seed: u64,
    pub regime: Regime,
    pub sweep: Option<Sweep>,
    pub queue_limit: u32,
    pub slot_duration_s: f64,
    pub pairs: Vec<(Configuration, Configuration)>,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: ScenarioFile =
            toml::from_str(text).map_err(|e| Error::Parse(format!("scenario: {e}")))?;
        if file.paths.is_empty() {
            return Err(Error::Structural("scenario has no paths".into()));
        }

        let mut specs = Vec::with_capacity(file.paths.len());
        for (i, entry) in file.paths.iter().enumerate() {
            if entry.channels == 0 {
                return Err(Error::Structural(format!("path {} has no channels", i + 1)));
            }
            let link = LinkSpec::uniform(
                entry.length.unwrap_or(0.0),
                entry.channels as usize,
                file.capacity,
            )?;
            let mut spec = PathSpec::new(
                vec![link],
                entry.eta,
                entry.att_length.unwrap_or(f64::INFINITY),
                entry.light_speed,
                entry.t_congestion,
            );
            match (entry.p, entry.length, entry.att_length) {
                (Some(p), length, att) => {
                    if length.is_some() || att.is_some() {
                        log::warn!(
                            "path {}: both p and length/att_length given, using p = {p}",
                            i + 1
                        );
                    }
                    spec = spec.with_transmission(p);
                }
                (None, _, None) => {
                    return Err(Error::Structural(format!(
                        "path {} needs either p or att_length",
                        i + 1
                    )))
                }
                (None, _, Some(_)) => {}
            }
            specs.push(spec);
        }
        let route = AggregatedRoute::new(specs)?;
        let p = route.transmission_probabilities()?;
        let dwell_s = dwell_times(&route)?;
        let capacity = CapacityModel::from_route(&route)?;

        let t2_s = match &file.t2 {
            Some(t) => t.resolve()?,
            None => f64::INFINITY,
        };
        FidelityParams::new(p.clone(), dwell_s.clone(), t2_s)?;

        let regime = match &file.regime {
            Some(r) => r.parse()?,
            None => Regime::Greedy,
        };
        let sweep = file.sweep.as_ref().map(|s| parse_sweep(s, p.len())).transpose()?;
        if file.packet_size == 0 {
            return Err(Error::Domain("packet_size must be >= 1".into()));
        }
        let pairs = file
            .pairs
            .iter()
            .map(|[a, b]| Ok((a.parse()?, b.parse()?)))
            .collect::<Result<Vec<_>>>()?;
        let slot_duration_s = file.router.slot_duration.unwrap_or(DEFAULT_SLOT_DURATION_S);

        Ok(Self {
            route,
            p,
            dwell_s,
            capacity,
            dims: file.dims,
            codes: file.codes,
            packet_size: file.packet_size,
            t2_s,
            seed: file.seed,
            regime,
            sweep,
            queue_limit: file.router.queue_limit.unwrap_or(DEFAULT_QUEUE_LIMIT),
            slot_duration_s,
            pairs,
        })
    }

    pub fn params(&self) -> FidelityParams {
        FidelityParams::new(self.p.clone(), self.dwell_s.clone(), self.t2_s)
            .expect("validated while loading")
    }

    pub fn router(&self) -> Result<RouterState> {
        RouterState::new(self.p.clone(), self.dwell_s.clone(), self.capacity.clone(), self.t2_s)?
            .with_queue_limit(self.queue_limit)
            .with_slot_duration(self.slot_duration_s)
    }
}

fn parse_sweep(entry: &SweepEntry, paths: usize) -> Result<Sweep> {
    let name = entry.var.trim();
    let var = if name.eq_ignore_ascii_case("t2") {
        SweepVar::T2
    } else {
        let k: usize = name
            .strip_prefix('p')
            .and_then(|k| k.parse().ok())
            .ok_or_else(|| Error::Parse(format!("unknown sweep variable '{name}'")))?;
        if k == 0 || k > paths {
            return Err(Error::Structural(format!(
                "sweep variable '{name}' names a missing path"
            )));
        }
        SweepVar::P(k - 1)
    };
    let ordered = if entry.points == 1 {
        entry.lo == entry.hi
    } else {
        entry.points > 1 && entry.lo < entry.hi
    };
    if !ordered || !entry.lo.is_finite() || !entry.hi.is_finite() {
        return Err(Error::Domain(format!(
            "sweep range [{}, {}] with {} points is empty or unordered",
            entry.lo, entry.hi, entry.points
        )));
    }
    let in_range = match var {
        SweepVar::P(_) => entry.lo >= 0.0 && entry.hi <= 1.0,
        SweepVar::T2 => entry.lo > 0.0,
    };
    if !in_range {
        return Err(Error::Domain(format!(
            "sweep range [{}, {}] outside the domain of {name}",
            entry.lo, entry.hi
        )));
    }
    Ok(Sweep {
        var,
        lo: entry.lo,
        hi: entry.hi,
        points: entry.points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
        T2 = "inf"
        codes = [7, 5, 3]
        [[paths]]
        p = 0.9
        channels = 5
        [[paths]]
        p = 0.8
        channels = 5
        t_congestion = 1e-6
    "#;

    #[test]
    fn minimal_scenario() {
        let s = Scenario::from_toml(BASE).unwrap();
        assert_eq!(s.p, vec![0.9, 0.8]);
        assert_eq!(s.dwell_s, vec![1e-6, 0.0]);
        assert_eq!(s.capacity.channels_per_path, vec![5, 5]);
        assert!(s.t2_s.is_infinite());
        assert_eq!(s.regime, Regime::Greedy);
        assert!(s.sweep.is_none());
    }

    #[test]
    fn paths_sorted_by_delay() {
        let text = r#"
            T2 = 1e-4
            [[paths]]
            p = 0.8
            channels = 4
            length = 100.0
            att_length = 22.0
            [[paths]]
            length = 50.0
            att_length = 22.0
            channels = 3
        "#;
        let s = Scenario::from_toml(text).unwrap();
        assert_eq!(s.capacity.channels_per_path, vec![3, 4]);
        assert!((s.p[0] - (-50.0f64 / 22.0).exp()).abs() < 1e-15);
        assert_eq!(s.p[1], 0.8);
        assert!((s.dwell_s[0] - 50.0 / 2e5).abs() < 1e-15);
    }

    #[test]
    fn sweeps() {
        let s = Scenario::from_toml(&format!(
            "{BASE}\n[sweep]\nvar = \"T2\"\nlo = 1e-6\nhi = 1e-2\npoints = 5\n"
        ))
        .unwrap();
        let v = s.sweep.unwrap().values();
        assert!((v[1] - 1e-5).abs() < 1e-18 && (v[4] - 1e-2).abs() < 1e-15);
        for bad in [
            "[sweep]\nvar = \"p3\"\nlo = 0.5\nhi = 1.0\npoints = 5\n",
            "[sweep]\nvar = \"p2\"\nlo = 1.0\nhi = 0.5\npoints = 5\n",
            "[sweep]\nvar = \"q\"\nlo = 0.5\nhi = 1.0\npoints = 5\n",
        ] {
            assert!(Scenario::from_toml(&format!("{BASE}\n{bad}")).is_err(), "{bad}");
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Scenario::from_toml("T2 = \"inf\"\npaths = []").is_err());
        assert!(Scenario::from_toml(&BASE.replace("channels = 5\n        [[paths]]", "channels = 0\n        [[paths]]")).is_err());
        assert!(Scenario::from_toml(&BASE.replace("\"inf\"", "-1.0")).is_err());
        assert!(Scenario::from_toml(&format!("{BASE}\nbogus = 1")).is_err());
        assert!(Scenario::from_toml("[[paths]]\nchannels = 5\n").is_err());
    }
}
