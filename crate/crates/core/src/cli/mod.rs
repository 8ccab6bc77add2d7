//! Command-line front end.
//!
//! Exit codes: 0 success, 1 validation failure, 2 usage or scenario error.

pub mod format;
pub mod scenario;

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::{json, Map, Value};

use crate::enumerate::{enumerate_encoded, enumerate_unencoded, splits, AssignmentRow, Packet};
use crate::error::Error;
use crate::fidelity::{fidelity, Configuration, FidelityParams};
use crate::oracle::{self, TrialPlan, GENERATOR};
use crate::policy::{fidelity_gap_table, select, t2_threshold, Regime};
use crate::routersim::{ScheduledRequest, UserRequest};

pub use scenario::{Scenario, Sweep, SweepVar};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Smallest trial count `validate` accepts.
pub const MIN_TRIALS: u64 = 10_000;
/// Largest accepted |analytic - mean| / std_error.
pub const MAX_Z: f64 = 4.0;

#[derive(Debug, Parser)]
#[command(name = "aqnet", version, about = "Channel assignment and fidelity modeling for aggregated quantum networks")]
pub struct Cli {
    /// Scenario file (TOML).
    #[arg(long, global = true)]
    pub scenario: Option<PathBuf>,
    /// Output file; standard output when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Csv)]
    pub format: OutputFormat,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Figure {
    /// Fidelity of every unencoded split versus the sweep variable.
    UnencodedFid,
    /// Fidelity of every QRS split versus the sweep variable.
    EncodedFid,
    /// |F_a - F_b| per configuration pair and the pair with the smallest gap.
    Gap,
    /// The greedy regime's pick along the sweep.
    Greedy,
    /// Coherence time at which each pair's fidelities cross, per p value.
    T2Inset,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Feasible assignment rows with degeneracies, memory flags and served users.
    Tables,
    /// Figure data along the scenario's sweep.
    Sweep {
        #[arg(long, value_enum)]
        figure: Figure,
    },
    /// Replays a request schedule through the router; JSON lines on output.
    Route {
        #[arg(long)]
        schedule: PathBuf,
        /// Slots to simulate before draining the queue.
        #[arg(long)]
        slots: Option<u64>,
    },
    /// Compares analytic fidelities with the Monte Carlo oracle.
    Validate {
        #[arg(long, default_value_t = 1_000_000)]
        trials: u64,
        /// Defaults to the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for the oracle; all cores when omitted.
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, hide = true, default_value_t = 0.0, allow_negative_numbers = true)]
        analytic_offset: f64,
    },
}

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Validation(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Validation(_) => EXIT_VALIDATION,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Validation(m) => f.write_str(m),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(format!("i/o error: {e}"))
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("aqnet: {f}");
            f.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), Failure> {
    let path = cli
        .scenario
        .as_deref()
        .ok_or_else(|| Failure::Usage("--scenario is required".into()))?;
    let scenario = Scenario::load(path)?;
    let mut out: Box<dyn Write> = match &cli.out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    let result = match &cli.command {
        Command::Tables => tables(&scenario)?.write(&mut out, cli.format),
        Command::Sweep { figure } => sweep(&scenario, *figure)?.write(&mut out, cli.format),
        Command::Route { schedule, slots } => route(&scenario, schedule, *slots, &mut out),
        Command::Validate {
            trials,
            seed,
            workers,
            analytic_offset,
        } => {
            let report = validate(
                &scenario,
                *trials,
                seed.unwrap_or(scenario.seed),
                *workers,
                *analytic_offset,
            )?;
            report.table.write(&mut out, cli.format)?;
            out.flush()?;
            eprintln!(
                "{} cases, {} generator, max |z| = {}",
                report.cases,
                GENERATOR,
                format::num(report.max_z)
            );
            if report.max_z > MAX_Z {
                return Err(Failure::Validation(format!(
                    "analytic and Monte Carlo values disagree (max |z| = {} > {MAX_Z})",
                    format::num(report.max_z)
                )));
            }
            Ok(())
        }
    };
    result?;
    out.flush()?;
    Ok(())
}

/// A cell of tabular output.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Bool(bool),
    Empty,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(x) => format::num(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(x) if x.is_finite() => json!(x),
            Cell::Num(x) => json!(format::num(*x)),
            Cell::Int(i) => json!(i),
            Cell::Text(s) => json!(s),
            Cell::Bool(b) => json!(b),
            Cell::Empty => Value::Null,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    fn new(header: Vec<String>) -> Self {
        Self {
            header,
            rows: Vec::new(),
        }
    }

    pub fn write(&self, out: &mut dyn Write, format: OutputFormat) -> Result<(), Failure> {
        match format {
            OutputFormat::Csv => {
                let mut w = csv::Writer::from_writer(out);
                w.write_record(&self.header).map_err(csv_failure)?;
                for row in &self.rows {
                    w.write_record(row.iter().map(Cell::csv)).map_err(csv_failure)?;
                }
                w.flush()?;
            }
            OutputFormat::Json => {
                let rows: Vec<Value> = self
                    .rows
                    .iter()
                    .map(|row| {
                        let obj: Map<String, Value> = self
                            .header
                            .iter()
                            .cloned()
                            .zip(row.iter().map(Cell::json))
                            .collect();
                        Value::Object(obj)
                    })
                    .collect();
                serde_json::to_writer_pretty(&mut *out, &rows)
                    .map_err(|e| Failure::Usage(format!("json: {e}")))?;
                writeln!(out)?;
            }
        }
        Ok(())
    }
}

fn csv_failure(e: csv::Error) -> Failure {
    Failure::Usage(format!("csv: {e}"))
}

/// Long-format assignment tables: one line per slot.
pub fn tables(s: &Scenario) -> Result<Table, Failure> {
    if s.dims.is_empty() && s.codes.is_empty() {
        return Err(Failure::Usage("scenario lists neither dims nor codes".into()));
    }
    let mut table = Table::new(
        ["table", "row", "slot", "configuration", "degeneracy", "memory_flag", "n_u"]
            .map(String::from)
            .to_vec(),
    );
    let mut emit = |name: &str, rows: Vec<AssignmentRow>| {
        for (r, row) in rows.iter().enumerate() {
            for (k, slot) in row.slots.iter().enumerate() {
                table.rows.push(vec![
                    Cell::Text(name.into()),
                    Cell::Int(r as i64 + 1),
                    Cell::Int(k as i64 + 1),
                    Cell::Text(slot.config.label()),
                    Cell::Int(slot.degeneracy.into()),
                    Cell::Bool(slot.memory),
                    Cell::Int(row.served_users.into()),
                ]);
            }
        }
    };
    if !s.dims.is_empty() {
        emit("unencoded", enumerate_unencoded(&s.capacity, s.packet_size, &s.dims)?);
    }
    if !s.codes.is_empty() {
        emit("encoded", enumerate_encoded(&s.capacity, &s.codes)?);
    }
    Ok(table)
}

fn default_sweep(s: &Scenario) -> Sweep {
    s.sweep.clone().unwrap_or(Sweep {
        var: SweepVar::P(s.p.len().min(2) - 1),
        lo: 0.5,
        hi: 1.0,
        points: 51,
    })
}

fn pair_label(a: &Configuration, b: &Configuration) -> String {
    format!("{a}~{b}")
}

fn cfg(label: &str) -> Configuration {
    label.parse().expect("built-in label")
}

/// Every split of one packet over the scenario's paths.
fn all_splits(s: &Scenario, packet: Packet) -> Result<Vec<Configuration>, Failure> {
    Ok(splits(packet.size, s.p.len())
        .into_iter()
        .map(|c| Configuration::new(c, packet.coding))
        .collect::<crate::Result<Vec<_>>>()?)
}

fn two_paths(s: &Scenario, what: &str) -> Result<(), Failure> {
    if s.p.len() != 2 {
        return Err(Failure::Usage(format!("{what} needs a two-path scenario")));
    }
    Ok(())
}

/// Three default pairs unless the scenario lists its own.
fn gap_pairs(s: &Scenario) -> Result<Vec<(Configuration, Configuration)>, Failure> {
    if !s.pairs.is_empty() {
        return Ok(s.pairs.clone());
    }
    two_paths(s, "the default gap pairs")?;
    Ok(vec![
        (cfg("3+4/n7"), cfg("2+1/n3")),
        (cfg("2+5/n7"), cfg("3+0/n3")),
        (cfg("3+2/n5"), cfg("2+3/n5")),
    ])
}

fn greedy_pair() -> (Configuration, Configuration) {
    (cfg("5+2/n7"), cfg("5+0/n5"))
}

/// Unencoded mixed splits against the all-on-last-path one, and the greedy
/// encoded pair, unless the scenario lists its own pairs.
fn threshold_pairs(s: &Scenario) -> Result<Vec<(Configuration, Configuration)>, Failure> {
    if !s.pairs.is_empty() {
        return Ok(s.pairs.clone());
    }
    two_paths(s, "the default threshold pairs")?;
    let mut pairs = Vec::new();
    if let Some(&d) = s.dims.first() {
        let n = s.packet_size;
        let single = Configuration::unencoded(&[0, n], d)?;
        for i in (1..n).rev() {
            pairs.push((Configuration::unencoded(&[i, n - i], d)?, single.clone()));
        }
    }
    if s.codes.contains(&7) && s.codes.contains(&5) {
        pairs.push(greedy_pair());
    }
    if pairs.is_empty() {
        return Err(Failure::Usage("no configuration pairs to compare".into()));
    }
    Ok(pairs)
}

fn fidelity_columns(s: &Scenario, sweep: &Sweep, configs: &[Configuration]) -> Result<Table, Failure> {
    let params = s.params();
    let mut table = Table::new(
        std::iter::once(sweep.column())
            .chain(configs.iter().map(Configuration::label))
            .collect(),
    );
    for x in sweep.values() {
        let q = sweep.apply(&params, x)?;
        let mut row = vec![Cell::Num(x)];
        for c in configs {
            row.push(Cell::Num(fidelity(c, &q)?));
        }
        table.rows.push(row);
    }
    Ok(table)
}

pub fn sweep(s: &Scenario, figure: Figure) -> Result<Table, Failure> {
    let sw = default_sweep(s);
    let params = s.params();
    match figure {
        Figure::UnencodedFid => {
            let &d = s
                .dims
                .first()
                .ok_or_else(|| Failure::Usage("unencoded-fid needs dims".into()))?;
            let configs = all_splits(s, Packet::unencoded(d, s.packet_size)?)?;
            fidelity_columns(s, &sw, &configs)
        }
        Figure::EncodedFid => {
            if s.codes.is_empty() {
                return Err(Failure::Usage("encoded-fid needs codes".into()));
            }
            let mut configs = Vec::new();
            for &n in &s.codes {
                configs.extend(all_splits(s, Packet::qrs(n)?)?);
            }
            fidelity_columns(s, &sw, &configs)
        }
        Figure::Gap => {
            let pairs = gap_pairs(s)?;
            let SweepVar::P(k) = sw.var else {
                return Err(Failure::Usage("gap sweeps a transmission probability".into()));
            };
            if k != 1 {
                return Err(Failure::Usage("gap sweeps p2".into()));
            }
            let gaps = fidelity_gap_table(&pairs, &params, sw.lo, sw.hi, sw.points.max(2))?;
            let mut table = Table::new(
                std::iter::once(sw.column())
                    .chain(pairs.iter().map(|(a, b)| pair_label(a, b)))
                    .chain(["min_pair".to_string()])
                    .collect(),
            );
            for (i, &x) in gaps.p2.iter().enumerate() {
                let mut row = vec![Cell::Num(x)];
                row.extend(gaps.gaps.iter().map(|g| Cell::Num(g[i])));
                let seg = gaps
                    .segments
                    .iter()
                    .find(|sg| x >= sg.lo && x <= sg.hi)
                    .unwrap_or(&gaps.segments[0]);
                let (a, b) = &pairs[seg.pair];
                row.push(Cell::Text(pair_label(a, b)));
                table.rows.push(row);
            }
            for b in gaps.boundaries() {
                log::info!("minimal-gap boundary at p2 = {}", format::num(b));
            }
            Ok(table)
        }
        Figure::Greedy => {
            let rows = if !s.codes.is_empty() {
                enumerate_encoded(&s.capacity, &s.codes)?
            } else if !s.dims.is_empty() {
                enumerate_unencoded(&s.capacity, s.packet_size, &s.dims)?
            } else {
                return Err(Failure::Usage("greedy needs codes or dims".into()));
            };
            let (a, b) = greedy_pair();
            let reference =
                s.p.len() == 2 && s.codes.contains(&7) && s.codes.contains(&5);
            let mut header = vec![sw.column()];
            if reference {
                header.extend([a.label(), b.label()]);
            }
            header.extend(["choice".to_string(), "fidelity".to_string()]);
            let mut table = Table::new(header);
            for x in sw.values() {
                let q = sw.apply(&params, x)?;
                let mut row = vec![Cell::Num(x)];
                if reference {
                    row.push(Cell::Num(fidelity(&a, &q)?));
                    row.push(Cell::Num(fidelity(&b, &q)?));
                }
                let d = select(Regime::Greedy, &rows, &q)?;
                row.push(Cell::Text(d.favored_config().label()));
                row.push(Cell::Num(d.favored_fidelity()));
                table.rows.push(row);
            }
            Ok(table)
        }
        Figure::T2Inset => {
            let pairs = threshold_pairs(s)?;
            let (column, values) = match &s.sweep {
                None => ("p2".to_string(), vec![params.p()[1]]),
                Some(sw) => match sw.var {
                    SweepVar::P(_) => (sw.column(), sw.values()),
                    SweepVar::T2 => {
                        return Err(Failure::Usage("t2-inset sweeps a transmission probability".into()))
                    }
                },
            };
            let mut table = Table::new(
                std::iter::once(column)
                    .chain(pairs.iter().map(|(a, b)| format!("T2_s:{}", pair_label(a, b))))
                    .collect(),
            );
            let var = s.sweep.as_ref().map(|sw| sw.var).unwrap_or(SweepVar::P(1));
            for x in values {
                let q = match var {
                    SweepVar::P(k) => params.with_p(k, x)?,
                    SweepVar::T2 => unreachable!(),
                };
                let mut row = vec![Cell::Num(x)];
                for (a, b) in &pairs {
                    row.push(match t2_threshold(a, b, &q)? {
                        Some(t) => Cell::Num(t),
                        None => Cell::Text("none".into()),
                    });
                }
                table.rows.push(row);
            }
            Ok(table)
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduleFile {
    #[serde(default)]
    requests: Vec<ScheduleEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduleEntry {
    slot: u64,
    user: String,
    #[serde(default = "receiver")]
    destination: String,
    payload: String,
    regime: Option<String>,
    min_fidelity: Option<f64>,
}

fn receiver() -> String {
    "R".into()
}

/// Reads a schedule file; requests without a regime use `default_regime`.
pub fn load_schedule(path: &Path, default_regime: Regime) -> Result<Vec<ScheduledRequest>, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    parse_schedule(&text, default_regime)
}

pub fn parse_schedule(text: &str, default_regime: Regime) -> Result<Vec<ScheduledRequest>, Failure> {
    let file: ScheduleFile =
        toml::from_str(text).map_err(|e| Failure::Usage(format!("schedule: {e}")))?;
    file.requests
        .into_iter()
        .map(|e| {
            let regime = match &e.regime {
                Some(r) => r.parse()?,
                None => default_regime,
            };
            Ok(ScheduledRequest {
                slot: e.slot,
                request: UserRequest {
                    user_id: e.user,
                    destination: e.destination,
                    payload: e.payload.parse()?,
                    regime,
                    min_fidelity: e.min_fidelity,
                },
            })
        })
        .collect()
}

fn route(s: &Scenario, schedule: &Path, slots: Option<u64>, out: &mut dyn Write) -> Result<(), Failure> {
    let schedule = load_schedule(schedule, s.regime)?;
    let slots = slots.unwrap_or_else(|| schedule.iter().map(|r| r.slot + 1).max().unwrap_or(1));
    let mut router = s.router()?;
    for event in router.run(&schedule, slots) {
        writeln!(out, "{}", event.to_json())?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub table: Table,
    pub cases: usize,
    pub max_z: f64,
}

/// Oracle against analytic fidelity for every split in the palette, at the
/// scenario coherence time and (if finite) at infinite coherence time.
pub fn validate(
    s: &Scenario,
    trials: u64,
    seed: u64,
    workers: Option<usize>,
    analytic_offset: f64,
) -> Result<ValidationReport, Failure> {
    if trials < MIN_TRIALS {
        return Err(Failure::Usage(format!("validate needs at least {MIN_TRIALS} trials, got {trials}")));
    }
    let mut configs = Vec::new();
    for &d in &s.dims {
        configs.extend(all_splits(s, Packet::unencoded(d, s.packet_size)?)?);
    }
    for &n in &s.codes {
        configs.extend(all_splits(s, Packet::qrs(n)?)?);
    }
    if configs.is_empty() {
        return Err(Failure::Usage("scenario lists neither dims nor codes".into()));
    }
    let mut settings: Vec<FidelityParams> = vec![s.params()];
    if s.t2_s.is_finite() {
        settings.push(s.params().with_t2(f64::INFINITY)?);
    }

    let mut table = Table::new(
        ["configuration", "T2_s", "analytic", "mean", "std_error", "z"]
            .map(String::from)
            .to_vec(),
    );
    let mut max_z: f64 = 0.0;
    let mut case = 0u64;
    for params in &settings {
        for config in &configs {
            let plan = TrialPlan {
                config: config.clone(),
                params: params.clone(),
                trials,
                seed: seed.wrapping_add(case),
            };
            case += 1;
            let analytic = fidelity(config, params)? + analytic_offset;
            let est = match workers {
                Some(w) if config.coding().is_encoded() => oracle::simulate_encoded_with_workers(&plan, w)?,
                Some(w) => oracle::simulate_unencoded_with_workers(&plan, w)?,
                None => oracle::simulate(&plan)?,
            };
            let z = est.z_score(analytic);
            max_z = max_z.max(z);
            table.rows.push(vec![
                Cell::Text(config.label()),
                Cell::Num(params.t2_s()),
                Cell::Num(analytic),
                Cell::Num(est.mean),
                Cell::Num(est.std_error),
                Cell::Num(z),
            ]);
        }
    }
    Ok(ValidationReport {
        table,
        cases: case as usize,
        max_z,
    })
}
