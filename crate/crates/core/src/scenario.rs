//! Named scenarios, loss sweeps and the CSV output format.
//!
//! A scenario file is TOML with one section per nested type:
//!
//! ```toml
//! name = "my-qd"
//! mode = "analytic"          # analytic | mc | both
//! seed = 42
//!
//! [source]
//! kind = "qd"
//! rep_rate_hz = 76.4e6
//! internal_loss_db = 15.0    # or non_empty = 0.0316
//! multiphoton = 4.5e-6
//!
//! [channel]
//! background_rate_hz = 500.0
//! pass_duration_s = 100.0
//!
//! [receiver]
//! detector_efficiency = 0.34
//!
//! [params]
//! ec_efficiency = 1.16
//!
//! [analysis]
//! eps_total = 1e-9
//!
//! [sweep]
//! start = 20.0
//! stop = 40.0
//! step = 0.5
//!
//! [simulation]
//! sampling = "skip-quiet"
//! ```
//!
//! Every section except `source` and `sweep` may be omitted.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{analyze, AnalysisOptions, KeyRateResult};
use crate::error::{Error, Result};
use crate::finite::FiniteKeyParams;
use crate::keyrate::ZeroKeyCause;
use crate::link::{ChannelSpec, LinkBudget, ReceiverSpec};
use crate::montecarlo::{empirical_key_pipeline, DoubleClickPolicy, Execution, RunOptions, SamplingMode, SimConfig};
use crate::source::{loss_db_to_linear, multiphoton_bound, QdSourceSpec, SourceModel, WcpSourceSpec};

pub const CSV_COLUMNS: [&str; 13] = [
    "loss_db",
    "key_bits",
    "n_sent",
    "n_detected",
    "m_sifted",
    "qber",
    "qber_adjusted",
    "correction_A_or_Q1L",
    "E1U_or_blank",
    "delta",
    "eps_bar",
    "eps_pa",
    "zero_key_cause",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Analytic,
    #[serde(alias = "monte-carlo")]
    Mc,
    Both,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Analytic => "analytic",
            Mode::Mc => "mc",
            Mode::Both => "both",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(Mode::Analytic),
            "mc" | "monte-carlo" => Ok(Mode::Mc),
            "both" => Ok(Mode::Both),
            other => Err(Error::Config(format!("unknown mode '{other}' (analytic | mc | both)"))),
        }
    }
}

/// How a sweep point is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Analytic,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Sweep {
    pub fn validate(&self) -> Result<()> {
        if !(self.start.is_finite() && self.stop.is_finite()) {
            return Err(Error::Config("sweep bounds must be finite".into()));
        }
        if !(self.start <= self.stop) {
            return Err(Error::Config(format!(
                "sweep start {} dB exceeds stop {} dB",
                self.start, self.stop
            )));
        }
        if !(self.step > 0.0) {
            return Err(Error::Config(format!("sweep step {} dB must be > 0", self.step)));
        }
        if self.start < 0.0 {
            return Err(Error::Config(format!("sweep start {} dB must be >= 0", self.start)));
        }
        Ok(())
    }

    /// Loss values from `start` to `stop` inclusive.
    pub fn points(&self) -> Vec<f64> {
        let count = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..count).map(|i| self.start + i as f64 * self.step).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSpec {
    /// Slots per pass; defaults to `rep_rate × pass_duration`.
    pub num_slots: Option<u64>,
    pub double_click: DoubleClickPolicy,
    pub sampling: SamplingMode,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        Self {
            num_slots: None,
            double_click: DoubleClickPolicy::RandomAssign,
            sampling: SamplingMode::SkipQuiet,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub source: SourceModel,
    pub link: LinkBudget,
    pub params: FiniteKeyParams,
    pub analysis: AnalysisOptions,
    pub sweep: Sweep,
    pub mode: Mode,
    pub seed: u64,
    pub simulation: SimulationSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
enum SourceKind {
    Qd,
    Wcp,
}

/// Flat so that parse errors keep their line numbers.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSource {
    kind: SourceKind,
    rep_rate_hz: f64,
    internal_loss_db: Option<f64>,
    non_empty: Option<f64>,
    multiphoton: Option<f64>,
    mu: Option<f64>,
    nu: Option<f64>,
    signal_fraction: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: String,
    #[serde(default)]
    mode: Mode,
    #[serde(default = "default_seed")]
    seed: u64,
    source: RawSource,
    #[serde(default)]
    channel: ChannelSpec,
    #[serde(default)]
    receiver: ReceiverSpec,
    #[serde(default)]
    params: FiniteKeyParams,
    #[serde(default)]
    analysis: AnalysisOptions,
    sweep: Sweep,
    #[serde(default)]
    simulation: SimulationSpec,
}

fn default_seed() -> u64 {
    42
}

fn config_error(context: &str, err: Error) -> Error {
    match err {
        Error::Config(_) => err,
        other => Error::Config(format!("{context}: {other}")),
    }
}

impl RawSource {
    fn build(self) -> Result<SourceModel> {
        let require = |value: Option<f64>, field: &str| {
            value.ok_or_else(|| Error::Config(format!("source: {:?} source needs '{field}'", self.kind)))
        };
        let reject = |fields: &[(&str, Option<f64>)]| {
            match fields.iter().find(|(_, v)| v.is_some()) {
                Some((field, _)) => Err(Error::Config(format!(
                    "source: '{field}' does not apply to a {:?} source",
                    self.kind
                ))),
                None => Ok(()),
            }
        };
        Ok(match self.kind {
            SourceKind::Qd => {
                reject(&[("mu", self.mu), ("nu", self.nu), ("signal_fraction", self.signal_fraction)])?;
                let multiphoton = require(self.multiphoton, "multiphoton")?;
                SourceModel::Qd(match (self.internal_loss_db, self.non_empty) {
                    (Some(loss), None) => QdSourceSpec::from_internal_loss(self.rep_rate_hz, loss, multiphoton)?,
                    (None, Some(r)) => QdSourceSpec::from_brightness(self.rep_rate_hz, r, multiphoton)?,
                    (Some(loss), Some(r)) => {
                        let spec = QdSourceSpec {
                            rep_rate_hz: self.rep_rate_hz,
                            internal_loss_db: loss,
                            non_empty: r,
                            multiphoton,
                        };
                        spec.validate()?;
                        spec
                    }
                    (None, None) => {
                        return Err(Error::Config(
                            "source: qd needs internal_loss_db or non_empty".into(),
                        ))
                    }
                })
            }
            SourceKind::Wcp => {
                reject(&[
                    ("internal_loss_db", self.internal_loss_db),
                    ("non_empty", self.non_empty),
                    ("multiphoton", self.multiphoton),
                ])?;
                SourceModel::Wcp(WcpSourceSpec::new(
                    self.rep_rate_hz,
                    require(self.mu, "mu")?,
                    require(self.nu, "nu")?,
                    require(self.signal_fraction, "signal_fraction")?,
                )?)
            }
        })
    }
}

impl Scenario {
    /// Checks every nested invariant; errors are reported as config errors.
    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::Config("scenario name is empty".into()));
        }
        self.source.validate().map_err(|e| config_error("source", e))?;
        self.sweep.validate()?;
        self.link
            .with_loss(self.sweep.start)
            .validate()
            .map_err(|e| config_error("channel/receiver", e))?;
        self.params.validate().map_err(|e| config_error("params", e))?;
        let budget = self.analysis.budget(&self.params);
        if !(budget.eps_total > budget.eps_ec) {
            return Err(Error::Config(format!(
                "analysis: eps_total {:e} must exceed eps_ec {:e}",
                budget.eps_total, budget.eps_ec
            )));
        }
        if self.analysis.optimize {
            let grid = &self.analysis.grid;
            if grid.points < 2 || !(grid.zoom > 1.0) || !(grid.lower > 0.0 && grid.lower < budget.free()) {
                return Err(Error::Config(format!("analysis.grid: invalid grid {grid:?}")));
            }
        }
        if self.mode != Mode::Analytic && self.link.receiver.num_detectors != 4 {
            return Err(Error::Config(
                "receiver: Monte Carlo mode needs num_detectors = 4".into(),
            ));
        }
        if self.simulation.num_slots == Some(0) {
            return Err(Error::Config("simulation: num_slots must be >= 1".into()));
        }
        Ok(())
    }

    /// Slots simulated per pass in Monte Carlo mode.
    pub fn slots_per_pass(&self) -> u64 {
        self.simulation
            .num_slots
            .unwrap_or_else(|| (self.source.rep_rate_hz() * self.link.channel.pass_duration_s).round() as u64)
    }
}

/// Parses and validates scenario text. Parse errors carry line and column.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    if text.trim().is_empty() {
        return Err(Error::Config("scenario file is empty".into()));
    }
    let raw: RawScenario = toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
    let scenario = Scenario {
        name: raw.name,
        source: raw.source.build().map_err(|e| config_error("source", e))?,
        link: LinkBudget {
            channel: raw.channel,
            receiver: raw.receiver,
        },
        params: raw.params,
        analysis: raw.analysis,
        sweep: raw.sweep,
        mode: raw.mode,
        seed: raw.seed,
        simulation: raw.simulation,
    };
    scenario.validate()?;
    Ok(scenario)
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_scenario(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Multi-photon bound quoted for the 15 dB source.
pub const QD15_MULTIPHOTON: f64 = 4.5e-6;

const RATE_76: f64 = 76.4e6;
const RATE_300: f64 = 300e6;

fn qd_builtin(name: &str, rep_rate_hz: f64, internal_loss_db: f64, multiphoton: f64) -> Scenario {
    let source = QdSourceSpec::from_internal_loss(rep_rate_hz, internal_loss_db, multiphoton)
        .expect("built-in source is valid");
    builtin(name, SourceModel::Qd(source))
}

fn wcp_builtin(name: &str, rep_rate_hz: f64) -> Scenario {
    let source = WcpSourceSpec::new(rep_rate_hz, 0.5, 0.1, 0.9).expect("built-in source is valid");
    builtin(name, SourceModel::Wcp(source))
}

fn builtin(name: &str, source: SourceModel) -> Scenario {
    Scenario {
        name: name.to_string(),
        source,
        link: LinkBudget::default(),
        params: FiniteKeyParams::default(),
        analysis: AnalysisOptions::default(),
        sweep: Sweep {
            start: 20.0,
            stop: 40.0,
            step: 0.5,
        },
        mode: Mode::Analytic,
        seed: default_seed(),
        simulation: SimulationSpec::default(),
    }
}

/// Names of the built-in scenarios, in listing order.
pub fn builtin_names() -> Vec<&'static str> {
    vec!["wcp76", "qd76-15db", "qd76-4db", "wcp300", "qd300-4db", "qd76-15db-hbt"]
}

/// Built-in scenario by name. The improved 4 dB source keeps the same
/// multi-photon fraction `P_m/R` as the 15 dB source.
pub fn builtin_scenario(name: &str) -> Option<Scenario> {
    let improved = QD15_MULTIPHOTON * loss_db_to_linear(4.0) / loss_db_to_linear(15.0);
    Some(match name {
        "wcp76" => wcp_builtin(name, RATE_76),
        "qd76-15db" => qd_builtin(name, RATE_76, 15.0, QD15_MULTIPHOTON),
        "qd76-4db" => qd_builtin(name, RATE_76, 4.0, improved),
        "wcp300" => wcp_builtin(name, RATE_300),
        "qd300-4db" => qd_builtin(name, RATE_300, 4.0, improved),
        // P_m recomputed from the HBT summary (κ = 1.1e-5, η = 0.06, R = 0.033).
        "qd76-15db-hbt" => {
            let pm = multiphoton_bound(1.1e-5, 0.06, 0.033).expect("positive denominator");
            qd_builtin(name, RATE_76, 15.0, pm)
        }
        _ => return None,
    })
}

/// Resolves a built-in name or a path to a scenario file.
pub fn resolve_scenario(name_or_path: &str) -> Result<Scenario> {
    match builtin_scenario(name_or_path) {
        Some(s) => Ok(s),
        None => {
            let path = Path::new(name_or_path);
            if !path.exists() {
                return Err(Error::Config(format!(
                    "'{name_or_path}' is neither a built-in scenario ({}) nor a file",
                    builtin_names().join(", ")
                )));
            }
            load_scenario(path)
        }
    }
}

/// Evaluates every sweep point; rows are ordered by loss. A failing point
/// yields a row with a `failed` cause instead of aborting the sweep.
pub fn run_sweep(scenario: &Scenario, method: Method) -> Vec<KeyRateResult> {
    let points = scenario.sweep.points();
    let slots = scenario.slots_per_pass();
    points
        .par_iter()
        .enumerate()
        .map(|(i, &loss)| {
            let link = scenario.link.with_loss(loss);
            let result = match method {
                Method::Analytic => analyze(&scenario.source, &link, &scenario.params, &scenario.analysis),
                Method::MonteCarlo => {
                    let cfg = SimConfig {
                        seed: scenario.seed.wrapping_add(i as u64),
                        num_slots: slots,
                        source: scenario.source,
                        link,
                        double_click: scenario.simulation.double_click,
                        run: RunOptions {
                            sampling: scenario.simulation.sampling,
                            execution: Execution::Parallel,
                            ..RunOptions::default()
                        },
                    };
                    empirical_key_pipeline(&cfg, &scenario.params, &scenario.analysis)
                }
            };
            result.unwrap_or_else(|e| KeyRateResult::failed(loss, &scenario.params, &e))
        })
        .collect()
}

/// Shortest round-trip representation; scientific notation outside
/// `[1e-4, 1e15)`.
pub fn format_number(x: f64) -> String {
    let magnitude = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-4..1e15).contains(&magnitude) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn optional(x: Option<f64>) -> String {
    x.map(format_number).unwrap_or_default()
}

fn io_error(path: &Path, err: impl fmt::Display) -> Error {
    Error::Io {
        path: path.display().to_string(),
        message: err.to_string(),
    }
}

pub fn write_csv<W: std::io::Write>(rows: &[KeyRateResult], out: W) -> std::result::Result<(), csv::Error> {
    let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    writer.write_record(CSV_COLUMNS)?;
    for r in rows {
        writer.write_record([
            format_number(r.loss_db),
            format_number(r.key_bits),
            format_number(r.n_sent),
            format_number(r.n_detected),
            format_number(r.m_sifted),
            format_number(r.qber),
            optional(r.qber_adjusted),
            optional(r.correction),
            optional(r.e1_upper),
            optional(r.delta),
            format_number(r.eps_bar),
            format_number(r.eps_pa),
            r.cause.as_ref().map(ToString::to_string).unwrap_or_default(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Writes the table to `path`, overwriting any existing file.
pub fn emit_csv(rows: &[KeyRateResult], path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::InsufficientData("refusing to write an empty table".into()));
    }
    let file = fs::File::create(path).map_err(|e| io_error(path, e))?;
    write_csv(rows, std::io::BufWriter::new(file)).map_err(|e| io_error(path, e))
}

fn parse_field(record: &csv::StringRecord, idx: usize) -> Result<Option<f64>> {
    let raw = record.get(idx).unwrap_or("");
    if raw.is_empty() {
        return Ok(None);
    }
    raw.parse().map(Some).map_err(|_| {
        Error::Config(format!(
            "line {}: column {} has non-numeric value '{raw}'",
            record.position().map_or(0, |p| p.line()),
            CSV_COLUMNS[idx]
        ))
    })
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<KeyRateResult>> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers().map_err(|e| Error::Config(e.to_string()))?;
    if headers.iter().ne(CSV_COLUMNS) {
        return Err(Error::Config(format!("unexpected CSV header: {headers:?}")));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Config(e.to_string()))?;
        let required = |idx| {
            parse_field(&record, idx)?
                .ok_or_else(|| Error::Config(format!("column {} is empty", CSV_COLUMNS[idx])))
        };
        let cause = match record.get(12).unwrap_or("") {
            "" => None,
            s => Some(ZeroKeyCause::from_str(s).map_err(Error::Config)?),
        };
        rows.push(KeyRateResult {
            loss_db: required(0)?,
            key_bits: required(1)?,
            n_sent: required(2)?,
            n_detected: required(3)?,
            m_sifted: required(4)?,
            qber: required(5)?,
            qber_adjusted: parse_field(&record, 6)?,
            correction: parse_field(&record, 7)?,
            e1_upper: parse_field(&record, 8)?,
            delta: parse_field(&record, 9)?,
            eps_bar: required(10)?,
            eps_pa: required(11)?,
            cause,
        });
    }
    Ok(rows)
}

pub fn read_csv_file(path: &Path) -> Result<Vec<KeyRateResult>> {
    let file = fs::File::open(path).map_err(|e| io_error(path, e))?;
    read_csv(file)
}

/// Highest swept loss with a positive key, if any.
pub fn last_positive_loss(rows: &[KeyRateResult]) -> Option<f64> {
    rows.iter().filter(|r| r.key_bits > 0.0).map(|r| r.loss_db).reduce(f64::max)
}
