//! Command-line front end: `simulate`, `predict`, `plan` and `verify`.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 infeasible
//! under the memory cap, 4 verification mismatch or synchronization fault,
//! 1 anything else.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::config::{CostParams, Dataset, ExperimentConfig, DEFAULT_SEED};
use crate::costmodel::{plan, predict, CostBreakdown, Plan, PlanQuery};
use crate::error::Error;
use crate::simnet::{Channel, Fabric};
use crate::stats::relative_error;
use crate::strategies::{
    run_ddrs_with, run_strategy, stream_matched_oracle, DdrsOptions, Measured, PredictionMatch, StrategyKind,
    StrategyReport,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_MISMATCH: i32 = 4;

/// Relative tolerance between a strategy's estimate and its stream-matched
/// sequential oracle.
pub const ORACLE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Parser)]
#[command(
    name = "parboot",
    version,
    about = "Simulate and cost parallel bootstrap variance estimation strategies",
    after_help = "Without --data, the dataset is D standard-normal values generated by Box-Muller \
                  from a SplitMix64 stream derived from --seed, so runs are reproducible without fixtures. \
                  --data takes raw little-endian 32-bit floats with no header."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one strategy on the virtual fabric and report measured vs predicted costs.
    Simulate {
        #[arg(long, value_parser = parse_kind)]
        strategy: StrategyKind,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Evaluate the closed-form costs of one strategy.
    Predict {
        #[arg(long, value_parser = parse_kind)]
        strategy: StrategyKind,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Pick the cheapest strategy that fits a per-process memory cap.
    Plan {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run all four strategies and check them against the cost model and their oracles.
    Verify {
        #[command(flatten)]
        common: CommonArgs,
        /// Test hook: advance this rank's DDRS stream by one step.
        #[arg(long, hide = true)]
        desync_rank: Option<usize>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Dataset size D (points).
    #[arg(long = "D", default_value_t = 100)]
    pub dataset_size: usize,
    /// Number of bootstrap resamples N.
    #[arg(long = "N", default_value_t = 40)]
    pub num_resamples: usize,
    /// Number of processes P.
    #[arg(long = "P", default_value_t = 4)]
    pub num_processes: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Bandwidth B in bytes per second.
    #[arg(long = "B", alias = "bandwidth", default_value_t = 1e8)]
    pub bandwidth: f64,
    /// Compute speed S in sample points per second.
    #[arg(long = "S", alias = "speed", default_value_t = 1e8)]
    pub compute_speed: f64,
    /// Per-process memory cap in 4-byte floats.
    #[arg(long = "memory-cap")]
    pub memory_cap: Option<u64>,
    /// Input dataset: raw little-endian f32, exactly D values.
    #[arg(long = "data")]
    pub data_path: Option<PathBuf>,
    #[arg(long, value_enum, env = "PARBOOT_FORMAT", default_value_t = OutputFormat::Json)]
    pub format: OutputFormat,
    /// Omit the timestamp so identical flags give byte-identical output.
    #[arg(long)]
    pub deterministic: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Csv,
    Text,
}

fn parse_kind(s: &str) -> Result<StrategyKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Echo of the resolved run parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub subcommand: String,
    pub strategy: Option<StrategyKind>,
    #[serde(rename = "D")]
    pub dataset_size: usize,
    #[serde(rename = "N")]
    pub num_resamples: usize,
    #[serde(rename = "P")]
    pub num_processes: usize,
    pub seed: u64,
    #[serde(rename = "B")]
    pub bandwidth: f64,
    #[serde(rename = "S")]
    pub compute_speed: f64,
    pub memory_cap: Option<u64>,
    pub data_path: Option<String>,
    pub output_format: OutputFormat,
}

impl RunSpec {
    fn new(subcommand: &str, strategy: Option<StrategyKind>, c: &CommonArgs) -> Self {
        RunSpec {
            subcommand: subcommand.to_string(),
            strategy,
            dataset_size: c.dataset_size,
            num_resamples: c.num_resamples,
            num_processes: c.num_processes,
            seed: c.seed,
            bandwidth: c.bandwidth,
            compute_speed: c.compute_speed,
            memory_cap: c.memory_cap,
            data_path: c.data_path.as_ref().map(|p| p.display().to_string()),
            output_format: c.format,
        }
    }

    fn config(&self) -> crate::Result<ExperimentConfig> {
        ExperimentConfig::new(self.dataset_size, self.num_resamples, self.num_processes, self.seed)
    }

    fn params(&self) -> crate::Result<CostParams> {
        CostParams::new(self.bandwidth, self.compute_speed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub estimate: f64,
    pub rel_err: f64,
}

/// One strategy's row in a simulate or verify report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyRow {
    pub strategy: StrategyKind,
    /// `ok`, `infeasible`, `inapplicable`, `sync_fault` or `error`.
    pub status: String,
    pub estimate: Option<f64>,
    pub measured: Option<Measured>,
    pub predicted: Option<CostBreakdown>,
    #[serde(rename = "match")]
    pub prediction_match: Option<PredictionMatch>,
    pub oracle: Option<OracleCheck>,
    pub detail: Option<String>,
}

impl StrategyRow {
    fn from_report(report: &StrategyReport, data: &Dataset) -> crate::Result<Self> {
        let oracle = stream_matched_oracle(report.kind, data, &report.config)?.value();
        Ok(StrategyRow {
            strategy: report.kind,
            status: "ok".into(),
            estimate: Some(report.estimate.value()),
            measured: Some(report.measured.clone()),
            predicted: Some(report.predicted.clone()),
            prediction_match: Some(report.prediction_match()),
            oracle: Some(OracleCheck { estimate: oracle, rel_err: relative_error(report.estimate.value(), oracle) }),
            detail: None,
        })
    }

    fn failed(strategy: StrategyKind, status: &str, err: &Error) -> Self {
        StrategyRow {
            strategy,
            status: status.into(),
            estimate: None,
            measured: None,
            predicted: None,
            prediction_match: None,
            oracle: None,
            detail: Some(err.to_string()),
        }
    }

    /// True when the row ran and agreed with both the cost model and its oracle.
    pub fn passes(&self) -> bool {
        self.status == "ok"
            && self.prediction_match.is_some_and(|m| m.all())
            && self.oracle.as_ref().is_some_and(|o| o.rel_err <= ORACLE_TOLERANCE)
    }

    pub fn measured_bytes(&self) -> Option<u64> {
        self.measured.as_ref().map(|m| m.total_bytes)
    }

    pub fn predicted_bytes(&self) -> Option<u64> {
        self.predicted.as_ref().map(CostBreakdown::wire_bytes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateReport {
    pub spec: RunSpec,
    pub estimate: f64,
    pub measured: Measured,
    pub predicted: CostBreakdown,
    #[serde(rename = "match")]
    pub prediction_match: PredictionMatch,
    pub oracle: OracleCheck,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub generated_at: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub spec: RunSpec,
    pub rows: Vec<StrategyRow>,
    pub all_match: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub generated_at: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictReport {
    pub spec: RunSpec,
    pub predicted: CostBreakdown,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub generated_at: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub spec: RunSpec,
    pub plan: Plan,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub generated_at: Option<u64>,
}

/// Rendered command result.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub stdout: String,
    pub stderr: String,
    pub code: i32,
}

fn timestamp(deterministic: bool) -> Option<u64> {
    if deterministic {
        None
    } else {
        SystemTime::now().duration_since(UNIX_EPOCH).ok().map(|d| d.as_secs())
    }
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Domain(_) | Error::Io(_) => EXIT_USAGE,
        Error::Infeasible { .. } => EXIT_INFEASIBLE,
        Error::SynchronizationFault { .. } => EXIT_MISMATCH,
        _ => EXIT_FAILURE,
    }
}

fn error_kind(err: &Error) -> &'static str {
    match err {
        Error::Config(_) => "config",
        Error::Domain(_) => "domain",
        Error::Aggregation(_) => "aggregation",
        Error::Deadlock { .. } => "deadlock",
        Error::Protocol(_) => "protocol",
        Error::Accounting { .. } => "accounting",
        Error::Infeasible { .. } => "infeasible",
        Error::SynchronizationFault { .. } => "synchronization_fault",
        Error::Io(_) => "io",
    }
}

fn error_outcome(err: &Error, format: OutputFormat) -> Outcome {
    let stdout = match format {
        OutputFormat::Json => {
            let body = serde_json::json!({ "error": { "kind": error_kind(err), "message": err.to_string() } });
            format!("{}\n", serde_json::to_string_pretty(&body).expect("error body serializes"))
        }
        _ => String::new(),
    };
    Outcome { stdout, stderr: format!("error: {err}\n"), code: exit_code(err) }
}

fn load_data(spec: &RunSpec) -> crate::Result<Dataset> {
    let data = match &spec.data_path {
        Some(path) => Dataset::load_f32_le(path.as_ref())?,
        None => Dataset::synthetic(spec.dataset_size, spec.seed)?,
    };
    if data.len() != spec.dataset_size {
        return Err(Error::Config(format!(
            "data file holds {} values but D={}",
            data.len(),
            spec.dataset_size
        )));
    }
    Ok(data)
}

fn to_json<T: Serialize>(value: &T) -> String {
    format!("{}\n", serde_json::to_string_pretty(value).expect("report serializes"))
}

/// Executes a parsed command line.
pub fn execute(cli: &Cli) -> Outcome {
    let (spec, format) = match &cli.command {
        Command::Simulate { strategy, common } => (RunSpec::new("simulate", Some(*strategy), common), common),
        Command::Predict { strategy, common } => (RunSpec::new("predict", Some(*strategy), common), common),
        Command::Plan { common } => (RunSpec::new("plan", None, common), common),
        Command::Verify { common, .. } => (RunSpec::new("verify", None, common), common),
    };
    let deterministic = format.deterministic;
    let format = format.format;
    let result = match &cli.command {
        Command::Simulate { .. } => cmd_simulate(&spec, deterministic),
        Command::Predict { .. } => cmd_predict(&spec, deterministic),
        Command::Plan { .. } => cmd_plan(&spec, deterministic),
        Command::Verify { desync_rank, .. } => cmd_verify(&spec, deterministic, *desync_rank),
    };
    match result {
        Ok(rendered) => rendered.render(format),
        Err(err) => error_outcome(&err, format),
    }
}

/// Typed command result, rendered on demand.
#[derive(Debug, Clone, PartialEq)]
pub enum Rendered {
    Simulate(SimulateReport),
    Predict(PredictReport),
    Plan(PlanReport),
    Verify(VerifyReport),
}

impl Rendered {
    fn code(&self) -> i32 {
        match self {
            Rendered::Simulate(r) if !(r.prediction_match.all() && r.oracle.rel_err <= ORACLE_TOLERANCE) => {
                EXIT_MISMATCH
            }
            Rendered::Plan(r) if r.plan.choice.is_none() => EXIT_INFEASIBLE,
            Rendered::Verify(r) if !r.all_match => EXIT_MISMATCH,
            _ => EXIT_OK,
        }
    }

    pub fn render(&self, format: OutputFormat) -> Outcome {
        let stdout = match format {
            OutputFormat::Json => match self {
                Rendered::Simulate(r) => to_json(r),
                Rendered::Predict(r) => to_json(r),
                Rendered::Plan(r) => to_json(r),
                Rendered::Verify(r) => to_json(r),
            },
            OutputFormat::Csv => self.csv(),
            OutputFormat::Text => self.text(),
        };
        Outcome { stdout, stderr: String::new(), code: self.code() }
    }

    fn rows(&self) -> Vec<StrategyRow> {
        match self {
            Rendered::Simulate(r) => vec![StrategyRow {
                strategy: r.predicted.kind,
                status: "ok".into(),
                estimate: Some(r.estimate),
                measured: Some(r.measured.clone()),
                predicted: Some(r.predicted.clone()),
                prediction_match: Some(r.prediction_match),
                oracle: Some(r.oracle.clone()),
                detail: None,
            }],
            Rendered::Verify(r) => r.rows.clone(),
            Rendered::Predict(r) => vec![predicted_row(&r.predicted)],
            Rendered::Plan(r) => r
                .plan
                .candidates
                .iter()
                .map(|c| match &c.breakdown {
                    Some(b) => StrategyRow {
                        status: if c.feasible { "feasible".into() } else { "infeasible".into() },
                        ..predicted_row(b)
                    },
                    None => StrategyRow::failed(c.kind, "inapplicable", &Error::Config(c.note.clone())),
                })
                .collect(),
        }
    }

    fn csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header = [
            "strategy",
            "status",
            "measured_bytes",
            "predicted_bytes",
            "measured_data_out",
            "predicted_data_out",
            "measured_results_back",
            "predicted_results_back",
            "measured_verification",
            "predicted_verification",
            "match",
            "estimate",
            "oracle_estimate",
            "rel_err",
        ];
        w.write_record(header).expect("csv to memory");
        let opt = |v: Option<String>| v.unwrap_or_default();
        for row in self.rows() {
            let chan = |c: Channel| row.measured.as_ref().map(|m| m.channel(c).to_string());
            let pred = |f: fn(&CostBreakdown) -> u64| row.predicted.as_ref().map(|p| f(p).to_string());
            w.write_record([
                row.strategy.label().to_string(),
                row.status.clone(),
                opt(row.measured_bytes().map(|b| b.to_string())),
                opt(row.predicted_bytes().map(|b| b.to_string())),
                opt(chan(Channel::DataOut)),
                opt(pred(|p| p.bytes_data_out)),
                opt(chan(Channel::ResultsBack)),
                opt(pred(|p| p.bytes_results_back)),
                opt(chan(Channel::Verification)),
                opt(pred(|p| p.bytes_verification)),
                opt(row.prediction_match.map(|m| m.all().to_string())),
                opt(row.estimate.map(|e| e.to_string())),
                opt(row.oracle.as_ref().map(|o| o.estimate.to_string())),
                opt(row.oracle.as_ref().map(|o| o.rel_err.to_string())),
            ])
            .expect("csv to memory");
        }
        String::from_utf8(w.into_inner().expect("csv flush")).expect("csv is utf-8")
    }

    fn text(&self) -> String {
        let mut out = String::new();
        if let Rendered::Plan(r) = self {
            let choice = r.plan.choice.map(StrategyKind::label).unwrap_or("none");
            let _ = writeln!(out, "choice: {choice}");
            let _ = writeln!(out, "{}", r.plan.rationale);
        }
        let _ = writeln!(
            out,
            "{:<6} {:<12} {:>14} {:>14} {:>6} {:>24} {:>24} {:>10}",
            "kind", "status", "measured_B", "predicted_B", "match", "estimate", "oracle", "rel_err"
        );
        for row in self.rows() {
            let num = |v: Option<u64>| v.map(|b| b.to_string()).unwrap_or_else(|| "-".into());
            let real = |v: Option<f64>| v.map(|x| format!("{x:.17e}")).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                out,
                "{:<6} {:<12} {:>14} {:>14} {:>6} {:>24} {:>24} {:>10}",
                row.strategy.label(),
                row.status,
                num(row.measured_bytes()),
                num(row.predicted_bytes()),
                row.prediction_match.map(|m| if m.all() { "yes" } else { "NO" }).unwrap_or("-"),
                real(row.estimate),
                real(row.oracle.as_ref().map(|o| o.estimate)),
                row.oracle.as_ref().map(|o| format!("{:.2e}", o.rel_err)).unwrap_or_else(|| "-".into()),
            );
            if let Some(detail) = &row.detail {
                let _ = writeln!(out, "       {detail}");
            }
        }
        out
    }
}

fn predicted_row(b: &CostBreakdown) -> StrategyRow {
    StrategyRow {
        strategy: b.kind,
        status: "predicted".into(),
        estimate: None,
        measured: None,
        predicted: Some(b.clone()),
        prediction_match: None,
        oracle: None,
        detail: None,
    }
}

pub fn cmd_simulate(spec: &RunSpec, deterministic: bool) -> crate::Result<Rendered> {
    let kind = spec.strategy.ok_or_else(|| Error::Config("simulate requires --strategy".into()))?;
    let config = spec.config()?;
    let params = spec.params()?;
    let data = load_data(spec)?;
    let report = run_strategy(kind, &data, &config, &params, spec.memory_cap)?;
    let row = StrategyRow::from_report(&report, &data)?;
    Ok(Rendered::Simulate(SimulateReport {
        spec: spec.clone(),
        estimate: report.estimate.value(),
        measured: report.measured,
        predicted: report.predicted,
        prediction_match: row.prediction_match.expect("ran"),
        oracle: row.oracle.expect("ran"),
        generated_at: timestamp(deterministic),
    }))
}

pub fn cmd_predict(spec: &RunSpec, deterministic: bool) -> crate::Result<Rendered> {
    let kind = spec.strategy.ok_or_else(|| Error::Config("predict requires --strategy".into()))?;
    let predicted = predict(kind, &spec.config()?, &spec.params()?)?;
    Ok(Rendered::Predict(PredictReport { spec: spec.clone(), predicted, generated_at: timestamp(deterministic) }))
}

pub fn cmd_plan(spec: &RunSpec, deterministic: bool) -> crate::Result<Rendered> {
    let cap = spec.memory_cap.ok_or_else(|| Error::Config("plan requires --memory-cap".into()))?;
    let query = PlanQuery { config: spec.config()?, params: spec.params()?, memory_cap_floats: cap };
    Ok(Rendered::Plan(PlanReport { spec: spec.clone(), plan: plan(&query)?, generated_at: timestamp(deterministic) }))
}

/// Runs the four strategies on independent fabrics, one thread each, and
/// merges rows in strategy order.
pub fn cmd_verify(spec: &RunSpec, deterministic: bool, desync_rank: Option<usize>) -> crate::Result<Rendered> {
    let config = spec.config()?;
    let params = spec.params()?;
    let data = load_data(spec)?;
    let cap = spec.memory_cap;

    let results: Vec<crate::Result<StrategyReport>> = std::thread::scope(|scope| {
        let handles: Vec<_> = StrategyKind::ALL
            .iter()
            .map(|&kind| {
                let data = &data;
                scope.spawn(move || match (kind, desync_rank) {
                    (StrategyKind::Ddrs, Some(rank)) => {
                        config.validate_sharded()?;
                        let fabric = Fabric::new(config.num_processes)?.with_memory_cap(cap);
                        let shards = data.shards(config.num_processes)?;
                        let options = DdrsOptions { desync_rank: Some(rank) };
                        run_ddrs_with(&shards, &config, &params, &fabric, options).map(|r| r.report)
                    }
                    _ => run_strategy(kind, data, &config, &params, cap),
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("strategy thread panicked")).collect()
    });

    let mut rows = Vec::with_capacity(results.len());
    let mut all_match = true;
    for (kind, result) in StrategyKind::ALL.iter().zip(results) {
        let row = match result {
            Ok(report) => StrategyRow::from_report(&report, &data)?,
            Err(err @ Error::Infeasible { .. }) if cap.is_some() => StrategyRow::failed(*kind, "infeasible", &err),
            Err(err @ Error::Config(_)) if *kind == StrategyKind::Ddrs => {
                StrategyRow::failed(*kind, "inapplicable", &err)
            }
            Err(err @ Error::SynchronizationFault { .. }) => {
                all_match = false;
                StrategyRow::failed(*kind, "sync_fault", &err)
            }
            Err(err) => {
                all_match = false;
                StrategyRow::failed(*kind, "error", &err)
            }
        };
        if row.status == "ok" && !row.passes() {
            all_match = false;
        }
        rows.push(row);
    }

    Ok(Rendered::Verify(VerifyReport { spec: spec.clone(), rows, all_match, generated_at: timestamp(deterministic) }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> Outcome {
        let mut argv = vec!["parboot"];
        argv.extend_from_slice(args);
        execute(&Cli::try_parse_from(argv).expect("valid arguments"))
    }

    #[test]
    fn simulate_dbsa_listing_constants() {
        let out = run(&["simulate", "--strategy", "dbsa", "--D", "10000", "--N", "1000", "--P", "4", "--deterministic"]);
        assert_eq!(out.code, EXIT_OK, "{}", out.stderr);
        let report: SimulateReport = serde_json::from_str(&out.stdout).unwrap();
        assert_eq!(report.measured.total_bytes, 120_024);
        assert!(report.prediction_match.all());
        assert_eq!(report.generated_at, None);
    }

    #[test]
    fn simulate_single_process_is_silent_on_the_wire() {
        let out = run(&["simulate", "--strategy", "dbsr", "--P", "1", "--N", "8", "--deterministic"]);
        assert_eq!(out.code, EXIT_OK);
        let report: SimulateReport = serde_json::from_str(&out.stdout).unwrap();
        assert_eq!(report.measured.total_bytes, 0);
    }

    #[test]
    fn usage_errors_exit_two() {
        let out = run(&["simulate", "--strategy", "dbsa", "--N", "10", "--P", "4"]);
        assert_eq!(out.code, EXIT_USAGE);
        assert!(out.stdout.contains("\"config\""));
        let out = run(&["simulate", "--strategy", "ddrs", "--D", "10", "--P", "4"]);
        assert_eq!(out.code, EXIT_USAGE);
        let out = run(&["plan"]);
        assert_eq!(out.code, EXIT_USAGE);
        assert!(Cli::try_parse_from(["parboot", "simulate"]).is_err());
    }

    #[test]
    fn infeasible_simulation_exits_three() {
        let out = run(&["simulate", "--strategy", "fsd", "--memory-cap", "500"]);
        assert_eq!(out.code, EXIT_INFEASIBLE);
        assert!(out.stdout.contains("infeasible"));
    }

    #[test]
    fn verify_default_desk_config() {
        let out = run(&["verify", "--deterministic"]);
        assert_eq!(out.code, EXIT_OK, "{}", out.stdout);
        let report: VerifyReport = serde_json::from_str(&out.stdout).unwrap();
        assert!(report.all_match);
        assert_eq!(report.rows.len(), 4);
        for row in &report.rows {
            assert_eq!(row.measured_bytes(), row.predicted_bytes());
            assert!(row.oracle.as_ref().unwrap().rel_err <= ORACLE_TOLERANCE);
        }
    }

    #[test]
    fn verify_single_process_all_zero() {
        let out = run(&["verify", "--P", "1", "--deterministic", "--format", "csv"]);
        assert_eq!(out.code, EXIT_OK);
        let mut rdr = csv::Reader::from_reader(out.stdout.as_bytes());
        let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 4);
        for row in rows {
            assert_eq!(&row[2], "0");
            assert_eq!(&row[3], "0");
        }
    }

    #[test]
    fn verify_reports_desync() {
        let out = run(&["verify", "--deterministic", "--desync-rank", "1"]);
        assert_eq!(out.code, EXIT_MISMATCH);
        let report: VerifyReport = serde_json::from_str(&out.stdout).unwrap();
        assert_eq!(report.rows[3].status, "sync_fault");
        assert!(report.rows[..3].iter().all(StrategyRow::passes));
    }

    #[test]
    fn verify_marks_infeasible_under_cap() {
        let out = run(&["verify", "--deterministic", "--memory-cap", "200"]);
        let report: VerifyReport = serde_json::from_str(&out.stdout).unwrap();
        assert_eq!(out.code, EXIT_OK);
        let status: Vec<&str> = report.rows.iter().map(|r| r.status.as_str()).collect();
        assert_eq!(status, ["infeasible", "infeasible", "infeasible", "ok"]);
    }

    #[test]
    fn plan_and_predict_outputs() {
        let out = run(&[
            "plan", "--D", "10000", "--N", "1000", "--P", "4", "--memory-cap", "3000", "--deterministic",
        ]);
        assert_eq!(out.code, EXIT_OK);
        let report: PlanReport = serde_json::from_str(&out.stdout).unwrap();
        assert_eq!(report.plan.choice, Some(StrategyKind::Ddrs));

        let out = run(&["plan", "--D", "10000", "--N", "1000", "--P", "4", "--memory-cap", "100"]);
        assert_eq!(out.code, EXIT_INFEASIBLE);

        let out = run(&["predict", "--strategy", "dbsr", "--D", "10000", "--N", "1000", "--P", "4", "--format", "text"]);
        assert_eq!(out.code, EXIT_OK);
        assert!(out.stdout.contains("30120000"), "{}", out.stdout);
    }

    #[test]
    fn data_file_is_read_as_raw_f32() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.f32");
        let data = Dataset::new((0..16).map(|i| i as f64 * 0.5).collect()).unwrap();
        std::fs::write(&path, data.to_f32_le_bytes()).unwrap();
        let p = path.to_str().unwrap();
        let out = run(&["simulate", "--strategy", "ddrs", "--D", "16", "--N", "8", "--data", p, "--deterministic"]);
        assert_eq!(out.code, EXIT_OK, "{}", out.stderr);
        let out = run(&["simulate", "--strategy", "ddrs", "--D", "32", "--N", "8", "--data", p]);
        assert_eq!(out.code, EXIT_USAGE);
    }

    #[test]
    fn json_round_trips() {
        let out = run(&["verify", "--deterministic"]);
        let report: VerifyReport = serde_json::from_str(&out.stdout).unwrap();
        assert_eq!(to_json(&report), out.stdout);
        let again: VerifyReport = serde_json::from_str(&to_json(&report)).unwrap();
        assert_eq!(again, report);
    }

    #[test]
    fn timestamp_only_without_deterministic() {
        let out = run(&["predict", "--strategy", "dbsa"]);
        assert!(out.stdout.contains("generated_at"));
        let out = run(&["predict", "--strategy", "dbsa", "--deterministic"]);
        assert!(!out.stdout.contains("generated_at"));
    }
}
