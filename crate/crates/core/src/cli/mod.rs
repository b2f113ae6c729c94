//! `stabilsim` command line.

mod emit;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::analysis::{
    line_regulation, parameter_study, power_dissipation_check, vehicle_experiment, AnalysisError, Ieee1159Config,
    RpmVoltageMap, StudyAxis, StudySetup, SweepResult,
};
use crate::corpus::{self, ReferenceTable};
use crate::engine::{dc_operating_point, dc_sweep, transient, DcSweep, SolveError, SolverOptions};
use crate::netlist::{parse_bytes, parse_value, DirectiveKind, Netlist, ParamValue};

pub use emit::{json_document, write_sink, Cell, EmitError, Table, SCHEMA};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_SIMULATION: i32 = 2;
pub const EXIT_CHECK: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "stabilsim", version, about = "Voltage-stabilizer circuit simulation and regulation analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// DC operating point.
    Op(RunArgs),
    /// Fixed-step transient waveform.
    Tran(RunArgs),
    /// DC sweep of one source plus line regulation.
    Sweep(RunArgs),
    /// Rank the values of one component parameter.
    Study(RunArgs),
    /// Drive the regulator from an rpm-to-voltage map.
    Vehicle(RunArgs),
    /// Sweep, regulation, overvoltage verdict and dissipation warnings as JSON.
    Report(RunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

fn number(s: &str) -> Result<f64, String> {
    parse_value(s).ok_or_else(|| format!("`{s}` is not a number"))
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Netlist file, or a corpus file name with --corpus.
    netlist: String,
    /// Resolve the netlist from the corpus (bundled, or $STABILSIM_CORPUS).
    #[arg(long)]
    corpus: bool,
    #[arg(long)]
    source: Option<String>,
    #[arg(long, value_parser = number, allow_hyphen_values = true)]
    from: Option<f64>,
    #[arg(long, value_parser = number, allow_hyphen_values = true)]
    to: Option<f64>,
    #[arg(long, value_parser = number, allow_hyphen_values = true)]
    step: Option<f64>,
    #[arg(long)]
    node: Option<String>,
    #[arg(long, value_parser = number)]
    tstep: Option<f64>,
    #[arg(long, value_parser = number)]
    tstop: Option<f64>,
    /// COMP.KEY=v1,v2,...
    #[arg(long)]
    param: Option<String>,
    #[arg(long = "rpm-map")]
    rpm_map: Option<PathBuf>,
    #[arg(long, value_parser = number, value_delimiter = ',')]
    rpm: Option<Vec<f64>>,
    #[arg(long, value_parser = number, default_value = "12")]
    nominal: f64,
    /// Study target voltage.
    #[arg(long, value_parser = number, default_value = "12.1")]
    target: f64,
    /// csv (default) or json; `report` is JSON only.
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit 3 when the sweep leaves the corpus reference bands.
    #[arg(long)]
    check: bool,
    #[arg(long, value_parser = number)]
    reltol: Option<f64>,
    #[arg(long, value_parser = number)]
    vntol: Option<f64>,
    #[arg(long, value_parser = number)]
    abstol: Option<f64>,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Simulation(String),
    #[error(transparent)]
    Emit(#[from] EmitError),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Emit(_) => EXIT_USAGE,
            CliError::Simulation(_) => EXIT_SIMULATION,
        }
    }
}

impl From<SolveError> for CliError {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::NoConvergence(_) | SolveError::SingularMatrix { .. } | SolveError::SingularTopology(_) => {
                CliError::Simulation(e.to_string())
            }
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Solve(s) => s.into(),
            e => CliError::Usage(e.to_string()),
        }
    }
}

/// Result of a command: the bytes to emit and the exit code to report
/// after emitting them.
struct Outcome {
    bytes: Vec<u8>,
    code: i32,
    notes: Vec<String>,
}

impl Outcome {
    fn ok(bytes: Vec<u8>) -> Self {
        Self { bytes, code: EXIT_OK, notes: Vec::new() }
    }
}

/// Runs the CLI on `argv` (program name first) and returns the exit code.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            if code == EXIT_OK {
                let _ = stdout.write_all(rendered.as_bytes());
            } else {
                let _ = stderr.write_all(rendered.as_bytes());
            }
            return code;
        }
    };
    let (args, result) = match &cli.command {
        Command::Op(a) => (a, cmd_op(a)),
        Command::Tran(a) => (a, cmd_tran(a)),
        Command::Sweep(a) => (a, cmd_sweep(a)),
        Command::Study(a) => (a, cmd_study(a)),
        Command::Vehicle(a) => (a, cmd_vehicle(a)),
        Command::Report(a) => (a, cmd_report(a)),
    };
    let outcome = match result {
        Ok(o) => o,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return e.code();
        }
    };
    for note in &outcome.notes {
        let _ = writeln!(stderr, "{note}");
    }
    if let Err(e) = write_sink(&outcome.bytes, args.out.as_deref(), stdout) {
        let _ = writeln!(stderr, "error: {e}");
        return EXIT_USAGE;
    }
    outcome.code
}

fn load_netlist(a: &RunArgs) -> Result<Netlist, CliError> {
    let bytes = if a.corpus {
        corpus::load_file(&a.netlist)
            .map(String::into_bytes)
            .map_err(|e| CliError::Usage(format!("cannot read corpus file {}: {e}", a.netlist)))?
    } else {
        std::fs::read(&a.netlist).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", a.netlist)))?
    };
    parse_bytes(&bytes).map_err(|e| CliError::Usage(format!("{}: {e}", a.netlist)))
}

fn solver_options(a: &RunArgs) -> Result<SolverOptions, CliError> {
    let mut o = SolverOptions::default();
    if let Some(v) = a.reltol {
        o.reltol = v;
    }
    if let Some(v) = a.vntol {
        o.vntol = v;
    }
    if let Some(v) = a.abstol {
        o.abstol = v;
    }
    o.validate()?;
    Ok(o)
}

fn require_node(a: &RunArgs, n: &Netlist) -> Result<String, CliError> {
    let node = a.node.clone().ok_or_else(|| CliError::Usage("--node is required".into()))?;
    if !n.nodes.contains_key(&crate::netlist::normalize_node(&node)) {
        return Err(CliError::Usage(format!("no node named `{node}`")));
    }
    Ok(node)
}

/// Sweep source and grid from flags, falling back to the netlist's
/// `.dcsweep` directive.
fn sweep_plan(a: &RunArgs, n: &Netlist) -> Result<(String, f64, f64, f64), CliError> {
    let directive = n.dcsweep_directive().and_then(|d| match &d.kind {
        DirectiveKind::DcSweep { source, start, stop, step } => Some((source.clone(), *start, *stop, *step)),
        _ => None,
    });
    let pick = |flag: Option<f64>, from_dir: Option<f64>, name: &str| {
        flag.or(from_dir).ok_or_else(|| CliError::Usage(format!("--{name} is required (no .dcsweep in netlist)")))
    };
    let d = directive.as_ref();
    let source = a
        .source
        .clone()
        .or_else(|| d.map(|d| d.0.clone()))
        .ok_or_else(|| CliError::Usage("--source is required (no .dcsweep in netlist)".into()))?;
    Ok((
        source,
        pick(a.from, d.map(|d| d.1), "from")?,
        pick(a.to, d.map(|d| d.2), "to")?,
        pick(a.step, d.map(|d| d.3), "step")?,
    ))
}

fn json_num(v: f64) -> Value {
    serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number)
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("analysis types serialize")
}

fn cmd_op(a: &RunArgs) -> Result<Outcome, CliError> {
    let n = load_netlist(a)?;
    let opts = solver_options(a)?;
    let op = dc_operating_point(&n, &opts)?;
    let warnings = power_dissipation_check(&op, &n);
    let bytes = match a.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut t = Table::new(["quantity", "value"]);
            for (name, v) in op.node_names.iter().zip(&op.node_voltages).skip(1) {
                t.push(vec![format!("v({name})").into(), (*v).into()]);
            }
            for (name, i) in op.source_names.iter().zip(&op.source_currents) {
                t.push(vec![format!("i({name})").into(), (*i).into()]);
            }
            t.to_csv()?
        }
        Format::Json => {
            let nodes: Map<String, Value> =
                op.node_names.iter().zip(&op.node_voltages).skip(1).map(|(k, v)| (k.clone(), json_num(*v))).collect();
            let sources: Map<String, Value> =
                op.source_names.iter().zip(&op.source_currents).map(|(k, v)| (k.clone(), json_num(*v))).collect();
            let mut m = Map::new();
            m.insert("node_voltages".into(), Value::Object(nodes));
            m.insert("source_currents".into(), Value::Object(sources));
            m.insert("iterations".into(), Value::from(op.iterations));
            m.insert("strategy_used".into(), to_value(&op.strategy_used));
            m.insert("dissipation_warnings".into(), to_value(&warnings));
            json_document("op", m)
        }
    };
    let mut out = Outcome::ok(bytes);
    out.notes = warnings
        .iter()
        .map(|w| format!("warning: {} dissipates {:.4} W, rated {} W", w.component, w.power_w, w.rated_w))
        .collect();
    Ok(out)
}

fn cmd_tran(a: &RunArgs) -> Result<Outcome, CliError> {
    let n = load_netlist(a)?;
    let mut opts = solver_options(a)?;
    let directive = n.tran_directive();
    if let Some(m) = directive.and_then(|d| d.options.get("method")) {
        opts.integration = match m.as_str() {
            "be" => crate::devices::IntegrationMethod::BackwardEuler,
            _ => crate::devices::IntegrationMethod::Trapezoidal,
        };
    }
    let from_dir = directive.and_then(|d| match d.kind {
        DirectiveKind::Tran { tstep, tstop } => Some((tstep, tstop)),
        _ => None,
    });
    let tstep = a
        .tstep
        .or(from_dir.map(|d| d.0))
        .ok_or_else(|| CliError::Usage("--tstep is required (no .tran in netlist)".into()))?;
    let tstop = a
        .tstop
        .or(from_dir.map(|d| d.1))
        .ok_or_else(|| CliError::Usage("--tstop is required (no .tran in netlist)".into()))?;
    let only = a.node.as_ref().map(|_| require_node(a, &n)).transpose()?.map(|s| crate::netlist::normalize_node(&s));
    let w = transient(&n, tstep, tstop, &opts)?;

    let nodes: Vec<usize> =
        (0..w.node_names.len()).filter(|k| only.as_ref().is_none_or(|o| *o == w.node_names[*k])).collect();
    let bytes = match a.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut header = vec!["time".to_string()];
            header.extend(nodes.iter().map(|k| format!("v({})", w.node_names[*k])));
            if only.is_none() {
                header.extend(w.source_names.iter().map(|s| format!("i({s})")));
            }
            let mut t = Table::new(header);
            for (i, time) in w.times.iter().enumerate() {
                let mut row: Vec<Cell> = vec![(*time).into()];
                row.extend(nodes.iter().map(|k| Cell::Num(w.node_voltages[*k][i])));
                if only.is_none() {
                    row.extend(w.source_currents.iter().map(|s| Cell::Num(s[i])));
                }
                t.push(row);
            }
            t.to_csv()?
        }
        Format::Json => {
            let series: Map<String, Value> =
                nodes.iter().map(|k| (w.node_names[*k].clone(), to_value(&w.node_voltages[*k]))).collect();
            let mut m = Map::new();
            m.insert("times".into(), to_value(&w.times));
            m.insert("node_voltages".into(), Value::Object(series));
            if only.is_none() {
                let currents: Map<String, Value> =
                    w.source_names.iter().zip(&w.source_currents).map(|(k, v)| (k.clone(), to_value(v))).collect();
                m.insert("source_currents".into(), Value::Object(currents));
            }
            m.insert("warnings".into(), to_value(&w.warnings));
            m.insert("be_fallback_steps".into(), Value::from(w.be_fallback_steps));
            json_document("tran", m)
        }
    };
    let mut out = Outcome::ok(bytes);
    out.notes = w.warnings.iter().map(|x| format!("warning: {}", to_value(x))).collect();
    Ok(out)
}

fn run_sweep(a: &RunArgs, n: &Netlist, opts: &SolverOptions) -> Result<(DcSweep, SweepResult), CliError> {
    let node = require_node(a, n)?;
    let (source, from, to, step) = sweep_plan(a, n)?;
    let sweep = dc_sweep(n, &source, from, to, step, opts)?;
    let result = SweepResult::from_dc_sweep(&sweep, &node)?;
    Ok((sweep, result))
}

fn failed_points(s: &DcSweep) -> Vec<String> {
    s.points.iter().filter_map(|p| p.result.as_ref().err().map(|e| format!("error: Vi = {}: {e}", p.input_v))).collect()
}

fn reference_table() -> Result<ReferenceTable, CliError> {
    let text = corpus::load_file("reference_sweep.csv")
        .map_err(|e| CliError::Usage(format!("cannot read corpus reference_sweep.csv: {e}")))?;
    ReferenceTable::from_csv(&text, "corpus reference_sweep.csv")
        .map_err(|e| CliError::Usage(format!("corpus reference_sweep.csv: {e}")))
}

fn cmd_sweep(a: &RunArgs) -> Result<Outcome, CliError> {
    let n = load_netlist(a)?;
    let opts = solver_options(a)?;
    let (sweep, result) = run_sweep(a, &n, &opts)?;
    let cfg = Ieee1159Config { nominal_v: a.nominal, ..Ieee1159Config::new(a.nominal) };
    let report = line_regulation(&result, &cfg).ok();
    let checks = if a.check { Some(reference_table()?.check(&result)) } else { None };

    let bytes = match a.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut header = vec!["vi", "vo", "converged"];
            if checks.is_some() {
                header.extend(["expected_vo", "tol", "pass"]);
            }
            let mut t = Table::new(header);
            for p in &result.points {
                let mut row: Vec<Cell> = vec![p.input_v.into(), p.output_v.into(), p.converged.into()];
                if let Some(checks) = &checks {
                    match checks.iter().find(|c| (c.input_v - p.input_v).abs() < 1e-9) {
                        Some(c) => row.extend([c.expected_vo.into(), c.tolerance.into(), c.pass.into()]),
                        None => row.extend([Cell::Empty, Cell::Empty, Cell::Empty]),
                    }
                }
                t.push(row);
            }
            t.to_csv()?
        }
        Format::Json => {
            let mut m = Map::new();
            m.insert("sweep".into(), to_value(&result));
            m.insert("regulation".into(), report.as_ref().map_or(Value::Null, to_value));
            if let Some(c) = &checks {
                m.insert("check".into(), to_value(c));
            }
            json_document("sweep", m)
        }
    };

    let mut out = Outcome::ok(bytes);
    out.notes = failed_points(&sweep);
    if let Some(r) = &report {
        out.notes.push(format!(
            "line regulation {:.6} %/V (dVi {} V, dVo {:.6} V, Vo ref {:.6} V at Vi {}), max {:.6} pu, {}",
            r.line_regulation_pct_per_v,
            r.delta_vi,
            r.delta_vo,
            r.vo_ref,
            r.vi_ref,
            r.max_pu,
            to_value(&r.verdict).as_str().unwrap_or_default()
        ));
    }
    if !out.notes.iter().all(|n| !n.starts_with("error:")) {
        out.code = EXIT_SIMULATION;
    }
    if let Some(checks) = &checks {
        let failed: Vec<_> = checks.iter().filter(|c| !c.pass).collect();
        for c in &failed {
            out.notes.push(format!(
                "check failed: Vi = {} expected {} +/- {}, got {}",
                c.input_v,
                c.expected_vo,
                c.tolerance,
                c.actual_vo.map_or("no value".to_string(), |v| format!("{v:.6}"))
            ));
        }
        if !failed.is_empty() && out.code == EXIT_OK {
            out.code = EXIT_CHECK;
        }
    }
    Ok(out)
}

fn parse_param_axis(spec: &str) -> Result<StudyAxis, CliError> {
    let bad = || CliError::Usage(format!("--param expects COMP.KEY=v1,v2,... (got `{spec}`)"));
    let (target, values) = spec.split_once('=').ok_or_else(bad)?;
    let (component, param) = target.split_once('.').ok_or_else(bad)?;
    if component.is_empty() || param.is_empty() || values.trim().is_empty() {
        return Err(bad());
    }
    let values = values.split(',').map(|v| ParamValue::parse(v.trim())).collect();
    Ok(StudyAxis { component: component.to_string(), param: param.to_string(), values })
}

fn cmd_study(a: &RunArgs) -> Result<Outcome, CliError> {
    let n = load_netlist(a)?;
    let opts = solver_options(a)?;
    let axis = parse_param_axis(a.param.as_deref().ok_or_else(|| CliError::Usage("--param is required".into()))?)?;
    let node = require_node(a, &n)?;
    let (source, start, stop, step) = sweep_plan(a, &n)?;
    let setup = StudySetup { source, output_node: node, start, stop, step, target_v: a.target };
    let rows = parameter_study(&n, &axis, &setup, &opts)?;

    let bytes = match a.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut t = Table::new(["rank", "value", "max_deviation", "line_regulation_pct_per_v", "error"]);
            for (rank, r) in rows.iter().enumerate() {
                t.push(vec![
                    Cell::Text((rank + 1).to_string()),
                    r.value.to_string().into(),
                    r.max_deviation.into(),
                    r.line_regulation_pct_per_v.into(),
                    r.error.clone().map_or(Cell::Empty, Cell::Text),
                ]);
            }
            t.to_csv()?
        }
        Format::Json => {
            let mut m = Map::new();
            m.insert("axis".into(), to_value(&axis));
            m.insert("setup".into(), to_value(&setup));
            m.insert("ranking".into(), to_value(&rows));
            json_document("study", m)
        }
    };
    Ok(Outcome::ok(bytes))
}

fn default_source(a: &RunArgs, n: &Netlist) -> Result<String, CliError> {
    if let Some(s) = &a.source {
        return Ok(s.clone());
    }
    if let Some(DirectiveKind::DcSweep { source, .. }) = n.dcsweep_directive().map(|d| &d.kind) {
        return Ok(source.clone());
    }
    Err(CliError::Usage("--source is required (no .dcsweep in netlist)".into()))
}

fn cmd_vehicle(a: &RunArgs) -> Result<Outcome, CliError> {
    let n = load_netlist(a)?;
    let opts = solver_options(a)?;
    let path = a.rpm_map.as_ref().ok_or_else(|| CliError::Usage("--rpm-map is required".into()))?;
    let file =
        std::fs::File::open(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let map = RpmVoltageMap::from_csv(file).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let grid = a.rpm.clone().ok_or_else(|| CliError::Usage("--rpm is required".into()))?;
    let node = require_node(a, &n)?;
    let source = default_source(a, &n)?;
    let rows = vehicle_experiment(&n, &map, &grid, &source, &node, &opts)?;

    let bytes = match a.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut t =
                Table::new(["rpm", "unregulated_v", "regulated_v", "line_regulation_pct_per_v", "clamped", "error"]);
            for r in &rows {
                t.push(vec![
                    r.rpm.into(),
                    r.unregulated_v.into(),
                    r.regulated_v.into(),
                    r.line_regulation_pct_per_v.into(),
                    r.clamped.into(),
                    r.error.clone().map_or(Cell::Empty, Cell::Text),
                ]);
            }
            t.to_csv()?
        }
        Format::Json => {
            let mut m = Map::new();
            m.insert("rows".into(), to_value(&rows));
            json_document("vehicle", m)
        }
    };
    let mut out = Outcome::ok(bytes);
    out.notes = rows.iter().filter_map(|r| r.error.as_ref().map(|e| format!("error: rpm {}: {e}", r.rpm))).collect();
    if !out.notes.is_empty() {
        out.code = EXIT_SIMULATION;
    }
    Ok(out)
}

fn cmd_report(a: &RunArgs) -> Result<Outcome, CliError> {
    if a.format == Some(Format::Csv) {
        return Err(CliError::Usage("report is JSON only".into()));
    }
    let n = load_netlist(a)?;
    let opts = solver_options(a)?;
    let (sweep, result) = run_sweep(a, &n, &opts)?;
    let cfg = Ieee1159Config::new(a.nominal);
    cfg.validate()?;
    let report = line_regulation(&result, &cfg)?;

    let mut dissipation = Vec::new();
    for p in &sweep.points {
        if let Ok(op) = &p.result {
            for w in power_dissipation_check(op, &n) {
                dissipation.push(json!({ "vi": json_num(p.input_v), "warning": to_value(&w) }));
            }
        }
    }
    let mut ieee = Map::new();
    ieee.insert("verdict".into(), to_value(&report.verdict));
    ieee.insert("max_pu".into(), json_num(report.max_pu));
    ieee.insert("threshold_pu".into(), json_num(cfg.overvoltage_pu));
    ieee.insert("min_duration_s".into(), json_num(cfg.min_duration));
    ieee.insert("duration_triggerable".into(), Value::Bool(false));
    ieee.insert(
        "note".into(),
        Value::from("duration criterion not triggerable by a DC sweep; each level is treated as sustained"),
    );

    let mut m = Map::new();
    m.insert("netlist".into(), Value::from(a.netlist.clone()));
    m.insert("title".into(), if n.title.is_empty() { Value::Null } else { Value::from(n.title.clone()) });
    m.insert("sweep".into(), to_value(&result));
    m.insert("regulation".into(), to_value(&report));
    m.insert("ieee1159".into(), Value::Object(ieee));
    m.insert("dissipation_warnings".into(), Value::Array(dissipation));
    let mut out = Outcome::ok(json_document("report", m));
    out.notes = failed_points(&sweep);
    if !out.notes.is_empty() {
        out.code = EXIT_SIMULATION;
    }
    Ok(out)
}
