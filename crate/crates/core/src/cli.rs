//! Command-line front end: argument parsing, model ingestion and report
//! rendering. Output is assembled in memory and emitted only on success.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value as Json};

use crate::backend::{Backend, Value};
use crate::entropy;
use crate::expansion::{self, REFERENCE_MAX_ORDER};
use crate::model::{self, HmpModel, PerturbationMatrix, RegimeKind, RegimeSpec, StochasticMatrix};
use crate::radius::{self, GridAxis, Position, RadiusError, RadiusEstimate, ScanOptions};
use crate::rational::{self, Rational};

const DEFAULT_FAMILY_PARAMETER: (i64, i64) = (1, 5);

const INPUT_FILES: &str = "\
Input files are JSON. Matrix entries may be strings (\"1/3\", \"0.25\") or
JSON numbers; every entry is read as an exact rational.

  model:   {\"M\": [[...], ...], \"R\": [[...], ...]}
  regime:  {\"regime\": \"high-snr\", \"M\": ..., \"T\": ...}
           {\"regime\": \"almost-memoryless\", \"R\": ..., \"T\": ...}

Exit codes: 0 success, 1 computation error, 2 usage or input error.";

#[derive(Debug, Parser)]
#[command(
    name = "hmp-series",
    version,
    about = "Entropy rates of hidden Markov processes as exact Taylor series",
    after_help = INPUT_FILES
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a model or regime and report its stationary law.
    #[command(after_help = "CSV columns: field,value\nJSON: {kind, alphabet_size, ...}")]
    Validate {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Block entropies H_N with the upper and lower rate bounds.
    #[command(after_help = "CSV columns: n,entropy,upper,lower (lower is empty for n=1)\n\
        JSON: {backend, rows: [{n, entropy, upper, lower}]}, each value {text, approx}\n\
        A single --n N means 1..=N.")]
    Entropy {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long, value_parser = parse_usize_list)]
        n: UsizeList,
        #[command(flatten)]
        numeric: NumericArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// The bracket c_N <= rate <= C_N over a range of N.
    #[command(after_help = "CSV columns: n,lower,upper,midpoint,half_gap\n\
        JSON: {backend, rows: [{n, lower, upper, midpoint, half_gap}]}\n\
        A single --n N means 2..=N.")]
    Bounds {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long, value_parser = parse_usize_list)]
        n: UsizeList,
        #[command(flatten)]
        numeric: NumericArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Entropy-rate Taylor coefficients through order K.
    #[command(after_help = "CSV columns: order,term,coefficient,settles_at\n\
        JSON: {regime, backend, traversal_n, note, rows: [{order, term, coefficient, settles_at}]}\n\
        Exact coefficients render as rationals plus rational multiples of log(p).")]
    Expand {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        order: OrderArgs,
        #[command(flatten)]
        numeric: NumericArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Order-k coefficient of C_N across N, with a settling verdict.
    #[command(after_help = "CSV columns: n,value,settled, then a final '# <verdict>' line\n\
        JSON: {k, threshold, onset, verdict, rows: [{n, value, settled}]}\n\
        Default --n runs from one below the settling threshold to two above it.")]
    Settle {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long)]
        k: usize,
        #[arg(long, value_parser = parse_usize_list)]
        n: Option<UsizeList>,
        #[command(flatten)]
        numeric: NumericArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Radius-of-convergence estimates from the order-K table.
    #[command(after_help = "CSV columns: method,status,value,stride,orders_used,alternating,residual,low_confidence\n\
        status is ok, indeterminate or an error tag; orders_used is space separated.\n\
        JSON: {regime, order, estimates: [{method, status, value, stride, orders_used, per_order, alternating, residual, low_confidence}]}")]
    Radius {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        order: OrderArgs,
        #[command(flatten)]
        numeric: NumericArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Partial sums against the c_N, C_N bounds over a parameter grid.
    #[command(after_help = "CSV columns: grid_value,order,partial_sum,lower_bound,upper_bound,inside_flag\n\
        JSON: {regime, axis, bound_n, rows: [{grid_value, order, partial_sum, lower_bound, upper_bound, inside_flag, position}]}\n\
        --order takes a comma-separated list. For almost-memoryless regimes the\n\
        grid is over p = 1/2 - delta unless --axis param is given.")]
    Scan {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long, value_parser = parse_usize_list)]
        order: UsizeList,
        /// START:STOP:STEPS, inclusive, STEPS points.
        #[arg(long, value_parser = parse_grid)]
        grid: Grid,
        #[arg(long, value_enum)]
        axis: Option<AxisArg>,
        /// Block length of the bounds.
        #[arg(long, default_value_t = 2)]
        bound_n: usize,
        #[arg(long, default_value_t = radius::DEFAULT_SCAN_TOLERANCE)]
        tolerance: f64,
        #[arg(long, default_value = "float64")]
        backend: Backend,
        #[arg(long, default_value_t = 24)]
        max_order: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Draw a state/observation path.
    #[command(after_help = "CSV columns: t,x,y (t from 1)\nJSON: {seed, n, x, y}")]
    Sample {
        #[command(flatten)]
        source: SourceArgs,
        /// Path length.
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
}

#[derive(Debug, Clone, Args)]
pub struct SourceArgs {
    /// Model file with M and R.
    #[arg(long, conflicts_with = "regime")]
    pub model: Option<PathBuf>,
    /// Regime file, or a symmetric binary family: am | almost-memoryless | high-snr | hsnr.
    #[arg(long)]
    pub regime: Option<String>,
    /// Almost-memoryless family: emission correlation, eps = (1 - mu)/2.
    #[arg(long, value_parser = parse_rational_arg, conflicts_with = "eps")]
    pub mu: Option<Rational>,
    /// Almost-memoryless family: emission flip probability.
    #[arg(long, value_parser = parse_rational_arg)]
    pub eps: Option<Rational>,
    /// High-SNR family: state flip probability.
    #[arg(long, value_parser = parse_rational_arg)]
    pub p: Option<Rational>,
    /// Perturbation value used to instantiate a regime as a model.
    #[arg(long, value_parser = parse_rational_arg)]
    pub at: Option<Rational>,
}

#[derive(Debug, Clone, Args)]
pub struct NumericArgs {
    #[arg(long, default_value = "exact")]
    pub backend: Backend,
}

#[derive(Debug, Clone, Args)]
pub struct OrderArgs {
    #[arg(long, default_value_t = REFERENCE_MAX_ORDER)]
    pub order: usize,
    #[arg(long, default_value_t = 24)]
    pub max_order: usize,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AxisArg {
    P,
    Param,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UsizeList {
    pub values: Vec<usize>,
    pub single: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub start: Rational,
    pub stop: Rational,
    pub steps: usize,
}

fn parse_rational_arg(s: &str) -> Result<Rational, String> {
    rational::parse_rational(s).map_err(|e| e.to_string())
}

fn parse_usize_list(s: &str) -> Result<UsizeList, String> {
    let values = s
        .split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|_| format!("invalid count {t:?}")))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(UsizeList {
        single: values.len() == 1,
        values,
    })
}

fn parse_grid(s: &str) -> Result<Grid, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [start, stop, steps] = parts[..] else {
        return Err(format!("expected START:STOP:STEPS, got {s:?}"));
    };
    let grid = Grid {
        start: parse_rational_arg(start)?,
        stop: parse_rational_arg(stop)?,
        steps: steps.trim().parse().map_err(|_| format!("invalid step count {steps:?}"))?,
    };
    if grid.steps == 0 || (grid.steps > 1 && grid.start >= grid.stop) {
        return Err("grid needs START < STOP and at least one step".into());
    }
    Ok(grid)
}

/// Exit code plus the text destined for each stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Compute(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Compute(_) => 1,
        }
    }
}

fn compute<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Compute(e.to_string())
}

struct Report {
    body: String,
    warnings: Vec<String>,
}

pub fn run<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => Outcome {
                    code: 0,
                    stdout: text,
                    stderr: String::new(),
                },
                _ => Outcome {
                    code: 2,
                    stdout: String::new(),
                    stderr: text,
                },
            };
        }
    };
    let out = output_args(&cli.command).clone();
    match dispatch(&cli.command) {
        Ok(report) => {
            let mut stderr: String = report.warnings.iter().map(|w| format!("warning: {w}\n")).collect();
            let stdout = match &out.out {
                Some(path) => match fs::write(path, &report.body) {
                    Ok(()) => String::new(),
                    Err(e) => {
                        stderr.push_str(&format!("error: cannot write {}: {e}\n", path.display()));
                        return Outcome { code: 1, stdout: String::new(), stderr };
                    }
                },
                None => report.body,
            };
            Outcome { code: 0, stdout, stderr }
        }
        Err(e) => {
            let (CliError::Usage(msg) | CliError::Compute(msg)) = &e;
            Outcome {
                code: e.code(),
                stdout: String::new(),
                stderr: format!("error: {msg}\n"),
            }
        }
    }
}

fn output_args(c: &Command) -> &OutputArgs {
    match c {
        Command::Validate { output, .. }
        | Command::Entropy { output, .. }
        | Command::Bounds { output, .. }
        | Command::Expand { output, .. }
        | Command::Settle { output, .. }
        | Command::Radius { output, .. }
        | Command::Scan { output, .. }
        | Command::Sample { output, .. } => output,
    }
}

fn dispatch(c: &Command) -> Result<Report, CliError> {
    match c {
        Command::Validate { source, output } => validate(source, output.format),
        Command::Entropy { source, n, numeric, output } => entropy_cmd(source, n, numeric.backend, output.format),
        Command::Bounds { source, n, numeric, output } => bounds_cmd(source, n, numeric.backend, output.format),
        Command::Expand { source, order, numeric, output } => expand_cmd(source, order, numeric.backend, output.format),
        Command::Settle { source, k, n, numeric, output } => {
            settle_cmd(source, *k, n.as_ref(), numeric.backend, output.format)
        }
        Command::Radius { source, order, numeric, output } => radius_cmd(source, order, numeric.backend, output.format),
        Command::Scan {
            source,
            order,
            grid,
            axis,
            bound_n,
            tolerance,
            backend,
            max_order,
            output,
        } => {
            let opts = ScanOptions {
                axis: GridAxis::Parameter,
                backend: *backend,
                bound_n: *bound_n,
                tolerance: *tolerance,
            };
            scan_cmd(source, &order.values, grid, *axis, opts, *max_order, output.format)
        }
        Command::Sample { source, n, seed, output } => sample_cmd(source, *n, *seed, output.format),
    }
}

// ---- input ----

fn read_json(path: &Path) -> Result<Json, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn matrix_field(doc: &Json, field: &str, path: &Path) -> Result<Vec<Vec<Rational>>, CliError> {
    let at = |what: String| CliError::Usage(format!("{}: field {field:?}: {what}", path.display()));
    let rows = doc
        .get(field)
        .ok_or_else(|| at("missing".into()))?
        .as_array()
        .ok_or_else(|| at("expected an array of rows".into()))?;
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            row.as_array()
                .ok_or_else(|| at(format!("row {i} is not an array")))?
                .iter()
                .enumerate()
                .map(|(j, entry)| {
                    let text = match entry {
                        Json::String(s) => s.clone(),
                        Json::Number(n) => n.to_string(),
                        other => return Err(at(format!("row {i} entry {j}: expected a number or string, got {other}"))),
                    };
                    rational::parse_rational(&text).map_err(|e| at(format!("row {i} entry {j}: {e}")))
                })
                .collect()
        })
        .collect()
}

fn invalid<E: std::fmt::Display>(path: &Path) -> impl Fn(E) -> CliError + '_ {
    move |e| CliError::Usage(format!("{}: {e}", path.display()))
}

pub fn load_model(path: &Path) -> Result<HmpModel, String> {
    load_model_inner(path).map_err(|e| match e {
        CliError::Usage(m) | CliError::Compute(m) => m,
    })
}

fn load_model_inner(path: &Path) -> Result<HmpModel, CliError> {
    let doc = read_json(path)?;
    let m = StochasticMatrix::new("M", matrix_field(&doc, "M", path)?).map_err(invalid(path))?;
    let r = StochasticMatrix::new("R", matrix_field(&doc, "R", path)?).map_err(invalid(path))?;
    model::validate_model(m, r).map_err(invalid(path))
}

pub fn load_regime(path: &Path) -> Result<RegimeSpec, String> {
    load_regime_inner(path).map_err(|e| match e {
        CliError::Usage(m) | CliError::Compute(m) => m,
    })
}

fn load_regime_inner(path: &Path) -> Result<RegimeSpec, CliError> {
    let doc = read_json(path)?;
    let kind = doc
        .get("regime")
        .and_then(Json::as_str)
        .ok_or_else(|| CliError::Usage(format!("{}: field \"regime\" missing or not a string", path.display())))?;
    let t = PerturbationMatrix::new("T", matrix_field(&doc, "T", path)?).map_err(invalid(path))?;
    match family_kind(kind) {
        Some(RegimeKind::HighSnr) => {
            let m = StochasticMatrix::new("M", matrix_field(&doc, "M", path)?).map_err(invalid(path))?;
            RegimeSpec::high_snr(m, t).map_err(invalid(path))
        }
        Some(RegimeKind::AlmostMemoryless) => {
            let r = StochasticMatrix::new("R", matrix_field(&doc, "R", path)?).map_err(invalid(path))?;
            RegimeSpec::almost_memoryless(r, t).map_err(invalid(path))
        }
        None => Err(CliError::Usage(format!("{}: unknown regime {kind:?}", path.display()))),
    }
}

fn family_kind(name: &str) -> Option<RegimeKind> {
    match name {
        "am" | "almost-memoryless" => Some(RegimeKind::AlmostMemoryless),
        "high-snr" | "hsnr" => Some(RegimeKind::HighSnr),
        _ => None,
    }
}

fn resolve_regime(src: &SourceArgs) -> Result<RegimeSpec, CliError> {
    if src.model.is_some() {
        return Err(CliError::Usage("this command needs --regime, not --model".into()));
    }
    let name = src.regime.as_deref().unwrap_or("am");
    let default = || rational::ratio(DEFAULT_FAMILY_PARAMETER.0, DEFAULT_FAMILY_PARAMETER.1);
    let usage = |m: &str| Err(CliError::Usage(m.into()));
    match family_kind(name) {
        Some(RegimeKind::AlmostMemoryless) => {
            if src.p.is_some() {
                return usage("--p applies to the high-snr family; use --eps or --mu");
            }
            let eps = match (&src.eps, &src.mu) {
                (Some(e), _) => e.clone(),
                (None, Some(mu)) => (rational::int(1) - mu) / rational::int(2),
                (None, None) => default(),
            };
            RegimeSpec::symmetric_binary_almost_memoryless(&eps).map_err(|e| CliError::Usage(e.to_string()))
        }
        Some(RegimeKind::HighSnr) => {
            if src.eps.is_some() || src.mu.is_some() {
                return usage("--eps and --mu apply to the almost-memoryless family; use --p");
            }
            let p = src.p.clone().unwrap_or_else(default);
            RegimeSpec::symmetric_binary_high_snr(&p).map_err(|e| CliError::Usage(e.to_string()))
        }
        None => {
            if src.eps.is_some() || src.mu.is_some() || src.p.is_some() {
                return usage("--eps, --mu and --p apply only to the built-in families");
            }
            load_regime_inner(Path::new(name))
        }
    }
}

fn resolve_model(src: &SourceArgs) -> Result<HmpModel, CliError> {
    match &src.model {
        Some(path) => {
            if src.at.is_some() {
                return Err(CliError::Usage("--at applies to --regime, not --model".into()));
            }
            load_model_inner(path)
        }
        None => {
            let spec = resolve_regime(src)?;
            let at = src.at.clone().unwrap_or_else(|| rational::int(0));
            spec.instantiate(&at).map_err(|e| CliError::Usage(e.to_string()))
        }
    }
}

fn check_order(order: usize, max: usize, warnings: &mut Vec<String>) -> Result<(), CliError> {
    if order > max {
        return Err(CliError::Usage(format!("order {order} exceeds --max-order {max}")));
    }
    if order > REFERENCE_MAX_ORDER {
        warnings.push(format!("order {order} is above {REFERENCE_MAX_ORDER}; exact runs grow quickly"));
    }
    Ok(())
}

// ---- rendering ----

fn json_value(v: &Value) -> Json {
    json!({ "text": v.to_string(), "approx": v.to_f64() })
}

fn json_body(doc: Json) -> String {
    let mut s = serde_json::to_string_pretty(&doc).expect("json values serialize");
    s.push('\n');
    s
}

struct Csv(csv::Writer<Vec<u8>>);

impl Csv {
    fn new(header: &[&str]) -> Self {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).expect("writes to memory");
        Csv(w)
    }

    fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.0.write_record(fields).expect("writes to memory");
    }

    fn finish(self) -> String {
        String::from_utf8(self.0.into_inner().expect("flushes to memory")).expect("utf-8 fields")
    }
}

fn float(x: f64) -> String {
    format!("{x:?}")
}

fn report(body: String) -> Result<Report, CliError> {
    Ok(Report { body, warnings: Vec::new() })
}

// ---- commands ----

fn validate(src: &SourceArgs, format: Format) -> Result<Report, CliError> {
    let mut fields: Vec<(&str, Json, String)> = Vec::new();
    if src.model.is_some() || src.at.is_some() {
        let model = resolve_model(src)?;
        let pi: Vec<String> = model.stationary().iter().map(|q| q.to_string()).collect();
        fields.push(("kind", json!("model"), "model".into()));
        fields.push(("alphabet_size", json!(model.alphabet_size()), model.alphabet_size().to_string()));
        fields.push(("stationary", json!(pi), pi.join(" ")));
    } else {
        let spec = resolve_regime(src)?;
        let kind = spec.kind().to_string();
        fields.push(("kind", json!("regime"), "regime".into()));
        fields.push(("regime", json!(kind), kind.clone()));
        fields.push(("alphabet_size", json!(spec.alphabet_size()), spec.alphabet_size().to_string()));
        if let RegimeSpec::HighSnr { m, .. } = &spec {
            let pi: Vec<String> = model::stationary_distribution(m)
                .map_err(compute)?
                .iter()
                .map(|q| q.to_string())
                .collect();
            fields.push(("stationary", json!(pi), pi.join(" ")));
        }
    }
    fields.push(("status", json!("ok"), "ok".into()));
    report(match format {
        Format::Csv => {
            let mut w = Csv::new(&["field", "value"]);
            for (k, _, v) in &fields {
                w.row([*k, v.as_str()]);
            }
            w.finish()
        }
        Format::Json => json_body(Json::Object(fields.into_iter().map(|(k, j, _)| (k.to_string(), j)).collect())),
    })
}

fn sorted_ns(list: &UsizeList, from: usize) -> Vec<usize> {
    let mut ns = if list.single {
        (from..=list.values[0]).collect()
    } else {
        list.values.clone()
    };
    ns.sort_unstable();
    ns.dedup();
    ns
}

fn entropy_cmd(src: &SourceArgs, n: &UsizeList, backend: Backend, format: Format) -> Result<Report, CliError> {
    let model = resolve_model(src)?;
    let ns = sorted_ns(n, 1);
    let Some(&n_max) = ns.last() else {
        return Err(CliError::Usage("--n is empty".into()));
    };
    if ns[0] == 0 {
        return Err(CliError::Usage("--n values must be at least 1".into()));
    }
    let reports = entropy::entropy_reports(&model, n_max, backend).map_err(compute)?;
    let rows: Vec<_> = reports.into_iter().filter(|r| ns.contains(&r.n)).collect();
    report(match format {
        Format::Csv => {
            let mut w = Csv::new(&["n", "entropy", "upper", "lower"]);
            for r in &rows {
                w.row([
                    r.n.to_string(),
                    r.h.to_string(),
                    r.upper.to_string(),
                    r.lower.as_ref().map(Value::to_string).unwrap_or_default(),
                ]);
            }
            w.finish()
        }
        Format::Json => json_body(json!({
            "backend": backend.to_string(),
            "rows": rows.iter().map(|r| json!({
                "n": r.n,
                "entropy": json_value(&r.h),
                "upper": json_value(&r.upper),
                "lower": r.lower.as_ref().map(json_value),
            })).collect::<Vec<_>>(),
        })),
    })
}

fn bounds_cmd(src: &SourceArgs, n: &UsizeList, backend: Backend, format: Format) -> Result<Report, CliError> {
    let model = resolve_model(src)?;
    let ns = sorted_ns(n, 2);
    if ns.is_empty() || ns[0] < 2 {
        return Err(CliError::Usage("--n values must be at least 2".into()));
    }
    let rows = ns
        .iter()
        .map(|&n| entropy::entropy_rate_bracket(&model, n, backend).map(|b| (n, b)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(compute)?;
    report(match format {
        Format::Csv => {
            let mut w = Csv::new(&["n", "lower", "upper", "midpoint", "half_gap"]);
            for (n, b) in &rows {
                w.row([
                    n.to_string(),
                    b.lower.to_string(),
                    b.upper.to_string(),
                    b.midpoint.to_string(),
                    b.half_gap.to_string(),
                ]);
            }
            w.finish()
        }
        Format::Json => json_body(json!({
            "backend": backend.to_string(),
            "rows": rows.iter().map(|(n, b)| json!({
                "n": n,
                "lower": json_value(&b.lower),
                "upper": json_value(&b.upper),
                "midpoint": json_value(&b.midpoint),
                "half_gap": json_value(&b.half_gap),
            })).collect::<Vec<_>>(),
        })),
    })
}

fn variable(kind: RegimeKind) -> &'static str {
    match kind {
        RegimeKind::HighSnr => "epsilon",
        RegimeKind::AlmostMemoryless => "delta",
    }
}

fn expand_cmd(src: &SourceArgs, order: &OrderArgs, backend: Backend, format: Format) -> Result<Report, CliError> {
    let mut warnings = Vec::new();
    check_order(order.order, order.max_order, &mut warnings)?;
    let spec = resolve_regime(src)?;
    let table = expansion::rate_series(&spec, order.order, backend).map_err(compute)?;
    if let Some(note) = table.note() {
        warnings.push(note.to_string());
    }
    let var = variable(table.regime);
    let term = |k: usize| match k {
        0 => "1".to_string(),
        1 => var.to_string(),
        _ => format!("{var}^{k}"),
    };
    let body = match format {
        Format::Csv => {
            let mut w = Csv::new(&["order", "term", "coefficient", "settles_at"]);
            for (k, v) in table.values.iter().enumerate() {
                w.row([k.to_string(), term(k), v.to_string(), table.thresholds[k].to_string()]);
            }
            w.finish()
        }
        Format::Json => json_body(json!({
            "regime": table.regime.to_string(),
            "backend": backend.to_string(),
            "traversal_n": table.traversal_n,
            "note": table.note(),
            "rows": table.values.iter().enumerate().map(|(k, v)| json!({
                "order": k,
                "term": term(k),
                "coefficient": json_value(v),
                "settles_at": table.thresholds[k],
            })).collect::<Vec<_>>(),
        })),
    };
    Ok(Report { body, warnings })
}

fn settle_cmd(
    src: &SourceArgs,
    k: usize,
    n: Option<&UsizeList>,
    backend: Backend,
    format: Format,
) -> Result<Report, CliError> {
    let spec = resolve_regime(src)?;
    let threshold = expansion::settling_threshold(k);
    let ns = match n {
        Some(list) => list.values.clone(),
        None => (threshold.saturating_sub(1).max(2)..=threshold + 2).collect(),
    };
    if ns.iter().any(|&n| n < 2) {
        return Err(CliError::Usage("--n values must be at least 2".into()));
    }
    let rep = expansion::settling_check(&spec, k, &ns, backend).map_err(compute)?;
    report(match format {
        Format::Csv => {
            let mut w = Csv::new(&["n", "value", "settled"]);
            for r in &rep.rows {
                w.row([r.n.to_string(), r.value.to_string(), r.settled.to_string()]);
            }
            let mut s = w.finish();
            s.push_str(&format!("# {}\n", rep.verdict()));
            s
        }
        Format::Json => json_body(json!({
            "k": rep.k,
            "threshold": rep.threshold,
            "onset": rep.onset,
            "verdict": rep.verdict(),
            "rows": rep.rows.iter().map(|r| json!({
                "n": r.n,
                "value": json_value(&r.value),
                "settled": r.settled,
            })).collect::<Vec<_>>(),
        })),
    })
}

fn estimate_status(e: &Result<RadiusEstimate, RadiusError>) -> &'static str {
    match e {
        Ok(est) if est.is_indeterminate() => "indeterminate",
        Ok(_) => "ok",
        Err(RadiusError::TooFewCoefficients { .. }) => "too-few-coefficients",
        Err(RadiusError::DegenerateFit) => "degenerate-fit",
        Err(_) => "error",
    }
}

fn radius_cmd(src: &SourceArgs, order: &OrderArgs, backend: Backend, format: Format) -> Result<Report, CliError> {
    let mut warnings = Vec::new();
    check_order(order.order, order.max_order, &mut warnings)?;
    let spec = resolve_regime(src)?;
    let table = expansion::rate_series(&spec, order.order, backend).map_err(compute)?;
    let estimates = radius::estimate_all(&table);
    let methods = [
        radius::RadiusMethod::Ratio,
        radius::RadiusMethod::CauchyHadamard,
        radius::RadiusMethod::DombSykes,
    ];
    let body = match format {
        Format::Csv => {
            let mut w = Csv::new(&[
                "method",
                "status",
                "value",
                "stride",
                "orders_used",
                "alternating",
                "residual",
                "low_confidence",
            ]);
            for (method, e) in methods.iter().zip(&estimates) {
                let status = estimate_status(e).to_string();
                match e {
                    Ok(est) => w.row([
                        method.to_string(),
                        status,
                        est.value.map(float).unwrap_or_default(),
                        est.stride.to_string(),
                        est.orders_used.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(" "),
                        est.alternating.to_string(),
                        est.residual.map(float).unwrap_or_default(),
                        est.low_confidence.to_string(),
                    ]),
                    Err(_) => w.row([method.to_string(), status, String::new(), String::new(), String::new(), String::new(), String::new(), String::new()]),
                }
            }
            w.finish()
        }
        Format::Json => json_body(json!({
            "regime": table.regime.to_string(),
            "order": table.order(),
            "estimates": methods.iter().zip(&estimates).map(|(method, e)| match e {
                Ok(est) => json!({
                    "method": method.to_string(),
                    "status": estimate_status(e),
                    "value": est.value,
                    "stride": est.stride,
                    "orders_used": est.orders_used,
                    "per_order": est.per_order,
                    "alternating": est.alternating,
                    "residual": est.residual,
                    "low_confidence": est.low_confidence,
                }),
                Err(err) => json!({
                    "method": method.to_string(),
                    "status": estimate_status(e),
                    "error": err.to_string(),
                }),
            }).collect::<Vec<_>>(),
        })),
    };
    Ok(Report { body, warnings })
}

fn position_name(p: Position) -> &'static str {
    match p {
        Position::Inside => "inside",
        Position::Above => "above",
        Position::Below => "below",
    }
}

fn scan_cmd(
    src: &SourceArgs,
    orders: &[usize],
    grid: &Grid,
    axis: Option<AxisArg>,
    mut opts: ScanOptions,
    max_order: usize,
    format: Format,
) -> Result<Report, CliError> {
    let mut warnings = Vec::new();
    let top = orders.iter().copied().max().unwrap_or(0);
    check_order(top, max_order, &mut warnings)?;
    if opts.bound_n < 2 {
        return Err(CliError::Usage("--bound-n must be at least 2".into()));
    }
    let spec = resolve_regime(src)?;
    opts.axis = match (axis, spec.kind()) {
        (Some(AxisArg::P), _) | (None, RegimeKind::AlmostMemoryless) => GridAxis::FlipProbability,
        _ => GridAxis::Parameter,
    };
    let points = radius::linear_grid(&grid.start, &grid.stop, grid.steps);
    let scan = radius::bounds_scan(&spec, &points, orders, &opts).map_err(|e| match e {
        RadiusError::Expansion(expansion::ExpansionError::Model(m)) => CliError::Usage(m.to_string()),
        other => compute(other),
    })?;
    let axis_name = match scan.axis {
        GridAxis::Parameter => variable(scan.regime),
        GridAxis::FlipProbability => "p",
    };
    let body = match format {
        Format::Csv => {
            let mut w = Csv::new(&["grid_value", "order", "partial_sum", "lower_bound", "upper_bound", "inside_flag"]);
            for r in &scan.rows {
                w.row([
                    float(r.grid_value),
                    r.order.to_string(),
                    float(r.partial_sum),
                    float(r.lower_bound),
                    float(r.upper_bound),
                    r.inside().to_string(),
                ]);
            }
            w.finish()
        }
        Format::Json => json_body(json!({
            "regime": scan.regime.to_string(),
            "axis": axis_name,
            "bound_n": scan.bound_n,
            "rows": scan.rows.iter().map(|r| json!({
                "grid_value": r.grid_value,
                "order": r.order,
                "partial_sum": r.partial_sum,
                "lower_bound": r.lower_bound,
                "upper_bound": r.upper_bound,
                "inside_flag": r.inside(),
                "position": position_name(r.position),
            })).collect::<Vec<_>>(),
        })),
    };
    Ok(Report { body, warnings })
}

fn sample_cmd(src: &SourceArgs, n: usize, seed: u64, format: Format) -> Result<Report, CliError> {
    let model = resolve_model(src)?;
    let (xs, ys) = model::sample_path(&model, n, seed);
    report(match format {
        Format::Csv => {
            let mut w = Csv::new(&["t", "x", "y"]);
            for (t, (x, y)) in xs.iter().zip(&ys).enumerate() {
                w.row([(t + 1).to_string(), x.to_string(), y.to_string()]);
            }
            w.finish()
        }
        Format::Json => json_body(json!({ "seed": seed, "n": n, "x": xs, "y": ys })),
    })
}
