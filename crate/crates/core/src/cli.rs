//! Command-line front end.
//!
//! Settings are resolved as defaults < `--config` file < flags, and the
//! resolved `key = value` set is written next to the results so that
//! `--config <out>/resolved_config.txt` reproduces the run.

use std::collections::{BTreeMap, HashMap};
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::dataio::{
    load_csv, parse_key_values, split_list, write_curves, ColumnSpec, CurveTable, LoadedData,
};
use crate::dataset::EvalPoint;
use crate::driver::{fit_grid, quantiles_from_curve, Estimator, QuantileFlag, Recipe, ThresholdGrid};
use crate::error::DrError;
use crate::inference::{bootstrap_bands, difference_bands};
use crate::linear::linear_report;
use crate::monotone::{monotonize, parse_levels, Monotonizer};
use crate::simulation::{run_study, SimEstimator, StudyConfig};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_COMPUTATION: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "ivdr", version, about = "Distribution regression with a continuous endogenous regressor")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Estimate conditional CDF curves, raw and monotonized.
    Fit(RunArgs),
    /// OLS and 2SLS mean regressions with predictions at the evaluation points.
    Linear(RunArgs),
    /// Bootstrap bands for one curve, or for the difference of two estimators.
    Bands(RunArgs),
    /// Monte Carlo study of bias, variance and MSE.
    Simulate(RunArgs),
    /// Conditional quantiles from monotonized curves.
    Quantiles(RunArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Fit(_) => "fit",
            Command::Linear(_) => "linear",
            Command::Bands(_) => "bands",
            Command::Simulate(_) => "simulate",
            Command::Quantiles(_) => "quantiles",
        }
    }

    fn args(&self) -> &RunArgs {
        match self {
            Command::Fit(a) | Command::Linear(a) | Command::Bands(a) | Command::Simulate(a) | Command::Quantiles(a) => a,
        }
    }
}

#[derive(Args, Debug, Default, Clone)]
pub struct RunArgs {
    /// Flat `key = value` file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input CSV with a header row.
    #[arg(long)]
    pub data: Option<String>,
    /// Column spec file, or `mroz` for the built-in wage equation.
    #[arg(long)]
    pub spec: Option<String>,
    /// probit, iv-ml, three-step (comma list or repeated).
    #[arg(long)]
    pub estimator: Vec<String>,
    /// isotonic, rearrange or none.
    #[arg(long)]
    pub monotonize: Option<String>,
    /// Evaluation point, e.g. `educ=12,exper=12` (repeatable).
    #[arg(long)]
    pub at: Vec<String>,
    /// `observed` or `linspace:a:b:m`.
    #[arg(long)]
    pub grid: Option<String>,
    /// Quantile levels `a:b:m`.
    #[arg(long)]
    pub levels: Option<String>,
    /// Bootstrap replicates.
    #[arg(long = "B")]
    pub b: Option<String>,
    /// Confidence level of the bands.
    #[arg(long)]
    pub level: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    /// Monte Carlo replications.
    #[arg(long)]
    pub reps: Option<String>,
    /// Monte Carlo sample sizes, comma separated.
    #[arg(long)]
    pub sizes: Option<String>,
    /// Error correlation of the simulated design.
    #[arg(long)]
    pub rho: Option<String>,
    /// Censoring point of the simulated outcome.
    #[arg(long)]
    pub censor: Option<String>,
    /// Simulation evaluation points `x:y2`, separated by `;`.
    #[arg(long)]
    pub scenarios: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<String>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Dr(DrError),
}

impl From<DrError> for CliError {
    fn from(e: DrError) -> Self {
        match e {
            DrError::InvalidInput(m) => CliError::Usage(m),
            other => CliError::Dr(other),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Dr(
                DrError::Io(_) | DrError::MissingColumn(_) | DrError::EmptyAfterFiltering | DrError::NonNumeric { .. },
            ) => EXIT_DATA,
            CliError::Dr(_) => EXIT_COMPUTATION,
        }
    }

    pub fn message(&self) -> String {
        match self {
            CliError::Usage(m) => format!("usage error: {m}"),
            CliError::Dr(e) => format!("error: {e}"),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

/// Keys each command reads, in output order.
fn keys_for(command: &str) -> &'static [&'static str] {
    match command {
        "fit" | "quantiles" => &["data", "spec", "estimator", "monotonize", "at", "grid", "levels", "out"],
        "linear" => &["data", "spec", "at", "out"],
        "bands" => &["data", "spec", "estimator", "monotonize", "at", "grid", "levels", "B", "level", "seed", "out"],
        "simulate" => &[
            "estimator", "monotonize", "sizes", "reps", "rho", "censor", "scenarios", "grid", "levels", "seed", "out",
        ],
        _ => &[],
    }
}

fn defaults(command: &str) -> BTreeMap<String, String> {
    let mut d: BTreeMap<String, String> = [
        ("spec", "mroz"),
        ("monotonize", "isotonic"),
        ("grid", "observed"),
        ("levels", "0.01:0.99:99"),
        ("B", "200"),
        ("level", "0.90"),
        ("seed", "1"),
        ("out", "ivdr-out"),
        ("estimator", "probit,three-step"),
        ("reps", "200"),
        ("sizes", "100,200,400"),
        ("rho", "0.7"),
        ("censor", "2"),
        ("scenarios", "1:1;2:2"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect();
    match command {
        "bands" => {
            d.insert("estimator".into(), "three-step,probit".into());
        }
        "simulate" => {
            d.insert("estimator".into(), "three-step,probit".into());
            d.insert("monotonize".into(), "rearrange,isotonic".into());
            d.insert("grid".into(), "linspace:1:5:50".into());
        }
        _ => {}
    }
    d
}

/// Merges defaults, the config file and flags into one key-value set.
pub fn resolve_settings(command: &Command) -> CliResult<BTreeMap<String, String>> {
    let name = command.name();
    let args = command.args();
    let mut map = defaults(name);
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Dr(DrError::Io(format!("{}: {e}", path.display()))))?;
        for (k, v) in parse_key_values(&text)? {
            if !keys_for(name).contains(&k.as_str()) {
                return usage(format!("config key '{k}' does not apply to '{name}'"));
            }
            map.insert(k, v);
        }
    }
    let flags: [(&str, Option<String>); 15] = [
        ("data", args.data.clone()),
        ("spec", args.spec.clone()),
        ("estimator", (!args.estimator.is_empty()).then(|| args.estimator.join(","))),
        ("monotonize", args.monotonize.clone()),
        ("at", (!args.at.is_empty()).then(|| args.at.join(";"))),
        ("grid", args.grid.clone()),
        ("levels", args.levels.clone()),
        ("B", args.b.clone()),
        ("level", args.level.clone()),
        ("seed", args.seed.clone()),
        ("reps", args.reps.clone()),
        ("sizes", args.sizes.clone()),
        ("rho", args.rho.clone()),
        ("censor", args.censor.clone()),
        ("scenarios", args.scenarios.clone()),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            if !keys_for(name).contains(&k) {
                return usage(format!("--{k} does not apply to '{name}'"));
            }
            map.insert(k.to_string(), v);
        }
    }
    if let Some(o) = &args.out {
        map.insert("out".into(), o.clone());
    }
    map.retain(|k, _| keys_for(name).contains(&k.as_str()));
    Ok(map)
}

fn parse_num<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> CliResult<T> {
    let v = map.get(key).ok_or_else(|| CliError::Usage(format!("missing setting '{key}'")))?;
    v.trim().parse().map_err(|_| CliError::Usage(format!("invalid value '{v}' for '{key}'")))
}

fn parse_grid(spec: &str, outcomes: Option<&[f64]>) -> CliResult<ThresholdGrid> {
    if spec.trim() == "observed" {
        return match outcomes {
            Some(y) => Ok(ThresholdGrid::observed(y)?),
            None => usage("grid 'observed' needs data"),
        };
    }
    let parts: Vec<&str> = spec.trim().strip_prefix("linspace:").map(|r| r.split(':').collect()).unwrap_or_default();
    if parts.len() != 3 {
        return usage(format!("grid must be 'observed' or 'linspace:a:b:m', got '{spec}'"));
    }
    let bad = || CliError::Usage(format!("invalid grid '{spec}'"));
    let a: f64 = parts[0].parse().map_err(|_| bad())?;
    let b: f64 = parts[1].parse().map_err(|_| bad())?;
    let m: usize = parts[2].parse().map_err(|_| bad())?;
    Ok(ThresholdGrid::linspace(a, b, m)?)
}

fn parse_estimators(s: &str) -> CliResult<Vec<Estimator>> {
    let list: Vec<Estimator> = split_list(s).iter().map(|e| e.parse()).collect::<Result<_, _>>()?;
    if list.is_empty() {
        return usage("no estimator given");
    }
    Ok(list)
}

fn parse_monotonizers(s: &str) -> CliResult<Vec<Monotonizer>> {
    let list: Vec<Monotonizer> = split_list(s).iter().map(|e| e.parse()).collect::<Result<_, _>>()?;
    if list.is_empty() {
        return usage("no monotonizer given");
    }
    Ok(list)
}

fn parse_at(item: &str) -> CliResult<HashMap<String, f64>> {
    let mut out = HashMap::new();
    for pair in split_list(item) {
        let Some((k, v)) = pair.split_once('=') else {
            return usage(format!("evaluation point entries look like name=value, got '{pair}'"));
        };
        let v: f64 = v.trim().parse().map_err(|_| CliError::Usage(format!("'{v}' is not a number")))?;
        out.insert(k.trim().to_string(), v);
    }
    Ok(out)
}

/// Smallest observed value with empirical CDF at least `p`.
fn empirical_quantile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let idx = ((p * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1;
    v[idx]
}

fn load(map: &BTreeMap<String, String>) -> CliResult<(ColumnSpec, LoadedData)> {
    let spec = match map.get("spec").map(String::as_str) {
        None | Some("mroz") => ColumnSpec::mroz(),
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Dr(DrError::Io(format!("{path}: {e}"))))?;
            ColumnSpec::parse(&text)?
        }
    };
    let Some(data) = map.get("data") else {
        return usage("--data is required");
    };
    let loaded = load_csv(Path::new(data), &spec)?;
    log::info!(
        "loaded {}: {} rows in, {} kept, {} dropped for missing values, {} filtered",
        data,
        loaded.report.rows_in,
        loaded.report.rows_kept,
        loaded.report.rows_dropped,
        loaded.report.rows_filtered
    );
    Ok((spec, loaded))
}

/// Named evaluation points; defaults to the 10/50/90% empirical quantiles
/// of each regressor source column, written back into `map`.
fn eval_points(
    map: &mut BTreeMap<String, String>,
    spec: &ColumnSpec,
    loaded: &LoadedData,
) -> CliResult<Vec<(String, EvalPoint)>> {
    if !map.contains_key("at") {
        let items: Vec<String> = [0.1, 0.5, 0.9]
            .iter()
            .map(|&p| {
                loaded
                    .sources
                    .iter()
                    .map(|(name, col)| format!("{name}={}", empirical_quantile(col, p)))
                    .collect::<Vec<_>>()
                    .join(",")
            })
            .collect();
        map.insert("at".into(), items.join(";"));
    }
    let mut out = Vec::new();
    for (i, item) in map["at"].split(';').map(str::trim).filter(|s| !s.is_empty()).enumerate() {
        let point = spec.eval_point(&parse_at(item)?)?;
        point.check(&loaded.dataset)?;
        out.push((format!("p{}", i + 1), point));
    }
    if out.is_empty() {
        return usage("no evaluation point given");
    }
    Ok(out)
}

fn out_dir(map: &BTreeMap<String, String>) -> CliResult<PathBuf> {
    let dir = PathBuf::from(&map["out"]);
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Dr(DrError::Io(format!("{}: {e}", dir.display()))))?;
    Ok(dir)
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::Dr(DrError::Io(format!("{}: {e}", path.display()))))
}

fn write_resolved(dir: &Path, command: &str, map: &BTreeMap<String, String>) -> CliResult<()> {
    let mut text = format!("# ivdr {command}\n");
    for k in keys_for(command) {
        if let Some(v) = map.get(*k) {
            let _ = writeln!(text, "{k} = {v}");
        }
    }
    write_text(&dir.join("resolved_config.txt"), &text)
}

fn write_points(dir: &Path, spec: &ColumnSpec, points: &[(String, EvalPoint)]) -> CliResult<()> {
    let mut text = format!("point,{}", spec.endogenous);
    for c in &spec.exogenous {
        let _ = write!(text, ",{c}");
    }
    text.push('\n');
    for (name, p) in points {
        let _ = write!(text, "{name},{}", p.y2);
        for v in &p.x {
            let _ = write!(text, ",{v}");
        }
        text.push('\n');
    }
    write_text(&dir.join("points.csv"), &text)
}

fn flag_name(f: QuantileFlag) -> &'static str {
    match f {
        QuantileFlag::Ok => "ok",
        QuantileFlag::BelowRange => "below_range",
        QuantileFlag::LevelOutOfRange => "out_of_range",
    }
}

fn cmd_fit(mut map: BTreeMap<String, String>, write_curves_file: bool) -> CliResult<String> {
    let (spec, loaded) = load(&map)?;
    let data = &loaded.dataset;
    let points = eval_points(&mut map, &spec, &loaded)?;
    let estimators = parse_estimators(&map["estimator"])?;
    let monotonizers = parse_monotonizers(&map["monotonize"])?;
    let grid = parse_grid(&map["grid"], Some(data.outcome()))?;
    let levels = parse_levels(&map["levels"])?;
    let dir = out_dir(&map)?;

    let mut curves = Vec::new();
    let mut quantiles = String::from("name,level,value,flag\n");
    let mut summary = String::new();
    for &est in &estimators {
        let fitted = fit_grid(data, est, &grid)?;
        let failed = fitted.failures().count();
        if failed > 0 {
            log::warn!("{est}: {failed} of {} thresholds failed and were filled from neighbours", grid.len());
        }
        for (pname, point) in &points {
            let raw = fitted.curve_at(point)?;
            curves.push(CurveTable::from_raw(&format!("{est}/raw/{pname}"), &raw));
            for &mono in &monotonizers {
                let m = monotonize(&raw, mono, &levels)?;
                let name = format!("{est}/{mono}/{pname}");
                if mono != Monotonizer::None {
                    let q = quantiles_from_curve(&m, &levels)?;
                    for ((u, v), f) in q.levels.iter().zip(&q.values).zip(&q.flags) {
                        let _ = writeln!(quantiles, "{name},{u},{v},{}", flag_name(*f));
                    }
                    let median = quantiles_from_curve(&m, &[0.5])?.values[0];
                    let _ = writeln!(summary, "{name}: median {median:.4}");
                }
                curves.push(CurveTable::from_monotone(&name, &m));
            }
        }
    }
    if write_curves_file {
        write_curves(&curves, &dir.join("curves.csv"))?;
    }
    write_text(&dir.join("quantiles.csv"), &quantiles)?;
    write_points(&dir, &spec, &points)?;
    let cmd = if write_curves_file { "fit" } else { "quantiles" };
    write_resolved(&dir, cmd, &map)?;
    Ok(summary)
}

fn cmd_linear(mut map: BTreeMap<String, String>) -> CliResult<String> {
    let (spec, loaded) = load(&map)?;
    let points = eval_points(&mut map, &spec, &loaded)?;
    let report = linear_report(&loaded.dataset)?;
    let dir = out_dir(&map)?;
    let mut terms = vec!["intercept".to_string(), spec.endogenous.to_string()];
    terms.extend(spec.exogenous.iter().map(ToString::to_string));
    let mut csv = String::from("section,model,term,estimate,std_error,se_method\n");
    let mut summary = String::new();
    for (model, fit) in [("ols", &report.ols), ("2sls", &report.iv)] {
        let se = fit.std_errors();
        let _ = write!(summary, "{model:>5}:");
        for ((t, c), s) in terms.iter().zip(&fit.coefficients).zip(&se) {
            let _ = writeln!(csv, "coefficient,{model},{t},{c},{s},homoskedastic");
            let _ = write!(summary, " {t}={c:.4} ({s:.4})");
        }
        summary.push('\n');
        for (pname, p) in &points {
            let (v, s) = fit.predict(p);
            let _ = writeln!(csv, "prediction,{model},{pname},{v},{s},delta-method");
            let _ = writeln!(summary, "       E[Y|{pname}] = {v:.4} ({s:.4})");
        }
    }
    let _ = writeln!(csv, "first_stage,ols,F,{},,", report.first_stage_f);
    let _ = writeln!(summary, "first-stage F = {:.2}", report.first_stage_f);
    write_text(&dir.join("linear.csv"), &csv)?;
    write_points(&dir, &spec, &points)?;
    write_resolved(&dir, "linear", &map)?;
    Ok(summary)
}

fn cmd_bands(mut map: BTreeMap<String, String>) -> CliResult<String> {
    let (spec, loaded) = load(&map)?;
    let data = &loaded.dataset;
    let points = eval_points(&mut map, &spec, &loaded)?;
    let estimators = parse_estimators(&map["estimator"])?;
    if estimators.len() > 2 {
        return usage("bands take one estimator (single curve) or two (difference)");
    }
    let monotonizers = parse_monotonizers(&map["monotonize"])?;
    let grid = parse_grid(&map["grid"], Some(data.outcome()))?;
    let levels = parse_levels(&map["levels"])?;
    let b: usize = parse_num(&map, "B")?;
    let level: f64 = parse_num(&map, "level")?;
    let seed: u64 = parse_num(&map, "seed")?;
    let dir = out_dir(&map)?;

    let mut tables = Vec::new();
    let mut summary = String::new();
    for &mono in &monotonizers {
        for (pname, point) in &points {
            let recipe = |estimator| Recipe {
                estimator,
                monotonizer: mono,
                grid: grid.clone(),
                point: point.clone(),
                levels: levels.clone(),
            };
            let (name, band) = match estimators.as_slice() {
                [a] => (format!("{a}/{mono}/{pname}"), bootstrap_bands(data, &recipe(*a), b, level, seed)?),
                [a, c] => (
                    format!("{a}-minus-{c}/{mono}/{pname}"),
                    difference_bands(data, &recipe(*a), &recipe(*c), b, level, seed)?,
                ),
                _ => unreachable!("checked above"),
            };
            let rejected = band.rejected.iter().filter(|&&r| r).count();
            let _ = writeln!(
                summary,
                "{name}: {} of {} replicates used, zero outside the band at {rejected} of {} thresholds",
                band.replicates,
                band.requested,
                grid.len()
            );
            tables.push(CurveTable::from_band(&name, &band));
        }
    }
    write_curves(&tables, &dir.join("bands.csv"))?;
    write_points(&dir, &spec, &points)?;
    write_resolved(&dir, "bands", &map)?;
    Ok(summary)
}

fn cmd_simulate(map: BTreeMap<String, String>) -> CliResult<String> {
    let estimators: Vec<SimEstimator> = split_list(&map["estimator"])
        .iter()
        .map(|e| if *e == "oracle" { Ok(SimEstimator::Oracle) } else { e.parse().map(SimEstimator::Dr) })
        .collect::<Result<_, DrError>>()?;
    let sizes: Vec<usize> = split_list(&map["sizes"])
        .iter()
        .map(|s| s.parse().map_err(|_| CliError::Usage(format!("invalid sample size '{s}'"))))
        .collect::<CliResult<_>>()?;
    let mut scenarios = Vec::new();
    for item in map["scenarios"].split(';').map(str::trim).filter(|s| !s.is_empty()) {
        let (x, y2) = item
            .split_once(':')
            .ok_or_else(|| CliError::Usage(format!("scenario must be x:y2, got '{item}'")))?;
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| CliError::Usage(format!("'{s}' is not a number")));
        scenarios.push((num(x)?, num(y2)?));
    }
    let censor_text = map["censor"].trim();
    let censor_at = if censor_text == "none" { f64::NEG_INFINITY } else { parse_num(&map, "censor")? };
    let config = StudyConfig {
        scenarios,
        sample_sizes: sizes,
        replications: parse_num(&map, "reps")?,
        grid: parse_grid(&map["grid"], None)?,
        levels: parse_levels(&map["levels"])?,
        estimators,
        monotonizers: parse_monotonizers(&map["monotonize"])?,
        rho: parse_num(&map, "rho")?,
        censor_at,
        seed: parse_num(&map, "seed")?,
    };
    let report = run_study(&config)?;
    let dir = out_dir(&map)?;
    report.save(&dir.join("report.csv"))?;
    write_resolved(&dir, "simulate", &map)?;
    let mut summary = String::new();
    for c in &report.cells {
        let _ = writeln!(
            summary,
            "{:>10} {:>9} n={:<5} x={} y2={}  bias2={:.4} var={:.4} mse={:.4}",
            c.estimator.name(),
            c.monotonizer.name(),
            c.n,
            c.x,
            c.y2,
            c.avg_bias_sq,
            c.avg_variance,
            c.avg_mse
        );
    }
    Ok(summary)
}

/// Runs a parsed command; returns the summary printed on success.
pub fn run(cli: &Cli) -> CliResult<String> {
    let map = resolve_settings(&cli.command)?;
    match &cli.command {
        Command::Fit(_) => cmd_fit(map, true),
        Command::Quantiles(_) => cmd_fit(map, false),
        Command::Linear(_) => cmd_linear(map),
        Command::Bands(_) => cmd_bands(map),
        Command::Simulate(_) => cmd_simulate(map),
    }
}

/// Parses `args` (program name first), runs, prints, and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return if code == 0 { 0 } else { EXIT_USAGE };
        }
    };
    match run(&cli) {
        Ok(summary) => {
            print!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("{}", e.message());
            e.exit_code()
        }
    }
}
