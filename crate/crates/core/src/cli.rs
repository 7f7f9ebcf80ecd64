//! Command-line front end and file formats.
//!
//! Points are read from CSV (`x,y` or `x,y,mark`), covariates from ESRI
//! ASCII grids whose values sit at the cell centres, and results are written
//! as JSON. Flags may also come from a `key = value` config file given with
//! `--config`; flags on the command line take precedence.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{Error, ErrorClass, Result};
use crate::experiments::{run_study, write_atomic, StudyConfig, StudyKind, TestVariant, VarianceKind};
use crate::geometry::{MarkedPointPattern, Marks, Point, Window};
use crate::procgen::{generate_model_with, ModelId, ModelSpec, SceneOptions};
use crate::randfield::{CovariateField, GridGeometry, DEFAULT_GRID_CELLS};
use crate::shifttest::{
    bonferroni_combine, multicovariate_pc_test, multitype_pmc_test, run_shift_test, schlather_test, Correction,
    EnvelopeResult, ShiftDistribution, TestConfig, TestResult, VectorTestResult, DEFAULT_N_MIN, DEFAULT_N_SHIFTS,
    DEFAULT_SCHLATHER_SIMS,
};
use crate::stats::{SchlatherSettings, StatisticKind};

/// Environment variable holding the default worker count for studies.
pub const WORKERS_ENV: &str = "MARKSHIFT_WORKERS";
const NODATA_OUT: f64 = -9999.0;

fn parse_err(path: &Path, line: u64, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.display().to_string(), line, msg: msg.into() }
}

/// How the third CSV column is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum MarkMode {
    /// Numeric if every mark parses as a number, categorical otherwise.
    #[default]
    Auto,
    Numeric,
    Categorical,
}

/// Window given on the command line.
#[derive(Debug, Clone, PartialEq)]
pub enum WindowArg {
    /// Bounding box of the points.
    BoundingBox,
    Rectangle(f64, f64, f64, f64),
    /// Polygon vertices read from a CSV file with `x,y` columns.
    Polygon(PathBuf),
}

impl std::str::FromStr for WindowArg {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "bbox" {
            return Ok(WindowArg::BoundingBox);
        }
        if let Some(p) = s.strip_prefix("poly:") {
            return Ok(WindowArg::Polygon(PathBuf::from(p)));
        }
        let v: Vec<f64> = s
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Config(format!("window must be `bbox`, `x0,x1,y0,y1` or `poly:<file>`, got {s:?}")))?;
        match v[..] {
            [x0, x1, y0, y1] => Ok(WindowArg::Rectangle(x0, x1, y0, y1)),
            _ => Err(Error::Config(format!("window needs four numbers x0,x1,y0,y1, got {s:?}"))),
        }
    }
}

impl WindowArg {
    fn resolve(&self, points: &[Point]) -> Result<Window> {
        match self {
            WindowArg::Rectangle(x0, x1, y0, y1) => Window::rectangle(*x0, *x1, *y0, *y1),
            WindowArg::Polygon(path) => Window::polygon(read_xy_rows(path)?.into_iter().map(|(p, _, _)| p).collect()),
            WindowArg::BoundingBox => {
                if points.is_empty() {
                    return Err(Error::InvalidWindow("bounding box of an empty pattern".into()));
                }
                let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
                for p in points {
                    x0 = x0.min(p.x);
                    x1 = x1.max(p.x);
                    y0 = y0.min(p.y);
                    y1 = y1.max(p.y);
                }
                eprintln!("warning: using the bounding box [{x0}, {x1}] x [{y0}, {y1}] of the points as window");
                Window::rectangle(x0, x1, y0, y1)
            }
        }
    }
}

/// Rows of a CSV file with numeric `x,y` columns and an optional third
/// column, with their line numbers.
fn read_xy_rows(path: &Path) -> Result<Vec<(Point, Option<String>, u64)>> {
    let text = fs::read_to_string(path)?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| parse_err(path, 1, e.to_string()))?.clone();
    let names: Vec<String> = headers.iter().map(|h| h.to_ascii_lowercase()).collect();
    if names.len() < 2 || names[0] != "x" || names[1] != "y" || names.len() > 3 {
        return Err(parse_err(path, 1, format!("expected header `x,y` or `x,y,mark`, got `{}`", names.join(","))));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != names.len() {
            return Err(parse_err(path, line, format!("expected {} fields, got {}", names.len(), rec.len())));
        }
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(path, line, format!("`{}` is not a finite number", &rec[i])))
        };
        let p = Point::new(num(0)?, num(1)?);
        out.push((p, rec.get(2).map(str::to_string), line));
    }
    Ok(out)
}

/// Reads a point pattern from CSV.
pub fn parse_points(path: &Path, window: &WindowArg, marks: MarkMode) -> Result<MarkedPointPattern> {
    let rows = read_xy_rows(path)?;
    let points: Vec<Point> = rows.iter().map(|r| r.0).collect();
    let window = window.resolve(&points)?;
    if let Some((p, _, line)) = rows.iter().find(|(p, _, _)| !window.contains(*p)) {
        return Err(Error::Validation(format!(
            "{}: line {line}: point ({}, {}) lies outside the window",
            path.display(),
            p.x,
            p.y
        )));
    }
    let labels: Option<Vec<String>> = rows.iter().map(|r| r.1.clone()).collect();
    let Some(labels) = labels else {
        return MarkedPointPattern::unmarked(points, window);
    };
    let numeric: Option<Vec<f64>> = labels.iter().map(|l| l.parse::<f64>().ok().filter(|v| v.is_finite())).collect();
    match (marks, numeric) {
        (MarkMode::Categorical, _) | (MarkMode::Auto, None) => MarkedPointPattern::categorical(points, &labels, window),
        (_, Some(values)) => MarkedPointPattern::new(points, Marks::Numeric { values }, window),
        (MarkMode::Numeric, None) => {
            let (i, l) = labels.iter().enumerate().find(|(_, l)| !l.parse::<f64>().is_ok_and(f64::is_finite)).expect("a bad mark");
            Err(parse_err(path, rows[i].2, format!("mark `{l}` is not a number")))
        }
    }
}

/// Writes a pattern as CSV; numbers use the shortest representation that
/// reads back to the same value.
pub fn write_points(pattern: &MarkedPointPattern, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    match pattern.marks() {
        Marks::None => w.write_record(["x", "y"]).map_err(io)?,
        _ => w.write_record(["x", "y", "mark"]).map_err(io)?,
    }
    for (i, p) in pattern.points().iter().enumerate() {
        let (x, y) = (p.x.to_string(), p.y.to_string());
        match pattern.marks() {
            Marks::None => w.write_record([x, y]).map_err(io)?,
            Marks::Numeric { values } => w.write_record([x, y, values[i].to_string()]).map_err(io)?,
            Marks::Categorical { levels, names } => {
                w.write_record([x, y, names[levels[i] as usize - 1].clone()]).map_err(io)?
            }
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(path, &bytes)
}

/// Reads an ESRI ASCII grid. Values are placed at the cell centres. With a
/// window, no-data cells whose centre lies inside it are rejected;
/// otherwise the window is the grid extent.
pub fn parse_grid(path: &Path, window: Option<&Window>) -> Result<CovariateField> {
    let text = fs::read_to_string(path)?;
    let mut header: [Option<f64>; 6] = [None; 6];
    const KEYS: [&str; 6] = ["ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value"];
    let mut lines = text.lines().enumerate().peekable();
    while let Some((i, line)) = lines.peek().copied() {
        let mut parts = line.split_whitespace();
        let Some(key) = parts.next() else {
            lines.next();
            continue;
        };
        let Some(k) = KEYS.iter().position(|k| k.eq_ignore_ascii_case(key)) else { break };
        let value = parts
            .next()
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or_else(|| parse_err(path, i as u64 + 1, format!("header `{key}` needs a numeric value")))?;
        header[k] = Some(value);
        lines.next();
    }
    let first_data_line = lines.peek().map(|(i, _)| *i as u64 + 1).unwrap_or(0);
    for (k, name) in KEYS.iter().enumerate().take(5) {
        if header[k].is_none() {
            return Err(parse_err(path, first_data_line, format!("missing header {}", name.to_uppercase())));
        }
    }
    let count = |v: f64, name: &str| -> Result<usize> {
        if v >= 1.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(parse_err(path, 1, format!("{name} must be a positive integer, got {v}")))
        }
    };
    let ncols = count(header[0].unwrap(), "NCOLS")?;
    let nrows = count(header[1].unwrap(), "NROWS")?;
    let geometry = GridGeometry::new(header[2].unwrap(), header[3].unwrap(), header[4].unwrap(), ncols, nrows)?;
    let nodata = header[5];

    let mut values = Vec::with_capacity(ncols * nrows);
    for (i, line) in lines {
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| parse_err(path, i as u64 + 1, format!("`{tok}` is not a number")))?;
            values.push(if Some(v) == nodata || v.is_nan() { f64::NAN } else { v });
        }
    }
    if values.len() != ncols * nrows {
        return Err(parse_err(
            path,
            first_data_line,
            format!("expected {} values ({nrows} rows of {ncols}), got {}", ncols * nrows, values.len()),
        ));
    }
    let window = match window {
        Some(w) => {
            for r in 0..nrows {
                for c in 0..ncols {
                    let centre = geometry.cell_center(r, c);
                    if values[r * ncols + c].is_nan() && w.contains(centre) {
                        return Err(Error::Validation(format!(
                            "{}: no-data cell (row {}, column {}) inside the window",
                            path.display(),
                            r + 1,
                            c + 1
                        )));
                    }
                }
            }
            w.clone()
        }
        None => Window::rectangle(geometry.x0, geometry.x1(), geometry.y0, geometry.y1())?,
    };
    CovariateField::new(geometry, values, window)
}

/// Writes a field as an ESRI ASCII grid, north row first.
pub fn write_grid(field: &CovariateField, path: &Path) -> Result<()> {
    let g = field.geometry();
    let mut s = String::new();
    let _ = writeln!(s, "NCOLS {}", g.ncols);
    let _ = writeln!(s, "NROWS {}", g.nrows);
    let _ = writeln!(s, "XLLCORNER {}", g.x0);
    let _ = writeln!(s, "YLLCORNER {}", g.y0);
    let _ = writeln!(s, "CELLSIZE {}", g.cell);
    let _ = writeln!(s, "NODATA_VALUE {NODATA_OUT}");
    for r in 0..g.nrows {
        let row: Vec<String> = (0..g.ncols)
            .map(|c| {
                let v = field.get(r, c);
                if v.is_nan() { NODATA_OUT.to_string() } else { v.to_string() }
            })
            .collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    write_atomic(path, s.as_bytes())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetainedSummary {
    pub min: usize,
    pub max: usize,
    pub mean: f64,
}

impl RetainedSummary {
    fn of(n: &[usize]) -> Self {
        RetainedSummary {
            min: n.iter().copied().min().unwrap_or(0),
            max: n.iter().copied().max().unwrap_or(0),
            mean: n.iter().sum::<usize>() as f64 / n.len().max(1) as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Statistic {
    Scalar(f64),
    Vector(Vec<f64>),
}

/// JSON result of `test`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub test: String,
    pub statistic: StatisticKind,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub correction: Option<Correction>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub shift: Option<ShiftDistribution>,
    pub n_shifts: usize,
    pub seed: u64,
    pub t0: Statistic,
    pub p_value: f64,
    pub n_retained_summary: RetainedSummary,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub replicates: Option<Statistic>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub envelope: Option<EnvelopeResult>,
}

impl ResultFile {
    pub fn from_scalar(test: &str, r: &TestResult, verbose: bool) -> Self {
        ResultFile {
            test: test.to_string(),
            statistic: r.statistic,
            correction: r.correction,
            shift: r.shift,
            n_shifts: r.n_shifts,
            seed: r.seed,
            t0: Statistic::Scalar(r.t0),
            p_value: r.p_value,
            n_retained_summary: RetainedSummary::of(&r.retained),
            replicates: verbose.then(|| Statistic::Vector(r.replicates.clone())),
            envelope: None,
        }
    }

    pub fn from_vector(test: &str, r: &VectorTestResult, verbose: bool) -> Self {
        ResultFile {
            test: test.to_string(),
            statistic: r.statistic,
            correction: Some(r.correction),
            shift: Some(r.shift),
            n_shifts: r.n_shifts,
            seed: r.seed,
            t0: Statistic::Vector(r.envelope.t0.clone()),
            p_value: r.envelope.p_value,
            n_retained_summary: RetainedSummary::of(&r.retained),
            replicates: verbose.then(|| Statistic::Vector(r.replicates.iter().flatten().copied().collect())),
            envelope: Some(r.envelope.clone()),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

#[derive(Parser, Debug)]
#[command(name = "markshift", version, about = "Random shift tests for marked point patterns and covariates")]
struct Cli {
    /// `key = value` file supplying defaults for any flag.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Test a pattern against covariates or its own marks.
    Test {
        #[command(subcommand)]
        kind: TestKind,
    },
    /// Simulate a scene from one of the generative models.
    Simulate {
        #[command(subcommand)]
        what: SimulateKind,
    },
    /// Run a simulation study.
    Study {
        #[arg(value_enum, value_name = "KIND")]
        study: StudyArg,
        #[command(flatten)]
        opts: StudyOpts,
    },
    /// Combine p-values of several tests.
    Combine {
        #[arg(long, required = true)]
        bonferroni: bool,
        #[arg(required = true, num_args = 1..)]
        p_values: Vec<f64>,
    },
}

#[derive(Subcommand, Debug)]
enum TestKind {
    /// Points against covariate(s); several grids give a joint envelope test.
    Pc(ShiftOpts),
    /// Marked points against a covariate; categorical marks give the multitype envelope test.
    Pmc(ShiftOpts),
    /// Points against their numeric marks (Gaussian simulation test).
    Pm(PmOpts),
}

#[derive(Args, Debug)]
struct CommonTestOpts {
    #[arg(long)]
    points: PathBuf,
    /// `bbox`, `x0,x1,y0,y1` or `poly:<file>`.
    #[arg(long)]
    window: String,
    #[arg(long, value_enum, default_value_t = MarkMode::Auto)]
    marks: MarkMode,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Include replicate statistics in the result file.
    #[arg(long)]
    verbose: bool,
}

#[derive(Args, Debug)]
struct ShiftOpts {
    #[command(flatten)]
    common: CommonTestOpts,
    #[arg(long = "grid", alias = "grids", required = true, num_args = 1.., value_delimiter = ',')]
    grids: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = CorrectionArg::Variance)]
    correction: CorrectionArg,
    #[arg(long, value_enum)]
    stat: Option<StatArg>,
    #[arg(long, default_value_t = DEFAULT_N_SHIFTS)]
    nshifts: usize,
    /// Shift vectors uniform on this disc instead of the default.
    #[arg(long)]
    shift_radius: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_N_MIN)]
    n_min: usize,
}

#[derive(Args, Debug)]
struct PmOpts {
    #[command(flatten)]
    common: CommonTestOpts,
    #[arg(long, default_value_t = DEFAULT_SCHLATHER_SIMS)]
    nsims: usize,
    /// Largest lag; defaults to a quarter of the window's shorter side.
    #[arg(long)]
    t_max: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum SimulateKind {
    Model {
        model: String,
        #[arg(long, default_value_t = 0.0)]
        alpha: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Side of the square window `[0, side]^2`.
        #[arg(long, default_value_t = 1.0)]
        side: f64,
        #[arg(long, default_value_t = DEFAULT_GRID_CELLS)]
        cells: usize,
        #[arg(long)]
        out_points: Option<PathBuf>,
        #[arg(long)]
        out_grid: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct StudyOpts {
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    shifts: Option<usize>,
    #[arg(long)]
    level: Option<f64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    alphas: Vec<f64>,
    /// Test variants by kebab-case name, e.g. `pmc-variance-ken`.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    tests: Vec<String>,
    /// 5000 replications and 999 shifts.
    #[arg(long)]
    full: bool,
    /// Directory holding finished cells; reruns resume from it.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// CSV output; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Variance study kinds.
    #[arg(long, value_enum, num_args = 1.., value_delimiter = ',')]
    kind: Vec<VarianceArg>,
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    sides: Vec<f64>,
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    scales: Vec<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StudyArg {
    Overall,
    Preferential,
    Marking,
    VarianceOrder,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum VarianceArg {
    Pc,
    PmcEqual,
    PmcUnequal,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CorrectionArg {
    Torus,
    Variance,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StatArg {
    Mean,
    Cov,
    Pearson,
    Kendall,
}

/// Flags from a config file, placed before the user's flags; keys the user
/// already gave are dropped.
fn merge_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut path = None;
    let mut i = 0;
    while i < args.len() {
        let a = args[i].to_string_lossy();
        if a == "--config" {
            path = args.get(i + 1).map(PathBuf::from);
            break;
        }
        if let Some(p) = a.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
            break;
        }
        i += 1;
    }
    let Some(path) = path else { return Ok(args) };
    let text = fs::read_to_string(&path)?;
    let given: Vec<String> = args
        .iter()
        .filter_map(|a| a.to_str())
        .filter_map(|a| a.strip_prefix("--"))
        .map(|a| a.split('=').next().unwrap_or(a).to_string())
        .collect();
    let mut extra: Vec<OsString> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_err(&path, n as u64 + 1, "expected `key = value`"))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if key == "config" || given.contains(&key) {
            continue;
        }
        match value {
            "true" => extra.push(format!("--{key}").into()),
            "false" => {}
            v => {
                extra.push(format!("--{key}").into());
                extra.push(v.into());
            }
        }
    }
    // flags go after the subcommand words
    let at = args.iter().skip(1).position(|a| a.to_string_lossy().starts_with('-')).map_or(args.len(), |p| p + 1);
    let mut merged = args[..at].to_vec();
    merged.extend(extra);
    merged.extend_from_slice(&args[at..]);
    Ok(merged)
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run_test(kind: TestKind) -> Result<()> {
    match kind {
        TestKind::Pc(o) => shift_test("pc", o),
        TestKind::Pmc(o) => shift_test("pmc", o),
        TestKind::Pm(o) => {
            let c = &o.common;
            let pattern = parse_points(&c.points, &c.window.parse()?, MarkMode::Numeric)?;
            let settings = SchlatherSettings { t_max: o.t_max, ..Default::default() };
            let (r, _) = schlather_test(&pattern, o.nsims, c.seed, &settings)?;
            emit(&ResultFile::from_scalar("pm", &r, c.verbose).to_json()?, c.out.as_deref())
        }
    }
}

fn shift_test(test: &str, o: ShiftOpts) -> Result<()> {
    let c = &o.common;
    let pattern = parse_points(&c.points, &c.window.parse()?, c.marks)?;
    let window = pattern.window().clone();
    let fields: Vec<CovariateField> = o.grids.iter().map(|g| parse_grid(g, Some(&window))).collect::<Result<_>>()?;
    let correction = match o.correction {
        CorrectionArg::Torus => Correction::Torus,
        CorrectionArg::Variance => Correction::Variance,
    };
    let statistic = match (test, o.stat) {
        ("pc", None | Some(StatArg::Mean)) => StatisticKind::MeanAtPoints,
        ("pc", Some(s)) => return Err(Error::Config(format!("test pc uses the mean statistic, not {s:?}"))),
        (_, _) if pattern.n_levels().is_some() => StatisticKind::MultitypeMeanDiffs,
        (_, None | Some(StatArg::Kendall)) => StatisticKind::Kendall,
        (_, Some(StatArg::Cov)) => StatisticKind::Covariance,
        (_, Some(StatArg::Pearson)) => StatisticKind::Pearson,
        (_, Some(StatArg::Mean)) => return Err(Error::Config("test pmc needs cov, pearson or kendall".into())),
    };
    let mut cfg = TestConfig::new(statistic, correction, c.seed).with_shifts(o.nshifts);
    cfg.n_min = o.n_min;
    cfg.shift = o.shift_radius.map(|radius| ShiftDistribution::UniformOnDisc { radius });
    let result = if statistic == StatisticKind::MultitypeMeanDiffs {
        if fields.len() != 1 {
            return Err(Error::Config("the multitype test takes exactly one grid".into()));
        }
        ResultFile::from_vector(test, &multitype_pmc_test(&pattern, &fields[0], &cfg)?, c.verbose)
    } else if fields.len() > 1 {
        if test != "pc" {
            return Err(Error::Config("several grids are only supported by test pc".into()));
        }
        cfg.statistic = StatisticKind::MulticovariateMeans;
        let refs: Vec<&CovariateField> = fields.iter().collect();
        ResultFile::from_vector(test, &multicovariate_pc_test(&pattern, &refs, &cfg)?, c.verbose)
    } else {
        ResultFile::from_scalar(test, &run_shift_test(&pattern, &fields[0], &cfg)?, c.verbose)
    };
    emit(&result.to_json()?, c.out.as_deref())
}

fn run_simulate(what: SimulateKind) -> Result<()> {
    let SimulateKind::Model { model, alpha, seed, side, cells, out_points, out_grid } = what;
    let id: ModelId = model.parse()?;
    let spec = ModelSpec::new(id, alpha, seed)?;
    let opts = SceneOptions { window: Window::square(side)?, grid_cells: cells };
    let scene = generate_model_with(&spec, &opts)?;
    if let Some(p) = &out_points {
        write_points(&scene.pattern, p)?;
    }
    if let Some(p) = &out_grid {
        write_grid(&scene.covariate, p)?;
    }
    let summary = serde_json::json!({
        "model": id.to_string(),
        "alpha": alpha,
        "seed": seed,
        "points": scene.pattern.len(),
        "structure": scene.truth.to_string(),
    });
    println!("{summary}");
    Ok(())
}

fn run_study_cmd(kind: StudyArg, o: StudyOpts) -> Result<()> {
    let kind = match kind {
        StudyArg::Overall => StudyKind::Overall,
        StudyArg::Preferential => StudyKind::Preferential,
        StudyArg::Marking => StudyKind::Marking,
        StudyArg::VarianceOrder => StudyKind::VarianceOrder,
    };
    let mut cfg = if o.full { StudyConfig::full(kind, o.seed) } else { StudyConfig::desk(kind, o.seed) };
    if let Some(r) = o.reps {
        cfg.n_reps = r;
    }
    if let Some(s) = o.shifts {
        cfg.n_shifts = s;
    }
    if let Some(l) = o.level {
        cfg.level = l;
    }
    if !o.alphas.is_empty() {
        cfg.alphas = o.alphas;
    }
    if !o.tests.is_empty() {
        cfg.roster = Some(o.tests.iter().map(|t| t.parse()).collect::<Result<Vec<TestVariant>>>()?);
    }
    if !o.kind.is_empty() {
        cfg.variance_kinds = o
            .kind
            .iter()
            .map(|k| match k {
                VarianceArg::Pc => VarianceKind::PcMean,
                VarianceArg::PmcEqual => VarianceKind::PmcKendallEqual,
                VarianceArg::PmcUnequal => VarianceKind::PmcKendallUnequal,
            })
            .collect();
    }
    if !o.sides.is_empty() {
        cfg.sides = o.sides;
    }
    if !o.scales.is_empty() {
        cfg.scales = o.scales;
    }
    cfg.workers = match o.workers {
        Some(w) => Some(w),
        None => match std::env::var(WORKERS_ENV) {
            Ok(v) => Some(v.trim().parse().map_err(|_| Error::Config(format!("{WORKERS_ENV}={v:?} is not a count")))?),
            Err(_) => None,
        },
    };
    let run = run_study(&cfg, o.cache.as_deref())?;
    for w in &run.manifest.warnings {
        eprintln!("warning: {w}");
    }
    emit(&run.output.to_csv()?, o.out.as_deref())?;
    if let Some(m) = &o.manifest {
        write_atomic(m, &serde_json::to_vec_pretty(&run.manifest)?)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Test { kind } => run_test(kind),
        Command::Simulate { what } => run_simulate(what),
        Command::Study { study, opts } => run_study_cmd(study, opts),
        Command::Combine { bonferroni: _, p_values } => {
            println!("{}", bonferroni_combine(&p_values)?);
            Ok(())
        }
    }
}

/// Exit code for an error: 1 usage, 2 data, 3 numeric failure.
pub fn exit_code(e: &Error) -> i32 {
    match e.class() {
        ErrorClass::Usage => 1,
        ErrorClass::Data => 2,
        ErrorClass::Numeric => 3,
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Errors are reported on one line as `error[<code>]: ...`.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let report = |e: &Error| {
        let msg = e.to_string().replace('\n', " ");
        eprintln!("error[{}]: {msg}", e.code());
        exit_code(e)
    };
    let args = match merge_config(args) {
        Ok(a) => a,
        Err(e) => return report(&e),
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error[usage]: {first}");
            return 1;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => report(&e),
    }
}
