//! Command-line front end. Every run is described by a [`RunConfig`] that
//! prints as `key = value` lines; the same text is accepted by `--config`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::correlation::{MeasurementFamily, Normalization};
use crate::error::Error;
use crate::inequality::{analytic_fmin, numeric_fmin, BoundMode};
use crate::optimizer::{
    scan, threshold_alpha, RotationMode, ScanVariable, StateChoice, SweepRecord, Task, ThresholdConfig,
    DEFAULT_BOUND_STARTS, DEFAULT_RIGID_STARTS,
};
use crate::sphere::{build_layout, LayoutName};

pub const SEED_ENV: &str = "LEGGETT_LAB_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    Fig3,
    Fig4,
    Fig5,
    Fig6,
}

impl FromStr for Figure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fig3" => Ok(Figure::Fig3),
            "fig4" => Ok(Figure::Fig4),
            "fig5" => Ok(Figure::Fig5),
            "fig6" => Ok(Figure::Fig6),
            other => Err(format!("unknown figure `{other}` (expected fig3, fig4, fig5 or fig6)")),
        }
    }
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Figure::Fig3 => "fig3",
            Figure::Fig4 => "fig4",
            Figure::Fig5 => "fig5",
            Figure::Fig6 => "fig6",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    ScanPhi,
    ScanAlpha,
    Threshold,
    Chsh,
    Bound,
    Reproduce(Figure),
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Command::ScanPhi => f.write_str("scan-phi"),
            Command::ScanAlpha => f.write_str("scan-alpha"),
            Command::Threshold => f.write_str("threshold"),
            Command::Chsh => f.write_str("chsh"),
            Command::Bound => f.write_str("bound"),
            Command::Reproduce(fig) => write!(f, "reproduce {fig}"),
        }
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let mut parts = s.split_whitespace();
        let head = parts.next().unwrap_or("");
        let cmd = match head {
            "scan-phi" => Command::ScanPhi,
            "scan-alpha" => Command::ScanAlpha,
            "threshold" => Command::Threshold,
            "chsh" => Command::Chsh,
            "bound" => Command::Bound,
            "reproduce" => Command::Reproduce(parts.next().unwrap_or("").parse()?),
            other => return Err(format!("unknown command `{other}`")),
        };
        if parts.next().is_some() {
            return Err(format!("trailing text in command `{s}`"));
        }
        Ok(cmd)
    }
}

/// A single value or an index-generated range `lo:hi:step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Grid {
    Value(f64),
    Range { lo: f64, hi: f64, step: f64 },
}

impl Grid {
    /// `lo + i step` for every `i` with `lo + i step < hi + step / 2`.
    pub fn points(&self) -> Vec<f64> {
        match *self {
            Grid::Value(v) => vec![v],
            Grid::Range { lo, hi, step } => {
                let n = ((hi - lo) / step + 0.5).floor().max(0.0) as usize;
                (0..=n)
                    .map(|i| lo + i as f64 * step)
                    .filter(|x| *x < hi + 0.5 * step)
                    .collect()
            }
        }
    }

    pub fn first(&self) -> f64 {
        match *self {
            Grid::Value(v) => v,
            Grid::Range { lo, .. } => lo,
        }
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Grid::Value(v) => write!(f, "{v:?}"),
            Grid::Range { lo, hi, step } => write!(f, "{lo:?}:{hi:?}:{step:?}"),
        }
    }
}

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let num = |t: &str| -> Result<f64, String> {
            let v: f64 = t.trim().parse().map_err(|_| format!("`{t}` is not a number"))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(format!("`{t}` is not finite"))
            }
        };
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            [v] => Ok(Grid::Value(num(v)?)),
            [lo, hi, step] => {
                let (lo, hi, step) = (num(lo)?, num(hi)?, num(step)?);
                if !(step > 0.0) || hi < lo {
                    return Err(format!("range `{s}` needs lo <= hi and step > 0"));
                }
                Ok(Grid::Range { lo, hi, step })
            }
            _ => Err(format!("`{s}` is neither a value nor lo:hi:step")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
    Svg,
}

impl OutputFormat {
    fn extension(&self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
            OutputFormat::Svg => "svg",
        }
    }
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            "svg" => Ok(OutputFormat::Svg),
            other => Err(format!("unknown format `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub state: StateChoice,
    pub family: MeasurementFamily,
    pub layout: LayoutName,
    pub alpha: Grid,
    pub phi: Grid,
    pub bound: BoundMode,
    pub optimize: bool,
    pub rotation: RotationMode,
    pub chsh: bool,
    pub normalization: Normalization,
    pub starts: usize,
    pub rigid_starts: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
}

const KEYS: [&str; 15] = [
    "state",
    "family",
    "layout",
    "alpha",
    "phi",
    "bound",
    "optimize",
    "rotation",
    "chsh",
    "normalization",
    "starts",
    "rigid_starts",
    "seed",
    "out",
    "format",
];

fn parse_bool(v: &str) -> Result<bool, String> {
    match v.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        other => Err(format!("`{other}` is not a boolean")),
    }
}

fn err_string(e: Error) -> String {
    e.to_string()
}

impl RunConfig {
    pub fn defaults(command: Command) -> Self {
        let (alpha, phi) = match command {
            Command::ScanPhi | Command::Bound => (Grid::Value(5.0), Grid::Range { lo: 0.0, hi: 1.5, step: 0.01 }),
            Command::ScanAlpha => (Grid::Range { lo: 0.5, hi: 10.0, step: 0.1 }, Grid::Value(0.25)),
            Command::Threshold => (Grid::Range { lo: 0.5, hi: 10.0, step: 0.25 }, Grid::Value(0.25)),
            Command::Chsh => (
                Grid::Range { lo: 0.1, hi: 10.0, step: 0.1 },
                Grid::Value(std::f64::consts::FRAC_PI_4),
            ),
            Command::Reproduce(_) => (Grid::Value(5.0), Grid::Value(0.25)),
        };
        Self {
            command,
            state: StateChoice::EcsMinus,
            family: MeasurementFamily::PseudoSpin,
            layout: LayoutName::ThreePlusSeven,
            alpha,
            phi,
            bound: BoundMode::StateCorrected,
            optimize: false,
            rotation: RotationMode::Shared,
            chsh: false,
            normalization: Normalization::Gram,
            starts: DEFAULT_BOUND_STARTS,
            rigid_starts: DEFAULT_RIGID_STARTS,
            seed: 0,
            out: None,
            format: OutputFormat::Csv,
        }
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let v = value.trim();
        match key {
            "command" => self.command = v.parse()?,
            "state" => self.state = v.parse().map_err(err_string)?,
            "family" => self.family = v.parse().map_err(err_string)?,
            "layout" => self.layout = v.parse().map_err(err_string)?,
            "alpha" => self.alpha = v.parse()?,
            "phi" => self.phi = v.parse()?,
            "bound" => self.bound = v.parse().map_err(err_string)?,
            "optimize" => self.optimize = parse_bool(v)?,
            "rotation" => {
                self.rotation = v.parse().map_err(err_string)?;
                if self.rotation == RotationMode::None {
                    return Err("rotation must be shared or independent; use optimize = false instead".into());
                }
            }
            "chsh" => self.chsh = parse_bool(v)?,
            "normalization" => {
                self.normalization = match v.to_ascii_lowercase().as_str() {
                    "gram" => Normalization::Gram,
                    "raw" => Normalization::Raw,
                    other => return Err(format!("unknown normalization `{other}`")),
                }
            }
            "starts" => self.starts = parse_count(v)?,
            "rigid_starts" => self.rigid_starts = parse_count(v)?,
            "seed" => self.seed = v.parse().map_err(|_| format!("`{v}` is not a 64-bit seed"))?,
            "out" => self.out = if v.is_empty() { None } else { Some(PathBuf::from(v)) },
            "format" => self.format = v.parse()?,
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    /// Builds a configuration for `command` from ordered `key = value`
    /// assignments; later assignments win. The family defaults to the
    /// natural one for the state unless assigned.
    pub fn from_pairs(command: Command, pairs: &[(String, String)]) -> Result<Self, String> {
        let mut cfg = Self::defaults(command);
        let mut family_set = false;
        let mut phi_set = false;
        for (k, v) in pairs {
            cfg.set(k, v)?;
            family_set |= k == "family";
            phi_set |= k == "phi";
        }
        if !phi_set
            && cfg.layout == LayoutName::ThreePlusSix
            && matches!(cfg.command, Command::ScanAlpha | Command::Threshold)
        {
            cfg.phi = Grid::Value(0.65);
        }
        if !family_set {
            cfg.family = match cfg.state {
                StateChoice::Pes => MeasurementFamily::QubitProjective,
                _ => MeasurementFamily::PseudoSpin,
            };
        }
        Ok(cfg)
    }

    fn value_of(&self, key: &str) -> String {
        match key {
            "state" => self.state.to_string(),
            "family" => self.family.to_string(),
            "layout" => self.layout.to_string(),
            "alpha" => self.alpha.to_string(),
            "phi" => self.phi.to_string(),
            "bound" => self.bound.as_str().to_string(),
            "optimize" => self.optimize.to_string(),
            "rotation" => self.rotation.to_string(),
            "chsh" => self.chsh.to_string(),
            "normalization" => match self.normalization {
                Normalization::Gram => "gram".into(),
                Normalization::Raw => "raw".into(),
            },
            "starts" => self.starts.to_string(),
            "rigid_starts" => self.rigid_starts.to_string(),
            "seed" => self.seed.to_string(),
            "out" => self.out.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            "format" => self.format.extension().to_string(),
            _ => unreachable!("KEYS lists only known keys"),
        }
    }

    /// `key = value` lines, starting with the command.
    pub fn to_canonical_string(&self) -> String {
        let mut s = format!("command = {}\n", self.command);
        for k in KEYS {
            s.push_str(&format!("{k} = {}\n", self.value_of(k)));
        }
        s
    }

    pub fn parse_canonical(text: &str) -> Result<Self, String> {
        let pairs = parse_config_text(text)?;
        let command = pairs
            .iter()
            .rev()
            .find(|(k, _)| k == "command")
            .ok_or("missing `command` line")?
            .1
            .parse()?;
        Self::from_pairs(command, &pairs)
    }

    fn task(&self) -> Task {
        let mut task = Task::new(self.state, self.family, self.layout).with_seed(self.seed);
        task.bound = self.bound;
        task.rotation = if self.optimize { self.rotation } else { RotationMode::None };
        task.with_chsh = self.chsh;
        task.normalization = self.normalization;
        task.bound_cfg.starts = self.starts;
        task.rigid_cfg.starts = self.rigid_starts;
        task
    }
}

fn parse_count(v: &str) -> Result<usize, String> {
    match v.parse::<usize>() {
        Ok(n) if n >= 1 => Ok(n),
        _ => Err(format!("`{v}` is not a positive integer")),
    }
}

/// Parses `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected `key = value`", n + 1))?;
        let k = k.trim().replace('-', "_");
        if k != "command" && !KEYS.contains(&k.as_str()) {
            return Err(format!("line {}: unknown key `{k}`", n + 1));
        }
        out.push((k, v.trim().to_string()));
    }
    Ok(out)
}

#[derive(Debug, Parser)]
#[command(name = "leggett-lab", about = "Leggett and CHSH tests for entangled coherent states", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Sweep the layout parameter phi at fixed alpha.
    ScanPhi,
    /// Sweep alpha at fixed phi.
    ScanAlpha,
    /// Smallest alpha at which the Leggett test is violated.
    Threshold,
    /// Optimized CHSH value over an alpha grid.
    Chsh,
    /// Analytic and state-corrected bounds at one (alpha, phi).
    Bound,
    /// Regenerate the data behind one figure (fig3, fig4, fig5, fig6).
    Reproduce { figure: String },
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// pes, ecs+ or ecs-
    #[arg(long, global = true)]
    state: Option<String>,
    /// qubit, pseudospin, onoff or parity
    #[arg(long, global = true)]
    family: Option<String>,
    /// original, 3p7, 3p6 or chsh
    #[arg(long, global = true)]
    layout: Option<String>,
    /// Value or lo:hi:step
    #[arg(long, global = true, allow_hyphen_values = true)]
    alpha: Option<String>,
    /// Value or lo:hi:step
    #[arg(long, global = true, allow_hyphen_values = true)]
    phi: Option<String>,
    /// analytic or corrected
    #[arg(long, global = true)]
    bound: Option<String>,
    /// Maximize over rigid rotations of the settings
    #[arg(long, global = true)]
    optimize: bool,
    /// shared or independent (with --optimize)
    #[arg(long, global = true)]
    rotation: Option<String>,
    /// Add the optimized CHSH value to each record
    #[arg(long, global = true)]
    chsh: bool,
    /// Skip Gram renormalization of mapped states
    #[arg(long, global = true)]
    unnormalized: bool,
    /// Starts of each bound search
    #[arg(long, global = true)]
    starts: Option<String>,
    /// Starts of each rigid-rotation search
    #[arg(long, global = true)]
    rigid_starts: Option<String>,
    /// Seed of every search (default: $LEGGETT_LAB_SEED or 0)
    #[arg(long, global = true)]
    seed: Option<String>,
    /// Output file (directory for reproduce)
    #[arg(long, global = true)]
    out: Option<String>,
    /// csv, json or svg
    #[arg(long, global = true)]
    format: Option<String>,
    /// File of `key = value` lines; flags override it
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

impl CommonArgs {
    fn pairs(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let mut push = |k: &str, v: &Option<String>| {
            if let Some(v) = v {
                out.push((k.to_string(), v.clone()));
            }
        };
        push("state", &self.state);
        push("family", &self.family);
        push("layout", &self.layout);
        push("alpha", &self.alpha);
        push("phi", &self.phi);
        push("bound", &self.bound);
        push("rotation", &self.rotation);
        push("starts", &self.starts);
        push("rigid_starts", &self.rigid_starts);
        push("seed", &self.seed);
        push("out", &self.out);
        push("format", &self.format);
        if self.optimize {
            out.push(("optimize".into(), "true".into()));
        }
        if self.chsh {
            out.push(("chsh".into(), "true".into()));
        }
        if self.unnormalized {
            out.push(("normalization".into(), "raw".into()));
        }
        out
    }
}

enum Failure {
    Usage(String),
    Internal(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::UnknownLayout(_)
            | Error::PhiOutOfRange(_)
            | Error::AlphaTooSmall(_)
            | Error::UnsupportedModel(_)
            | Error::NoBound(_)
            | Error::InvalidConfig(_) => Failure::Usage(e.to_string()),
            _ => Failure::Internal(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Internal(e.to_string())
    }
}

/// Parses `argv` (including the program name), runs the command, and
/// returns the process exit code: 0 on success, 2 on argument errors, 1 on
/// internal failures.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    run_with_env(argv, std::env::var(SEED_ENV).ok())
}

pub fn run_with_env<I, T>(argv: I, env_seed: Option<String>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let config = match resolve_config(&cli, env_seed) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("error: {msg}");
            eprintln!("run with --help for usage");
            return 2;
        }
    };
    match execute(&config) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(Failure::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            1
        }
    }
}

fn resolve_config(cli: &Cli, env_seed: Option<String>) -> Result<RunConfig, String> {
    let command = match &cli.command {
        Sub::ScanPhi => Command::ScanPhi,
        Sub::ScanAlpha => Command::ScanAlpha,
        Sub::Threshold => Command::Threshold,
        Sub::Chsh => Command::Chsh,
        Sub::Bound => Command::Bound,
        Sub::Reproduce { figure } => Command::Reproduce(figure.parse()?),
    };
    let mut pairs = Vec::new();
    if let Some(seed) = env_seed {
        pairs.push(("seed".to_string(), seed));
    }
    if let Some(path) = &cli.common.config {
        let text = fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        pairs.extend(parse_config_text(&text)?.into_iter().filter(|(k, _)| k != "command"));
    }
    pairs.extend(cli.common.pairs());
    RunConfig::from_pairs(command, &pairs)
}

/// Formats with 12 significant digits, then prints the shortest decimal
/// that round-trips to that rounded value.
pub fn fmt_num(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.11e}").parse().unwrap_or(x);
    if rounded == 0.0 {
        "0".to_string()
    } else if rounded.abs() < 1e-5 || rounded.abs() >= 1e15 {
        format!("{rounded:e}")
    } else {
        format!("{rounded}")
    }
}

pub const CSV_HEADER: &str =
    "index,alpha,phi,L,f_min_corrected,f_min_analytic,bound_used,chsh_B,margin,violated,starts,seed";

pub fn records_to_csv(records: &[SweepRecord]) -> String {
    let opt = |x: Option<f64>| x.map(fmt_num).unwrap_or_default();
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in records {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.index,
            fmt_num(r.alpha),
            fmt_num(r.phi),
            fmt_num(r.l_value),
            opt(r.f_min_corrected),
            opt(r.f_min_analytic),
            fmt_num(r.bound_used),
            opt(r.chsh_b),
            fmt_num(r.margin),
            r.violated,
            r.starts,
            r.seed
        ));
    }
    s
}

/// Minimal line chart: one polyline per series, axes and a legend.
pub fn svg_chart(title: &str, x_label: &str, x: &[f64], series: &[(&str, Vec<f64>)]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const PAD: f64 = 50.0;
    const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
    let finite = |v: &f64| v.is_finite();
    let (x0, x1) = x.iter().filter(|v| finite(v)).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
        (a.min(v), b.max(v))
    });
    let (y0, y1) = series
        .iter()
        .flat_map(|(_, ys)| ys.iter())
        .filter(|v| finite(v))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = |lo: f64, hi: f64| if hi > lo { hi - lo } else { 1.0 };
    let px = |v: f64| PAD + (v - x0) / span(x0, x1) * (W - 2.0 * PAD);
    let py = |v: f64| H - PAD - (v - y0) / span(y0, y1) * (H - 2.0 * PAD);
    let escape = |s: &str| s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;");
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n"
    );
    s.push_str(&format!(
        "<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        W / 2.0,
        escape(title)
    ));
    s.push_str(&format!(
        "<line x1=\"{PAD}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"black\"/>\n",
        H - PAD,
        W - PAD
    ));
    s.push_str(&format!("<line x1=\"{PAD}\" y1=\"{PAD}\" x2=\"{PAD}\" y2=\"{}\" stroke=\"black\"/>\n", H - PAD));
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\">{}</text>\n",
        W / 2.0,
        H - 15.0,
        escape(x_label)
    ));
    for (label, v) in [(fmt_num(x0), PAD), (fmt_num(x1), W - PAD)] {
        s.push_str(&format!(
            "<text x=\"{v}\" y=\"{}\" text-anchor=\"middle\" font-size=\"10\">{label}</text>\n",
            H - PAD + 14.0
        ));
    }
    for (label, v) in [(fmt_num(y0), H - PAD), (fmt_num(y1), PAD)] {
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{v}\" text-anchor=\"end\" font-size=\"10\">{label}</text>\n",
            PAD - 4.0
        ));
    }
    for (k, (name, ys)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<String> = x
            .iter()
            .zip(ys)
            .filter(|(a, b)| finite(a) && finite(b))
            .map(|(&a, &b)| format!("{:.2},{:.2}", px(a), py(b)))
            .collect();
        s.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            pts.join(" ")
        ));
        let ly = PAD + 16.0 * k as f64;
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{ly}\" font-size=\"11\" fill=\"{color}\">{}</text>\n",
            W - PAD - 120.0,
            escape(name)
        ));
    }
    s.push_str("</svg>\n");
    s
}

fn records_to_svg(title: &str, variable: ScanVariable, records: &[SweepRecord]) -> String {
    let (x, label): (Vec<f64>, &str) = match variable {
        ScanVariable::Phi => (records.iter().map(|r| r.phi).collect(), "phi"),
        ScanVariable::Alpha => (records.iter().map(|r| r.alpha).collect(), "alpha"),
    };
    let mut series = vec![
        ("L", records.iter().map(|r| r.l_value).collect()),
        ("bound", records.iter().map(|r| r.bound_used).collect()),
    ];
    if records.iter().any(|r| r.chsh_b.is_some()) {
        series.push(("CHSH |B|", records.iter().map(|r| r.chsh_b.unwrap_or(f64::NAN)).collect()));
    }
    svg_chart(title, label, &x, &series)
}

fn write_records(
    path: &Path,
    format: OutputFormat,
    title: &str,
    variable: ScanVariable,
    records: &[SweepRecord],
) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let body = match format {
        OutputFormat::Csv => records_to_csv(records),
        OutputFormat::Json => {
            let mut s = serde_json::to_string_pretty(records).map_err(|e| Failure::Internal(e.to_string()))?;
            s.push('\n');
            s
        }
        OutputFormat::Svg => records_to_svg(title, variable, records),
    };
    fs::write(path, body)?;
    Ok(())
}

/// Vertex of the parabola through the largest sample and its neighbours;
/// falls back to the sample itself at the grid edges.
pub fn interpolated_peak(x: &[f64], y: &[f64]) -> Option<f64> {
    let i = (0..y.len()).max_by(|&a, &b| y[a].total_cmp(&y[b]).then(b.cmp(&a)))?;
    if i == 0 || i + 1 == y.len() {
        return Some(x[i]);
    }
    let (x0, x1, x2) = (x[i - 1], x[i], x[i + 1]);
    let (y0, y1, y2) = (y[i - 1], y[i], y[i + 1]);
    let num = (x1 - x0).powi(2) * (y1 - y2) - (x1 - x2).powi(2) * (y1 - y0);
    let den = (x1 - x0) * (y1 - y2) - (x1 - x2) * (y1 - y0);
    if den == 0.0 {
        Some(x1)
    } else {
        Some(x1 - 0.5 * num / den)
    }
}

fn scan_summary(command: &str, out: &Path, seed: u64, variable: ScanVariable, records: &[SweepRecord]) -> Value {
    let best = records.iter().max_by(|a, b| a.margin.total_cmp(&b.margin).then(b.index.cmp(&a.index)));
    let xs: Vec<f64> = records
        .iter()
        .map(|r| if variable == ScanVariable::Phi { r.phi } else { r.alpha })
        .collect();
    let margins: Vec<f64> = records.iter().map(|r| r.margin).collect();
    json!({
        "peak": interpolated_peak(&xs, &margins),
        "command": command,
        "records": records.len(),
        "out": out.display().to_string(),
        "violations": records.iter().filter(|r| r.violated).count(),
        "max_margin": best.map(|r| r.margin),
        "argmax_alpha": best.map(|r| r.alpha),
        "argmax_phi": best.map(|r| r.phi),
        "seed": seed,
    })
}

fn default_out(cfg: &RunConfig, stem: &str) -> PathBuf {
    cfg.out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{stem}.{}", cfg.format.extension())))
}

fn execute(cfg: &RunConfig) -> Result<Value, Failure> {
    match cfg.command {
        Command::ScanPhi => {
            let task = cfg.task();
            let records = scan(&task, ScanVariable::Phi, &cfg.phi.points(), cfg.alpha.first())?;
            let out = default_out(cfg, "scan-phi");
            write_records(&out, cfg.format, "Leggett function vs phi", ScanVariable::Phi, &records)?;
            Ok(scan_summary("scan-phi", &out, cfg.seed, ScanVariable::Phi, &records))
        }
        Command::ScanAlpha => {
            let task = cfg.task();
            let records = scan(&task, ScanVariable::Alpha, &cfg.alpha.points(), cfg.phi.first())?;
            let out = default_out(cfg, "scan-alpha");
            write_records(&out, cfg.format, "Leggett function vs alpha", ScanVariable::Alpha, &records)?;
            Ok(scan_summary("scan-alpha", &out, cfg.seed, ScanVariable::Alpha, &records))
        }
        Command::Chsh => {
            let mut task = cfg.task();
            task.layout = LayoutName::Chsh;
            task.with_chsh = true;
            let records = scan(&task, ScanVariable::Alpha, &cfg.alpha.points(), cfg.phi.first())?;
            let out = default_out(cfg, "chsh");
            write_records(&out, cfg.format, "CHSH vs alpha", ScanVariable::Alpha, &records)?;
            let min_b = records.iter().filter_map(|r| r.chsh_b).fold(f64::INFINITY, f64::min);
            let max_b = records.iter().filter_map(|r| r.chsh_b).fold(f64::NEG_INFINITY, f64::max);
            Ok(json!({
                "command": "chsh",
                "records": records.len(),
                "out": out.display().to_string(),
                "min_chsh": min_b,
                "max_chsh": max_b,
                "all_violated": records.iter().all(|r| r.chsh_b.is_some_and(|b| b > 2.0)),
                "seed": cfg.seed,
            }))
        }
        Command::Threshold => {
            let task = cfg.task();
            let (lo, hi, step) = match cfg.alpha {
                Grid::Range { lo, hi, step } => (lo, hi, step),
                Grid::Value(_) => return Err(Failure::Usage("threshold needs --alpha lo:hi:step".into())),
            };
            let tc = ThresholdConfig {
                lo,
                hi,
                coarse_step: step,
                ..ThresholdConfig::new(cfg.phi.first())
            };
            let r = threshold_alpha(&task, &tc)?;
            let summary = json!({
                "command": "threshold",
                "state": cfg.state.as_str(),
                "layout": cfg.layout.as_str(),
                "phi": tc.phi,
                "verdict": format!("{:?}", r.verdict),
                "alpha_star": r.alpha_star,
                "bracket_lo": r.bracket.map(|b| b.0),
                "bracket_hi": r.bracket.map(|b| b.1),
                "margin_at_star": r.margin_at_star,
                "evaluations": r.evaluations,
                "seed": cfg.seed,
            });
            if let Some(path) = &cfg.out {
                let mut s = String::from("alpha,margin\n");
                for (a, m) in &r.coarse {
                    s.push_str(&format!("{},{}\n", fmt_num(*a), fmt_num(*m)));
                }
                fs::write(path, s)?;
            }
            Ok(summary)
        }
        Command::Bound => {
            let task = cfg.task();
            let alpha = cfg.alpha.first();
            let phi = cfg.phi.first();
            let model = task.model(alpha)?;
            let layout = build_layout(cfg.layout, phi)?;
            let numeric = numeric_fmin(&model, &layout, &task.bound_cfg)?;
            let analytic = analytic_fmin(cfg.layout, phi)?;
            let summary = json!({
                "command": "bound",
                "alpha": alpha,
                "phi": phi,
                "f_min": numeric.f_min,
                "f_min_direct": numeric.f_min_direct,
                "f_min_triangle": numeric.f_min_triangle,
                "f_min_analytic": analytic,
                "bound": numeric.bound,
                "seed": cfg.seed,
            });
            if let Some(path) = &cfg.out {
                let s = serde_json::to_string_pretty(&numeric).map_err(|e| Failure::Internal(e.to_string()))?;
                fs::write(path, s + "\n")?;
            }
            Ok(summary)
        }
        Command::Reproduce(fig) => reproduce(cfg, fig),
    }
}

struct Preset {
    name: String,
    task: Task,
    variable: ScanVariable,
    grid: Vec<f64>,
    fixed: f64,
}

fn preset_task(cfg: &RunConfig, state: StateChoice, family: MeasurementFamily, layout: LayoutName) -> Task {
    let mut t = Task::new(state, family, layout).with_seed(cfg.seed);
    t.bound_cfg.starts = cfg.starts;
    t.rigid_cfg.starts = cfg.rigid_starts;
    t.normalization = cfg.normalization;
    t
}

fn range(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    Grid::Range { lo, hi, step }.points()
}

/// Parameter presets for each figure.
fn presets(cfg: &RunConfig, fig: Figure) -> Vec<Preset> {
    use MeasurementFamily::{OnOff, Parity, PseudoSpin};
    use StateChoice::{EcsMinus, EcsPlus};
    let alpha = cfg.alpha.first();
    match fig {
        Figure::Fig3 => {
            let onoff = preset_task(cfg, EcsMinus, OnOff, LayoutName::ThreePlusSeven);
            let parity = preset_task(cfg, EcsMinus, Parity, LayoutName::ThreePlusSeven);
            vec![
                Preset {
                    name: "fig3_onoff".into(),
                    task: onoff,
                    variable: ScanVariable::Phi,
                    grid: range(0.01, 1.5, 0.01),
                    fixed: alpha,
                },
                Preset {
                    name: "fig3_parity".into(),
                    task: parity,
                    variable: ScanVariable::Phi,
                    grid: range(0.01, 1.5, 0.01),
                    fixed: alpha,
                },
            ]
        }
        Figure::Fig4 => [5.0, 50.0]
            .into_iter()
            .map(|a| Preset {
                name: format!("fig4_alpha{a}"),
                task: preset_task(cfg, EcsMinus, PseudoSpin, LayoutName::ThreePlusSeven),
                variable: ScanVariable::Phi,
                grid: range(0.0, 1.0, 0.01),
                fixed: a,
            })
            .collect(),
        Figure::Fig5 => {
            let mut out = Vec::new();
            for (state, tag) in [(EcsPlus, "ecsplus"), (EcsMinus, "ecsminus")] {
                for optimize in [false, true] {
                    let mut t = preset_task(cfg, state, PseudoSpin, LayoutName::ThreePlusSeven);
                    t.with_chsh = true;
                    if optimize {
                        t.rotation = cfg.rotation;
                    }
                    out.push(Preset {
                        name: format!("fig5_{tag}_{}", if optimize { "optimized" } else { "plain" }),
                        task: t,
                        variable: ScanVariable::Alpha,
                        grid: range(0.1, 10.0, 0.1),
                        fixed: 0.25,
                    });
                }
            }
            out
        }
        Figure::Fig6 => {
            let phi_scan = preset_task(cfg, EcsMinus, PseudoSpin, LayoutName::ThreePlusSix);
            let mut alpha_scan = preset_task(cfg, EcsMinus, PseudoSpin, LayoutName::ThreePlusSix);
            alpha_scan.with_chsh = true;
            vec![
                Preset {
                    name: "fig6_phi".into(),
                    task: phi_scan,
                    variable: ScanVariable::Phi,
                    grid: range(0.0, 1.5, 0.01),
                    fixed: alpha,
                },
                Preset {
                    name: "fig6_alpha".into(),
                    task: alpha_scan,
                    variable: ScanVariable::Alpha,
                    grid: range(0.1, 10.0, 0.1),
                    fixed: 0.65,
                },
            ]
        }
    }
}

fn reproduce(cfg: &RunConfig, fig: Figure) -> Result<Value, Failure> {
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    let mut files = Vec::new();
    let mut violations = 0;
    let mut rows = 0;
    for p in presets(cfg, fig) {
        let records = scan(&p.task, p.variable, &p.grid, p.fixed)?;
        rows += records.len();
        violations += records.iter().filter(|r| r.violated).count();
        let csv = dir.join(format!("{}.csv", p.name));
        write_records(&csv, OutputFormat::Csv, &p.name, p.variable, &records)?;
        files.push(csv.display().to_string());
        if cfg.format == OutputFormat::Svg {
            let svg = dir.join(format!("{}.svg", p.name));
            write_records(&svg, OutputFormat::Svg, &p.name, p.variable, &records)?;
            files.push(svg.display().to_string());
        }
    }
    Ok(json!({
        "command": "reproduce",
        "figure": fig.to_string(),
        "files": files,
        "records": rows,
        "violations": violations,
        "seed": cfg.seed,
    }))
}

/// Canonical form of the configuration that `argv` would run, for
/// inspection and round-trip tests.
pub fn resolve_argv<I, T>(argv: I, env_seed: Option<String>) -> Result<RunConfig, String>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| e.to_string())?;
    resolve_config(&cli, env_seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argv(s: &str) -> Vec<String> {
        std::iter::once("leggett-lab".to_string())
            .chain(s.split_whitespace().map(String::from))
            .collect()
    }

    #[test]
    fn grid_is_index_based() {
        let g: Grid = "0:1.2:0.01".parse().unwrap();
        let p = g.points();
        assert_eq!(p.len(), 121);
        assert_eq!(p[0], 0.0);
        assert_eq!(p[37], 37.0 * 0.01);
        assert!((p[120] - 1.2).abs() < 1e-12);
        assert_eq!("0.3".parse::<Grid>().unwrap().points(), vec![0.3]);
        assert!("1:0:0.1".parse::<Grid>().is_err());
        assert!("0:1:0".parse::<Grid>().is_err());
    }

    #[test]
    fn canonical_string_round_trips() {
        let cfg = resolve_argv(
            argv("scan-alpha --state ecs+ --layout 3p6 --alpha 0.5:3:0.25 --phi 0.65 --optimize --rotation independent --chsh --seed 9 --out x.csv --unnormalized"),
            None,
        )
        .unwrap();
        let text = cfg.to_canonical_string();
        let back = RunConfig::parse_canonical(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_canonical_string(), text);
        for cmd in ["scan-phi", "threshold", "chsh", "bound", "reproduce fig5"] {
            let c = RunConfig::defaults(cmd.parse().unwrap());
            assert_eq!(RunConfig::parse_canonical(&c.to_canonical_string()).unwrap(), c);
        }
    }

    #[test]
    fn precedence_env_then_file_then_flags() {
        let dir = std::env::temp_dir().join(format!("leggett-cli-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("run.conf");
        fs::write(&path, "# preset\nseed = 5\nlayout = 3p6\nstate = pes\n").unwrap();
        let cfg = resolve_argv(argv(&format!("scan-phi --config {} --layout 3p7", path.display())), Some("3".into()))
            .unwrap();
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.layout, LayoutName::ThreePlusSeven);
        assert_eq!(cfg.family, MeasurementFamily::QubitProjective);
        let cfg = resolve_argv(argv("scan-phi"), Some("3".into())).unwrap();
        assert_eq!(cfg.seed, 3);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn argument_errors_exit_with_two() {
        assert_eq!(run_with_env(argv("scan-phi --bogus"), None), 2);
        assert_eq!(run_with_env(argv("frobnicate"), None), 2);
        assert_eq!(run_with_env(argv("scan-phi --layout nine"), None), 2);
        assert_eq!(run_with_env(argv("reproduce fig9"), None), 2);
        assert_eq!(run_with_env(argv("scan-phi --state pes --family onoff --phi 0.1"), None), 2);
    }

    #[test]
    fn parabola_vertex_is_exact_for_quadratics() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = x.iter().map(|v| -(v - 0.6435f64).powi(2)).collect();
        assert!((interpolated_peak(&x, &y).unwrap() - 0.6435).abs() < 1e-12);
        assert_eq!(interpolated_peak(&[0.0, 1.0], &[2.0, 1.0]), Some(0.0));
        assert_eq!(interpolated_peak(&[], &[]), None);
    }

    #[test]
    fn number_format() {
        assert_eq!(fmt_num(0.1 + 0.2), "0.3");
        assert_eq!(fmt_num(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_num(-0.0), "0");
        assert_eq!(fmt_num(4.0), "4");
        assert_eq!(fmt_num(1.0 / 9.0 * 1e-12), "1.11111111111e-13");
    }

    #[test]
    fn svg_is_well_formed_enough() {
        let s = svg_chart("t<1>", "x", &[0.0, 1.0], &[("a", vec![0.0, 1.0]), ("b", vec![1.0, f64::NAN])]);
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert_eq!(s.matches("<polyline").count(), 2);
        assert!(s.contains("t&lt;1&gt;"));
    }
}
