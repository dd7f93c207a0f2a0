//! Command-line front end: INI config parsing, unit conversion and dispatch.
//!
//! Config files hold `key = value` lines under `[drive]`, `[noise]`,
//! `[lindblad]` and `[run]`. Frequencies take a `MHz`, `kHz` or `rad/s`
//! suffix (the first two are cycles per second and get multiplied by 2π).
//! Times take `s`, `ms`, `us` or `ns`; a bare number is seconds. Parsing is
//! strict: unknown sections or keys, duplicates and out-of-range values are
//! errors carrying the line number.

use std::f64::consts::TAU;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::analysis::{self, SensitivityInputs};
use crate::dynamics::{CurveKind, FidelityCurve, AVG_THRESHOLD, AXIS_THRESHOLD};
use crate::error::{Error, Result};
use crate::protocol::{optimal_shift_approx, optimal_shift_exact};
use crate::scenarios::{
    self, reference_sensitivity_cases, CddShift, ScenarioConfig, ScenarioSummary, FULL_REALIZATIONS,
};

const SECTIONS: [&str; 4] = ["drive", "noise", "lindblad", "run"];

/// Every accepted `(section, key)` pair, in serialization order.
pub const KEYS: &[(&str, &str)] = &[
    ("drive", "omega1"),
    ("drive", "omega2"),
    ("drive", "cdd_shift"),
    ("noise", "t2_star"),
    ("noise", "tau_delta"),
    ("noise", "tau_eps"),
    ("noise", "delta_eps"),
    ("noise", "c"),
    ("lindblad", "t1"),
    ("lindblad", "gamma2_ratio"),
    ("lindblad", "gamma_phi"),
    ("lindblad", "omega1"),
    ("lindblad", "omega2"),
    ("lindblad", "cdd_shift"),
    ("lindblad", "duration"),
    ("lindblad", "steps_per_period"),
    ("lindblad", "t2_cdd"),
    ("lindblad", "t2_pulsed"),
    ("lindblad", "t1rho_single"),
    ("run", "scenario"),
    ("run", "n_realizations"),
    ("run", "seed"),
    ("run", "samples"),
    ("run", "output_dir"),
    ("run", "eps_max"),
    ("run", "eps_points"),
    ("run", "n_list"),
    ("run", "taus"),
    ("run", "delta_omegas"),
    ("run", "sense_omega1"),
    ("run", "sense_omega2"),
    ("run", "g0"),
    ("run", "omega0"),
    ("run", "sense_duration"),
    ("run", "sense_noise"),
    ("run", "alpha"),
    ("run", "bright"),
    ("run", "dark"),
    ("run", "t2rho"),
    ("run", "n_ph"),
    ("run", "tau"),
    ("run", "dead_time"),
    ("run", "overhead"),
    ("run", "decay_p"),
    ("run", "contrast"),
];

// ---------------------------------------------------------------- values

fn split_unit(s: &str) -> (&str, &str) {
    let s = s.trim();
    let cut = s
        .char_indices()
        .find(|&(_, c)| c.is_ascii_alphabetic() && c != 'e' && c != 'E' || c == 'µ' || c == '/')
        .map(|(i, _)| i)
        .unwrap_or(s.len());
    let (num, unit) = s.split_at(cut);
    (num.trim(), unit.trim())
}

fn number(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("'{s}' is not a number"))?;
    if !v.is_finite() {
        return Err(format!("'{s}' is not finite"));
    }
    Ok(v)
}

/// `2MHz` → 2π·2e6 rad/s. Accepts `MHz`, `kHz` and `rad/s`.
pub fn parse_frequency(s: &str) -> std::result::Result<f64, String> {
    let (num, unit) = split_unit(s);
    let v = number(num)?;
    match unit {
        "MHz" => Ok(v * 1e6 * TAU),
        "kHz" => Ok(v * 1e3 * TAU),
        "rad/s" => Ok(v),
        "" => Err(format!("frequency '{s}' needs a unit (MHz, kHz or rad/s)")),
        u => Err(format!("unknown frequency unit '{u}' (use MHz, kHz or rad/s)")),
    }
}

/// `25us` → 2.5e-5 s; a bare number is seconds.
pub fn parse_time(s: &str) -> std::result::Result<f64, String> {
    let (num, unit) = split_unit(s);
    let v = number(num)?;
    // dividing by an exact power of ten keeps `25us` equal to the literal 25e-6
    let per_second = match unit {
        "" | "s" => 1.0,
        "ms" => 1e3,
        "us" | "µs" => 1e6,
        "ns" => 1e9,
        u => return Err(format!("unknown time unit '{u}' (use s, ms, us or ns)")),
    };
    Ok(v / per_second)
}

fn format_frequency(w: f64) -> String {
    for (unit, scale) in [("MHz", 1e6), ("kHz", 1e3)] {
        let s = format!("{}{unit}", w / TAU / scale);
        if parse_frequency(&s) == Ok(w) {
            return s;
        }
    }
    format!("{w}rad/s")
}

fn format_time(t: f64) -> String {
    for (unit, per_second) in [("ms", 1e3), ("us", 1e6), ("ns", 1e9)] {
        if t.abs() * per_second >= 1.0 {
            let s = format!("{}{unit}", t * per_second);
            if parse_time(&s) == Ok(t) {
                return s;
            }
        }
    }
    format!("{t}")
}

fn list<T>(s: &str, f: impl Fn(&str) -> std::result::Result<T, String>) -> std::result::Result<Vec<T>, String> {
    let items: Vec<&str> = s.split(',').map(str::trim).collect();
    if items.iter().any(|x| x.is_empty()) {
        return Err(format!("malformed list '{s}'"));
    }
    items.into_iter().map(f).collect()
}

fn positive(v: f64, what: &str) -> std::result::Result<f64, String> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err(format!("{what} must be > 0, got {v}"))
    }
}

fn non_negative(v: f64, what: &str) -> std::result::Result<f64, String> {
    if v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("{what} must be >= 0, got {v}"))
    }
}

fn integer<T: std::str::FromStr>(s: &str) -> std::result::Result<T, String> {
    s.trim().parse().map_err(|_| format!("'{s}' is not a valid integer"))
}

fn shift(s: &str) -> std::result::Result<CddShift, String> {
    match s.trim() {
        "resonant" => Ok(CddShift::Resonant),
        "correlated" => Ok(CddShift::Correlated),
        "correlated_bs" => Ok(CddShift::CorrelatedBs),
        other => parse_frequency(other).map(CddShift::Explicit).map_err(|_| {
            format!("cdd_shift must be resonant, correlated, correlated_bs or a frequency, got '{other}'")
        }),
    }
}

fn format_shift(s: &CddShift) -> String {
    match s {
        CddShift::Resonant => "resonant".into(),
        CddShift::Correlated => "correlated".into(),
        CddShift::CorrelatedBs => "correlated_bs".into(),
        CddShift::Explicit(w) => format_frequency(*w),
    }
}

fn sens(cfg: &mut ScenarioConfig) -> &mut SensitivityInputs {
    cfg.run.sensitivity.get_or_insert_with(SensitivityInputs::default)
}

/// Assigns one key; the error message is the reason only.
fn set(cfg: &mut ScenarioConfig, section: &str, key: &str, v: &str) -> std::result::Result<(), String> {
    match (section, key) {
        ("drive", "omega1") => cfg.drive.omega1 = positive(parse_frequency(v)?, key)?,
        ("drive", "omega2") => cfg.drive.omega2 = positive(parse_frequency(v)?, key)?,
        ("drive", "cdd_shift") => cfg.drive.cdd_shift = shift(v)?,
        ("noise", "t2_star") => cfg.noise.t2_star = positive(parse_time(v)?, key)?,
        ("noise", "tau_delta") => cfg.noise.tau_delta = positive(parse_time(v)?, key)?,
        ("noise", "tau_eps") => cfg.noise.tau_eps = positive(parse_time(v)?, key)?,
        ("noise", "delta_eps") => cfg.noise.delta_eps = non_negative(number(v)?, key)?,
        ("noise", "c") => {
            let c = number(v)?;
            if c.abs() > 1.0 {
                return Err(format!("c = {c} is out of range: |c| <= 1 required"));
            }
            cfg.noise.c = c;
        }
        ("lindblad", "t1") => cfg.lindblad.t1 = positive(parse_time(v)?, key)?,
        ("lindblad", "gamma2_ratio") => cfg.lindblad.gamma2_ratio = non_negative(number(v)?, key)?,
        ("lindblad", "gamma_phi") => cfg.lindblad.gamma_phi = non_negative(number(v)?, key)?,
        ("lindblad", "omega1") => cfg.lindblad.omega1 = positive(parse_frequency(v)?, key)?,
        ("lindblad", "omega2") => cfg.lindblad.omega2 = positive(parse_frequency(v)?, key)?,
        ("lindblad", "cdd_shift") => cfg.lindblad.cdd_shift = shift(v)?,
        ("lindblad", "duration") => cfg.lindblad.duration = positive(parse_time(v)?, key)?,
        ("lindblad", "steps_per_period") => {
            let n: usize = integer(v)?;
            if n < 40 {
                return Err(format!("steps_per_period must be >= 40, got {n}"));
            }
            cfg.lindblad.steps_per_period = n;
        }
        ("lindblad", "t2_cdd") => cfg.lindblad.t2_cdd = positive(parse_time(v)?, key)?,
        ("lindblad", "t2_pulsed") => cfg.lindblad.t2_pulsed = positive(parse_time(v)?, key)?,
        ("lindblad", "t1rho_single") => cfg.lindblad.t1rho_single = positive(parse_time(v)?, key)?,
        ("run", "scenario") => cfg.scenario = v.trim().parse().map_err(|e: Error| e.to_string())?,
        ("run", "n_realizations") => {
            let n: usize = integer(v)?;
            if n < 1 {
                return Err("n_realizations must be >= 1".into());
            }
            cfg.run.n_realizations = n;
        }
        ("run", "seed") => cfg.run.seed = integer(v)?,
        ("run", "samples") => {
            let n: usize = integer(v)?;
            if n < 2 {
                return Err("samples must be >= 2".into());
            }
            cfg.run.samples = n;
        }
        ("run", "output_dir") => {
            if v.trim().is_empty() {
                return Err("output_dir must not be empty".into());
            }
            cfg.run.output_dir = PathBuf::from(v.trim());
        }
        ("run", "eps_max") => {
            let e = number(v)?;
            if !(e > 0.0 && e <= 0.5) {
                return Err(format!("eps_max = {e} is out of range: 0 < eps_max <= 0.5 required"));
            }
            cfg.run.eps_max = e;
        }
        ("run", "eps_points") => {
            let n: usize = integer(v)?;
            if n < 2 {
                return Err("eps_points must be >= 2".into());
            }
            cfg.run.eps_points = n;
        }
        ("run", "n_list") => cfg.run.n_list = list(v, integer)?,
        ("run", "taus") => cfg.run.taus = list(v, |x| positive(parse_time(x)?, "tau"))?,
        ("run", "delta_omegas") => cfg.run.delta_omegas = list(v, |x| non_negative(number(x)?, "delta_omega"))?,
        ("run", "sense_omega1") => cfg.run.sense_omega1 = positive(parse_frequency(v)?, key)?,
        ("run", "sense_omega2") => cfg.run.sense_omega2 = positive(parse_frequency(v)?, key)?,
        ("run", "g0") => cfg.run.g0 = non_negative(parse_frequency(v)?, key)?,
        ("run", "omega0") => cfg.run.omega0 = positive(parse_frequency(v)?, key)?,
        ("run", "sense_duration") => cfg.run.sense_duration = positive(parse_time(v)?, key)?,
        ("run", "sense_noise") => {
            cfg.run.sense_noise = match v.trim() {
                "true" => true,
                "false" => false,
                o => return Err(format!("sense_noise must be true or false, got '{o}'")),
            }
        }
        ("run", "alpha") => {
            let a = number(v)?;
            if a == 0.0 {
                return Err("alpha must be non-zero".into());
            }
            sens(cfg).alpha = a;
        }
        ("run", "bright") => sens(cfg).a = number(v)?,
        ("run", "dark") => sens(cfg).b = number(v)?,
        ("run", "t2rho") => sens(cfg).t2rho = positive(parse_time(v)?, key)?,
        ("run", "n_ph") => sens(cfg).n_ph = positive(number(v)?, key)?,
        ("run", "tau") => sens(cfg).tau = positive(parse_time(v)?, key)?,
        ("run", "dead_time") => sens(cfg).t_r = non_negative(parse_time(v)?, key)?,
        ("run", "overhead") => {
            let k = number(v)?;
            if k < 1.0 {
                return Err(format!("overhead must be >= 1, got {k}"));
            }
            sens(cfg).overhead_factor = k;
        }
        ("run", "decay_p") => sens(cfg).p = positive(number(v)?, key)?,
        ("run", "contrast") => sens(cfg).contrast = Some(positive(number(v)?, key)?),
        (s, k) if SECTIONS.contains(&s) => return Err(format!("unknown key '{k}' in [{s}]")),
        (s, _) => return Err(format!("unknown section [{s}]")),
    }
    Ok(())
}

// ---------------------------------------------------------------- files

/// Reads and strictly parses a config file on top of the built-in defaults.
pub fn parse_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::ConfigIo {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(&text, path)
}

pub fn parse_config_str(text: &str, path: &Path) -> Result<ScenarioConfig> {
    let err = |line: usize, msg: String| Error::Config {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut cfg = ScenarioConfig::default();
    let mut section: Option<String> = None;
    let mut seen: Vec<(String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| err(lineno, format!("malformed section header '{line}'")))?
                .trim();
            if !SECTIONS.contains(&name) {
                return Err(err(lineno, format!("unknown section [{name}]")));
            }
            section = Some(name.to_string());
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(lineno, format!("expected 'key = value', got '{line}'")))?;
        let (key, value) = (key.trim(), value.trim());
        let sec = section
            .as_deref()
            .ok_or_else(|| err(lineno, format!("key '{key}' appears before any section")))?;
        if key.is_empty() || value.is_empty() {
            return Err(err(lineno, format!("expected 'key = value', got '{line}'")));
        }
        let id = (sec.to_string(), key.to_string());
        if seen.contains(&id) {
            return Err(err(lineno, format!("duplicate key '{key}' in [{sec}]")));
        }
        seen.push(id);
        set(&mut cfg, sec, key, value).map_err(|m| err(lineno, m))?;
    }
    cfg.validate().map_err(|e| err(0, e.to_string()))?;
    Ok(cfg)
}

/// Applies `key=value` or `section.key=value`. A bare key must be unique
/// across sections.
pub fn apply_override(cfg: &mut ScenarioConfig, spec: &str) -> Result<()> {
    let err = |msg: String| Error::Config {
        path: PathBuf::from("--override"),
        line: 0,
        msg,
    };
    let (lhs, value) = spec
        .split_once('=')
        .ok_or_else(|| err(format!("override '{spec}' is not key=value")))?;
    let lhs = lhs.trim();
    let (section, key) = match lhs.split_once('.') {
        Some((s, k)) => (s.to_string(), k.to_string()),
        None => {
            let hits: Vec<_> = KEYS.iter().filter(|(_, k)| *k == lhs).collect();
            match hits.as_slice() {
                [(s, _)] => (s.to_string(), lhs.to_string()),
                [] => return Err(err(format!("unknown key '{lhs}'"))),
                _ => return Err(err(format!("key '{lhs}' is ambiguous, write section.{lhs}"))),
            }
        }
    };
    set(cfg, &section, &key, value).map_err(err)?;
    cfg.validate().map_err(|e| err(e.to_string()))
}

/// Writes every key of `cfg` in a form that parses back to the same values.
pub fn serialize_config(cfg: &ScenarioConfig) -> String {
    let mut s = String::new();
    let d = &cfg.drive;
    let n = &cfg.noise;
    let l = &cfg.lindblad;
    let r = &cfg.run;
    let join = |v: Vec<String>| v.join(", ");
    let _ = writeln!(s, "[drive]");
    let _ = writeln!(s, "omega1 = {}", format_frequency(d.omega1));
    let _ = writeln!(s, "omega2 = {}", format_frequency(d.omega2));
    let _ = writeln!(s, "cdd_shift = {}", format_shift(&d.cdd_shift));
    let _ = writeln!(s, "\n[noise]");
    let _ = writeln!(s, "t2_star = {}", format_time(n.t2_star));
    let _ = writeln!(s, "tau_delta = {}", format_time(n.tau_delta));
    let _ = writeln!(s, "tau_eps = {}", format_time(n.tau_eps));
    let _ = writeln!(s, "delta_eps = {}", n.delta_eps);
    let _ = writeln!(s, "c = {}", n.c);
    let _ = writeln!(s, "\n[lindblad]");
    let _ = writeln!(s, "t1 = {}", format_time(l.t1));
    let _ = writeln!(s, "gamma2_ratio = {}", l.gamma2_ratio);
    let _ = writeln!(s, "gamma_phi = {}", l.gamma_phi);
    let _ = writeln!(s, "omega1 = {}", format_frequency(l.omega1));
    let _ = writeln!(s, "omega2 = {}", format_frequency(l.omega2));
    let _ = writeln!(s, "cdd_shift = {}", format_shift(&l.cdd_shift));
    let _ = writeln!(s, "duration = {}", format_time(l.duration));
    let _ = writeln!(s, "steps_per_period = {}", l.steps_per_period);
    let _ = writeln!(s, "t2_cdd = {}", format_time(l.t2_cdd));
    let _ = writeln!(s, "t2_pulsed = {}", format_time(l.t2_pulsed));
    let _ = writeln!(s, "t1rho_single = {}", format_time(l.t1rho_single));
    let _ = writeln!(s, "\n[run]");
    let _ = writeln!(s, "scenario = {}", cfg.scenario.name());
    let _ = writeln!(s, "n_realizations = {}", r.n_realizations);
    let _ = writeln!(s, "seed = {}", r.seed);
    let _ = writeln!(s, "samples = {}", r.samples);
    let _ = writeln!(s, "output_dir = {}", r.output_dir.display());
    let _ = writeln!(s, "eps_max = {}", r.eps_max);
    let _ = writeln!(s, "eps_points = {}", r.eps_points);
    let _ = writeln!(s, "n_list = {}", join(r.n_list.iter().map(|x| x.to_string()).collect()));
    let _ = writeln!(s, "taus = {}", join(r.taus.iter().map(|&x| format_time(x)).collect()));
    let _ = writeln!(
        s,
        "delta_omegas = {}",
        join(r.delta_omegas.iter().map(|x| x.to_string()).collect())
    );
    let _ = writeln!(s, "sense_omega1 = {}", format_frequency(r.sense_omega1));
    let _ = writeln!(s, "sense_omega2 = {}", format_frequency(r.sense_omega2));
    let _ = writeln!(s, "g0 = {}", format_frequency(r.g0));
    let _ = writeln!(s, "omega0 = {}", format_frequency(r.omega0));
    let _ = writeln!(s, "sense_duration = {}", format_time(r.sense_duration));
    let _ = writeln!(s, "sense_noise = {}", r.sense_noise);
    if let Some(x) = &r.sensitivity {
        let _ = writeln!(s, "alpha = {}", x.alpha);
        let _ = writeln!(s, "bright = {}", x.a);
        let _ = writeln!(s, "dark = {}", x.b);
        let _ = writeln!(s, "t2rho = {}", format_time(x.t2rho));
        let _ = writeln!(s, "n_ph = {}", x.n_ph);
        let _ = writeln!(s, "tau = {}", format_time(x.tau));
        let _ = writeln!(s, "dead_time = {}", format_time(x.t_r));
        let _ = writeln!(s, "overhead = {}", x.overhead_factor);
        let _ = writeln!(s, "decay_p = {}", x.p);
        if let Some(c) = x.contrast {
            let _ = writeln!(s, "contrast = {c}");
        }
    }
    s
}

// ---------------------------------------------------------------- command line

#[derive(Debug, Parser)]
#[command(name = "cdd", version, about = "Correlated double-drive decoupling simulator")]
pub struct Cli {
    /// Worker threads for ensemble runs; results do not depend on it.
    #[arg(long, global = true, env = "DD_WORKERS")]
    pub workers: Option<usize>,

    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a named scenario and write its CSV files.
    Simulate {
        scenario: String,
        #[arg(long)]
        config: Option<PathBuf>,
        /// `key=value` or `section.key=value`, applied after the file.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (overrides `output_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Use the full ensemble size.
        #[arg(long)]
        full: bool,
    },
    /// Coherence time of a fidelity curve CSV (`t_s,value,stderr`).
    Fit {
        csv: PathBuf,
        #[arg(long, value_enum, default_value_t = FitKind::Avg)]
        kind: FitKind,
        /// Fit the upper envelope instead of the raw samples.
        #[arg(long)]
        envelope: bool,
    },
    /// Photon-shot-noise sensitivity for the reference cases and an optional
    /// custom case from `[run]`.
    Sensitivity { config: Option<PathBuf> },
    /// Optimal modulation frequency for correlated amplitude noise.
    Shift {
        /// Frequency with unit, e.g. `2MHz`.
        omega1: String,
        omega2: String,
        c: f64,
        /// Add the Bloch-Siegert term of the second drive.
        #[arg(long)]
        bs: bool,
    },
    /// Print the default configuration.
    Defaults,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FitKind {
    Avg,
    X,
    Y,
    Z,
}

impl FitKind {
    fn curve_kind(self) -> CurveKind {
        match self {
            FitKind::Avg => CurveKind::AvgFidelity,
            FitKind::X => CurveKind::FidelityX,
            FitKind::Y => CurveKind::FidelityY,
            FitKind::Z => CurveKind::FidelityZ,
        }
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code: 0 success, 1 configuration error, 2 runtime error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_env("RUST_LOG")
        .try_init();

    let mut buf: Vec<u8> = Vec::new();
    let outcome = match cli.workers {
        Some(0) => Err(Error::invalid("--workers must be >= 1")),
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Error::invalid(format!("cannot start {k} workers: {e}")))
            .and_then(|pool| pool.install(|| dispatch(cli.command, &mut buf))),
        None => dispatch(cli.command, &mut buf),
    };
    print!("{}", String::from_utf8_lossy(&buf));
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                1
            } else {
                2
            }
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn std::io::Write) -> Result<()> {
    match cmd {
        Command::Simulate {
            scenario,
            config,
            overrides,
            seed,
            out: dir,
            full,
        } => {
            let mut cfg = match &config {
                Some(p) => parse_config(p)?,
                None => ScenarioConfig::default(),
            };
            cfg.scenario = scenario.parse()?;
            for o in &overrides {
                apply_override(&mut cfg, o)?;
            }
            if let Some(s) = seed {
                cfg.run.seed = s;
            }
            if let Some(d) = dir {
                cfg.run.output_dir = d;
            }
            if full {
                cfg.run.n_realizations = FULL_REALIZATIONS;
            }
            let summary = scenarios::run_scenario(&cfg)?;
            print_summary(out, &summary)?;
        }
        Command::Fit { csv, kind, envelope } => {
            let file = std::fs::File::open(&csv).map_err(|source| Error::ConfigIo {
                path: csv.clone(),
                source,
            })?;
            let ck = kind.curve_kind();
            let mut curve = FidelityCurve::read_csv(file, ck)?;
            if envelope {
                curve = analysis::extract_envelope(&curve, None)?.0;
            }
            let threshold = if ck == CurveKind::AvgFidelity {
                AVG_THRESHOLD
            } else {
                AXIS_THRESHOLD
            };
            let cross = analysis::threshold_time(&curve, threshold)?;
            writeln!(out, "method,t2_s,beta,reached_or_residual")?;
            writeln!(out, "threshold,{:.6e},,{}", cross.time, cross.reached)?;
            let f = scenarios::fit_decay(&curve, scenarios::decay_floor(ck))?;
            writeln!(out, "stretched_exp,{:.6e},{:.4},{:.3e}", f.t2, f.beta, f.rms_residual)?;
        }
        Command::Sensitivity { config } => {
            let custom = match &config {
                Some(p) => parse_config(p)?.run.sensitivity,
                None => None,
            };
            let mut cases = reference_sensitivity_cases();
            if let Some(c) = custom {
                cases.push(("custom", c));
            }
            writeln!(out, "case,eta_nT_per_sqrt_Hz,contrast,eta_at_half_t2_nT_per_sqrt_Hz")?;
            for (name, inp) in cases {
                let s = analysis::sensitivity(&inp)?;
                writeln!(
                    out,
                    "{name},{:.4},{:.4},{:.4}",
                    s.eta * 1e9,
                    s.contrast,
                    s.eta_at_half_t2 * 1e9
                )?;
            }
        }
        Command::Shift { omega1, omega2, c, bs } => {
            let bad = |m: String| Error::invalid(m);
            let w1 = parse_frequency(&omega1).map_err(bad)?;
            let w2 = parse_frequency(&omega2).map_err(bad)?;
            if !(w1 > 0.0 && w2 > 0.0 && w2 < w1) {
                return Err(Error::invalid("need 0 < omega2 < omega1"));
            }
            if !(c.abs() <= 1.0) {
                return Err(Error::invalid(format!("c = {c} is out of range: |c| <= 1 required")));
            }
            let bs_term = if bs { w2 * w2 / (4.0 * w1) } else { 0.0 };
            let exact = optimal_shift_exact(w1, w2, c) + bs_term;
            let approx = optimal_shift_approx(w1, w2, c, bs);
            writeln!(out, "quantity,rad_s,MHz")?;
            for (name, w) in [
                ("omega1", w1),
                ("exact", exact),
                ("second_order", approx),
                ("shift", exact - w1),
            ] {
                writeln!(out, "{name},{:.9e},{:.9}", w, w / TAU / 1e6)?;
            }
        }
        Command::Defaults => {
            write!(out, "{}", serialize_config(&ScenarioConfig::default()))?;
        }
    }
    Ok(())
}

fn print_summary(out: &mut dyn std::io::Write, s: &ScenarioSummary) -> Result<()> {
    writeln!(out, "{:<28} {:>16} {:<12} method", "item", "value", "unit")?;
    for r in &s.rows {
        writeln!(out, "{:<28} {:>16.6e} {:<12} {}", r.item, r.value, r.unit, r.method)?;
    }
    for f in &s.files {
        log::info!("wrote {}", f.display());
    }
    Ok(())
}
