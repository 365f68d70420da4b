//! Run configuration: flags layered over an optional `key = value` file.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use sop_core::HppParams;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "SOPLAB_OUT";
pub const DEFAULT_OUT: &str = "soplab-out";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CommandKind {
    Simulate,
    Sop,
    Ky,
    TauCurve,
    Multiscale,
    Scenario,
    Validate,
}

impl CommandKind {
    pub const ALL: [CommandKind; 7] = [
        CommandKind::Simulate,
        CommandKind::Sop,
        CommandKind::Ky,
        CommandKind::TauCurve,
        CommandKind::Multiscale,
        CommandKind::Scenario,
        CommandKind::Validate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Simulate => "simulate",
            CommandKind::Sop => "sop",
            CommandKind::Ky => "ky",
            CommandKind::TauCurve => "tau-curve",
            CommandKind::Multiscale => "multiscale",
            CommandKind::Scenario => "scenario",
            CommandKind::Validate => "validate",
        }
    }

    pub fn about(self) -> &'static str {
        match self {
            CommandKind::Simulate => "Integrate the delay equation from a history segment",
            CommandKind::Sop => "Iterate the return map to a slowly oscillating periodic solution",
            CommandKind::Ky => "Find the period-4 (Kaplan-Yorke) solution from tau(u0) = 1",
            CommandKind::TauCurve => "Tabulate the period function tau(u0) of the planar system",
            CommandKind::Multiscale => "Find one periodic solution per scale of a multi-scale feedback",
            CommandKind::Scenario => "Run a named end-to-end scenario",
            CommandKind::Validate => "Check the construction conditions for (a, c, delta, gamma)",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }

    /// Keys accepted by this command, in echo order.
    pub fn keys(self) -> Vec<&'static str> {
        let mut k = Vec::new();
        match self {
            CommandKind::Simulate => {
                k.extend(FEEDBACK_KEYS);
                k.extend(SEED_KEYS);
                k.extend(["n", "t-max"]);
            }
            CommandKind::Sop => {
                k.extend(FEEDBACK_KEYS);
                k.extend(SEED_KEYS);
                k.extend(["n", "horizon", "tol", "max-iter"]);
            }
            CommandKind::Ky => {
                k.extend(FEEDBACK_KEYS);
                k.extend(["n", "lo", "hi", "tol"]);
            }
            CommandKind::TauCurve => {
                k.extend(FEEDBACK_KEYS);
                k.extend(["lo", "hi", "count", "step"]);
            }
            CommandKind::Multiscale => k.extend(["gammas", "slope0", "n"]),
            CommandKind::Scenario => k.push("name"),
            CommandKind::Validate => k.extend(["a", "c", "delta", "gamma", "slope0"]),
        }
        k.push("out");
        k
    }
}

impl fmt::Display for CommandKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

const FEEDBACK_KEYS: [&str; 7] = ["a", "c", "delta", "gamma", "slope0", "gammas", "feedback-file"];
const SEED_KEYS: [&str; 3] = ["seed-ramp", "seed-constant", "seed-file"];

pub fn key_help(key: &str) -> &'static str {
    match key {
        "a" => "Scale a of the long-period construction",
        "c" => "Kink width c",
        "delta" => "Tail level delta (f = -delta far out)",
        "gamma" => "Plateau height gamma",
        "slope0" => "Slope f'(0)",
        "gammas" => "Comma-separated plateau heights of a multi-scale feedback, outermost first",
        "feedback-file" => "Breakpoint table written by a previous run (feedback.txt)",
        "seed-ramp" => "History phi(s) = A(s + 1)",
        "seed-constant" => "History phi(s) = level",
        "seed-file" => "History segment file (segment.txt)",
        "n" => "Grid points per unit delay",
        "t-max" => "Integration end time",
        "horizon" => "Integration horizon for one application of the return map",
        "tol" => "Convergence tolerance",
        "max-iter" => "Maximum return-map iterations",
        "lo" => "Lower end of the amplitude range",
        "hi" => "Upper end of the amplitude range",
        "count" => "Number of samples",
        "step" => "RK4 step of the planar system",
        "name" => "Scenario name",
        "out" => "Output directory (default: $SOPLAB_OUT or ./soplab-out)",
        _ => "",
    }
}

/// Errors with their process exit code.
#[derive(Debug)]
pub enum CliError {
    /// An assertion of the run failed.
    Assertion(String),
    /// Bad flags, config file or input files.
    Usage(String),
    /// Non-convergence, conservation breach and similar.
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Assertion(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Assertion(m) => write!(f, "assertion failed: {m}"),
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
        }
    }
}

impl From<sop_core::Error> for CliError {
    fn from(e: sop_core::Error) -> Self {
        use sop_core::Error as E;
        match e {
            E::NoBracket { .. }
            | E::NoAxisHit { .. }
            | E::HamiltonianDrift { .. }
            | E::ConeReentry(_)
            | E::SameClassification { .. }
            | E::Unclassified(_) => CliError::Numeric(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Clone, Debug, PartialEq)]
pub enum FeedbackSpec {
    Hpp { params: HppParams, slope0: f64 },
    Multiscale { gammas: Vec<f64>, slope0: Option<f64> },
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub enum SeedSpec {
    Ramp(f64),
    Constant(f64),
    File(PathBuf),
}

/// Numeric knobs; `None` where the command supplies a data-dependent default.
#[derive(Clone, Debug, PartialEq)]
pub struct Knobs {
    pub n: usize,
    pub t_max: f64,
    pub horizon: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub count: usize,
    pub step: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: CommandKind,
    pub feedback: Option<FeedbackSpec>,
    pub seed: Option<SeedSpec>,
    pub knobs: Knobs,
    pub name: Option<String>,
    pub out: PathBuf,
    /// Effective `key = value` pairs, defaults included.
    pub effective: Vec<(String, String)>,
}

impl RunConfig {
    /// `config.txt` contents; feeding it back with `--config` reproduces the run.
    pub fn echo(&self) -> String {
        let mut out = format!("command = {}\n", self.command);
        for (k, v) in &self.effective {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }
}

/// Parses a `key = value` file with `#` comments.
pub fn parse_config_file(path: &Path, command: CommandKind) -> CliResult<BTreeMap<String, String>> {
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config file `{}`: {e}", path.display())))?;
    let allowed = command.keys();
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            usage(format!("{}:{}: expected `key = value`, got `{line}`", path.display(), i + 1))
        })?;
        let (k, v) = (k.trim(), v.trim());
        if k == "command" {
            if v != command.name() {
                return Err(usage(format!(
                    "{}:{}: config is for command `{v}`, not `{command}`",
                    path.display(),
                    i + 1
                )));
            }
            continue;
        }
        if !allowed.contains(&k) {
            return Err(usage(format!(
                "{}:{}: unknown key `{k}` for `{command}`",
                path.display(),
                i + 1
            )));
        }
        map.insert(k.to_string(), v.to_string());
    }
    Ok(map)
}

struct Values {
    map: BTreeMap<String, String>,
}

impl Values {
    fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|s| s.as_str())
    }

    fn f64(&self, key: &str) -> CliResult<Option<f64>> {
        self.raw(key)
            .map(|v| {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| usage(format!("malformed number `{v}` for --{key}")))
            })
            .transpose()
    }

    fn usize(&self, key: &str) -> CliResult<Option<usize>> {
        self.raw(key)
            .map(|v| {
                v.parse::<usize>()
                    .map_err(|_| usage(format!("malformed integer `{v}` for --{key}")))
            })
            .transpose()
    }

    fn positive(&self, key: &str, default: f64) -> CliResult<f64> {
        let v = self.f64(key)?.unwrap_or(default);
        if v > 0.0 {
            Ok(v)
        } else {
            Err(usage(format!("--{key} must be > 0, got {v}")))
        }
    }

    fn path(&self, key: &str) -> CliResult<Option<PathBuf>> {
        match self.raw(key) {
            None => Ok(None),
            Some(p) => {
                let p = PathBuf::from(p);
                if p.is_file() {
                    Ok(Some(p))
                } else {
                    Err(usage(format!("--{key}: file `{}` does not exist", p.display())))
                }
            }
        }
    }
}

fn feedback_spec(v: &Values, command: CommandKind) -> CliResult<Option<FeedbackSpec>> {
    let hpp_keys = ["a", "c", "delta", "gamma"];
    let given: Vec<&str> = hpp_keys.iter().copied().filter(|k| v.raw(k).is_some()).collect();
    let file = v.path("feedback-file")?;
    let gammas = v.raw("gammas");
    let kinds = [!given.is_empty(), gammas.is_some(), file.is_some()];
    match kinds.iter().filter(|&&b| b).count() {
        0 if command == CommandKind::Scenario => return Ok(None),
        0 => {
            return Err(usage(
                "no feedback given: use --a/--c/--delta/--gamma/--slope0, --gammas or --feedback-file",
            ))
        }
        1 => {}
        _ => {
            return Err(usage(
                "give exactly one of --a/--c/--delta/--gamma, --gammas or --feedback-file",
            ))
        }
    }
    let slope0 = v.f64("slope0")?;
    if let Some(p) = file {
        if slope0.is_some() {
            return Err(usage("--slope0 cannot be combined with --feedback-file"));
        }
        return Ok(Some(FeedbackSpec::File(p)));
    }
    if let Some(list) = gammas {
        let gammas = list
            .split(',')
            .map(|s| {
                let s = s.trim();
                s.parse::<f64>()
                    .map_err(|_| usage(format!("malformed number `{s}` in --gammas")))
            })
            .collect::<CliResult<Vec<_>>>()?;
        return Ok(Some(FeedbackSpec::Multiscale { gammas, slope0 }));
    }
    let mut vals = [0.0; 4];
    for (slot, key) in vals.iter_mut().zip(hpp_keys) {
        *slot = v
            .f64(key)?
            .ok_or_else(|| usage(format!("--{key} is required with --{}", given[0])))?;
    }
    let params = HppParams::new(vals[0], vals[1], vals[2], vals[3]);
    if command == CommandKind::Validate {
        return Ok(Some(FeedbackSpec::Hpp {
            params,
            slope0: slope0.unwrap_or(f64::NAN),
        }));
    }
    let slope0 = slope0.ok_or_else(|| usage("--slope0 is required with --a/--c/--delta/--gamma"))?;
    Ok(Some(FeedbackSpec::Hpp { params, slope0 }))
}

fn seed_spec(v: &Values) -> CliResult<Option<SeedSpec>> {
    let mut found = Vec::new();
    if let Some(a) = v.f64("seed-ramp")? {
        found.push(SeedSpec::Ramp(a));
    }
    if let Some(c) = v.f64("seed-constant")? {
        found.push(SeedSpec::Constant(c));
    }
    if let Some(p) = v.path("seed-file")? {
        found.push(SeedSpec::File(p));
    }
    if found.len() > 1 {
        return Err(usage("give at most one of --seed-ramp, --seed-constant, --seed-file"));
    }
    Ok(found.pop())
}

/// Builds the effective configuration from file values overridden by flags.
pub fn resolve(
    command: CommandKind,
    file: Option<&Path>,
    flags: BTreeMap<String, String>,
) -> CliResult<RunConfig> {
    let mut map = match file {
        Some(p) => parse_config_file(p, command)?,
        None => BTreeMap::new(),
    };
    let allowed = command.keys();
    for (k, val) in flags {
        if !allowed.contains(&k.as_str()) {
            return Err(usage(format!("unknown key `{k}` for `{command}`")));
        }
        map.insert(k, val);
    }
    let ky_tol = command == CommandKind::Ky;
    let defaults: [(&str, String); 7] = [
        ("n", "1000".into()),
        ("t-max", "20".into()),
        ("horizon", "200".into()),
        ("tol", if ky_tol { "1e-9" } else { "1e-6" }.into()),
        ("max-iter", "50".into()),
        ("count", "200".into()),
        ("step", "0.0001".into()),
    ];
    for (k, d) in defaults {
        if allowed.contains(&k) {
            map.entry(k.to_string()).or_insert(d);
        }
    }
    let out = match map.get("out") {
        Some(p) => PathBuf::from(p),
        None => std::env::var_os(OUT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
    };
    map.insert("out".to_string(), out.display().to_string());

    let v = Values { map };
    let n = v.usize("n")?.unwrap_or(1000);
    if n < 2 {
        return Err(usage(format!("--n must be >= 2, got {n}")));
    }
    let knobs = Knobs {
        n,
        t_max: v.positive("t-max", 20.0)?,
        horizon: v.positive("horizon", 200.0)?,
        tol: v.positive("tol", 1e-6)?,
        max_iter: v.usize("max-iter")?.unwrap_or(50),
        lo: v.f64("lo")?,
        hi: v.f64("hi")?,
        count: v.usize("count")?.unwrap_or(200),
        step: v.positive("step", 1e-4)?,
    };
    let feedback = if command == CommandKind::Scenario {
        None
    } else {
        feedback_spec(&v, command)?
    };
    let name = v.raw("name").map(str::to_string);
    if command == CommandKind::Scenario && name.is_none() {
        return Err(usage("scenario needs --name"));
    }
    let effective = allowed
        .iter()
        .filter_map(|k| v.raw(k).map(|val| (k.to_string(), val.to_string())))
        .collect();
    Ok(RunConfig {
        command,
        feedback,
        seed: seed_spec(&v)?,
        knobs,
        name,
        out,
        effective,
    })
}
