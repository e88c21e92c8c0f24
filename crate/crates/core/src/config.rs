//! Run files for the `kinklab` binary.
//!
//! A run file is TOML with one top-level `mode` and a handful of sections:
//!
//! ```toml
//! mode = "evolve"          # evolve | spectrum | static | sweep | collective
//! name = "fig1"
//!
//! [physics]                # m, lambda, gamma, h, a or w, x_c
//! [numerics]               # x_min, x_max, dx, dt, t_end, newton_tol, newton_max_iters, sponge
//! [initial]                # kind = "kink" (x0, v) | "pulse" (amplitude, width, center)
//!                          #      | "static" (center, displacement)
//! [io]                     # probes, record_every, snapshot_times
//! [analysis]               # window = [t0, t1], escape_radius
//! [collective]             # x0, x0_dot, dt, t_end, ansatz = "kink" | "quadratic"
//! [sweep]                  # retries, perturbation, seed, workers
//! [[case]]                 # h, a or w, x_c, kink_center (static and sweep modes)
//! ```
//!
//! Unknown keys are rejected with their full path (`physics.depth`,
//! `case[2].xc`).

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;
use toml::{Table, Value};

use crate::collective::{self, Ansatz, CollectiveError, CollectiveState, Placement, WellQuadratic};
use crate::diagnostics::{self, DiagnosticsError, ProbeSeries, RunSummary};
use crate::dynamics::{self, DynamicsError, EvolveConfig, InitialCondition, MAX_COURANT};
use crate::model::{Grid, Impurity, ModelError, ModelParams};
use crate::output;
use crate::statics::{
    self, NewtonOptions, ShootOptions, StaticProblem, StaticsError, SweepCell, SweepOptions,
    WidthSpec, EDGE_POTENTIAL_TOL,
};

pub const PRESETS: [(&str, &str); 6] = [
    ("fig1", include_str!("../presets/fig1.toml")),
    ("fig2", include_str!("../presets/fig2.toml")),
    ("fig3", include_str!("../presets/fig3.toml")),
    ("fig4", include_str!("../presets/fig4.toml")),
    ("fig5", include_str!("../presets/fig5.toml")),
    ("table1", include_str!("../presets/table1.toml")),
];

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Read { path: String, message: String },
    #[error("TOML syntax: {0}")]
    Syntax(String),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("missing key `{0}`")]
    MissingKey(String),
    #[error("bad value for `{key}`: {reason}")]
    BadValue { key: String, reason: String },
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
}

impl ConfigError {
    /// The offending key, when there is one.
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::UnknownKey(k) | ConfigError::MissingKey(k) => Some(k),
            ConfigError::BadValue { key, .. } => Some(key),
            _ => None,
        }
    }

    fn bad(key: impl Into<String>, reason: impl fmt::Display) -> Self {
        ConfigError::BadValue {
            key: key.into(),
            reason: reason.to_string(),
        }
    }

    fn from_model(section: &str, e: ModelError) -> Self {
        match e {
            ModelError::InvalidParameter { name, reason } => Self::bad(format!("{section}.{name}"), reason),
            other => Self::bad(section, other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Evolve,
    Spectrum,
    Static,
    Sweep,
    Collective,
}

impl Mode {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "evolve" => Mode::Evolve,
            "spectrum" => Mode::Spectrum,
            "static" => Mode::Static,
            "sweep" => Mode::Sweep,
            "collective" => Mode::Collective,
            _ => return None,
        })
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Evolve => "evolve",
            Mode::Spectrum => "spectrum",
            Mode::Static => "static",
            Mode::Sweep => "sweep",
            Mode::Collective => "collective",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Numerics {
    pub x_min: Option<f64>,
    pub x_max: Option<f64>,
    pub dx: Option<f64>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub newton: NewtonOptions,
    pub sponge: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialSpec {
    Kink { x0: f64, v: f64 },
    Pulse { amplitude: f64, width: f64, center: f64 },
    /// Static profile with its kink at `center`, shifted by `displacement`.
    Static { center: f64, displacement: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct IoSpec {
    pub probes: Vec<f64>,
    pub record_every: usize,
    pub snapshot_times: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisSpec {
    pub window: Option<(f64, f64)>,
    pub escape_radius: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollectiveSpec {
    pub initial: CollectiveState,
    pub dt: f64,
    pub t_end: f64,
    pub ansatz: Ansatz,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub name: String,
    pub mode: Mode,
    pub params: ModelParams,
    pub imp: Impurity,
    pub numerics: Numerics,
    pub initial: Option<InitialSpec>,
    pub io: IoSpec,
    pub analysis: AnalysisSpec,
    pub collective: Option<CollectiveSpec>,
    pub sweep: SweepOptions,
    pub cases: Vec<SweepCell>,
    /// The text the config was parsed from, checksummed into the manifest.
    pub source: String,
}

struct Section<'a> {
    path: String,
    table: Option<&'a Table>,
}

impl<'a> Section<'a> {
    fn new(path: impl Into<String>, table: Option<&'a Table>, allowed: &[&str]) -> Result<Self, ConfigError> {
        let path = path.into();
        if let Some(t) = table {
            // BTreeMap order, so the first unknown key reported is stable
            if let Some(k) = t.keys().find(|k| !allowed.contains(&k.as_str())) {
                return Err(ConfigError::UnknownKey(format!("{path}.{k}")));
            }
        }
        Ok(Self { path, table })
    }

    fn key(&self, k: &str) -> String {
        format!("{}.{k}", self.path)
    }

    fn get(&self, k: &str) -> Option<&'a Value> {
        self.table.and_then(|t| t.get(k))
    }

    fn f64(&self, k: &str) -> Result<Option<f64>, ConfigError> {
        match self.get(k) {
            None => Ok(None),
            Some(v) => as_f64(v).map(Some).ok_or_else(|| ConfigError::bad(self.key(k), "expected a number")),
        }
    }

    fn f64_or(&self, k: &str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.f64(k)?.unwrap_or(default))
    }

    fn req_f64(&self, k: &str) -> Result<f64, ConfigError> {
        self.f64(k)?.ok_or_else(|| ConfigError::MissingKey(self.key(k)))
    }

    fn uint(&self, k: &str) -> Result<Option<u64>, ConfigError> {
        match self.get(k) {
            None => Ok(None),
            Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
            Some(_) => Err(ConfigError::bad(self.key(k), "expected a non-negative integer")),
        }
    }

    fn bool(&self, k: &str) -> Result<Option<bool>, ConfigError> {
        match self.get(k) {
            None => Ok(None),
            Some(Value::Boolean(b)) => Ok(Some(*b)),
            Some(_) => Err(ConfigError::bad(self.key(k), "expected true or false")),
        }
    }

    fn str(&self, k: &str) -> Result<Option<&'a str>, ConfigError> {
        match self.get(k) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(_) => Err(ConfigError::bad(self.key(k), "expected a string")),
        }
    }

    fn f64_list(&self, k: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        match self.get(k) {
            None => Ok(None),
            Some(Value::Array(items)) => items
                .iter()
                .enumerate()
                .map(|(i, v)| as_f64(v).ok_or_else(|| ConfigError::bad(format!("{}[{i}]", self.key(k)), "expected a number")))
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
            Some(_) => Err(ConfigError::bad(self.key(k), "expected an array of numbers")),
        }
    }

    /// Either `a` or `w` (a = 6/w); `a = 1` when neither is given and h = 0.
    fn width(&self, h: f64) -> Result<WidthSpec, ConfigError> {
        match (self.f64("a")?, self.f64("w")?) {
            (Some(_), Some(_)) => Err(ConfigError::bad(self.key("w"), "give either a or w, not both")),
            (Some(a), None) => Ok(WidthSpec::A(a)),
            (None, Some(w)) => Ok(WidthSpec::W(w)),
            (None, None) if h == 0.0 => Ok(WidthSpec::A(1.0)),
            (None, None) => Err(ConfigError::MissingKey(self.key("a"))),
        }
    }
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Float(f) => Some(*f),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

fn sub_table<'a>(root: &'a Table, name: &str) -> Result<Option<&'a Table>, ConfigError> {
    match root.get(name) {
        None => Ok(None),
        Some(Value::Table(t)) => Ok(Some(t)),
        Some(_) => Err(ConfigError::bad(name, "expected a table")),
    }
}

const TOP_KEYS: [&str; 10] = [
    "mode", "name", "physics", "numerics", "initial", "io", "analysis", "collective", "sweep", "case",
];
const CASE_KEYS: [&str; 5] = ["h", "a", "w", "x_c", "kink_center"];

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
        Self::parse(&text, stem)
    }

    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        let text = preset(name).ok_or_else(|| ConfigError::UnknownPreset(name.to_string()))?;
        Self::parse(text, name)
    }

    /// Parse `text`; `default_name` is used when the file has no `name` key.
    pub fn parse(text: &str, default_name: &str) -> Result<Self, ConfigError> {
        let root: Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Syntax(e.message().to_string()))?;
        if let Some(k) = root.keys().find(|k| !TOP_KEYS.contains(&k.as_str())) {
            return Err(ConfigError::UnknownKey(k.clone()));
        }
        let mode_str = match root.get("mode") {
            None => return Err(ConfigError::MissingKey("mode".into())),
            Some(Value::String(s)) => s.as_str(),
            Some(_) => return Err(ConfigError::bad("mode", "expected a string")),
        };
        let mode = Mode::parse(mode_str).ok_or_else(|| {
            ConfigError::bad("mode", format!("`{mode_str}` is not one of evolve, spectrum, static, sweep, collective"))
        })?;
        let name = match root.get("name") {
            None => default_name.to_string(),
            Some(Value::String(s)) => s.clone(),
            Some(_) => return Err(ConfigError::bad("name", "expected a string")),
        };

        let physics = Section::new(
            "physics",
            sub_table(&root, "physics")?,
            &["m", "lambda", "gamma", "h", "a", "w", "x_c"],
        )?;
        let params = ModelParams::new(
            physics.f64_or("m", 1.0)?,
            physics.f64_or("lambda", 1.0)?,
            physics.f64_or("gamma", 0.0)?,
        )
        .map_err(|e| ConfigError::from_model("physics", e))?;
        let h = physics.f64_or("h", 0.0)?;
        let imp = physics
            .width(h)?
            .impurity(h, physics.f64_or("x_c", 0.0)?)
            .map_err(|e| ConfigError::from_model("physics", e))?;

        let num = Section::new(
            "numerics",
            sub_table(&root, "numerics")?,
            &["x_min", "x_max", "dx", "dt", "t_end", "newton_tol", "newton_max_iters", "sponge"],
        )?;
        let defaults = NewtonOptions::default();
        let newton = NewtonOptions {
            tol: num.f64_or("newton_tol", defaults.tol)?,
            max_iters: num.uint("newton_max_iters")?.map_or(defaults.max_iters, |v| v as usize),
            ..defaults
        };
        if !(newton.tol > 0.0) {
            return Err(ConfigError::bad("numerics.newton_tol", "must be > 0"));
        }
        let numerics = Numerics {
            x_min: num.f64("x_min")?,
            x_max: num.f64("x_max")?,
            dx: num.f64("dx")?,
            dt: num.f64("dt")?,
            t_end: num.f64("t_end")?,
            newton,
            sponge: num.bool("sponge")?.unwrap_or(false),
        };
        for (k, v) in [("dx", numerics.dx), ("dt", numerics.dt), ("t_end", numerics.t_end)] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return Err(ConfigError::bad(format!("numerics.{k}"), format!("must be > 0, got {v}")));
                }
            }
        }

        let init = Section::new(
            "initial",
            sub_table(&root, "initial")?,
            &["kind", "x0", "v", "amplitude", "width", "center", "displacement"],
        )?;
        let initial = match init.str("kind")? {
            None if init.table.is_none() => None,
            None => return Err(ConfigError::MissingKey("initial.kind".into())),
            Some("kink") => Some(InitialSpec::Kink {
                x0: init.req_f64("x0")?,
                v: init.f64_or("v", 0.0)?,
            }),
            Some("pulse") => Some(InitialSpec::Pulse {
                amplitude: init.req_f64("amplitude")?,
                width: init.f64_or("width", 1.0)?,
                center: init.f64_or("center", 0.0)?,
            }),
            Some("static") => Some(InitialSpec::Static {
                center: init.f64_or("center", imp.x_c)?,
                displacement: init.f64_or("displacement", 0.0)?,
            }),
            Some(other) => {
                return Err(ConfigError::bad(
                    "initial.kind",
                    format!("`{other}` is not one of kink, pulse, static"),
                ))
            }
        };
        if let Some(InitialSpec::Kink { v, .. }) = initial {
            if !(v.abs() < 1.0) {
                return Err(ConfigError::bad("initial.v", format!("|v| must be < 1, got {v}")));
            }
        }

        let io_sec = Section::new("io", sub_table(&root, "io")?, &["probes", "record_every", "snapshot_times"])?;
        let io = IoSpec {
            probes: io_sec.f64_list("probes")?.unwrap_or_default(),
            record_every: io_sec.uint("record_every")?.map_or(1, |v| v as usize),
            snapshot_times: io_sec.f64_list("snapshot_times")?.unwrap_or_default(),
        };
        if io.record_every == 0 {
            return Err(ConfigError::bad("io.record_every", "must be >= 1"));
        }

        let an = Section::new("analysis", sub_table(&root, "analysis")?, &["window", "escape_radius"])?;
        let window = match an.f64_list("window")? {
            None => None,
            Some(w) if w.len() == 2 && w[0] < w[1] => Some((w[0], w[1])),
            Some(_) => return Err(ConfigError::bad("analysis.window", "expected [t0, t1] with t0 < t1")),
        };
        let analysis = AnalysisSpec {
            window,
            escape_radius: an.f64("escape_radius")?,
        };

        let cc = Section::new(
            "collective",
            sub_table(&root, "collective")?,
            &["x0", "x0_dot", "dt", "t_end", "ansatz"],
        )?;
        let collective = match cc.table {
            None => None,
            Some(_) => Some(CollectiveSpec {
                initial: CollectiveState {
                    x0: cc.req_f64("x0")?,
                    x0_dot: cc.f64_or("x0_dot", 0.0)?,
                },
                dt: cc.f64_or("dt", 0.01)?,
                t_end: cc.req_f64("t_end")?,
                ansatz: match cc.str("ansatz")?.unwrap_or("kink") {
                    "kink" => Ansatz::Kink,
                    "quadratic" => Ansatz::Quadratic,
                    other => {
                        return Err(ConfigError::bad(
                            "collective.ansatz",
                            format!("`{other}` is not one of kink, quadratic"),
                        ))
                    }
                },
            }),
        };

        let sw = Section::new(
            "sweep",
            sub_table(&root, "sweep")?,
            &["retries", "perturbation", "seed", "workers"],
        )?;
        let sd = SweepOptions::default();
        let sweep = SweepOptions {
            newton,
            retries: sw.uint("retries")?.map_or(sd.retries, |v| v as usize),
            perturbation: sw.f64_or("perturbation", sd.perturbation)?,
            seed: sw.uint("seed")?.unwrap_or(sd.seed),
            workers: sw.uint("workers")?.map_or(sd.workers, |v| v as usize).max(1),
            dx: numerics.dx.unwrap_or(statics::DEFAULT_DX),
        };

        let cases = match root.get("case") {
            None => Vec::new(),
            Some(Value::Array(items)) => items
                .iter()
                .enumerate()
                .map(|(i, item)| parse_case(i, item))
                .collect::<Result<Vec<_>, _>>()?,
            Some(_) => return Err(ConfigError::bad("case", "expected [[case]] tables")),
        };

        let cfg = RunConfig {
            name,
            mode,
            params,
            imp,
            numerics,
            initial,
            io,
            analysis,
            collective,
            sweep,
            cases,
            source: text.to_string(),
        };
        cfg.check_required()?;
        Ok(cfg)
    }

    fn check_required(&self) -> Result<(), ConfigError> {
        match self.mode {
            Mode::Evolve | Mode::Spectrum => {
                let n = &self.numerics;
                for (k, v) in [("x_min", n.x_min), ("x_max", n.x_max), ("dx", n.dx), ("t_end", n.t_end)] {
                    if v.is_none() {
                        return Err(ConfigError::MissingKey(format!("numerics.{k}")));
                    }
                }
                if self.initial.is_none() {
                    return Err(ConfigError::MissingKey("initial".into()));
                }
                if self.mode == Mode::Spectrum && self.io.probes.is_empty() {
                    return Err(ConfigError::MissingKey("io.probes".into()));
                }
            }
            Mode::Static | Mode::Sweep => {
                if self.cases.is_empty() {
                    return Err(ConfigError::MissingKey("case".into()));
                }
            }
            Mode::Collective => {
                if self.collective.is_none() {
                    return Err(ConfigError::MissingKey("collective".into()));
                }
            }
        }
        Ok(())
    }

    /// Grid of an evolve or spectrum run.
    pub fn grid(&self) -> Result<Grid, ConfigError> {
        let n = &self.numerics;
        match (n.x_min, n.x_max, n.dx) {
            (Some(lo), Some(hi), Some(dx)) => Grid::new(lo, hi, dx).map_err(|e| ConfigError::bad("numerics", e)),
            (None, _, _) => Err(ConfigError::MissingKey("numerics.x_min".into())),
            (_, None, _) => Err(ConfigError::MissingKey("numerics.x_max".into())),
            (_, _, None) => Err(ConfigError::MissingKey("numerics.dx".into())),
        }
    }

    /// Time step: the configured one, else half the grid spacing.
    pub fn dt(&self) -> Option<f64> {
        self.numerics
            .dt
            .or_else(|| self.numerics.dx.map(|dx| dynamics::DEFAULT_COURANT * dx))
    }
}

fn parse_case(i: usize, item: &Value) -> Result<SweepCell, ConfigError> {
    let path = format!("case[{i}]");
    let table = match item {
        Value::Table(t) => t,
        _ => return Err(ConfigError::bad(path, "expected a table")),
    };
    let s = Section::new(path.clone(), Some(table), &CASE_KEYS)?;
    let h = s.req_f64("h")?;
    let width = s.width(h)?;
    let x_c = s.f64_or("x_c", 0.0)?;
    width.impurity(h, x_c).map_err(|e| ConfigError::from_model(&path, e))?;
    Ok(SweepCell {
        h,
        width,
        x_c,
        kink_center: s.f64_or("kink_center", 0.0)?,
    })
}

/// One finding of [`validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Issue {
    /// Error name of the module that would reject the run.
    pub kind: &'static str,
    pub key: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error,{},{}: {}", self.kind, self.key, self.message)
    }
}

/// Static checks on a parsed config: CFL, impurity tails inside the domain,
/// probe and kink placement. Never runs any physics.
pub fn validate(cfg: &RunConfig) -> Vec<Issue> {
    let mut issues = Vec::new();
    let mut push = |kind, key: &str, message: String| {
        issues.push(Issue {
            kind,
            key: key.to_string(),
            message,
        })
    };
    match cfg.mode {
        Mode::Evolve | Mode::Spectrum => {
            let grid = match cfg.grid() {
                Ok(g) => g,
                Err(e) => {
                    push("InvalidGrid", "numerics", e.to_string());
                    return issues;
                }
            };
            let dx = grid.dx();
            let dt = cfg.dt().unwrap_or(f64::NAN);
            if dt > MAX_COURANT * dx * (1.0 + 1e-12) {
                push(
                    "CflViolation",
                    "numerics.dt",
                    format!("dt = {dt} exceeds the stability limit dx = {dx}"),
                );
            }
            for x in [grid.x_min(), grid.x_max()] {
                let v = cfg.imp.value(x);
                if v.abs() >= EDGE_POTENTIAL_TOL {
                    push(
                        "DomainTooNarrow",
                        "numerics",
                        format!("impurity tail |V| = {:e} at the edge x = {x}", v.abs()),
                    );
                }
            }
            for (i, &p) in cfg.io.probes.iter().enumerate() {
                if !grid.contains(p) {
                    push(
                        "ProbeOutsideGrid",
                        &format!("io.probes[{i}]"),
                        format!("probe at x = {p} lies outside [{}, {}]", grid.x_min(), grid.x_max()),
                    );
                }
            }
            match cfg.initial {
                Some(InitialSpec::Kink { x0, .. }) if !grid.contains(x0) => push(
                    "KinkOutsideGrid",
                    "initial.x0",
                    format!("kink center x0 = {x0} lies outside the grid"),
                ),
                Some(InitialSpec::Static { center, displacement }) if !grid.contains(center + displacement) => push(
                    "KinkOutsideGrid",
                    "initial.center",
                    format!("displaced kink center {} lies outside the grid", center + displacement),
                ),
                _ => {}
            }
            let t_end = cfg.numerics.t_end.unwrap_or(0.0);
            for (i, &t) in cfg.io.snapshot_times.iter().enumerate() {
                if !(0.0..=t_end).contains(&t) {
                    push(
                        "InvalidConfig",
                        &format!("io.snapshot_times[{i}]"),
                        format!("snapshot time {t} lies outside [0, {t_end}]"),
                    );
                }
            }
            if let Some((t0, t1)) = cfg.analysis.window {
                if t0 < 0.0 || t1 > t_end {
                    push(
                        "InvalidConfig",
                        "analysis.window",
                        format!("window [{t0}, {t1}] lies outside [0, {t_end}]"),
                    );
                }
            }
        }
        Mode::Static | Mode::Sweep => {
            let dx = cfg.numerics.dx.unwrap_or(statics::DEFAULT_DX);
            for (i, cell) in cfg.cases.iter().enumerate() {
                if let Err(e) = cell.problem(cfg.params, dx) {
                    push(e.kind(), &format!("case[{i}]"), e.to_string());
                }
            }
        }
        Mode::Collective => {
            let spec = cfg.collective.expect("checked at parse time");
            if !(spec.dt > 0.0 && spec.t_end > 0.0) {
                push(
                    "InvalidSettings",
                    "collective",
                    format!("need dt > 0 and t_end > 0, got dt = {}, t_end = {}", spec.dt, spec.t_end),
                );
            }
            if let Err(e) = collective::acceleration(&cfg.params, &cfg.imp, spec.initial.x0, spec.ansatz) {
                push(e.kind(), "collective.x0", e.to_string());
            }
        }
    }
    issues
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Statics(#[from] StaticsError),
    #[error(transparent)]
    Collective(#[from] CollectiveError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
}

impl RunError {
    pub fn kind(&self) -> &'static str {
        match self {
            RunError::Config(_) => "ConfigError",
            RunError::Model(e) => e.kind(),
            RunError::Dynamics(e) => e.kind(),
            RunError::Statics(e) => e.kind(),
            RunError::Collective(e) => e.kind(),
            RunError::Diagnostics(e) => e.kind(),
            RunError::Io { .. } => "IoError",
        }
    }

    /// `error,<Kind>,<message>` on one line.
    pub fn record(&self) -> String {
        format!("error,{},{}", self.kind(), self.to_string().replace('\n', " "))
    }
}

/// What a run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    /// Files written, relative to the output directory, sorted.
    pub files: Vec<String>,
    /// Summary lines, also written to the output directory.
    pub summary: Vec<String>,
}

struct OutDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutDir {
    fn create(root: &Path) -> Result<Self, RunError> {
        fs::create_dir_all(root).map_err(|source| RunError::Io {
            path: root.display().to_string(),
            source,
        })?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> io::Result<()>) -> Result<(), RunError> {
        let mut buf = Vec::new();
        f(&mut buf).expect("writing to memory");
        let path = self.root.join(name);
        fs::write(&path, buf).map_err(|source| RunError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.files.push(name.to_string());
        Ok(())
    }
}

/// Execute `cfg`, writing its outputs and `manifest.txt` into `out`.
pub fn run(cfg: &RunConfig, out: &Path) -> Result<RunReport, RunError> {
    let mut dir = OutDir::create(out)?;
    let summary = match cfg.mode {
        Mode::Evolve | Mode::Spectrum => run_evolve(cfg, &mut dir)?,
        Mode::Static => run_static(cfg, &mut dir)?,
        Mode::Sweep => run_sweep(cfg, &mut dir)?,
        Mode::Collective => run_collective(cfg, &mut dir)?,
    };
    dir.write("summary.txt", |w| {
        for line in &summary {
            writeln!(w, "{line}")?;
        }
        Ok(())
    })?;
    dir.files.sort();
    let manifest = manifest(cfg, &dir)?;
    dir.write("manifest.txt", |w| w.write_all(manifest.as_bytes()))?;
    let mut files = dir.files;
    files.sort();
    Ok(RunReport { files, summary })
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn manifest(cfg: &RunConfig, dir: &OutDir) -> Result<String, RunError> {
    let mut m = String::new();
    m.push_str(&format!("kinklab {}\n", env!("CARGO_PKG_VERSION")));
    m.push_str(&format!("name {}\n", cfg.name));
    m.push_str(&format!("mode {}\n", cfg.mode.as_str()));
    m.push_str(&format!("config_sha256 {}\n", sha256_hex(cfg.source.as_bytes())));
    if matches!(cfg.mode, Mode::Sweep) {
        m.push_str(&format!("seed {}\n", cfg.sweep.seed));
    }
    m.push_str("\n[input]\n");
    m.push_str(&cfg.source);
    if !cfg.source.ends_with('\n') {
        m.push('\n');
    }
    m.push_str("\n[files]\n");
    for name in &dir.files {
        let path = dir.root.join(name);
        let bytes = fs::read(&path).map_err(|source| RunError::Io {
            path: path.display().to_string(),
            source,
        })?;
        m.push_str(&format!("{}  {name}\n", sha256_hex(&bytes)));
    }
    Ok(m)
}

/// Build the evolution config of an evolve or spectrum run. Static initial
/// data is solved for on the run grid first.
pub fn evolve_config(cfg: &RunConfig) -> Result<EvolveConfig, RunError> {
    let grid = cfg.grid()?;
    let t_end = cfg.numerics.t_end.ok_or_else(|| ConfigError::MissingKey("numerics.t_end".into()))?;
    let initial = match cfg.initial.ok_or_else(|| ConfigError::MissingKey("initial".into()))? {
        InitialSpec::Kink { x0, v } => InitialCondition::BoostedKink { x0, v },
        InitialSpec::Pulse { amplitude, width, center } => InitialCondition::VacuumPlusPulse {
            amplitude,
            width,
            center,
        },
        InitialSpec::Static { center, displacement } => {
            let problem = StaticProblem::new(cfg.params, cfg.imp, grid, center)?;
            let profile = statics::solve_static(&problem, &cfg.numerics.newton)?;
            InitialCondition::StaticProfile {
                phi: profile.phi,
                center: profile.kink_center,
                displacement,
            }
        }
    };
    let mut ec = EvolveConfig::new(cfg.params, cfg.imp, grid, t_end, initial);
    if let Some(dt) = cfg.numerics.dt {
        ec.dt = dt;
    }
    ec.probes = cfg.io.probes.clone();
    ec.record_every = cfg.io.record_every;
    ec.snapshot_times = cfg.io.snapshot_times.clone();
    ec.sponge = cfg.numerics.sponge;
    Ok(ec)
}

/// Leading frequency measured at the first probe next to the small-oscillation
/// estimate √(2μ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyCheck {
    pub omega_peak: f64,
    pub omega_formula: f64,
}

impl FrequencyCheck {
    pub fn relative_difference(&self) -> f64 {
        (self.omega_peak - self.omega_formula).abs() / self.omega_formula
    }

    pub fn line(&self) -> String {
        format!(
            "frequency,omega_peak={},omega_formula={},rel_diff={}",
            output::num(self.omega_peak),
            output::num(self.omega_formula),
            output::num(self.relative_difference())
        )
    }
}

fn run_evolve(cfg: &RunConfig, dir: &mut OutDir) -> Result<Vec<String>, RunError> {
    let ec = evolve_config(cfg)?;
    let traj = dynamics::evolve(&ec)?;
    dir.write("trajectory.csv", |w| traj.write_csv(w))?;
    for snap in &traj.snapshots {
        let name = format!("snapshot_t{}.csv", output::label(snap.t));
        dir.write(&name, |w| dynamics::write_snapshot(w, &traj.grid, snap))?;
    }

    let mut omega_peak = None;
    let mut turning_time = None;
    if !traj.probes.is_empty() {
        let series = ProbeSeries::from_trajectory(&traj, 0)?;
        let windowed = match cfg.analysis.window {
            Some((t0, t1)) => series.window(t0, t1)?,
            None => series.clone(),
        };
        omega_peak = diagnostics::leading_frequency(&windowed).ok();
        turning_time = diagnostics::envelope(&series).ok().and_then(|e| e.turning_time);
        if cfg.mode == Mode::Spectrum {
            let spec = diagnostics::spectrum(&windowed);
            dir.write("spectrum.csv", |w| {
                writeln!(w, "omega,magnitude")?;
                for (om, mag) in &spec {
                    output::write_row(w, &[*om, *mag])?;
                }
                Ok(())
            })?;
        }
    }
    let outcome = diagnostics::classify_outcome(&traj, &cfg.imp, cfg.analysis.escape_radius);
    let summary = RunSummary {
        outcome,
        omega_peak,
        turning_time,
        energy_final: *traj.energy_series.last().expect("at least one record"),
    };
    let mut lines = vec![summary.line()];
    dir.write("summary.csv", |w| writeln!(w, "{}\n{}", RunSummary::HEADER, summary.line()))?;

    let formula = WellQuadratic::from_impurity(&cfg.imp)
        .and_then(|wq| collective::small_osc_frequency(&wq))
        .ok();
    if let (Some(omega_peak), Some(omega_formula)) = (omega_peak, formula) {
        let check = FrequencyCheck {
            omega_peak,
            omega_formula,
        };
        lines.push(check.line());
        dir.write("frequency.csv", |w| {
            writeln!(w, "omega_peak,omega_formula,rel_diff")?;
            output::write_row(w, &[check.omega_peak, check.omega_formula, check.relative_difference()])
        })?;
    }
    Ok(lines)
}

fn run_static(cfg: &RunConfig, dir: &mut OutDir) -> Result<Vec<String>, RunError> {
    let dx = cfg.numerics.dx.unwrap_or(statics::DEFAULT_DX);
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    for (k, cell) in cfg.cases.iter().enumerate() {
        let problem = cell.problem(cfg.params, dx)?;
        let profile = statics::solve_static(&problem, &cfg.numerics.newton)?;
        dir.write(&format!("profile_{k}.csv"), |w| profile.write_csv(w))?;
        if problem.is_centered() && problem.imp.h < 0.0 {
            let shot = statics::shoot_centered(&problem, &ShootOptions::default())?;
            checks.push((k, shot.slope, profile.slope_at(problem.kink_center), shot.max_deviation(&profile)));
        }
        rows.push(statics::SweepRow {
            cell: *cell,
            result: Ok(profile),
            branches: Vec::new(),
        });
    }
    dir.write("static.csv", |w| statics::write_sweep_csv(w, &rows))?;
    if !checks.is_empty() {
        dir.write("shooting.csv", |w| {
            writeln!(w, "case,slope_shooting,slope_newton,max_deviation")?;
            for (k, s, n, d) in &checks {
                writeln!(w, "{k},{},{},{}", output::num(*s), output::num(*n), output::num(*d))?;
            }
            Ok(())
        })?;
    }
    let energies: Vec<String> = rows
        .iter()
        .map(|r| output::num(r.energy().expect("static rows hold solutions")))
        .collect();
    Ok(vec![format!("static,cases={},energies={}", rows.len(), energies.join(";"))])
}

fn run_sweep(cfg: &RunConfig, dir: &mut OutDir) -> Result<Vec<String>, RunError> {
    let rows = statics::sweep(cfg.params, &cfg.cases, &cfg.sweep);
    dir.write("sweep.csv", |w| statics::write_sweep_csv(w, &rows))?;
    dir.write("branches.csv", |w| statics::write_branch_csv(w, &rows, cfg.sweep.seed))?;
    let failed = rows.iter().filter(|r| r.result.is_err()).count();
    let multi = rows.iter().filter(|r| r.branches.len() > 1).count();
    Ok(vec![format!(
        "sweep,cells={},failed={failed},multiple_branches={multi},seed={}",
        rows.len(),
        cfg.sweep.seed
    )])
}

fn run_collective(cfg: &RunConfig, dir: &mut OutDir) -> Result<Vec<String>, RunError> {
    let spec = cfg.collective.expect("checked at parse time");
    let traj = collective::integrate_cc(&cfg.params, &cfg.imp, spec.ansatz, spec.initial, spec.t_end, spec.dt)?;
    dir.write("collective.csv", |w| traj.write_csv(w))?;
    let placements: &[(&str, Placement)] = if cfg.imp.h > 0.0 {
        &[("barrier_top", Placement::BarrierTop)]
    } else {
        &[
            ("centered", Placement::CenteredAttractive),
            ("off_center", Placement::OffCenterAttractive),
        ]
    };
    let stability: Vec<String> = placements
        .iter()
        .map(|(name, p)| format!("{name}={}", collective::classify_stability(&cfg.params, &cfg.imp, *p)))
        .collect();
    let omega = WellQuadratic::from_impurity(&cfg.imp)
        .and_then(|wq| collective::small_osc_frequency(&wq))
        .map_or_else(|_| "none".to_string(), output::num);
    let last = traj.last();
    Ok(vec![format!(
        "collective,{},omega_small={omega},x0_final={},x0_dot_final={}",
        stability.join(","),
        output::num(last.x0),
        output::num(last.x0_dot)
    )])
}
