//! Command-line front end: configuration documents, scenario dispatch and
//! output files.
//!
//! A configuration is a flat list of `key = value` lines; `#` starts a
//! comment. Real-valued entries accept arithmetic with `+ - * /`, parentheses
//! and `pi` (e.g. `pi/2`). Every key has a default, and a key that does not
//! apply to the selected scenario is rejected.
//!
//! | key | default | scenarios |
//! |-----|---------|-----------|
//! | `scenario` | `evolve-unitary` | all |
//! | `out` | `rotordyn` | all |
//! | `u` | `0.1` | all |
//! | `u_d` | `0` | classical |
//! | `theta0`, `phi0` | `0`, `0` | classical |
//! | `theta_dot0`, `phi_dot0` | `0.32`, `0` | classical |
//! | `gamma_ratio` | `0.01` | evolve-master, evolve-trajectory |
//! | `gamma_ratios` | `0, 0.01` | wigner-snapshots |
//! | `state` | `coherent` | quantum scenarios |
//! | `coherent` | `2, pi/2, 0` | quantum scenarios |
//! | `superposition` | `2, pi/2, pi/4; 2, pi/2, -pi/4` | quantum scenarios |
//! | `j_max` | `12` | quantum scenarios |
//! | `tail_tolerance` | `1e-3` | quantum scenarios |
//! | `dt` | `0.01` | all but spectrum |
//! | `t_end` | `1200` | classical, evolve-* |
//! | `record_stride` | `0` (at most 5000 records) | classical, evolve-* |
//! | `n_traj`, `seed` | `2000`, `0` | evolve-trajectory |
//! | `n_theta`, `n_phi` | `64`, `128` | wigner-snapshots |
//! | `snapshots` | `660, 830, 990, 1165` | wigner-snapshots |
//! | `l_max` | `4` | spectrum |
//!
//! A superposition is a `;`-separated list of coherent states `j, α, β`, each
//! optionally preceded by a weight `w @` where `w` is a real expression or a
//! complex pair `(re, im)`. The state is normalised after summation.

use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_complex::Complex64;

use crate::basis::{
    coherent_state, superposition_state, CoherentSpec, DensityMatrix, ModelParams, PureState,
};
use crate::classical::{
    conserved_quantities, integrate_ode_with_step, lab_angular_momentum, ClassicalParams,
    ClassicalState,
};
use crate::error::{Error, Result};
use crate::evolution::{
    ensemble_average, evolve_master_with, evolve_unitary_with, EvolutionConfig, ObservableRecord,
};
use crate::spectrum::{level_shift_table, LevelShift};
use crate::wigner::{wigner_total, SphereGrid, WignerGrid};

/// Environment variable naming the directory that relative output prefixes
/// are resolved against.
pub const OUT_DIR_ENV: &str = "ROTORDYN_OUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    Classical,
    Spectrum,
    EvolveUnitary,
    EvolveMaster,
    EvolveTrajectory,
    WignerSnapshots,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::Classical,
        Scenario::Spectrum,
        Scenario::EvolveUnitary,
        Scenario::EvolveMaster,
        Scenario::EvolveTrajectory,
        Scenario::WignerSnapshots,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Classical => "classical",
            Scenario::Spectrum => "spectrum",
            Scenario::EvolveUnitary => "evolve-unitary",
            Scenario::EvolveMaster => "evolve-master",
            Scenario::EvolveTrajectory => "evolve-trajectory",
            Scenario::WignerSnapshots => "wigner-snapshots",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Scenario::ALL.iter().map(|sc| sc.name()).collect();
                format!(
                    "unknown scenario `{s}`; expected one of {}",
                    names.join(", ")
                )
            })
    }
}

/// Which initial-state description a quantum run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialKind {
    Coherent,
    Superposition,
}

/// Fully resolved run description. See the module docs for keys and
/// defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub out: String,
    pub u: f64,
    pub u_d: f64,
    pub theta0: f64,
    pub phi0: f64,
    pub theta_dot0: f64,
    pub phi_dot0: f64,
    pub gamma_ratio: f64,
    pub gamma_ratios: Vec<f64>,
    pub state: InitialKind,
    pub coherent: CoherentSpec,
    pub superposition: Vec<(Complex64, CoherentSpec)>,
    pub j_max: u32,
    pub tail_tolerance: f64,
    pub dt: f64,
    pub t_end: f64,
    pub record_stride: usize,
    pub n_traj: usize,
    pub seed: u64,
    pub n_theta: usize,
    pub n_phi: usize,
    pub snapshots: Vec<f64>,
    pub l_max: u32,
}

impl ScenarioConfig {
    pub fn defaults(scenario: Scenario) -> Self {
        let coherent = |beta| CoherentSpec {
            j: 2,
            alpha: PI / 2.0,
            beta,
        };
        Self {
            scenario,
            out: "rotordyn".into(),
            u: 0.1,
            u_d: 0.0,
            theta0: 0.0,
            phi0: 0.0,
            theta_dot0: 0.32,
            phi_dot0: 0.0,
            gamma_ratio: 0.01,
            gamma_ratios: vec![0.0, 0.01],
            state: InitialKind::Coherent,
            coherent: coherent(0.0),
            superposition: vec![
                (Complex64::new(1.0, 0.0), coherent(PI / 4.0)),
                (Complex64::new(1.0, 0.0), coherent(-PI / 4.0)),
            ],
            j_max: 12,
            tail_tolerance: 1e-3,
            dt: 0.01,
            t_end: 1200.0,
            record_stride: 0,
            n_traj: 2000,
            seed: 0,
            n_theta: 64,
            n_phi: 128,
            snapshots: vec![660.0, 830.0, 990.0, 1165.0],
            l_max: 4,
        }
    }

    /// Resolved configuration as a document that parses back to `self`.
    pub fn to_document(&self) -> String {
        let mut doc = String::new();
        for key in KEYS {
            if key.name == "scenario" || !key.applies(self.scenario) {
                continue;
            }
            if key.name == "coherent" && self.state != InitialKind::Coherent
                || key.name == "superposition" && self.state != InitialKind::Superposition
            {
                continue;
            }
            doc.push_str(&format!("{} = {}\n", key.name, self.format_value(key.name)));
        }
        format!("scenario = {}\n{doc}", self.scenario)
    }

    fn format_value(&self, key: &str) -> String {
        let list = |v: &[f64]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        };
        let spec = |c: &CoherentSpec| format!("{}, {}, {}", c.j, c.alpha, c.beta);
        match key {
            "out" => self.out.clone(),
            "u" => self.u.to_string(),
            "u_d" => self.u_d.to_string(),
            "theta0" => self.theta0.to_string(),
            "phi0" => self.phi0.to_string(),
            "theta_dot0" => self.theta_dot0.to_string(),
            "phi_dot0" => self.phi_dot0.to_string(),
            "gamma_ratio" => self.gamma_ratio.to_string(),
            "gamma_ratios" => list(&self.gamma_ratios),
            "state" => match self.state {
                InitialKind::Coherent => "coherent".into(),
                InitialKind::Superposition => "superposition".into(),
            },
            "coherent" => spec(&self.coherent),
            "superposition" => self
                .superposition
                .iter()
                .map(|(w, c)| format!("({}, {}) @ {}", w.re, w.im, spec(c)))
                .collect::<Vec<_>>()
                .join("; "),
            "j_max" => self.j_max.to_string(),
            "tail_tolerance" => self.tail_tolerance.to_string(),
            "dt" => self.dt.to_string(),
            "t_end" => self.t_end.to_string(),
            "record_stride" => self.record_stride.to_string(),
            "n_traj" => self.n_traj.to_string(),
            "seed" => self.seed.to_string(),
            "n_theta" => self.n_theta.to_string(),
            "n_phi" => self.n_phi.to_string(),
            "snapshots" => list(&self.snapshots),
            "l_max" => self.l_max.to_string(),
            _ => unreachable!("key table and formatter disagree on `{key}`"),
        }
    }

    pub fn model_params(&self, gamma_ratio: f64) -> Result<ModelParams> {
        ModelParams::new(self.u, gamma_ratio, self.j_max)
    }

    pub fn evolution_config(&self) -> EvolutionConfig {
        EvolutionConfig {
            dt: self.dt,
            t_end: self.t_end,
            record_stride: self.record_stride,
            n_traj: self.n_traj,
            seed: self.seed,
            tail_tolerance: self.tail_tolerance,
        }
    }

    pub fn initial_state(&self) -> Result<PureState> {
        match self.state {
            InitialKind::Coherent => {
                let c = self.coherent;
                coherent_state(c.j, c.alpha, c.beta, self.j_max)
            }
            InitialKind::Superposition => superposition_state(&self.superposition, self.j_max),
        }
    }

    pub fn classical_initial(&self) -> (ClassicalParams, ClassicalState) {
        let params = ClassicalParams {
            u_d: self.u_d,
            u_alpha: self.u,
        };
        let state = ClassicalState {
            theta: self.theta0,
            phi: self.phi0,
            theta_dot: self.theta_dot0,
            phi_dot: self.phi_dot0,
        };
        (params, state)
    }
}

// ---------------------------------------------------------------------------
// Parsing

struct Key {
    name: &'static str,
    scenarios: &'static [Scenario],
}

impl Key {
    fn applies(&self, s: Scenario) -> bool {
        self.scenarios.contains(&s)
    }
}

use Scenario::*;

const EVERY: &[Scenario] = &[
    Classical,
    Spectrum,
    EvolveUnitary,
    EvolveMaster,
    EvolveTrajectory,
    WignerSnapshots,
];
const QUANTUM: &[Scenario] = &[
    EvolveUnitary,
    EvolveMaster,
    EvolveTrajectory,
    WignerSnapshots,
];
const STEPPED: &[Scenario] = &[
    Classical,
    EvolveUnitary,
    EvolveMaster,
    EvolveTrajectory,
    WignerSnapshots,
];
const TIMESERIES: &[Scenario] = &[Classical, EvolveUnitary, EvolveMaster, EvolveTrajectory];

const KEYS: &[Key] = &[
    Key {
        name: "scenario",
        scenarios: EVERY,
    },
    Key {
        name: "out",
        scenarios: EVERY,
    },
    Key {
        name: "u",
        scenarios: EVERY,
    },
    Key {
        name: "u_d",
        scenarios: &[Classical],
    },
    Key {
        name: "theta0",
        scenarios: &[Classical],
    },
    Key {
        name: "phi0",
        scenarios: &[Classical],
    },
    Key {
        name: "theta_dot0",
        scenarios: &[Classical],
    },
    Key {
        name: "phi_dot0",
        scenarios: &[Classical],
    },
    Key {
        name: "gamma_ratio",
        scenarios: &[EvolveMaster, EvolveTrajectory],
    },
    Key {
        name: "gamma_ratios",
        scenarios: &[WignerSnapshots],
    },
    Key {
        name: "state",
        scenarios: QUANTUM,
    },
    Key {
        name: "coherent",
        scenarios: QUANTUM,
    },
    Key {
        name: "superposition",
        scenarios: QUANTUM,
    },
    Key {
        name: "j_max",
        scenarios: QUANTUM,
    },
    Key {
        name: "tail_tolerance",
        scenarios: QUANTUM,
    },
    Key {
        name: "dt",
        scenarios: STEPPED,
    },
    Key {
        name: "t_end",
        scenarios: TIMESERIES,
    },
    Key {
        name: "record_stride",
        scenarios: TIMESERIES,
    },
    Key {
        name: "n_traj",
        scenarios: &[EvolveTrajectory],
    },
    Key {
        name: "seed",
        scenarios: &[EvolveTrajectory],
    },
    Key {
        name: "n_theta",
        scenarios: &[WignerSnapshots],
    },
    Key {
        name: "n_phi",
        scenarios: &[WignerSnapshots],
    },
    Key {
        name: "snapshots",
        scenarios: &[WignerSnapshots],
    },
    Key {
        name: "l_max",
        scenarios: &[Spectrum],
    },
];

#[derive(Debug, Clone)]
struct Entry {
    key: String,
    value: String,
    line: usize,
}

/// Parse a configuration document on its own; the scenario comes from the
/// `scenario` key or its default.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    parse_config_with(text, None, &[])
}

/// Parse a document for `scenario` (which must agree with a `scenario` key
/// in the document) and apply `overrides` of the form `key=value` on top.
/// Overrides are reported as lines following the document.
pub fn parse_config_with(
    text: &str,
    scenario: Option<Scenario>,
    overrides: &[String],
) -> Result<ScenarioConfig> {
    let mut entries: Vec<Entry> = Vec::new();
    let n_lines = text.lines().count();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let entry = split_entry(content, line)?;
        if let Some(first) = entries.iter().find(|e| e.key == entry.key) {
            return Err(Error::parse(
                line,
                format!(
                    "duplicate key `{}` (first set on line {})",
                    entry.key, first.line
                ),
            ));
        }
        entries.push(entry);
    }
    for (idx, raw) in overrides.iter().enumerate() {
        let line = n_lines + idx + 1;
        let entry = split_entry(raw.trim(), line)
            .map_err(|e| Error::parse(line, format!("--set {raw}: {e}")))?;
        entries.retain(|e| e.key != entry.key);
        entries.push(entry);
    }

    let declared = match entries.iter().find(|e| e.key == "scenario") {
        Some(e) => Some((
            e.value
                .parse::<Scenario>()
                .map_err(|m| Error::parse(e.line, m))?,
            e.line,
        )),
        None => None,
    };
    let scenario = match (scenario, declared) {
        (Some(requested), Some((found, line))) if requested != found => {
            return Err(Error::parse(
                line,
                format!("document is for scenario {found} but {requested} was requested"),
            ))
        }
        (Some(requested), _) => requested,
        (None, Some((found, _))) => found,
        (None, None) => EvolveUnitary,
    };

    let mut cfg = ScenarioConfig::defaults(scenario);
    for e in &entries {
        if e.key == "scenario" {
            continue;
        }
        let key = KEYS
            .iter()
            .find(|k| k.name == e.key)
            .expect("validated in split_entry");
        if !key.applies(scenario) {
            return Err(Error::parse(
                e.line,
                format!("key `{}` does not apply to scenario {scenario}", e.key),
            ));
        }
        assign(&mut cfg, &e.key, &e.value)
            .map_err(|m| Error::parse(e.line, format!("bad value for `{}`: {m}", e.key)))?;
    }
    cross_check(&cfg, &entries)?;
    Ok(cfg)
}

fn split_entry(content: &str, line: usize) -> Result<Entry> {
    let (key, value) = content
        .split_once('=')
        .ok_or_else(|| Error::parse(line, format!("expected `key = value`, found `{content}`")))?;
    let key = key.trim();
    if !KEYS.iter().any(|k| k.name == key) {
        return Err(Error::parse(line, format!("unknown key `{key}`")));
    }
    let value = value.trim();
    if value.is_empty() {
        return Err(Error::parse(line, format!("missing value for `{key}`")));
    }
    Ok(Entry {
        key: key.to_string(),
        value: value.to_string(),
        line,
    })
}

fn assign(cfg: &mut ScenarioConfig, key: &str, value: &str) -> std::result::Result<(), String> {
    let non_negative = |x: f64, what: &str| {
        if x >= 0.0 {
            Ok(x)
        } else {
            Err(format!("{what} must be non-negative, got {x}"))
        }
    };
    let positive = |x: f64, what: &str| {
        if x > 0.0 {
            Ok(x)
        } else {
            Err(format!("{what} must be positive, got {x}"))
        }
    };
    match key {
        "out" => cfg.out = value.to_string(),
        "u" => cfg.u = non_negative(eval(value)?, "coupling u")?,
        "u_d" => cfg.u_d = eval(value)?,
        "theta0" => {
            let t = eval(value)?;
            if !(0.0..=PI).contains(&t) {
                return Err(format!("theta0 must lie in [0, pi], got {t}"));
            }
            cfg.theta0 = t;
        }
        "phi0" => cfg.phi0 = eval(value)?,
        "theta_dot0" => cfg.theta_dot0 = eval(value)?,
        "phi_dot0" => cfg.phi_dot0 = eval(value)?,
        "gamma_ratio" => cfg.gamma_ratio = non_negative(eval(value)?, "gamma_ratio")?,
        "gamma_ratios" => {
            cfg.gamma_ratios = eval_list(value)?
                .into_iter()
                .map(|g| non_negative(g, "gamma_ratio"))
                .collect::<std::result::Result<_, _>>()?;
        }
        "state" => {
            cfg.state = match value {
                "coherent" => InitialKind::Coherent,
                "superposition" => InitialKind::Superposition,
                _ => {
                    return Err(format!(
                        "expected `coherent` or `superposition`, got `{value}`"
                    ))
                }
            }
        }
        "coherent" => cfg.coherent = coherent_spec(value)?,
        "superposition" => cfg.superposition = superposition(value)?,
        "j_max" => {
            let j = integer(value)?;
            if j < 2 {
                return Err(format!("j_max must be at least 2, got {j}"));
            }
            cfg.j_max = u32::try_from(j).map_err(|_| "j_max too large".to_string())?;
        }
        "tail_tolerance" => cfg.tail_tolerance = positive(eval(value)?, "tail_tolerance")?,
        "dt" => cfg.dt = positive(eval(value)?, "dt")?,
        "t_end" => cfg.t_end = non_negative(eval(value)?, "t_end")?,
        "record_stride" => cfg.record_stride = integer(value)? as usize,
        "n_traj" => {
            cfg.n_traj = integer(value)? as usize;
            if cfg.n_traj == 0 {
                return Err("n_traj must be at least 1".into());
            }
        }
        "seed" => cfg.seed = integer(value)?,
        "n_theta" | "n_phi" => {
            let n = integer(value)? as usize;
            if n == 0 {
                return Err(format!("{key} must be at least 1"));
            }
            if key == "n_theta" {
                cfg.n_theta = n;
            } else {
                cfg.n_phi = n;
            }
        }
        "snapshots" => {
            let times = eval_list(value)?;
            if times.iter().any(|&t| !(t >= 0.0)) {
                return Err("snapshot times must be non-negative".into());
            }
            if times.windows(2).any(|w| w[1] <= w[0]) {
                return Err("snapshot times must be strictly increasing".into());
            }
            cfg.snapshots = times;
        }
        "l_max" => cfg.l_max = u32::try_from(integer(value)?).map_err(|_| "l_max too large")?,
        _ => unreachable!("unknown keys are rejected earlier"),
    }
    Ok(())
}

/// Checks involving more than one key. Errors are attributed to the last
/// line among the keys involved.
fn cross_check(cfg: &ScenarioConfig, entries: &[Entry]) -> Result<()> {
    let line_of = |keys: &[&str]| {
        entries
            .iter()
            .filter(|e| keys.contains(&e.key.as_str()))
            .map(|e| e.line)
            .max()
            .unwrap_or(0)
    };
    if QUANTUM.contains(&cfg.scenario) {
        let (given, other) = match cfg.state {
            InitialKind::Coherent => ("coherent", "superposition"),
            InitialKind::Superposition => ("superposition", "coherent"),
        };
        if entries.iter().any(|e| e.key == other) {
            return Err(Error::parse(
                line_of(&[other]),
                format!("`{other}` is set but state = {given}"),
            ));
        }
        let specs: Vec<CoherentSpec> = match cfg.state {
            InitialKind::Coherent => vec![cfg.coherent],
            InitialKind::Superposition => cfg.superposition.iter().map(|(_, c)| *c).collect(),
        };
        if let Some(c) = specs.iter().find(|c| c.j > cfg.j_max) {
            return Err(Error::parse(
                line_of(&["j_max", "state", given]),
                format!("initial state has j = {} above j_max = {}", c.j, cfg.j_max),
            ));
        }
    }
    if cfg.scenario == Classical && cfg.phi_dot0 != 0.0 && (cfg.theta0 == 0.0 || cfg.theta0 == PI) {
        return Err(Error::parse(
            line_of(&["theta0", "phi_dot0"]),
            "phi_dot0 != 0 needs theta0 strictly between the poles",
        ));
    }
    Ok(())
}

fn integer(value: &str) -> std::result::Result<u64, String> {
    value
        .parse::<u64>()
        .map_err(|_| format!("expected a non-negative integer, got `{value}`"))
}

fn eval_list(value: &str) -> std::result::Result<Vec<f64>, String> {
    value.split(',').map(|v| eval(v.trim())).collect()
}

fn coherent_spec(value: &str) -> std::result::Result<CoherentSpec, String> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected `j, alpha, beta`, got `{value}`"));
    }
    Ok(CoherentSpec {
        j: integer(parts[0])? as u32,
        alpha: eval(parts[1])?,
        beta: eval(parts[2])?,
    })
}

fn superposition(value: &str) -> std::result::Result<Vec<(Complex64, CoherentSpec)>, String> {
    let mut out = Vec::new();
    for component in value.split(';').map(str::trim).filter(|c| !c.is_empty()) {
        let (weight, spec) = match component.split_once('@') {
            Some((w, spec)) => (complex_weight(w.trim())?, spec),
            None => (Complex64::new(1.0, 0.0), component),
        };
        out.push((weight, coherent_spec(spec)?));
    }
    if out.is_empty() {
        return Err("superposition needs at least one component".into());
    }
    Ok(out)
}

fn complex_weight(w: &str) -> std::result::Result<Complex64, String> {
    if let Some(inner) = w.strip_prefix('(').and_then(|s| s.strip_suffix(')')) {
        if let Some((re, im)) = inner.split_once(',') {
            return Ok(Complex64::new(eval(re.trim())?, eval(im.trim())?));
        }
    }
    Ok(Complex64::new(eval(w)?, 0.0))
}

/// Evaluate a real arithmetic expression with `pi`.
fn eval(text: &str) -> std::result::Result<f64, String> {
    let mut p = ExprParser {
        s: text.as_bytes(),
        pos: 0,
    };
    let v = p.expr()?;
    p.skip_ws();
    if p.pos != p.s.len() {
        return Err(format!("unexpected `{}` in `{text}`", &text[p.pos..]));
    }
    if !v.is_finite() {
        return Err(format!("`{text}` is not finite"));
    }
    Ok(v)
}

struct ExprParser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl ExprParser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.s.get(self.pos).copied()
    }

    fn expr(&mut self) -> std::result::Result<f64, String> {
        let mut v = self.term()?;
        while let Some(op @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            v = if op == b'+' { v + rhs } else { v - rhs };
        }
        Ok(v)
    }

    fn term(&mut self) -> std::result::Result<f64, String> {
        let mut v = self.factor()?;
        while let Some(op @ (b'*' | b'/')) = self.peek() {
            self.pos += 1;
            let rhs = self.factor()?;
            v = if op == b'*' { v * rhs } else { v / rhs };
        }
        Ok(v)
    }

    fn factor(&mut self) -> std::result::Result<f64, String> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(-self.factor()?)
            }
            Some(b'+') => {
                self.pos += 1;
                self.factor()
            }
            Some(b'(') => {
                self.pos += 1;
                let v = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err("missing `)`".into());
                }
                self.pos += 1;
                Ok(v)
            }
            Some(b'p') if self.s[self.pos..].starts_with(b"pi") => {
                self.pos += 2;
                Ok(PI)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) => Err(format!("unexpected `{}`", c as char)),
            None => Err("unexpected end of expression".into()),
        }
    }

    fn number(&mut self) -> std::result::Result<f64, String> {
        let start = self.pos;
        while self.pos < self.s.len() {
            let c = self.s[self.pos];
            let exponent_sign = (c == b'+' || c == b'-')
                && matches!(self.s[self.pos - 1], b'e' | b'E')
                && self.pos > start;
            if c.is_ascii_digit() || c == b'.' || c == b'e' || c == b'E' || exponent_sign {
                self.pos += 1;
            } else {
                break;
            }
        }
        let token = std::str::from_utf8(&self.s[start..self.pos]).expect("ASCII slice");
        token
            .parse::<f64>()
            .map_err(|_| format!("malformed number `{token}`"))
    }
}

// ---------------------------------------------------------------------------
// Presets

/// Configurations reproducing the figures of the model study, by name.
pub const PRESETS: &[(&str, &str)] = &[
    ("fig4", include_str!("../presets/fig4.conf")),
    ("fig5", include_str!("../presets/fig5.conf")),
    ("fig8", include_str!("../presets/fig8.conf")),
    ("fig9", include_str!("../presets/fig9.conf")),
    ("fig15", include_str!("../presets/fig15.conf")),
    ("wigner-coh", include_str!("../presets/wigner-coh.conf")),
    ("wigner-sup", include_str!("../presets/wigner-sup.conf")),
    ("purity", include_str!("../presets/purity.conf")),
    ("populations", include_str!("../presets/populations.conf")),
];

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
}

// ---------------------------------------------------------------------------
// Running

/// One row of the classical time series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicalRow {
    pub tau: f64,
    pub state: ClassicalState,
    pub l: [f64; 3],
    /// `e/u` and `l_z²/u`; for `u = 0` the unscaled `e` and `l_z²`.
    pub epsilon: f64,
    pub kappa_z: f64,
}

/// Directory for relative output prefixes: `$ROTORDYN_OUT_DIR` or `.`.
pub fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Run the scenario, write its outputs and the resolved configuration under
/// `out_dir`, and return the paths written.
pub fn run_scenario(cfg: &ScenarioConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let prefix = out_dir.join(&cfg.out);
    if let Some(parent) = prefix.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let stem = |suffix: &str| {
        let mut name = prefix.as_os_str().to_owned();
        name.push(format!("_{suffix}"));
        PathBuf::from(name)
    };
    log::info!("running {} with\n{}", cfg.scenario, cfg.to_document());

    let mut written = Vec::new();
    let echo = stem(&format!("{}.conf", cfg.scenario));
    fs::write(&echo, cfg.to_document())?;
    written.push(echo);

    match cfg.scenario {
        Classical => {
            let rows = run_classical(cfg)?;
            let path = stem("classical.csv");
            write_classical_timeseries(&rows, &path)?;
            written.push(path);
        }
        Spectrum => {
            let table = level_shift_table(cfg.u, cfg.l_max)?;
            let path = stem("spectrum.csv");
            write_spectrum(&table, cfg.u, &path)?;
            written.push(path);
        }
        EvolveUnitary | EvolveMaster => {
            let records = run_deterministic(cfg)?;
            let path = stem(&format!("{}.csv", cfg.scenario));
            write_timeseries(&records, &path)?;
            written.push(path);
        }
        EvolveTrajectory => {
            let p = cfg.model_params(cfg.gamma_ratio)?;
            let result = ensemble_average(&cfg.initial_state()?, &p, &cfg.evolution_config())?;
            log::info!(
                "mean number of jumps per trajectory: {:.4} ± {:.4}",
                result.mean_jumps.mean,
                result.mean_jumps.standard_error
            );
            let means: Vec<ObservableRecord> = result
                .records
                .iter()
                .map(|r| r.observables.clone())
                .collect();
            let path = stem("evolve-trajectory.csv");
            write_timeseries(&means, &path)?;
            written.push(path);

            let errors: Vec<ObservableRecord> = result
                .records
                .iter()
                .map(|r| ObservableRecord {
                    tau: r.observables.tau,
                    jx_mean: r.jx.standard_error,
                    jz_mean: r.jz.standard_error,
                    jz_var: r.jz_var.standard_error,
                    purity: f64::NAN,
                    populations: r.populations.iter().map(|e| e.standard_error).collect(),
                })
                .collect();
            let path = stem("evolve-trajectory_stderr.csv");
            write_timeseries(&errors, &path)?;
            written.push(path);
        }
        WignerSnapshots => {
            for &gamma in &cfg.gamma_ratios {
                for w in wigner_snapshots(cfg, gamma)? {
                    let path = stem(&format!("wigner_g{gamma}_t{}.dat", w.tau));
                    write_wigner_grid(&w, &path)?;
                    written.push(path);
                }
            }
        }
    }
    Ok(written)
}

pub fn run_classical(cfg: &ScenarioConfig) -> Result<Vec<ClassicalRow>> {
    let (params, s0) = cfg.classical_initial();
    let plan = EvolutionConfig {
        dt: cfg.dt,
        t_end: cfg.t_end,
        record_stride: cfg.record_stride,
        ..Default::default()
    }
    .plan()?;
    let times = plan.record_times();
    let states = integrate_ode_with_step(&s0, &params, &times, cfg.dt)?;
    times
        .iter()
        .zip(states)
        .map(|(&tau, state)| {
            let (epsilon, kappa_z) = if params.u_alpha > 0.0 {
                conserved_quantities(&state, &params)?
            } else {
                (state.energy(&params), state.l_z().powi(2))
            };
            Ok(ClassicalRow {
                tau,
                state,
                l: lab_angular_momentum(&state),
                epsilon,
                kappa_z,
            })
        })
        .collect()
}

/// Observable records of a unitary or master-equation run.
pub fn run_deterministic(cfg: &ScenarioConfig) -> Result<Vec<ObservableRecord>> {
    let psi0 = cfg.initial_state()?;
    let evo = cfg.evolution_config();
    let mut records = Vec::new();
    match cfg.scenario {
        EvolveUnitary => {
            let p = cfg.model_params(0.0)?;
            evolve_unitary_with(&psi0, &p, &evo, |tau, psi| {
                records.push(ObservableRecord::from_pure(tau, psi));
                Ok(())
            })?;
        }
        EvolveMaster => {
            let p = cfg.model_params(cfg.gamma_ratio)?;
            evolve_master_with(&DensityMatrix::from_pure(&psi0), &p, &evo, |tau, sigma| {
                records.push(ObservableRecord::from_density(tau, sigma));
                Ok(())
            })?;
        }
        other => {
            return Err(Error::domain(format!(
                "{other} is not a deterministic evolution scenario"
            )))
        }
    }
    Ok(records)
}

/// Wigner functions at the snapshot times for one decay ratio; `0` runs the
/// unitary evolution, anything else the master equation.
pub fn wigner_snapshots(cfg: &ScenarioConfig, gamma_ratio: f64) -> Result<Vec<WignerGrid>> {
    let grid = SphereGrid::new(cfg.n_theta, cfg.n_phi)?;
    let p = cfg.model_params(gamma_ratio)?;
    let psi0 = cfg.initial_state()?;
    let segment = |from: f64, to: f64| EvolutionConfig {
        dt: cfg.dt,
        t_end: to - from,
        record_stride: usize::MAX,
        tail_tolerance: cfg.tail_tolerance,
        ..Default::default()
    };
    let mut out = Vec::with_capacity(cfg.snapshots.len());
    let mut now = 0.0;
    if gamma_ratio == 0.0 {
        let mut psi = psi0;
        for &tau in &cfg.snapshots {
            let mut last = None;
            evolve_unitary_with(&psi, &p, &segment(now, tau), |_, s| {
                last = Some(s.clone());
                Ok(())
            })?;
            psi = last.expect("final step is always recorded");
            now = tau;
            let mut w = wigner_total(&DensityMatrix::from_pure(&psi.normalized()?), &grid)?;
            w.tau = tau;
            out.push(w);
        }
    } else {
        let mut sigma = DensityMatrix::from_pure(&psi0);
        for &tau in &cfg.snapshots {
            let mut last = None;
            evolve_master_with(&sigma, &p, &segment(now, tau), |_, s| {
                last = Some(s.clone());
                Ok(())
            })?;
            sigma = last.expect("final step is always recorded");
            now = tau;
            let mut w = wigner_total(&sigma, &grid)?;
            w.tau = tau;
            out.push(w);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Output

/// Twelve significant digits in scientific notation.
fn num(x: f64) -> String {
    format!("{x:.11e}")
}

fn join(fields: impl IntoIterator<Item = String>) -> String {
    fields.into_iter().collect::<Vec<_>>().join(",")
}

/// CSV with columns `tau, jx_mean, jz_mean, jz_var, purity, p0 .. p_jmax`.
pub fn write_timeseries(records: &[ObservableRecord], path: &Path) -> Result<()> {
    let n_pop = records.first().map_or(0, |r| r.populations.len());
    let mut text = join(
        ["tau", "jx_mean", "jz_mean", "jz_var", "purity"]
            .into_iter()
            .map(String::from)
            .chain((0..n_pop).map(|j| format!("p{j}"))),
    );
    text.push('\n');
    for r in records {
        let fields = [r.tau, r.jx_mean, r.jz_mean, r.jz_var, r.purity];
        text.push_str(&join(fields.iter().chain(&r.populations).map(|&x| num(x))));
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

/// CSV with columns `tau, theta, phi, lx, ly, lz, epsilon, kappa_z`.
pub fn write_classical_timeseries(rows: &[ClassicalRow], path: &Path) -> Result<()> {
    let mut text = String::from("tau,theta,phi,lx,ly,lz,epsilon,kappa_z\n");
    for r in rows {
        let s = r.state;
        let fields = [
            r.tau, s.theta, s.phi, r.l[0], r.l[1], r.l[2], r.epsilon, r.kappa_z,
        ];
        text.push_str(&join(fields.map(num)));
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

/// CSV with columns `l, m_abs, u, energy, shift`.
pub fn write_spectrum(table: &[LevelShift], u: f64, path: &Path) -> Result<()> {
    let mut text = String::from("l,m_abs,u,energy,shift\n");
    for row in table {
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            row.l,
            row.m_abs,
            num(u),
            num(row.energy),
            num(row.shift)
        ));
    }
    fs::write(path, text)?;
    Ok(())
}

/// Text grid: `#`-prefixed header with `tau`, sizes and node lists, then one
/// line of `n_phi` comma-separated values per polar node.
pub fn write_wigner_grid(w: &WignerGrid, path: &Path) -> Result<()> {
    let g = &w.grid;
    let mut text = format!(
        "# tau={}\n# n_theta={}\n# n_phi={}\n",
        num(w.tau),
        g.n_theta(),
        g.n_phi()
    );
    text.push_str(&format!(
        "# thetas={}\n",
        join(g.thetas.iter().map(|&x| num(x)))
    ));
    text.push_str(&format!(
        "# theta_weights={}\n",
        join(g.theta_weights.iter().map(|&x| num(x)))
    ));
    text.push_str(&format!(
        "# phis={}\n",
        join(g.phis.iter().map(|&x| num(x)))
    ));
    for row in w.values.chunks(g.n_phi()) {
        text.push_str(&join(row.iter().map(|&x| num(x))));
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

/// Read a file produced by [`write_wigner_grid`].
pub fn read_wigner_grid(path: &Path) -> Result<WignerGrid> {
    let text = fs::read_to_string(path)?;
    let mut header = std::collections::HashMap::new();
    let mut values = Vec::new();
    let mut rows = 0;
    for (idx, line) in text.lines().enumerate() {
        let number = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::parse(idx + 1, format!("bad number `{s}`")))
        };
        if let Some(h) = line.strip_prefix('#') {
            let (key, value) = h
                .split_once('=')
                .ok_or_else(|| Error::parse(idx + 1, "header line without `=`"))?;
            let parsed = value.split(',').map(number).collect::<Result<Vec<f64>>>()?;
            header.insert(key.trim().to_string(), (parsed, idx + 1));
        } else if !line.trim().is_empty() {
            rows += 1;
            for v in line.split(',') {
                values.push(number(v)?);
            }
        }
    }
    let field = |key: &str| {
        header
            .get(key)
            .map(|(v, _)| v.clone())
            .ok_or_else(|| Error::parse(0, format!("missing header `{key}`")))
    };
    let scalar = |key: &str| -> Result<f64> {
        let v = field(key)?;
        if v.len() != 1 {
            return Err(Error::parse(
                header[key].1,
                format!("`{key}` must be a single number"),
            ));
        }
        Ok(v[0])
    };
    let n_theta = scalar("n_theta")? as usize;
    let n_phi = scalar("n_phi")? as usize;
    let grid = SphereGrid {
        thetas: field("thetas")?,
        phis: field("phis")?,
        theta_weights: field("theta_weights")?,
    };
    if grid.thetas.len() != n_theta
        || grid.theta_weights.len() != n_theta
        || grid.phis.len() != n_phi
        || rows != n_theta
        || values.len() != n_theta * n_phi
    {
        return Err(Error::parse(0, "grid dimensions disagree with the header"));
    }
    Ok(WignerGrid {
        values,
        grid,
        tau: scalar("tau")?,
    })
}
