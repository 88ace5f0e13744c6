//! Experiment configuration: a TOML file describing the problem, the solver,
//! and the run controls. Validation walks the parsed document by hand so that
//! every problem is reported at once with its path, and so that unknown keys
//! are rejected instead of silently ignored.

use std::fmt;
use std::path::PathBuf;

use toml::{Table, Value};

use crate::solver::NewtonStep;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config syntax: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("{}", join_lines(.0))]
    Invalid(Vec<String>),
}

fn join_lines(errors: &[String]) -> String {
    errors.join("\n")
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Libsvm { path: PathBuf, dim: Option<usize> },
    Synthetic { alpha: f64, beta: f64, d: usize, points_per_device: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProblemKindConfig {
    LogReg,
    Softmax { sigma: f64, shift: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConfig {
    pub source: DataSource,
    pub kind: ProblemKindConfig,
    pub lambda: f64,
    pub n_devices: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CompressorConfig {
    TopK { k: usize },
    RankR { r: usize },
    RandK { k: usize, scaled: bool },
    AdaptiveThreshold { threshold: f64 },
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MechanismConfig {
    Ef21 { inner: CompressorConfig },
    Lag { zeta: f64 },
    Clag { inner: CompressorConfig, zeta: f64, s: Option<f64> },
    Cbag { inner: CompressorConfig, p: f64, s: Option<f64> },
    AdaptiveTopK { d0: usize },
    Rotation { inner: CompressorConfig },
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKindConfig {
    Newton { step: NewtonStep },
    Bidirectional,
    PartialParticipation { tau: usize },
    CubicReg,
    LineSearch,
    ExactNewton,
}

impl fmt::Display for SolverKindConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolverKindConfig::Newton { step: NewtonStep::EigenFloor } => write!(f, "newton/eigen_floor"),
            SolverKindConfig::Newton { step: NewtonStep::ErrorShift } => write!(f, "newton/error_shift"),
            SolverKindConfig::Bidirectional => write!(f, "bidirectional"),
            SolverKindConfig::PartialParticipation { tau } => write!(f, "partial_participation(tau={tau})"),
            SolverKindConfig::CubicReg => write!(f, "cubic_reg"),
            SolverKindConfig::LineSearch => write!(f, "line_search"),
            SolverKindConfig::ExactNewton => write!(f, "exact_newton"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum X0Config {
    Zeros,
    Fill(f64),
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum H0Config {
    Exact,
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfigSection {
    pub kind: SolverKindConfig,
    pub hessian: Option<MechanismConfig>,
    pub master: Option<MechanismConfig>,
    pub grad_p: f64,
    pub mu: Option<f64>,
    pub cubic_m: f64,
    pub ls_grid: Option<Vec<f64>>,
    pub max_iter: usize,
    pub x0: X0Config,
    pub h0: H0Config,
    pub track_key_relation: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub gap_target: Option<f64>,
    pub record_every: u64,
    pub problem: ProblemConfig,
    pub solver: SolverConfigSection,
}

/// Parses and fully validates a config document. Syntax errors abort early;
/// everything after that is collected, so one call reports every unknown key,
/// missing field, and out-of-range value with its path.
pub fn validate_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let table: Table = text.parse()?;
    let mut w = Walker::default();

    w.check_keys(&table, "", &["seed", "output", "gap_target", "record_every", "problem", "solver"]);
    let seed = w.req_u64(&table, "", "seed");
    let output = w.opt_str(&table, "", "output").map(PathBuf::from);
    let gap_target = w.opt_f64(&table, "", "gap_target");
    if let Some(g) = gap_target {
        if !(g > 0.0) {
            w.err("gap_target", "must be positive");
        }
    }
    let record_every = w.opt_u64(&table, "", "record_every").unwrap_or(1);
    if record_every == 0 {
        w.err("record_every", "must be at least 1");
    }

    let problem = w.req_table(&table, "", "problem").map(|t| walk_problem(&mut w, t));
    let solver = w.req_table(&table, "", "solver").map(|t| walk_solver(&mut w, t));

    if let (Some(Some(p)), Some(Some(s))) = (problem.as_ref(), solver.as_ref()) {
        cross_checks(&mut w, p, s);
    }

    if !w.errors.is_empty() {
        return Err(ConfigError::Invalid(w.errors));
    }
    Ok(ExperimentConfig {
        seed: seed.expect("validated"),
        output,
        gap_target,
        record_every,
        problem: problem.flatten().expect("validated"),
        solver: solver.flatten().expect("validated"),
    })
}

fn walk_problem(w: &mut Walker, t: &Table) -> Option<ProblemConfig> {
    let path = "problem";
    w.check_keys(t, path, &["kind", "lambda", "sigma", "shift", "n_devices", "dataset", "dim", "synthetic"]);

    let kind_name = w.req_enum(t, path, "kind", &["logreg", "softmax"]);
    let lambda = w.req_f64(t, path, "lambda");
    if let Some(l) = lambda {
        if !(l > 0.0) {
            w.err("problem.lambda", "must be positive");
        }
    }
    let n_devices = w.req_usize(t, path, "n_devices");
    if n_devices == Some(0) {
        w.err("problem.n_devices", "must be at least 1");
    }

    let sigma = w.opt_f64(t, path, "sigma");
    let shift = w.opt_bool(t, path, "shift");
    let kind = match kind_name.as_deref() {
        Some("logreg") => {
            if sigma.is_some() {
                w.err("problem.sigma", "only meaningful for kind = \"softmax\"");
            }
            if shift.is_some() {
                w.err("problem.shift", "only meaningful for kind = \"softmax\"");
            }
            Some(ProblemKindConfig::LogReg)
        }
        Some("softmax") => match sigma {
            Some(s) if s > 0.0 => Some(ProblemKindConfig::Softmax { sigma: s, shift: shift.unwrap_or(true) }),
            Some(_) => {
                w.err("problem.sigma", "must be positive");
                None
            }
            None => {
                w.err("problem.sigma", "missing required key (softmax needs a smoothing scale)");
                None
            }
        },
        _ => None,
    };

    let dataset = w.opt_str(t, path, "dataset");
    let dim = w.opt_usize(t, path, "dim");
    let synthetic = match t.get("synthetic") {
        None => None,
        Some(Value::Table(st)) => Some(walk_synthetic(w, st)),
        Some(_) => {
            w.err("problem.synthetic", "must be a table");
            None
        }
    };
    let source = match (dataset, synthetic) {
        (Some(p), None) => Some(DataSource::Libsvm { path: PathBuf::from(p), dim }),
        (None, Some(s)) => {
            if dim.is_some() {
                w.err("problem.dim", "only meaningful together with problem.dataset");
            }
            s
        }
        (Some(_), Some(_)) => {
            w.err("problem", "dataset and synthetic are mutually exclusive; give exactly one");
            None
        }
        (None, None) => {
            w.err("problem", "give exactly one data source: dataset or synthetic");
            None
        }
    };

    Some(ProblemConfig {
        source: source?,
        kind: kind?,
        lambda: lambda?,
        n_devices: n_devices?,
    })
}

fn walk_synthetic(w: &mut Walker, t: &Table) -> Option<DataSource> {
    let path = "problem.synthetic";
    w.check_keys(t, path, &["alpha", "beta", "d", "points_per_device"]);
    let alpha = w.req_f64(t, path, "alpha");
    let beta = w.req_f64(t, path, "beta");
    for (key, v) in [("alpha", alpha), ("beta", beta)] {
        if let Some(v) = v {
            if !(v >= 0.0) {
                w.err(&format!("{path}.{key}"), "must be non-negative");
            }
        }
    }
    let d = w.req_usize(t, path, "d");
    let m = w.req_usize(t, path, "points_per_device");
    for (key, v) in [("d", d), ("points_per_device", m)] {
        if v == Some(0) {
            w.err(&format!("{path}.{key}"), "must be at least 1");
        }
    }
    Some(DataSource::Synthetic { alpha: alpha?, beta: beta?, d: d?, points_per_device: m? })
}

fn walk_solver(w: &mut Walker, t: &Table) -> Option<SolverConfigSection> {
    let path = "solver";
    w.check_keys(
        t,
        path,
        &[
            "kind", "step", "max_iter", "mu", "cubic_m", "ls_grid", "grad_p", "tau", "h0",
            "track_key_relation", "x0", "hessian", "master",
        ],
    );

    let kind_name = w.req_enum(
        t,
        path,
        "kind",
        &["newton", "bidirectional", "partial_participation", "cubic_reg", "line_search", "exact_newton"],
    );
    let step = w.opt_enum(t, path, "step", &["eigen_floor", "error_shift"]);
    let tau = w.opt_usize(t, path, "tau");
    let kind = match kind_name.as_deref() {
        Some("newton") => match step.as_deref() {
            Some("eigen_floor") => Some(SolverKindConfig::Newton { step: NewtonStep::EigenFloor }),
            Some("error_shift") => Some(SolverKindConfig::Newton { step: NewtonStep::ErrorShift }),
            None => {
                w.err("solver.step", "missing required key (newton needs eigen_floor or error_shift)");
                None
            }
            Some(_) => None,
        },
        Some(other) => {
            if step.is_some() {
                w.err("solver.step", "only meaningful for kind = \"newton\"");
            }
            match other {
                "bidirectional" => Some(SolverKindConfig::Bidirectional),
                "partial_participation" => match tau {
                    Some(tau) if tau >= 1 => Some(SolverKindConfig::PartialParticipation { tau }),
                    Some(_) => {
                        w.err("solver.tau", "must be at least 1");
                        None
                    }
                    None => {
                        w.err("solver.tau", "missing required key (partial participation needs a subset size)");
                        None
                    }
                },
                "cubic_reg" => Some(SolverKindConfig::CubicReg),
                "line_search" => Some(SolverKindConfig::LineSearch),
                "exact_newton" => Some(SolverKindConfig::ExactNewton),
                _ => unreachable!("req_enum filtered"),
            }
        }
        None => None,
    };
    if tau.is_some() && !matches!(kind_name.as_deref(), Some("partial_participation") | None) {
        w.err("solver.tau", "only meaningful for kind = \"partial_participation\"");
    }

    let max_iter = w.opt_usize(t, path, "max_iter").unwrap_or(200);
    if max_iter == 0 {
        w.err("solver.max_iter", "must be at least 1");
    }
    let mu = w.opt_f64(t, path, "mu");
    if let Some(m) = mu {
        if !(m > 0.0) {
            w.err("solver.mu", "must be positive");
        }
    }
    let cubic_m = w.opt_f64(t, path, "cubic_m");
    if let Some(m) = cubic_m {
        if !(m > 0.0) {
            w.err("solver.cubic_m", "must be positive");
        }
        if !matches!(kind_name.as_deref(), Some("cubic_reg") | None) {
            w.err("solver.cubic_m", "only meaningful for kind = \"cubic_reg\"");
        }
    }
    let ls_grid = w.opt_f64_array(t, path, "ls_grid");
    if let Some(grid) = &ls_grid {
        if grid.is_empty() {
            w.err("solver.ls_grid", "needs at least one stepsize");
        }
        if grid.iter().any(|g| !(*g > 0.0)) {
            w.err("solver.ls_grid", "stepsizes must be positive");
        }
        if !matches!(kind_name.as_deref(), Some("line_search") | None) {
            w.err("solver.ls_grid", "only meaningful for kind = \"line_search\"");
        }
    }
    let grad_p = w.opt_f64(t, path, "grad_p");
    if let Some(p) = grad_p {
        if !(0.0..=1.0).contains(&p) {
            w.err("solver.grad_p", "must lie in [0, 1]");
        }
        if !matches!(kind_name.as_deref(), Some("bidirectional" | "partial_participation") | None) {
            w.err("solver.grad_p", "only meaningful for bidirectional or partial_participation");
        }
    }
    let h0 = match w.opt_enum(t, path, "h0", &["exact", "zero"]).as_deref() {
        Some("zero") => H0Config::Zero,
        _ => H0Config::Exact,
    };
    let track = w.opt_bool(t, path, "track_key_relation").unwrap_or(false);
    if track && !matches!(kind_name.as_deref(), Some("partial_participation") | None) {
        w.err("solver.track_key_relation", "only meaningful for kind = \"partial_participation\"");
    }

    let x0 = match t.get("x0") {
        None => X0Config::Zeros,
        Some(Value::Float(v)) => X0Config::Fill(*v),
        Some(Value::Integer(v)) => X0Config::Fill(*v as f64),
        Some(Value::Array(items)) => {
            let mut out = Vec::with_capacity(items.len());
            let mut ok = true;
            for (i, item) in items.iter().enumerate() {
                match as_float(item) {
                    Some(v) => out.push(v),
                    None => {
                        w.err(&format!("solver.x0[{i}]"), "must be a number");
                        ok = false;
                    }
                }
            }
            if ok { X0Config::Explicit(out) } else { X0Config::Zeros }
        }
        Some(_) => {
            w.err("solver.x0", "must be a number (fill value) or an array of numbers");
            X0Config::Zeros
        }
    };

    let hessian = match t.get("hessian") {
        None => {
            if !matches!(kind_name.as_deref(), Some("exact_newton") | None) {
                w.err("solver.hessian", "missing required table (which mechanism carries the Hessians?)");
            }
            None
        }
        Some(Value::Table(mt)) => {
            if kind_name.as_deref() == Some("exact_newton") {
                w.err("solver.hessian", "exact_newton communicates nothing; remove the mechanism table");
            }
            walk_mechanism(w, mt, "solver.hessian")
        }
        Some(_) => {
            w.err("solver.hessian", "must be a table");
            None
        }
    };
    let master = match t.get("master") {
        None => {
            if matches!(kind_name.as_deref(), Some("bidirectional" | "partial_participation")) {
                w.err("solver.master", "missing required table (this solver compresses the model broadcast)");
            }
            None
        }
        Some(Value::Table(mt)) => {
            if !matches!(kind_name.as_deref(), Some("bidirectional" | "partial_participation") | None) {
                w.err("solver.master", "only meaningful for bidirectional or partial_participation");
            }
            walk_mechanism(w, mt, "solver.master")
        }
        Some(_) => {
            w.err("solver.master", "must be a table");
            None
        }
    };

    Some(SolverConfigSection {
        kind: kind?,
        hessian,
        master,
        grad_p: grad_p.unwrap_or(1.0),
        mu,
        cubic_m: cubic_m.unwrap_or(1.0),
        ls_grid,
        max_iter,
        x0,
        h0,
        track_key_relation: track,
    })
}

fn walk_mechanism(w: &mut Walker, t: &Table, path: &str) -> Option<MechanismConfig> {
    w.check_keys(t, path, &["mechanism", "zeta", "p", "s", "d0", "inner"]);
    let name = w.req_enum(
        t,
        path,
        "mechanism",
        &["ef21", "lag", "clag", "cbag", "adaptive_top_k", "rotation", "identity"],
    );

    let needs_inner = matches!(name.as_deref(), Some("ef21" | "clag" | "cbag" | "rotation"));
    let inner = match t.get("inner") {
        None => {
            if needs_inner {
                w.err(&format!("{path}.inner"), "missing required table (this mechanism wraps a contractive compressor)");
            }
            None
        }
        Some(Value::Table(it)) => {
            if !needs_inner && name.is_some() {
                w.err(&format!("{path}.inner"), "this mechanism takes no inner compressor");
            }
            walk_compressor(w, it, &format!("{path}.inner"))
        }
        Some(_) => {
            w.err(&format!("{path}.inner"), "must be a table");
            None
        }
    };

    let zeta = w.opt_f64(t, path, "zeta");
    if let Some(z) = zeta {
        if !(z >= 0.0) {
            w.err(&format!("{path}.zeta"), "must be non-negative");
        }
        if !matches!(name.as_deref(), Some("lag" | "clag") | None) {
            w.err(&format!("{path}.zeta"), "only meaningful for lag or clag");
        }
    }
    let p = w.opt_f64(t, path, "p");
    if let Some(pv) = p {
        if !(pv > 0.0 && pv <= 1.0) {
            w.err(&format!("{path}.p"), "must lie in (0, 1]");
        }
        if !matches!(name.as_deref(), Some("cbag") | None) {
            w.err(&format!("{path}.p"), "only meaningful for cbag");
        }
    }
    let s = w.opt_f64(t, path, "s");
    if let Some(sv) = s {
        if !(sv > 0.0) {
            w.err(&format!("{path}.s"), "must be positive");
        }
        if !matches!(name.as_deref(), Some("clag" | "cbag") | None) {
            w.err(&format!("{path}.s"), "only meaningful for clag or cbag");
        }
    }
    let d0 = w.opt_usize(t, path, "d0");
    if let Some(v) = d0 {
        if v == 0 {
            w.err(&format!("{path}.d0"), "must be at least 1");
        }
        if !matches!(name.as_deref(), Some("adaptive_top_k") | None) {
            w.err(&format!("{path}.d0"), "only meaningful for adaptive_top_k");
        }
    }

    match name.as_deref()? {
        "ef21" => Some(MechanismConfig::Ef21 { inner: inner? }),
        "lag" => match zeta {
            Some(z) => Some(MechanismConfig::Lag { zeta: z }),
            None => {
                w.err(&format!("{path}.zeta"), "missing required key (lag needs a trigger threshold)");
                None
            }
        },
        "clag" => match zeta {
            Some(z) => Some(MechanismConfig::Clag { inner: inner?, zeta: z, s }),
            None => {
                w.err(&format!("{path}.zeta"), "missing required key (clag needs a trigger threshold)");
                None
            }
        },
        "cbag" => match p {
            Some(pv) => Some(MechanismConfig::Cbag { inner: inner?, p: pv, s }),
            None => {
                w.err(&format!("{path}.p"), "missing required key (cbag needs a computation probability)");
                None
            }
        },
        "adaptive_top_k" => match d0 {
            Some(v) => Some(MechanismConfig::AdaptiveTopK { d0: v }),
            None => {
                w.err(&format!("{path}.d0"), "missing required key (adaptive_top_k needs an entry budget)");
                None
            }
        },
        "rotation" => Some(MechanismConfig::Rotation { inner: inner? }),
        "identity" => Some(MechanismConfig::Identity),
        _ => unreachable!("req_enum filtered"),
    }
}

fn walk_compressor(w: &mut Walker, t: &Table, path: &str) -> Option<CompressorConfig> {
    w.check_keys(t, path, &["kind", "k", "r", "scaled", "threshold"]);
    let name = w.req_enum(t, path, "kind", &["top_k", "rank_r", "rand_k", "adaptive_threshold", "identity"]);

    let k = w.opt_usize(t, path, "k");
    if let Some(v) = k {
        if v == 0 {
            w.err(&format!("{path}.k"), "must be at least 1");
        }
        if !matches!(name.as_deref(), Some("top_k" | "rand_k") | None) {
            w.err(&format!("{path}.k"), "only meaningful for top_k or rand_k");
        }
    }
    let r = w.opt_usize(t, path, "r");
    if let Some(v) = r {
        if v == 0 {
            w.err(&format!("{path}.r"), "must be at least 1");
        }
        if !matches!(name.as_deref(), Some("rank_r") | None) {
            w.err(&format!("{path}.r"), "only meaningful for rank_r");
        }
    }
    let scaled = w.opt_bool(t, path, "scaled");
    if scaled.is_some() && !matches!(name.as_deref(), Some("rand_k") | None) {
        w.err(&format!("{path}.scaled"), "only meaningful for rand_k");
    }
    let threshold = w.opt_f64(t, path, "threshold");
    if let Some(v) = threshold {
        if !(v > 0.0 && v <= 1.0) {
            w.err(&format!("{path}.threshold"), "must lie in (0, 1]");
        }
        if !matches!(name.as_deref(), Some("adaptive_threshold") | None) {
            w.err(&format!("{path}.threshold"), "only meaningful for adaptive_threshold");
        }
    }

    match name.as_deref()? {
        "top_k" => match k {
            Some(v) => Some(CompressorConfig::TopK { k: v }),
            None => {
                w.err(&format!("{path}.k"), "missing required key");
                None
            }
        },
        "rank_r" => match r {
            Some(v) => Some(CompressorConfig::RankR { r: v }),
            None => {
                w.err(&format!("{path}.r"), "missing required key");
                None
            }
        },
        "rand_k" => match k {
            Some(v) => Some(CompressorConfig::RandK { k: v, scaled: scaled.unwrap_or(false) }),
            None => {
                w.err(&format!("{path}.k"), "missing required key");
                None
            }
        },
        "adaptive_threshold" => match threshold {
            Some(v) => Some(CompressorConfig::AdaptiveThreshold { threshold: v }),
            None => {
                w.err(&format!("{path}.threshold"), "missing required key");
                None
            }
        },
        "identity" => Some(CompressorConfig::Identity),
        _ => unreachable!("req_enum filtered"),
    }
}

fn cross_checks(w: &mut Walker, problem: &ProblemConfig, solver: &SolverConfigSection) {
    if let SolverKindConfig::PartialParticipation { tau } = solver.kind {
        if tau > problem.n_devices {
            w.err(
                "solver.tau",
                &format!("subset size {tau} exceeds problem.n_devices = {}", problem.n_devices),
            );
        }
    }
    if matches!(problem.kind, ProblemKindConfig::Softmax { .. })
        && matches!(problem.source, DataSource::Synthetic { .. })
    {
        w.err(
            "problem",
            "the synthetic generator produces binary labels; softmax needs a dataset file",
        );
    }
}

fn as_float(v: &Value) -> Option<f64> {
    match v {
        Value::Float(f) => Some(*f),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

#[derive(Default)]
struct Walker {
    errors: Vec<String>,
}

impl Walker {
    fn err(&mut self, path: &str, what: &str) {
        self.errors.push(format!("{path}: {what}"));
    }

    fn key_path(path: &str, key: &str) -> String {
        if path.is_empty() { key.to_string() } else { format!("{path}.{key}") }
    }

    fn check_keys(&mut self, t: &Table, path: &str, allowed: &[&str]) {
        for key in t.keys() {
            if !allowed.contains(&key.as_str()) {
                self.err(&Self::key_path(path, key), "unknown key");
            }
        }
    }

    fn req_table<'a>(&mut self, t: &'a Table, path: &str, key: &str) -> Option<&'a Table> {
        match t.get(key) {
            None => {
                self.err(&Self::key_path(path, key), "missing required table");
                None
            }
            Some(Value::Table(inner)) => Some(inner),
            Some(_) => {
                self.err(&Self::key_path(path, key), "must be a table");
                None
            }
        }
    }

    fn req_f64(&mut self, t: &Table, path: &str, key: &str) -> Option<f64> {
        match t.get(key) {
            None => {
                self.err(&Self::key_path(path, key), "missing required key");
                None
            }
            Some(v) => self.coerce_f64(v, &Self::key_path(path, key)),
        }
    }

    fn opt_f64(&mut self, t: &Table, path: &str, key: &str) -> Option<f64> {
        let v = t.get(key)?;
        self.coerce_f64(v, &Self::key_path(path, key))
    }

    fn coerce_f64(&mut self, v: &Value, path: &str) -> Option<f64> {
        match as_float(v) {
            Some(f) => Some(f),
            None => {
                self.err(path, "must be a number");
                None
            }
        }
    }

    fn req_u64(&mut self, t: &Table, path: &str, key: &str) -> Option<u64> {
        match t.get(key) {
            None => {
                self.err(&Self::key_path(path, key), "missing required key");
                None
            }
            Some(v) => self.coerce_u64(v, &Self::key_path(path, key)),
        }
    }

    fn opt_u64(&mut self, t: &Table, path: &str, key: &str) -> Option<u64> {
        let v = t.get(key)?;
        self.coerce_u64(v, &Self::key_path(path, key))
    }

    fn coerce_u64(&mut self, v: &Value, path: &str) -> Option<u64> {
        match v {
            Value::Integer(i) if *i >= 0 => Some(*i as u64),
            Value::Integer(_) => {
                self.err(path, "must be non-negative");
                None
            }
            _ => {
                self.err(path, "must be an integer");
                None
            }
        }
    }

    fn req_usize(&mut self, t: &Table, path: &str, key: &str) -> Option<usize> {
        self.req_u64(t, path, key).map(|v| v as usize)
    }

    fn opt_usize(&mut self, t: &Table, path: &str, key: &str) -> Option<usize> {
        self.opt_u64(t, path, key).map(|v| v as usize)
    }

    fn opt_bool(&mut self, t: &Table, path: &str, key: &str) -> Option<bool> {
        match t.get(key)? {
            Value::Boolean(b) => Some(*b),
            _ => {
                self.err(&Self::key_path(path, key), "must be a boolean");
                None
            }
        }
    }

    fn opt_str(&mut self, t: &Table, path: &str, key: &str) -> Option<String> {
        match t.get(key)? {
            Value::String(s) => Some(s.clone()),
            _ => {
                self.err(&Self::key_path(path, key), "must be a string");
                None
            }
        }
    }

    fn opt_f64_array(&mut self, t: &Table, path: &str, key: &str) -> Option<Vec<f64>> {
        match t.get(key)? {
            Value::Array(items) => {
                let full_path = Self::key_path(path, key);
                let mut out = Vec::with_capacity(items.len());
                for (i, item) in items.iter().enumerate() {
                    match as_float(item) {
                        Some(v) => out.push(v),
                        None => self.err(&format!("{full_path}[{i}]"), "must be a number"),
                    }
                }
                Some(out)
            }
            _ => {
                self.err(&Self::key_path(path, key), "must be an array of numbers");
                None
            }
        }
    }

    fn req_enum(&mut self, t: &Table, path: &str, key: &str, allowed: &[&str]) -> Option<String> {
        match t.get(key) {
            None => {
                self.err(&Self::key_path(path, key), "missing required key");
                None
            }
            Some(v) => self.coerce_enum(v, &Self::key_path(path, key), allowed),
        }
    }

    fn opt_enum(&mut self, t: &Table, path: &str, key: &str, allowed: &[&str]) -> Option<String> {
        let v = t.get(key)?;
        self.coerce_enum(v, &Self::key_path(path, key), allowed)
    }

    fn coerce_enum(&mut self, v: &Value, path: &str, allowed: &[&str]) -> Option<String> {
        match v {
            Value::String(s) if allowed.contains(&s.as_str()) => Some(s.clone()),
            Value::String(s) => {
                self.err(path, &format!("unknown value {s:?}; expected one of {allowed:?}"));
                None
            }
            _ => {
                self.err(path, "must be a string");
                None
            }
        }
    }
}
