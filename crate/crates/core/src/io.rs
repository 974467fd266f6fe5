//! Run configuration, command dispatch, and report serialization shared by
//! the command-line front end.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::audit::{audit_manifold_dimension, audit_point, ConditionStatus};
use crate::connection::{
    check_cocycle, holonomy_loop, lift_curve, CocyclePaths, ParamPath, TransportOptions, TransportResult,
};
use crate::dsl::{build_system_from_config, validate_declaration, DslDeclaration};
use crate::error::{Error, ErrorClass, Result};
use crate::finder::{enumerate_level_points, newton_on_level_set, trace_fiber, FiberTrace, TraceOptions};
use crate::monodromy::{
    eigen_along_fiber_loop, rotation_family, stability_signature, track_matrix_loop, EigenLoopReport,
    StabilitySignature, TrackOptions,
};
use crate::system::{builtin, BuiltinParams, PointState, SystemSpec};
use crate::tolerances::Tolerances;

pub const SCHEMA_VERSION: u32 = 1;

/// Either a built-in system (`{"builtin": "rfmr", "n": 3}`) or an
/// expression declaration (`{"dsl": {...}}`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dsl: Option<DslDeclaration>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum MatrixFamily {
    /// `[[0, 1], [-1, 2 cos s]]` at `samples + 1` equally spaced points of `[0, 2 pi]`.
    Rotation { samples: usize },
}

fn default_budget() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Command {
    Audit {
        lambda: Vec<f64>,
        x: Vec<f64>,
    },
    Find {
        lambda: Vec<f64>,
        level: Vec<f64>,
        #[serde(default = "default_budget")]
        budget: usize,
        #[serde(default)]
        seed: u64,
        /// Solve from this start only instead of enumerating.
        #[serde(default)]
        x0: Option<Vec<f64>>,
    },
    TraceFiber {
        lambda: Vec<f64>,
        x0: Vec<f64>,
        #[serde(default)]
        trace: TraceOptions,
    },
    Transport {
        path: Vec<Vec<f64>>,
        x0: Vec<f64>,
        #[serde(default)]
        transport: TransportOptions,
    },
    Holonomy {
        #[serde(rename = "loop")]
        loop_path: Vec<Vec<f64>>,
        level: Vec<f64>,
        #[serde(default = "default_budget")]
        budget: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        transport: TransportOptions,
    },
    Cocycle {
        lambdas: Vec<Vec<f64>>,
        x0: Vec<f64>,
        /// Defaults to straight segments between the three parameter values.
        #[serde(default)]
        paths: Option<CocyclePaths>,
        #[serde(default)]
        transport: TransportOptions,
    },
    EigenLoop {
        lambda: Vec<f64>,
        loop_points: Vec<Vec<f64>>,
        #[serde(default)]
        track: TrackOptions,
    },
    TrackMatrixLoop {
        #[serde(default)]
        k: usize,
        /// Row-major matrices.
        #[serde(default)]
        matrices: Option<Vec<Vec<Vec<f64>>>>,
        #[serde(default)]
        family: Option<MatrixFamily>,
        #[serde(default)]
        track: TrackOptions,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Audit { .. } => "audit",
            Command::Find { .. } => "find",
            Command::TraceFiber { .. } => "trace-fiber",
            Command::Transport { .. } => "transport",
            Command::Holonomy { .. } => "holonomy",
            Command::Cocycle { .. } => "cocycle",
            Command::EigenLoop { .. } => "eigen-loop",
            Command::TrackMatrixLoop { .. } => "track-matrix-loop",
        }
    }

    fn has_csv(&self) -> bool {
        matches!(self, Command::TraceFiber { .. } | Command::Transport { .. })
    }

    fn seed_mut(&mut self) -> Option<&mut u64> {
        match self {
            Command::Find { seed, .. } | Command::Holonomy { seed, .. } => Some(seed),
            _ => None,
        }
    }
}

pub const COMMANDS: [&str; 8] = [
    "audit",
    "find",
    "trace-fiber",
    "transport",
    "holonomy",
    "cocycle",
    "eigen-loop",
    "track-matrix-loop",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
    Both,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Report destination; standard output when absent.
    #[serde(default)]
    pub path: Option<String>,
    #[serde(default)]
    pub format: OutputFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub system: SystemConfig,
    #[serde(flatten)]
    pub command: Command,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Command-line overrides, applied on top of the configuration file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub tolerances: Vec<(String, f64)>,
    pub output: Option<String>,
    pub format: Option<OutputFormat>,
}

fn parse_error(e: serde_json::Error) -> Error {
    Error::Input(format!("configuration: {e}"))
}

/// Parse a configuration document. When `command` is given it must match
/// the document's `command` field, or supplies it if the field is absent.
pub fn parse_config(text: &str, command: Option<&str>) -> Result<RunConfig> {
    let mut value: Value = serde_json::from_str(text).map_err(parse_error)?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| Error::Input("configuration must be a JSON object".into()))?;
    match (obj.get("command").and_then(Value::as_str), command) {
        (Some(c), _) if !COMMANDS.contains(&c) => {
            return Err(Error::Input(format!(
                "unknown command `{c}` (expected one of {})",
                COMMANDS.join(", ")
            )))
        }
        (Some(c), Some(want)) if c != want => {
            return Err(Error::Input(format!(
                "configuration is for command `{c}` but `{want}` was requested"
            )))
        }
        (None, Some(want)) => {
            obj.insert("command".into(), Value::String(want.into()));
        }
        (None, None) => return Err(Error::Input("configuration has no `command` field".into())),
        _ => {}
    }
    let mut cfg: RunConfig = serde_json::from_value(value).map_err(parse_error)?;
    if let Some(d) = cfg.system.dsl.as_mut() {
        d.materialize();
    }
    Ok(cfg)
}

/// Read, parse and structurally validate a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    load_config_for(path, None)
}

pub fn load_config_for(path: &Path, command: Option<&str>) -> Result<RunConfig> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))?;
    let cfg = parse_config(&text, command)?;
    validate(&cfg)?;
    Ok(cfg)
}

pub fn apply_overrides(cfg: &mut RunConfig, o: &Overrides) -> Result<()> {
    if let Some(seed) = o.seed {
        match cfg.command.seed_mut() {
            Some(s) => *s = seed,
            None => return Err(Error::Input(format!("command `{}` takes no seed", cfg.command.name()))),
        }
    }
    if !o.tolerances.is_empty() {
        let mut t = serde_json::to_value(&cfg.tolerances).map_err(|e| Error::Input(e.to_string()))?;
        let obj = t.as_object_mut().expect("tolerances serialize as an object");
        for (name, v) in &o.tolerances {
            let key = name.replace('-', "_");
            if !obj.contains_key(&key) {
                return Err(Error::Input(format!("unknown tolerance `{name}`")));
            }
            let num = if obj[&key].is_u64() {
                if v.fract() != 0.0 || *v < 0.0 {
                    return Err(Error::Input(format!(
                        "tolerance `{name}` must be a non-negative integer"
                    )));
                }
                json!(*v as u64)
            } else {
                json!(v)
            };
            obj.insert(key, num);
        }
        cfg.tolerances = serde_json::from_value(t).map_err(|e| Error::Input(format!("tolerances: {e}")))?;
    }
    if let Some(p) = &o.output {
        cfg.output.path = Some(p.clone());
    }
    if let Some(f) = o.format {
        cfg.output.format = f;
    }
    Ok(())
}

fn system_dims(cfg: &SystemConfig) -> Result<(usize, usize, usize)> {
    match (&cfg.builtin, &cfg.dsl) {
        (Some(name), None) => {
            let s = builtin(name, &BuiltinParams { n: cfg.n })?;
            Ok((s.n, s.m, s.k))
        }
        (None, Some(d)) => {
            if cfg.n.is_some() {
                return Err(Error::Input("`n` belongs inside the dsl declaration".into()));
            }
            validate_declaration(d)?;
            Ok((d.n, d.m, d.k))
        }
        _ => Err(Error::Input(
            "system must give exactly one of `builtin` or `dsl`".into(),
        )),
    }
}

pub fn build_system(cfg: &SystemConfig) -> Result<SystemSpec> {
    match (&cfg.builtin, &cfg.dsl) {
        (Some(name), None) => builtin(name, &BuiltinParams { n: cfg.n }),
        (None, Some(d)) => build_system_from_config(d),
        _ => Err(Error::Input(
            "system must give exactly one of `builtin` or `dsl`".into(),
        )),
    }
}

fn want(what: &str, v: &[f64], len: usize) -> Result<()> {
    if v.len() != len {
        return Err(Error::dim(what, len, v.len()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { context: what.into() });
    }
    Ok(())
}

fn want_all(what: &str, vs: &[Vec<f64>], len: usize, min_count: usize) -> Result<()> {
    if vs.len() < min_count {
        return Err(Error::Input(format!(
            "{what} needs at least {min_count} entries, got {}",
            vs.len()
        )));
    }
    vs.iter().try_for_each(|v| want(what, v, len))
}

fn closed(vs: &[Vec<f64>]) -> bool {
    vs.first() == vs.last()
}

/// Dimension and shape checks against the system; runs before any computation.
pub fn validate(cfg: &RunConfig) -> Result<()> {
    let (n, m, k) = system_dims(&cfg.system)?;
    if cfg.output.format != OutputFormat::Json && !cfg.command.has_csv() {
        return Err(Error::Input(format!(
            "command `{}` has no CSV output",
            cfg.command.name()
        )));
    }
    match &cfg.command {
        Command::Audit { lambda, x } => {
            want("lambda", lambda, m)?;
            want("x", x, n)
        }
        Command::Find {
            lambda,
            level,
            budget,
            x0,
            ..
        } => {
            want("lambda", lambda, m)?;
            want("level", level, k)?;
            if *budget == 0 {
                return Err(Error::Input("budget must be positive".into()));
            }
            x0.as_ref().map_or(Ok(()), |x| want("x0", x, n))
        }
        Command::TraceFiber { lambda, x0, .. } => {
            want("lambda", lambda, m)?;
            want("x0", x0, n)
        }
        Command::Transport { path, x0, .. } => {
            want_all("path", path, m, 2)?;
            want("x0", x0, n)
        }
        Command::Holonomy {
            loop_path,
            level,
            budget,
            ..
        } => {
            want_all("loop", loop_path, m, 2)?;
            want("level", level, k)?;
            if *budget == 0 {
                return Err(Error::Input("budget must be positive".into()));
            }
            if !closed(loop_path) {
                return Err(Error::Input("loop must close".into()));
            }
            Ok(())
        }
        Command::Cocycle { lambdas, x0, paths, .. } => {
            want_all("lambdas", lambdas, m, 3)?;
            if lambdas.len() != 3 {
                return Err(Error::Input("cocycle takes exactly three parameter values".into()));
            }
            want("x0", x0, n)?;
            if let Some(p) = paths {
                for q in [&p.p21, &p.p32, &p.p31] {
                    if q.dim() != m {
                        return Err(Error::dim("cocycle path waypoint", m, q.dim()));
                    }
                }
            }
            Ok(())
        }
        Command::EigenLoop {
            lambda, loop_points, ..
        } => {
            want("lambda", lambda, m)?;
            want_all("loop_points", loop_points, n, 2)?;
            if !closed(loop_points) {
                return Err(Error::Input("loop must close".into()));
            }
            Ok(())
        }
        Command::TrackMatrixLoop { matrices, family, .. } => match (matrices, family) {
            (Some(ms), None) => {
                let size = ms.first().map_or(0, Vec::len);
                if ms.len() < 2 || size == 0 {
                    return Err(Error::Input(
                        "matrices must hold at least two non-empty matrices".into(),
                    ));
                }
                for mat in ms {
                    want_all("matrix rows", mat, size, size)?;
                    if mat.len() != size {
                        return Err(Error::dim("matrix rows", size, mat.len()));
                    }
                }
                if ms.first() != ms.last() {
                    return Err(Error::Input("loop must close".into()));
                }
                Ok(())
            }
            (None, Some(MatrixFamily::Rotation { samples })) => {
                if *samples < 2 {
                    return Err(Error::Input("rotation family needs at least 2 samples".into()));
                }
                Ok(())
            }
            _ => Err(Error::Input("give exactly one of `matrices` or `family`".into())),
        },
    }
}

fn dv(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

fn path_of(vs: &[Vec<f64>]) -> Result<ParamPath> {
    ParamPath::new(vs.iter().map(|v| dv(v)).collect())
}

#[derive(Serialize)]
struct EigenResult<'a> {
    #[serde(flatten)]
    report: &'a EigenLoopReport,
    signature: StabilitySignature,
}

fn eigen_value(report: &EigenLoopReport) -> Value {
    serde_json::to_value(EigenResult {
        report,
        signature: stability_signature(report),
    })
    .expect("serializable")
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

/// Rendered output of one run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub json: String,
    pub csv: Option<String>,
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn fiber_csv(sys: &SystemSpec, t: &FiberTrace) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# system={}", sys.name);
    let lam: Vec<String> = t.lambda.iter().map(|v| num(*v)).collect();
    let _ = writeln!(out, "# lambda={}", lam.join(" "));
    let topo = match t.topology {
        crate::finder::Topology::Circle => "circle",
        crate::finder::Topology::Segment => "segment",
    };
    let _ = writeln!(out, "# topology={topo}");
    let _ = writeln!(out, "# arclength={}", num(t.arclength));
    let header: Vec<String> = (1..=sys.n).map(|i| format!("x{i}")).collect();
    let _ = writeln!(out, "{}", header.join(","));
    for p in &t.points {
        let row: Vec<String> = p.iter().map(|v| num(*v)).collect();
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

fn transport_csv(sys: &SystemSpec, r: &TransportResult) -> String {
    let mut out = String::new();
    let mut header = vec!["t".to_string()];
    header.extend((1..=sys.m).map(|i| format!("l{i}")));
    header.extend((1..=sys.n).map(|i| format!("x{i}")));
    let _ = writeln!(out, "{}", header.join(","));
    for ((t, l), x) in r.t.iter().zip(&r.lambda_path).zip(&r.gamma) {
        let mut row = vec![num(*t)];
        row.extend(l.iter().map(|v| num(*v)));
        row.extend(x.iter().map(|v| num(*v)));
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

fn execute(cfg: &RunConfig) -> Result<(Value, Option<String>)> {
    let sys = build_system(&cfg.system)?;
    let tols = &cfg.tolerances;
    match &cfg.command {
        Command::Audit { lambda, x } => {
            let u = PointState::new(dv(lambda), dv(x));
            let report = audit_point(&sys, &u, tols)?;
            let failing: Vec<&str> = [("ii", &report.cond_ii), ("iii", &report.cond_iii)]
                .into_iter()
                .filter(|(_, c)| c.status == ConditionStatus::Fail)
                .map(|(name, _)| name)
                .collect();
            if !failing.is_empty() {
                return Err(Error::Condition {
                    message: format!("condition {} fails at an equilibrium", failing.join(" and ")),
                    report: Box::new(report),
                });
            }
            let dimension = if report.is_equilibrium {
                audit_manifold_dimension(&sys, &[u], tols)?.pop()
            } else {
                None
            };
            Ok((
                json!({ "audit": to_value(&report), "dimension": to_value(&dimension) }),
                None,
            ))
        }
        Command::Find {
            lambda,
            level,
            budget,
            seed,
            x0,
        } => {
            let points = match x0 {
                Some(x0) => vec![newton_on_level_set(&sys, &dv(lambda), &dv(level), &dv(x0), tols)?],
                None => enumerate_level_points(&sys, &dv(lambda), &dv(level), *budget, *seed, tols)?,
            };
            Ok((json!({ "count": points.len(), "points": to_value(&points) }), None))
        }
        Command::TraceFiber { lambda, x0, trace } => {
            let t = trace_fiber(&sys, &dv(lambda), &dv(x0), trace, tols)?;
            let csv = fiber_csv(&sys, &t);
            Ok((to_value(&t), Some(csv)))
        }
        Command::Transport { path, x0, transport } => {
            let r = lift_curve(&sys, &path_of(path)?, &dv(x0), transport, tols)?;
            let csv = transport_csv(&sys, &r);
            Ok((to_value(&r), Some(csv)))
        }
        Command::Holonomy {
            loop_path,
            level,
            budget,
            seed,
            transport,
        } => {
            let r = holonomy_loop(&sys, &path_of(loop_path)?, &dv(level), *budget, *seed, transport, tols)?;
            Ok((to_value(&r), None))
        }
        Command::Cocycle {
            lambdas,
            x0,
            paths,
            transport,
        } => {
            let paths = match paths {
                Some(p) => p.clone(),
                None => CocyclePaths::straight(&dv(&lambdas[0]), &dv(&lambdas[1]), &dv(&lambdas[2]))?,
            };
            let r = check_cocycle(&sys, &paths, &dv(x0), transport, tols)?;
            Ok((to_value(&r), None))
        }
        Command::EigenLoop {
            lambda,
            loop_points,
            track,
        } => {
            let pts: Vec<DVector<f64>> = loop_points.iter().map(|p| dv(p)).collect();
            let r = eigen_along_fiber_loop(&sys, &dv(lambda), &pts, track, tols)?;
            Ok((eigen_value(&r), None))
        }
        Command::TrackMatrixLoop {
            k,
            matrices,
            family,
            track,
        } => {
            let js: Vec<DMatrix<f64>> = match (matrices, family) {
                (Some(ms), _) => ms
                    .iter()
                    .map(|rows| DMatrix::from_row_iterator(rows.len(), rows.len(), rows.iter().flatten().copied()))
                    .collect(),
                (None, Some(MatrixFamily::Rotation { samples })) => rotation_family(*samples),
                (None, None) => unreachable!("validated"),
            };
            let r = track_matrix_loop(&js, *k, track, tols)?;
            Ok((eigen_value(&r), None))
        }
    }
}

fn error_value(e: &Error) -> Value {
    let mut obj = Map::new();
    obj.insert("kind".into(), json!(e.kind()));
    obj.insert(
        "class".into(),
        json!(match e.class() {
            ErrorClass::Input => "input",
            ErrorClass::Degeneracy => "degeneracy",
        }),
    );
    obj.insert("message".into(), json!(e.to_string()));
    if let Error::Condition { report, .. } = e {
        obj.insert("audit".into(), to_value(report));
    }
    Value::Object(obj)
}

fn envelope(
    command: &str,
    config: Value,
    tolerances: Value,
    outcome: std::result::Result<Value, &Error>,
) -> (i32, String) {
    let (code, result, error) = match outcome {
        Ok(v) => (0, v, Value::Null),
        Err(e) => (e.exit_code(), Value::Null, error_value(e)),
    };
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "status": if code == 0 { "ok" } else { "error" },
        "exit_code": code,
        "config": config,
        "tolerances_used": tolerances,
        "result": result,
        "error": error,
    });
    let mut text = serde_json::to_string_pretty(&doc).expect("report serializes");
    text.push('\n');
    (code, text)
}

/// Run a validated configuration and render its report.
pub fn run(cfg: &RunConfig) -> RunOutcome {
    let outcome = validate(cfg).and_then(|_| execute(cfg));
    let (value, csv) = match &outcome {
        Ok((v, csv)) => (Ok(v.clone()), csv.clone()),
        Err(e) => (Err(e), None),
    };
    let (exit_code, json) = envelope(cfg.command.name(), to_value(cfg), to_value(&cfg.tolerances), value);
    RunOutcome { exit_code, json, csv }
}

/// Report for a configuration that could not be loaded.
pub fn failure_report(command: Option<&str>, e: &Error) -> RunOutcome {
    let (exit_code, json) = envelope(command.unwrap_or(""), Value::Null, Value::Null, Err(e));
    RunOutcome {
        exit_code,
        json,
        csv: None,
    }
}
