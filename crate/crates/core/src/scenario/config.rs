//! Scenario documents (TOML) and their validation.

use std::f64::consts::PI;
use std::path::Path;

use serde::Deserialize;

use crate::control::{AttitudeGains, SetPoint};
use crate::dynamics::{BodyParams, State, DEFAULT_GRAVITY};
use crate::error::{Error, Result};
use crate::integrators::{RotationScheme, StepSize};
use crate::ocp::{SlitSpec, SolverSettings};
use crate::so3::{Mat3, Rotation, Vec3};

/// Which torque terms run in closed loop.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Free,
    LosslessOnly,
    NominalOnly,
    Combined,
}

impl Mode {
    pub fn nominal(self) -> bool {
        matches!(self, Mode::NominalOnly | Mode::Combined)
    }

    pub fn lossless(self) -> bool {
        matches!(self, Mode::LosslessOnly | Mode::Combined)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Free => "free",
            Mode::LosslessOnly => "lossless_only",
            Mode::NominalOnly => "nominal_only",
            Mode::Combined => "combined",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MpcConfig {
    pub step: StepSize,
    pub horizon: usize,
    pub a_bound: Vec3,
    /// Re-solve at every simulation step instead of once per `step`.
    pub resolve_every_step: bool,
    /// Predict with the nominal torque when it is active.
    pub include_nominal: bool,
    pub solver: SolverSettings,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub mode: Mode,
    pub body: BodyParams,
    pub initial: State,
    pub slit: SlitSpec,
    pub gains: AttitudeGains,
    pub set_point: SetPoint,
    pub sim_step: StepSize,
    pub n_steps: usize,
    pub scheme: RotationScheme,
    pub reorthonormalize: bool,
    pub mpc: MpcConfig,
    /// Human-readable notes on every default that was filled in.
    pub defaults: Vec<String>,
}

impl ScenarioConfig {
    /// Simulation steps per MPC period.
    pub fn mpc_stride(&self) -> usize {
        if self.mpc.resolve_every_step {
            1
        } else {
            (self.mpc.step.get() / self.sim_step.get()).round() as usize
        }
    }
}

// Raw document -----------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Doc {
    name: Option<String>,
    mode: Option<Mode>,
    body: Option<BodyDoc>,
    initial: Option<InitialDoc>,
    slit: Option<SlitDoc>,
    gains: Option<GainsDoc>,
    set_point: Option<SetPointDoc>,
    simulation: Option<SimulationDoc>,
    mpc: Option<MpcDoc>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BodyDoc {
    mass: Option<f64>,
    inertia: Option<[f64; 3]>,
    gravity: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InitialDoc {
    position: Option<[f64; 3]>,
    velocity: Option<[f64; 3]>,
    attitude: Option<RotationDoc>,
    angular_velocity: Option<[f64; 3]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SlitDoc {
    position: Option<[f64; 3]>,
    attitude: Option<RotationDoc>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GainsDoc {
    stiffness: Option<[[f64; 3]; 3]>,
    damping: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SetPointDoc {
    attitude: Option<RotationDoc>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulationDoc {
    step: Option<f64>,
    steps: Option<i64>,
    scheme: Option<String>,
    reorthonormalize: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MpcDoc {
    step: Option<f64>,
    horizon: Option<i64>,
    a_bound: Option<[f64; 3]>,
    eps1: Option<f64>,
    eps2: Option<f64>,
    resolve_every_step: Option<bool>,
    include_nominal: Option<bool>,
    solver: Option<SolverDoc>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolverDoc {
    stationarity_tol: Option<f64>,
    violation_tol: Option<f64>,
    max_iterations: Option<i64>,
    max_outer: Option<i64>,
    max_inner: Option<i64>,
    initial_inner_tol: Option<f64>,
    initial_penalty: Option<f64>,
    penalty_growth: Option<f64>,
    max_penalty: Option<f64>,
}

/// A full matrix, or a rotation about a coordinate or arbitrary axis with the
/// angle given in radians (`angle`) or in multiples of pi (`angle_pi`).
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RotationDoc {
    Matrix([[f64; 3]; 3]),
    AxisAngle {
        axis: AxisDoc,
        angle: Option<f64>,
        angle_pi: Option<f64>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum AxisDoc {
    Named(String),
    Vector([f64; 3]),
}

fn required<T>(value: Option<T>, path: &str) -> Result<T> {
    value.ok_or_else(|| Error::validation(path, "required field is missing"))
}

fn positive(value: f64, path: &str) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::validation(path, format!("must be positive, got {value}")))
    }
}

fn finite3(v: [f64; 3], path: &str) -> Result<Vec3> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(Vec3::from(v))
    } else {
        Err(Error::validation(path, "components must be finite"))
    }
}

fn matrix(rows: [[f64; 3]; 3]) -> Mat3 {
    Mat3::from_fn(|i, j| rows[i][j])
}

fn count(value: i64, path: &str, min: i64) -> Result<usize> {
    if value >= min {
        Ok(value as usize)
    } else {
        Err(Error::validation(path, format!("must be at least {min}, got {value}")))
    }
}

fn rotation(doc: RotationDoc, path: &str) -> Result<Rotation> {
    match doc {
        RotationDoc::Matrix(rows) => {
            Rotation::new(matrix(rows)).map_err(|e| Error::validation(path, e.to_string()))
        }
        RotationDoc::AxisAngle {
            axis,
            angle,
            angle_pi,
        } => {
            let theta = match (angle, angle_pi) {
                (Some(a), None) => a,
                (None, Some(k)) => k * PI,
                _ => {
                    return Err(Error::validation(
                        path,
                        "give exactly one of `angle` (rad) or `angle_pi`",
                    ))
                }
            };
            if !theta.is_finite() {
                return Err(Error::validation(path, "angle must be finite"));
            }
            match axis {
                AxisDoc::Named(n) => match n.as_str() {
                    "x" => Ok(Rotation::rot_x(theta)),
                    "y" => Ok(Rotation::rot_y(theta)),
                    "z" => Ok(Rotation::rot_z(theta)),
                    other => Err(Error::validation(
                        format!("{path}.axis"),
                        format!("expected \"x\", \"y\", \"z\" or a 3-vector, got {other:?}"),
                    )),
                },
                AxisDoc::Vector(v) => {
                    let v = Vec3::from(v);
                    let n = v.norm();
                    if !(n > 0.0 && n.is_finite()) {
                        return Err(Error::validation(format!("{path}.axis"), "axis must be nonzero"));
                    }
                    let r = nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(v), theta);
                    Rotation::new(r.into_inner()).map_err(|e| Error::validation(path, e.to_string()))
                }
            }
        }
    }
}

/// Parses a scenario document, applies `key=value` overrides and validates.
pub fn load_scenario_str(text: &str, overrides: &[String]) -> Result<ScenarioConfig> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let doc: Doc = table
        .try_into()
        .map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
    build(doc)
}

pub fn load_scenario(path: &Path, overrides: &[String]) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cfg = load_scenario_str(&text, overrides)?;
    if cfg.name.is_empty() {
        cfg.name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
    }
    Ok(cfg)
}

/// Parses `a.b.c=value` into a path and a TOML value. Values that are not
/// valid TOML are taken as bare strings.
pub fn parse_override(text: &str) -> Result<(Vec<String>, toml::Value)> {
    let (key, value) = text
        .split_once('=')
        .ok_or_else(|| Error::Parse(format!("override {text:?} is not of the form key=value")))?;
    let key = key.trim();
    let path: Vec<String> = key.split('.').map(|s| s.trim().to_string()).collect();
    if path.iter().any(|s| s.is_empty()) {
        return Err(Error::Parse(format!("override key {key:?} has an empty segment")));
    }
    let value = value.trim();
    let parsed = format!("v = {value}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    Ok((path, parsed))
}

fn apply_override(table: &mut toml::Table, text: &str) -> Result<()> {
    let (path, value) = parse_override(text)?;
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut node = table;
    for (i, seg) in parents.iter().enumerate() {
        let entry = node
            .entry(seg.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry.as_table_mut().ok_or_else(|| {
            Error::validation(path[..=i].join("."), "cannot override inside a non-table value")
        })?;
    }
    node.insert(last.clone(), value);
    Ok(())
}

fn build(doc: Doc) -> Result<ScenarioConfig> {
    let mut defaults = Vec::new();
    let mode = required(doc.mode, "mode")?;

    let body_doc = required(doc.body, "body")?;
    let mass = positive(required(body_doc.mass, "body.mass")?, "body.mass")?;
    let inertia = finite3(required(body_doc.inertia, "body.inertia")?, "body.inertia")?;
    let gravity = match body_doc.gravity {
        Some(g) => g,
        None => {
            defaults.push(format!("body.gravity = {DEFAULT_GRAVITY} m/s^2"));
            DEFAULT_GRAVITY
        }
    };
    if !(gravity >= 0.0 && gravity.is_finite()) {
        return Err(Error::validation("body.gravity", "must be finite and non-negative"));
    }
    let body = BodyParams::from_diagonal(mass, inertia, gravity)
        .map_err(|e| Error::validation("body.inertia", e.to_string()))?;

    let init = required(doc.initial, "initial")?;
    let initial = State {
        p: finite3(required(init.position, "initial.position")?, "initial.position")?,
        v: finite3(required(init.velocity, "initial.velocity")?, "initial.velocity")?,
        r: rotation(required(init.attitude, "initial.attitude")?, "initial.attitude")?,
        w: finite3(
            required(init.angular_velocity, "initial.angular_velocity")?,
            "initial.angular_velocity",
        )?,
    };

    let slit_doc = required(doc.slit, "slit")?;
    let slit_pos = finite3(required(slit_doc.position, "slit.position")?, "slit.position")?;
    let slit_att = rotation(required(slit_doc.attitude, "slit.attitude")?, "slit.attitude")?;

    let gains = match doc.gains {
        Some(g) => {
            let stiffness = match g.stiffness {
                Some(m) => matrix(m),
                None => {
                    defaults.push("gains.stiffness = identity N*m".into());
                    Mat3::identity()
                }
            };
            let damping = match g.damping {
                Some(d) => d,
                None => {
                    defaults.push("gains.damping = 1.5 N*m*s".into());
                    1.5
                }
            };
            AttitudeGains::new(stiffness, damping).map_err(|e| Error::validation("gains", e.to_string()))?
        }
        None => {
            defaults.push("gains.stiffness = identity N*m, gains.damping = 1.5 N*m*s".into());
            AttitudeGains::new(Mat3::identity(), 1.5)?
        }
    };

    let set_point = match doc.set_point.and_then(|s| s.attitude) {
        Some(r) => SetPoint {
            r_d: rotation(r, "set_point.attitude")?,
        },
        None if mode.nominal() => {
            return Err(Error::validation(
                "set_point.attitude",
                format!("required in mode {}", mode.as_str()),
            ))
        }
        None => {
            defaults.push("set_point.attitude = identity (energy bookkeeping only)".into());
            SetPoint {
                r_d: Rotation::identity(),
            }
        }
    };

    let sim = required(doc.simulation, "simulation")?;
    let sim_step = StepSize::new(required(sim.step, "simulation.step")?)
        .map_err(|e| Error::validation("simulation.step", e.to_string()))?;
    let n_steps = count(required(sim.steps, "simulation.steps")?, "simulation.steps", 1)?;
    let scheme = match sim.scheme.as_deref() {
        None => RotationScheme::default(),
        Some("midpoint") => RotationScheme::Midpoint,
        Some("printed") => RotationScheme::Printed,
        Some(other) => {
            return Err(Error::validation(
                "simulation.scheme",
                format!("expected \"midpoint\" or \"printed\", got {other:?}"),
            ))
        }
    };
    let reorthonormalize = sim.reorthonormalize.unwrap_or(false);

    let mpc_doc = required(doc.mpc, "mpc")?;
    let eps1 = required(mpc_doc.eps1, "mpc.eps1")?;
    let eps2 = required(mpc_doc.eps2, "mpc.eps2")?;
    let slit = SlitSpec::new(slit_pos, slit_att, eps1, eps2).map_err(|e| match e {
        Error::InvalidParameter { name, reason } => Error::validation(format!("mpc.{name}"), reason),
        other => other,
    })?;

    let mpc_step = match mpc_doc.step {
        Some(t) => t,
        None if mode.lossless() => return Err(Error::validation("mpc.step", "required when the MPC runs")),
        None => 0.1,
    };
    let mpc_step = StepSize::new(mpc_step).map_err(|e| Error::validation("mpc.step", e.to_string()))?;
    let horizon = match mpc_doc.horizon {
        Some(h) => count(h, "mpc.horizon", 1)?,
        None if mode.lossless() => return Err(Error::validation("mpc.horizon", "required when the MPC runs")),
        None => 10,
    };
    let a_bound = match mpc_doc.a_bound {
        Some(b) => {
            let b = finite3(b, "mpc.a_bound")?;
            if b.iter().any(|x| *x <= 0.0) {
                return Err(Error::validation("mpc.a_bound", "components must be positive"));
            }
            b
        }
        None => {
            defaults.push("mpc.a_bound = [5, 5, 5] N*m*s/rad".into());
            Vec3::repeat(5.0)
        }
    };
    let ratio = mpc_step.get() / sim_step.get();
    if (ratio - ratio.round()).abs() > 1e-9 * ratio || ratio.round() < 1.0 {
        return Err(Error::validation(
            "mpc.step",
            format!(
                "must be a whole multiple of simulation.step ({} / {})",
                mpc_step.get(),
                sim_step.get()
            ),
        ));
    }
    let solver = solver_settings(mpc_doc.solver.unwrap_or_default())?;

    Ok(ScenarioConfig {
        name: doc.name.unwrap_or_default(),
        mode,
        body,
        initial,
        slit,
        gains,
        set_point,
        sim_step,
        n_steps,
        scheme,
        reorthonormalize,
        mpc: MpcConfig {
            step: mpc_step,
            horizon,
            a_bound,
            resolve_every_step: mpc_doc.resolve_every_step.unwrap_or(false),
            include_nominal: mpc_doc.include_nominal.unwrap_or(true),
            solver,
        },
        defaults,
    })
}

fn solver_settings(doc: SolverDoc) -> Result<SolverSettings> {
    let mut s = SolverSettings::default();
    let caps = |v: Option<i64>, path: &str, into: &mut usize| -> Result<()> {
        if let Some(v) = v {
            *into = count(v, path, 1)?;
        }
        Ok(())
    };
    caps(doc.max_iterations, "mpc.solver.max_iterations", &mut s.max_iterations)?;
    caps(doc.max_outer, "mpc.solver.max_outer", &mut s.max_outer)?;
    caps(doc.max_inner, "mpc.solver.max_inner", &mut s.max_inner)?;
    s.stationarity_tol = doc.stationarity_tol.unwrap_or(s.stationarity_tol);
    s.violation_tol = doc.violation_tol.unwrap_or(s.violation_tol);
    s.initial_inner_tol = doc.initial_inner_tol.unwrap_or(s.initial_inner_tol);
    s.initial_penalty = doc.initial_penalty.unwrap_or(s.initial_penalty);
    s.penalty_growth = doc.penalty_growth.unwrap_or(s.penalty_growth);
    s.max_penalty = doc.max_penalty.unwrap_or(s.max_penalty);
    s.validate().map_err(|e| match e {
        Error::InvalidParameter { name, reason } => Error::validation(format!("mpc.solver.{name}"), reason),
        other => other,
    })?;
    Ok(s)
}
