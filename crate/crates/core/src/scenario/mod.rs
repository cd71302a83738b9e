//! Closed-loop scenario runs, trace capture and energy reporting.

mod config;
mod trace;

use crate::control::{composite_control, lossless_torque, ControlMode};
use crate::dynamics::{kinetic_energy, potential_energy, ControlInput, State};
use crate::error::{Error, Result};
use crate::integrators::{simulate_with, SimOptions};
use crate::ocp::{
    orientation_error, slit_constraint, slit_distance, MpcController, NominalModel, OcpProblem,
};
use crate::so3::{Mat3, Vec3};

pub use config::{load_scenario, load_scenario_str, parse_override, MpcConfig, Mode, ScenarioConfig};
pub use trace::{read_trace, read_trace_csv, read_trace_jsonl, write_trace, write_trace_to, TraceFormat, COLUMNS};

/// Shipped scenario documents, keyed by name.
pub const SHIPPED: [(&str, &str); 4] = [
    ("paper-fig1", include_str!("../../scenarios/paper-fig1.toml")),
    ("paper-fig2", include_str!("../../scenarios/paper-fig2.toml")),
    ("paper-fig3", include_str!("../../scenarios/paper-fig3.toml")),
    ("paper-fig4", include_str!("../../scenarios/paper-fig4.toml")),
];

pub fn shipped(name: &str) -> Option<&'static str> {
    SHIPPED.iter().find(|(n, _)| *n == name).map(|(_, d)| *d)
}

/// Diagnostics of the most recent MPC solve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MpcDiagnostics {
    pub cost: f64,
    pub violation: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRecord {
    pub t: f64,
    pub p: Vec3,
    pub v: Vec3,
    pub w: Vec3,
    pub r: Mat3,
    pub kinetic: f64,
    pub potential: f64,
    pub lyapunov: f64,
    pub eps: f64,
    pub d: f64,
    pub constraint_g: f64,
    pub a: Vec3,
    pub tau_prime: Vec3,
    pub tau_total: Vec3,
    pub mpc: Option<MpcDiagnostics>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    /// Free-form provenance lines written as `#` comments.
    pub header: Vec<String>,
    pub records: Vec<TraceRecord>,
    /// MPC solves that failed and kept the previous input.
    pub mpc_failures: usize,
}

fn provenance(cfg: &ScenarioConfig) -> Vec<String> {
    let mut lines = vec![
        format!("gyroshape {}", env!("CARGO_PKG_VERSION")),
        format!("scenario: {}", if cfg.name.is_empty() { "<unnamed>" } else { &cfg.name }),
        format!("mode: {}", cfg.mode.as_str()),
        format!(
            "simulation: step {} s, {} steps, scheme {:?}, reorthonormalize {}",
            cfg.sim_step.get(),
            cfg.n_steps,
            cfg.scheme,
            cfg.reorthonormalize
        ),
    ];
    if cfg.mode.lossless() {
        lines.push(format!(
            "mpc: step {} s, horizon {}, re-solve every {} steps",
            cfg.mpc.step.get(),
            cfg.mpc.horizon,
            cfg.mpc_stride()
        ));
    }
    lines.extend(cfg.defaults.iter().map(|d| format!("default: {d}")));
    lines
}

fn record(
    t: f64,
    s: &State,
    u: &ControlInput,
    cfg: &ScenarioConfig,
    mpc: Option<MpcDiagnostics>,
) -> Result<TraceRecord> {
    let kinetic = kinetic_energy(s, &cfg.body);
    let potential = potential_energy(&s.r, cfg.gains.stiffness(), &cfg.set_point.r_d)?;
    Ok(TraceRecord {
        t,
        p: s.p,
        v: s.v,
        w: s.w,
        r: *s.r.matrix(),
        kinetic,
        potential,
        lyapunov: kinetic + potential,
        eps: orientation_error(&s.r, &cfg.slit.r_star),
        d: slit_distance(&s.p, &cfg.slit),
        constraint_g: slit_constraint(s, &cfg.slit),
        a: u.a,
        tau_prime: u.tau_prime,
        tau_total: lossless_torque(&s.w, &u.a) + u.tau_prime,
        mpc,
    })
}

/// Runs the closed loop and returns `n_steps + 1` records.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Trace> {
    let mode = ControlMode {
        nominal: cfg.mode.nominal(),
        lossless: cfg.mode.lossless(),
    };
    let prob = OcpProblem {
        horizon: cfg.mpc.horizon,
        step: cfg.mpc.step,
        a_bound: cfg.mpc.a_bound,
        slit: cfg.slit,
        body: cfg.body,
        initial: cfg.initial,
        nominal: (mode.nominal && cfg.mpc.include_nominal).then_some(NominalModel {
            gains: cfg.gains,
            set_point: cfg.set_point,
        }),
        scheme: cfg.scheme,
        settings: cfg.mpc.solver,
    };
    if mode.lossless {
        prob.validate()?;
    }
    let stride = cfg.mpc_stride();
    let mut ctl = MpcController::new();
    let mut latest: Option<MpcDiagnostics> = None;
    let mut diags = Vec::with_capacity(cfg.n_steps + 1);

    let sim = simulate_with(
        cfg.initial,
        |k, s| {
            if !s.is_finite() {
                return Err(Error::NonFiniteObjective);
            }
            if mode.lossless && k % stride == 0 {
                let out = ctl.step(s, &prob);
                latest = out.solution.map(|sol| MpcDiagnostics {
                    cost: sol.cost,
                    violation: sol.max_violation,
                    iterations: sol.iterations,
                    converged: sol.converged,
                });
            }
            diags.push(latest);
            Ok(composite_control(s, &cfg.set_point, &cfg.gains, &ctl.a_hold(), mode))
        },
        &cfg.body,
        cfg.sim_step,
        cfg.n_steps,
        SimOptions {
            reorthonormalize: cfg.reorthonormalize,
            scheme: cfg.scheme,
        },
    )?;

    let mut records = Vec::with_capacity(sim.len());
    for (k, rec) in sim.iter().enumerate() {
        let (u, diag) = match rec.input {
            Some(u) => (u, diags[k]),
            None => (
                composite_control(&rec.state, &cfg.set_point, &cfg.gains, &ctl.a_hold(), mode),
                latest,
            ),
        };
        let r = record(rec.t, &rec.state, &u, cfg, diag).map_err(|e| Error::ControlLawFailure {
            step: k,
            source: Box::new(e),
        })?;
        records.push(r);
    }
    Ok(Trace {
        header: provenance(cfg),
        records,
        mpc_failures: ctl.failures(),
    })
}

/// Energy and constraint summary of a trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyReport {
    pub v0: f64,
    /// `max_k V(t_k+1) - V(t_k)`; zero or negative when `V` never increases.
    pub max_v_increase: f64,
    pub k0: f64,
    /// `max_k |K(t_k) - K(0)| / K(0)`.
    pub k_drift: f64,
    pub t_min_d: f64,
    pub d_min: f64,
    pub eps_at_min_d: f64,
    pub g_at_min_d: f64,
    pub g_min: f64,
    pub g_max: f64,
    /// Largest `constraint_g` over the 2 s before closest approach.
    pub g_max_final_2s: f64,
}

impl EnergyReport {
    /// `eps < eps2 (d + eps1)` at closest approach.
    pub fn passes_slit(&self) -> bool {
        self.g_at_min_d < 0.0
    }
}

/// `None` for an empty trace.
pub fn energy_report(trace: &Trace) -> Option<EnergyReport> {
    let recs = &trace.records;
    let first = recs.first()?;
    let max_v_increase = recs
        .windows(2)
        .map(|w| w[1].lyapunov - w[0].lyapunov)
        .fold(f64::NEG_INFINITY, f64::max);
    let k0 = first.kinetic;
    let k_drift = recs
        .iter()
        .map(|r| (r.kinetic - k0).abs())
        .fold(0.0, f64::max)
        / k0;
    let closest = recs
        .iter()
        .min_by(|a, b| a.d.total_cmp(&b.d))
        .expect("non-empty");
    let g_min = recs.iter().map(|r| r.constraint_g).fold(f64::INFINITY, f64::min);
    let g_max = recs.iter().map(|r| r.constraint_g).fold(f64::NEG_INFINITY, f64::max);
    let g_max_final_2s = recs
        .iter()
        .filter(|r| r.t >= closest.t - 2.0 && r.t <= closest.t)
        .map(|r| r.constraint_g)
        .fold(f64::NEG_INFINITY, f64::max);
    Some(EnergyReport {
        v0: first.lyapunov,
        max_v_increase: if recs.len() > 1 { max_v_increase } else { 0.0 },
        k0,
        k_drift,
        t_min_d: closest.t,
        d_min: closest.d,
        eps_at_min_d: closest.eps,
        g_at_min_d: closest.constraint_g,
        g_min,
        g_max,
        g_max_final_2s,
    })
}

impl std::fmt::Display for EnergyReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "V(0)                      {:.6e} J", self.v0)?;
        writeln!(
            f,
            "max V increase            {:.3e} J ({:.3e} of V(0))",
            self.max_v_increase,
            self.max_v_increase / self.v0
        )?;
        writeln!(f, "K(0)                      {:.6e} J", self.k0)?;
        writeln!(f, "max relative K drift      {:.3e}", self.k_drift)?;
        writeln!(f, "closest approach          t = {} s, d = {:.3e} m^2", self.t_min_d, self.d_min)?;
        writeln!(f, "eps at closest approach   {:.3e}", self.eps_at_min_d)?;
        writeln!(
            f,
            "slit constraint           g = {:.4e} ({})",
            self.g_at_min_d,
            if self.passes_slit() { "satisfied" } else { "violated" }
        )?;
        writeln!(f, "max g over final 2 s      {:.4e}", self.g_max_final_2s)?;
        write!(f, "g range                   [{:.4e}, {:.4e}]", self.g_min, self.g_max)
    }
}

/// Field names accepted by [`compare`].
pub const COMPARE_FIELDS: [&str; 7] = ["K", "U", "V", "eps", "d", "constraint_g", "w"];

fn field(r: &TraceRecord, name: &str) -> Option<f64> {
    Some(match name {
        "K" => r.kinetic,
        "U" => r.potential,
        "V" => r.lyapunov,
        "eps" => r.eps,
        "d" => r.d,
        "constraint_g" | "g" => r.constraint_g,
        "w" => r.w.norm(),
        _ => return None,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    /// `(field, max |a - b|)`.
    pub deviations: Vec<(String, f64)>,
    /// `(t at min d, eps there)` for each trace.
    pub closest: [(f64, f64); 2],
}

impl Comparison {
    pub fn within(&self, tol: f64) -> bool {
        self.deviations.iter().all(|(_, d)| *d <= tol)
    }
}

/// Per-field maximum deviation of two traces on the same time grid.
pub fn compare(a: &Trace, b: &Trace, fields: &[&str]) -> Result<Comparison> {
    if a.records.len() != b.records.len() {
        return Err(Error::GridMismatch(format!(
            "{} records vs {}",
            a.records.len(),
            b.records.len()
        )));
    }
    for (k, (ra, rb)) in a.records.iter().zip(&b.records).enumerate() {
        if (ra.t - rb.t).abs() > 1e-9 * ra.t.abs().max(1.0) {
            return Err(Error::GridMismatch(format!(
                "record {k}: t = {} vs {}",
                ra.t, rb.t
            )));
        }
    }
    let mut deviations = Vec::with_capacity(fields.len());
    for name in fields {
        if field(&TraceRecord::blank(), name).is_none() {
            return Err(Error::Parse(format!(
                "unknown field {name:?}, expected one of {}",
                COMPARE_FIELDS.join(", ")
            )));
        }
        let dev = a
            .records
            .iter()
            .zip(&b.records)
            .map(|(ra, rb)| (field(ra, name).unwrap() - field(rb, name).unwrap()).abs())
            .fold(0.0, f64::max);
        deviations.push((name.to_string(), dev));
    }
    let closest = |t: &Trace| {
        t.records
            .iter()
            .min_by(|x, y| x.d.total_cmp(&y.d))
            .map(|r| (r.t, r.eps))
            .unwrap_or((f64::NAN, f64::NAN))
    };
    Ok(Comparison {
        deviations,
        closest: [closest(a), closest(b)],
    })
}

impl TraceRecord {
    fn blank() -> Self {
        TraceRecord {
            t: 0.0,
            p: Vec3::zeros(),
            v: Vec3::zeros(),
            w: Vec3::zeros(),
            r: Mat3::identity(),
            kinetic: 0.0,
            potential: 0.0,
            lyapunov: 0.0,
            eps: 0.0,
            d: 0.0,
            constraint_g: 0.0,
            a: Vec3::zeros(),
            tau_prime: Vec3::zeros(),
            tau_total: Vec3::zeros(),
            mpc: None,
        }
    }
}
