//! Randomized property suites, replayable from a seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::control::{composite_control, AttitudeGains, ControlMode, SetPoint};
use crate::dynamics::{kinetic_energy, lyapunov, BodyParams, State};
use crate::integrators::{simulate, RotationScheme, StepSize};
use crate::ocp::{flatten, objective_gradients, unflatten, NominalModel, OcpProblem, SlitSpec, SolverSettings};
use crate::so3::{cay, hat, vee, Mat3, Rotation, Vec3};

pub const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    So3,
    Energy,
    Gradients,
}

impl Suite {
    pub const ALL: [Suite; 3] = [Suite::So3, Suite::Energy, Suite::Gradients];

    pub fn name(self) -> &'static str {
        match self {
            Suite::So3 => "so3",
            Suite::Energy => "energy",
            Suite::Gradients => "gradients",
        }
    }

    pub fn parse(s: &str) -> Option<Vec<Suite>> {
        match s {
            "all" => Some(Self::ALL.to_vec()),
            _ => Self::ALL.iter().find(|x| x.name() == s).map(|x| vec![*x]),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub suite: &'static str,
    pub property: &'static str,
    pub passed: bool,
    /// Worst observed value against its bound.
    pub detail: String,
}

fn outcome(suite: Suite, property: &'static str, worst: f64, bound: f64, what: &str) -> CheckOutcome {
    CheckOutcome {
        suite: suite.name(),
        property,
        passed: worst <= bound,
        detail: format!("{what}: worst {worst:.3e}, bound {bound:.1e}"),
    }
}

fn vec3(rng: &mut ChaCha8Rng, scale: f64) -> Vec3 {
    Vec3::new(
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
    )
}

/// Runs one suite with its own generator seeded from `seed`.
pub fn run_suite(suite: Suite, seed: u64) -> Vec<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (suite as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    match suite {
        Suite::So3 => so3(&mut rng),
        Suite::Energy => energy(&mut rng),
        Suite::Gradients => gradients(&mut rng),
    }
}

fn so3(rng: &mut ChaCha8Rng) -> Vec<CheckOutcome> {
    let n = 100_000;
    let mut triple: f64 = 0.0;
    let mut orth: f64 = 0.0;
    let mut det: f64 = 0.0;
    let mut roundtrip = 0.0_f64;
    for _ in 0..n {
        let w = vec3(rng, 10.0);
        let a = vec3(rng, 10.0);
        let scale = w.norm_squared() * a.norm();
        if scale > 0.0 {
            triple = triple.max(w.dot(&w.cross(&a)).abs() / scale);
        }
        let r = cay(&w);
        orth = orth.max(r.orthogonality_error());
        det = det.max((r.matrix().determinant() - 1.0).abs());
        let m = hat(&a);
        let back = vee(&m).map(|v| (v - a).norm()).unwrap_or(f64::INFINITY);
        roundtrip = roundtrip.max(back + (m + m.transpose()).norm());
    }
    vec![
        outcome(Suite::So3, "triple_product", triple, 1e-12, "|w.(w x a)| / (|w|^2 |a|)"),
        outcome(Suite::So3, "cayley_orthogonality", orth.max(det), 1e-12, "|R^T R - I|, |det R - 1|"),
        outcome(Suite::So3, "hat_vee_roundtrip", roundtrip, 0.0, "|vee(hat a) - a| + |hat a + hat a^T|"),
    ]
}

fn body() -> BodyParams {
    BodyParams::from_diagonal(1.0, Vec3::new(1.5, 1.5, 0.5), 9.81).expect("valid body")
}

fn random_state(rng: &mut ChaCha8Rng) -> State {
    State {
        p: vec3(rng, 1.0),
        r: cay(&vec3(rng, 2.0)),
        v: vec3(rng, 0.5),
        w: vec3(rng, 0.5),
    }
}

fn energy(rng: &mut ChaCha8Rng) -> Vec<CheckOutcome> {
    let b = body();
    let t = StepSize::new(0.002).expect("positive");
    let steps = 2500;
    let runs = 8;
    let gains = AttitudeGains::new(Mat3::identity(), 1.5).expect("valid gains");
    let mut k_drift: f64 = 0.0;
    let mut v_rise: f64 = f64::NEG_INFINITY;
    for _ in 0..runs {
        let s0 = random_state(rng);
        let a = vec3(rng, 5.0);
        let sp = SetPoint { r_d: cay(&vec3(rng, 2.0)) };
        let lossless = ControlMode { nominal: false, lossless: true };
        let k0 = kinetic_energy(&s0, &b);
        let recs = simulate(s0, |_, s| Ok(composite_control(s, &sp, &gains, &a, lossless)), &b, t, steps);
        match recs {
            Ok(recs) => {
                for r in &recs {
                    k_drift = k_drift.max((kinetic_energy(&r.state, &b) - k0).abs() / k0);
                }
            }
            Err(_) => k_drift = f64::INFINITY,
        }

        let both = ControlMode { nominal: true, lossless: true };
        let v_at = |s: &State| lyapunov(s, &b, gains.stiffness(), &sp.r_d).unwrap_or(f64::NAN);
        let v0 = v_at(&s0);
        match simulate(s0, |_, s| Ok(composite_control(s, &sp, &gains, &a, both)), &b, t, steps) {
            Ok(recs) => {
                for w in recs.windows(2) {
                    let rise = (v_at(&w[1].state) - v_at(&w[0].state)) / v0;
                    v_rise = v_rise.max(if rise.is_nan() { f64::INFINITY } else { rise });
                }
            }
            Err(_) => v_rise = f64::INFINITY,
        }
    }
    vec![
        outcome(Suite::Energy, "lossless_kinetic_energy", k_drift, 1e-4, "|K - K0| / K0 over 5 s"),
        outcome(Suite::Energy, "lyapunov_monotone", v_rise, 1e-6, "max (V_k+1 - V_k) / V0 over 5 s"),
    ]
}

/// `|analytic - numeric| / max(|analytic|, 1)`.
fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    diff / scale.max(1.0)
}

/// A random decision point of the slit problem, around the slit.
pub fn random_ocp_point<R: Rng>(rng: &mut R) -> (OcpProblem, Vec<Vec3>) {
    let mut v = |s: f64| Vec3::new(rng.random_range(-s..s), rng.random_range(-s..s), rng.random_range(-s..s));
    let initial = State {
        p: Vec3::new(0.0, 2.5, 0.5) + v(0.5),
        r: cay(&v(2.0)),
        v: Vec3::new(0.0, 0.1, 0.0),
        w: v(1.0),
    };
    let a_seq: Vec<Vec3> = (0..10).map(|_| v(5.0)).collect();
    let nominal = rng.random_bool(0.5).then(|| NominalModel {
        gains: AttitudeGains::new(Mat3::identity(), 1.5).expect("valid gains"),
        set_point: SetPoint {
            r_d: Rotation::rot_y(0.75 * std::f64::consts::PI),
        },
    });
    let prob = OcpProblem {
        horizon: 10,
        step: StepSize::new(0.1).expect("positive"),
        a_bound: Vec3::repeat(5.0),
        slit: SlitSpec::new(Vec3::new(0.0, 2.5, 0.0), Rotation::identity(), 0.005, 0.1).expect("valid slit"),
        body: body(),
        initial,
        nominal,
        scheme: RotationScheme::Midpoint,
        settings: SolverSettings::default(),
    };
    (prob, a_seq)
}

/// Worst relative error of the analytic cost and constraint gradients against
/// central differences at one point.
pub fn gradient_error(prob: &OcpProblem, a_seq: &[Vec3], h: f64) -> crate::Result<f64> {
    let grads = objective_gradients(prob, a_seq)?;
    let x = flatten(a_seq);
    let n = x.len();
    let mut fd_cost = vec![0.0; n];
    let mut fd_cons = vec![vec![0.0; n]; prob.horizon];
    for i in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        let (cp, gp) = crate::ocp::evaluate(prob, &unflatten(&xp))?;
        let (cm, gm) = crate::ocp::evaluate(prob, &unflatten(&xm))?;
        fd_cost[i] = (cp - cm) / (2.0 * h);
        for j in 0..prob.horizon {
            fd_cons[j][i] = (gp[j] - gm[j]) / (2.0 * h);
        }
    }
    let mut worst = relative_error(&grads.cost_gradient, &fd_cost);
    for j in 0..prob.horizon {
        worst = worst.max(relative_error(&grads.constraint_jacobian[j], &fd_cons[j]));
    }
    Ok(worst)
}

fn gradients(rng: &mut ChaCha8Rng) -> Vec<CheckOutcome> {
    let mut worst: f64 = 0.0;
    for _ in 0..25 {
        let (prob, a_seq) = random_ocp_point(rng);
        worst = worst.max(gradient_error(&prob, &a_seq, 1e-6).unwrap_or(f64::INFINITY));
    }
    vec![outcome(
        Suite::Gradients,
        "fd_vs_analytic",
        worst,
        1e-5,
        "|g - g_fd| / max(|g|, 1) over 25 points",
    )]
}
