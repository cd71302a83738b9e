//! Discrete-time stepping: explicit Euler for translation and the explicit
//! Lie-Newmark scheme with Cayley retraction for attitude.
//!
//! The closed-loop simulator and the NMPC prediction model step through the
//! same generic [`advance_generic`], so a rollout reproduces a simulation run
//! at the same step size bit for bit.

use nalgebra::{Matrix3, Vector3};

use crate::dynamics::{BodyParams, ControlInput, State};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::so3::{cay_matrix, project_to_so3, Rotation, Vec3};

/// Integration step in seconds, `0 < T <= 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepSize(f64);

impl StepSize {
    pub fn new(seconds: f64) -> Result<Self> {
        if seconds > 0.0 && seconds <= 1.0 {
            Ok(StepSize(seconds))
        } else {
            Err(Error::invalid(
                "step",
                format!("must lie in (0, 1] seconds, got {seconds}"),
            ))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Full state with the attitude as a plain matrix, generic over the scalar.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Phase<S: Real> {
    pub p: Vector3<S>,
    pub r: Matrix3<S>,
    pub v: Vector3<S>,
    pub w: Vector3<S>,
}

impl From<&State> for Phase<f64> {
    fn from(s: &State) -> Self {
        Phase {
            p: s.p,
            r: *s.r.matrix(),
            v: s.v,
            w: s.w,
        }
    }
}

impl Phase<f64> {
    pub(crate) fn into_state(self) -> State {
        State {
            p: self.p,
            r: Rotation::from_matrix_unchecked(self.r),
            v: self.v,
            w: self.w,
        }
    }
}

#[inline]
fn euler_translation_generic<S: Real>(
    p: &Vector3<S>,
    v: &Vector3<S>,
    f_body: &Vector3<S>,
    r: &Matrix3<S>,
    b: &BodyParams,
    t: f64,
) -> (Vector3<S>, Vector3<S>) {
    let ts = S::from_f64(t);
    let weight = Vector3::new(S::zero(), S::zero(), S::from_f64(-b.mass() * b.gravity()));
    let p_next = p + v * ts;
    let v_next = v + (weight + r * f_body) * S::from_f64(t / b.mass());
    (p_next, v_next)
}

/// Attitude update variant.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RotationScheme {
    /// Explicit half step and Cayley update, with the angular velocity
    /// completed by the midpoint slope. The shaping torque `w x a` is
    /// evaluated at each stage velocity, `tau'` is held. Second order.
    #[default]
    Midpoint,
    /// Two explicit half steps with the whole torque held over the step.
    /// First order; kept for comparison studies.
    Printed,
}

/// `J^-1 (J w x w + w x a + tau')`.
#[inline]
fn angular_rate<S: Real>(
    w: &Vector3<S>,
    a: &Vector3<S>,
    tau_prime: &Vector3<S>,
    b: &BodyParams,
) -> Vector3<S> {
    b.inertia_solve(&(b.inertia_apply(w).cross(w) + (w.cross(a) + tau_prime)))
}

#[inline]
fn lie_newmark_generic<S: Real>(
    r: &Matrix3<S>,
    w: &Vector3<S>,
    a: &Vector3<S>,
    tau_prime: &Vector3<S>,
    b: &BodyParams,
    t: f64,
    scheme: RotationScheme,
) -> (Matrix3<S>, Vector3<S>) {
    let half = S::from_f64(0.5 * t);
    let full = S::from_f64(t);
    let w_half = w + angular_rate(w, a, tau_prime, b) * half;
    let r_next = r * cay_matrix(&(w_half * full));
    let w_next = match scheme {
        RotationScheme::Midpoint => w + angular_rate(&w_half, a, tau_prime, b) * full,
        RotationScheme::Printed => {
            let tau = w.cross(a) + tau_prime;
            w_half + b.inertia_solve(&(b.inertia_apply(&w_half).cross(&w_half) + tau)) * half
        }
    };
    (r_next, w_next)
}

/// One step of the gravity-compensated closed loop.
#[inline]
pub(crate) fn advance_generic<S: Real>(
    x: &Phase<S>,
    f_prime: &Vector3<S>,
    a: &Vector3<S>,
    tau_prime: &Vector3<S>,
    b: &BodyParams,
    t: f64,
    scheme: RotationScheme,
) -> Phase<S> {
    let support = Vector3::new(S::zero(), S::zero(), S::from_f64(b.mass() * b.gravity()));
    let f_body = x.r.transpose() * (support + f_prime);
    let (p, v) = euler_translation_generic(&x.p, &x.v, &f_body, &x.r, b, t);
    let (r, w) = lie_newmark_generic(&x.r, &x.w, a, tau_prime, b, t, scheme);
    Phase { p, r, v, w }
}

/// `p' = p + T v`, `v' = v + (T/m)(-m g e3 + R f_body)`.
pub fn euler_translation_step(
    p: &Vec3,
    v: &Vec3,
    f_body: &Vec3,
    r: &Rotation,
    b: &BodyParams,
    t: StepSize,
) -> (Vec3, Vec3) {
    euler_translation_generic(p, v, f_body, r.matrix(), b, t.get())
}

/// Lie-Newmark update of `(R, w)` under the torque `w x a + tau'` with `a`
/// and `tau'` held over the step (default [`RotationScheme::Midpoint`]).
pub fn lie_newmark_step(
    r: &Rotation,
    w: &Vec3,
    u: &ControlInput,
    b: &BodyParams,
    t: StepSize,
) -> (Rotation, Vec3) {
    lie_newmark_step_with(r, w, u, b, t, RotationScheme::default())
}

pub fn lie_newmark_step_with(
    r: &Rotation,
    w: &Vec3,
    u: &ControlInput,
    b: &BodyParams,
    t: StepSize,
    scheme: RotationScheme,
) -> (Rotation, Vec3) {
    let (r_next, w_next) = lie_newmark_generic(r.matrix(), w, &u.a, &u.tau_prime, b, t.get(), scheme);
    (Rotation::from_matrix_unchecked(r_next), w_next)
}

/// Applies gravity compensation, then steps translation and attitude with
/// the same held input.
pub fn advance(
    s: &State,
    u: &ControlInput,
    b: &BodyParams,
    t: StepSize,
    scheme: RotationScheme,
) -> State {
    advance_generic(&Phase::from(s), &u.f_prime, &u.a, &u.tau_prime, b, t.get(), scheme)
        .into_state()
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SimOptions {
    /// Re-project the attitude onto SO(3) after every step.
    pub reorthonormalize: bool,
    pub scheme: RotationScheme,
}

/// State at `t = k T` together with the input applied over `[t_k, t_k+1)`.
/// The final record carries no input.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimRecord {
    pub step: usize,
    pub t: f64,
    pub state: State,
    pub input: Option<ControlInput>,
}

pub fn simulate<F>(
    s0: State,
    control_law: F,
    b: &BodyParams,
    t: StepSize,
    n_steps: usize,
) -> Result<Vec<SimRecord>>
where
    F: FnMut(usize, &State) -> Result<ControlInput>,
{
    simulate_with(s0, control_law, b, t, n_steps, SimOptions::default())
}

pub fn simulate_with<F>(
    s0: State,
    mut control_law: F,
    b: &BodyParams,
    t: StepSize,
    n_steps: usize,
    options: SimOptions,
) -> Result<Vec<SimRecord>>
where
    F: FnMut(usize, &State) -> Result<ControlInput>,
{
    if n_steps == 0 {
        return Err(Error::invalid("n_steps", "must be at least 1"));
    }
    let mut records = Vec::with_capacity(n_steps + 1);
    let mut state = s0;
    for k in 0..n_steps {
        let input = control_law(k, &state).map_err(|e| Error::ControlLawFailure {
            step: k,
            source: Box::new(e),
        })?;
        records.push(SimRecord {
            step: k,
            t: k as f64 * t.get(),
            state,
            input: Some(input),
        });
        state = advance(&state, &input, b, t, options.scheme);
        if options.reorthonormalize {
            state.r = project_to_so3(state.r.matrix())?;
        }
    }
    records.push(SimRecord {
        step: n_steps,
        t: n_steps as f64 * t.get(),
        state,
        input: None,
    });
    Ok(records)
}
