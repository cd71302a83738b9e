//! Slit-passing optimal control problem.
//!
//! Decision variables are the shaping vectors `a_0 .. a_{H-1}` (direct single
//! shooting). The predicted attitude must keep
//! `eps(R) / (d(p) + eps1) < eps2` at every predicted knot `k = 1..H`, where
//! `eps` measures the misalignment of the body z-axis with the slit z-axis and
//! `d` is the squared planar distance to the slit. The cost is the squared
//! norm of the applied gyroscopic torque, `sum |w_k x a_k|^2`.

mod mpc;
mod sensitivity;
mod solver;

use nalgebra::{Matrix3, Vector3};

use crate::control::{AttitudeGains, SetPoint};
use crate::dynamics::{BodyParams, ControlInput, State};
use crate::error::{Error, Result};
use crate::integrators::{advance, RotationScheme, StepSize};
use crate::scalar::Real;
use crate::so3::{hat, Rotation, Vec3};

pub use mpc::{MpcController, MpcOutcome};
pub use sensitivity::{objective_gradients, OcpGradients};
pub(crate) use sensitivity::evaluate;
pub use solver::{solve_ocp, SolverSettings};

/// Slit pose and the constraint shape parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlitSpec {
    pub p_star: Vec3,
    pub r_star: Rotation,
    pub eps1: f64,
    pub eps2: f64,
}

impl SlitSpec {
    pub fn new(p_star: Vec3, r_star: Rotation, eps1: f64, eps2: f64) -> Result<Self> {
        if !(eps1 > 0.0 && eps1.is_finite()) {
            return Err(Error::invalid("eps1", format!("must be positive, got {eps1}")));
        }
        if !(eps2 > 0.0 && eps2.is_finite()) {
            return Err(Error::invalid("eps2", format!("must be positive, got {eps2}")));
        }
        Ok(Self {
            p_star,
            r_star,
            eps1,
            eps2,
        })
    }

    /// Slit z-axis in the inertial frame.
    fn axis(&self) -> Vec3 {
        self.r_star.matrix().column(2).into_owned()
    }
}

/// `1 - (e3^T R^T R_star e3)^2`, clamped to `[0, 1]`.
pub fn orientation_error(r: &Rotation, r_star: &Rotation) -> f64 {
    let axis = r_star.matrix().column(2).into_owned();
    orientation_error_generic(r.matrix(), &axis).value().clamp(0.0, 1.0)
}

#[inline]
fn orientation_error_generic<S: Real>(r: &Matrix3<S>, slit_axis: &Vec3) -> S {
    // e3^T R^T n is the inertial body z-axis (third column of R) dotted with n.
    let c = r[(0, 2)] * S::from_f64(slit_axis.x)
        + r[(1, 2)] * S::from_f64(slit_axis.y)
        + r[(2, 2)] * S::from_f64(slit_axis.z);
    S::one() - c * c
}

/// Squared distance to the slit in the inertial x-y plane.
pub fn slit_distance(p: &Vec3, slit: &SlitSpec) -> f64 {
    slit_distance_generic(p, slit)
}

#[inline]
fn slit_distance_generic<S: Real>(p: &Vector3<S>, slit: &SlitSpec) -> S {
    let dx = p.x - S::from_f64(slit.p_star.x);
    let dy = p.y - S::from_f64(slit.p_star.y);
    dx * dx + dy * dy
}

/// `eps / (d + eps1) - eps2`; the state is admissible iff this is negative.
pub fn slit_constraint(s: &State, slit: &SlitSpec) -> f64 {
    let eps = orientation_error(&s.r, &slit.r_star);
    eps / (slit_distance(&s.p, slit) + slit.eps1) - slit.eps2
}

#[inline]
pub(crate) fn slit_constraint_generic<S: Real>(
    p: &Vector3<S>,
    r: &Matrix3<S>,
    slit: &SlitSpec,
) -> S {
    let eps = orientation_error_generic(r, &slit.axis());
    eps / (slit_distance_generic(p, slit) + S::from_f64(slit.eps1)) - S::from_f64(slit.eps2)
}

/// `sum_k |hat(w_k) a_k|^2`.
pub fn ocp_cost(a_seq: &[Vec3], w_seq: &[Vec3]) -> Result<f64> {
    if a_seq.len() != w_seq.len() {
        return Err(Error::invalid(
            "a_seq",
            format!("{} shaping vectors for {} angular velocities", a_seq.len(), w_seq.len()),
        ));
    }
    Ok(a_seq
        .iter()
        .zip(w_seq)
        .map(|(a, w)| stage_cost_generic(w, a))
        .sum())
}

#[inline]
pub(crate) fn stage_cost_generic<S: Real>(w: &Vector3<S>, a: &Vector3<S>) -> S {
    let u = hat(w) * a;
    u.x * u.x + u.y * u.y + u.z * u.z
}

/// Nominal controller included in the prediction model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NominalModel {
    pub gains: AttitudeGains,
    pub set_point: SetPoint,
}

impl NominalModel {
    /// `G R_d^T`, the constant factor of the nominal torque.
    pub(crate) fn gain_frame(&self) -> crate::so3::Mat3 {
        self.gains.stiffness() * self.set_point.r_d.matrix().transpose()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OcpProblem {
    pub horizon: usize,
    pub step: StepSize,
    /// Componentwise bound on `|a_k^i|`.
    pub a_bound: Vec3,
    pub slit: SlitSpec,
    pub body: BodyParams,
    pub initial: State,
    pub nominal: Option<NominalModel>,
    pub scheme: RotationScheme,
    pub settings: SolverSettings,
}

impl OcpProblem {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::invalid("horizon", "must be at least 1"));
        }
        if !self.a_bound.iter().all(|b| *b > 0.0 && b.is_finite()) {
            return Err(Error::invalid(
                "a_bound",
                format!("components must be positive, got {:?}", self.a_bound),
            ));
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        3 * self.horizon
    }

    /// Input applied at a predicted state.
    fn input_at(&self, s: &State, a: &Vec3) -> ControlInput {
        let tau_prime = match &self.nominal {
            Some(n) => crate::control::nominal_attitude_torque(&s.r, &s.w, &n.set_point, &n.gains),
            None => Vec3::zeros(),
        };
        ControlInput {
            f_prime: Vec3::zeros(),
            tau_prime,
            a: *a,
        }
    }
}

/// Optimal shaping sequence and solver diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct OcpSolution {
    pub a_seq: Vec<Vec3>,
    pub cost: f64,
    /// `max(0, max_k g_k)` over the predicted knots.
    pub max_violation: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Predicted states `x_0 .. x_H` under the shaping sequence.
pub fn rollout(x0: &State, a_seq: &[Vec3], prob: &OcpProblem) -> Result<Vec<State>> {
    if a_seq.len() != prob.horizon {
        return Err(Error::invalid(
            "a_seq",
            format!("expected {} shaping vectors, got {}", prob.horizon, a_seq.len()),
        ));
    }
    let mut states = Vec::with_capacity(prob.horizon + 1);
    states.push(*x0);
    let mut s = *x0;
    for a in a_seq {
        let u = prob.input_at(&s, a);
        s = advance(&s, &u, &prob.body, prob.step, prob.scheme);
        states.push(s);
    }
    Ok(states)
}

/// Splits a flat decision vector into shaping vectors.
pub(crate) fn unflatten(x: &[f64]) -> Vec<Vec3> {
    x.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect()
}

pub(crate) fn flatten(a_seq: &[Vec3]) -> Vec<f64> {
    a_seq.iter().flat_map(|a| [a.x, a.y, a.z]).collect()
}

#[cfg(test)]
mod tests;
