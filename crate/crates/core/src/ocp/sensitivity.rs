//! Exact first derivatives of the shooting objective.
//!
//! Each prediction step is evaluated once with dual numbers seeded on the 18
//! state entries and the 3 shaping components, giving the step Jacobians.
//! Gradients of any weighted sum of cost and constraints then follow from a
//! single backward (adjoint) sweep.

use nalgebra::{SMatrix, SVector, Vector3};

use super::{slit_constraint_generic, stage_cost_generic, OcpProblem};
use crate::control::nominal_torque_generic;
use crate::error::{Error, Result};
use crate::integrators::{advance_generic, Phase};
use crate::scalar::Dual;
use crate::so3::Vec3;

const NX: usize = 18;
const NV: usize = NX + 3;

type D = Dual<NV>;
type StateVec = SVector<f64, NX>;

fn pack(x: &Phase<f64>) -> [f64; NX] {
    let mut out = [0.0; NX];
    out[0..3].copy_from_slice(x.p.as_slice());
    for i in 0..3 {
        for j in 0..3 {
            out[3 + 3 * i + j] = x.r[(i, j)];
        }
    }
    out[12..15].copy_from_slice(x.v.as_slice());
    out[15..18].copy_from_slice(x.w.as_slice());
    out
}

fn seed(x: &Phase<f64>) -> Phase<D> {
    let flat = pack(x);
    let var = |i: usize| D::variable(flat[i], i);
    Phase {
        p: Vector3::new(var(0), var(1), var(2)),
        r: nalgebra::Matrix3::new(
            var(3),
            var(4),
            var(5),
            var(6),
            var(7),
            var(8),
            var(9),
            var(10),
            var(11),
        ),
        v: Vector3::new(var(12), var(13), var(14)),
        w: Vector3::new(var(15), var(16), var(17)),
    }
}

fn unpack(x: &Phase<D>) -> (Phase<f64>, SMatrix<f64, NX, NV>) {
    let mut entries = [D::constant(0.0); NX];
    entries[0..3].copy_from_slice(x.p.as_slice());
    for i in 0..3 {
        for j in 0..3 {
            entries[3 + 3 * i + j] = x.r[(i, j)];
        }
    }
    entries[12..15].copy_from_slice(x.v.as_slice());
    entries[15..18].copy_from_slice(x.w.as_slice());
    let jac = SMatrix::<f64, NX, NV>::from_fn(|i, j| entries[i].eps[j]);
    let value = Phase {
        p: x.p.map(|d| d.re),
        r: x.r.map(|d| d.re),
        v: x.v.map(|d| d.re),
        w: x.w.map(|d| d.re),
    };
    (value, jac)
}

fn state_gradient(d: &D) -> StateVec {
    StateVec::from_fn(|i, _| d.eps[i])
}

/// Values and step Jacobians of one rollout.
pub(crate) struct Linearization {
    pub cost: f64,
    /// Constraint values at knots `1..=H`.
    pub constraints: Vec<f64>,
    a_jac: Vec<SMatrix<f64, NX, NX>>,
    b_jac: Vec<SMatrix<f64, NX, 3>>,
    cost_dx: Vec<StateVec>,
    cost_da: Vec<SVector<f64, 3>>,
    /// Constraint gradients w.r.t. the state at knots `1..=H`.
    g_dx: Vec<StateVec>,
}

impl Linearization {
    pub(crate) fn new(prob: &OcpProblem, a_seq: &[Vec3]) -> Result<Self> {
        let h = prob.horizon;
        debug_assert_eq!(a_seq.len(), h);
        let gain_frame = prob.nominal.map(|n| (n.gain_frame(), n.gains.damping()));
        let mut lin = Linearization {
            cost: 0.0,
            constraints: Vec::with_capacity(h),
            a_jac: Vec::with_capacity(h),
            b_jac: Vec::with_capacity(h),
            cost_dx: Vec::with_capacity(h),
            cost_da: Vec::with_capacity(h),
            g_dx: Vec::with_capacity(h),
        };
        let mut x = Phase::from(&prob.initial);
        for (k, a) in a_seq.iter().enumerate() {
            let xs = seed(&x);
            let ad = Vector3::new(D::variable(a.x, NX), D::variable(a.y, NX + 1), D::variable(a.z, NX + 2));
            let tau_prime = match gain_frame {
                Some((g, k_d)) => nominal_torque_generic(&xs.r, &xs.w, &g, k_d),
                None => Vector3::from_element(D::constant(0.0)),
            };
            if k > 0 {
                let g = slit_constraint_generic(&xs.p, &xs.r, &prob.slit);
                lin.constraints.push(g.re);
                lin.g_dx.push(state_gradient(&g));
            }
            let c = stage_cost_generic(&xs.w, &ad);
            lin.cost += c.re;
            lin.cost_dx.push(state_gradient(&c));
            lin.cost_da.push(SVector::<f64, 3>::new(c.eps[NX], c.eps[NX + 1], c.eps[NX + 2]));

            let zero = Vector3::from_element(D::constant(0.0));
            let next = advance_generic(&xs, &zero, &ad, &tau_prime, &prob.body, prob.step.get(), prob.scheme);
            let (value, jac) = unpack(&next);
            lin.a_jac.push(jac.fixed_columns::<NX>(0).into_owned());
            lin.b_jac.push(jac.fixed_columns::<3>(NX).into_owned());
            x = value;
        }
        let xs = seed(&x);
        let g = slit_constraint_generic(&xs.p, &xs.r, &prob.slit);
        lin.constraints.push(g.re);
        lin.g_dx.push(state_gradient(&g));

        if !lin.cost.is_finite() || lin.constraints.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteObjective);
        }
        Ok(lin)
    }

    /// Gradient w.r.t. the flat decision vector of
    /// `cost_weight * cost + sum_j weights[j] * g_j`.
    pub(crate) fn gradient(&self, cost_weight: f64, weights: &[f64]) -> Vec<f64> {
        let h = self.a_jac.len();
        debug_assert_eq!(weights.len(), h);
        let mut grad = vec![0.0; 3 * h];
        // Adjoint of the state at knot k + 1.
        let mut lambda = self.g_dx[h - 1] * weights[h - 1];
        for k in (0..h).rev() {
            let ga = self.cost_da[k] * cost_weight + self.b_jac[k].transpose() * lambda;
            grad[3 * k..3 * k + 3].copy_from_slice(ga.as_slice());
            let mut next = self.cost_dx[k] * cost_weight + self.a_jac[k].transpose() * lambda;
            if k > 0 {
                next += self.g_dx[k - 1] * weights[k - 1];
            }
            lambda = next;
        }
        grad
    }
}

/// Objective value, constraint values and their exact derivatives with
/// respect to the flattened shaping sequence `[a_0.x, a_0.y, a_0.z, a_1.x, ...]`.
#[derive(Clone, Debug, PartialEq)]
pub struct OcpGradients {
    pub cost: f64,
    pub cost_gradient: Vec<f64>,
    /// `g_k` at knots `k = 1..=H`.
    pub constraints: Vec<f64>,
    /// Row `j` is the gradient of `g_{j+1}`.
    pub constraint_jacobian: Vec<Vec<f64>>,
}

pub fn objective_gradients(prob: &OcpProblem, a_seq: &[Vec3]) -> Result<OcpGradients> {
    prob.validate()?;
    if a_seq.len() != prob.horizon {
        return Err(Error::invalid(
            "a_seq",
            format!("expected {} shaping vectors, got {}", prob.horizon, a_seq.len()),
        ));
    }
    let lin = Linearization::new(prob, a_seq)?;
    let h = prob.horizon;
    let zeros = vec![0.0; h];
    let cost_gradient = lin.gradient(1.0, &zeros);
    let constraint_jacobian = (0..h)
        .map(|j| {
            let mut w = zeros.clone();
            w[j] = 1.0;
            lin.gradient(0.0, &w)
        })
        .collect();
    Ok(OcpGradients {
        cost: lin.cost,
        cost_gradient,
        constraints: lin.constraints,
        constraint_jacobian,
    })
}

/// Cost and constraints from a plain rollout, for line searches.
pub(crate) fn evaluate(prob: &OcpProblem, a_seq: &[Vec3]) -> Result<(f64, Vec<f64>)> {
    let states = super::rollout(&prob.initial, a_seq, prob)?;
    let cost: f64 = a_seq
        .iter()
        .zip(&states)
        .map(|(a, s)| stage_cost_generic(&s.w, a))
        .sum();
    let constraints: Vec<f64> = states[1..]
        .iter()
        .map(|s| slit_constraint_generic(&s.p, s.r.matrix(), &prob.slit))
        .collect();
    if !cost.is_finite() || constraints.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteObjective);
    }
    Ok((cost, constraints))
}
