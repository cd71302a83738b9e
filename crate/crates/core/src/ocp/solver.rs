//! Augmented Lagrangian outer loop with a box-projected BFGS inner solver.

use nalgebra::{DMatrix, DVector};

use super::sensitivity::{evaluate, Linearization};
use super::{flatten, unflatten, OcpProblem, OcpSolution};
use crate::error::{Error, Result};
use crate::so3::Vec3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverSettings {
    /// Infinity norm of the projected gradient of the subproblem.
    pub stationarity_tol: f64,
    pub violation_tol: f64,
    /// Budget of inner iterations summed over all outer iterations.
    pub max_iterations: usize,
    pub max_outer: usize,
    /// Inner iterations allowed per outer iteration.
    pub max_inner: usize,
    /// Stationarity demanded of the first subproblem; tightened tenfold per
    /// outer iteration down to `stationarity_tol`.
    pub initial_inner_tol: f64,
    pub initial_penalty: f64,
    pub penalty_growth: f64,
    pub max_penalty: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            stationarity_tol: 1e-8,
            violation_tol: 1e-6,
            max_iterations: 200,
            max_outer: 20,
            max_inner: 50,
            initial_inner_tol: 1e-3,
            initial_penalty: 10.0,
            penalty_growth: 10.0,
            max_penalty: 1e8,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("must be positive, got {v}")))
            }
        };
        positive("stationarity_tol", self.stationarity_tol)?;
        positive("violation_tol", self.violation_tol)?;
        positive("initial_penalty", self.initial_penalty)?;
        positive("initial_inner_tol", self.initial_inner_tol)?;
        positive("max_penalty", self.max_penalty)?;
        if !(self.penalty_growth > 1.0 && self.penalty_growth.is_finite()) {
            return Err(Error::invalid(
                "penalty_growth",
                format!("must exceed 1, got {}", self.penalty_growth),
            ));
        }
        if self.max_iterations == 0 || self.max_outer == 0 || self.max_inner == 0 {
            return Err(Error::invalid("max_iterations", "iteration caps must be at least 1"));
        }
        Ok(())
    }
}

struct Box3 {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Box3 {
    fn new(bound: &Vec3, horizon: usize) -> Self {
        let upper: Vec<f64> = (0..horizon).flat_map(|_| [bound.x, bound.y, bound.z]).collect();
        let lower = upper.iter().map(|b| -b).collect();
        Self { lower, upper }
    }

    fn project(&self, x: &mut [f64]) {
        for ((xi, lo), hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *xi = xi.clamp(*lo, *hi);
        }
    }

    /// Variables pinned at a bound with the gradient pushing outward.
    fn active(&self, x: &[f64], g: &[f64]) -> Vec<bool> {
        x.iter()
            .zip(g)
            .enumerate()
            .map(|(i, (xi, gi))| {
                (*xi <= self.lower[i] && *gi > 0.0) || (*xi >= self.upper[i] && *gi < 0.0)
            })
            .collect()
    }

    fn projected_gradient_norm(&self, x: &[f64], g: &[f64]) -> f64 {
        x.iter()
            .zip(g)
            .enumerate()
            .map(|(i, (xi, gi))| ((xi - gi).clamp(self.lower[i], self.upper[i]) - xi).abs())
            .fold(0.0, f64::max)
    }
}

/// Multipliers and penalty of the augmented Lagrangian.
struct Merit<'a> {
    prob: &'a OcpProblem,
    lambda: Vec<f64>,
    mu: f64,
}

impl Merit<'_> {
    fn shifted(&self, g: &[f64]) -> impl Iterator<Item = f64> + '_ {
        let mu = self.mu;
        self.lambda
            .iter()
            .zip(g.to_vec())
            .map(move |(l, gk)| (l + mu * gk).max(0.0))
    }

    fn combine(&self, cost: f64, g: &[f64]) -> f64 {
        let penalty: f64 = self
            .shifted(g)
            .zip(&self.lambda)
            .map(|(s, l)| s * s - l * l)
            .sum();
        cost + penalty / (2.0 * self.mu)
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        let (cost, g) = evaluate(self.prob, &unflatten(x))?;
        Ok(self.combine(cost, &g))
    }

    fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>, f64, Vec<f64>)> {
        let lin = Linearization::new(self.prob, &unflatten(x))?;
        let weights: Vec<f64> = self.shifted(&lin.constraints).collect();
        let grad = lin.gradient(1.0, &weights);
        let value = self.combine(lin.cost, &lin.constraints);
        Ok((value, grad, lin.cost, lin.constraints))
    }
}

fn violation(g: &[f64]) -> f64 {
    g.iter().fold(0.0, |m, gk| m.max(*gk))
}

struct InnerResult {
    x: Vec<f64>,
    cost: f64,
    constraints: Vec<f64>,
    stationarity: f64,
    iterations: usize,
}

fn inner_solve(merit: &Merit, bounds: &Box3, x0: Vec<f64>, budget: usize, tol: f64) -> Result<InnerResult> {
    const ARMIJO: f64 = 1e-4;
    const MAX_BACKTRACK: usize = 40;

    let n = x0.len();
    let mut x = x0;
    let (mut f, mut g, mut cost, mut cons) = merit.value_and_gradient(&x)?;
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut fresh = true;
    let mut iterations = 0;
    let mut stationarity = bounds.projected_gradient_norm(&x, &g);

    while stationarity > tol && iterations < budget {
        let active = bounds.active(&x, &g);
        let mut d = direction(&h, &g, &active);
        let mut slope: f64 = d.iter().zip(&g).map(|(di, gi)| di * gi).sum();
        if slope >= 0.0 {
            h.fill_with_identity();
            fresh = true;
            d = direction(&h, &g, &active);
            slope = d.iter().zip(&g).map(|(di, gi)| di * gi).sum();
            if slope >= 0.0 {
                break;
            }
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACK {
            let mut trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
            bounds.project(&mut trial);
            let decrease: f64 = trial.iter().zip(&x).zip(&g).map(|((t, xi), gi)| gi * (t - xi)).sum();
            match merit.value(&trial) {
                Ok(ft) if ft <= f + ARMIJO * decrease && decrease < 0.0 => {
                    accepted = Some(trial);
                    break;
                }
                Ok(_) | Err(Error::NonFiniteObjective) => step *= 0.5,
                Err(e) => return Err(e),
            }
        }
        iterations += 1;
        let Some(x_new) = accepted else {
            if fresh {
                break;
            }
            h.fill_with_identity();
            fresh = true;
            continue;
        };

        let (f_new, g_new, cost_new, cons_new) = merit.value_and_gradient(&x_new)?;
        let s = DVector::from_iterator(n, x_new.iter().zip(&x).map(|(a, b)| a - b));
        let y = DVector::from_iterator(n, g_new.iter().zip(&g).map(|(a, b)| a - b));
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if fresh {
                h *= sy / y.norm_squared();
                fresh = false;
            }
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            h += (&s * s.transpose()) * (rho * rho * yhy + rho)
                - (&hy * s.transpose() + &s * hy.transpose()) * rho;
        }
        x = x_new;
        f = f_new;
        g = g_new;
        cost = cost_new;
        cons = cons_new;
        stationarity = bounds.projected_gradient_norm(&x, &g);
    }
    Ok(InnerResult {
        x,
        cost,
        constraints: cons,
        stationarity,
        iterations,
    })
}

/// `-H g` restricted to the free variables.
fn direction(h: &DMatrix<f64>, g: &[f64], active: &[bool]) -> Vec<f64> {
    let n = g.len();
    (0..n)
        .map(|i| {
            if active[i] {
                return 0.0;
            }
            -(0..n)
                .filter(|j| !active[*j])
                .map(|j| h[(i, j)] * g[j])
                .sum::<f64>()
        })
        .collect()
}

/// Minimizes the shaping effort subject to the slit constraint at every
/// predicted knot and the box on each component of `a_k`.
pub fn solve_ocp(prob: &OcpProblem, warm_start: Option<&[Vec3]>) -> Result<OcpSolution> {
    prob.validate()?;
    let settings = prob.settings;
    settings.validate()?;
    let h = prob.horizon;
    let bounds = Box3::new(&prob.a_bound, h);
    let mut x = match warm_start {
        Some(a) if a.len() == h => flatten(a),
        Some(a) => {
            return Err(Error::invalid(
                "warm_start",
                format!("expected {h} shaping vectors, got {}", a.len()),
            ))
        }
        None => vec![0.0; 3 * h],
    };
    bounds.project(&mut x);

    let mut merit = Merit {
        prob,
        lambda: vec![0.0; h],
        mu: settings.initial_penalty,
    };
    let mut used = 0;
    let mut best: Option<(Vec<f64>, f64, f64)> = None;
    let mut converged = false;
    let mut last_violation = f64::INFINITY;
    let mut inner_tol = settings.initial_inner_tol.max(settings.stationarity_tol);

    for _ in 0..settings.max_outer {
        let budget = (settings.max_iterations - used).min(settings.max_inner);
        let inner = inner_solve(&merit, &bounds, x, budget, inner_tol)?;
        used += inner.iterations;
        x = inner.x;
        let viol = violation(&inner.constraints);
        let better = match &best {
            None => true,
            Some((_, c, v)) => {
                let (feasible, best_feasible) =
                    (viol <= settings.violation_tol, *v <= settings.violation_tol);
                match (feasible, best_feasible) {
                    (true, true) => inner.cost < *c,
                    (true, false) => true,
                    (false, true) => false,
                    (false, false) => viol < *v,
                }
            }
        };
        if better {
            best = Some((x.clone(), inner.cost, viol));
        }
        if viol <= settings.violation_tol && inner.stationarity <= settings.stationarity_tol {
            converged = true;
            best = Some((x.clone(), inner.cost, viol));
            break;
        }
        if used >= settings.max_iterations {
            break;
        }
        let mu = merit.mu;
        merit.lambda = merit
            .lambda
            .iter()
            .zip(&inner.constraints)
            .map(|(l, g)| (l + mu * g).max(0.0))
            .collect();
        if viol > 0.25 * last_violation {
            merit.mu = (merit.mu * settings.penalty_growth).min(settings.max_penalty);
        }
        last_violation = viol;
        inner_tol = (inner_tol * 0.1).max(settings.stationarity_tol);
    }

    let (x, cost, max_violation) = best.expect("at least one outer iteration runs");
    Ok(OcpSolution {
        a_seq: unflatten(&x),
        cost,
        max_violation,
        iterations: used,
        converged,
    })
}
