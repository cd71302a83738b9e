//! Receding-horizon loop around [`solve_ocp`].

use super::{solve_ocp, OcpProblem, OcpSolution};
use crate::dynamics::State;
use crate::error::Result;
use crate::so3::Vec3;

/// Result of one controller update.
#[derive(Clone, Debug, PartialEq)]
pub struct MpcOutcome {
    /// Shaping vector to hold until the next update.
    pub a: Vec3,
    /// `None` when the solve failed and the previous input was kept.
    pub solution: Option<OcpSolution>,
    pub failed: bool,
}

/// Warm-start memory and the currently held shaping vector.
#[derive(Clone, Debug, Default)]
pub struct MpcController {
    previous: Option<Vec<Vec3>>,
    a_hold: Vec3,
    failures: usize,
}

impl MpcController {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn a_hold(&self) -> Vec3 {
        self.a_hold
    }

    pub fn failures(&self) -> usize {
        self.failures
    }

    /// Solves from `s` and returns the first optimal input. A failed solve
    /// keeps the previously held input, which is always safe because the
    /// shaping torque does no work.
    pub fn step(&mut self, s: &State, prob: &OcpProblem) -> MpcOutcome {
        let mut p = *prob;
        p.initial = *s;
        self.step_with(&p, solve_ocp)
    }

    pub(crate) fn step_with<F>(&mut self, prob: &OcpProblem, solve: F) -> MpcOutcome
    where
        F: FnOnce(&OcpProblem, Option<&[Vec3]>) -> Result<OcpSolution>,
    {
        let warm = self.previous.as_ref().map(|prev| shift(prev, prob.horizon));
        match solve(prob, warm.as_deref()) {
            Ok(sol) => {
                self.a_hold = sol.a_seq[0];
                self.previous = Some(sol.a_seq.clone());
                MpcOutcome {
                    a: self.a_hold,
                    solution: Some(sol),
                    failed: false,
                }
            }
            Err(_) => {
                self.failures += 1;
                MpcOutcome {
                    a: self.a_hold,
                    solution: None,
                    failed: true,
                }
            }
        }
    }
}

/// Drops the first element and repeats the last, resized to `horizon`.
fn shift(prev: &[Vec3], horizon: usize) -> Vec<Vec3> {
    let last = prev.last().copied().unwrap_or_else(Vec3::zeros);
    prev.iter()
        .skip(1)
        .copied()
        .chain(std::iter::repeat(last))
        .take(horizon)
        .collect()
}
