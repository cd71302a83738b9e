use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::control::{composite_control, ControlMode};
use crate::dynamics::ControlInput;
use crate::integrators::simulate;
use crate::so3::{cay, Mat3};

fn body() -> BodyParams {
    BodyParams::from_diagonal(1.0, Vec3::new(1.5, 1.5, 0.5), 9.81).unwrap()
}

fn slit() -> SlitSpec {
    SlitSpec::new(Vec3::new(0.0, 2.5, 0.0), Rotation::identity(), 0.005, 0.1).unwrap()
}

fn start() -> State {
    State {
        p: Vec3::new(0.0, 0.0, 0.5),
        r: Rotation::identity(),
        v: Vec3::new(0.0, 0.1, 0.0),
        w: Vec3::new(0.15, -0.2, 0.25),
    }
}

fn gains() -> AttitudeGains {
    AttitudeGains::new(Mat3::identity(), 1.5).unwrap()
}

fn set_point() -> SetPoint {
    SetPoint {
        r_d: Rotation::rot_y(3.0 * PI / 4.0),
    }
}

fn problem(initial: State) -> OcpProblem {
    OcpProblem {
        horizon: 10,
        step: StepSize::new(0.1).unwrap(),
        a_bound: Vec3::repeat(5.0),
        slit: slit(),
        body: body(),
        initial,
        nominal: None,
        scheme: RotationScheme::Midpoint,
        settings: SolverSettings::default(),
    }
}

/// Two-knot instance where only the second knot is binding.
fn small_problem() -> OcpProblem {
    let mut p = problem(State {
        p: Vec3::new(0.0, 2.0, 0.5),
        r: Rotation::rot_x(-0.05),
        v: Vec3::new(0.0, 0.1, 0.0),
        w: Vec3::new(0.35, 0.0, 0.6),
    });
    p.horizon = 2;
    p.step = StepSize::new(0.3).unwrap();
    p.a_bound = Vec3::repeat(1.0);
    p
}

#[test]
fn orientation_error_examples() {
    let id = Rotation::identity();
    assert_eq!(orientation_error(&id, &id), 0.0);
    let rs = Rotation::rot_z(0.4).compose(&Rotation::rot_x(0.3));
    assert!(orientation_error(&rs, &rs) < 1e-15);
    let tilted = rs.compose(&Rotation::rot_x(PI / 2.0));
    assert!((orientation_error(&tilted, &rs) - 1.0).abs() < 1e-15);
    for theta in [0.1, 1.0, 2.0, -3.0] {
        let spun = rs.compose(&Rotation::rot_z(theta));
        assert!(orientation_error(&spun, &rs) < 1e-15);
    }
    let flipped = rs.compose(&Rotation::rot_x(PI));
    assert!(orientation_error(&flipped, &rs) < 1e-15);
}

#[test]
fn slit_distance_examples() {
    let s = slit();
    assert_eq!(slit_distance(&s.p_star, &s), 0.0);
    assert_eq!(slit_distance(&Vec3::new(0.0, 0.0, 0.5), &s), 6.25);
    let p = Vec3::new(0.3, 1.0, -2.0);
    assert_eq!(slit_distance(&p, &s), slit_distance(&(p + Vec3::z() * 7.0), &s));
}

#[test]
fn slit_constraint_examples() {
    let s = slit();
    let mut st = start();
    st.p = s.p_star;
    assert_eq!(slit_constraint(&st, &s), -0.1);
    st.r = Rotation::rot_x(PI / 2.0);
    assert!((slit_constraint(&st, &s) - 199.9).abs() < 1e-9);
    st.p = Vec3::new(1e4, 0.0, 0.0);
    assert!((slit_constraint(&st, &s) + 0.1).abs() < 1e-8);
}

#[test]
fn slit_spec_validation() {
    assert!(SlitSpec::new(Vec3::zeros(), Rotation::identity(), 0.0, 0.1).is_err());
    assert!(SlitSpec::new(Vec3::zeros(), Rotation::identity(), 0.005, -1.0).is_err());
}

#[test]
fn ocp_cost_examples() {
    let w = vec![Vec3::new(0.1, 0.2, 0.3); 3];
    assert_eq!(ocp_cost(&[Vec3::zeros(); 3], &w).unwrap(), 0.0);
    let parallel: Vec<Vec3> = w.iter().map(|wk| wk * -2.0).collect();
    assert!(ocp_cost(&parallel, &w).unwrap() < 1e-30);
    assert_eq!(ocp_cost(&[Vec3::x()], &[Vec3::z()]).unwrap(), 1.0);
    assert!(ocp_cost(&[Vec3::x()], &w).is_err());
}

#[test]
fn rollout_without_rotation() {
    let mut s0 = start();
    s0.w = Vec3::zeros();
    let prob = problem(s0);
    let states = rollout(&s0, &[Vec3::zeros(); 10], &prob).unwrap();
    assert_eq!(states.len(), 11);
    for (k, s) in states.iter().enumerate() {
        assert_eq!(s.r, s0.r);
        assert!((s.p - (s0.p + s0.v * 0.1 * k as f64)).norm() < 1e-12);
    }
    assert!(rollout(&s0, &[Vec3::zeros(); 3], &prob).is_err());
}

#[test]
fn rollout_matches_simulation() {
    let s0 = start();
    let mut prob = problem(s0);
    let states = rollout(&s0, &[Vec3::zeros(); 10], &prob).unwrap();
    let free = simulate(s0, |_, _| Ok(ControlInput::default()), &prob.body, prob.step, 10).unwrap();
    for (a, b) in states.iter().zip(&free) {
        assert_eq!(*a, b.state);
    }

    prob.nominal = Some(NominalModel {
        gains: gains(),
        set_point: set_point(),
    });
    let states = rollout(&s0, &[Vec3::zeros(); 10], &prob).unwrap();
    let mode = ControlMode {
        nominal: true,
        lossless: false,
    };
    let nominal = simulate(
        s0,
        |_, s| Ok(composite_control(s, &set_point(), &gains(), &Vec3::zeros(), mode)),
        &prob.body,
        prob.step,
        10,
    )
    .unwrap();
    for (a, b) in states.iter().zip(&nominal) {
        assert_eq!(*a, b.state);
    }
}

#[test]
fn gyroscopic_cancellation_freezes_rate() {
    let s0 = start();
    let prob = problem(s0);
    let a = prob.body.inertia_matrix() * s0.w;
    let states = rollout(&s0, &[a; 10], &prob).unwrap();
    for s in &states {
        assert_eq!(s.w, s0.w);
    }
}

/// `|analytic - numeric| / max(|analytic|, 1)` in the Euclidean norm.
fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    diff / scale.max(1.0)
}

fn random_point(rng: &mut ChaCha8Rng) -> (OcpProblem, Vec<Vec3>) {
    let mut v = || Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let r = cay(&(v() * 2.0));
    let p = Vec3::new(0.0, 2.5, 0.5) + v() * 0.5;
    let w = v();
    let s0 = State {
        p,
        r,
        v: Vec3::new(0.0, 0.1, 0.0),
        w,
    };
    let a_seq: Vec<Vec3> = (0..10).map(|_| v() * 5.0).collect();
    let mut prob = problem(s0);
    if rng.random_bool(0.5) {
        prob.nominal = Some(NominalModel {
            gains: gains(),
            set_point: set_point(),
        });
    }
    (prob, a_seq)
}

#[test]
fn gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let h = 1e-6;
    for _ in 0..20 {
        let (prob, a_seq) = random_point(&mut rng);
        let grads = objective_gradients(&prob, &a_seq).unwrap();
        let x = flatten(&a_seq);
        let n = x.len();
        let mut fd_cost = vec![0.0; n];
        let mut fd_cons = vec![vec![0.0; n]; prob.horizon];
        for i in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let (cp, gp) = sensitivity::evaluate(&prob, &unflatten(&xp)).unwrap();
            let (cm, gm) = sensitivity::evaluate(&prob, &unflatten(&xm)).unwrap();
            fd_cost[i] = (cp - cm) / (2.0 * h);
            for j in 0..prob.horizon {
                fd_cons[j][i] = (gp[j] - gm[j]) / (2.0 * h);
            }
        }
        assert!(relative_error(&grads.cost_gradient, &fd_cost) <= 1e-5);
        for j in 0..prob.horizon {
            let err = relative_error(&grads.constraint_jacobian[j], &fd_cons[j]);
            assert!(err <= 1e-5, "knot {} error {err:e}", j + 1);
        }
    }
}

#[test]
fn zero_input_is_optimal_when_feasible() {
    let sol = solve_ocp(&problem(start()), None).unwrap();
    assert!(sol.cost <= 1e-10);
    assert!(sol.converged);
    assert_eq!(sol.max_violation, 0.0);
    assert!(sol.a_seq.iter().all(|a| a.norm() <= 1e-8));
}

#[test]
fn infeasible_bounds_are_reported() {
    let mut s0 = start();
    s0.p = slit().p_star;
    s0.r = Rotation::rot_x(PI / 2.0);
    s0.w = Vec3::new(0.0, 0.0, 0.3);
    let mut prob = problem(s0);
    prob.a_bound = Vec3::repeat(1e-9);
    let sol = solve_ocp(&prob, None).unwrap();
    assert!(!sol.converged);
    assert!(sol.max_violation > 0.0);
    for a in &sol.a_seq {
        assert!(a.iter().all(|c| c.abs() <= 1e-9));
    }
}

#[test]
fn binding_constraint_is_satisfied() {
    let prob = small_problem();
    let zero = objective_gradients(&prob, &[Vec3::zeros(); 2]).unwrap();
    assert!(zero.constraints[1] > 0.0);
    let sol = solve_ocp(&prob, None).unwrap();
    assert!(sol.max_violation <= 1e-6);
    assert!(sol.cost > 0.0);
    let states = rollout(&prob.initial, &sol.a_seq, &prob).unwrap();
    let eps_zero = orientation_error(&rollout(&prob.initial, &[Vec3::zeros(); 2], &prob).unwrap()[2].r, &prob.slit.r_star);
    assert!(orientation_error(&states[2].r, &prob.slit.r_star) < eps_zero);
}

/// Exhaustive search over a `n`-per-axis lattice of the decision box.
fn grid_optimum(prob: &OcpProblem, n: usize) -> f64 {
    assert_eq!(prob.horizon, 2);
    let axis = |b: f64| -> Vec<f64> { (0..n).map(|i| -b + 2.0 * b * i as f64 / (n - 1) as f64).collect() };
    let (xs, ys, zs) = (axis(prob.a_bound.x), axis(prob.a_bound.y), axis(prob.a_bound.z));
    let lattice: Vec<Vec3> = xs
        .iter()
        .flat_map(|x| ys.iter().flat_map(|y| zs.iter().map(|z| Vec3::new(*x, *y, *z))))
        .collect();
    let step = |s: &State, a: &Vec3| {
        let u = ControlInput {
            a: *a,
            ..ControlInput::default()
        };
        advance(s, &u, &prob.body, prob.step, prob.scheme)
    };
    let s0 = prob.initial;
    let mut best = f64::INFINITY;
    for a0 in &lattice {
        let c0 = s0.w.cross(a0).norm_squared();
        let s1 = step(&s0, a0);
        if slit_constraint(&s1, &prob.slit) > 0.0 || c0 >= best {
            continue;
        }
        for a1 in &lattice {
            let c = c0 + s1.w.cross(a1).norm_squared();
            if c < best && slit_constraint(&step(&s1, a1), &prob.slit) <= 0.0 {
                best = c;
            }
        }
    }
    best
}

#[test]
fn small_instance_matches_grid_search() {
    let prob = small_problem();
    let sol = solve_ocp(&prob, None).unwrap();
    let grid = grid_optimum(&prob, 11);
    assert!(grid.is_finite());
    assert!(sol.max_violation <= 1e-6);
    assert!(sol.cost <= grid + 1e-3, "solver {} grid {}", sol.cost, grid);
}

#[test]
fn solve_is_deterministic() {
    let prob = small_problem();
    assert_eq!(solve_ocp(&prob, None).unwrap(), solve_ocp(&prob, None).unwrap());
}

#[test]
fn warm_start_length_is_checked() {
    let prob = problem(start());
    assert!(solve_ocp(&prob, Some(&[Vec3::zeros(); 3])).is_err());
    let mut bad = prob;
    bad.horizon = 0;
    assert!(solve_ocp(&bad, None).is_err());
    bad = prob;
    bad.a_bound.y = 0.0;
    assert!(solve_ocp(&bad, None).is_err());
}

#[test]
fn mpc_first_call_is_idle() {
    let mut ctl = MpcController::new();
    let prob = problem(start());
    let out = ctl.step(&start(), &prob);
    assert!(!out.failed);
    assert!(out.a.norm() <= 1e-8);
}

#[test]
fn mpc_is_deterministic_on_frozen_state() {
    let prob = small_problem();
    let mut c1 = MpcController::new();
    let mut c2 = MpcController::new();
    for _ in 0..3 {
        let a = c1.step(&prob.initial, &prob);
        let b = c2.step(&prob.initial, &prob);
        assert_eq!(a, b);
    }
}

#[test]
fn mpc_keeps_previous_input_on_failure() {
    let prob = small_problem();
    let mut ctl = MpcController::new();
    let first = ctl.step(&prob.initial, &prob);
    assert!(first.a.norm() > 0.0);
    let out = ctl.step_with(&prob, |_, _| Err(Error::NonFiniteObjective));
    assert!(out.failed);
    assert!(out.solution.is_none());
    assert_eq!(out.a, first.a);
    assert_eq!(ctl.failures(), 1);
    assert_eq!(ctl.a_hold(), first.a);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn solutions_respect_box(seed in any::<u64>(), bound in 0.05..5.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut prob, a_seq) = random_point(&mut rng);
        prob.a_bound = Vec3::new(bound, bound * 0.5, bound * 2.0);
        prob.settings.max_iterations = 40;
        let sol = solve_ocp(&prob, Some(&a_seq)).unwrap();
        for a in &sol.a_seq {
            for i in 0..3 {
                prop_assert!(a[i].abs() <= prob.a_bound[i] + 1e-9);
            }
        }
        prop_assert!(sol.cost >= 0.0);
    }

    #[test]
    fn metric_ranges(
        x in proptest::array::uniform3(-4.0..4.0f64),
        p in proptest::array::uniform3(-10.0..10.0f64),
    ) {
        let r = cay(&Vec3::from(x));
        let s = State { p: Vec3::from(p), r, v: Vec3::zeros(), w: Vec3::zeros() };
        let e = orientation_error(&r, &slit().r_star);
        prop_assert!((0.0..=1.0).contains(&e));
        prop_assert!(slit_constraint(&s, &slit()) >= -0.1);
    }
}
