//! Continuous-time rigid-body model in the principal body frame.
//!
//! Gravity acts along `-e3`. Forces and torques are expressed in the body
//! frame, linear quantities in the inertial frame, angular velocity in the
//! body frame. All quantities are SI.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::so3::{hat, Mat3, Rotation, Vec3, E3};

/// Standard gravity used when a scenario does not set one.
pub const DEFAULT_GRAVITY: f64 = 9.81;

/// Mass, principal inertia and gravitational acceleration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BodyParams {
    mass: f64,
    inertia: Vec3,
    gravity: f64,
}

impl BodyParams {
    /// Builds from a full inertia matrix, which must be diagonal.
    pub fn new(mass: f64, inertia: Mat3, gravity: f64) -> Result<Self> {
        let off_diagonal = (inertia - Mat3::from_diagonal(&inertia.diagonal()))
            .abs()
            .max();
        if off_diagonal != 0.0 {
            return Err(Error::invalid(
                "inertia",
                format!("must be diagonal in the principal frame (off-diagonal magnitude {off_diagonal:e})"),
            ));
        }
        Self::from_diagonal(mass, inertia.diagonal(), gravity)
    }

    pub fn from_diagonal(mass: f64, inertia: Vec3, gravity: f64) -> Result<Self> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::invalid("mass", format!("must be positive, got {mass}")));
        }
        if !inertia.iter().all(|j| *j > 0.0 && j.is_finite()) {
            return Err(Error::invalid(
                "inertia",
                format!("principal moments must be positive, got {inertia:?}"),
            ));
        }
        if !(gravity >= 0.0 && gravity.is_finite()) {
            return Err(Error::invalid("gravity", format!("must be non-negative, got {gravity}")));
        }
        Ok(Self {
            mass,
            inertia,
            gravity,
        })
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// Principal moments of inertia.
    pub fn inertia(&self) -> Vec3 {
        self.inertia
    }

    pub fn inertia_matrix(&self) -> Mat3 {
        Mat3::from_diagonal(&self.inertia)
    }

    pub fn gravity(&self) -> f64 {
        self.gravity
    }

    /// `J^-1 x` for the diagonal inertia.
    #[inline]
    pub(crate) fn inertia_solve<S: Real>(&self, x: &Vector3<S>) -> Vector3<S> {
        Vector3::new(
            x.x / S::from_f64(self.inertia.x),
            x.y / S::from_f64(self.inertia.y),
            x.z / S::from_f64(self.inertia.z),
        )
    }

    #[inline]
    pub(crate) fn inertia_apply<S: Real>(&self, x: &Vector3<S>) -> Vector3<S> {
        Vector3::new(
            x.x * S::from_f64(self.inertia.x),
            x.y * S::from_f64(self.inertia.y),
            x.z * S::from_f64(self.inertia.z),
        )
    }
}

/// Position and velocity in the inertial frame, attitude body-to-inertial,
/// angular velocity in the body frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct State {
    pub p: Vec3,
    pub r: Rotation,
    pub v: Vec3,
    pub w: Vec3,
}

impl State {
    pub fn is_finite(&self) -> bool {
        self.p.iter().all(|x| x.is_finite())
            && self.v.iter().all(|x| x.is_finite())
            && self.w.iter().all(|x| x.is_finite())
            && self.r.matrix().iter().all(|x| x.is_finite())
    }
}

/// Residual force after gravity compensation, nominal torque and the
/// gyroscopic shaping vector. The applied torque is `w x a + tau_prime`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ControlInput {
    pub f_prime: Vec3,
    pub tau_prime: Vec3,
    pub a: Vec3,
}

impl ControlInput {
    /// Total body torque for angular velocity `w`.
    pub fn torque(&self, w: &Vec3) -> Vec3 {
        w.cross(&self.a) + self.tau_prime
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateDerivative {
    pub dp: Vec3,
    pub dr: Mat3,
    pub dv: Vec3,
    pub dw: Vec3,
}

pub fn kinetic_energy(s: &State, b: &BodyParams) -> f64 {
    0.5 * b.mass * s.v.norm_squared() + 0.5 * s.w.dot(&b.inertia_apply(&s.w))
}

fn check_symmetric(g: &Mat3) -> Result<()> {
    let asymmetry = (g - g.transpose()).norm();
    if asymmetry > 1e-12 || !asymmetry.is_finite() {
        return Err(Error::AsymmetricGain { asymmetry });
    }
    Ok(())
}

/// Rotational potential `-tr(G (R_d^T R - I))` of the nominal controller.
pub fn potential_energy(r: &Rotation, g: &Mat3, r_d: &Rotation) -> Result<f64> {
    check_symmetric(g)?;
    let err = r_d.matrix().transpose() * r.matrix() - Mat3::identity();
    Ok(-(g * err).trace())
}

/// `K + U`.
pub fn lyapunov(s: &State, b: &BodyParams, g: &Mat3, r_d: &Rotation) -> Result<f64> {
    Ok(kinetic_energy(s, b) + potential_energy(&s.r, g, r_d)?)
}

/// Body-frame force `R^T (m g e3 + f')` that leaves `m dv/dt = f'`.
pub fn gravity_comp_body_force(b: &BodyParams, r: &Rotation, f_prime: &Vec3) -> Vec3 {
    r.matrix().transpose() * (E3 * (b.mass * b.gravity) + f_prime)
}

/// Right-hand side of the gravity-compensated closed loop.
pub fn closed_loop_derivative(s: &State, u: &ControlInput, b: &BodyParams) -> StateDerivative {
    let jw = b.inertia_apply(&s.w);
    StateDerivative {
        dp: s.v,
        dr: s.r.matrix() * hat(&s.w),
        dv: u.f_prime / b.mass,
        dw: b.inertia_solve(&(-s.w.cross(&(jw - u.a)) + u.tau_prime)),
    }
}

/// Supplied power `v.f' + w.tau'`. The shaping vector `a` does no work.
pub fn power_balance(s: &State, u: &ControlInput, _b: &BodyParams) -> f64 {
    s.v.dot(&u.f_prime) + s.w.dot(&u.tau_prime)
}

/// Residual of the condition under which the shaped closed loop behaves like
/// a body with inertia `j_d`:
/// `hat(w) a - [hat(w) J w - J J_d^-1 hat(w) J_d w + (J J_d^-1 - I) tau']`.
pub fn matching_residual(
    w: &Vec3,
    a: &Vec3,
    tau_prime: &Vec3,
    j: &Mat3,
    j_d: &Mat3,
) -> Result<Vec3> {
    let diag = |m: &Mat3, name: &'static str| -> Result<Vec3> {
        let d = m.diagonal();
        let is_diag = (m - Mat3::from_diagonal(&d)).abs().max() == 0.0;
        if !is_diag || !d.iter().all(|x| *x > 0.0) {
            return Err(Error::invalid(name, "must be diagonal with positive entries"));
        }
        Ok(d)
    };
    diag(j, "j")?;
    let jd = diag(j_d, "j_d")?;
    let j_jd_inv = j * Mat3::from_diagonal(&jd.map(|x| 1.0 / x));
    let wh = hat(w);
    let target = wh * j * w - j_jd_inv * wh * j_d * w + (j_jd_inv - Mat3::identity()) * tau_prime;
    Ok(wh * a - target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn paper_body() -> BodyParams {
        BodyParams::from_diagonal(1.0, Vec3::new(1.5, 1.5, 0.5), DEFAULT_GRAVITY).unwrap()
    }

    fn paper_state() -> State {
        State {
            p: Vec3::new(0.0, 0.0, 0.5),
            r: Rotation::identity(),
            v: Vec3::new(0.0, 0.1, 0.0),
            w: Vec3::new(0.15, -0.2, 0.25),
        }
    }

    #[test]
    fn body_params_validation() {
        assert!(BodyParams::from_diagonal(0.0, Vec3::new(1.0, 1.0, 1.0), 9.81).is_err());
        assert!(BodyParams::from_diagonal(1.0, Vec3::new(1.0, -1.0, 1.0), 9.81).is_err());
        assert!(BodyParams::from_diagonal(1.0, Vec3::new(1.0, 1.0, 1.0), -1.0).is_err());
        let mut j = Mat3::identity();
        j[(0, 1)] = 0.1;
        j[(1, 0)] = 0.1;
        assert!(matches!(
            BodyParams::new(1.0, j, 9.81),
            Err(Error::InvalidParameter { name: "inertia", .. })
        ));
        assert!(BodyParams::new(1.0, Mat3::identity(), 9.81).is_ok());
    }

    #[test]
    fn kinetic_energy_examples() {
        let b = paper_body();
        let mut s = paper_state();
        assert!((kinetic_energy(&s, &b) - 0.0675).abs() < 1e-15);

        s.w = Vec3::zeros();
        s.v = Vec3::zeros();
        assert_eq!(kinetic_energy(&s, &b), 0.0);

        s.v = Vec3::new(0.0, 0.1, 0.0);
        let k1 = kinetic_energy(&s, &b);
        s.v *= 2.0;
        assert!((kinetic_energy(&s, &b) - 4.0 * k1).abs() < 1e-15);
    }

    #[test]
    fn potential_energy_examples() {
        let rd = Rotation::rot_y(0.7);
        let g = Mat3::new(2.0, 0.1, 0.0, 0.1, 1.0, 0.3, 0.0, 0.3, 0.5);
        assert_eq!(potential_energy(&rd, &g, &rd).unwrap(), 0.0);

        let r = rd.compose(&Rotation::rot_z(PI));
        let u = potential_energy(&r, &Mat3::identity(), &rd).unwrap();
        assert!((u - 4.0).abs() < 1e-12);

        let u1 = potential_energy(&r, &(Mat3::identity() * 2.5), &rd).unwrap();
        assert!((u1 - 2.5 * u).abs() < 1e-12);

        let mut asym = Mat3::identity();
        asym[(0, 2)] = 1e-6;
        assert!(matches!(
            potential_energy(&r, &asym, &rd),
            Err(Error::AsymmetricGain { .. })
        ));
    }

    #[test]
    fn lyapunov_at_paper_initial_state() {
        let rd = Rotation::rot_y(3.0 * PI / 4.0);
        let s = paper_state();
        let v = lyapunov(&s, &paper_body(), &Mat3::identity(), &rd).unwrap();
        // U0 = 3 - tr(R_d) = 3 - (1 + 2 cos(3pi/4)) = 2 + sqrt(2)
        assert!((v - (0.0675 + 2.0 + 2f64.sqrt())).abs() < 1e-12);

        let eq = State {
            r: rd,
            v: Vec3::zeros(),
            w: Vec3::zeros(),
            ..s
        };
        assert_eq!(lyapunov(&eq, &paper_body(), &Mat3::identity(), &rd).unwrap(), 0.0);
    }

    #[test]
    fn lyapunov_nonnegative_for_psd_gain() {
        let g = Mat3::new(2.0, 0.5, 0.0, 0.5, 1.0, 0.0, 0.0, 0.0, 0.0);
        let rd = Rotation::rot_x(0.3);
        for i in 0..200 {
            let t = i as f64 * 0.173;
            let r = Rotation::rot_z(3.1 * t)
                .compose(&Rotation::rot_y(1.7 * t))
                .compose(&Rotation::rot_x(0.9 * t));
            assert!(potential_energy(&r, &g, &rd).unwrap() >= -1e-12);
        }
    }

    #[test]
    fn gravity_compensation_examples() {
        let b = paper_body();
        let f = gravity_comp_body_force(&b, &Rotation::identity(), &Vec3::zeros());
        assert_eq!(f, Vec3::new(0.0, 0.0, 9.81));

        let f = gravity_comp_body_force(&b, &Rotation::rot_x(PI / 2.0), &Vec3::zeros());
        assert!((f - Vec3::new(0.0, 9.81, 0.0)).norm() < 1e-14);

        let r = Rotation::rot_z(0.4).compose(&Rotation::rot_y(-2.0));
        let f = gravity_comp_body_force(&b, &r, &Vec3::zeros());
        assert!((f.norm() - 9.81).abs() < 1e-14);
    }

    #[test]
    fn closed_loop_derivative_examples() {
        let b = paper_body();
        let mut s = paper_state();
        let zero = ControlInput::default();

        let d = closed_loop_derivative(&s, &zero, &b);
        // Jw = (0.225, -0.3, 0.125); (Jw x w) / J
        let jw = Vec3::new(0.225, -0.3, 0.125);
        let cross = Vec3::new(
            jw.y * s.w.z - jw.z * s.w.y,
            jw.z * s.w.x - jw.x * s.w.z,
            jw.x * s.w.y - jw.y * s.w.x,
        );
        let expected = Vec3::new(cross.x / 1.5, cross.y / 1.5, cross.z / 0.5);
        assert!((d.dw - expected).norm() < 1e-16);
        assert_eq!(d.dv, Vec3::zeros());
        assert_eq!(d.dp, s.v);
        assert_eq!(d.dr, hat(&s.w));

        let cancel = ControlInput {
            a: b.inertia_matrix() * s.w,
            ..zero
        };
        assert_eq!(closed_loop_derivative(&s, &cancel, &b).dw, Vec3::zeros());

        s.w = Vec3::zeros();
        let d = closed_loop_derivative(&s, &zero, &b);
        assert_eq!(d.dw, Vec3::zeros());
        assert_eq!(d.dv, Vec3::zeros());
    }

    #[test]
    fn zero_shaping_reproduces_open_loop_euler_equations() {
        // Independent route: J dw = -w x (J w) + tau, written component-wise.
        let b = paper_body();
        let s = State {
            w: Vec3::new(-0.4, 0.9, 1.3),
            ..paper_state()
        };
        let tau = Vec3::new(0.2, -0.1, 0.05);
        let (j1, j2, j3) = (1.5, 1.5, 0.5);
        let (w1, w2, w3) = (s.w.x, s.w.y, s.w.z);
        let oracle = Vec3::new(
            ((j2 - j3) * w2 * w3 + tau.x) / j1,
            ((j3 - j1) * w3 * w1 + tau.y) / j2,
            ((j1 - j2) * w1 * w2 + tau.z) / j3,
        );
        let u = ControlInput {
            tau_prime: tau,
            ..ControlInput::default()
        };
        assert!((closed_loop_derivative(&s, &u, &b).dw - oracle).norm() < 1e-15);
    }

    #[test]
    fn power_balance_examples() {
        let b = paper_body();
        let s = paper_state();
        assert_eq!(power_balance(&s, &ControlInput::default(), &b), 0.0);
        let gyro_only = ControlInput {
            a: Vec3::new(3.0, -1.0, 2.0),
            ..ControlInput::default()
        };
        assert_eq!(power_balance(&s, &gyro_only, &b), 0.0);
        let push = ControlInput {
            f_prime: Vec3::new(0.0, 1.0, 0.0),
            ..ControlInput::default()
        };
        assert!((power_balance(&s, &push, &b) - 0.1).abs() < 1e-16);
    }

    #[test]
    fn power_balance_matches_finite_difference_of_kinetic_energy() {
        let b = paper_body();
        let s = paper_state();
        let u = ControlInput {
            f_prime: Vec3::new(0.3, -0.2, 0.1),
            tau_prime: Vec3::new(-0.05, 0.4, 0.2),
            a: Vec3::new(2.0, -3.0, 1.0),
        };
        let d = closed_loop_derivative(&s, &u, &b);
        // K is quadratic in (v, w); the directional derivative along (dv, dw)
        // is exact under central differencing.
        let h = 1e-5;
        let shifted = |sign: f64| State {
            v: s.v + d.dv * (sign * h),
            w: s.w + d.dw * (sign * h),
            ..s
        };
        let fd = (kinetic_energy(&shifted(1.0), &b) - kinetic_energy(&shifted(-1.0), &b)) / (2.0 * h);
        assert!((fd - power_balance(&s, &u, &b)).abs() < 1e-10);
    }

    #[test]
    fn matching_residual_examples() {
        let j = Mat3::from_diagonal(&Vec3::new(1.5, 1.5, 0.5));
        let w = Vec3::new(0.15, -0.2, 0.25);
        let r = matching_residual(&w, &Vec3::zeros(), &Vec3::zeros(), &j, &j).unwrap();
        assert!(r.norm() < 1e-16);

        let id = Mat3::identity();
        let r = matching_residual(&w, &w, &Vec3::zeros(), &id, &id).unwrap();
        assert!(r.norm() < 1e-16);

        assert!(matching_residual(&w, &w, &w, &(id * -1.0), &id).is_err());
    }

    #[test]
    fn matching_is_unsolvable_for_generic_inertia() {
        // hat(w) has rank 2, so min_a |hat(w) a - t| = |t . w| / |w|.
        let j = Mat3::from_diagonal(&Vec3::new(1.5, 1.5, 0.5));
        let j_d = Mat3::from_diagonal(&Vec3::new(1.0, 2.0, 0.8));
        let tau = Vec3::new(0.3, -0.7, 0.2);
        for k in 0..20 {
            let t = k as f64;
            let w = Vec3::new((1.3 * t).sin(), (0.7 * t + 1.0).cos(), 0.5 + 0.1 * t);
            let target = -matching_residual(&w, &Vec3::zeros(), &tau, &j, &j_d).unwrap();
            let along = w.normalize();
            // Least-squares a from the pseudo-inverse of hat(w): a = (t x w)/|w|^2
            let a_ls = target.cross(&w) / w.norm_squared();
            let best = matching_residual(&w, &a_ls, &tau, &j, &j_d).unwrap();
            assert!((best.norm() - target.dot(&along).abs()).abs() < 1e-12);
            assert!(best.norm() > 1e-6);
        }
    }
}
