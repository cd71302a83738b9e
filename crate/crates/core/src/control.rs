//! Nominal passive attitude controller and the lossless shaping torque.

use nalgebra::{Matrix3, Vector3};

use crate::dynamics::{ControlInput, State};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::so3::{sk, vee_unchecked, Mat3, Rotation, Vec3};

/// Co-stiffness `G` (symmetric positive semidefinite) and damping `k_D > 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AttitudeGains {
    stiffness: Mat3,
    damping: f64,
}

impl AttitudeGains {
    pub fn new(stiffness: Mat3, damping: f64) -> Result<Self> {
        let asymmetry = (stiffness - stiffness.transpose()).norm();
        if asymmetry > 1e-12 || !asymmetry.is_finite() {
            return Err(Error::AsymmetricGain { asymmetry });
        }
        let min_eig = stiffness.symmetric_eigenvalues().min();
        if min_eig < -1e-12 {
            return Err(Error::invalid(
                "stiffness",
                format!("must be positive semidefinite, smallest eigenvalue {min_eig:e}"),
            ));
        }
        if !(damping > 0.0 && damping.is_finite()) {
            return Err(Error::invalid("damping", format!("must be positive, got {damping}")));
        }
        Ok(Self { stiffness, damping })
    }

    pub fn stiffness(&self) -> &Mat3 {
        &self.stiffness
    }

    pub fn damping(&self) -> f64 {
        self.damping
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SetPoint {
    pub r_d: Rotation,
}

/// `vee(-2 sk(G R_d^T R)) - k_D w`, with `G R_d^T` precomputed.
#[inline]
pub(crate) fn nominal_torque_generic<S: Real>(
    r: &Matrix3<S>,
    w: &Vector3<S>,
    g_rd_t: &Mat3,
    damping: f64,
) -> Vector3<S> {
    let g: Matrix3<S> = g_rd_t.map(S::from_f64);
    let m = g * r;
    vee_unchecked(&sk(&m)) * S::from_f64(-2.0) - w * S::from_f64(damping)
}

pub fn nominal_attitude_torque(
    r: &Rotation,
    w: &Vec3,
    sp: &SetPoint,
    gains: &AttitudeGains,
) -> Vec3 {
    let g_rd_t = gains.stiffness * sp.r_d.matrix().transpose();
    nominal_torque_generic(r.matrix(), w, &g_rd_t, gains.damping)
}

/// `w x a`, orthogonal to `w` and so workless.
pub fn lossless_torque(w: &Vec3, a: &Vec3) -> Vec3 {
    w.cross(a)
}

/// Which torque terms are active.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ControlMode {
    pub nominal: bool,
    pub lossless: bool,
}

/// Assembles the input for one simulation step. The residual force is always
/// zero; the shaping vector is dropped unless the lossless term is enabled.
pub fn composite_control(
    s: &State,
    sp: &SetPoint,
    gains: &AttitudeGains,
    a_hold: &Vec3,
    mode: ControlMode,
) -> ControlInput {
    let tau_prime = if mode.nominal {
        nominal_attitude_torque(&s.r, &s.w, sp, gains)
    } else {
        Vec3::zeros()
    };
    let a = if mode.lossless { *a_hold } else { Vec3::zeros() };
    ControlInput {
        f_prime: Vec3::zeros(),
        tau_prime,
        a,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn gains() -> AttitudeGains {
        AttitudeGains::new(Mat3::identity(), 1.5).unwrap()
    }

    #[test]
    fn gain_validation() {
        let mut asym = Mat3::identity();
        asym[(0, 1)] = 0.2;
        assert!(matches!(
            AttitudeGains::new(asym, 1.0),
            Err(Error::AsymmetricGain { .. })
        ));
        let indefinite = Mat3::from_diagonal(&Vec3::new(1.0, -0.5, 1.0));
        assert!(AttitudeGains::new(indefinite, 1.0).is_err());
        assert!(AttitudeGains::new(Mat3::identity(), 0.0).is_err());
        assert!(AttitudeGains::new(Mat3::zeros(), 0.1).is_ok());
    }

    #[test]
    fn torque_vanishes_at_set_point() {
        let sp = SetPoint {
            r_d: Rotation::rot_y(3.0 * PI / 4.0),
        };
        let g = AttitudeGains::new(Mat3::new(2.0, 0.3, 0.0, 0.3, 1.0, 0.1, 0.0, 0.1, 0.7), 0.4)
            .unwrap();
        // R_d^T R_d equals I only to rounding for a general R_d.
        let tau = nominal_attitude_torque(&sp.r_d, &Vec3::zeros(), &sp, &g);
        assert!(tau.norm() < 1e-15);
        let id = SetPoint {
            r_d: Rotation::identity(),
        };
        assert_eq!(
            nominal_attitude_torque(&id.r_d, &Vec3::zeros(), &id, &g),
            Vec3::zeros()
        );
    }

    #[test]
    fn pure_damping_at_set_point() {
        let sp = SetPoint {
            r_d: Rotation::identity(),
        };
        let w = Vec3::new(0.1, -0.4, 0.2);
        let tau = nominal_attitude_torque(&sp.r_d, &w, &sp, &gains());
        assert!((tau + w * 1.5).norm() < 1e-16);
    }

    #[test]
    fn restoring_torque_about_z() {
        // sk(rot_z(theta)) has (0,1) entry -sin(theta), so the torque is -2 sin(theta) e3.
        let rd = Rotation::rot_x(0.4);
        let sp = SetPoint { r_d: rd };
        for theta in [0.3, 1.0, -0.7, 2.5] {
            let r = rd.compose(&Rotation::rot_z(theta));
            let tau = nominal_attitude_torque(&r, &Vec3::zeros(), &sp, &gains());
            let expected = Vec3::new(0.0, 0.0, -2.0 * f64::sin(theta));
            assert!((tau - expected).norm() < 1e-14, "{tau:?} vs {expected:?}");
        }
    }

    #[test]
    fn lossless_torque_examples() {
        let w = Vec3::new(0.3, -0.1, 0.7);
        assert_eq!(lossless_torque(&w, &Vec3::zeros()), Vec3::zeros());
        assert!(lossless_torque(&w, &(w * 2.5)).norm() < 1e-15);
        assert_eq!(
            lossless_torque(&Vec3::new(0.0, 0.0, 1.0), &Vec3::new(1.0, 0.0, 0.0)),
            Vec3::new(0.0, 1.0, 0.0)
        );
    }

    #[test]
    fn composite_modes() {
        let s = State {
            p: Vec3::zeros(),
            r: Rotation::rot_x(0.5),
            v: Vec3::new(0.0, 0.1, 0.0),
            w: Vec3::new(0.15, -0.2, 0.25),
        };
        let sp = SetPoint {
            r_d: Rotation::rot_y(3.0 * PI / 4.0),
        };
        let a = Vec3::new(1.0, 2.0, 3.0);
        let free = composite_control(&s, &sp, &gains(), &a, ControlMode::default());
        assert_eq!(free, ControlInput::default());

        let nominal = composite_control(
            &s,
            &sp,
            &gains(),
            &a,
            ControlMode {
                nominal: true,
                lossless: false,
            },
        );
        assert_eq!(nominal.a, Vec3::zeros());
        assert_eq!(nominal.tau_prime, nominal_attitude_torque(&s.r, &s.w, &sp, &gains()));

        let lossless = composite_control(
            &s,
            &sp,
            &gains(),
            &a,
            ControlMode {
                nominal: false,
                lossless: true,
            },
        );
        assert_eq!(lossless.tau_prime, Vec3::zeros());
        assert_eq!(lossless.a, a);
        assert_eq!(lossless.f_prime, Vec3::zeros());
    }

    proptest! {
        #[test]
        fn shaping_torque_is_workless(
            w in proptest::array::uniform3(-5.0..5.0f64),
            a in proptest::array::uniform3(-5.0..5.0f64),
        ) {
            let w = Vec3::from(w);
            let a = Vec3::from(a);
            let power = w.dot(&lossless_torque(&w, &a));
            prop_assert!(power.abs() <= 1e-12 * w.norm_squared() * a.norm() + 1e-300);
        }
    }
}
