//! Motion-compensation geometry of the actuator carriage.
//!
//! A lead screw pivoting about a fixed point drives the carriage; moving the
//! carriage from one pose to another needs a screw extension, a rotation of
//! the screw arm, and a counter-rotation of the joint motor so the section
//! model keeps its commanded attitude.

use crate::error::{Error, Result};

/// Carriage position relative to the screw pivot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CarriagePose {
    /// Vertical distance from the pivot (m); positive in the operational range.
    pub v: f64,
    /// Lateral offset (m).
    pub h: f64,
}

impl CarriagePose {
    pub fn new(v: f64, h: f64) -> Self {
        CarriagePose { v, h }
    }

    fn screw_length(&self) -> f64 {
        self.h.hypot(self.v)
    }

    fn arm_angle(&self) -> Result<f64> {
        if !(self.v > 0.0) {
            return Err(Error::Domain(format!(
                "carriage at V = {} is outside the operational envelope (V > 0)",
                self.v
            )));
        }
        Ok((self.h / self.v).atan())
    }
}

/// Change in screw length between two poses.
pub fn screw_increment(p0: CarriagePose, p1: CarriagePose) -> f64 {
    p1.screw_length() - p0.screw_length()
}

/// Change in screw arm angle between two poses (rad).
pub fn arm_rotation_increment(p0: CarriagePose, p1: CarriagePose) -> Result<f64> {
    Ok(p1.arm_angle()? - p0.arm_angle()?)
}

/// Joint motor rotation that leaves the section at `delta_alpha0` after the
/// arm has turned by `delta_alpha`.
pub fn joint_motor_target(delta_alpha0: f64, delta_alpha: f64) -> f64 {
    delta_alpha0 - delta_alpha
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn screw_cases() {
        let p = CarriagePose::new(1.2, 0.3);
        assert_eq!(screw_increment(p, p), 0.0);
        let d = screw_increment(CarriagePose::new(0.8, 0.0), CarriagePose::new(1.1, 0.0));
        assert!((d - 0.3).abs() < 1e-15);
        let d = screw_increment(CarriagePose::new(1.0, 0.0), CarriagePose::new(1.0, 1.0));
        assert!((d - 0.414214).abs() < 1e-6);
    }

    #[test]
    fn arm_cases() {
        let d = arm_rotation_increment(CarriagePose::new(1.0, 0.0), CarriagePose::new(2.0, 0.0)).unwrap();
        assert_eq!(d, 0.0);
        let d = arm_rotation_increment(CarriagePose::new(1.0, 0.0), CarriagePose::new(1.0, 1.0)).unwrap();
        assert!((d - FRAC_PI_4).abs() < 1e-6);
    }

    #[test]
    fn pivot_plane_is_domain_error() {
        let ok = CarriagePose::new(1.0, 0.0);
        for bad in [CarriagePose::new(0.0, 0.1), CarriagePose::new(-0.5, 0.0)] {
            assert!(matches!(arm_rotation_increment(ok, bad), Err(Error::Domain(_))));
            assert!(matches!(arm_rotation_increment(bad, ok), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn joint_motor_cases() {
        assert_eq!(joint_motor_target(0.0, 0.3), -0.3);
        assert_eq!(joint_motor_target(0.3, 0.0), 0.3);
        assert!((joint_motor_target(0.02, 0.005) - 0.015).abs() < 1e-15);
    }

    fn pose() -> impl Strategy<Value = CarriagePose> {
        (0.1f64..5.0, -3.0f64..3.0).prop_map(|(v, h)| CarriagePose::new(v, h))
    }

    proptest! {
        #[test]
        fn arm_increment_antisymmetric(a in pose(), b in pose()) {
            let ab = arm_rotation_increment(a, b).unwrap();
            let ba = arm_rotation_increment(b, a).unwrap();
            prop_assert_eq!(ab, -ba);
        }

        #[test]
        fn increments_compose_along_paths(path in prop::collection::vec(pose(), 2..12)) {
            let (first, last) = (path[0], *path.last().unwrap());
            let dl: f64 = path.windows(2).map(|w| screw_increment(w[0], w[1])).sum();
            let da: f64 = path.windows(2).map(|w| arm_rotation_increment(w[0], w[1]).unwrap()).sum();
            prop_assert!((dl - screw_increment(first, last)).abs() < 1e-12);
            prop_assert!((da - arm_rotation_increment(first, last).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn closed_loops_return_zero(mut path in prop::collection::vec(pose(), 2..12)) {
            path.push(path[0]);
            let dl: f64 = path.windows(2).map(|w| screw_increment(w[0], w[1])).sum();
            let da: f64 = path.windows(2).map(|w| arm_rotation_increment(w[0], w[1]).unwrap()).sum();
            prop_assert!(dl.abs() < 1e-12);
            prop_assert!(da.abs() < 1e-12);
        }

        #[test]
        fn fixed_pose_passes_torsion_through(p in pose(), a0 in -0.5f64..0.5) {
            let da = arm_rotation_increment(p, p).unwrap();
            prop_assert_eq!(joint_motor_target(a0, da), a0);
        }
    }
}
