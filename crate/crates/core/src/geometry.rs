//! Rigid-body pose algebra.
//!
//! Rotations are unit quaternions kept in the `w >= 0` hemisphere so that
//! serialized poses are unique. Matrices are only materialized where the
//! robot-centric transform needs them.

use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

/// A rigid transform: rotation followed by translation (meters).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

/// A target pose expressed in the body frame of a robot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativePose(pub Pose);

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

fn canonical(q: Quaternion<f64>) -> UnitQuaternion<f64> {
    let q = if q.w < 0.0 { -q } else { q };
    UnitQuaternion::new_normalize(q)
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: canonical(rotation.into_inner()),
            translation,
        }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self::new(UnitQuaternion::identity(), Vector3::new(x, y, z))
    }

    /// Heading-only pose (rotation about world +z).
    pub fn from_yaw(yaw: f64, translation: Vector3<f64>) -> Self {
        Self::new(
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw),
            translation,
        )
    }

    /// Intrinsic z-y-x (yaw, pitch, roll) construction.
    pub fn from_euler(roll: f64, pitch: f64, yaw: f64, translation: Vector3<f64>) -> Self {
        Self::new(
            UnitQuaternion::from_euler_angles(roll, pitch, yaw),
            translation,
        )
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        *self.rotation.to_rotation_matrix().matrix()
    }

    pub fn yaw(&self) -> f64 {
        self.rotation.euler_angles().2
    }

    /// `self` then `other`: maps points from `other`'s frame through `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose::new(
            self.rotation * other.rotation,
            self.translation + self.rotation * other.translation,
        )
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.rotation.inverse();
        Pose::new(inv, -(inv * self.translation))
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn inverse_transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.inverse() * (p - self.translation)
    }

    /// `(qw, qx, qy, qz, tx, ty, tz)`, the on-disk order.
    pub fn to_array(&self) -> [f64; 7] {
        let q = self.rotation.quaternion();
        let t = &self.translation;
        [q.w, q.i, q.j, q.k, t.x, t.y, t.z]
    }

    /// Inverse of [`Pose::to_array`]. The quaternion is renormalized and
    /// sign-canonicalized.
    pub fn from_array(a: &[f64; 7]) -> Pose {
        Pose::new(
            UnitQuaternion::new_normalize(Quaternion::new(a[0], a[1], a[2], a[3])),
            Vector3::new(a[4], a[5], a[6]),
        )
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Pose of `target` in the body frame of `robot`:
/// rotation `R_r^T R_t`, translation `R_r^T (t_t - t_r)`.
pub fn target_in_robot_frame(target: &Pose, robot: &Pose) -> RelativePose {
    let r_robot_t = robot.rotation_matrix().transpose();
    let rotation = r_robot_t * target.rotation_matrix();
    let translation = r_robot_t * (target.translation - robot.translation);
    let rotation = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(rotation));
    RelativePose(Pose::new(rotation, translation))
}

/// Geodesic angle (radians, in `[0, pi]`) between two orientations.
pub fn orientation_error(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> f64 {
    a.angle_to(b)
}

/// Rotation vector (axis * angle) of a unit quaternion, angle in `[0, pi]`.
pub fn rotation_vector(q: &UnitQuaternion<f64>) -> Vector3<f64> {
    let q = canonical(q.into_inner());
    q.scaled_axis()
}

impl RelativePose {
    pub fn pose(&self) -> &Pose {
        &self.0
    }

    pub fn to_array(&self) -> [f64; 7] {
        self.0.to_array()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn identity_is_neutral() {
        let p = Pose::from_euler(0.1, -0.4, 2.0, Vector3::new(1.0, -2.0, 0.5));
        let c = Pose::identity().compose(&p);
        for (a, b) in c.to_array().iter().zip(p.to_array()) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn quarter_turns_add_up() {
        let q = Pose::from_yaw(FRAC_PI_2, Vector3::zeros());
        let half = q.compose(&q);
        let expected = Pose::from_yaw(std::f64::consts::PI, Vector3::zeros());
        assert!(orientation_error(&half.rotation, &expected.rotation) < 1e-12);
        assert_eq!(half.translation, Vector3::zeros());
    }

    #[test]
    fn inverse_of_translation() {
        let p = Pose::from_translation(1.0, 2.0, 3.0);
        assert_eq!(p.inverse().translation, Vector3::new(-1.0, -2.0, -3.0));
        assert_eq!(Pose::identity().inverse(), Pose::identity());
    }

    #[test]
    fn robot_frame_examples() {
        let t = Pose::from_euler(0.3, 0.2, 0.1, Vector3::new(4.0, 5.0, 6.0));
        let rel = target_in_robot_frame(&t, &Pose::identity());
        for (a, b) in rel.to_array().iter().zip(t.to_array()) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }

        let r = Pose::from_translation(1.0, 0.0, 0.0);
        let t = Pose::from_translation(2.0, 0.0, 0.0);
        assert_eq!(
            target_in_robot_frame(&t, &r).0.translation,
            Vector3::new(1.0, 0.0, 0.0)
        );
    }

    #[test]
    fn sign_is_canonical() {
        let q = UnitQuaternion::new_normalize(Quaternion::new(-0.5, 0.5, 0.5, 0.5));
        let p = Pose::new(q, Vector3::zeros());
        assert!(p.to_array()[0] >= 0.0);
        assert!(Pose::from_yaw(3.0, Vector3::zeros()).to_array()[0] >= 0.0);
        assert!(Pose::from_yaw(-3.0, Vector3::zeros()).to_array()[0] >= 0.0);
    }

    #[test]
    fn rotation_vector_of_yaw() {
        let p = Pose::from_yaw(0.7, Vector3::zeros());
        let v = rotation_vector(&p.rotation);
        assert_abs_diff_eq!(v.z, 0.7, epsilon = 1e-12);
        let p = Pose::from_yaw(-0.7, Vector3::zeros());
        assert_abs_diff_eq!(rotation_vector(&p.rotation).z, -0.7, epsilon = 1e-12);
    }
}
