//! Rigid world-to-camera poses.

use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

/// World-to-camera transform: `x_cam = R x_world + t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl CameraPose {
    pub fn identity() -> CameraPose {
        CameraPose { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> CameraPose {
        let pose = CameraPose { rotation, translation };
        debug_assert!(pose.is_orthonormal(1e-7), "rotation is not orthonormal: {rotation}");
        pose
    }

    /// Builds the rotation from a `[w, x, y, z]` quaternion (normalized here,
    /// so any nonzero quaternion is accepted).
    pub fn from_quaternion(q: [f64; 4], t: [f64; 3]) -> CameraPose {
        let uq = UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3]));
        CameraPose {
            rotation: uq.to_rotation_matrix().into_inner(),
            translation: Vector3::new(t[0], t[1], t[2]),
        }
    }

    /// `[w, x, y, z]` with the sign convention w >= 0.
    pub fn quaternion(&self) -> [f64; 4] {
        let uq = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(
            self.rotation,
        ));
        let q = uq.quaternion();
        let s = if q.w < 0.0 { -1.0 } else { 1.0 };
        [s * q.w, s * q.i, s * q.j, s * q.k]
    }

    pub fn is_orthonormal(&self, tol: f64) -> bool {
        let gram = self.rotation.transpose() * self.rotation;
        let id_err = (gram - Matrix3::identity()).abs().max();
        id_err <= tol && (self.rotation.determinant() - 1.0).abs() <= tol
    }

    pub fn inverse(&self) -> CameraPose {
        let rt = self.rotation.transpose();
        CameraPose { rotation: rt, translation: -(rt * self.translation) }
    }

    pub fn transform(&self, p: [f64; 3]) -> [f64; 3] {
        let v = self.rotation * Vector3::new(p[0], p[1], p[2]) + self.translation;
        [v.x, v.y, v.z]
    }

    /// Camera center in world coordinates, `-R^T t`.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    /// Rotation angle away from identity, in radians.
    pub fn rotation_angle(&self) -> f64 {
        ((self.rotation.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }
}

/// Applies `a`, then `b`.
pub fn compose(a: &CameraPose, b: &CameraPose) -> CameraPose {
    CameraPose {
        rotation: b.rotation * a.rotation,
        translation: b.rotation * a.translation + b.translation,
    }
}

/// Pose of camera `b` expressed in camera `a`'s frame: `b` composed with the
/// inverse of `a`.
pub fn relative_pose(a: &CameraPose, b: &CameraPose) -> CameraPose {
    let rotation = b.rotation * a.rotation.transpose();
    let translation = b.translation - rotation * a.translation;
    CameraPose { rotation, translation }
}
