use nalgebra::{Matrix3, Matrix4, Quaternion, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

/// Rigid transform from the object frame into the camera frame, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "PoseRepr", into = "PoseRepr")]
pub struct Pose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

/// On-disk form: quaternion as `[w, x, y, z]`, translation as `[x, y, z]`.
#[derive(Serialize, Deserialize)]
struct PoseRepr {
    rotation: [f64; 4],
    translation: [f64; 3],
}

impl From<PoseRepr> for Pose {
    fn from(r: PoseRepr) -> Self {
        let [w, x, y, z] = r.rotation;
        let q = Quaternion::new(w, x, y, z);
        // Renormalising an already-unit quaternion moves its last bits, which
        // would break exact save/load round trips.
        let rotation = if (q.norm_squared() - 1.0).abs() <= 1e-14 {
            UnitQuaternion::new_unchecked(q)
        } else {
            UnitQuaternion::from_quaternion(q)
        };
        Pose::new(rotation, Vector3::from(r.translation))
    }
}

impl From<Pose> for PoseRepr {
    fn from(p: Pose) -> Self {
        let q = p.rotation.quaternion();
        PoseRepr { rotation: [q.w, q.i, q.j, q.k], translation: p.translation.into() }
    }
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self { rotation, translation }
    }

    pub fn identity() -> Self {
        Self::new(UnitQuaternion::identity(), Vector3::zeros())
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self::new(UnitQuaternion::identity(), translation)
    }

    /// Builds a pose from the upper 3x4 block of a homogeneous matrix. The
    /// rotation block is re-orthonormalised.
    pub fn from_matrix(m: &Matrix4<f64>) -> Self {
        let r: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
        let rot = Rotation3::from_matrix(&r);
        Self::new(
            UnitQuaternion::from_rotation_matrix(&rot),
            m.fixed_view::<3, 1>(0, 3).into_owned(),
        )
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(self.rotation.to_rotation_matrix().matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        *self.rotation.to_rotation_matrix().matrix()
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.rotation.inverse();
        Pose::new(inv, -(inv * self.translation))
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Camera-frame depth of the object origin (`pose[2, 3]`).
    pub fn depth(&self) -> f64 {
        self.translation.z
    }

    pub fn is_finite(&self) -> bool {
        self.translation.iter().all(|v| v.is_finite())
            && self.rotation.coords.iter().all(|v| v.is_finite())
    }
}

pub fn compose(a: &Pose, b: &Pose) -> Pose {
    a.compose(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn max_abs_diff(a: &Matrix4<f64>, b: &Matrix4<f64>) -> f64 {
        (a - b).abs().max()
    }

    fn sample_pose() -> Pose {
        Pose::new(
            UnitQuaternion::from_euler_angles(0.3, -1.1, 2.0),
            Vector3::new(0.1, -0.2, 0.9),
        )
    }

    #[test]
    fn identity_is_neutral() {
        let p = sample_pose();
        assert!(max_abs_diff(&Pose::identity().compose(&p).to_matrix(), &p.to_matrix()) < 1e-15);
        assert!(max_abs_diff(&p.compose(&Pose::identity()).to_matrix(), &p.to_matrix()) < 1e-15);
    }

    #[test]
    fn compose_with_inverse_is_identity() {
        let p = sample_pose();
        let m = p.compose(&p.inverse()).to_matrix();
        assert!(max_abs_diff(&m, &Matrix4::identity()) < 1e-9);
        let m = p.inverse().compose(&p).to_matrix();
        assert!(max_abs_diff(&m, &Matrix4::identity()) < 1e-9);
    }

    #[test]
    fn compose_matches_matrix_product() {
        // 90 degrees about z, then 90 degrees about x.
        let rz = Pose::new(
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), FRAC_PI_2),
            Vector3::new(1.0, 0.0, 0.0),
        );
        let rx = Pose::new(
            UnitQuaternion::from_axis_angle(&Vector3::x_axis(), FRAC_PI_2),
            Vector3::new(0.0, 2.0, 0.0),
        );
        let composed = rx.compose(&rz);
        #[rustfmt::skip]
        let mz = Matrix4::new(
            0.0, -1.0, 0.0, 1.0,
            1.0,  0.0, 0.0, 0.0,
            0.0,  0.0, 1.0, 0.0,
            0.0,  0.0, 0.0, 1.0,
        );
        #[rustfmt::skip]
        let mx = Matrix4::new(
            1.0, 0.0,  0.0, 0.0,
            0.0, 0.0, -1.0, 2.0,
            0.0, 1.0,  0.0, 0.0,
            0.0, 0.0,  0.0, 1.0,
        );
        assert!(max_abs_diff(&composed.to_matrix(), &(mx * mz)) < 1e-12);
        // The combined rotation sends x to z.
        let x = composed.rotation * Vector3::x();
        assert!((x - Vector3::z()).norm() < 1e-12);
    }

    #[test]
    fn matrix_round_trip() {
        let p = sample_pose();
        let q = Pose::from_matrix(&p.to_matrix());
        assert!(max_abs_diff(&p.to_matrix(), &q.to_matrix()) < 1e-12);
        let r = p.rotation_matrix();
        assert!((r.determinant() - 1.0).abs() < 1e-9);
        assert!((r.transpose() * r - Matrix3::identity()).abs().max() < 1e-9);
    }

    #[test]
    fn serde_uses_wxyz() {
        let p = Pose::new(UnitQuaternion::identity(), Vector3::new(0.0, 0.0, 0.5));
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, r#"{"rotation":[1.0,0.0,0.0,0.0],"translation":[0.0,0.0,0.5]}"#);
        let back: Pose = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn serde_round_trip_is_exact_and_normalises_sloppy_input() {
        let q = UnitQuaternion::from_euler_angles(0.3, -0.7, 1.1);
        let p = Pose::new(q, Vector3::new(0.01, -0.02, 0.9));
        let back: Pose = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(back, p);
        let sloppy: Pose = serde_json::from_str(r#"{"rotation":[2.0,0.0,0.0,0.0],"translation":[0,0,1]}"#).unwrap();
        assert_eq!(sloppy.rotation, UnitQuaternion::identity());
    }
}
