//! Constant-velocity Kalman filter over translation with a decoupled
//! quaternion track. Time is measured in frames: velocities are m/frame and
//! angular velocity is rad/frame.

use nalgebra::{Matrix3, Matrix3x6, Matrix6, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::geom::Pose;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KalmanConfig {
    /// Process noise variance on position, m^2 per frame.
    pub q_pos: f64,
    /// Process noise variance on velocity.
    pub q_vel: f64,
    /// Measurement noise variance per axis, m^2.
    pub r: f64,
    pub p0_pos: f64,
    pub p0_vel: f64,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        Self { q_pos: 1e-4, q_vel: 1e-4, r: 1e-4, p0_pos: 1e-4, p0_vel: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    /// `[position; velocity]`.
    pub x: Vector6<f64>,
    pub p: Matrix6<f64>,
    pub rotation: UnitQuaternion<f64>,
    /// Camera-frame rotation vector applied per frame.
    pub angular_velocity: Vector3<f64>,
    pub config: KalmanConfig,
    last_measured_rotation: UnitQuaternion<f64>,
    frames_since_measurement: u32,
}

impl KalmanState {
    /// Starts at `pose` with zero velocity.
    pub fn new(pose: &Pose, config: KalmanConfig) -> Self {
        let mut x = Vector6::zeros();
        x.fixed_rows_mut::<3>(0).copy_from(&pose.translation);
        let p = Matrix6::from_diagonal(&Vector6::new(
            config.p0_pos,
            config.p0_pos,
            config.p0_pos,
            config.p0_vel,
            config.p0_vel,
            config.p0_vel,
        ));
        Self {
            x,
            p,
            rotation: pose.rotation,
            angular_velocity: Vector3::zeros(),
            config,
            last_measured_rotation: pose.rotation,
            frames_since_measurement: 0,
        }
    }

    pub fn position(&self) -> Vector3<f64> {
        self.x.fixed_rows::<3>(0).into_owned()
    }

    pub fn velocity(&self) -> Vector3<f64> {
        self.x.fixed_rows::<3>(3).into_owned()
    }

    pub fn pose(&self) -> Pose {
        Pose::new(self.rotation, self.position())
    }

    pub fn frames_since_measurement(&self) -> u32 {
        self.frames_since_measurement
    }
}

fn transition() -> Matrix6<f64> {
    let mut f = Matrix6::identity();
    f.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());
    f
}

fn observation_matrix() -> Matrix3x6<f64> {
    let mut h = Matrix3x6::zeros();
    h.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
    h
}

/// One constant-velocity step. Returns the predicted pose and the advanced state.
pub fn kalman_predict(state: &KalmanState) -> (Pose, KalmanState) {
    let f = transition();
    let c = &state.config;
    let q = Matrix6::from_diagonal(&Vector6::new(c.q_pos, c.q_pos, c.q_pos, c.q_vel, c.q_vel, c.q_vel));
    let mut next = state.clone();
    next.x = f * state.x;
    next.p = f * state.p * f.transpose() + q;
    next.rotation = UnitQuaternion::from_scaled_axis(state.angular_velocity) * state.rotation;
    next.frames_since_measurement = state.frames_since_measurement.saturating_add(1);
    (next.pose(), next)
}

/// Corrects the state with a measured pose.
///
/// Translation uses the Joseph-form update. The rotation is slerped toward
/// the measurement by the mean of the position gain diagonal, and the
/// angular velocity is re-estimated from the last two measured rotations.
pub fn kalman_update(state: &KalmanState, measured: &Pose) -> KalmanState {
    let h = observation_matrix();
    let r = Matrix3::identity() * state.config.r;
    let s = h * state.p * h.transpose() + r;
    let s_inv = s.try_inverse().unwrap_or_else(|| s.pseudo_inverse(1e-15).expect("svd"));
    let k = state.p * h.transpose() * s_inv;
    let innovation = measured.translation - h * state.x;

    let mut next = state.clone();
    next.x = state.x + k * innovation;
    let i_kh = Matrix6::identity() - k * h;
    let p = i_kh * state.p * i_kh.transpose() + k * r * k.transpose();
    next.p = 0.5 * (p + p.transpose());

    let gain = (k.fixed_view::<3, 3>(0, 0).trace() / 3.0).clamp(0.0, 1.0);
    next.rotation = state.rotation.try_slerp(&measured.rotation, gain, 1e-9).unwrap_or(measured.rotation);
    let gap = state.frames_since_measurement.max(1) as f64;
    let mut delta = measured.rotation * state.last_measured_rotation.inverse();
    if delta.w < 0.0 {
        delta = UnitQuaternion::new_unchecked(-delta.into_inner());
    }
    next.angular_velocity = delta.scaled_axis() / gap;
    next.last_measured_rotation = measured.rotation;
    next.frames_since_measurement = 0;
    next
}
