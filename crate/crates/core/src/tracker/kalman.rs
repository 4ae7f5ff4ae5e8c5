//! Constant-velocity Kalman filter over the box state
//! `(cx, cy, cz, yaw, l, w, h, vx, vy, vz)`; velocities are per frame.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::model::{wrap_angle, Box3D};

pub type StateVec = SVector<f64, 10>;
pub type StateCov = SMatrix<f64, 10, 10>;
type Meas = SVector<f64, 7>;
type MeasMap = SMatrix<f64, 7, 10>;

const YAW: usize = 3;
const MIN_DIM: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KalmanParams {
    /// Variance on each observed component.
    pub measurement_noise: f64,
    /// Variance added to every state component per prediction.
    pub process_noise: f64,
    pub initial_velocity_var: f64,
}

impl Default for KalmanParams {
    fn default() -> Self {
        KalmanParams {
            measurement_noise: 0.01,
            process_noise: 0.01,
            initial_velocity_var: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub mean: StateVec,
    pub cov: StateCov,
}

fn transition() -> StateCov {
    let mut f = StateCov::identity();
    f[(0, 7)] = 1.0;
    f[(1, 8)] = 1.0;
    f[(2, 9)] = 1.0;
    f
}

fn observation() -> MeasMap {
    let mut h = MeasMap::zeros();
    for i in 0..7 {
        h[(i, i)] = 1.0;
    }
    h
}

fn measurement(b: &Box3D) -> Meas {
    Meas::from_column_slice(&[b.cx, b.cy, b.cz, b.yaw, b.length, b.width, b.height])
}

impl KalmanState {
    /// Zero velocity, observed block at the measurement noise level.
    pub fn from_box(b: &Box3D, params: &KalmanParams) -> Self {
        let mut mean = StateVec::zeros();
        mean.fixed_rows_mut::<7>(0).copy_from(&measurement(b));
        let mut cov = StateCov::zeros();
        for i in 0..7 {
            cov[(i, i)] = params.measurement_noise;
        }
        for i in 7..10 {
            cov[(i, i)] = params.initial_velocity_var;
        }
        KalmanState { mean, cov }
    }

    pub fn to_box(&self) -> Box3D {
        let m = &self.mean;
        Box3D {
            cx: m[0],
            cy: m[1],
            cz: m[2],
            yaw: wrap_angle(m[YAW]),
            length: m[4].max(MIN_DIM),
            width: m[5].max(MIN_DIM),
            height: m[6].max(MIN_DIM),
        }
    }

    pub fn velocity(&self) -> [f64; 3] {
        [self.mean[7], self.mean[8], self.mean[9]]
    }
}

pub fn kf_predict(state: &KalmanState, params: &KalmanParams) -> KalmanState {
    let f = transition();
    let mean = f * state.mean;
    let mut cov = f * state.cov * f.transpose();
    for i in 0..10 {
        cov[(i, i)] += params.process_noise;
    }
    KalmanState { mean, cov }
}

pub fn kf_update(state: &KalmanState, det: &Box3D, params: &KalmanParams) -> KalmanState {
    let h = observation();
    let r = SMatrix::<f64, 7, 7>::identity() * params.measurement_noise;
    let mut innovation = measurement(det) - h * state.mean;
    innovation[YAW] = wrap_angle(innovation[YAW]);

    let s = h * state.cov * h.transpose() + r;
    let s_inv = s
        .try_inverse()
        .expect("innovation covariance is positive definite");
    let gain = state.cov * h.transpose() * s_inv;

    let mut mean = state.mean + gain * innovation;
    mean[YAW] = wrap_angle(mean[YAW]);

    // Joseph form keeps the covariance symmetric PSD.
    let i_kh = StateCov::identity() - gain * h;
    let cov = i_kh * state.cov * i_kh.transpose() + gain * r * gain.transpose();
    let cov = (cov + cov.transpose()) * 0.5;
    KalmanState { mean, cov }
}
