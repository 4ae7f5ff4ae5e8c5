//! Forecasting interface, a constant-velocity multi-modal baseline, and the
//! static-mode post-processing applied to every forecaster's output.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ForecastMode, ForecastSet, FutureTrajectory, GtAgent, PastTrajectory, point_distance};

/// Anything that turns an agent's past into K scored futures.
pub trait Forecaster {
    fn forecast(&self, past: &PastTrajectory) -> ForecastSet;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForecastConfig {
    pub k_modes: usize,
    pub horizon_steps: usize,
    /// Heading offsets (radians) of modes 1..K relative to mode 0.
    pub fan_angles: Vec<f64>,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        ForecastConfig {
            k_modes: 5,
            horizon_steps: 30,
            fan_angles: vec![0.2, -0.2, 0.4, -0.4],
        }
    }
}

impl ForecastConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_modes < 2 {
            return Err(Error::InvalidConfig("k_modes must be >= 2".into()));
        }
        if self.fan_angles.len() != self.k_modes - 1 {
            return Err(Error::InvalidConfig(format!(
                "expected {} fan angles, got {}",
                self.k_modes - 1,
                self.fan_angles.len()
            )));
        }
        if self.horizon_steps == 0 {
            return Err(Error::InvalidConfig("horizon_steps must be >= 1".into()));
        }
        Ok(())
    }

    /// 0.5 for the primary mode, the other half shared equally.
    pub fn mode_scores(&self) -> Vec<f64> {
        let rest = 0.5 / (self.k_modes - 1) as f64;
        std::iter::once(0.5)
            .chain(std::iter::repeat_n(rest, self.k_modes - 1))
            .collect()
    }
}

/// Least-squares velocity (m per frame) over the past samples; zero for a
/// single sample.
pub fn fit_velocity(past: &PastTrajectory) -> [f64; 2] {
    let n = past.samples.len() as f64;
    if past.samples.len() < 2 {
        return [0.0, 0.0];
    }
    let t_mean = past.samples.iter().map(|s| s.frame as f64).sum::<f64>() / n;
    let x_mean = past.samples.iter().map(|s| s.x).sum::<f64>() / n;
    let y_mean = past.samples.iter().map(|s| s.y).sum::<f64>() / n;
    let (mut sxx, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for s in &past.samples {
        let dt = s.frame as f64 - t_mean;
        sxx += dt * dt;
        sx += dt * (s.x - x_mean);
        sy += dt * (s.y - y_mean);
    }
    [sx / sxx, sy / sxx]
}

fn rotate(v: [f64; 2], angle: f64) -> [f64; 2] {
    let (s, c) = angle.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

fn extrapolate(anchor: [f64; 2], velocity: [f64; 2], horizon: usize) -> FutureTrajectory {
    FutureTrajectory(
        (1..=horizon)
            .map(|k| {
                let k = k as f64;
                [anchor[0] + velocity[0] * k, anchor[1] + velocity[1] * k]
            })
            .collect(),
    )
}

/// Constant-velocity baseline: mode 0 extrapolates the fitted velocity from
/// the current position, the other modes fan the velocity heading.
#[derive(Debug, Clone, Default)]
pub struct ConstantVelocity {
    pub config: ForecastConfig,
}

impl ConstantVelocity {
    pub fn new(config: ForecastConfig) -> Result<Self> {
        config.validate()?;
        Ok(ConstantVelocity { config })
    }
}

pub fn forecast_cv(past: &PastTrajectory, config: &ForecastConfig) -> ForecastSet {
    let anchor = past.current_position();
    let v = fit_velocity(past);
    let headings = std::iter::once(0.0).chain(config.fan_angles.iter().copied());
    let modes = headings
        .zip(config.mode_scores())
        .map(|(angle, score)| ForecastMode {
            trajectory: extrapolate(anchor, rotate(v, angle), config.horizon_steps),
            score,
        })
        .collect();
    ForecastSet { modes }
}

impl Forecaster for ConstantVelocity {
    fn forecast(&self, past: &PastTrajectory) -> ForecastSet {
        forecast_cv(past, &self.config)
    }
}

/// Returns the true future of the nearest same-class ground-truth agent with
/// score 1. Only meaningful for calibrating metrics: it reads the answer.
#[derive(Debug, Clone)]
pub struct OracleForecaster<'a> {
    pub gts: &'a [GtAgent],
    pub current_frame: i64,
    pub horizon_steps: usize,
}

impl Forecaster for OracleForecaster<'_> {
    fn forecast(&self, past: &PastTrajectory) -> ForecastSet {
        let here = past.current_position();
        let best = self
            .gts
            .iter()
            .filter(|g| g.agent_class == past.agent_class)
            .filter_map(|g| {
                let b = g.box_at(self.current_frame)?;
                Some((point_distance(here, b.center_xy()), g))
            })
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.id.cmp(&b.1.id)));
        let trajectory = best
            .and_then(|(_, g)| g.future_from(self.current_frame, self.horizon_steps))
            .unwrap_or_else(|| FutureTrajectory::stationary(here, self.horizon_steps));
        ForecastSet {
            modes: vec![ForecastMode { trajectory, score: 1.0 }],
        }
    }
}

fn is_static_at(traj: &FutureTrajectory, at: [f64; 2]) -> bool {
    traj.waypoints().iter().all(|w| *w == at)
}

/// Index of the least probable mode; ties go to the later mode.
fn least_probable(set: &ForecastSet) -> Option<usize> {
    set.modes
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.score.total_cmp(&b.1.score).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
}

/// Injects a stationary future anchored at the current position.
///
/// Always-static classes get a single static mode with score 1. Otherwise
/// the least probable mode is replaced by the static future with score 1,
/// unless such a mode is already present.
pub fn post_process(forecasts: &ForecastSet, past: &PastTrajectory) -> ForecastSet {
    let anchor = past.current_position();
    let horizon = forecasts
        .modes
        .first()
        .map(|m| m.trajectory.len())
        .unwrap_or(0);
    let static_mode = ForecastMode {
        trajectory: FutureTrajectory::stationary(anchor, horizon),
        score: 1.0,
    };
    if past.agent_class.is_always_static() {
        return ForecastSet {
            modes: vec![static_mode],
        };
    }
    if forecasts
        .modes
        .iter()
        .any(|m| m.score == 1.0 && is_static_at(&m.trajectory, anchor))
    {
        return forecasts.clone();
    }
    let mut out = forecasts.clone();
    match least_probable(&out) {
        Some(i) => out.modes[i] = static_mode,
        None => out.modes.push(static_mode),
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AgentClass, Box3D, PastSample};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn past(class: AgentClass, pts: &[(i64, f64, f64)]) -> PastTrajectory {
        PastTrajectory {
            agent_id: 1,
            agent_class: class,
            samples: pts
                .iter()
                .map(|&(frame, x, y)| PastSample { frame, x, y, yaw: 0.0, observed: true })
                .collect(),
        }
    }

    fn cfg(horizon: usize) -> ForecastConfig {
        ForecastConfig { horizon_steps: horizon, ..ForecastConfig::default() }
    }

    #[test]
    fn static_past_gives_static_modes() {
        let p = past(AgentClass::RegularVehicle, &[(-2, 3.0, 4.0), (-1, 3.0, 4.0), (0, 3.0, 4.0)]);
        let f = forecast_cv(&p, &cfg(10));
        assert_eq!(f.k(), 5);
        for m in &f.modes {
            assert!(m.trajectory.waypoints().iter().all(|w| *w == [3.0, 4.0]));
        }
    }

    #[test]
    fn linear_extrapolation() {
        let p = past(AgentClass::RegularVehicle, &[(-2, -2.0, 0.0), (-1, -1.0, 0.0), (0, 0.0, 0.0)]);
        let f = forecast_cv(&p, &cfg(3));
        assert_eq!(f.modes[0].trajectory.waypoints(), &[[1.0, 0.0], [2.0, 0.0], [3.0, 0.0]]);
    }

    #[test]
    fn fanned_mode_rotates_velocity() {
        let c = ForecastConfig {
            k_modes: 2,
            horizon_steps: 4,
            fan_angles: vec![PI / 2.0],
        };
        let p = past(AgentClass::RegularVehicle, &[(-1, 0.0, 0.0), (0, 1.0, 0.0)]);
        let f = forecast_cv(&p, &c);
        let wp = f.modes[1].trajectory.waypoints();
        assert!((wp[0][0] - 1.0).abs() < 1e-12 && (wp[0][1] - 1.0).abs() < 1e-12);
        assert!((wp[3][0] - 1.0).abs() < 1e-12 && (wp[3][1] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn single_sample_is_static() {
        let p = past(AgentClass::Pedestrian, &[(0, 1.0, 2.0)]);
        assert_eq!(fit_velocity(&p), [0.0, 0.0]);
    }

    #[test]
    fn scores_and_config_validation() {
        assert_eq!(ForecastConfig::default().mode_scores(), vec![0.5, 0.125, 0.125, 0.125, 0.125]);
        let bad = ForecastConfig { k_modes: 1, fan_angles: vec![], ..ForecastConfig::default() };
        assert!(bad.validate().is_err());
        let bad = ForecastConfig { fan_angles: vec![0.1], ..ForecastConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn always_static_class_collapses() {
        let p = past(AgentClass::Bollard, &[(-1, 0.0, 0.0), (0, 1.0, 0.0)]);
        let f = forecast_cv(&p, &cfg(6));
        let out = post_process(&f, &p);
        assert_eq!(out.k(), 1);
        assert_eq!(out.modes[0].score, 1.0);
        assert!(out.modes[0].trajectory.waypoints().iter().all(|w| *w == [1.0, 0.0]));
        assert_eq!(out.modes[0].trajectory.len(), 6);
    }

    fn mode(pts: Vec<[f64; 2]>, score: f64) -> ForecastMode {
        ForecastMode { trajectory: FutureTrajectory(pts), score }
    }

    #[test]
    fn least_probable_mode_replaced() {
        let p = past(AgentClass::RegularVehicle, &[(0, 0.0, 0.0)]);
        let set = ForecastSet {
            modes: vec![
                mode(vec![[1.0, 0.0], [2.0, 0.0]], 0.5),
                mode(vec![[1.0, 1.0], [2.0, 2.0]], 0.2),
                mode(vec![[0.0, 1.0], [0.0, 2.0]], 0.1),
            ],
        };
        let out = post_process(&set, &p);
        assert_eq!(out.modes[0], set.modes[0]);
        assert_eq!(out.modes[1], set.modes[1]);
        assert_eq!(out.modes[2], mode(vec![[0.0, 0.0], [0.0, 0.0]], 1.0));
    }

    #[test]
    fn already_static_least_mode_only_rescored() {
        let p = past(AgentClass::RegularVehicle, &[(0, 2.0, 2.0)]);
        let set = ForecastSet {
            modes: vec![mode(vec![[3.0, 2.0]], 0.7), mode(vec![[2.0, 2.0]], 0.3)],
        };
        let out = post_process(&set, &p);
        assert_eq!(out.modes[1], mode(vec![[2.0, 2.0]], 1.0));
        assert_eq!(out.modes[0], set.modes[0]);
    }

    #[test]
    fn oracle_returns_true_future() {
        let agent = GtAgent {
            id: 4,
            agent_class: AgentClass::Pedestrian,
            samples: (0..10)
                .map(|f| (f, Box3D::new([f as f64, 0.0, 0.0], [0.7, 0.7, 1.7], 0.0).unwrap()))
                .collect(),
        };
        let gts = [agent];
        let oracle = OracleForecaster { gts: &gts, current_frame: 5, horizon_steps: 3 };
        let p = past(AgentClass::Pedestrian, &[(0, 5.1, 0.0)]);
        let f = oracle.forecast(&p);
        assert_eq!(f.modes[0].trajectory.waypoints(), &[[6.0, 0.0], [7.0, 0.0], [8.0, 0.0]]);
        assert_eq!(f.modes[0].score, 1.0);
    }

    proptest! {
        #[test]
        fn post_process_invariants(
            vx in -2.0f64..2.0, vy in -2.0f64..2.0, n in 2usize..8, class_idx in 0usize..26,
        ) {
            let class = AgentClass::ALL[class_idx];
            let pts: Vec<(i64, f64, f64)> = (0..n as i64).map(|i| {
                let f = i - n as i64 + 1;
                (f, vx * f as f64, vy * f as f64)
            }).collect();
            let p = past(class, &pts);
            let f = forecast_cv(&p, &cfg(12));
            prop_assert!(f.modes.iter().all(|m| m.trajectory.len() == 12));
            let once = post_process(&f, &p);
            let anchor = p.current_position();
            prop_assert!(once.modes.iter().any(|m| m.score == 1.0 && is_static_at(&m.trajectory, anchor)));
            prop_assert_eq!(post_process(&once, &p), once.clone());
            if class.is_always_static() {
                prop_assert_eq!(once.k(), 1);
            } else {
                prop_assert_eq!(once.k(), f.k());
            }
            // noise-free constant velocity: mode 0 endpoint is exact
            let end = f.modes[0].trajectory.endpoint().unwrap();
            prop_assert!((end[0] - vx * 12.0).abs() < 1e-9 && (end[1] - vy * 12.0).abs() < 1e-9);
        }
    }
}
