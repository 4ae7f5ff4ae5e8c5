//! Forecasting and tracking evaluation.

mod forecasting;
mod tracking;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use forecasting::{
    ade, classify_trajectory, displacement_errors, displacement_summary, fde, forecast_ap,
    interpolated_ap, mapf, ForecastPrediction, ForecastTarget, MapfReport, TrajectoryType,
};
pub use tracking::{amota, hota, hota_by_class, mota, ClearCounts, HotaResult, MotaResult, TrackedObject};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    /// Center-distance gate for tracking matches and ADE/FDE association.
    pub match_threshold_m: f64,
    pub ap_recall_samples: usize,
    /// Distance thresholds averaged in mAP_f.
    pub ap_thresholds_m: Vec<f64>,
    pub hota_alphas: Vec<f64>,
    pub amota_recalls: Vec<f64>,
    pub eval_range_m: f64,
    pub static_disp_m: f64,
    pub linear_tol_m: f64,
    /// Accept a forecast when any mode hits the endpoint; otherwise only the
    /// top-scored mode is checked.
    pub any_of_k: bool,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            match_threshold_m: 2.0,
            ap_recall_samples: 101,
            ap_thresholds_m: vec![0.5, 1.0, 2.0, 4.0],
            hota_alphas: (1..=19).map(|i| i as f64 / 20.0).collect(),
            amota_recalls: (1..=40).map(|i| i as f64 / 40.0).collect(),
            eval_range_m: 50.0,
            static_disp_m: 1.0,
            linear_tol_m: 2.0,
            any_of_k: true,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.match_threshold_m,
            self.eval_range_m,
            self.static_disp_m,
            self.linear_tol_m,
        ];
        if positive.iter().any(|&v| !(v > 0.0))
            || self.ap_thresholds_m.iter().any(|&v| !(v > 0.0))
        {
            return Err(Error::InvalidConfig("metric thresholds must be > 0".into()));
        }
        if self.ap_recall_samples < 2 || self.hota_alphas.is_empty() || self.amota_recalls.is_empty() {
            return Err(Error::InvalidConfig("empty metric sampling grid".into()));
        }
        Ok(())
    }
}
