//! End-to-end forecasting metrics.
//!
//! A forecast counts as a true positive only if the agent is found at the
//! current frame *and* one of its modes ends near the true final position.
//! Average precision is computed per (class, trajectory type, threshold)
//! cell; mAP_f averages the defined cells.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::MetricConfig;
use crate::error::{Error, Result};
use crate::model::{point_distance, AgentClass, ForecastSet, FutureTrajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryType {
    Static,
    Linear,
    NonLinear,
}

impl TrajectoryType {
    pub const ALL: [TrajectoryType; 3] = [
        TrajectoryType::Static,
        TrajectoryType::Linear,
        TrajectoryType::NonLinear,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TrajectoryType::Static => "static",
            TrajectoryType::Linear => "linear",
            TrajectoryType::NonLinear => "non_linear",
        }
    }
}

/// Static when the endpoint moved less than `static_disp_m`; linear when it
/// lands within `linear_tol_m` of the constant-velocity extrapolation of
/// `past_velocity` (m per frame); non-linear otherwise.
pub fn classify_trajectory(
    current: [f64; 2],
    future: &FutureTrajectory,
    past_velocity: [f64; 2],
    config: &MetricConfig,
) -> TrajectoryType {
    let Some(end) = future.endpoint() else {
        return TrajectoryType::Static;
    };
    if point_distance(current, end) < config.static_disp_m {
        return TrajectoryType::Static;
    }
    let h = future.len() as f64;
    let extrapolated = [current[0] + past_velocity[0] * h, current[1] + past_velocity[1] * h];
    if point_distance(extrapolated, end) <= config.linear_tol_m {
        TrajectoryType::Linear
    } else {
        TrajectoryType::NonLinear
    }
}

fn mode_errors(mode: &FutureTrajectory, gt: &FutureTrajectory) -> (f64, f64) {
    let dists: Vec<f64> = mode
        .waypoints()
        .iter()
        .zip(gt.waypoints())
        .map(|(p, g)| point_distance(*p, *g))
        .collect();
    let ade = dists.iter().sum::<f64>() / dists.len() as f64;
    (ade, *dists.last().expect("non-empty horizon"))
}

/// `(ade, fde)` of the mode with the smallest final displacement (ties go to
/// the smaller ADE, then the earlier mode).
pub fn displacement_errors(pred: &ForecastSet, gt: &FutureTrajectory) -> Result<(f64, f64)> {
    if gt.is_empty() {
        return Err(Error::HorizonMismatch { pred: 0, gt: 0 });
    }
    if let Some(m) = pred.modes.iter().find(|m| m.trajectory.len() != gt.len()) {
        return Err(Error::HorizonMismatch {
            pred: m.trajectory.len(),
            gt: gt.len(),
        });
    }
    pred.modes
        .iter()
        .map(|m| mode_errors(&m.trajectory, gt))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.total_cmp(&b.0)))
        .ok_or(Error::HorizonMismatch { pred: 0, gt: gt.len() })
}

pub fn ade(pred: &ForecastSet, gt: &FutureTrajectory) -> Result<f64> {
    displacement_errors(pred, gt).map(|(a, _)| a)
}

pub fn fde(pred: &ForecastSet, gt: &FutureTrajectory) -> Result<f64> {
    displacement_errors(pred, gt).map(|(_, f)| f)
}

/// One forecasted agent at one evaluation instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastPrediction {
    /// Identifies the (scene, inference frame) the prediction belongs to.
    pub instance: u64,
    pub agent_class: AgentClass,
    pub score: f64,
    pub current: [f64; 2],
    pub forecast: ForecastSet,
}

/// One ground-truth agent at one evaluation instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastTarget {
    pub instance: u64,
    pub gt_id: u64,
    pub agent_class: AgentClass,
    pub current: [f64; 2],
    pub future: FutureTrajectory,
    pub traj_type: TrajectoryType,
}

fn endpoint_hit(pred: &ForecastPrediction, target: &ForecastTarget, threshold: f64, any_of_k: bool) -> bool {
    let Some(gt_end) = target.future.endpoint() else {
        return false;
    };
    let close = |m: &crate::model::ForecastMode| {
        m.trajectory
            .endpoint()
            .is_some_and(|e| point_distance(e, gt_end) <= threshold)
    };
    if any_of_k {
        pred.forecast.modes.iter().any(close)
    } else {
        pred.forecast
            .modes
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.score.total_cmp(&b.1.score).then(b.0.cmp(&a.0)))
            .is_some_and(|(_, m)| close(m))
    }
}

/// Indices of `preds` in evaluation order: descending score, then instance,
/// then input position.
pub(crate) fn ranking(preds: &[&ForecastPrediction]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| {
        preds[b]
            .score
            .total_cmp(&preds[a].score)
            .then(preds[a].instance.cmp(&preds[b].instance))
            .then(a.cmp(&b))
    });
    order
}

/// 101-point (by default) interpolated area under the precision/recall
/// curve of a ranked list of TP flags.
pub fn interpolated_ap(tp_flags: &[bool], n_gt: usize, recall_samples: usize) -> Option<f64> {
    if n_gt == 0 {
        return None;
    }
    let mut precision = Vec::with_capacity(tp_flags.len());
    let mut recall = Vec::with_capacity(tp_flags.len());
    let mut tp = 0usize;
    for (k, &hit) in tp_flags.iter().enumerate() {
        tp += usize::from(hit);
        precision.push(tp as f64 / (k + 1) as f64);
        recall.push(tp as f64 / n_gt as f64);
    }
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    let samples = recall_samples.max(2);
    let total: f64 = (0..samples)
        .map(|i| {
            let r = i as f64 / (samples - 1) as f64;
            let k = recall.partition_point(|&x| x < r);
            precision.get(k).copied().unwrap_or(0.0)
        })
        .sum();
    Some(total / samples as f64)
}

/// Labels the ranked predictions of one class for one (type, threshold)
/// cell. `None` marks a prediction ignored because it belongs to a
/// ground truth of another trajectory type.
pub(crate) fn label_predictions(
    preds: &[&ForecastPrediction],
    targets: &[&ForecastTarget],
    traj_type: TrajectoryType,
    threshold: f64,
    any_of_k: bool,
) -> Vec<Option<bool>> {
    let mut claimed = vec![false; targets.len()];
    ranking(preds)
        .into_iter()
        .map(|pi| {
            let p = preds[pi];
            let candidates: Vec<(usize, f64)> = targets
                .iter()
                .enumerate()
                .filter(|(ti, t)| {
                    t.instance == p.instance && !(t.traj_type == traj_type && claimed[*ti])
                })
                .map(|(ti, t)| (ti, point_distance(p.current, t.current)))
                .filter(|&(_, d)| d <= threshold)
                .collect();
            let nearest = |it: &mut dyn Iterator<Item = &(usize, f64)>| {
                it.min_by(|a, b| a.1.total_cmp(&b.1).then(targets[a.0].gt_id.cmp(&targets[b.0].gt_id)))
                    .map(|&(ti, _)| ti)
            };
            let passing = nearest(
                &mut candidates
                    .iter()
                    .filter(|(ti, _)| endpoint_hit(p, targets[*ti], threshold, any_of_k)),
            );
            match passing {
                Some(ti) if targets[ti].traj_type == traj_type => {
                    claimed[ti] = true;
                    Some(true)
                }
                Some(_) => None,
                None => match nearest(&mut candidates.iter()) {
                    Some(ti) if targets[ti].traj_type != traj_type => None,
                    _ => Some(false),
                },
            }
        })
        .collect()
}

/// Forecasting AP for one class, trajectory type and distance threshold.
/// `targets` may hold every type of the class; only `traj_type` counts
/// toward recall. `None` when there is no such ground truth.
pub fn forecast_ap(
    preds: &[ForecastPrediction],
    targets: &[ForecastTarget],
    agent_class: AgentClass,
    traj_type: TrajectoryType,
    threshold: f64,
    config: &MetricConfig,
) -> Option<f64> {
    let preds: Vec<&ForecastPrediction> = preds.iter().filter(|p| p.agent_class == agent_class).collect();
    let targets: Vec<&ForecastTarget> = targets.iter().filter(|t| t.agent_class == agent_class).collect();
    let n_gt = targets.iter().filter(|t| t.traj_type == traj_type).count();
    let flags: Vec<bool> = label_predictions(&preds, &targets, traj_type, threshold, config.any_of_k)
        .into_iter()
        .flatten()
        .collect();
    interpolated_ap(&flags, n_gt, config.ap_recall_samples)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapfReport {
    pub overall: Option<f64>,
    pub per_type: BTreeMap<TrajectoryType, Option<f64>>,
    pub per_class: BTreeMap<AgentClass, Option<f64>>,
    /// Number of (class, type, threshold) cells averaged.
    pub cells: usize,
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn in_range(p: [f64; 2], range: f64) -> bool {
    p[0].hypot(p[1]) <= range
}

/// Mean forecasting AP over the ground-truth classes, their present
/// trajectory types, and the configured thresholds. Agents outside the
/// evaluation range are discarded first.
pub fn mapf(preds: &[ForecastPrediction], targets: &[ForecastTarget], config: &MetricConfig) -> MapfReport {
    let preds: Vec<ForecastPrediction> = preds
        .iter()
        .filter(|p| in_range(p.current, config.eval_range_m))
        .cloned()
        .collect();
    let targets: Vec<ForecastTarget> = targets
        .iter()
        .filter(|t| in_range(t.current, config.eval_range_m))
        .cloned()
        .collect();

    let mut cells: BTreeMap<(AgentClass, TrajectoryType), Vec<f64>> = BTreeMap::new();
    for t in &targets {
        cells.entry((t.agent_class, t.traj_type)).or_default();
    }
    for ((class, ty), aps) in cells.iter_mut() {
        for &thr in &config.ap_thresholds_m {
            if let Some(ap) = forecast_ap(&preds, &targets, *class, *ty, thr, config) {
                aps.push(ap);
            }
        }
    }

    let all: Vec<f64> = cells.values().flatten().copied().collect();
    let per_type = TrajectoryType::ALL
        .iter()
        .map(|&ty| {
            let v: Vec<f64> = cells
                .iter()
                .filter(|((_, t), _)| *t == ty)
                .flat_map(|(_, aps)| aps.iter().copied())
                .collect();
            (ty, mean(&v))
        })
        .collect();
    let mut per_class: BTreeMap<AgentClass, Vec<f64>> = BTreeMap::new();
    for ((class, _), aps) in &cells {
        per_class.entry(*class).or_default().extend(aps);
    }
    MapfReport {
        overall: mean(&all),
        per_type,
        per_class: per_class.into_iter().map(|(c, v)| (c, mean(&v))).collect(),
        cells: all.len(),
    }
}

/// Mean ADE/FDE over predictions matched to a ground truth at the current
/// frame (greedy by score, nearest unclaimed same-class target within
/// `match_threshold_m`).
pub fn displacement_summary(
    preds: &[ForecastPrediction],
    targets: &[ForecastTarget],
    config: &MetricConfig,
) -> Result<(Option<f64>, Option<f64>, usize)> {
    let preds: Vec<&ForecastPrediction> = preds
        .iter()
        .filter(|p| in_range(p.current, config.eval_range_m))
        .collect();
    let targets: Vec<&ForecastTarget> = targets
        .iter()
        .filter(|t| in_range(t.current, config.eval_range_m))
        .collect();
    let mut claimed = vec![false; targets.len()];
    let (mut ade_sum, mut fde_sum, mut n) = (0.0, 0.0, 0usize);
    for pi in ranking(&preds) {
        let p = preds[pi];
        let best = targets
            .iter()
            .enumerate()
            .filter(|(ti, t)| !claimed[*ti] && t.instance == p.instance && t.agent_class == p.agent_class)
            .map(|(ti, t)| (ti, point_distance(p.current, t.current)))
            .filter(|&(_, d)| d <= config.match_threshold_m)
            .min_by(|a, b| a.1.total_cmp(&b.1).then(targets[a.0].gt_id.cmp(&targets[b.0].gt_id)));
        if let Some((ti, _)) = best {
            claimed[ti] = true;
            let (a, f) = displacement_errors(&p.forecast, &targets[ti].future)?;
            ade_sum += a;
            fde_sum += f;
            n += 1;
        }
    }
    if n == 0 {
        return Ok((None, None, 0));
    }
    Ok((Some(ade_sum / n as f64), Some(fde_sum / n as f64), n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ForecastMode;
    use std::f64::consts::PI;

    fn cfg() -> MetricConfig {
        MetricConfig::default()
    }

    fn line(start: [f64; 2], v: [f64; 2], h: usize) -> FutureTrajectory {
        FutureTrajectory((1..=h).map(|k| [start[0] + v[0] * k as f64, start[1] + v[1] * k as f64]).collect())
    }

    fn set(modes: Vec<FutureTrajectory>) -> ForecastSet {
        ForecastSet {
            modes: modes.into_iter().map(|trajectory| ForecastMode { trajectory, score: 0.5 }).collect(),
        }
    }

    #[test]
    fn classify_examples() {
        let c = cfg();
        let still = FutureTrajectory::stationary([1.0, 1.0], 30);
        assert_eq!(classify_trajectory([1.0, 1.0], &still, [0.0, 0.0], &c), TrajectoryType::Static);
        // 2 m/s at 10 Hz = 0.2 m/frame
        let cv = line([0.0, 0.0], [0.2, 0.0], 30);
        assert_eq!(classify_trajectory([0.0, 0.0], &cv, [0.2, 0.0], &c), TrajectoryType::Linear);

        // quarter circle of radius 10 starting at the origin heading +x,
        // turning left around (0, 10)
        let r = 10.0;
        let h = 30;
        let omega = (PI / 2.0) / h as f64;
        let v = r * omega;
        let arc = FutureTrajectory(
            (1..=h)
                .map(|k| {
                    let a = omega * k as f64;
                    [r * a.sin(), r - r * a.cos()]
                })
                .collect(),
        );
        // extrapolation ends at (v·h, 0) = (5π, 0); the arc ends at (10, 10)
        let miss = (5.0 * PI - 10.0).hypot(10.0);
        assert!(miss > 2.0);
        assert_eq!(classify_trajectory([0.0, 0.0], &arc, [v, 0.0], &c), TrajectoryType::NonLinear);
    }

    #[test]
    fn ade_fde_examples() {
        let gt = line([0.0, 0.0], [1.0, 0.5], 10);
        assert_eq!(displacement_errors(&set(vec![gt.clone()]), &gt).unwrap(), (0.0, 0.0));

        let shifted = |dy: f64| FutureTrajectory(gt.waypoints().iter().map(|p| [p[0], p[1] + dy]).collect());
        let (a, f) = displacement_errors(&set(vec![shifted(1.0)]), &gt).unwrap();
        assert!((a - 1.0).abs() < 1e-12 && (f - 1.0).abs() < 1e-12);

        let two = set(vec![shifted(2.0), shifted(0.5)]);
        assert!((ade(&two, &gt).unwrap() - 0.5).abs() < 1e-12);
        assert!((fde(&two, &gt).unwrap() - 0.5).abs() < 1e-12);

        let short = set(vec![line([0.0, 0.0], [1.0, 0.0], 5)]);
        assert_eq!(ade(&short, &gt), Err(Error::HorizonMismatch { pred: 5, gt: 10 }));
    }

    #[test]
    fn fde_is_last_step_of_selected_mode() {
        let gt = line([0.0, 0.0], [1.0, 0.0], 4);
        let a = FutureTrajectory(vec![[1.0, 3.0], [2.0, 3.0], [3.0, 3.0], [4.0, 0.1]]);
        let b = FutureTrajectory(vec![[1.0, 0.0], [2.0, 0.0], [3.0, 0.0], [4.0, 1.0]]);
        let (ade_v, fde_v) = displacement_errors(&set(vec![a, b]), &gt).unwrap();
        // mode a has the smaller endpoint error, so both numbers come from it
        assert!((fde_v - 0.1).abs() < 1e-12);
        assert!((ade_v - (9.1 / 4.0)).abs() < 1e-12);
    }

    fn target(id: u64, at: [f64; 2], end: [f64; 2], ty: TrajectoryType) -> ForecastTarget {
        let mut fut = FutureTrajectory::stationary(at, 3);
        fut.0[2] = end;
        ForecastTarget {
            instance: 0,
            gt_id: id,
            agent_class: AgentClass::RegularVehicle,
            current: at,
            future: fut,
            traj_type: ty,
        }
    }

    fn pred(score: f64, at: [f64; 2], end: [f64; 2]) -> ForecastPrediction {
        let mut fut = FutureTrajectory::stationary(at, 3);
        fut.0[2] = end;
        ForecastPrediction {
            instance: 0,
            agent_class: AgentClass::RegularVehicle,
            score,
            current: at,
            forecast: set(vec![fut]),
        }
    }

    const CAR: AgentClass = AgentClass::RegularVehicle;
    const LIN: TrajectoryType = TrajectoryType::Linear;

    #[test]
    fn oracle_and_empty_ap() {
        let ts = vec![target(1, [0.0, 0.0], [5.0, 0.0], LIN), target(2, [20.0, 0.0], [25.0, 0.0], LIN)];
        let ps = vec![pred(0.9, [0.0, 0.0], [5.0, 0.0]), pred(0.8, [20.0, 0.0], [25.0, 0.0])];
        assert_eq!(forecast_ap(&ps, &ts, CAR, LIN, 1.0, &cfg()), Some(1.0));
        assert_eq!(forecast_ap(&[], &ts, CAR, LIN, 1.0, &cfg()), Some(0.0));
        assert_eq!(forecast_ap(&ps, &ts, CAR, TrajectoryType::Static, 1.0, &cfg()), None);
    }

    #[test]
    fn endpoint_failure_two_point_curve() {
        let ts = vec![target(1, [0.0, 0.0], [5.0, 0.0], LIN), target(2, [20.0, 0.0], [25.0, 0.0], LIN)];
        // higher-scored prediction fails the endpoint check
        let ps = vec![pred(0.9, [0.0, 0.0], [9.0, 0.0]), pred(0.8, [20.0, 0.0], [25.0, 0.0])];
        // ranked flags [FP, TP]: P = (0, 1/2), R = (0, 1/2);
        // interpolated precision is 1/2 for r ≤ 0.5 (51 samples), 0 above
        let expected = 51.0 * 0.5 / 101.0;
        let ap = forecast_ap(&ps, &ts, CAR, LIN, 1.0, &cfg()).unwrap();
        assert!((ap - expected).abs() < 1e-12);
    }

    #[test]
    fn other_type_matches_are_ignored() {
        let ts = vec![
            target(1, [0.0, 0.0], [5.0, 0.0], LIN),
            target(2, [30.0, 0.0], [30.0, 0.0], TrajectoryType::Static),
        ];
        let ps = vec![pred(0.9, [30.0, 0.0], [30.0, 0.0]), pred(0.8, [0.0, 0.0], [5.0, 0.0])];
        assert_eq!(forecast_ap(&ps, &ts, CAR, LIN, 1.0, &cfg()), Some(1.0));
        assert_eq!(forecast_ap(&ps, &ts, CAR, TrajectoryType::Static, 1.0, &cfg()), Some(1.0));
        let r = mapf(&ps, &ts, &cfg());
        assert_eq!(r.overall, Some(1.0));
        assert_eq!(r.cells, 8);
        assert_eq!(r.per_type[&TrajectoryType::NonLinear], None);
    }

    #[test]
    fn interpolated_ap_edges() {
        assert_eq!(interpolated_ap(&[], 0, 101), None);
        assert_eq!(interpolated_ap(&[], 3, 101), Some(0.0));
        assert_eq!(interpolated_ap(&[true, true], 2, 101), Some(1.0));
    }

    #[test]
    fn all_static_forecasts_fail_non_linear() {
        let ts = vec![target(1, [0.0, 0.0], [8.0, 6.0], TrajectoryType::NonLinear)];
        let ps = vec![pred(0.9, [0.0, 0.0], [0.0, 0.0])];
        let r = mapf(&ps, &ts, &cfg());
        assert_eq!(r.per_type[&TrajectoryType::NonLinear], Some(0.0));
    }

    #[test]
    fn out_of_range_agents_dropped() {
        let ts = vec![target(1, [60.0, 0.0], [60.0, 0.0], TrajectoryType::Static)];
        let r = mapf(&[], &ts, &cfg());
        assert_eq!(r.overall, None);
        assert_eq!(r.cells, 0);
    }

    #[test]
    fn summary_over_matched_agents() {
        let ts = vec![target(1, [0.0, 0.0], [5.0, 0.0], LIN)];
        let ps = vec![pred(0.9, [0.5, 0.0], [5.0, 1.0]), pred(0.1, [40.0, 0.0], [40.0, 0.0])];
        let (a, f, n) = displacement_summary(&ps, &ts, &cfg()).unwrap();
        assert_eq!(n, 1);
        assert!((f.unwrap() - 1.0).abs() < 1e-12);
        assert!((a.unwrap() - (0.5 + 0.5 + 1.0) / 3.0).abs() < 1e-12);
    }
}
