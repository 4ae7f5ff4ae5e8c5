//! Builds forecaster finetuning pairs by matching predicted (tracked) pasts
//! to ground-truth agents.
//!
//! Two assignment rules (one-to-one, many-to-one) times two distance rules
//! (current frame only, all shared past frames) give the four strategies
//! compared in the finetuning ablation.

use serde::{Deserialize, Serialize};

use crate::assignment;
use crate::error::{Error, Result};
use crate::model::{point_distance, FutureTrajectory, GtAgent, PastSample, PastTrajectory, TimeBase};
use crate::tracker::Track;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Assignment {
    OneToOne,
    ManyToOne,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceMode {
    /// Distance at the current frame only.
    AtT0,
    /// Mean distance over every past frame both trajectories cover.
    AllPast,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchConfig {
    pub assignment: Assignment,
    pub distance_mode: DistanceMode,
    pub gate: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            assignment: Assignment::ManyToOne,
            distance_mode: DistanceMode::AllPast,
            gate: 2.0,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gate > 0.0) {
            return Err(Error::InvalidConfig("match gate must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub predicted_past: PastTrajectory,
    pub gt_future: FutureTrajectory,
    pub gt_agent_id: u64,
    pub match_distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub pred: usize,
    pub gt: usize,
    pub distance: f64,
}

/// Past of `track` over the window ending at `current_frame`, re-indexed so
/// the current frame is 0. `None` when the track has no point at
/// `current_frame`.
pub fn past_trajectory(track: &Track, current_frame: i64, time_base: &TimeBase) -> Option<PastTrajectory> {
    track.point_at(current_frame)?;
    let start = current_frame - time_base.past_frames() as i64;
    let samples = track
        .points
        .iter()
        .filter(|p| p.frame >= start && p.frame <= current_frame)
        .map(|p| PastSample {
            frame: p.frame - current_frame,
            x: p.bbox.cx,
            y: p.bbox.cy,
            yaw: p.bbox.yaw,
            observed: p.observed,
        })
        .collect();
    Some(PastTrajectory {
        agent_id: track.id,
        agent_class: track.agent_class,
        samples,
    })
}

/// Distance between a predicted past (relative frames) and a ground-truth
/// agent (absolute frames), `None` when they share no frame.
pub fn past_distance(
    pred: &PastTrajectory,
    gt: &GtAgent,
    current_frame: i64,
    mode: DistanceMode,
) -> Option<f64> {
    let gt_pos = |rel: i64| gt.box_at(current_frame + rel).map(|b| b.center_xy());
    match mode {
        DistanceMode::AtT0 => {
            let p = pred.position_at(0)?;
            Some(point_distance(p, gt_pos(0)?))
        }
        DistanceMode::AllPast => {
            let (sum, n) = pred
                .samples
                .iter()
                .filter(|s| s.frame <= 0)
                .filter_map(|s| gt_pos(s.frame).map(|g| point_distance([s.x, s.y], g)))
                .fold((0.0, 0usize), |(acc, n), d| (acc + d, n + 1));
            (n > 0).then(|| sum / n as f64)
        }
    }
}

fn gated_distances(
    preds: &[PastTrajectory],
    gts: &[GtAgent],
    current_frame: i64,
    config: &MatchConfig,
) -> Vec<Vec<Option<f64>>> {
    preds
        .iter()
        .map(|p| {
            gts.iter()
                .map(|g| {
                    if g.agent_class != p.agent_class {
                        return None;
                    }
                    past_distance(p, g, current_frame, config.distance_mode)
                        .filter(|&d| d <= config.gate)
                })
                .collect()
        })
        .collect()
}

/// Maximum-cardinality, then minimum-total-distance, one-to-one matching.
pub fn match_one_to_one(
    preds: &[PastTrajectory],
    gts: &[GtAgent],
    current_frame: i64,
    config: &MatchConfig,
) -> Vec<Match> {
    let cost = gated_distances(preds, gts, current_frame, config);
    assignment::max_cardinality_min_cost(&cost)
        .into_iter()
        .map(|(pred, gt)| Match {
            pred,
            gt,
            distance: cost[pred][gt].expect("admissible pair"),
        })
        .collect()
}

/// Each prediction goes to its nearest same-class ground truth within the
/// gate; ties go to the lowest gt id.
pub fn match_many_to_one(
    preds: &[PastTrajectory],
    gts: &[GtAgent],
    current_frame: i64,
    config: &MatchConfig,
) -> Vec<Match> {
    let cost = gated_distances(preds, gts, current_frame, config);
    cost.iter()
        .enumerate()
        .filter_map(|(pred, row)| {
            row.iter()
                .enumerate()
                .filter_map(|(gt, d)| d.map(|d| (gt, d)))
                .min_by(|a, b| a.1.total_cmp(&b.1).then(gts[a.0].id.cmp(&gts[b.0].id)))
                .map(|(gt, distance)| Match { pred, gt, distance })
        })
        .collect()
}

pub fn match_predictions(
    preds: &[PastTrajectory],
    gts: &[GtAgent],
    current_frame: i64,
    config: &MatchConfig,
) -> Vec<Match> {
    match config.assignment {
        Assignment::OneToOne => match_one_to_one(preds, gts, current_frame, config),
        Assignment::ManyToOne => match_many_to_one(preds, gts, current_frame, config),
    }
}

/// Supervision pairs for one inference frame. Tracks without a point at
/// `current_frame` are ignored; matches whose ground truth does not cover
/// the full horizon are dropped.
pub fn build_training_pairs(
    tracks: &[Track],
    gts: &[GtAgent],
    current_frame: i64,
    config: &MatchConfig,
    time_base: &TimeBase,
) -> Vec<TrainingPair> {
    let preds: Vec<PastTrajectory> = tracks
        .iter()
        .filter_map(|t| past_trajectory(t, current_frame, time_base))
        .collect();
    match_predictions(&preds, gts, current_frame, config)
        .into_iter()
        .filter_map(|m| {
            let gt = &gts[m.gt];
            let gt_future = gt.future_from(current_frame, time_base.horizon_steps)?;
            Some(TrainingPair {
                predicted_past: preds[m.pred].clone(),
                gt_future,
                gt_agent_id: gt.id,
                match_distance: m.distance,
            })
        })
        .collect()
}
