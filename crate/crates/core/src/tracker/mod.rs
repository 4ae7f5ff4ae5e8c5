//! Per-class online 3D multi-object tracking.
//!
//! Tracks are Kalman-predicted every frame and associated one-to-one with
//! same-class detections on `1 − IoU`. A track missing its detection goes
//! inactive and keeps being propagated for at most `max_inactive_frames`
//! frames before it is terminated.

mod interpolate;
mod iou;
mod kalman;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::assignment;
use crate::error::{Error, Result};
use crate::model::{AgentClass, Box3D, Detection};

pub use interpolate::{fill_interior_gaps, interpolate_gaps};
pub use iou::{bev_intersection_area, iou3d};
pub use kalman::{kf_predict, kf_update, KalmanParams, KalmanState, StateCov, StateVec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    pub iou_gate: f64,
    pub max_inactive_frames: u32,
    pub kalman: KalmanParams,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            iou_gate: 0.1,
            max_inactive_frames: 3,
            kalman: KalmanParams::default(),
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.iou_gate) {
            return Err(Error::InvalidConfig("iou_gate must lie in [0, 1]".into()));
        }
        let k = &self.kalman;
        if !(k.measurement_noise > 0.0) || !(k.process_noise >= 0.0) || !(k.initial_velocity_var > 0.0) {
            return Err(Error::InvalidConfig("kalman noise parameters must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrackState {
    Active,
    Inactive { misses: u32 },
    Terminated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    pub frame: i64,
    pub bbox: Box3D,
    /// False for Kalman-propagated or interpolated points.
    pub observed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: u64,
    pub agent_class: AgentClass,
    pub points: Vec<TrackPoint>,
    pub kalman: KalmanState,
    pub state: TrackState,
    /// Running mean of the associated detection scores.
    pub score: f64,
    pub hits: u32,
}

impl Track {
    pub fn is_live(&self) -> bool {
        self.state != TrackState::Terminated
    }

    pub fn last_frame(&self) -> Option<i64> {
        self.points.last().map(|p| p.frame)
    }

    pub fn point_at(&self, frame: i64) -> Option<&TrackPoint> {
        let first = self.points.first()?.frame;
        let idx = usize::try_from(frame - first).ok()?;
        self.points.get(idx).filter(|p| p.frame == frame)
    }

    /// The points a tracker reports: observed ones only.
    pub fn observed_points(&self) -> impl Iterator<Item = &TrackPoint> {
        self.points.iter().filter(|p| p.observed)
    }
}

/// One-to-one association maximizing total IoU over pairs with
/// `IoU >= gate` (and `IoU > 0`). Returns `(track, detection)` index pairs.
pub fn associate(predicted: &[Box3D], detections: &[Box3D], gate: f64) -> Result<Vec<(usize, usize)>> {
    let cost = association_costs(predicted, detections, gate)?;
    Ok(assignment::min_cost_with_rejection(&cost, 1.0))
}

/// `1 − IoU` for admissible pairs, `None` otherwise.
pub fn association_costs(
    predicted: &[Box3D],
    detections: &[Box3D],
    gate: f64,
) -> Result<Vec<Vec<Option<f64>>>> {
    predicted
        .iter()
        .map(|t| {
            detections
                .iter()
                .map(|d| {
                    let iou = iou3d(t, d)?;
                    Ok((iou >= gate && iou > 0.0).then_some(1.0 - iou))
                })
                .collect()
        })
        .collect()
}

/// Stateful tracker for one scene.
#[derive(Debug, Clone)]
pub struct Tracker {
    config: TrackerConfig,
    next_id: u64,
    last_frame: Option<i64>,
    live: Vec<Track>,
    finished: Vec<Track>,
}

impl Tracker {
    pub fn new(config: TrackerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Tracker {
            config,
            next_id: 1,
            last_frame: None,
            live: Vec::new(),
            finished: Vec::new(),
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn live_tracks(&self) -> &[Track] {
        &self.live
    }

    pub fn last_frame(&self) -> Option<i64> {
        self.last_frame
    }

    /// Consumes the tracker, returning every track it ever created sorted by id.
    pub fn finish(self) -> Vec<Track> {
        let mut all = self.finished;
        all.extend(self.live);
        all.sort_by_key(|t| t.id);
        all
    }

    /// Advances by one frame. `detections` must all carry `frame`, and
    /// `frame` must follow the previous step directly.
    pub fn step(&mut self, frame: i64, detections: &[Detection]) -> Result<()> {
        if let Some(prev) = self.last_frame {
            if frame != prev + 1 {
                return Err(Error::FrameDiscontinuity {
                    expected: prev + 1,
                    got: frame,
                });
            }
        }
        if let Some(d) = detections.iter().find(|d| d.frame != frame) {
            return Err(Error::FrameDiscontinuity {
                expected: frame,
                got: d.frame,
            });
        }
        for d in detections {
            d.validate()?;
        }
        self.last_frame = Some(frame);

        let params = self.config.kalman;
        for t in &mut self.live {
            t.kalman = kf_predict(&t.kalman, &params);
        }

        let mut dets_by_class: BTreeMap<AgentClass, Vec<&Detection>> = BTreeMap::new();
        for d in detections {
            dets_by_class.entry(d.agent_class).or_default().push(d);
        }
        let mut track_idx_by_class: BTreeMap<AgentClass, Vec<usize>> = BTreeMap::new();
        for (i, t) in self.live.iter().enumerate() {
            track_idx_by_class.entry(t.agent_class).or_default().push(i);
        }

        let mut matched_track = vec![false; self.live.len()];
        let mut births: Vec<Detection> = Vec::new();
        for (class, dets) in &dets_by_class {
            let tracks = track_idx_by_class.get(class).map(Vec::as_slice).unwrap_or(&[]);
            let predicted: Vec<Box3D> = tracks.iter().map(|&i| self.live[i].kalman.to_box()).collect();
            let det_boxes: Vec<Box3D> = dets.iter().map(|d| d.bbox).collect();
            let pairs = associate(&predicted, &det_boxes, self.config.iou_gate)?;

            let mut det_used = vec![false; dets.len()];
            for (ti, di) in pairs {
                let track = &mut self.live[tracks[ti]];
                let det = dets[di];
                track.kalman = kf_update(&track.kalman, &det.bbox, &params);
                track.points.push(TrackPoint {
                    frame,
                    bbox: det.bbox,
                    observed: true,
                });
                track.hits += 1;
                track.score += (det.score - track.score) / f64::from(track.hits);
                track.state = TrackState::Active;
                matched_track[tracks[ti]] = true;
                det_used[di] = true;
            }
            births.extend(dets.iter().zip(&det_used).filter(|(_, u)| !**u).map(|(d, _)| **d));
        }

        let max_inactive = self.config.max_inactive_frames;
        for (t, matched) in self.live.iter_mut().zip(&matched_track) {
            if *matched {
                continue;
            }
            let misses = match t.state {
                TrackState::Inactive { misses } => misses + 1,
                _ => 1,
            };
            if misses > max_inactive {
                t.state = TrackState::Terminated;
            } else {
                t.state = TrackState::Inactive { misses };
                t.points.push(TrackPoint {
                    frame,
                    bbox: t.kalman.to_box(),
                    observed: false,
                });
            }
        }

        for det in births {
            let id = self.next_id;
            self.next_id += 1;
            self.live.push(Track {
                id,
                agent_class: det.agent_class,
                points: vec![TrackPoint {
                    frame,
                    bbox: det.bbox,
                    observed: true,
                }],
                kalman: KalmanState::from_box(&det.bbox, &params),
                state: TrackState::Active,
                score: det.score,
                hits: 1,
            });
        }

        let (done, live): (Vec<_>, Vec<_>) = std::mem::take(&mut self.live)
            .into_iter()
            .partition(|t| t.state == TrackState::Terminated);
        self.live = live;
        self.finished.extend(done);
        Ok(())
    }
}

/// Runs a fresh tracker over consecutive frames `first..=last`, where
/// `frames[i]` holds the detections of frame `first + i`.
pub fn track_sequence(first: i64, frames: &[Vec<Detection>], config: &TrackerConfig) -> Result<Vec<Track>> {
    let mut tracker = Tracker::new(*config)?;
    for (i, dets) in frames.iter().enumerate() {
        tracker.step(first + i as i64, dets)?;
    }
    Ok(tracker.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(frame: i64, x: f64, y: f64) -> Detection {
        Detection {
            bbox: Box3D::new([x, y, 0.75], [4.0, 2.0, 1.5], 0.0).unwrap(),
            agent_class: AgentClass::RegularVehicle,
            score: 0.9,
            frame,
            source_model: None,
        }
    }

    #[test]
    fn cold_start_creates_tracks() {
        let mut t = Tracker::new(TrackerConfig::default()).unwrap();
        t.step(0, &[det(0, 0.0, 0.0), det(0, 20.0, 0.0)]).unwrap();
        assert_eq!(t.live_tracks().len(), 2);
        let ids: Vec<u64> = t.live_tracks().iter().map(|t| t.id).collect();
        assert_eq!(ids, vec![1, 2]);
    }

    #[test]
    fn low_iou_does_not_match() {
        let mut t = Tracker::new(TrackerConfig::default()).unwrap();
        t.step(0, &[det(0, 0.0, 0.0)]).unwrap();
        // 4x2 boxes shifted 3.65 m along x: overlap 0.35/7.65 ≈ 0.046
        let shifted = det(1, 3.65, 0.0);
        let iou = iou3d(&det(0, 0.0, 0.0).bbox, &shifted.bbox).unwrap();
        assert!(iou < 0.1 && iou > 0.0);
        t.step(1, &[shifted]).unwrap();
        let live = t.live_tracks();
        assert_eq!(live.len(), 2);
        assert_eq!(live[0].state, TrackState::Inactive { misses: 1 });
        assert_eq!(live[1].id, 2);
        assert_eq!(live[1].state, TrackState::Active);
    }

    #[test]
    fn terminates_after_three_inactive_frames() {
        let mut t = Tracker::new(TrackerConfig::default()).unwrap();
        t.step(0, &[det(0, 0.0, 0.0)]).unwrap();
        for f in 1..=3 {
            t.step(f, &[]).unwrap();
            assert_eq!(t.live_tracks()[0].state, TrackState::Inactive { misses: f as u32 });
        }
        t.step(4, &[]).unwrap();
        assert!(t.live_tracks().is_empty());
        let all = t.finish();
        assert_eq!(all[0].state, TrackState::Terminated);
        assert_eq!(all[0].last_frame(), Some(3));
    }

    #[test]
    fn reacquires_inactive_track() {
        let mut t = Tracker::new(TrackerConfig::default()).unwrap();
        t.step(0, &[det(0, 0.0, 0.0)]).unwrap();
        t.step(1, &[det(1, 0.5, 0.0)]).unwrap();
        t.step(2, &[]).unwrap();
        t.step(3, &[det(3, 1.5, 0.0)]).unwrap();
        let tracks = t.finish();
        assert_eq!(tracks.len(), 1);
        let flags: Vec<bool> = tracks[0].points.iter().map(|p| p.observed).collect();
        assert_eq!(flags, vec![true, true, false, true]);
        assert_eq!(tracks[0].state, TrackState::Active);
    }

    #[test]
    fn frame_gap_rejected() {
        let mut t = Tracker::new(TrackerConfig::default()).unwrap();
        t.step(0, &[]).unwrap();
        assert_eq!(
            t.step(2, &[]),
            Err(Error::FrameDiscontinuity { expected: 1, got: 2 })
        );
        assert!(t.step(1, &[det(5, 0.0, 0.0)]).is_err());
    }

    #[test]
    fn classes_are_tracked_separately() {
        let mut t = Tracker::new(TrackerConfig::default()).unwrap();
        t.step(0, &[det(0, 0.0, 0.0)]).unwrap();
        let ped = Detection {
            agent_class: AgentClass::Pedestrian,
            ..det(1, 0.0, 0.0)
        };
        t.step(1, &[ped]).unwrap();
        assert_eq!(t.live_tracks().len(), 2);
        assert_eq!(t.live_tracks()[0].state, TrackState::Inactive { misses: 1 });
    }

    #[test]
    fn noiseless_constant_velocity_keeps_one_id() {
        let frames: Vec<Vec<Detection>> = (0..20)
            .map(|f| vec![det(f, 1.2 * f as f64, 0.4 * f as f64)])
            .collect();
        let tracks = track_sequence(0, &frames, &TrackerConfig::default()).unwrap();
        assert_eq!(tracks.len(), 1);
        assert_eq!(tracks[0].points.len(), 20);
        assert!(tracks[0].points.iter().all(|p| p.observed));
    }

    #[test]
    fn running_score_is_mean() {
        let mut t = Tracker::new(TrackerConfig::default()).unwrap();
        t.step(0, &[Detection { score: 0.2, ..det(0, 0.0, 0.0) }]).unwrap();
        t.step(1, &[Detection { score: 0.6, ..det(1, 0.0, 0.0) }]).unwrap();
        assert!((t.live_tracks()[0].score - 0.4).abs() < 1e-12);
    }
}
