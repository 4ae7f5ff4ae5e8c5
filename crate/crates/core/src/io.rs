//! Line-oriented scene files: one JSON record per line, header first.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::ForecastPrediction;
use crate::model::{AgentClass, Box3D, Detection, ForecastMode, ForecastSet, FutureTrajectory, GtAgent, PastSample};
use crate::sim::Scene;
use crate::supervision::TrainingPair;
use crate::tracker::{KalmanParams, KalmanState, Track, TrackPoint, TrackState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxFields {
    pub cx: f64,
    pub cy: f64,
    pub cz: f64,
    pub yaw: f64,
    pub l: f64,
    pub w: f64,
    pub h: f64,
}

impl From<&Box3D> for BoxFields {
    fn from(b: &Box3D) -> Self {
        BoxFields {
            cx: b.cx,
            cy: b.cy,
            cz: b.cz,
            yaw: b.yaw,
            l: b.length,
            w: b.width,
            h: b.height,
        }
    }
}

impl BoxFields {
    pub fn to_box(&self) -> Box3D {
        Box3D {
            cx: self.cx,
            cy: self.cy,
            cz: self.cz,
            length: self.l,
            width: self.w,
            height: self.h,
            yaw: self.yaw,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub scene_id: String,
    pub hz: f64,
    pub frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtRecord {
    pub frame: i64,
    pub id: u64,
    pub class: AgentClass,
    #[serde(flatten)]
    pub bbox: BoxFields,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetRecord {
    pub frame: i64,
    pub class: AgentClass,
    pub score: f64,
    pub source_model: Option<u32>,
    #[serde(flatten)]
    pub bbox: BoxFields,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRecord {
    pub frame: i64,
    pub id: u64,
    pub class: AgentClass,
    pub score: f64,
    pub observed: bool,
    #[serde(flatten)]
    pub bbox: BoxFields,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub frame: i64,
    pub track_id: u64,
    pub class: AgentClass,
    pub score: f64,
    pub x: f64,
    pub y: f64,
    pub modes: Vec<ForecastMode>,
}

impl ForecastRecord {
    pub fn to_prediction(&self) -> ForecastPrediction {
        ForecastPrediction {
            instance: self.frame as u64,
            agent_class: self.class,
            score: self.score,
            current: [self.x, self.y],
            forecast: ForecastSet {
                modes: self.modes.clone(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub frame: i64,
    pub track_id: u64,
    pub gt_id: u64,
    pub class: AgentClass,
    pub distance: f64,
    pub past: Vec<PastSample>,
    pub future: FutureTrajectory,
}

impl PairRecord {
    pub fn new(frame: i64, p: &TrainingPair) -> Self {
        PairRecord {
            frame,
            track_id: p.predicted_past.agent_id,
            gt_id: p.gt_agent_id,
            class: p.predicted_past.agent_class,
            distance: p.match_distance,
            past: p.predicted_past.samples.clone(),
            future: p.gt_future.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Record {
    Header(Header),
    Gt(GtRecord),
    Det(DetRecord),
    Trk(TrackRecord),
    Forecast(ForecastRecord),
    Pair(PairRecord),
}

/// All records of one scene, grouped by kind in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneFile {
    pub header: Header,
    pub gt: Vec<GtRecord>,
    pub det: Vec<DetRecord>,
    pub trk: Vec<TrackRecord>,
    pub forecast: Vec<ForecastRecord>,
    pub pair: Vec<PairRecord>,
}

fn finite(values: &[f64]) -> bool {
    values.iter().all(|v| v.is_finite())
}

fn check_box(b: &BoxFields) -> std::result::Result<(), String> {
    b.to_box().validate().map_err(|e| e.to_string())
}

fn check_score(s: f64) -> std::result::Result<(), String> {
    if (0.0..=1.0).contains(&s) {
        Ok(())
    } else {
        Err(format!("score {s} outside [0, 1]"))
    }
}

fn check_record(rec: &Record, frames: usize) -> std::result::Result<(), String> {
    let frame = match rec {
        Record::Header(_) => return Err("duplicate header".into()),
        Record::Gt(r) => {
            check_box(&r.bbox)?;
            r.frame
        }
        Record::Det(r) => {
            check_box(&r.bbox)?;
            check_score(r.score)?;
            r.frame
        }
        Record::Trk(r) => {
            check_box(&r.bbox)?;
            check_score(r.score)?;
            r.frame
        }
        Record::Forecast(r) => {
            check_score(r.score)?;
            let mut vals = vec![r.x, r.y];
            for m in &r.modes {
                check_score(m.score)?;
                vals.extend(m.trajectory.waypoints().iter().flatten());
            }
            if !finite(&vals) {
                return Err("non-finite forecast value".into());
            }
            r.frame
        }
        Record::Pair(r) => {
            let mut vals = vec![r.distance];
            vals.extend(r.past.iter().flat_map(|s| [s.x, s.y, s.yaw]));
            vals.extend(r.future.waypoints().iter().flatten());
            if !finite(&vals) {
                return Err("non-finite pair value".into());
            }
            r.frame
        }
    };
    if frame < 0 || frame as usize >= frames {
        return Err(format!("frame {frame} outside declared range 0..{frames}"));
    }
    Ok(())
}

impl SceneFile {
    pub fn new(header: Header) -> Self {
        SceneFile {
            header,
            gt: Vec::new(),
            det: Vec::new(),
            trk: Vec::new(),
            forecast: Vec::new(),
            pair: Vec::new(),
        }
    }

    /// Parses a scene file. Errors carry the 1-based line number.
    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut file: Option<SceneFile> = None;
        for (i, line) in reader.lines().enumerate() {
            let lineno = i + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse { line: lineno, message };
            let rec: Record = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
            let Some(f) = file.as_mut() else {
                let Record::Header(h) = rec else {
                    return Err(parse_err("first record must be the header".into()));
                };
                if !(h.hz > 0.0 && h.hz.is_finite()) {
                    return Err(parse_err("header hz must be positive".into()));
                }
                file = Some(SceneFile::new(h));
                continue;
            };
            check_record(&rec, f.header.frames).map_err(parse_err)?;
            match rec {
                Record::Header(_) => unreachable!("rejected above"),
                Record::Gt(r) => f.gt.push(r),
                Record::Det(r) => f.det.push(r),
                Record::Trk(r) => f.trk.push(r),
                Record::Forecast(r) => f.forecast.push(r),
                Record::Pair(r) => f.pair.push(r),
            }
        }
        file.ok_or(Error::Parse {
            line: 1,
            message: "missing header".into(),
        })
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        let mut emit = |rec: Record| -> Result<()> {
            let s = serde_json::to_string(&rec).map_err(|e| Error::Io(e.to_string()))?;
            writeln!(out, "{s}")?;
            Ok(())
        };
        emit(Record::Header(self.header.clone()))?;
        self.gt.iter().try_for_each(|r| emit(Record::Gt(r.clone())))?;
        self.det.iter().try_for_each(|r| emit(Record::Det(r.clone())))?;
        self.trk.iter().try_for_each(|r| emit(Record::Trk(r.clone())))?;
        self.forecast.iter().try_for_each(|r| emit(Record::Forecast(r.clone())))?;
        self.pair.iter().try_for_each(|r| emit(Record::Pair(r.clone())))?;
        Ok(())
    }

    pub fn to_text(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write(&mut buf)?;
        Ok(String::from_utf8(buf).expect("json is utf-8"))
    }

    pub fn from_scene(scene: &Scene) -> Self {
        let mut f = SceneFile::new(Header {
            scene_id: scene.scene_id.clone(),
            hz: scene.hz,
            frames: scene.frames,
        });
        f.set_gt_agents(&scene.agents);
        f
    }

    /// Ground truth grouped by agent id, samples in frame order.
    pub fn gt_agents(&self) -> Vec<GtAgent> {
        let mut by_id: BTreeMap<u64, GtAgent> = BTreeMap::new();
        for r in &self.gt {
            by_id
                .entry(r.id)
                .or_insert_with(|| GtAgent {
                    id: r.id,
                    agent_class: r.class,
                    samples: Vec::new(),
                })
                .samples
                .push((r.frame, r.bbox.to_box()));
        }
        let mut agents: Vec<GtAgent> = by_id.into_values().collect();
        for a in &mut agents {
            a.samples.sort_by_key(|s| s.0);
        }
        agents
    }

    pub fn set_gt_agents(&mut self, agents: &[GtAgent]) {
        let mut recs: Vec<GtRecord> = agents
            .iter()
            .flat_map(|a| {
                a.samples.iter().map(move |(f, b)| GtRecord {
                    frame: *f,
                    id: a.id,
                    class: a.agent_class,
                    bbox: b.into(),
                })
            })
            .collect();
        recs.sort_by_key(|r| (r.frame, r.id));
        self.gt = recs;
    }

    /// Detections indexed by frame, one entry per declared frame.
    pub fn detections_by_frame(&self) -> Vec<Vec<Detection>> {
        let mut frames = vec![Vec::new(); self.header.frames];
        for r in &self.det {
            frames[r.frame as usize].push(Detection {
                bbox: r.bbox.to_box(),
                agent_class: r.class,
                score: r.score,
                frame: r.frame,
                source_model: r.source_model,
            });
        }
        frames
    }

    pub fn set_detections(&mut self, frames: &[Vec<Detection>]) {
        self.det = frames
            .iter()
            .flatten()
            .map(|d| DetRecord {
                frame: d.frame,
                class: d.agent_class,
                score: d.score,
                source_model: d.source_model,
                bbox: (&d.bbox).into(),
            })
            .collect();
    }

    /// Rebuilds finished tracks. Each track's points must cover consecutive
    /// frames.
    pub fn tracks(&self, kalman: &KalmanParams) -> Result<Vec<Track>> {
        let mut by_id: BTreeMap<u64, Vec<&TrackRecord>> = BTreeMap::new();
        for r in &self.trk {
            by_id.entry(r.id).or_default().push(r);
        }
        by_id
            .into_iter()
            .map(|(id, mut recs)| {
                recs.sort_by_key(|r| r.frame);
                for w in recs.windows(2) {
                    if w[1].frame != w[0].frame + 1 {
                        return Err(Error::FrameDiscontinuity {
                            expected: w[0].frame + 1,
                            got: w[1].frame,
                        });
                    }
                }
                let points: Vec<TrackPoint> = recs
                    .iter()
                    .map(|r| TrackPoint {
                        frame: r.frame,
                        bbox: r.bbox.to_box(),
                        observed: r.observed,
                    })
                    .collect();
                let last = points.last().expect("non-empty group").bbox;
                Ok(Track {
                    id,
                    agent_class: recs[0].class,
                    kalman: KalmanState::from_box(&last, kalman),
                    state: TrackState::Terminated,
                    score: recs[0].score,
                    hits: points.iter().filter(|p| p.observed).count() as u32,
                    points,
                })
            })
            .collect()
    }

    pub fn set_tracks(&mut self, tracks: &[Track]) {
        let mut recs: Vec<TrackRecord> = tracks
            .iter()
            .flat_map(|t| {
                t.points.iter().map(move |p| TrackRecord {
                    frame: p.frame,
                    id: t.id,
                    class: t.agent_class,
                    score: t.score,
                    observed: p.observed,
                    bbox: (&p.bbox).into(),
                })
            })
            .collect();
        recs.sort_by_key(|r| (r.frame, r.id));
        self.trk = recs;
    }
}
