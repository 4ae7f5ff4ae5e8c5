//! The end-to-end chain: simulate, ensemble, track, forecast, evaluate.

use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::ensemble::{merge_frame, EnsembleConfig};
use crate::error::{Error, Result};
use crate::forecaster::{post_process, ConstantVelocity, ForecastConfig, Forecaster, OracleForecaster};
use crate::io::{ForecastRecord, PairRecord, SceneFile};
use crate::metrics::{
    amota, classify_trajectory, displacement_summary, hota_by_class, mapf, mota, ClearCounts, ForecastPrediction,
    ForecastTarget, MetricConfig, TrackedObject,
};
use crate::model::{Detection, GtAgent, TimeBase};
use crate::sim::{corrupt_ensemble, gen_scene, NoiseConfig, Scene, SimConfig};
use crate::supervision::{build_training_pairs, past_trajectory, MatchConfig};
use crate::tracker::{interpolate_gaps, track_sequence, Track, TrackerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForecasterKind {
    #[default]
    ConstantVelocity,
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub time: TimeBase,
    pub sim: SimConfig,
    pub noise: NoiseConfig,
    pub n_models: u32,
    pub ensemble: EnsembleConfig,
    pub tracker: TrackerConfig,
    pub matcher: MatchConfig,
    pub forecast: ForecastConfig,
    pub forecaster: ForecasterKind,
    pub post_process: bool,
    /// Evaluate tracking on gap-interpolated tracks instead of raw output.
    pub interpolate: bool,
    pub inference_stride: usize,
    pub metrics: MetricConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            time: TimeBase::default(),
            sim: SimConfig::default(),
            noise: NoiseConfig::default(),
            n_models: 3,
            ensemble: EnsembleConfig::default(),
            tracker: TrackerConfig::default(),
            matcher: MatchConfig::default(),
            forecast: ForecastConfig::default(),
            forecaster: ForecasterKind::default(),
            post_process: true,
            interpolate: true,
            inference_stride: 10,
            metrics: MetricConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Clean detections, an oracle forecaster and no post-processing: the
    /// configuration whose metrics sit at their ceilings.
    pub fn oracle() -> Self {
        PipelineConfig {
            noise: NoiseConfig::noiseless(),
            forecaster: ForecasterKind::Oracle,
            post_process: false,
            ..PipelineConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate(&self.time)?;
        self.noise.validate()?;
        self.ensemble.validate()?;
        self.tracker.validate()?;
        self.matcher.validate()?;
        self.forecast.validate()?;
        self.metrics.validate()?;
        if self.n_models == 0 {
            return Err(Error::InvalidConfig("n_models must be >= 1".into()));
        }
        if self.inference_stride == 0 {
            return Err(Error::InvalidConfig("inference_stride must be >= 1".into()));
        }
        if self.forecast.horizon_steps != self.time.horizon_steps {
            return Err(Error::InvalidConfig(format!(
                "forecast horizon {} differs from time base horizon {}",
                self.forecast.horizon_steps, self.time.horizon_steps
            )));
        }
        Ok(())
    }

    /// Frames at which forecasts are made: a full past window behind, a full
    /// horizon ahead.
    pub fn inference_frames(&self, frames: usize) -> Vec<i64> {
        let start = self.time.past_frames();
        let last = frames as i64 - 1 - self.time.horizon_steps as i64;
        (start as i64..=last).step_by(self.inference_stride).collect()
    }
}

pub fn simulate(cfg: &PipelineConfig, seed: u64) -> Result<(Scene, Vec<Vec<Detection>>)> {
    cfg.validate()?;
    let scene = gen_scene(&cfg.sim, &cfg.time, seed)?;
    let dets = corrupt_ensemble(&scene, &cfg.noise, seed, cfg.n_models)?;
    Ok((scene, dets))
}

pub fn ensemble_frames(frames: &[Vec<Detection>], cfg: &EnsembleConfig) -> Result<Vec<Vec<Detection>>> {
    frames.iter().map(|f| merge_frame(f, cfg)).collect()
}

pub fn run_tracker(frames: &[Vec<Detection>], cfg: &TrackerConfig) -> Result<Vec<Track>> {
    track_sequence(0, frames, cfg)
}

/// One forecast per track alive at each inference frame, scored by the
/// track score.
pub fn forecast_tracks(
    tracks: &[Track],
    gts: &[GtAgent],
    frames: usize,
    cfg: &PipelineConfig,
) -> Result<Vec<ForecastRecord>> {
    cfg.forecast.validate()?;
    let cv = ConstantVelocity::new(cfg.forecast.clone())?;
    let mut out = Vec::new();
    for t in cfg.inference_frames(frames) {
        let oracle = OracleForecaster {
            gts,
            current_frame: t,
            horizon_steps: cfg.forecast.horizon_steps,
        };
        let model: &dyn Forecaster = match cfg.forecaster {
            ForecasterKind::ConstantVelocity => &cv,
            ForecasterKind::Oracle => &oracle,
        };
        for track in tracks {
            let Some(past) = past_trajectory(track, t, &cfg.time) else { continue };
            let mut set = model.forecast(&past);
            if cfg.post_process {
                set = post_process(&set, &past);
            }
            let [x, y] = past.current_position();
            out.push(ForecastRecord {
                frame: t,
                track_id: track.id,
                class: track.agent_class,
                score: track.score,
                x,
                y,
                modes: set.modes,
            });
        }
    }
    Ok(out)
}

pub fn training_pairs(tracks: &[Track], gts: &[GtAgent], frames: usize, cfg: &PipelineConfig) -> Vec<PairRecord> {
    cfg.inference_frames(frames)
        .into_iter()
        .flat_map(|t| {
            build_training_pairs(tracks, gts, t, &cfg.matcher, &cfg.time)
                .into_iter()
                .map(move |p| PairRecord::new(t, &p))
        })
        .collect()
}

/// Ground-truth futures at each inference frame with their trajectory type.
pub fn forecast_targets(gts: &[GtAgent], frames: usize, cfg: &PipelineConfig) -> Vec<ForecastTarget> {
    let h = cfg.time.horizon_steps;
    let mut out = Vec::new();
    for t in cfg.inference_frames(frames) {
        for g in gts {
            let (Some(now), Some(future)) = (g.box_at(t), g.future_from(t, h)) else { continue };
            let current = now.center_xy();
            let velocity = match (g.box_at(t - 1), g.box_at(t + 1)) {
                (Some(prev), _) => [current[0] - prev.cx, current[1] - prev.cy],
                (None, Some(next)) => [next.cx - current[0], next.cy - current[1]],
                (None, None) => [0.0, 0.0],
            };
            out.push(ForecastTarget {
                instance: t as u64,
                gt_id: g.id,
                agent_class: g.agent_class,
                current,
                future: future.clone(),
                traj_type: classify_trajectory(current, &future, velocity, &cfg.metrics),
            });
        }
    }
    out
}

fn within(x: f64, y: f64, range: f64) -> bool {
    x.hypot(y) <= range
}

/// Tracker output as evaluated: observed points only, or every point of the
/// gap-interpolated track.
pub fn tracked_objects(tracks: &[Track], interpolate: bool, range: f64) -> Vec<TrackedObject> {
    let mut out = Vec::new();
    for t in tracks {
        let filled;
        let points: Vec<_> = if interpolate {
            filled = interpolate_gaps(t);
            filled.points.iter().collect()
        } else {
            t.observed_points().collect()
        };
        out.extend(
            points
                .into_iter()
                .filter(|p| within(p.bbox.cx, p.bbox.cy, range))
                .map(|p| TrackedObject {
                    sequence: 0,
                    frame: p.frame,
                    id: t.id,
                    agent_class: t.agent_class,
                    x: p.bbox.cx,
                    y: p.bbox.cy,
                    score: t.score,
                }),
        );
    }
    out
}

pub fn gt_objects(gts: &[GtAgent], range: f64) -> Vec<TrackedObject> {
    gts.iter()
        .flat_map(|g| {
            g.samples
                .iter()
                .filter(|(_, b)| within(b.cx, b.cy, range))
                .map(move |(f, b)| TrackedObject {
                    sequence: 0,
                    frame: *f,
                    id: g.id,
                    agent_class: g.agent_class,
                    x: b.cx,
                    y: b.cy,
                    score: 1.0,
                })
        })
        .collect()
}

/// A metric value that is either a number or explicitly undefined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score(pub Option<f64>);

impl Serialize for Score {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.0 {
            Some(v) => s.serialize_f64(v),
            None => s.serialize_str("undefined"),
        }
    }
}

impl<'de> Deserialize<'de> for Score {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Score(Some(v))),
            Raw::Text(t) if t == "undefined" => Ok(Score(None)),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("expected a number or \"undefined\", got {t:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub version: String,
    pub scene_id: String,
    pub seed: Option<u64>,
    pub mapf: Score,
    pub mapf_per_type: BTreeMap<String, Score>,
    pub mapf_per_class: BTreeMap<String, Score>,
    pub mapf_cells: usize,
    /// Metres, over forecasts matched to a ground truth at the current frame.
    pub ade: Score,
    pub fde: Score,
    pub matched_forecasts: usize,
    pub hota: Score,
    pub deta: Score,
    pub assa: Score,
    /// Clamped to [0, 1].
    pub mota: Score,
    pub mota_raw: Score,
    pub amota: Score,
    pub counts: ClearCounts,
    pub config: PipelineConfig,
}

/// Scores the forecasts and tracks of one scene against its ground truth.
pub fn evaluate(
    file: &SceneFile,
    cfg: &PipelineConfig,
    seed: Option<u64>,
) -> Result<MetricReport> {
    cfg.validate()?;
    let frames = file.header.frames;
    let gts = file.gt_agents();
    let tracks = file.tracks(&cfg.tracker.kalman)?;
    let preds: Vec<ForecastPrediction> = file.forecast.iter().map(ForecastRecord::to_prediction).collect();
    let targets = forecast_targets(&gts, frames, cfg);

    let m = &cfg.metrics;
    let report = mapf(&preds, &targets, m);
    let (ade, fde, matched) = displacement_summary(&preds, &targets, m)?;

    let trk = tracked_objects(&tracks, cfg.interpolate, m.eval_range_m);
    let gto = gt_objects(&gts, m.eval_range_m);
    let h = hota_by_class(&trk, &gto, m);
    let mo = mota(&trk, &gto, m.match_threshold_m);

    Ok(MetricReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        scene_id: file.header.scene_id.clone(),
        seed,
        mapf: Score(report.overall),
        mapf_per_type: report
            .per_type
            .iter()
            .map(|(k, v)| (k.as_str().to_string(), Score(*v)))
            .collect(),
        mapf_per_class: report
            .per_class
            .iter()
            .map(|(k, v)| (k.as_str().to_string(), Score(*v)))
            .collect(),
        mapf_cells: report.cells,
        ade: Score(ade),
        fde: Score(fde),
        matched_forecasts: matched,
        hota: Score(h.as_ref().map(|r| r.hota)),
        deta: Score(h.as_ref().map(|r| r.deta)),
        assa: Score(h.as_ref().map(|r| r.assa)),
        mota: Score(mo.map(|r| r.mota)),
        mota_raw: Score(mo.map(|r| r.mota_raw)),
        amota: Score(amota(&trk, &gto, m)),
        counts: mo.map(|r| r.counts).unwrap_or_default(),
        config: cfg.clone(),
    })
}

/// Runs the whole chain for one seed and returns every artifact alongside
/// the report.
pub fn run(cfg: &PipelineConfig, seed: u64) -> Result<(SceneFile, MetricReport)> {
    let (scene, raw) = simulate(cfg, seed)?;
    let mut file = SceneFile::from_scene(&scene);
    let merged = ensemble_frames(&raw, &cfg.ensemble)?;
    file.set_detections(&merged);
    let tracks = run_tracker(&merged, &cfg.tracker)?;
    file.set_tracks(&tracks);
    file.forecast = forecast_tracks(&tracks, &scene.agents, scene.frames, cfg)?;
    let report = evaluate(&file, cfg, Some(seed))?;
    Ok((file, report))
}
