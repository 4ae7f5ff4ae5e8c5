//! Seeded synthetic scenes and perception corruption.
//!
//! Every random draw comes from a ChaCha stream keyed by
//! `(seed, frame, agent, purpose)`, so any frame or agent can be
//! regenerated on its own and the output never depends on iteration order.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AgentClass, Box3D, Detection, GtAgent, TimeBase};

const PURPOSE_LAYOUT: u64 = 1;
const PURPOSE_DETECT: u64 = 2;
const PURPOSE_CLUTTER: u64 = 3;
const NO_AGENT: u64 = u64::MAX;
const MAX_PLACEMENT_ATTEMPTS: u64 = 500;

fn stream(seed: u64, frame: u64, agent: u64, purpose: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    for (chunk, word) in key.chunks_exact_mut(8).zip([seed, frame, agent, purpose]) {
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n_agents: usize,
    pub fraction_static: f64,
    pub fraction_linear: f64,
    pub fraction_turning: f64,
    /// m/s, clamped to each class's plausible maximum.
    pub speed_range: [f64; 2],
    pub turn_radius_range: [f64; 2],
    pub scene_len: usize,
    /// Agents start inside `[-extent, extent]²` around the ego at the origin.
    pub map_extent_m: f64,
    /// Clearance kept between agent footprints over the whole scene.
    pub min_separation_m: f64,
    pub class_mix: BTreeMap<AgentClass, f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        use AgentClass::*;
        let class_mix = [
            (RegularVehicle, 0.35),
            (Pedestrian, 0.2),
            (Bicyclist, 0.05),
            (Bus, 0.05),
            (Truck, 0.05),
            (Bollard, 0.1),
            (ConstructionCone, 0.1),
            (Sign, 0.05),
            (ConstructionBarrel, 0.05),
        ]
        .into_iter()
        .collect();
        SimConfig {
            n_agents: 24,
            fraction_static: 0.4,
            fraction_linear: 0.4,
            fraction_turning: 0.2,
            speed_range: [1.0, 10.0],
            turn_radius_range: [8.0, 30.0],
            scene_len: 80,
            map_extent_m: 40.0,
            min_separation_m: 2.0,
            class_mix,
        }
    }
}

impl SimConfig {
    pub fn validate(&self, time: &TimeBase) -> Result<()> {
        time.validate()?;
        let invalid = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.n_agents == 0 {
            return invalid("n_agents must be > 0");
        }
        let fr = [self.fraction_static, self.fraction_linear, self.fraction_turning];
        if fr.iter().any(|f| !(0.0..=1.0).contains(f)) || (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return invalid("motion fractions must lie in [0, 1] and sum to 1");
        }
        let [lo, hi] = self.speed_range;
        if !(lo > 0.0 && hi >= lo) {
            return invalid("speed_range must satisfy 0 < lo <= hi");
        }
        let [rlo, rhi] = self.turn_radius_range;
        if !(rlo > 0.0 && rhi >= rlo) {
            return invalid("turn_radius_range must satisfy 0 < lo <= hi");
        }
        if self.scene_len < time.past_frames() + time.horizon_steps + 1 {
            return invalid("scene_len must cover the past window and the horizon");
        }
        if !(self.map_extent_m > 0.0) || !(self.min_separation_m >= 0.0) {
            return invalid("map_extent_m must be > 0 and min_separation_m >= 0");
        }
        if self.class_mix.is_empty() || self.class_mix.values().any(|w| !(*w >= 0.0)) {
            return invalid("class_mix needs non-negative weights");
        }
        if self.class_mix.values().sum::<f64>() <= 0.0 {
            return invalid("class_mix weights sum to zero");
        }
        let moving = self.n_agents - self.static_count();
        if moving > 0 && !self.class_mix.iter().any(|(c, w)| *w > 0.0 && c.max_speed() > 0.0) {
            return invalid("moving agents requested but class_mix has no movable class");
        }
        Ok(())
    }

    fn static_count(&self) -> usize {
        (self.fraction_static * self.n_agents as f64).round() as usize
    }

    fn turning_count(&self) -> usize {
        let left = self.n_agents - self.static_count();
        ((self.fraction_turning * self.n_agents as f64).round() as usize).min(left)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionKind {
    Static,
    Linear,
    Turning,
}

/// Closed-form motion of one simulated agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentMotion {
    pub kind: MotionKind,
    pub start: [f64; 2],
    pub heading: f64,
    /// m/s
    pub speed: f64,
    pub radius: f64,
    /// +1 turns left (counter-clockwise), −1 right.
    pub turn_sign: f64,
}

impl AgentMotion {
    /// Position and heading `t` seconds after the scene start.
    pub fn pose_at(&self, t: f64) -> ([f64; 2], f64) {
        let [x0, y0] = self.start;
        let th = self.heading;
        match self.kind {
            MotionKind::Static => (self.start, th),
            MotionKind::Linear => {
                let d = self.speed * t;
                ([x0 + d * th.cos(), y0 + d * th.sin()], th)
            }
            MotionKind::Turning => {
                let s = self.turn_sign;
                let r = self.radius;
                let center = [x0 - s * r * th.sin(), y0 + s * r * th.cos()];
                let phi = th + s * self.speed * t / r;
                ([center[0] + s * r * phi.sin(), center[1] - s * r * phi.cos()], phi)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub scene_id: String,
    pub hz: f64,
    pub frames: usize,
    pub agents: Vec<GtAgent>,
    pub motions: Vec<AgentMotion>,
}

fn pick_class(rng: &mut ChaCha8Rng, mix: &BTreeMap<AgentClass, f64>, movable_only: bool) -> AgentClass {
    let eligible: Vec<(AgentClass, f64)> = mix
        .iter()
        .filter(|(c, w)| **w > 0.0 && (!movable_only || c.max_speed() > 0.0))
        .map(|(c, w)| (*c, *w))
        .collect();
    let total: f64 = eligible.iter().map(|(_, w)| w).sum();
    let mut u = rng.random::<f64>() * total;
    for (c, w) in &eligible {
        if u < *w {
            return *c;
        }
        u -= w;
    }
    eligible.last().expect("validated class mix").0
}

struct Candidate {
    class: AgentClass,
    dims: [f64; 3],
    motion: AgentMotion,
}

fn draw_candidate(config: &SimConfig, kind: MotionKind, rng: &mut ChaCha8Rng) -> Candidate {
    let class = pick_class(rng, &config.class_mix, kind != MotionKind::Static);
    let base = class.typical_dims();
    let jitter = |rng: &mut ChaCha8Rng, v: f64| v * rng.random_range(0.9..=1.1);
    let dims = [jitter(rng, base[0]), jitter(rng, base[1]), jitter(rng, base[2])];
    let e = config.map_extent_m;
    let start = [rng.random_range(-e..=e), rng.random_range(-e..=e)];
    let heading = rng.random_range(-PI..PI);
    let [lo, hi] = config.speed_range;
    let speed = match kind {
        MotionKind::Static => 0.0,
        _ => rng.random_range(lo..=hi).min(class.max_speed()),
    };
    let [rlo, rhi] = config.turn_radius_range;
    let radius = rng.random_range(rlo..=rhi);
    let turn_sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
    Candidate {
        class,
        dims,
        motion: AgentMotion {
            kind,
            start,
            heading,
            speed,
            radius,
            turn_sign,
        },
    }
}

/// Generates the ground truth of one scene.
pub fn gen_scene(config: &SimConfig, time: &TimeBase, seed: u64) -> Result<Scene> {
    config.validate(time)?;
    let n = config.n_agents;
    let n_static = config.static_count();
    let n_turning = config.turning_count();
    let kind_of = |i: usize| {
        if i < n_static {
            MotionKind::Static
        } else if i < n_static + n_turning {
            MotionKind::Turning
        } else {
            MotionKind::Linear
        }
    };

    let frames = config.scene_len;
    let dt = 1.0 / time.hz;
    let mut placed: Vec<(Candidate, Vec<[f64; 2]>)> = Vec::with_capacity(n);
    for i in 0..n {
        let mut accepted = None;
        for attempt in 0..MAX_PLACEMENT_ATTEMPTS {
            let mut rng = stream(seed, attempt, i as u64, PURPOSE_LAYOUT);
            let cand = draw_candidate(config, kind_of(i), &mut rng);
            let path: Vec<[f64; 2]> = (0..frames).map(|f| cand.motion.pose_at(f as f64 * dt).0).collect();
            let radius = |d: &[f64; 3]| d[0].hypot(d[1]) / 2.0;
            let clear = placed.iter().all(|(other, other_path)| {
                let need = config.min_separation_m + radius(&cand.dims) + radius(&other.dims);
                path.iter()
                    .zip(other_path)
                    .all(|(p, q)| (p[0] - q[0]).hypot(p[1] - q[1]) >= need)
            });
            if clear {
                accepted = Some((cand, path));
                break;
            }
        }
        let Some(entry) = accepted else {
            return Err(Error::InvalidConfig(format!(
                "could not place agent {i} without collisions; lower n_agents or enlarge the map"
            )));
        };
        placed.push(entry);
    }

    let mut agents = Vec::with_capacity(n);
    let mut motions = Vec::with_capacity(n);
    for (i, (cand, _)) in placed.into_iter().enumerate() {
        let [l, w, h] = cand.dims;
        let samples = (0..frames as i64)
            .map(|f| {
                let ([x, y], yaw) = cand.motion.pose_at(f as f64 * dt);
                Box3D::new([x, y, h / 2.0], [l, w, h], yaw).map(|b| (f, b))
            })
            .collect::<Result<Vec<_>>>()?;
        agents.push(GtAgent {
            id: i as u64 + 1,
            agent_class: cand.class,
            samples,
        });
        motions.push(cand.motion);
    }
    Ok(Scene {
        scene_id: format!("sim-{seed}"),
        hz: time.hz,
        frames,
        agents,
        motions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    pub p_fn: f64,
    /// Expected clutter detections per frame.
    pub fp_rate: f64,
    pub sigma_xy: f64,
    pub sigma_z: f64,
    pub sigma_yaw: f64,
    pub sigma_dims: f64,
    pub s_lo_tp: f64,
    pub s_hi_fp: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            p_fn: 0.1,
            fp_rate: 1.0,
            sigma_xy: 0.15,
            sigma_z: 0.05,
            sigma_yaw: 0.05,
            sigma_dims: 0.05,
            s_lo_tp: 0.5,
            s_hi_fp: 0.5,
        }
    }
}

impl NoiseConfig {
    pub fn noiseless() -> Self {
        NoiseConfig {
            p_fn: 0.0,
            fp_rate: 0.0,
            sigma_xy: 0.0,
            sigma_z: 0.0,
            sigma_yaw: 0.0,
            sigma_dims: 0.0,
            s_lo_tp: 1.0,
            s_hi_fp: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [self.p_fn, self.s_lo_tp, self.s_hi_fp];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidConfig("p_fn and score bounds must lie in [0, 1]".into()));
        }
        let nonneg = [self.fp_rate, self.sigma_xy, self.sigma_z, self.sigma_yaw, self.sigma_dims];
        if nonneg.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::InvalidConfig("rates and sigmas must be >= 0".into()));
        }
        Ok(())
    }
}

fn gaussian(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sigma).expect("finite sigma").sample(rng)
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if lo >= hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

const MIN_DIM: f64 = 0.05;

/// Per-frame detections from one simulated detector.
pub fn corrupt(scene: &Scene, noise: &NoiseConfig, seed: u64) -> Result<Vec<Vec<Detection>>> {
    corrupt_model(scene, noise, seed, None)
}

/// Like [`corrupt`], tagging detections with `source_model`. Different
/// models must use different seeds to get independent errors.
pub fn corrupt_model(
    scene: &Scene,
    noise: &NoiseConfig,
    seed: u64,
    source_model: Option<u32>,
) -> Result<Vec<Vec<Detection>>> {
    noise.validate()?;
    let extent = scene
        .motions
        .iter()
        .map(|m| m.start[0].abs().max(m.start[1].abs()))
        .fold(1.0, f64::max);
    let mut out = Vec::with_capacity(scene.frames);
    for frame in 0..scene.frames as i64 {
        let mut dets = Vec::new();
        for (ai, agent) in scene.agents.iter().enumerate() {
            let Some(truth) = agent.box_at(frame) else { continue };
            let mut rng = stream(seed, frame as u64, ai as u64, PURPOSE_DETECT);
            if rng.random::<f64>() < noise.p_fn {
                continue;
            }
            let bbox = Box3D {
                cx: truth.cx + gaussian(&mut rng, noise.sigma_xy),
                cy: truth.cy + gaussian(&mut rng, noise.sigma_xy),
                cz: truth.cz + gaussian(&mut rng, noise.sigma_z),
                length: (truth.length + gaussian(&mut rng, noise.sigma_dims)).max(MIN_DIM),
                width: (truth.width + gaussian(&mut rng, noise.sigma_dims)).max(MIN_DIM),
                height: (truth.height + gaussian(&mut rng, noise.sigma_dims)).max(MIN_DIM),
                yaw: crate::model::wrap_angle(truth.yaw + gaussian(&mut rng, noise.sigma_yaw)),
            };
            dets.push(Detection {
                bbox,
                agent_class: agent.agent_class,
                score: uniform(&mut rng, noise.s_lo_tp, 1.0),
                frame,
                source_model,
            });
        }

        if noise.fp_rate > 0.0 && !scene.agents.is_empty() {
            let mut rng = stream(seed, frame as u64, NO_AGENT, PURPOSE_CLUTTER);
            let count = Poisson::new(noise.fp_rate).expect("positive rate").sample(&mut rng) as usize;
            for _ in 0..count {
                let class = scene.agents[rng.random_range(0..scene.agents.len())].agent_class;
                let [l, w, h] = class.typical_dims();
                let bbox = Box3D::new(
                    [rng.random_range(-extent..=extent), rng.random_range(-extent..=extent), h / 2.0],
                    [l, w, h],
                    rng.random_range(-PI..PI),
                )?;
                dets.push(Detection {
                    bbox,
                    agent_class: class,
                    score: uniform(&mut rng, 0.0, noise.s_hi_fp),
                    frame,
                    source_model,
                });
            }
        }
        out.push(dets);
    }
    Ok(out)
}

/// Detections from `n_models` independent detectors, concatenated per frame.
pub fn corrupt_ensemble(
    scene: &Scene,
    noise: &NoiseConfig,
    seed: u64,
    n_models: u32,
) -> Result<Vec<Vec<Detection>>> {
    let mut frames = vec![Vec::new(); scene.frames];
    for m in 0..n_models {
        let model_seed = seed ^ (u64::from(m) + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        for (acc, dets) in frames.iter_mut().zip(corrupt_model(scene, noise, model_seed, Some(m))?) {
            acc.extend(dets);
        }
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tb() -> TimeBase {
        TimeBase::default()
    }

    #[test]
    fn all_static_scene_never_moves() {
        let cfg = SimConfig {
            fraction_static: 1.0,
            fraction_linear: 0.0,
            fraction_turning: 0.0,
            ..SimConfig::default()
        };
        let s = gen_scene(&cfg, &tb(), 3).unwrap();
        for a in &s.agents {
            let first = a.samples[0].1;
            assert!(a.samples.iter().all(|(_, b)| b.cx == first.cx && b.cy == first.cy));
        }
    }

    #[test]
    fn same_seed_same_scene() {
        let cfg = SimConfig::default();
        assert_eq!(gen_scene(&cfg, &tb(), 11).unwrap(), gen_scene(&cfg, &tb(), 11).unwrap());
        assert_ne!(gen_scene(&cfg, &tb(), 11).unwrap(), gen_scene(&cfg, &tb(), 12).unwrap());
    }

    #[test]
    fn turning_arc_matches_circle() {
        let m = AgentMotion {
            kind: MotionKind::Turning,
            start: [0.0, 0.0],
            heading: 0.0,
            speed: 5.0,
            radius: 10.0,
            turn_sign: 1.0,
        };
        // left turn from the origin heading +x: circle centred at (0, 10),
        // swept angle 5·2/10 = 1 rad
        let (p, yaw) = m.pose_at(2.0);
        assert!((p[0] - 10.0 * 1f64.sin()).abs() < 1e-9);
        assert!((p[1] - (10.0 - 10.0 * 1f64.cos())).abs() < 1e-9);
        assert!((yaw - 1.0).abs() < 1e-12);
        let right = AgentMotion { turn_sign: -1.0, ..m };
        let (q, _) = right.pose_at(2.0);
        assert!((q[0] - p[0]).abs() < 1e-9 && (q[1] + p[1]).abs() < 1e-9);
    }

    #[test]
    fn always_static_classes_stay_static() {
        let s = gen_scene(&SimConfig::default(), &tb(), 5).unwrap();
        for (a, m) in s.agents.iter().zip(&s.motions) {
            if a.agent_class.is_always_static() || a.agent_class.max_speed() == 0.0 {
                assert_eq!(m.kind, MotionKind::Static);
            }
            assert!(m.speed <= a.agent_class.max_speed());
        }
    }

    #[test]
    fn infeasible_configs_rejected() {
        let zero = SimConfig { n_agents: 0, ..SimConfig::default() };
        assert!(gen_scene(&zero, &tb(), 0).is_err());
        let short = SimConfig { scene_len: 40, ..SimConfig::default() };
        assert!(gen_scene(&short, &tb(), 0).is_err());
        let only_static_classes = SimConfig {
            class_mix: [(AgentClass::Bollard, 1.0)].into_iter().collect(),
            ..SimConfig::default()
        };
        assert!(gen_scene(&only_static_classes, &tb(), 0).is_err());
        let crowded = SimConfig { n_agents: 400, map_extent_m: 5.0, ..SimConfig::default() };
        assert!(gen_scene(&crowded, &tb(), 0).is_err());
    }

    #[test]
    fn noiseless_passthrough() {
        let s = gen_scene(&SimConfig::default(), &tb(), 2).unwrap();
        let dets = corrupt(&s, &NoiseConfig::noiseless(), 9).unwrap();
        for (f, frame) in dets.iter().enumerate() {
            assert_eq!(frame.len(), s.agents.len());
            for (d, a) in frame.iter().zip(&s.agents) {
                assert_eq!(d.bbox, *a.box_at(f as i64).unwrap());
                assert_eq!(d.score, 1.0);
            }
        }
    }

    #[test]
    fn full_dropout_gives_nothing() {
        let s = gen_scene(&SimConfig::default(), &tb(), 2).unwrap();
        let noise = NoiseConfig { p_fn: 1.0, fp_rate: 0.0, ..NoiseConfig::default() };
        assert!(corrupt(&s, &noise, 1).unwrap().iter().all(Vec::is_empty));
    }

    #[test]
    fn center_noise_has_requested_spread() {
        let cfg = SimConfig {
            n_agents: 50,
            scene_len: 200,
            map_extent_m: 200.0,
            ..SimConfig::default()
        };
        let s = gen_scene(&cfg, &tb(), 4).unwrap();
        let noise = NoiseConfig {
            p_fn: 0.0,
            fp_rate: 0.0,
            sigma_xy: 0.1,
            ..NoiseConfig::default()
        };
        let dets = corrupt(&s, &noise, 8).unwrap();
        let mut errs = Vec::new();
        for (f, frame) in dets.iter().enumerate() {
            for (d, a) in frame.iter().zip(&s.agents) {
                errs.push(d.bbox.cx - a.box_at(f as i64).unwrap().cx);
            }
        }
        assert!(errs.len() >= 10_000);
        let n = errs.len() as f64;
        let mean = errs.iter().sum::<f64>() / n;
        let std = (errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((std - 0.1).abs() < 0.005, "std {std}");
    }

    #[test]
    fn corruption_is_deterministic_and_seed_dependent() {
        let s = gen_scene(&SimConfig::default(), &tb(), 2).unwrap();
        let n = NoiseConfig::default();
        assert_eq!(corrupt(&s, &n, 5).unwrap(), corrupt(&s, &n, 5).unwrap());
        assert_ne!(corrupt(&s, &n, 5).unwrap(), corrupt(&s, &n, 6).unwrap());
        let e = corrupt_ensemble(&s, &n, 5, 3).unwrap();
        assert!(e.iter().flatten().all(|d| d.source_model.is_some()));
    }

    #[test]
    fn clutter_scores_follow_fp_model() {
        let s = gen_scene(&SimConfig::default(), &tb(), 2).unwrap();
        let noise = NoiseConfig { p_fn: 1.0, fp_rate: 3.0, s_hi_fp: 0.3, ..NoiseConfig::default() };
        let dets: Vec<Detection> = corrupt(&s, &noise, 1).unwrap().into_iter().flatten().collect();
        assert!(!dets.is_empty());
        assert!(dets.iter().all(|d| d.score <= 0.3));
        let per_frame = dets.len() as f64 / s.frames as f64;
        assert!((per_frame - 3.0).abs() < 0.75, "{per_frame}");
    }
}
