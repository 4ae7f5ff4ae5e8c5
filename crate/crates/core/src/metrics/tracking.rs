//! Tracking metrics over planar center positions: HOTA (with DetA/AssA),
//! CLEAR-MOT MOTA, and recall-averaged AMOTA.
//!
//! Objects are identified by `(sequence, id)` and time steps by
//! `(sequence, frame)`, so several scenes can be scored together.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::MetricConfig;
use crate::assignment;
use crate::model::{point_distance, AgentClass};

/// A ground-truth or tracked object at one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackedObject {
    pub sequence: u64,
    pub frame: i64,
    pub id: u64,
    pub agent_class: AgentClass,
    pub x: f64,
    pub y: f64,
    pub score: f64,
}

impl TrackedObject {
    fn pos(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    fn key(&self) -> (u64, u64) {
        (self.sequence, self.id)
    }
}

type Step = (u64, i64);
type ObjKey = (u64, u64);

fn by_step<'a>(objs: &[&'a TrackedObject]) -> BTreeMap<Step, Vec<&'a TrackedObject>> {
    let mut map: BTreeMap<Step, Vec<&TrackedObject>> = BTreeMap::new();
    for o in objs {
        map.entry((o.sequence, o.frame)).or_default().push(*o);
    }
    map
}

fn steps(gts: &BTreeMap<Step, Vec<&TrackedObject>>, trs: &BTreeMap<Step, Vec<&TrackedObject>>) -> BTreeSet<Step> {
    gts.keys().chain(trs.keys()).copied().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HotaResult {
    pub hota: f64,
    pub deta: f64,
    pub assa: f64,
    pub per_alpha: Vec<f64>,
}

/// Localization similarity in `[0, 1]`; an object pair is a true positive at
/// level α when `similarity >= α`, i.e. when the centers are within
/// `radius · (1 − α)`.
fn similarity(a: &TrackedObject, b: &TrackedObject, radius: f64) -> f64 {
    (1.0 - point_distance(a.pos(), b.pos()) / radius).max(0.0)
}

const ALPHA_EPS: f64 = 1e-12;

/// Class-agnostic HOTA. `None` when both inputs are empty.
pub fn hota(tracks: &[TrackedObject], gts: &[TrackedObject], config: &MetricConfig) -> Option<HotaResult> {
    let tr_refs: Vec<&TrackedObject> = tracks.iter().collect();
    let gt_refs: Vec<&TrackedObject> = gts.iter().collect();
    hota_refs(&tr_refs, &gt_refs, config)
}

fn hota_refs(tracks: &[&TrackedObject], gts: &[&TrackedObject], config: &MetricConfig) -> Option<HotaResult> {
    if tracks.is_empty() && gts.is_empty() {
        return None;
    }
    let radius = config.match_threshold_m;
    let alphas = &config.hota_alphas;
    let gt_steps = by_step(gts);
    let tr_steps = by_step(tracks);
    let all_steps = steps(&gt_steps, &tr_steps);

    let mut gt_count: BTreeMap<ObjKey, f64> = BTreeMap::new();
    for g in gts {
        *gt_count.entry(g.key()).or_default() += 1.0;
    }
    let mut tr_count: BTreeMap<ObjKey, f64> = BTreeMap::new();
    for t in tracks {
        *tr_count.entry(t.key()).or_default() += 1.0;
    }

    let empty = Vec::new();
    let frame_sim = |step: &Step| {
        let g = gt_steps.get(step).unwrap_or(&empty);
        let t = tr_steps.get(step).unwrap_or(&empty);
        let sim: Vec<Vec<f64>> = g
            .iter()
            .map(|a| t.iter().map(|b| similarity(a, b, radius)).collect())
            .collect();
        (g, t, sim)
    };

    // Pass 1: soft co-occurrence of every (gt, track) pair.
    let mut potential: BTreeMap<(ObjKey, ObjKey), f64> = BTreeMap::new();
    for step in &all_steps {
        let (g, t, sim) = frame_sim(step);
        if g.is_empty() || t.is_empty() {
            continue;
        }
        let row_sum: Vec<f64> = sim.iter().map(|r| r.iter().sum()).collect();
        let col_sum: Vec<f64> = (0..t.len()).map(|j| sim.iter().map(|r| r[j]).sum()).collect();
        for i in 0..g.len() {
            for j in 0..t.len() {
                let s = sim[i][j];
                if s > 0.0 {
                    let denom = row_sum[i] + col_sum[j] - s;
                    *potential.entry((g[i].key(), t[j].key())).or_default() += s / denom;
                }
            }
        }
    }
    let alignment = |gk: ObjKey, tk: ObjKey| -> f64 {
        let p = potential.get(&(gk, tk)).copied().unwrap_or(0.0);
        if p == 0.0 {
            0.0
        } else {
            p / (gt_count[&gk] + tr_count[&tk] - p)
        }
    };

    // Pass 2: per-frame matching, scored at every α.
    let n_alpha = alphas.len();
    let mut tp = vec![0.0f64; n_alpha];
    let mut fn_ = vec![0.0f64; n_alpha];
    let mut fp = vec![0.0f64; n_alpha];
    let mut matches: Vec<BTreeMap<(ObjKey, ObjKey), f64>> = vec![BTreeMap::new(); n_alpha];
    for step in &all_steps {
        let (g, t, sim) = frame_sim(step);
        let pairs = if g.is_empty() || t.is_empty() {
            Vec::new()
        } else {
            let score: Vec<Vec<f64>> = (0..g.len())
                .map(|i| (0..t.len()).map(|j| alignment(g[i].key(), t[j].key()) * sim[i][j]).collect())
                .collect();
            assignment::max_weight(&score)
        };
        for (a, &alpha) in alphas.iter().enumerate() {
            let mut hits = 0.0;
            for &(i, j) in &pairs {
                if sim[i][j] >= alpha - ALPHA_EPS && sim[i][j] > 0.0 {
                    hits += 1.0;
                    *matches[a].entry((g[i].key(), t[j].key())).or_default() += 1.0;
                }
            }
            tp[a] += hits;
            fn_[a] += g.len() as f64 - hits;
            fp[a] += t.len() as f64 - hits;
        }
    }

    let mut deta_v = Vec::with_capacity(n_alpha);
    let mut assa_v = Vec::with_capacity(n_alpha);
    let mut hota_v = Vec::with_capacity(n_alpha);
    for a in 0..n_alpha {
        let denom = tp[a] + fn_[a] + fp[a];
        let deta = if denom > 0.0 { tp[a] / denom } else { 0.0 };
        let ass_sum: f64 = matches[a]
            .iter()
            .map(|(&(gk, tk), &m)| m * m / (gt_count[&gk] + tr_count[&tk] - m))
            .sum();
        let assa = ass_sum / tp[a].max(1.0);
        deta_v.push(deta);
        assa_v.push(assa);
        hota_v.push((deta * assa).sqrt());
    }
    let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    Some(HotaResult {
        hota: avg(&hota_v),
        deta: avg(&deta_v),
        assa: avg(&assa_v),
        per_alpha: hota_v,
    })
}

fn classes_of(gts: &[TrackedObject]) -> BTreeSet<AgentClass> {
    gts.iter().map(|g| g.agent_class).collect()
}

/// HOTA computed per ground-truth class and averaged.
pub fn hota_by_class(tracks: &[TrackedObject], gts: &[TrackedObject], config: &MetricConfig) -> Option<HotaResult> {
    let results: Vec<HotaResult> = classes_of(gts)
        .into_iter()
        .filter_map(|c| {
            let t: Vec<&TrackedObject> = tracks.iter().filter(|o| o.agent_class == c).collect();
            let g: Vec<&TrackedObject> = gts.iter().filter(|o| o.agent_class == c).collect();
            hota_refs(&t, &g, config)
        })
        .collect();
    if results.is_empty() {
        return None;
    }
    let n = results.len() as f64;
    let n_alpha = config.hota_alphas.len();
    Some(HotaResult {
        hota: results.iter().map(|r| r.hota).sum::<f64>() / n,
        deta: results.iter().map(|r| r.deta).sum::<f64>() / n,
        assa: results.iter().map(|r| r.assa).sum::<f64>() / n,
        per_alpha: (0..n_alpha)
            .map(|a| results.iter().map(|r| r.per_alpha[a]).sum::<f64>() / n)
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClearCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub ids: usize,
    pub gt: usize,
}

impl ClearCounts {
    fn add(&mut self, o: &ClearCounts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.ids += o.ids;
        self.gt += o.gt;
    }

    /// `1 − (FP + FN + IDS) / GT`, unclamped.
    pub fn mota_raw(&self) -> Option<f64> {
        (self.gt > 0).then(|| 1.0 - (self.fp + self.fn_ + self.ids) as f64 / self.gt as f64)
    }
}

/// CLEAR-MOT accumulation with center-distance gating. Correspondences from
/// the previous frame are kept while still within the gate; the remaining
/// objects are matched by maximum-cardinality, minimum-distance assignment.
fn clear_counts(tracks: &[&TrackedObject], gts: &[&TrackedObject], threshold: f64) -> ClearCounts {
    let gt_steps = by_step(gts);
    let tr_steps = by_step(tracks);
    let mut counts = ClearCounts::default();
    let mut last_match: BTreeMap<ObjKey, ObjKey> = BTreeMap::new();
    let empty = Vec::new();
    for step in steps(&gt_steps, &tr_steps) {
        let g = gt_steps.get(&step).unwrap_or(&empty);
        let t = tr_steps.get(&step).unwrap_or(&empty);
        let mut g_used = vec![false; g.len()];
        let mut t_used = vec![false; t.len()];
        let mut pairs: Vec<(usize, usize)> = Vec::new();

        for (i, go) in g.iter().enumerate() {
            if let Some(prev) = last_match.get(&go.key()) {
                if let Some(j) = t.iter().position(|to| to.key() == *prev) {
                    if !t_used[j] && point_distance(go.pos(), t[j].pos()) <= threshold {
                        g_used[i] = true;
                        t_used[j] = true;
                        pairs.push((i, j));
                    }
                }
            }
        }

        let free_g: Vec<usize> = (0..g.len()).filter(|&i| !g_used[i]).collect();
        let free_t: Vec<usize> = (0..t.len()).filter(|&j| !t_used[j]).collect();
        let cost: Vec<Vec<Option<f64>>> = free_g
            .iter()
            .map(|&i| {
                free_t
                    .iter()
                    .map(|&j| {
                        let d = point_distance(g[i].pos(), t[j].pos());
                        (d <= threshold).then_some(d)
                    })
                    .collect()
            })
            .collect();
        for (a, b) in assignment::max_cardinality_min_cost(&cost) {
            let (i, j) = (free_g[a], free_t[b]);
            if let Some(prev) = last_match.get(&g[i].key()) {
                if *prev != t[j].key() {
                    counts.ids += 1;
                }
            }
            pairs.push((i, j));
        }

        for &(i, j) in &pairs {
            last_match.insert(g[i].key(), t[j].key());
        }
        counts.tp += pairs.len();
        counts.fp += t.len() - pairs.len();
        counts.fn_ += g.len() - pairs.len();
        counts.gt += g.len();
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotaResult {
    /// Clamped to `[0, 1]`.
    pub mota: f64,
    pub mota_raw: f64,
    pub counts: ClearCounts,
}

fn split_by_class(objs: &[TrackedObject], class: AgentClass) -> Vec<&TrackedObject> {
    objs.iter().filter(|o| o.agent_class == class).collect()
}

/// MOTA per ground-truth class, averaged. Counts are summed over classes.
pub fn mota(tracks: &[TrackedObject], gts: &[TrackedObject], threshold: f64) -> Option<MotaResult> {
    let mut total = ClearCounts::default();
    let mut raws = Vec::new();
    for c in classes_of(gts) {
        let counts = clear_counts(&split_by_class(tracks, c), &split_by_class(gts, c), threshold);
        total.add(&counts);
        raws.extend(counts.mota_raw());
    }
    // tracks of classes absent from the ground truth are all false positives
    let gt_classes = classes_of(gts);
    total.fp += tracks.iter().filter(|t| !gt_classes.contains(&t.agent_class)).count();
    if raws.is_empty() {
        return None;
    }
    let raw = raws.iter().sum::<f64>() / raws.len() as f64;
    Some(MotaResult {
        mota: raw.clamp(0.0, 1.0),
        mota_raw: raw,
        counts: total,
    })
}

fn motar(c: &ClearCounts) -> f64 {
    let recall = c.tp as f64 / c.gt as f64;
    if recall <= 0.0 {
        return 0.0;
    }
    let gt = c.gt as f64;
    (1.0 - ((c.ids + c.fp + c.fn_) as f64 - (1.0 - recall) * gt) / (recall * gt)).clamp(0.0, 1.0)
}

fn amota_single(tracks: &[&TrackedObject], gts: &[&TrackedObject], config: &MetricConfig) -> Option<f64> {
    if gts.is_empty() {
        return None;
    }
    let mut thresholds: Vec<f64> = tracks.iter().map(|t| t.score).collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    if thresholds.is_empty() {
        return Some(0.0);
    }

    let mut cache: BTreeMap<usize, ClearCounts> = BTreeMap::new();
    let mut counts_at = |k: usize| -> ClearCounts {
        *cache.entry(k).or_insert_with(|| {
            let tau = thresholds[k];
            let kept: Vec<&TrackedObject> = tracks.iter().copied().filter(|t| t.score >= tau).collect();
            clear_counts(&kept, gts, config.match_threshold_m)
        })
    };
    let recall_of = |c: &ClearCounts| c.tp as f64 / c.gt as f64;

    let last = thresholds.len() - 1;
    let max_recall = recall_of(&counts_at(last));
    let mut total = 0.0;
    for &r in &config.amota_recalls {
        if max_recall + 1e-12 < r {
            continue;
        }
        // smallest k (highest threshold) whose recall reaches r
        let (mut lo, mut hi) = (0usize, last);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if recall_of(&counts_at(mid)) + 1e-12 >= r {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        total += motar(&counts_at(lo));
    }
    Some(total / config.amota_recalls.len().max(1) as f64)
}

/// AMOTA per ground-truth class, averaged: for each recall level the score
/// threshold reaching it is chosen and the recall-normalized MOTA averaged;
/// unreachable recall levels contribute 0.
pub fn amota(tracks: &[TrackedObject], gts: &[TrackedObject], config: &MetricConfig) -> Option<f64> {
    let values: Vec<f64> = classes_of(gts)
        .into_iter()
        .filter_map(|c| amota_single(&split_by_class(tracks, c), &split_by_class(gts, c), config))
        .collect();
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}
