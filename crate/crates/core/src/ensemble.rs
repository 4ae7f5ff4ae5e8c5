//! Greedy confidence-ordered fusion of detections coming from several
//! detector models.
//!
//! Per class, the highest-scored unprocessed detection becomes the reference
//! and absorbs every unprocessed detection whose center lies closer than the
//! class radius. The group is replaced by its score-weighted average.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{center_distance_2d, wrap_angle, AgentClass, Box3D, Detection};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    pub radius_r: f64,
    pub per_class_radius: BTreeMap<AgentClass, f64>,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            radius_r: 1.0,
            per_class_radius: BTreeMap::new(),
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |r: f64| !(r > 0.0) || !r.is_finite();
        if bad(self.radius_r) || self.per_class_radius.values().any(|&r| bad(r)) {
            return Err(Error::InvalidConfig("ensemble radii must be > 0".into()));
        }
        Ok(())
    }

    pub fn radius_for(&self, class: AgentClass) -> f64 {
        self.per_class_radius
            .get(&class)
            .copied()
            .unwrap_or(self.radius_r)
    }
}

/// Score-weighted average of a group of same-class detections.
///
/// The fused score is the group maximum and `source_model` is cleared.
pub fn fuse_group(group: &[Detection]) -> Result<Detection> {
    let first = group.first().ok_or(Error::EmptyGroup)?;
    if group.len() == 1 {
        return Ok(Detection {
            source_model: None,
            ..*first
        });
    }

    let mut weight_sum: f64 = group.iter().map(|d| d.score).sum();
    // All-zero scores degrade to an unweighted mean.
    let uniform = weight_sum <= 0.0;
    if uniform {
        weight_sum = group.len() as f64;
    }
    let w = |d: &Detection| if uniform { 1.0 } else { d.score };

    // Offsets from the first member keep the fusion of identical boxes exact.
    let mean = |f: fn(&Box3D) -> f64| -> f64 {
        let base = f(&first.bbox);
        base + group.iter().map(|d| w(d) * (f(&d.bbox) - base)).sum::<f64>() / weight_sum
    };
    let sin: f64 = group.iter().map(|d| w(d) * (d.bbox.yaw - first.bbox.yaw).sin()).sum();
    let cos: f64 = group.iter().map(|d| w(d) * (d.bbox.yaw - first.bbox.yaw).cos()).sum();
    let yaw = if sin == 0.0 && cos == 0.0 {
        first.bbox.yaw
    } else {
        wrap_angle(first.bbox.yaw + sin.atan2(cos))
    };

    let bbox = Box3D {
        cx: mean(|b| b.cx),
        cy: mean(|b| b.cy),
        cz: mean(|b| b.cz),
        length: mean(|b| b.length),
        width: mean(|b| b.width),
        height: mean(|b| b.height),
        yaw,
    };
    let score = group.iter().map(|d| d.score).fold(f64::NEG_INFINITY, f64::max);
    Ok(Detection {
        bbox,
        agent_class: first.agent_class,
        score,
        frame: first.frame,
        source_model: None,
    })
}

fn processing_order(a: &Detection, b: &Detection) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.bbox.cx.total_cmp(&b.bbox.cx))
        .then(a.bbox.cy.total_cmp(&b.bbox.cy))
        .then(a.source_model.cmp(&b.source_model))
}

/// Greedy clustering behind [`merge_frame`]. Each inner vector is one group,
/// reference detection first; every input lands in exactly one group.
pub fn cluster_frame(
    detections: &[Detection],
    config: &EnsembleConfig,
) -> Result<Vec<Vec<Detection>>> {
    if let Some(first) = detections.first() {
        if let Some(other) = detections.iter().find(|d| d.frame != first.frame) {
            return Err(Error::MixedFrames(first.frame, other.frame));
        }
    }

    let mut by_class: BTreeMap<AgentClass, Vec<Detection>> = BTreeMap::new();
    for d in detections {
        by_class.entry(d.agent_class).or_default().push(*d);
    }

    let mut groups = Vec::new();
    for (class, mut pool) in by_class {
        let radius = config.radius_for(class);
        pool.sort_by(processing_order);
        let mut taken = vec![false; pool.len()];
        for i in 0..pool.len() {
            if taken[i] {
                continue;
            }
            let reference = pool[i].bbox;
            let mut group = Vec::new();
            for j in i..pool.len() {
                if !taken[j] && center_distance_2d(&reference, &pool[j].bbox) < radius {
                    taken[j] = true;
                    group.push(pool[j]);
                }
            }
            groups.push(group);
        }
    }
    Ok(groups)
}

/// Merges all model outputs for a single frame.
///
/// Output is sorted by descending fused score (ties as in the processing
/// order).
pub fn merge_frame(detections: &[Detection], config: &EnsembleConfig) -> Result<Vec<Detection>> {
    let mut fused = cluster_frame(detections, config)?
        .iter()
        .map(|g| fuse_group(g))
        .collect::<Result<Vec<_>>>()?;
    fused.sort_by(processing_order);
    Ok(fused)
}
