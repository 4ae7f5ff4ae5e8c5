use super::{Track, TrackPoint};
use crate::model::{wrap_angle, Box3D};

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

fn lerp_box(a: &Box3D, b: &Box3D, t: f64) -> Box3D {
    Box3D {
        cx: lerp(a.cx, b.cx, t),
        cy: lerp(a.cy, b.cy, t),
        cz: lerp(a.cz, b.cz, t),
        length: lerp(a.length, b.length, t),
        width: lerp(a.width, b.width, t),
        height: lerp(a.height, b.height, t),
        // shorter arc
        yaw: wrap_angle(a.yaw + wrap_angle(b.yaw - a.yaw) * t),
    }
}

/// Replaces every unobserved point that sits between two observed points by
/// the linear interpolation of its bounding observations. Leading and
/// trailing unobserved points are left as they are.
pub fn fill_interior_gaps(track: &Track) -> Track {
    let mut out = track.clone();
    let observed: Vec<usize> = track
        .points
        .iter()
        .enumerate()
        .filter(|(_, p)| p.observed)
        .map(|(i, _)| i)
        .collect();
    for w in observed.windows(2) {
        let (i0, i1) = (w[0], w[1]);
        if i1 == i0 + 1 {
            continue;
        }
        let p0 = track.points[i0];
        let p1 = track.points[i1];
        let span = (p1.frame - p0.frame) as f64;
        for p in &mut out.points[i0 + 1..i1] {
            let t = (p.frame - p0.frame) as f64 / span;
            *p = TrackPoint {
                frame: p.frame,
                bbox: lerp_box(&p0.bbox, &p1.bbox, t),
                observed: false,
            };
        }
    }
    out
}

/// Offline gap filling for a finished track: interior gaps are linearly
/// interpolated (flagged unobserved) and unobserved points at either end are
/// dropped.
pub fn interpolate_gaps(track: &Track) -> Track {
    let mut out = fill_interior_gaps(track);
    let first = out.points.iter().position(|p| p.observed);
    let last = out.points.iter().rposition(|p| p.observed);
    out.points = match (first, last) {
        (Some(a), Some(b)) => out.points[a..=b].to_vec(),
        _ => Vec::new(),
    };
    out
}
