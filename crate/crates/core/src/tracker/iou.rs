use crate::error::{Error, Result};
use crate::model::Box3D;

type Pt = [f64; 2];

fn cross(o: Pt, a: Pt, b: Pt) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn polygon_area(poly: &[Pt]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..poly.len() {
        let p = poly[i];
        let q = poly[(i + 1) % poly.len()];
        acc += p[0] * q[1] - q[0] * p[1];
    }
    acc.abs() / 2.0
}

/// Sutherland–Hodgman clip of `subject` against convex CCW `clip`.
fn clip_convex(subject: &[Pt], clip: &[Pt]) -> Vec<Pt> {
    let mut output = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % clip.len()];
        let input = std::mem::take(&mut output);
        for k in 0..input.len() {
            let cur = input[k];
            let prev = input[(k + input.len() - 1) % input.len()];
            let cur_in = cross(a, b, cur) >= 0.0;
            let prev_in = cross(a, b, prev) >= 0.0;
            if cur_in {
                if !prev_in {
                    output.push(segment_line_intersection(prev, cur, a, b));
                }
                output.push(cur);
            } else if prev_in {
                output.push(segment_line_intersection(prev, cur, a, b));
            }
        }
    }
    output
}

fn segment_line_intersection(p: Pt, q: Pt, a: Pt, b: Pt) -> Pt {
    let d1 = cross(a, b, p);
    let d2 = cross(a, b, q);
    let t = d1 / (d1 - d2);
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
}

/// Area of the ground-plane overlap of two oriented boxes.
pub fn bev_intersection_area(a: &Box3D, b: &Box3D) -> f64 {
    let pa = a.bev_corners();
    let pb = b.bev_corners();
    polygon_area(&clip_convex(&pa, &pb))
}

/// 3D IoU of two yaw-only oriented boxes: BEV polygon overlap times vertical
/// overlap, over the union volume.
pub fn iou3d(a: &Box3D, b: &Box3D) -> Result<f64> {
    if a.volume() <= 0.0 || b.volume() <= 0.0 || !a.volume().is_finite() || !b.volume().is_finite()
    {
        return Err(Error::InvalidBox("zero-volume box in IoU".into()));
    }
    if a == b {
        return Ok(1.0);
    }
    let z_lo = (a.cz - a.height / 2.0).max(b.cz - b.height / 2.0);
    let z_hi = (a.cz + a.height / 2.0).min(b.cz + b.height / 2.0);
    let dz = (z_hi - z_lo).max(0.0);
    if dz == 0.0 {
        return Ok(0.0);
    }
    // cheap reject on circumscribed circles
    let ra = a.length.hypot(a.width) / 2.0;
    let rb = b.length.hypot(b.width) / 2.0;
    if (a.cx - b.cx).hypot(a.cy - b.cy) >= ra + rb {
        return Ok(0.0);
    }
    let inter = bev_intersection_area(a, b) * dz;
    let union = a.volume() + b.volume() - inter;
    Ok((inter / union).clamp(0.0, 1.0))
}
