//! Bird's-eye-view SVG of one frame.
//!
//! Ground truth is gray, tracks and forecasts take a per-class color. Pasts
//! are dotted and futures solid. Detections are labelled with their score.

use std::fmt::Write as _;

use crate::io::SceneFile;
use crate::model::{AgentClass, Box3D, TimeBase};
use crate::tracker::KalmanParams;
use crate::Result;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#bcbd22", "#17becf", "#7f7f7f",
];
const GT_COLOR: &str = "#9a9a9a";

pub fn class_color(class: AgentClass) -> &'static str {
    let idx = AgentClass::ALL.iter().position(|c| *c == class).unwrap_or(0);
    PALETTE[idx % PALETTE.len()]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderConfig {
    /// Half-width of the square view around the ego, metres.
    pub extent_m: f64,
    pub px_per_m: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            extent_m: 50.0,
            px_per_m: 8.0,
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

struct Canvas {
    cfg: RenderConfig,
    out: String,
}

impl Canvas {
    fn px(&self, [x, y]: [f64; 2]) -> (f64, f64) {
        let e = self.cfg.extent_m;
        ((x + e) * self.cfg.px_per_m, (e - y) * self.cfg.px_per_m)
    }

    fn points(&self, pts: &[[f64; 2]]) -> String {
        pts.iter()
            .map(|p| {
                let (x, y) = self.px(*p);
                format!("{x:.2},{y:.2}")
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn rect(&mut self, b: &Box3D, color: &str, fill_opacity: f64) {
        let pts = self.points(&b.bev_corners());
        let _ = writeln!(
            self.out,
            r#"<polygon points="{pts}" fill="{color}" fill-opacity="{fill_opacity}" stroke="{color}" stroke-width="1"/>"#
        );
    }

    fn path(&mut self, pts: &[[f64; 2]], color: &str, dotted: bool, opacity: f64) {
        if pts.len() < 2 {
            return;
        }
        let dash = if dotted { r#" stroke-dasharray="2,3""# } else { "" };
        let pts = self.points(pts);
        let _ = writeln!(
            self.out,
            r#"<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5" stroke-opacity="{opacity:.3}"{dash}/>"#
        );
    }

    fn label(&mut self, at: [f64; 2], text: &str, color: &str) {
        let (x, y) = self.px(at);
        let _ = writeln!(
            self.out,
            r#"<text x="{:.2}" y="{:.2}" font-size="9" fill="{color}">{}</text>"#,
            x + 4.0,
            y - 4.0,
            escape(text)
        );
    }
}

/// Renders `frame` of the scene. One `<g class="agent ...">` is emitted for
/// every ground-truth agent and every track present at that frame.
pub fn render_svg(file: &SceneFile, frame: i64, time: &TimeBase, cfg: RenderConfig) -> Result<String> {
    let size = 2.0 * cfg.extent_m * cfg.px_per_m;
    let mut c = Canvas { cfg, out: String::new() };
    let _ = writeln!(
        c.out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size:.0}" height="{size:.0}" viewBox="0 0 {size:.0} {size:.0}">"#
    );
    let _ = writeln!(c.out, "<title>{} frame {frame}</title>", escape(&file.header.scene_id));
    let _ = writeln!(c.out, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let (ex, ey) = c.px([0.0, 0.0]);
    let _ = writeln!(c.out, r##"<circle class="ego" cx="{ex:.2}" cy="{ey:.2}" r="4" fill="#000000"/>"##);

    let past = time.past_frames() as i64;
    let horizon = time.horizon_steps as i64;
    let centers = |samples: &mut dyn Iterator<Item = (i64, [f64; 2])>, lo: i64, hi: i64| -> Vec<[f64; 2]> {
        samples.filter(|(f, _)| *f >= lo && *f <= hi).map(|(_, p)| p).collect()
    };

    for g in file.gt_agents() {
        let Some(now) = g.box_at(frame).copied() else { continue };
        let _ = writeln!(
            c.out,
            r#"<g class="agent gt" data-id="{}" data-class="{}">"#,
            g.id,
            g.agent_class.as_str()
        );
        c.rect(&now, GT_COLOR, 0.25);
        let mut it = g.samples.iter().map(|(f, b)| (*f, b.center_xy()));
        let p = centers(&mut it, frame - past, frame);
        c.path(&p, GT_COLOR, true, 1.0);
        let mut it = g.samples.iter().map(|(f, b)| (*f, b.center_xy()));
        let fut = centers(&mut it, frame, frame + horizon);
        c.path(&fut, GT_COLOR, false, 1.0);
        c.out.push_str("</g>\n");
    }

    for t in file.tracks(&KalmanParams::default())? {
        let Some(now) = t.point_at(frame) else { continue };
        let color = class_color(t.agent_class);
        let _ = writeln!(
            c.out,
            r#"<g class="agent track" data-id="{}" data-class="{}">"#,
            t.id,
            t.agent_class.as_str()
        );
        c.rect(&now.bbox, color, 0.1);
        let mut it = t.points.iter().map(|p| (p.frame, p.bbox.center_xy()));
        let p = centers(&mut it, frame - past, frame);
        c.path(&p, color, true, 1.0);
        for f in file.forecast.iter().filter(|f| f.frame == frame && f.track_id == t.id) {
            for m in &f.modes {
                let mut pts = vec![[f.x, f.y]];
                pts.extend_from_slice(m.trajectory.waypoints());
                c.path(&pts, color, false, 0.3 + 0.7 * m.score.clamp(0.0, 1.0));
            }
        }
        c.out.push_str("</g>\n");
    }

    c.out.push_str("<g class=\"detections\">\n");
    for d in file.det.iter().filter(|d| d.frame == frame) {
        let color = class_color(d.class);
        c.label([d.bbox.cx, d.bbox.cy], &format!("{:.2}", d.score), color);
    }
    c.out.push_str("</g>\n</svg>\n");
    Ok(c.out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{run, PipelineConfig};

    #[test]
    fn svg_is_well_formed_with_one_group_per_agent() {
        let cfg = PipelineConfig::default();
        let (mut file, _) = run(&cfg, 3).unwrap();
        file.header.scene_id = "a<b & \"c\"".into();
        let frame = 30;
        let svg = render_svg(&file, frame, &cfg.time, RenderConfig::default()).unwrap();
        let doc = roxmltree::Document::parse(&svg).unwrap();
        let groups: Vec<_> = doc
            .descendants()
            .filter(|n| n.attribute("class").is_some_and(|c| c.split(' ').any(|w| w == "agent")))
            .collect();
        let n_gt = file.gt.iter().filter(|g| g.frame == frame).count();
        let n_trk = file.trk.iter().filter(|t| t.frame == frame).count();
        assert_eq!(groups.len(), n_gt + n_trk);
        let labels = doc
            .descendants()
            .filter(|n| n.has_tag_name("text"))
            .count();
        assert_eq!(labels, file.det.iter().filter(|d| d.frame == frame).count());
    }

    #[test]
    fn gt_is_gray_and_pasts_dotted() {
        let cfg = PipelineConfig::oracle();
        let (file, _) = run(&cfg, 1).unwrap();
        let svg = render_svg(&file, 30, &cfg.time, RenderConfig::default()).unwrap();
        let doc = roxmltree::Document::parse(&svg).unwrap();
        for g in doc.descendants().filter(|n| n.attribute("class") == Some("agent gt")) {
            for child in g.children().filter(|n| n.is_element()) {
                assert_eq!(child.attribute("stroke"), Some(GT_COLOR));
            }
            let lines: Vec<_> = g.children().filter(|n| n.has_tag_name("polyline")).collect();
            assert_eq!(lines.len(), 2);
            assert!(lines[0].attribute("stroke-dasharray").is_some());
            assert!(lines[1].attribute("stroke-dasharray").is_none());
        }
    }
}
