//! Top-down SVG of one scene.
//!
//! The ego heading (+x) points up the page and +y (left) points left. Ground
//! truth futures are dashed, the planned trajectory is solid, and the
//! attention description is printed below the map.

use std::fmt::Write;

use crate::describer::{describe, DescriptionMode};
use crate::evalkit::OrientedRect;
use crate::scene::{AgentClass, AgentState, MapKind, Point, Scene};

const PX: f64 = 640.0;
const LINE_H: f64 = 18.0;

struct View {
    extent: f64,
    scale: f64,
}

impl View {
    fn xy(&self, p: Point) -> (f64, f64) {
        (
            (self.extent - p[1]) * self.scale,
            (self.extent - p[0]) * self.scale,
        )
    }

    fn points(&self, pts: &[Point]) -> String {
        pts.iter()
            .map(|&p| {
                let (x, y) = self.xy(p);
                format!("{x:.2},{y:.2}")
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn class_color(c: AgentClass) -> &'static str {
    match c {
        AgentClass::Car => "#1f77b4",
        AgentClass::Pedestrian => "#d62728",
        AgentClass::Cyclist => "#2ca02c",
    }
}

fn map_style(k: MapKind) -> (&'static str, f64) {
    match k {
        MapKind::LaneDivider => ("#bbbbbb", 1.0),
        MapKind::RoadBoundary => ("#444444", 2.0),
        MapKind::PedCrossing => ("#e0a000", 3.0),
    }
}

fn rect(a: &AgentState) -> OrientedRect {
    OrientedRect::new(a.pos, a.heading, a.size)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// SVG document for `scene` covering `[-extent, extent]²`, with `plan` drawn
/// when given.
pub fn render_svg(scene: &Scene, plan: Option<&[Point]>, extent: f64) -> String {
    let v = View {
        extent,
        scale: PX / (2.0 * extent),
    };
    let desc = describe(scene, DescriptionMode::Ald);
    let clauses: Vec<String> = desc
        .clauses()
        .iter()
        .map(|c| c.map(|t| t.as_str()).join(" "))
        .collect();
    let lines = clauses.len().max(1);
    let height = PX + 16.0 + LINE_H * (lines as f64 + 1.0);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{PX:.0}" height="{height:.0}" viewBox="0 0 {PX:.0} {height:.0}">"#
    );
    let _ = writeln!(
        s,
        r##"<rect x="0" y="0" width="{PX:.0}" height="{height:.0}" fill="#ffffff"/>"##
    );
    let _ = writeln!(
        s,
        r##"<rect x="0" y="0" width="{PX:.0}" height="{PX:.0}" fill="#f4f4f0" stroke="#999999"/>"##
    );

    let _ = writeln!(s, r#"<g id="map" fill="none">"#);
    for m in &scene.map {
        let (color, w) = map_style(m.kind);
        let _ = writeln!(
            s,
            r#"<polyline points="{}" stroke="{color}" stroke-width="{w}"/>"#,
            v.points(&m.points)
        );
    }
    let _ = writeln!(s, "</g>");

    let _ = writeln!(s, r#"<g id="gt" fill="none" stroke-dasharray="4 3">"#);
    for (a, fut) in scene.agents.iter().zip(&scene.gt_future.agents) {
        let mut path = vec![a.pos];
        path.extend_from_slice(fut);
        let _ = writeln!(
            s,
            r#"<polyline points="{}" stroke="{}" stroke-width="1.5"/>"#,
            v.points(&path),
            class_color(a.class)
        );
    }
    let mut ego_path = vec![scene.ego.pos];
    ego_path.extend_from_slice(&scene.gt_future.ego);
    let _ = writeln!(
        s,
        r##"<polyline points="{}" stroke="#000000" stroke-width="1.5"/>"##,
        v.points(&ego_path)
    );
    let _ = writeln!(s, "</g>");

    let _ = writeln!(s, r#"<g id="agents" fill-opacity="0.6">"#);
    for a in &scene.agents {
        let c = class_color(a.class);
        let _ = writeln!(
            s,
            r#"<polygon points="{}" fill="{c}" stroke="{c}"/>"#,
            v.points(&rect(a).corners())
        );
    }
    let _ = writeln!(
        s,
        r##"<polygon points="{}" fill="#000000" stroke="#000000"/>"##,
        v.points(&rect(&scene.ego).corners())
    );
    let _ = writeln!(s, "</g>");

    if let Some(plan) = plan {
        let mut path = vec![scene.ego.pos];
        path.extend_from_slice(plan);
        let _ = writeln!(
            s,
            r##"<polyline id="plan" points="{}" fill="none" stroke="#ff7f0e" stroke-width="2.5"/>"##,
            v.points(&path)
        );
    }

    let _ = writeln!(
        s,
        r#"<g id="caption" font-family="monospace" font-size="13">"#
    );
    let mut y = PX + 16.0 + LINE_H * 0.5;
    let _ = writeln!(
        s,
        r#"<text x="8" y="{y:.1}">command: {:?}</text>"#,
        scene.command
    );
    if clauses.is_empty() {
        y += LINE_H;
        let _ = writeln!(s, r#"<text x="8" y="{y:.1}">NONE</text>"#);
    }
    for c in &clauses {
        y += LINE_H;
        let _ = writeln!(s, r#"<text x="8" y="{y:.1}">{}</text>"#, escape(c));
    }
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenegen::{generate_scene, GeneratorConfig};

    #[test]
    fn deterministic_and_complete() {
        let scene = generate_scene(11, &GeneratorConfig::default()).unwrap();
        let a = render_svg(&scene, None, 50.0);
        assert_eq!(a, render_svg(&scene, None, 50.0));
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
        assert_eq!(a.matches("<polygon").count(), scene.agents.len() + 1);
        assert!(!a.contains("id=\"plan\""));
        let plan = scene.gt_future.ego.clone();
        assert!(render_svg(&scene, Some(&plan), 50.0).contains("id=\"plan\""));
    }

    #[test]
    fn ego_maps_to_center_heading_up() {
        let v = View {
            extent: 50.0,
            scale: 6.4,
        };
        assert_eq!(v.xy([0.0, 0.0]), (320.0, 320.0));
        let (x, y) = v.xy([10.0, 0.0]);
        assert_eq!(x, 320.0);
        assert!(y < 320.0);
    }
}
