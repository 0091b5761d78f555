//! SVG keyframes of a plan: the start state and the state after each
//! action, laid out on a grid.

use std::fmt::Write;

use crate::geom::Pose2;
use crate::search::Plan;
use crate::world::{Task, WorldState};

const FRAME_PX: f64 = 260.0;
const COLUMNS: usize = 4;
const MARGIN: f64 = 0.25;

fn color(label: &str) -> &'static str {
    match label {
        "blue" => "#3a6fd8",
        "green" => "#2e9e4f",
        "red" => "#d0433b",
        _ => "#c9a66b",
    }
}

/// One frame per state; frame `i > 0` also carries the base path of
/// action `i - 1`.
pub fn keyframes(task: &Task, plan: Option<&Plan>) -> Vec<(WorldState, Vec<Pose2>)> {
    match plan {
        None => vec![(task.start.clone(), Vec::new())],
        Some(p) => p
            .states
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), if i == 0 { Vec::new() } else { p.steps[i - 1].base_path.clone() }))
            .collect(),
    }
}

struct View {
    min_x: f64,
    max_y: f64,
    scale: f64,
    w: f64,
    h: f64,
}

impl View {
    fn fit(task: &Task, frames: &[(WorldState, Vec<Pose2>)]) -> View {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for t in &task.tables {
            xs.extend([t.rect.min_x(), t.rect.max_x()]);
            ys.extend([t.rect.min_y(), t.rect.max_y()]);
        }
        for (s, path) in frames {
            for p in std::iter::once(&s.base).chain(path) {
                xs.push(p.x);
                ys.push(p.y);
            }
        }
        let lo = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min) - MARGIN;
        let hi = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max) + MARGIN;
        let (min_x, max_x, min_y, max_y) = (lo(&xs), hi(&xs), lo(&ys), hi(&ys));
        let scale = FRAME_PX / (max_x - min_x).max(max_y - min_y);
        View { min_x, max_y, scale, w: (max_x - min_x) * scale, h: (max_y - min_y) * scale }
    }

    fn px(&self, p: &Pose2) -> (f64, f64) {
        ((p.x - self.min_x) * self.scale, (self.max_y - p.y) * self.scale)
    }
}

fn frame(out: &mut String, task: &Task, v: &View, idx: usize, state: &WorldState, path: &[Pose2]) {
    for t in &task.tables {
        let (x, y) = v.px(&Pose2::at(t.rect.min_x(), t.rect.max_y()));
        let _ = writeln!(
            out,
            r##"    <rect class="table" x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="#e8e2d4" stroke="#8a7f66"/>"##,
            2.0 * t.rect.hx * v.scale,
            2.0 * t.rect.hy * v.scale
        );
    }
    if path.len() > 1 {
        let pts: Vec<String> = path.iter().map(|p| v.px(p)).map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(
            out,
            r##"    <polyline class="base-path" points="{}" fill="none" stroke="#555" stroke-dasharray="4 3"/>"##,
            pts.join(" ")
        );
    }
    for (o, p) in &state.object_poses {
        let obj = &task.objects[*o];
        let (x, y) = v.px(p);
        let _ = writeln!(
            out,
            r##"    <circle class="object" data-id="{o}" cx="{x:.2}" cy="{y:.2}" r="{:.2}" fill="{}" stroke="#222"/>"##,
            obj.radius * v.scale,
            color(&obj.label)
        );
        if obj.label.chars().count() == 1 {
            let _ = writeln!(
                out,
                r#"    <text x="{x:.2}" y="{:.2}" font-size="{:.1}" text-anchor="middle">{}</text>"#,
                y + obj.radius * v.scale * 0.5,
                obj.radius * v.scale * 1.3,
                obj.label
            );
        }
    }
    let br = task.robot.base_radius * v.scale;
    let (bx, by) = v.px(&state.base);
    let _ = writeln!(out, r##"    <circle class="base" cx="{bx:.2}" cy="{by:.2}" r="{br:.2}" fill="none" stroke="#222"/>"##);
    if let Some(h) = state.held {
        let obj = &task.objects[h.object];
        let _ = writeln!(
            out,
            r##"    <circle class="object held" data-id="{}" cx="{bx:.2}" cy="{by:.2}" r="{:.2}" fill="{}" stroke="#222"/>"##,
            h.object,
            obj.radius * v.scale,
            color(&obj.label)
        );
    }
    let _ = writeln!(out, r#"    <text x="4" y="14" font-size="12">{idx}</text>"#);
}

pub fn render_svg(task: &Task, plan: Option<&Plan>) -> String {
    let frames = keyframes(task, plan);
    let v = View::fit(task, &frames);
    let cols = frames.len().min(COLUMNS);
    let rows = frames.len().div_ceil(COLUMNS);
    let (cw, ch) = (v.w + 10.0, v.h + 10.0);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}">"#,
        cw * cols as f64,
        ch * rows as f64
    );
    for (i, (s, path)) in frames.iter().enumerate() {
        let (x, y) = ((i % COLUMNS) as f64 * cw, (i / COLUMNS) as f64 * ch);
        let _ = writeln!(out, r#"  <g class="frame" id="frame-{i}" transform="translate({x:.1},{y:.1})">"#);
        let _ = writeln!(out, r##"    <rect width="{:.2}" height="{:.2}" fill="white" stroke="#ccc"/>"##, v.w, v.h);
        frame(&mut out, task, &v, i, s, path);
        out.push_str("  </g>\n");
    }
    out.push_str("</svg>\n");
    out
}
