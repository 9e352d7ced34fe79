//! Minimal SVG line plots for learning curves and lift paths. Output is plain
//! text, so nothing here needs a display or a graphics library.

use std::fmt::Write;

use crate::eval::Trajectory;
use crate::ppo::CurveRow;
use crate::world::World;

const PANEL_W: f64 = 420.0;
const PANEL_H: f64 = 320.0;
const MARGIN: f64 = 48.0;

#[derive(Debug, Clone, Default)]
struct Panel {
    title: String,
    xlabel: String,
    ylabel: String,
    lines: Vec<(Vec<(f64, f64)>, &'static str)>,
    rects: Vec<([f64; 4], &'static str)>,
    markers: Vec<((f64, f64), &'static str)>,
    equal_aspect: bool,
}

impl Panel {
    fn bounds(&self) -> [f64; 4] {
        let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
        let mut add = |x: f64, y: f64| {
            if x.is_finite() && y.is_finite() {
                b = [b[0].min(x), b[1].min(y), b[2].max(x), b[3].max(y)];
            }
        };
        for (pts, _) in &self.lines {
            pts.iter().for_each(|&(x, y)| add(x, y));
        }
        for (r, _) in &self.rects {
            add(r[0], r[1]);
            add(r[2], r[3]);
        }
        for ((x, y), _) in &self.markers {
            add(*x, *y);
        }
        if !b[0].is_finite() {
            return [0.0, 0.0, 1.0, 1.0];
        }
        for (lo, hi) in [(0, 2), (1, 3)] {
            let pad = 0.05 * (b[hi] - b[lo]).max(1e-9);
            b[lo] -= pad;
            b[hi] += pad;
        }
        if self.equal_aspect {
            let (w, h) = (PANEL_W - 2.0 * MARGIN, PANEL_H - 2.0 * MARGIN);
            let scale = ((b[2] - b[0]) / w).max((b[3] - b[1]) / h);
            let (cx, cy) = (0.5 * (b[0] + b[2]), 0.5 * (b[1] + b[3]));
            b = [cx - 0.5 * scale * w, cy - 0.5 * scale * h, cx + 0.5 * scale * w, cy + 0.5 * scale * h];
        }
        b
    }

    fn render(&self, out: &mut String, x0: f64) {
        let b = self.bounds();
        let (w, h) = (PANEL_W - 2.0 * MARGIN, PANEL_H - 2.0 * MARGIN);
        let px = |x: f64| x0 + MARGIN + (x - b[0]) / (b[2] - b[0]) * w;
        let py = |y: f64| MARGIN + (1.0 - (y - b[1]) / (b[3] - b[1])) * h;
        let _ = writeln!(
            out,
            r#"<rect x="{:.1}" y="{MARGIN:.1}" width="{w:.1}" height="{h:.1}" fill="none" stroke="black"/>"#,
            x0 + MARGIN
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="14">{}</text>"#,
            x0 + PANEL_W / 2.0,
            MARGIN / 2.0,
            self.title
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="12">{}</text>"#,
            x0 + PANEL_W / 2.0,
            PANEL_H - 8.0,
            self.xlabel
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="12" transform="rotate(-90 {:.1} {:.1})">{}</text>"#,
            x0 + 14.0,
            PANEL_H / 2.0,
            x0 + 14.0,
            PANEL_H / 2.0,
            self.ylabel
        );
        for (i, (v, pos)) in [(b[0], px(b[0])), (b[2], px(b[2]))].into_iter().enumerate() {
            let anchor = if i == 0 { "start" } else { "end" };
            let _ = writeln!(
                out,
                r#"<text x="{pos:.1}" y="{:.1}" text-anchor="{anchor}" font-size="10">{}</text>"#,
                MARGIN + h + 14.0,
                tick(v)
            );
        }
        for v in [b[1], b[3]] {
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end" font-size="10">{}</text>"#,
                x0 + MARGIN - 4.0,
                py(v) + 4.0,
                tick(v)
            );
        }
        for (r, color) in &self.rects {
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{color}" fill-opacity="0.4" stroke="{color}"/>"#,
                px(r[0]),
                py(r[3]),
                px(r[2]) - px(r[0]),
                py(r[1]) - py(r[3])
            );
        }
        for (pts, color) in &self.lines {
            let coords: Vec<String> = pts
                .iter()
                .filter(|p| p.0.is_finite() && p.1.is_finite())
                .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
                .collect();
            let _ = writeln!(
                out,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                coords.join(" ")
            );
        }
        for ((x, y), color) in &self.markers {
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{color}"/>"#,
                px(*x),
                py(*y)
            );
        }
    }
}

fn tick(v: f64) -> String {
    if v.abs() >= 1e4 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn render(panels: &[Panel]) -> String {
    let width = PANEL_W * panels.len() as f64;
    let mut out = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{PANEL_H:.0}" viewBox="0 0 {width:.0} {PANEL_H:.0}">"#
    );
    out.push('\n');
    out.push_str(r#"<rect width="100%" height="100%" fill="white"/>"#);
    out.push('\n');
    for (i, p) in panels.iter().enumerate() {
        p.render(&mut out, i as f64 * PANEL_W);
    }
    out.push_str("</svg>\n");
    out
}

/// Mean cumulative reward against environment steps.
pub fn reward_curve_svg(rows: &[CurveRow]) -> String {
    render(&[Panel {
        title: "mean cumulative reward".into(),
        xlabel: "environment steps".into(),
        ylabel: "reward".into(),
        lines: vec![(
            rows.iter()
                .map(|r| (r.env_steps as f64, r.mean_cum_reward))
                .collect(),
            "steelblue",
        )],
        ..Panel::default()
    }])
}

/// Top-down (x, y) and side (x, z) views of the payload and boom-tip paths
/// with obstacles in grey, the start in green and the target in red.
pub fn path_svg(traj: &Trajectory, world: &World) -> String {
    let payload = |f: fn(&crate::eval::TrajectoryRow) -> (f64, f64)| {
        std::iter::once(f(&crate::eval::TrajectoryRow {
            payload_x: traj.start.x,
            payload_y: traj.start.y,
            payload_z: traj.start.z,
            ..traj.rows.first().copied().unwrap_or(crate::eval::TrajectoryRow {
                step: 0,
                tip_x: traj.start.x,
                tip_y: traj.start.y,
                tip_z: traj.start.z,
                payload_x: 0.0,
                payload_y: 0.0,
                payload_z: 0.0,
                rope_angle: 0.0,
                action_x: 0.0,
                action_y: 0.0,
                action_z: 0.0,
                reward: 0.0,
                cum_reward: 0.0,
            })
        }))
        .chain(traj.rows.iter().map(f))
        .collect::<Vec<_>>()
    };
    let top = Panel {
        title: format!("{} seed {} top view", traj.scenario, traj.seed),
        xlabel: "x (m)".into(),
        ylabel: "y (m)".into(),
        lines: vec![
            (traj.rows.iter().map(|r| (r.tip_x, r.tip_y)).collect(), "orange"),
            (payload(|r| (r.payload_x, r.payload_y)), "black"),
        ],
        rects: world
            .obstacles()
            .iter()
            .map(|o| ([o.min.x, o.min.y, o.max.x, o.max.y], "grey"))
            .collect(),
        markers: vec![
            ((traj.start.x, traj.start.y), "green"),
            ((traj.target.x, traj.target.y), "red"),
        ],
        equal_aspect: true,
    };
    let side = Panel {
        title: format!("side view, outcome {}", traj.outcome.as_str()),
        xlabel: "x (m)".into(),
        ylabel: "z (m)".into(),
        lines: vec![
            (traj.rows.iter().map(|r| (r.tip_x, r.tip_z)).collect(), "orange"),
            (payload(|r| (r.payload_x, r.payload_z)), "black"),
        ],
        rects: world
            .obstacles()
            .iter()
            .map(|o| ([o.min.x, o.min.z, o.max.x, o.max.z], "grey"))
            .collect(),
        markers: vec![
            ((traj.start.x, traj.start.z), "green"),
            ((traj.target.x, traj.target.z), "red"),
        ],
        equal_aspect: true,
    };
    render(&[top, side])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_plot_is_well_formed() {
        let rows: Vec<CurveRow> = (0..5)
            .map(|i| CurveRow {
                env_steps: 100 * i,
                mean_cum_reward: if i == 0 { f64::NAN } else { i as f64 },
                success_rate: 0.0,
                mean_rope_angle: 0.0,
                mean_ep_len: 0.0,
                wall_time_s: 0.0,
            })
            .collect();
        let svg = reward_curve_svg(&rows);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(!svg.contains("NaN"));
    }
}
