//! SVG rendering of one probability trajectory over its test-result bands.

use std::fmt::Write;

use longtrack::trajectory::{Trajectory, THRESHOLD};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 280.0;
const LEFT: f64 = 48.0;
const RIGHT: f64 = 16.0;
const TOP: f64 = 28.0;
const BOTTOM: f64 = 40.0;
const POSITIVE_FILL: &str = "#f5a142";
const NEGATIVE_FILL: &str = "#42c8f5";

/// Maximal runs of equal labels as (first index, last index, label).
pub fn label_runs(labels: &[bool]) -> Vec<(usize, usize, bool)> {
    let mut runs: Vec<(usize, usize, bool)> = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        match runs.last_mut() {
            Some(r) if r.2 == l => r.1 = i,
            _ => runs.push((i, i, l)),
        }
    }
    runs
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Probability polyline, dashed 0.5 rule, one shaded band per run of equal
/// labels (orange positive, cyan negative) and a day axis. Returns `None`
/// for an empty trajectory.
pub fn render_svg(t: &Trajectory) -> Option<String> {
    let pts = &t.points;
    if pts.is_empty() {
        return None;
    }
    let (d0, d1) = (pts[0].day as f64, pts[pts.len() - 1].day as f64);
    let span = (d1 - d0).max(1.0);
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let x = |d: f64| if pts.len() == 1 { LEFT + pw / 2.0 } else { LEFT + (d - d0) / span * pw };
    let y = |p: f64| TOP + (1.0 - p) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(s, r#"<title>{}</title>"#, esc(&t.participant_id));

    // bands span halfway to the neighbouring days
    let labels: Vec<bool> = pts.iter().map(|p| p.label).collect();
    let edge = |i: usize, left: bool| -> f64 {
        let d = pts[i].day as f64;
        if left {
            if i == 0 { LEFT } else { x((pts[i - 1].day as f64 + d) / 2.0) }
        } else if i + 1 == pts.len() {
            LEFT + pw
        } else {
            x((d + pts[i + 1].day as f64) / 2.0)
        }
    };
    let _ = writeln!(s, r#"<g class="bands" fill-opacity="0.25">"#);
    for (a, b, l) in label_runs(&labels) {
        let (x0, x1) = (edge(a, true), edge(b, false));
        let (cls, fill) = if l { ("band positive", POSITIVE_FILL) } else { ("band negative", NEGATIVE_FILL) };
        let _ = writeln!(s, r#"<rect class="{cls}" x="{x0:.2}" y="{TOP:.2}" width="{:.2}" height="{ph:.2}" fill="{fill}"/>"#, x1 - x0);
    }
    let _ = writeln!(s, "</g>");

    let _ = writeln!(s, r##"<rect class="frame" x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##);
    let ty = y(THRESHOLD);
    let _ = writeln!(s, r##"<line class="threshold" x1="{LEFT:.2}" y1="{ty:.2}" x2="{:.2}" y2="{ty:.2}" stroke="#888" stroke-dasharray="4 3"/>"##, LEFT + pw);
    for v in [0.0, 0.5, 1.0] {
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.1}</text>"#, LEFT - 6.0, y(v) + 4.0);
    }

    let axis_y = TOP + ph;
    let _ = writeln!(s, r##"<g class="day-axis" stroke="#444">"##);
    for p in pts {
        let px = x(p.day as f64);
        let _ = writeln!(s, r#"<line x1="{px:.2}" y1="{axis_y:.2}" x2="{px:.2}" y2="{:.2}"/>"#, axis_y + 4.0);
    }
    let _ = writeln!(s, "</g>");
    for p in pts {
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, x(p.day as f64), axis_y + 16.0, p.day);
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">day</text>"#, LEFT + pw / 2.0, HEIGHT - 6.0);

    let vertices: Vec<String> = pts.iter().map(|p| format!("{:.2},{:.2}", x(p.day as f64), y(p.probability))).collect();
    let _ = writeln!(s, r##"<polyline class="probability" points="{}" fill="none" stroke="#222" stroke-width="1.5"/>"##, vertices.join(" "));
    let _ = writeln!(s, "</svg>");
    Some(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn runs_merge_equal_neighbours() {
        assert_eq!(label_runs(&[true, true, false, false, true]), vec![(0, 1, true), (2, 3, false), (4, 4, true)]);
        assert!(label_runs(&[]).is_empty());
    }
}
