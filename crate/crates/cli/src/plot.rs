//! SVG drawing of one solution.

use std::fmt::Write;

use insert_nco::instance::{Instance, ProblemKind};
use insert_nco::solution::CyclicSolution;

const SIZE: f64 = 600.0;
const MARGIN: f64 = 20.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"];

/// Routes as closed polylines (one color per route), nodes as dots and the
/// depot as a square.
pub fn svg(inst: &Instance, sol: &CyclicSolution) -> String {
    let pts = inst.coords();
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in pts {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    let span = (x1 - x0).max(y1 - y0).max(1e-12);
    let scale = (SIZE - 2.0 * MARGIN) / span;
    // flip y so larger y is up
    let at = |i: usize| (MARGIN + (pts[i].x - x0) * scale, SIZE - MARGIN - (pts[i].y - y0) * scale);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#);
    let _ = writeln!(s, r#"<title>{} length {:.4}</title>"#, escape(inst.name()), sol.length_unchecked(inst));
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    for (k, route) in sol.routes(inst.kind()).iter().enumerate() {
        let mut nodes: Vec<usize> = route.to_vec();
        if inst.kind() == ProblemKind::Cvrp {
            nodes.insert(0, 0);
        }
        if nodes.is_empty() {
            continue;
        }
        let path: Vec<String> = nodes.iter().map(|&v| at(v)).map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(
            s,
            r#"<polygon points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
            path.join(" "),
            COLORS[k % COLORS.len()]
        );
    }
    for i in 0..inst.len() {
        let (x, y) = at(i);
        if inst.depot() == Some(i) {
            let _ = writeln!(s, r##"<rect x="{:.2}" y="{:.2}" width="10" height="10" fill="#000000"/>"##, x - 5.0, y - 5.0);
        } else {
            let _ = writeln!(s, r##"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="#333333"/>"##);
        }
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use insert_nco::geometry::Point;

    #[test]
    fn one_polygon_per_route() {
        let coords = vec![Point::new(0.5, 0.5), Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(1.0, 1.0)];
        let inst = Instance::cvrp("c<1>", coords, vec![0.0, 1.0, 1.0, 1.0], 2.0).unwrap();
        let sol = CyclicSolution::new(vec![1, 2, 0, 3]);
        let out = svg(&inst, &sol);
        assert_eq!(out.matches("<polygon").count(), 2);
        assert_eq!(out.matches("<circle").count(), 3);
        assert!(out.contains("c&lt;1&gt;"));
    }
}
