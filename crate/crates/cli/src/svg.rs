//! Contour plots of P1 fields by marching triangles.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io;
use std::path::Path;

use pconcave::{Point, ScalarField};

const WIDTH: f64 = 640.0;
const MARGIN: f64 = 20.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    pub points: Vec<Point>,
    pub closed: bool,
}

type EdgeKey = (usize, usize);

fn key(a: usize, b: usize) -> EdgeKey {
    (a.min(b), a.max(b))
}

/// Level curves `{u_h = level}` of a planar P1 field, chained into polylines.
/// A vertex counts as inside the superlevel set when its value is at least
/// `level`, so a constant field has no curves.
pub fn contour_lines(field: &ScalarField, level: f64) -> Vec<Polyline> {
    let mesh = field.mesh();
    let (nodes, u) = (mesh.nodes(), field.values());
    let mut keys: Vec<EdgeKey> = Vec::new();
    let mut index: HashMap<EdgeKey, usize> = HashMap::new();
    let mut adj: Vec<Vec<usize>> = Vec::new();
    let mut slot = |k: EdgeKey, keys: &mut Vec<EdgeKey>, adj: &mut Vec<Vec<usize>>| {
        *index.entry(k).or_insert_with(|| {
            keys.push(k);
            adj.push(Vec::new());
            keys.len() - 1
        })
    };
    for el in mesh.elements() {
        let v = el.vertices();
        if v.len() != 3 {
            continue;
        }
        let crossing: Vec<EdgeKey> =
            (0..3).map(|k| (v[k], v[(k + 1) % 3])).filter(|&(a, b)| (u[a] >= level) != (u[b] >= level)).map(|(a, b)| key(a, b)).collect();
        if let [e1, e2] = crossing[..] {
            let (i, j) = (slot(e1, &mut keys, &mut adj), slot(e2, &mut keys, &mut adj));
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    let point = |(a, b): EdgeKey| {
        let t = (level - u[a]) / (u[b] - u[a]);
        [nodes[a][0] + t * (nodes[b][0] - nodes[a][0]), nodes[a][1] + t * (nodes[b][1] - nodes[a][1])]
    };
    let mut seen = vec![false; keys.len()];
    let mut lines = Vec::new();
    let walk = |start: usize, seen: &mut Vec<bool>| {
        let mut path = vec![start];
        seen[start] = true;
        let mut cur = start;
        while let Some(&next) = adj[cur].iter().find(|&&n| !seen[n]) {
            seen[next] = true;
            path.push(next);
            cur = next;
        }
        let closed = path.len() > 2 && adj[cur].contains(&start);
        Polyline { points: path.into_iter().map(|k| point(keys[k])).collect(), closed }
    };
    // open curves end on the mesh boundary; start them there so they are not split
    for s in 0..keys.len() {
        if !seen[s] && adj[s].len() == 1 {
            lines.push(walk(s, &mut seen));
        }
    }
    for s in 0..keys.len() {
        if !seen[s] {
            lines.push(walk(s, &mut seen));
        }
    }
    lines
}

/// Mesh edges that belong to a single triangle.
fn outline(field: &ScalarField) -> Vec<EdgeKey> {
    let mut count: HashMap<EdgeKey, usize> = HashMap::new();
    let mut order = Vec::new();
    for el in field.mesh().elements() {
        let v = el.vertices();
        for k in 0..v.len() {
            let e = key(v[k], v[(k + 1) % v.len()]);
            let c = count.entry(e).or_insert(0);
            if *c == 0 {
                order.push(e);
            }
            *c += 1;
        }
    }
    order.into_iter().filter(|e| count[e] == 1).collect()
}

/// SVG document with the domain outline, the level curves, and an optional
/// scatter of violation points.
pub fn render_svg(field: &ScalarField, levels: &[f64], violations: Option<&[Point]>) -> io::Result<String> {
    let mesh = field.mesh();
    if mesh.dim() != 2 {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "contour plots need a two-dimensional field"));
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in mesh.nodes() {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let scale = (WIDTH - 2.0 * MARGIN) / (hi[0] - lo[0]).max(hi[1] - lo[1]);
    let height = 2.0 * MARGIN + scale * (hi[1] - lo[1]);
    let map = |p: Point| (MARGIN + scale * (p[0] - lo[0]), height - MARGIN - scale * (p[1] - lo[1]));

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH:.0}" height="{height:.0}" viewBox="0 0 {WIDTH:.0} {height:.0}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let mut d = String::new();
    for (a, b) in outline(field) {
        let ((x0, y0), (x1, y1)) = (map(mesh.nodes()[a]), map(mesh.nodes()[b]));
        let _ = write!(d, "M{x0:.3} {y0:.3}L{x1:.3} {y1:.3}");
    }
    let _ = writeln!(s, r#"<path class="outline" d="{d}" fill="none" stroke="black" stroke-width="1.5"/>"#);
    for (i, &level) in levels.iter().enumerate() {
        let t = if levels.len() > 1 { i as f64 / (levels.len() - 1) as f64 } else { 0.5 };
        let color = format!("rgb({:.0},{:.0},{:.0})", 40.0 + 200.0 * t, 80.0, 220.0 - 180.0 * t);
        for line in contour_lines(field, level) {
            let mut d = String::new();
            for (k, &p) in line.points.iter().enumerate() {
                let (x, y) = map(p);
                let _ = write!(d, "{}{x:.3} {y:.3}", if k == 0 { 'M' } else { 'L' });
            }
            if line.closed {
                d.push('Z');
            }
            let _ = writeln!(s, r#"<path class="level" data-level="{level}" d="{d}" fill="none" stroke="{color}" stroke-width="1"/>"#);
        }
    }
    for &p in violations.unwrap_or(&[]) {
        let (x, y) = map(p);
        let _ = writeln!(s, r#"<circle class="violation" cx="{x:.3}" cy="{y:.3}" r="2" fill="red"/>"#);
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Writes [`render_svg`] to `path`.
pub fn emit_svg_contour(field: &ScalarField, levels: &[f64], violations: Option<&[Point]>, path: &Path) -> io::Result<()> {
    std::fs::write(path, render_svg(field, levels, violations)?)
}

/// `n` values spaced evenly strictly between the field minimum and maximum.
pub fn even_levels(field: &ScalarField, n: usize) -> Vec<f64> {
    let lo = field.values().iter().copied().fold(f64::INFINITY, f64::min);
    let hi = field.max();
    (1..=n).map(|k| lo + (hi - lo) * k as f64 / (n + 1) as f64).collect()
}
