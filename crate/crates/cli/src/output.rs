//! CSV artifacts. Floats are written in shortest round-trip form, so reading a
//! file back reproduces the values bit for bit.

use std::collections::HashMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use pconcave::concavity::convex_hull;
use pconcave::geometry::{make_polygon, Element};
use pconcave::optim::TraceEntry;
use pconcave::transform::TransformSpec;
use pconcave::{ConcavityReport, ConvexDomain, HypothesisReport, Mesh, Point, ScalarField};

use crate::CliError;

fn writer(path: &Path) -> Result<csv::Writer<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    csv::Writer::from_path(path).map_err(|e| CliError::csv(path, e))
}

fn finish(mut w: csv::Writer<File>, path: &Path) -> Result<(), CliError> {
    w.flush().map_err(|e| CliError::io(path, e))
}

fn row<I, S>(w: &mut csv::Writer<File>, path: &Path, fields: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    w.write_record(fields).map_err(|e| CliError::csv(path, e))
}

/// `solution.csv` → `solution.elements.csv`.
pub fn elements_path(solution: &Path) -> PathBuf {
    let stem = solution.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "solution".into());
    solution.with_file_name(format!("{stem}.elements.csv"))
}

/// Writes `node_id,x,y,u` to `path` and the element table next to it.
pub fn write_solution(path: &Path, field: &ScalarField) -> Result<(), CliError> {
    let mut w = writer(path)?;
    row(&mut w, path, ["node_id", "x", "y", "u"])?;
    for (i, (p, u)) in field.mesh().nodes().iter().zip(field.values()).enumerate() {
        row(&mut w, path, [i.to_string(), p[0].to_string(), p[1].to_string(), u.to_string()])?;
    }
    finish(w, path)?;
    let epath = elements_path(path);
    let mut w = writer(&epath)?;
    row(&mut w, &epath, ["id", "n0", "n1", "n2"])?;
    for (i, el) in field.mesh().elements().iter().enumerate() {
        let v = el.vertices();
        let n2 = v.get(2).map(|x| x.to_string()).unwrap_or_default();
        row(&mut w, &epath, [i.to_string(), v[0].to_string(), v[1].to_string(), n2])?;
    }
    finish(w, &epath)
}

fn parse<T: std::str::FromStr>(s: Option<&str>, path: &Path, line: usize) -> Result<T, CliError> {
    s.map(str::trim)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| CliError::Input(format!("{}: malformed row {line}", path.display())))
}

/// Reads a solution written by [`write_solution`]. Boundary nodes are those
/// on edges that belong to a single element.
pub fn read_solution(path: &Path, elements: &Path) -> Result<ScalarField, CliError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::csv(path, e))?;
    let mut nodes = Vec::new();
    let mut values = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::csv(path, e))?;
        let id: usize = parse(rec.get(0), path, line + 2)?;
        if id != nodes.len() {
            return Err(CliError::Input(format!("{}: node ids must be 0, 1, 2, ... (row {})", path.display(), line + 2)));
        }
        nodes.push([parse(rec.get(1), path, line + 2)?, parse(rec.get(2), path, line + 2)?]);
        values.push(parse(rec.get(3), path, line + 2)?);
    }
    let mut rdr = csv::Reader::from_path(elements).map_err(|e| CliError::csv(elements, e))?;
    let mut els = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::csv(elements, e))?;
        let a = parse(rec.get(1), elements, line + 2)?;
        let b = parse(rec.get(2), elements, line + 2)?;
        els.push(match rec.get(3).map(str::trim).filter(|s| !s.is_empty()) {
            Some(_) => Element::triangle(a, b, parse(rec.get(3), elements, line + 2)?),
            None => Element::segment(a, b),
        });
    }
    let dim = if els.iter().all(|e| e.vertices().len() == 2) { 1 } else { 2 };
    let boundary = boundary_nodes(&els, dim);
    let mesh = Mesh::from_parts(dim, nodes, els, &boundary).map_err(|e| CliError::Input(format!("{}: {e}", elements.display())))?;
    ScalarField::new(Arc::new(mesh), values).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn boundary_nodes(elements: &[Element], dim: usize) -> Vec<usize> {
    let mut count: HashMap<Vec<usize>, usize> = HashMap::new();
    for el in elements {
        let v = el.vertices();
        let faces: Vec<Vec<usize>> =
            if dim == 1 { vec![vec![v[0]], vec![v[1]]] } else { (0..3).map(|k| vec![v[k], v[(k + 1) % 3]]).collect() };
        for mut f in faces {
            f.sort_unstable();
            *count.entry(f).or_default() += 1;
        }
    }
    let mut out: Vec<usize> = count.into_iter().filter(|(_, c)| *c == 1).flat_map(|(f, _)| f).collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Domain spanned by the mesh: its extent in 1D, the convex hull of the
/// boundary nodes in 2D with nearly collinear hull vertices dropped.
pub fn infer_domain(mesh: &Mesh) -> Result<ConvexDomain, CliError> {
    let bad = |e: pconcave::geometry::GeometryError| CliError::Input(format!("cannot recover the domain from the mesh: {e}"));
    if mesh.dim() == 1 {
        let (lo, hi) = mesh.nodes().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p[0]), b.max(p[0])));
        return ConvexDomain::interval(lo, hi).map_err(bad);
    }
    let pts: Vec<Point> = mesh.boundary_nodes().iter().map(|&i| mesh.nodes()[i]).collect();
    let mut hull = convex_hull(pts);
    loop {
        let n = hull.len();
        let flat = (0..n).find(|&i| {
            let (a, b, c) = (hull[(i + n - 1) % n], hull[i], hull[(i + 1) % n]);
            let (e1, e2) = ([b[0] - a[0], b[1] - a[1]], [c[0] - b[0], c[1] - b[1]]);
            e1[0] * e2[1] - e1[1] * e2[0] <= 1e-9 * e1[0].hypot(e1[1]) * e2[0].hypot(e2[1])
        });
        match flat {
            Some(i) if n > 3 => {
                hull.remove(i);
            }
            _ => break,
        }
    }
    make_polygon(hull).map_err(bad)
}

pub fn write_trace(path: &Path, trace: &[TraceEntry]) -> Result<(), CliError> {
    let mut w = writer(path)?;
    row(&mut w, path, ["iter", "energy", "grad_norm"])?;
    for t in trace {
        row(&mut w, path, [t.iter.to_string(), t.value.to_string(), t.residual.to_string()])?;
    }
    finish(w, path)
}

pub fn write_hypotheses(path: &Path, rep: &HypothesisReport) -> Result<(), CliError> {
    let mut w = writer(path)?;
    row(&mut w, path, ["condition", "verdict", "worst_t", "margin"])?;
    for (name, c) in rep.conditions() {
        row(&mut w, path, [name.to_string(), c.verdict.to_string(), c.worst_t.to_string(), c.margin.to_string()])?;
    }
    finish(w, path)
}

/// `t, phi, phi_prime, phi_second, psi_roundtrip_err` at each `t`.
pub fn write_transform_table(path: &Path, spec: &TransformSpec, ts: &[f64]) -> Result<(), CliError> {
    let mut w = writer(path)?;
    row(&mut w, path, ["t", "phi", "phi_prime", "phi_second", "psi_roundtrip_err"])?;
    for &t in ts {
        let phi = spec.phi(t);
        let err = (spec.psi(phi) - t).abs();
        row(&mut w, path, [t.to_string(), phi.to_string(), spec.phi_prime(t).to_string(), spec.phi_second(t).to_string(), err.to_string()])?;
    }
    finish(w, path)
}

pub const CONCAVITY_HEADER: [&str; 11] =
    ["transform", "verdict", "max_c", "tolerance", "n_pairs", "violation_count", "boundary_adjacent", "x1", "y1", "x2", "y2"];

/// One row per transform; `boundary_adjacent` counts the stored violation
/// locations within `2h` of the boundary.
pub fn write_concavity(path: &Path, rows: &[(String, &ConcavityReport)]) -> Result<(), CliError> {
    let mut w = writer(path)?;
    row(&mut w, path, CONCAVITY_HEADER)?;
    for (label, r) in rows {
        let near = r.violation_locations.iter().filter(|v| v.boundary_adjacent).count();
        let (a, b) = r.argmax_pair;
        row(
            &mut w,
            path,
            [
                label.clone(),
                r.verdict.to_string(),
                r.max_c.to_string(),
                r.tolerance.to_string(),
                r.n_pairs.to_string(),
                r.violation_count.to_string(),
                near.to_string(),
                a[0].to_string(),
                a[1].to_string(),
                b[0].to_string(),
                b[1].to_string(),
            ],
        )?;
    }
    finish(w, path)
}

/// `x, y, c` for every stored violation midpoint.
pub fn write_violations(path: &Path, r: &ConcavityReport) -> Result<(), CliError> {
    let mut w = writer(path)?;
    row(&mut w, path, ["x", "y", "c", "boundary_adjacent"])?;
    for v in &r.violation_locations {
        row(&mut w, path, [v.point[0].to_string(), v.point[1].to_string(), v.c.to_string(), v.boundary_adjacent.to_string()])?;
    }
    finish(w, path)
}

/// Writes `text` to `path`, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    File::create(path).and_then(|mut f| f.write_all(text.as_bytes())).map_err(|e| CliError::io(path, e))
}
