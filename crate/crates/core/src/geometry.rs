//! Convex domains, simplicial meshes and piecewise-linear nodal fields.
//!
//! Two-dimensional polygons are meshed by a fan from the vertex centroid,
//! followed by uniform midpoint subdivision. Subdividing every fan triangle
//! `k` times produces the barycentric lattice with `2^k` segments per edge,
//! which is what [`triangulate`] generates directly.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::Point;

/// Absolute tolerance of the half-plane and barycentric containment tests.
pub const CONTAINMENT_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("polygon has repeated vertex at index {0}")]
    Degenerate(usize),
    #[error("polygon is not strictly convex at vertex {0}")]
    NonConvex(usize),
    #[error("interval ({0}, {1}) has non-positive length")]
    EmptyInterval(f64, f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("point ({0}, {1}) lies outside the meshed domain")]
    OutsideDomain(f64, f64),
    #[error("field has {values} values but the mesh has {nodes} nodes")]
    LengthMismatch { values: usize, nodes: usize },
    #[error("element {0} is degenerate")]
    DegenerateElement(usize),
}

#[inline]
pub(crate) fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub(crate) fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

#[inline]
pub(crate) fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

#[inline]
pub fn midpoint(a: Point, b: Point) -> Point {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
}

/// Shoelace area, positive for counterclockwise loops.
pub fn signed_area(vertices: &[Point]) -> f64 {
    let n = vertices.len();
    let mut acc = 0.0;
    for i in 0..n {
        acc += cross(vertices[i], vertices[(i + 1) % n]);
    }
    0.5 * acc
}

/// Distance from `p` to the closed segment `[a, b]`.
pub fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = sub(b, a);
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    if len2 == 0.0 {
        return dist(p, a);
    }
    let t = (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0);
    dist(p, [a[0] + t * ab[0], a[1] + t * ab[1]])
}

/// A bounded open convex domain: an interval of the real line or a strictly
/// convex polygon with counterclockwise vertices.
#[derive(Debug, Clone, PartialEq)]
pub enum ConvexDomain {
    Interval { a: f64, b: f64 },
    Polygon { vertices: Vec<Point> },
}

impl ConvexDomain {
    pub fn interval(a: f64, b: f64) -> Result<Self, GeometryError> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(GeometryError::EmptyInterval(a, b));
        }
        Ok(Self::Interval { a, b })
    }

    /// Validates a convex polygon, reordering clockwise input to
    /// counterclockwise.
    pub fn polygon(vertices: Vec<Point>) -> Result<Self, GeometryError> {
        make_polygon(vertices)
    }

    pub fn unit_square() -> Self {
        Self::square(1.0)
    }

    /// Axis-aligned square `[0, side]^2`.
    pub fn square(side: f64) -> Self {
        Self::Polygon {
            vertices: vec![[0.0, 0.0], [side, 0.0], [side, side], [0.0, side]],
        }
    }

    /// Regular `n`-gon inscribed in the circle of given radius about the origin.
    pub fn regular_polygon(n: usize, radius: f64) -> Result<Self, GeometryError> {
        if n < 3 || !(radius > 0.0) {
            return Err(GeometryError::InvalidParameter(format!(
                "regular polygon needs n >= 3 and radius > 0 (got n={n}, r={radius})"
            )));
        }
        let vertices = (0..n)
            .map(|k| {
                let a = 2.0 * PI * k as f64 / n as f64;
                [radius * a.cos(), radius * a.sin()]
            })
            .collect();
        make_polygon(vertices)
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Interval { .. } => 1,
            Self::Polygon { .. } => 2,
        }
    }

    pub fn vertices(&self) -> &[Point] {
        match self {
            Self::Interval { .. } => &[],
            Self::Polygon { vertices } => vertices,
        }
    }

    /// Length of the interval or area of the polygon.
    pub fn measure(&self) -> f64 {
        match self {
            Self::Interval { a, b } => b - a,
            Self::Polygon { vertices } => signed_area(vertices),
        }
    }

    /// Closed containment with the half-plane tolerance [`CONTAINMENT_TOL`].
    pub fn contains(&self, p: Point) -> bool {
        match self {
            Self::Interval { a, b } => {
                p[0] >= a - CONTAINMENT_TOL && p[0] <= b + CONTAINMENT_TOL && p[1].abs() <= CONTAINMENT_TOL
            }
            Self::Polygon { vertices } => {
                let n = vertices.len();
                (0..n).all(|i| {
                    let a = vertices[i];
                    let b = vertices[(i + 1) % n];
                    let e = sub(b, a);
                    cross(e, sub(p, a)) / e[0].hypot(e[1]) >= -CONTAINMENT_TOL
                })
            }
        }
    }

    /// Euclidean distance to the boundary (to the nearest endpoint in 1D).
    pub fn boundary_distance(&self, p: Point) -> f64 {
        match self {
            Self::Interval { a, b } => (p[0] - a).abs().min((b - p[0]).abs()),
            Self::Polygon { vertices } => {
                let n = vertices.len();
                (0..n)
                    .map(|i| segment_distance(p, vertices[i], vertices[(i + 1) % n]))
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// Distance to the nearest corner (polygon vertex or interval endpoint).
    pub fn corner_distance(&self, p: Point) -> f64 {
        match self {
            Self::Interval { .. } => self.boundary_distance(p),
            Self::Polygon { vertices } => vertices.iter().map(|&v| dist(p, v)).fold(f64::INFINITY, f64::min),
        }
    }

    pub fn centroid(&self) -> Point {
        match self {
            Self::Interval { a, b } => [0.5 * (a + b), 0.0],
            Self::Polygon { vertices } => vertex_centroid(vertices),
        }
    }
}

fn vertex_centroid(vertices: &[Point]) -> Point {
    let n = vertices.len() as f64;
    let (sx, sy) = vertices.iter().fold((0.0, 0.0), |(x, y), v| (x + v[0], y + v[1]));
    [sx / n, sy / n]
}

/// Builds a convex polygon domain.
///
/// Clockwise input is reversed. Repeated vertices give
/// [`GeometryError::Degenerate`]; a non-positive turn at any vertex gives
/// [`GeometryError::NonConvex`].
pub fn make_polygon(mut vertices: Vec<Point>) -> Result<ConvexDomain, GeometryError> {
    let n = vertices.len();
    if n < 3 {
        return Err(GeometryError::TooFewVertices(n));
    }
    if let Some(i) = vertices.iter().position(|v| !(v[0].is_finite() && v[1].is_finite())) {
        return Err(GeometryError::Degenerate(i));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if vertices[i] == vertices[j] {
                return Err(GeometryError::Degenerate(j));
            }
        }
    }
    if signed_area(&vertices) < 0.0 {
        vertices.reverse();
    }
    for i in 0..n {
        let prev = vertices[(i + n - 1) % n];
        let cur = vertices[i];
        let next = vertices[(i + 1) % n];
        let e1 = sub(cur, prev);
        let e2 = sub(next, cur);
        let scale = e1[0].hypot(e1[1]) * e2[0].hypot(e2[1]);
        if cross(e1, e2) <= 1e-14 * scale {
            return Err(GeometryError::NonConvex(i));
        }
    }
    Ok(ConvexDomain::Polygon { vertices })
}

/// A simplex of the mesh: a segment (two vertices) or a triangle (three).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Element {
    verts: [usize; 3],
    len: usize,
}

impl Element {
    pub fn segment(a: usize, b: usize) -> Self {
        Self { verts: [a, b, usize::MAX], len: 2 }
    }

    pub fn triangle(a: usize, b: usize, c: usize) -> Self {
        Self { verts: [a, b, c], len: 3 }
    }

    #[inline]
    pub fn vertices(&self) -> &[usize] {
        &self.verts[..self.len]
    }
}

/// Measure and constant P1 basis gradients of one element.
#[derive(Debug, Clone, Copy)]
pub struct ElementGeometry {
    pub measure: f64,
    pub grads: [Point; 3],
}

/// Uniform bucket grid over the bounding box, mapping cells to the elements
/// whose bounding boxes overlap them.
#[derive(Debug, Clone)]
struct Locator {
    origin: Point,
    cell: Point,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<u32>>,
}

impl Locator {
    fn build(nodes: &[Point], elements: &[Element]) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in nodes {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let side = (elements.len() as f64).sqrt().ceil().max(1.0) as usize;
        let (nx, ny) = if hi[1] - lo[1] <= 0.0 { (elements.len().max(1), 1) } else { (side, side) };
        let width = [(hi[0] - lo[0]).max(1e-300), (hi[1] - lo[1]).max(1e-300)];
        let cell = [width[0] / nx as f64, width[1] / ny as f64];
        let mut loc = Self { origin: lo, cell, nx, ny, buckets: vec![Vec::new(); nx * ny] };
        for (e, el) in elements.iter().enumerate() {
            let (mut elo, mut ehi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
            for &v in el.vertices() {
                for k in 0..2 {
                    elo[k] = elo[k].min(nodes[v][k]);
                    ehi[k] = ehi[k].max(nodes[v][k]);
                }
            }
            let (i0, j0) = loc.cell_of([elo[0] - CONTAINMENT_TOL, elo[1] - CONTAINMENT_TOL]);
            let (i1, j1) = loc.cell_of([ehi[0] + CONTAINMENT_TOL, ehi[1] + CONTAINMENT_TOL]);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    loc.buckets[j * nx + i].push(e as u32);
                }
            }
        }
        loc
    }

    fn cell_of(&self, p: Point) -> (usize, usize) {
        let clamp = |x: f64, n: usize| -> usize {
            if x.is_nan() || x < 0.0 {
                0
            } else {
                (x as usize).min(n - 1)
            }
        };
        (
            clamp((p[0] - self.origin[0]) / self.cell[0], self.nx),
            clamp((p[1] - self.origin[1]) / self.cell[1], self.ny),
        )
    }

    fn candidates(&self, p: Point) -> &[u32] {
        let (i, j) = self.cell_of(p);
        &self.buckets[j * self.nx + i]
    }
}

/// Conforming simplicial mesh. Immutable after construction.
#[derive(Clone)]
pub struct Mesh {
    dim: usize,
    nodes: Vec<Point>,
    elements: Vec<Element>,
    geometry: Vec<ElementGeometry>,
    boundary: Vec<bool>,
    lumped_mass: Vec<f64>,
    h: f64,
    locator: Locator,
}

impl fmt::Debug for Mesh {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Mesh")
            .field("dim", &self.dim)
            .field("nodes", &self.nodes.len())
            .field("elements", &self.elements.len())
            .field("h", &self.h)
            .finish()
    }
}

impl Mesh {
    /// Assembles a mesh from raw parts. In 1D the node `y` coordinates must be
    /// zero and every element a segment; in 2D every element a triangle.
    /// Triangles are reoriented counterclockwise.
    pub fn from_parts(
        dim: usize,
        nodes: Vec<Point>,
        mut elements: Vec<Element>,
        boundary_nodes: &[usize],
    ) -> Result<Self, GeometryError> {
        if dim != 1 && dim != 2 {
            return Err(GeometryError::InvalidParameter(format!("dimension {dim}")));
        }
        let arity = dim + 1;
        let mut geometry = Vec::with_capacity(elements.len());
        let mut h: f64 = 0.0;
        for (e, el) in elements.iter_mut().enumerate() {
            if el.len != arity || el.vertices().iter().any(|&v| v >= nodes.len()) {
                return Err(GeometryError::DegenerateElement(e));
            }
            let g = if dim == 1 {
                let (a, b) = (nodes[el.verts[0]][0], nodes[el.verts[1]][0]);
                let len = (b - a).abs();
                if !(len > 0.0) {
                    return Err(GeometryError::DegenerateElement(e));
                }
                h = h.max(len);
                let s = 1.0 / (b - a);
                ElementGeometry { measure: len, grads: [[-s, 0.0], [s, 0.0], [0.0, 0.0]] }
            } else {
                let [a, b, c] = el.verts;
                if cross(sub(nodes[b], nodes[a]), sub(nodes[c], nodes[a])) < 0.0 {
                    el.verts.swap(1, 2);
                }
                let [a, b, c] = el.verts.map(|v| nodes[v]);
                let twice = cross(sub(b, a), sub(c, a));
                if !(twice > 0.0) {
                    return Err(GeometryError::DegenerateElement(e));
                }
                h = h.max(dist(a, b)).max(dist(b, c)).max(dist(c, a));
                // grad of barycentric coordinate k is the rotated opposite edge / (2 area)
                let rot = |p: Point, q: Point| [(p[1] - q[1]) / twice, (q[0] - p[0]) / twice];
                ElementGeometry { measure: 0.5 * twice, grads: [rot(b, c), rot(c, a), rot(a, b)] }
            };
            geometry.push(g);
        }
        let mut lumped_mass = vec![0.0; nodes.len()];
        for (el, g) in elements.iter().zip(&geometry) {
            for &v in el.vertices() {
                lumped_mass[v] += g.measure / arity as f64;
            }
        }
        let mut boundary = vec![false; nodes.len()];
        for &b in boundary_nodes {
            if b >= nodes.len() {
                return Err(GeometryError::InvalidParameter(format!("boundary node {b} out of range")));
            }
            boundary[b] = true;
        }
        let locator = Locator::build(&nodes, &elements);
        Ok(Self { dim, nodes, elements, geometry, boundary, lumped_mass, h, locator })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn element_geometry(&self) -> &[ElementGeometry] {
        &self.geometry
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.boundary[node]
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| self.boundary[i]).collect()
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| !self.boundary[i]).collect()
    }

    /// Row sums of the P1 mass matrix (vertex quadrature weights).
    pub fn lumped_mass(&self) -> &[f64] {
        &self.lumped_mass
    }

    /// Maximum element diameter.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn total_measure(&self) -> f64 {
        self.geometry.iter().map(|g| g.measure).sum()
    }

    /// Finds an element containing `p` and the barycentric weights of `p` in it.
    pub fn locate(&self, p: Point) -> Option<(usize, [f64; 3])> {
        for &e in self.locator.candidates(p) {
            let e = e as usize;
            if let Some(w) = self.barycentric(e, p) {
                return Some((e, w));
            }
        }
        None
    }

    fn barycentric(&self, e: usize, p: Point) -> Option<[f64; 3]> {
        let el = &self.elements[e];
        if self.dim == 1 {
            let (a, b) = (self.nodes[el.verts[0]][0], self.nodes[el.verts[1]][0]);
            if p[1].abs() > CONTAINMENT_TOL {
                return None;
            }
            let t = (p[0] - a) / (b - a);
            let tol = CONTAINMENT_TOL / (b - a).abs();
            return (t >= -tol && t <= 1.0 + tol).then_some([1.0 - t, t, 0.0]);
        }
        let g = &self.geometry[e];
        let a = self.nodes[el.verts[0]];
        let d = sub(p, a);
        let w1 = g.grads[1][0] * d[0] + g.grads[1][1] * d[1];
        let w2 = g.grads[2][0] * d[0] + g.grads[2][1] * d[1];
        let w0 = 1.0 - w1 - w2;
        let tol = CONTAINMENT_TOL / self.h.max(f64::MIN_POSITIVE);
        (w0 >= -tol && w1 >= -tol && w2 >= -tol).then_some([w0, w1, w2])
    }
}

impl Mesh {
    /// Writes the node table (`id,x,y`) and element table (`id,n0,n1,n2`) as
    /// CSV. Segments leave `n2` empty.
    pub fn write_csv<N: std::io::Write, E: std::io::Write>(&self, nodes: N, elements: E) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(nodes);
        w.write_record(["id", "x", "y"])?;
        for (i, p) in self.nodes.iter().enumerate() {
            w.write_record([i.to_string(), p[0].to_string(), p[1].to_string()])?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_writer(elements);
        w.write_record(["id", "n0", "n1", "n2"])?;
        for (i, el) in self.elements.iter().enumerate() {
            let v = el.vertices();
            let n2 = v.get(2).map(|x| x.to_string()).unwrap_or_default();
            w.write_record([i.to_string(), v[0].to_string(), v[1].to_string(), n2])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Meshes the domain with maximum element diameter at most `h_target`.
///
/// Intervals get a uniform grid. Polygons get a centroid fan refined by
/// midpoint subdivision until the diameter bound holds.
pub fn triangulate(domain: &ConvexDomain, h_target: f64) -> Result<Mesh, GeometryError> {
    if !(h_target > 0.0 && h_target.is_finite()) {
        return Err(GeometryError::InvalidParameter(format!("h_target must be positive, got {h_target}")));
    }
    match domain {
        ConvexDomain::Interval { a, b } => {
            let n = (((b - a) / h_target) - 1e-9).ceil().max(1.0) as usize;
            let nodes: Vec<Point> = (0..=n)
                .map(|i| {
                    let t = i as f64 / n as f64;
                    [a + (b - a) * t, 0.0]
                })
                .collect();
            let elements = (0..n).map(|i| Element::segment(i, i + 1)).collect();
            Mesh::from_parts(1, nodes, elements, &[0, n])
        }
        ConvexDomain::Polygon { vertices } => fan_lattice(vertices, h_target),
    }
}

fn fan_lattice(vertices: &[Point], h_target: f64) -> Result<Mesh, GeometryError> {
    let nv = vertices.len();
    let c = vertex_centroid(vertices);
    let mut diam: f64 = 0.0;
    for i in 0..nv {
        let (a, b) = (vertices[i], vertices[(i + 1) % nv]);
        diam = diam.max(dist(c, a)).max(dist(a, b));
    }
    let mut n = 1usize;
    while diam / n as f64 > h_target {
        n *= 2;
    }

    let mut nodes = vec![c];
    // spoke k: nodes at c + (t/n)(v_k - c), t = 1..=n
    let spoke = |k: usize, t: usize| 1 + k * n + (t - 1);
    for &v in vertices {
        for t in 1..=n {
            let s = t as f64 / n as f64;
            nodes.push([c[0] + s * (v[0] - c[0]), c[1] + s * (v[1] - c[1])]);
        }
    }
    let mut boundary: Vec<usize> = (0..nv).map(|k| spoke(k, n)).collect();
    let mut elements = Vec::with_capacity(nv * n * n);
    for k in 0..nv {
        let (a, b) = (vertices[k], vertices[(k + 1) % nv]);
        // lattice point (i, j) = c + (i/n)(a-c) + (j/n)(b-c)
        let mut interior: HashMap<(usize, usize), usize> = HashMap::new();
        for i in 1..n {
            for j in 1..=(n - i) {
                let (si, sj) = (i as f64 / n as f64, j as f64 / n as f64);
                let idx = nodes.len();
                nodes.push([
                    c[0] + si * (a[0] - c[0]) + sj * (b[0] - c[0]),
                    c[1] + si * (a[1] - c[1]) + sj * (b[1] - c[1]),
                ]);
                interior.insert((i, j), idx);
                if i + j == n {
                    boundary.push(idx);
                }
            }
        }
        let next = (k + 1) % nv;
        let id = |i: usize, j: usize| -> usize {
            match (i, j) {
                (0, 0) => 0,
                (i, 0) => spoke(k, i),
                (0, j) => spoke(next, j),
                _ => interior[&(i, j)],
            }
        };
        for i in 0..n {
            for j in 0..(n - i) {
                elements.push(Element::triangle(id(i, j), id(i + 1, j), id(i, j + 1)));
                if i + j + 2 <= n {
                    elements.push(Element::triangle(id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)));
                }
            }
        }
    }
    boundary.sort_unstable();
    Mesh::from_parts(2, nodes, elements, &boundary)
}

/// Nodal values on a mesh, evaluated between nodes by P1 interpolation.
#[derive(Clone)]
pub struct ScalarField {
    mesh: Arc<Mesh>,
    values: Vec<f64>,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lo = self.values.iter().copied().fold(f64::INFINITY, f64::min);
        f.debug_struct("ScalarField").field("mesh", &self.mesh).field("min", &lo).field("max", &self.max()).finish()
    }
}

impl ScalarField {
    pub fn new(mesh: Arc<Mesh>, values: Vec<f64>) -> Result<Self, GeometryError> {
        if values.len() != mesh.node_count() {
            return Err(GeometryError::LengthMismatch { values: values.len(), nodes: mesh.node_count() });
        }
        Ok(Self { mesh, values })
    }

    /// Nodal interpolant of `g`.
    pub fn from_fn(mesh: Arc<Mesh>, g: impl Fn(Point) -> f64) -> Self {
        let values = mesh.nodes().iter().map(|&p| g(p)).collect();
        Self { mesh, values }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Applies `g` to every nodal value.
    pub fn map(&self, g: impl Fn(f64) -> f64) -> Self {
        Self { mesh: Arc::clone(&self.mesh), values: self.values.iter().map(|&v| g(v)).collect() }
    }

    /// P1 interpolation at `p`.
    pub fn interpolate(&self, p: Point) -> Result<f64, GeometryError> {
        interpolate(self, p)
    }
}

/// Barycentric P1 interpolation of `field` at `point`.
pub fn interpolate(field: &ScalarField, point: Point) -> Result<f64, GeometryError> {
    let mesh = &field.mesh;
    let (e, w) = mesh.locate(point).ok_or(GeometryError::OutsideDomain(point[0], point[1]))?;
    let el = &mesh.elements[e];
    Ok(el.vertices().iter().zip(w).map(|(&v, wi)| wi * field.values[v]).sum())
}
