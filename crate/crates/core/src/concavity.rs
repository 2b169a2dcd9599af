//! Sampled concavity tests.
//!
//! The convexity function `c(x, y) = (v(x) + v(y))/2 − v((x+y)/2)` is
//! nonpositive everywhere exactly when `v` is concave. [`convexity_scan`]
//! evaluates it on node pairs; [`quasiconcavity_scan`] compares superlevel
//! sets with their convex hulls.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{midpoint, signed_area, ConvexDomain, Mesh, ScalarField};
use crate::reaction::{ConditionCheck, Verdict, CHECK_TOL};
use crate::Point;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConcavityError {
    #[error("level {level} is not below the field maximum {max}")]
    EmptyLevel { level: f64, max: f64 },
    #[error("superlevel scans need a two-dimensional mesh")]
    NotPlanar,
    #[error("b({t}) = {value} is not positive")]
    NonPositive { t: f64, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConcavityVerdict {
    Concave,
    Marginal,
    Violated,
}

impl ConcavityVerdict {
    fn from_max(max_c: f64, tol: f64) -> Self {
        if max_c <= tol {
            Self::Concave
        } else if max_c <= 10.0 * tol {
            Self::Marginal
        } else {
            Self::Violated
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Concave => "concave",
            Self::Marginal => "marginal",
            Self::Violated => "violated",
        }
    }
}

impl fmt::Display for ConcavityVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Pair sampling for [`convexity_scan`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sampling {
    /// Number of random pairs when full enumeration is not used.
    pub pair_cap: usize,
    pub seed: u64,
    /// All pairs are enumerated when at most this many interior nodes carry a finite value.
    pub full_enumeration_nodes: usize,
    /// Pass threshold; `None` uses [`tolerance_model`].
    pub tolerance: Option<f64>,
    /// Maximum number of violation locations kept in the report.
    pub max_locations: usize,
}

impl Default for Sampling {
    fn default() -> Self {
        Self { pair_cap: 200_000, seed: 42, full_enumeration_nodes: 640, tolerance: None, max_locations: 10_000 }
    }
}

/// What the scan evaluates.
pub enum ScanTarget<'a> {
    /// `v = T(u)` for a P1 field `u`: nodes use `T(u_i)`, midpoints use `T`
    /// of the interpolated `u`.
    Field { field: &'a ScalarField, transform: &'a (dyn Fn(f64) -> f64 + Sync) },
    /// A function given in closed form, sampled at the nodes of `mesh`;
    /// midpoints use the P1 interpolant of the nodal values.
    Analytic { mesh: &'a Mesh, function: &'a (dyn Fn(Point) -> f64 + Sync) },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViolationLocation {
    pub point: Point,
    pub c: f64,
    /// Within `2h` of the boundary.
    pub boundary_adjacent: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcavityReport {
    pub max_c: f64,
    pub argmax_pair: (Point, Point),
    pub n_pairs: usize,
    pub tolerance: f64,
    pub verdict: ConcavityVerdict,
    /// Midpoints with `c > tolerance`, in pair order, truncated to
    /// `Sampling::max_locations`.
    pub violation_locations: Vec<ViolationLocation>,
    pub violation_count: usize,
}

/// `max(1e−8, 5 h² osc(v))`.
pub fn tolerance_model(values: &[f64], h: f64) -> f64 {
    let (lo, hi) = values.iter().filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let osc = if hi >= lo { hi - lo } else { 0.0 };
    (5.0 * h * h * osc).max(1e-8)
}

/// Samples the convexity function on node pairs.
pub fn convexity_scan(target: &ScanTarget<'_>, domain: &ConvexDomain, sampling: &Sampling) -> ConcavityReport {
    let mesh: &Mesh = match target {
        ScanTarget::Field { field, .. } => field.mesh(),
        ScanTarget::Analytic { mesh, .. } => mesh,
    };
    let nodal: Vec<f64> = match target {
        ScanTarget::Field { field, transform } => field.values().iter().map(|&u| transform(u)).collect(),
        ScanTarget::Analytic { mesh, function } => mesh.nodes().iter().map(|&p| function(p)).collect(),
    };
    // boundary nodes are left out: P1 midpoint values next to ∂Ω are dominated
    // by interpolation error of the steep transforms used here
    let mut valid: Vec<usize> = (0..nodal.len()).filter(|&i| nodal[i].is_finite() && !mesh.is_boundary(i)).collect();
    if valid.len() < 2 {
        valid = (0..nodal.len()).filter(|&i| nodal[i].is_finite()).collect();
    }
    let tolerance = sampling.tolerance.unwrap_or_else(|| tolerance_model(&nodal, mesh.h()));

    let pairs: Vec<(usize, usize)> = if valid.len() <= sampling.full_enumeration_nodes {
        let mut v = Vec::with_capacity(valid.len() * valid.len().saturating_sub(1) / 2);
        for a in 0..valid.len() {
            for b in a + 1..valid.len() {
                v.push((valid[a], valid[b]));
            }
        }
        v
    } else {
        random_pairs(mesh, &valid, sampling)
    };

    let midpoint_value = |m: Point| -> Option<f64> {
        let (e, w) = mesh.locate(m)?;
        let verts = mesh.elements()[e].vertices();
        match target {
            ScanTarget::Field { field, transform } => {
                let u: f64 = verts.iter().zip(w).map(|(&v, wi)| wi * field.values()[v]).sum();
                Some(transform(u))
            }
            ScanTarget::Analytic { .. } => Some(verts.iter().zip(w).map(|(&v, wi)| wi * nodal[v]).sum()),
        }
    };
    let nodes = mesh.nodes();
    let cs: Vec<f64> = pairs
        .par_iter()
        .map(|&(a, b)| {
            let m = midpoint(nodes[a], nodes[b]);
            match midpoint_value(m) {
                Some(vm) if vm.is_finite() => 0.5 * (nodal[a] + nodal[b]) - vm,
                _ => f64::NAN,
            }
        })
        .collect();

    let mut best = (f64::NEG_INFINITY, 0usize);
    let mut locations = Vec::new();
    let mut count = 0usize;
    let mut n_pairs = 0usize;
    for (k, &c) in cs.iter().enumerate() {
        if c.is_nan() {
            continue;
        }
        n_pairs += 1;
        if c > best.0 {
            best = (c, k);
        }
        if c > tolerance {
            count += 1;
            if locations.len() < sampling.max_locations {
                let (a, b) = pairs[k];
                let point = midpoint(nodes[a], nodes[b]);
                locations.push(ViolationLocation { point, c, boundary_adjacent: domain.boundary_distance(point) <= 2.0 * mesh.h() });
            }
        }
    }
    let argmax_pair = pairs.get(best.1).map_or(([f64::NAN; 2], [f64::NAN; 2]), |&(a, b)| (nodes[a], nodes[b]));
    let max_c = if n_pairs == 0 { f64::NAN } else { best.0 };
    ConcavityReport {
        max_c,
        argmax_pair,
        n_pairs,
        tolerance,
        verdict: ConcavityVerdict::from_max(max_c, tolerance),
        violation_locations: locations,
        violation_count: count,
    }
}

/// Half the pairs are uniform over valid nodes; the other half pair a uniform
/// node with the node nearest to a random offset of length `h` to `8h`, since
/// local violations are invisible to long-range pairs.
fn random_pairs(mesh: &Mesh, valid: &[usize], sampling: &Sampling) -> Vec<(usize, usize)> {
    let mut allowed = vec![false; mesh.node_count()];
    valid.iter().for_each(|&i| allowed[i] = true);
    let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed);
    let nodes = mesh.nodes();
    let h = mesh.h();
    let planar = mesh.dim() == 2;
    let mut out = Vec::with_capacity(sampling.pair_cap);
    let mut attempts = 0usize;
    while out.len() < sampling.pair_cap && attempts < 20 * sampling.pair_cap.max(1) {
        attempts += 1;
        let a = valid[rng.gen_range(0..valid.len())];
        let b = if out.len() % 2 == 0 {
            valid[rng.gen_range(0..valid.len())]
        } else {
            let rho = h * 8f64.powf(rng.gen::<f64>());
            let theta = if planar { rng.gen_range(0.0..std::f64::consts::TAU) } else if rng.gen::<bool>() { 0.0 } else { std::f64::consts::PI };
            let q = [nodes[a][0] + rho * theta.cos(), nodes[a][1] + rho * theta.sin()];
            let Some((e, w)) = mesh.locate(q) else { continue };
            let verts = mesh.elements()[e].vertices();
            let k = (0..verts.len()).max_by(|&i, &j| w[i].total_cmp(&w[j])).unwrap_or(0);
            verts[k]
        };
        if a != b && allowed[b] {
            out.push((a, b));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuasiConcavityReport {
    pub levels: Vec<f64>,
    /// `(hull area − set area) / set area` per level.
    pub defect_per_level: Vec<f64>,
    pub max_defect: f64,
}

/// Part of a triangle where the linear interpolant is at least `level`.
fn clip_triangle(p: [Point; 3], v: [f64; 3], level: f64, out: &mut Vec<Point>) {
    for k in 0..3 {
        let (a, b) = (k, (k + 1) % 3);
        let (ia, ib) = (v[a] >= level, v[b] >= level);
        if ia {
            out.push(p[a]);
        }
        if ia != ib {
            let t = (level - v[a]) / (v[b] - v[a]);
            out.push([p[a][0] + t * (p[b][0] - p[a][0]), p[a][1] + t * (p[b][1] - p[a][1])]);
        }
    }
}

/// Convex hull by the monotone chain, counterclockwise without repeats.
pub fn convex_hull(mut pts: Vec<Point>) -> Vec<Point> {
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let turn = |o: Point, a: Point, b: Point| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut hull: Vec<Point> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point>> = if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && turn(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Compares each superlevel set `{u_h ≥ k}` of the P1 field with its convex
/// hull.
pub fn quasiconcavity_scan(field: &ScalarField, levels: &[f64]) -> Result<QuasiConcavityReport, ConcavityError> {
    let mesh = field.mesh();
    if mesh.dim() != 2 {
        return Err(ConcavityError::NotPlanar);
    }
    let max = field.max();
    let mut defects = Vec::with_capacity(levels.len());
    for &level in levels {
        if !(level < max) {
            return Err(ConcavityError::EmptyLevel { level, max });
        }
        let mut area = 0.0;
        let mut all = Vec::new();
        let mut poly = Vec::with_capacity(4);
        for el in mesh.elements() {
            let vs = el.vertices();
            let p = [mesh.nodes()[vs[0]], mesh.nodes()[vs[1]], mesh.nodes()[vs[2]]];
            let v = [field.values()[vs[0]], field.values()[vs[1]], field.values()[vs[2]]];
            if v.iter().all(|&x| x < level) {
                continue;
            }
            poly.clear();
            clip_triangle(p, v, level, &mut poly);
            if poly.len() >= 3 {
                area += signed_area(&poly);
            }
            all.extend_from_slice(&poly);
        }
        let hull_area = signed_area(&convex_hull(all));
        defects.push((hull_area - area) / area);
    }
    let max_defect = defects.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(QuasiConcavityReport { levels: levels.to_vec(), defect_per_level: defects, max_defect })
}

/// Discrete convexity of `1/b` on the grid.
pub fn harmonic_concavity_check(b: &dyn Fn(f64) -> f64, grid: &[f64]) -> Result<ConditionCheck, ConcavityError> {
    let mut inv = Vec::with_capacity(grid.len());
    for &t in grid {
        let v = b(t);
        if !(v > 0.0) {
            return Err(ConcavityError::NonPositive { t, value: v });
        }
        inv.push(1.0 / v);
    }
    let (margin, worst_t) = crate::reaction::convexity_defect(grid, &inv);
    Ok(ConditionCheck { verdict: Verdict::from_margin(margin, CHECK_TOL), worst_t, margin, tolerance: CHECK_TOL })
}
