use std::sync::Arc;

use pconcave::concavity::{convexity_scan, quasiconcavity_scan, Sampling, ScanTarget};
use pconcave::geometry::{triangulate, Element};
use pconcave::reaction::constant;
use pconcave::solver::solve_dirichlet;
use pconcave::{ConcavityVerdict, ConvexDomain, Mesh, Point, ScalarField, SolveResult, SolverConfig};
use proptest::prelude::*;

fn torsion(h: f64) -> SolveResult {
    solve_dirichlet(&ConvexDomain::unit_square(), &constant(), &SolverConfig::new(2.0), h).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn quadratic_sign_matches_hessian(a in 0.2f64..3.0, c in 0.2f64..3.0, b in -0.15f64..0.15, sign in prop::bool::ANY, seed in any::<u64>()) {
        // H = s·[[2a, b], [b, 2c]] is definite because |b| < 2√(ac)
        let s = if sign { 1.0 } else { -1.0 };
        let dom = ConvexDomain::unit_square();
        let mesh = triangulate(&dom, 1.0 / 16.0).unwrap();
        let v = move |p: Point| s * (a * p[0] * p[0] + b * p[0] * p[1] + c * p[1] * p[1]);
        let sampling = Sampling { seed, pair_cap: 20_000, full_enumeration_nodes: 0, ..Default::default() };
        let rep = convexity_scan(&ScanTarget::Analytic { mesh: &mesh, function: &v }, &dom, &sampling);
        let (x, y) = rep.argmax_pair;
        let d = [x[0] - y[0], x[1] - y[1]];
        let exact = s * (2.0 * a * d[0] * d[0] + 2.0 * b * d[0] * d[1] + 2.0 * c * d[1] * d[1]) / 8.0;
        prop_assert!((rep.max_c - exact).abs() <= rep.tolerance);
        if sign {
            prop_assert!(rep.max_c > 0.0);
        } else {
            prop_assert!(rep.max_c <= rep.tolerance);
            prop_assert_eq!(rep.verdict, ConcavityVerdict::Concave);
        }
    }
}

#[test]
fn scans_are_deterministic() {
    let u = torsion(1.0 / 32.0);
    let sq = |t: f64| t.max(0.0).sqrt();
    let dom = ConvexDomain::unit_square();
    let a = convexity_scan(&ScanTarget::Field { field: &u.field, transform: &sq }, &dom, &Sampling::default());
    let b = convexity_scan(&ScanTarget::Field { field: &u.field, transform: &sq }, &dom, &Sampling::default());
    assert_eq!(a, b);
    assert_eq!(a.max_c.to_bits(), b.max_c.to_bits());
    let c = convexity_scan(&ScanTarget::Field { field: &u.field, transform: &sq }, &dom, &Sampling { seed: 43, ..Default::default() });
    assert_ne!(a.argmax_pair, c.argmax_pair);
}

#[test]
fn sqrt_torsion_artifact_shrinks_under_refinement() {
    // from h = 1/32 on; the step 1/16 → 1/32 still grows by about 2x
    let dom = ConvexDomain::unit_square();
    let sq = |t: f64| t.max(0.0).sqrt();
    let max_c: Vec<f64> = [1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0]
        .iter()
        .map(|&h| {
            let u = torsion(h);
            convexity_scan(&ScanTarget::Field { field: &u.field, transform: &sq }, &dom, &Sampling::default()).max_c
        })
        .collect();
    for w in max_c.windows(2) {
        assert!(w[1] <= 1.1 * w[0].max(0.0), "{max_c:?}");
    }
}

#[test]
fn concave_nondecreasing_maps_preserve_certification() {
    let u = torsion(1.0 / 32.0);
    let dom = ConvexDomain::unit_square();
    let sq = |t: f64| t.max(0.0).sqrt();
    let base = convexity_scan(&ScanTarget::Field { field: &u.field, transform: &sq }, &dom, &Sampling::default());
    assert_eq!(base.verdict, ConcavityVerdict::Concave);
    let maps: [fn(f64) -> f64; 3] = [|s| (1.0 + s).ln(), |s| 1.0 - (-3.0 * s).exp(), |s| s.min(0.2)];
    for m in maps {
        let composed = move |t: f64| m(sq(t));
        let rep = convexity_scan(&ScanTarget::Field { field: &u.field, transform: &composed }, &dom, &Sampling::default());
        assert_eq!(rep.n_pairs, base.n_pairs);
        assert_eq!(rep.verdict, ConcavityVerdict::Concave, "{rep:?}");
    }
}

/// Unit-spacing grid on the L-shape [0,2]² minus (1,2]², split into
/// triangles, with nodal values the distance to the L-shape boundary.
fn l_shape_field(n: usize) -> ScalarField {
    let h = 1.0 / n as f64;
    let inside = |i: usize, j: usize| i <= 2 * n && j <= 2 * n && (i <= n || j <= n);
    let mut id = vec![vec![usize::MAX; 2 * n + 1]; 2 * n + 1];
    let mut nodes = Vec::new();
    for i in 0..=2 * n {
        for j in 0..=2 * n {
            if inside(i, j) {
                id[i][j] = nodes.len();
                nodes.push([i as f64 * h, j as f64 * h]);
            }
        }
    }
    let mut elements = Vec::new();
    for i in 0..2 * n {
        for j in 0..2 * n {
            if inside(i, j) && inside(i + 1, j) && inside(i, j + 1) && inside(i + 1, j + 1) && (i < n || j < n) {
                elements.push(Element::triangle(id[i][j], id[i + 1][j], id[i + 1][j + 1]));
                elements.push(Element::triangle(id[i][j], id[i + 1][j + 1], id[i][j + 1]));
            }
        }
    }
    let edges: [(Point, Point); 6] = [
        ([0.0, 0.0], [2.0, 0.0]),
        ([2.0, 0.0], [2.0, 1.0]),
        ([2.0, 1.0], [1.0, 1.0]),
        ([1.0, 1.0], [1.0, 2.0]),
        ([1.0, 2.0], [0.0, 2.0]),
        ([0.0, 2.0], [0.0, 0.0]),
    ];
    let dist = |p: Point| {
        edges
            .iter()
            .map(|&(a, b)| {
                let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
                let t = (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
                ((p[0] - a[0] - t * dx).powi(2) + (p[1] - a[1] - t * dy).powi(2)).sqrt()
            })
            .fold(f64::INFINITY, f64::min)
    };
    let boundary: Vec<usize> = (0..nodes.len()).filter(|&k| dist(nodes[k]) < 1e-12).collect();
    let values = nodes.iter().map(|&p| dist(p)).collect();
    let mesh = Mesh::from_parts(2, nodes, elements, &boundary).unwrap();
    ScalarField::new(Arc::new(mesh), values).unwrap()
}

#[test]
fn l_shape_superlevel_sets_are_not_convex() {
    let field = l_shape_field(16);
    // {d > k} is an L of two bars plus at most a k×k patch at the reentrant
    // corner; its hull adds the triangle (1−k,2−k), (2−k,1−k), (1−k,1−k) of
    // area 1/2, of which the patch covers at most k²
    let rep = quasiconcavity_scan(&field, &[0.05, 0.1, 0.2]).unwrap();
    for (k, d) in rep.levels.iter().zip(&rep.defect_per_level) {
        let set_upper = (2.0 - 2.0 * k) * (1.0 - 2.0 * k) + (1.0 - 2.0 * k) + k * k;
        let gap_lower = 0.5 - k * k;
        assert!(*d > 0.8 * gap_lower / set_upper, "level {k}: defect {d}");
    }
}

#[test]
fn disc_radial_field_has_small_defect() {
    let disc = ConvexDomain::regular_polygon(64, 1.0).unwrap();
    let mesh = Arc::new(triangulate(&disc, 0.05).unwrap());
    let field = ScalarField::from_fn(Arc::clone(&mesh), |p| 1.0 - (p[0] * p[0] + p[1] * p[1]).sqrt());
    let rep = quasiconcavity_scan(&field, &[0.1, 0.3, 0.5, 0.7, 0.9]).unwrap();
    assert!(rep.max_defect <= 2.0 * mesh.h(), "{rep:?}");
    assert!(rep.defect_per_level.iter().all(|&d| d >= -1e-12));
}

#[test]
fn torsion_superlevel_sets_are_convex() {
    let u = torsion(1.0 / 32.0);
    let m = u.field.max();
    let rep = quasiconcavity_scan(&u.field, &[0.2 * m, 0.5 * m, 0.8 * m]).unwrap();
    assert!(rep.max_defect <= 2.0 / 32.0, "{rep:?}");
    assert!(rep.defect_per_level.iter().all(|&d| d >= -1e-12));
}

#[test]
fn violation_locations_lie_in_the_domain() {
    let u = torsion(1.0 / 32.0);
    let dom = ConvexDomain::unit_square();
    let pw = |t: f64| t.max(0.0).powf(0.9);
    let rep = convexity_scan(&ScanTarget::Field { field: &u.field, transform: &pw }, &dom, &Sampling::default());
    assert!(rep.violation_count > 0);
    assert!(rep.violation_locations.iter().all(|v| dom.contains(v.point) && v.c > rep.tolerance));
}

#[test]
fn phi_of_entropy_solutions_is_concave_on_large_square() {
    // side 6 puts λ₁ ≈ 0.55 below the slope of f at zero, so the solution is nontrivial
    let dom = ConvexDomain::square(6.0);
    for r in [pconcave::reaction::entropy_a(), pconcave::reaction::entropy_b()] {
        let u = solve_dirichlet(&dom, &r, &SolverConfig::new(2.0), 6.0 / 64.0).unwrap();
        let spec = pconcave::transform::build_phi(&r, 2.0).unwrap();
        let phi = |t: f64| spec.phi(t);
        let rep = convexity_scan(&ScanTarget::Field { field: &u.field, transform: &phi }, &dom, &Sampling::default());
        assert_eq!(rep.verdict, ConcavityVerdict::Concave, "{}: {rep:?}", r.name());
    }
}
