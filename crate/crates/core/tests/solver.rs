use std::collections::HashMap;
use std::sync::Arc;

use pconcave::geometry::triangulate;
use pconcave::optim::Problem;
use pconcave::reaction::{constant, entropy_a, entropy_b, truncated_linear};
use pconcave::solver::{
    assemble_energy, first_eigenvalue, first_eigenvalue_on_mesh, solve_dirichlet, solve_on_mesh, solve_regularized_family_on_mesh, transformed_residual,
    transformed_residual_with_source, GChoice, SolveError,
};
use pconcave::transform::build_phi;
use pconcave::{ConvexDomain, Point, ScalarField, SolverConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sup_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn gradient_matches_central_differences() {
    let mesh = triangulate(&ConvexDomain::unit_square(), 0.125).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for r in [constant(), entropy_a()] {
        for p in [1.5, 2.0, 3.0] {
            for eps in [0.0, 0.01] {
                let cfg = SolverConfig::new(p).with_epsilon(eps);
                let energy = assemble_energy(&mesh, &r, &cfg);
                let x: Vec<f64> = (0..energy.dim()).map(|_| rng.gen_range(0.05..1.0)).collect();
                let mut g = vec![0.0; x.len()];
                energy.eval(&x, &mut g);
                for _ in 0..20 {
                    let k = rng.gen_range(0..x.len());
                    let d = 1e-6 * (1.0 + x[k].abs());
                    let (mut xp, mut xm) = (x.clone(), x.clone());
                    xp[k] += d;
                    xm[k] -= d;
                    let fd = (energy.value(&xp) - energy.value(&xm)) / (2.0 * d);
                    let rel = (fd - g[k]).abs() / g[k].abs().max(1e-12);
                    assert!(rel <= 1e-5, "{} p={p} eps={eps} k={k}: fd {fd} vs {}", r.name(), g[k]);
                }
            }
        }
    }
}

fn composite_simpson(g: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n).map(|k| g(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 }).sum();
    h / 3.0 * (g(a) + g(b) + inner)
}

#[test]
fn torsion_interpolant_energy_matches_continuum() {
    let mesh = Arc::new(triangulate(&ConvexDomain::interval(-1.0, 1.0).unwrap(), 1.0 / 256.0).unwrap());
    let r = constant();
    let energy = assemble_energy(&mesh, &r, &SolverConfig::new(2.0));
    let u = ScalarField::from_fn(Arc::clone(&mesh), |x| (1.0 - x[0] * x[0]) / 2.0);
    let discrete = energy.energy_full(u.values());
    let continuum = composite_simpson(|x| 0.5 * x * x - (1.0 - x * x) / 2.0, -1.0, 1.0, 2000);
    assert!((discrete - continuum).abs() < 1e-4, "{discrete} vs {continuum}");
}

#[test]
fn torsion_1d_p_below_two() {
    let res = solve_dirichlet(&ConvexDomain::interval(-1.0, 1.0).unwrap(), &constant(), &SolverConfig::new(1.5), 2.0 / 512.0).unwrap();
    let err = res.field.mesh().nodes().iter().zip(res.field.values()).map(|(x, u)| (u - (1.0 - x[0].abs().powi(3)) / 3.0).abs()).fold(0.0, f64::max);
    assert!(err < 1e-3, "{err}");
}

#[test]
fn disc_torsion_center_value() {
    let disc = ConvexDomain::regular_polygon(64, 1.0).unwrap();
    let res = solve_dirichlet(&disc, &constant(), &SolverConfig::new(2.0), 0.05).unwrap();
    let center = res.field.interpolate([0.0, 0.0]).unwrap();
    assert!((center - 0.25).abs() <= 0.01, "{center}");
}

#[test]
fn energy_trace_is_non_increasing() {
    let trace = solve_dirichlet(&ConvexDomain::unit_square(), &entropy_b(), &SolverConfig::new(3.0), 1.0 / 16.0).unwrap().trace;
    assert!(trace.len() > 1);
    for w in trace.windows(2) {
        assert!(w[1].value <= w[0].value + 1e-13 * w[0].value.abs(), "{:?}", w);
    }
    let res = solve_dirichlet(&ConvexDomain::square(6.0), &entropy_a(), &SolverConfig::new(2.0), 6.0 / 32.0).unwrap();
    assert!(res.trace.windows(2).all(|w| w[1].value <= w[0].value + 1e-13 * w[0].value.abs()));
}

#[test]
fn disc_first_eigenvalue() {
    let disc = ConvexDomain::regular_polygon(64, 1.0).unwrap();
    let e = first_eigenvalue(&disc, 2.0, 0.05).unwrap();
    assert!((e.lambda / 5.783 - 1.0).abs() < 0.02, "{}", e.lambda);
    assert!(e.field.values().iter().all(|&v| v >= 0.0));
}

#[test]
fn eigenvalue_scales_with_domain() {
    let unit = first_eigenvalue(&ConvexDomain::unit_square(), 2.0, 1.0 / 32.0).unwrap();
    let big = first_eigenvalue(&ConvexDomain::square(2.0), 2.0, 2.0 / 32.0).unwrap();
    assert!((big.lambda * 4.0 / unit.lambda - 1.0).abs() < 0.01, "{} vs {}", big.lambda, unit.lambda);
    let exact = 2.0 * std::f64::consts::PI.powi(2) / 4.0;
    assert!((big.lambda / exact - 1.0).abs() < 0.01, "{}", big.lambda);
}

#[test]
fn kernel_choices_agree_at_small_epsilon() {
    let mesh = Arc::new(triangulate(&ConvexDomain::unit_square(), 1.0 / 32.0).unwrap());
    let r = entropy_a();
    let dom = ConvexDomain::square(6.0);
    let big = Arc::new(triangulate(&dom, 6.0 / 32.0).unwrap());
    for (m, r) in [(&mesh, constant()), (&big, r)] {
        let base = solve_on_mesh(Arc::clone(m), &r, &SolverConfig::new(2.0), None).unwrap();
        for g in [GChoice::Primitive, GChoice::Power] {
            let cfg = SolverConfig { g_choice: g, ..SolverConfig::new(2.0).with_epsilon(1e-4) };
            let res = solve_on_mesh(Arc::clone(m), &r, &cfg, None).unwrap();
            // absolute for the unit-size torsion solution, relative for the
            // larger entropy-A solution where ε·G^{2/p} grows with u
            let gap = sup_gap(res.field.values(), base.field.values());
            assert!(gap <= 1e-3 * base.field.max().max(1.0), "{} {g:?}: {gap}", r.name());
        }
    }
}

#[test]
fn single_zero_epsilon_family_matches_direct_solve() {
    let mesh = Arc::new(triangulate(&ConvexDomain::unit_square(), 1.0 / 16.0).unwrap());
    let cfg = SolverConfig::new(2.0);
    let direct = solve_on_mesh(Arc::clone(&mesh), &constant(), &cfg, None).unwrap();
    let fam = solve_regularized_family_on_mesh(mesh, &constant(), &cfg, &[0.0]).unwrap();
    let only = fam[0].as_ref().unwrap();
    assert_eq!(only.field.values(), direct.field.values());
}

#[test]
fn truncated_solution_stays_below_cutoff() {
    let r = truncated_linear();
    for eps in [0.0, 0.05] {
        let res = solve_dirichlet(&ConvexDomain::square(10.0), &r, &SolverConfig::new(2.0).with_epsilon(eps), 10.0 / 32.0).unwrap();
        assert!(res.field.max() > 0.9, "interior should approach the cutoff: {}", res.field.max());
        assert!(res.field.max() <= r.m() + 1e-6, "{}", res.field.max());
    }
}

/// Node index lookup by coordinates rounded to 1e−9.
fn node_index(nodes: &[Point]) -> HashMap<(i64, i64), usize> {
    nodes.iter().enumerate().map(|(i, p)| (((p[0] * 1e9).round() as i64, (p[1] * 1e9).round() as i64), i)).collect()
}

#[test]
fn square_torsion_has_dihedral_symmetry() {
    let res = solve_dirichlet(&ConvexDomain::unit_square(), &constant(), &SolverConfig::new(2.0), 1.0 / 32.0).unwrap();
    let nodes = res.field.mesh().nodes();
    let index = node_index(nodes);
    let u = res.field.values();
    let maps: [fn(Point) -> Point; 7] = [
        |p| [1.0 - p[0], p[1]],
        |p| [p[0], 1.0 - p[1]],
        |p| [p[1], p[0]],
        |p| [1.0 - p[1], 1.0 - p[0]],
        |p| [1.0 - p[0], 1.0 - p[1]],
        |p| [p[1], 1.0 - p[0]],
        |p| [1.0 - p[1], p[0]],
    ];
    for g in maps {
        for (i, &p) in nodes.iter().enumerate() {
            let q = g(p);
            let j = index[&((q[0] * 1e9).round() as i64, (q[1] * 1e9).round() as i64)];
            assert!((u[i] - u[j]).abs() <= 1e-6);
        }
    }
}

#[test]
fn two_starting_points_reach_the_same_solution() {
    let mesh = Arc::new(triangulate(&ConvexDomain::unit_square(), 1.0 / 32.0).unwrap());
    let eig = first_eigenvalue_on_mesh(Arc::clone(&mesh), 2.0).unwrap();
    let cfg = SolverConfig::new(2.0);
    let a = solve_on_mesh(Arc::clone(&mesh), &constant(), &cfg, None).unwrap();
    let b = solve_on_mesh(mesh, &constant(), &cfg, Some(eig.field.values())).unwrap();
    assert!(sup_gap(a.field.values(), b.field.values()) <= 1e-4);
}

#[test]
fn reaction_outside_window_gives_trivial_solution() {
    match solve_dirichlet(&ConvexDomain::unit_square(), &entropy_a(), &SolverConfig::new(2.0), 1.0 / 16.0) {
        Err(SolveError::TrivialSolution(r)) => assert!(r.field.max() < 1e-8),
        other => panic!("expected a trivial solution, got {:?}", other.map(|r| r.field.max())),
    }
}

fn torsion_residual(n: usize, eps: f64) -> f64 {
    let r = constant();
    let spec = build_phi(&r, 2.0).unwrap();
    let res = solve_dirichlet(&ConvexDomain::interval(-1.0, 1.0).unwrap(), &r, &SolverConfig::new(2.0), 2.0 / n as f64).unwrap();
    transformed_residual(&res.field, &spec, &r, 2.0, eps).l2
}

#[test]
fn torsion_residual_decreases_at_first_order() {
    // h ∈ {1/64, 1/128, 1/256} on an interval of length 2
    let l2: Vec<f64> = [128, 256, 512].iter().map(|&n| torsion_residual(n, 0.0)).collect();
    for w in l2.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order >= 0.9, "{l2:?}");
    }
}

#[test]
fn regularisation_changes_the_residual() {
    let (a, b) = (torsion_residual(128, 0.0), torsion_residual(128, 0.5));
    assert!(a.is_finite() && b.is_finite());
    assert!((a - b).abs() > 1e-6 * a.max(b));
}

#[test]
fn manufactured_transformed_field_has_small_residual() {
    let mesh = Arc::new(triangulate(&ConvexDomain::interval(-1.0, 1.0).unwrap(), 1.0 / 64.0).unwrap());
    for (r, p) in [(constant(), 2.0), (constant(), 3.0), (entropy_b(), 2.0)] {
        let spec = build_phi(&r, p).unwrap();
        let (a, b) = (0.5, 0.3);
        let field = ScalarField::from_fn(Arc::clone(&mesh), |x| spec.psi(a * x[0] + b));
        // v = a·x + b is affine, so the divergence side vanishes and the
        // source cancels the remaining terms at the exact u = ψ(v)
        let source = |x: Point| {
            let u = spec.psi(a * x[0] + b);
            let (d1, d2) = (spec.phi_prime(u), spec.phi_second(u));
            let k = (a * a).powf(0.5 * (p - 2.0));
            -(r.f(u) * d1.powf(p - 1.0) + (-d2 / (d1 * d1)) * k * (p - 1.0) * a * a)
        };
        let st = transformed_residual_with_source(&field, &spec, &r, p, 0.0, &source);
        assert!(st.max_abs <= 1e-6, "{} p={p}: {}", r.name(), st.max_abs);
        assert_eq!(st.degenerate_elements, 0);
    }
}
