//! Acceptance criteria. Each test prints one `[PASS]`/`[FAIL]` line; run with
//! `cargo test --release --test acceptance -- --nocapture --test-threads=1`.

use std::sync::Arc;
use std::time::Instant;

use pconcave::concavity::{convexity_scan, Sampling, ScanTarget};
use pconcave::geometry::triangulate;
use pconcave::optim::Problem;
use pconcave::reaction::{
    builtin_catalog, check_hypotheses, constant, entropy_a, entropy_b, lifted_reaction, power, remark_f, sqrt_shift, truncated_linear, GridSpec,
    Verdict,
};
use pconcave::solver::{
    assemble_energy, first_eigenvalue_on_mesh, solve_dirichlet, solve_on_mesh, solve_regularized_family_on_mesh, transformed_residual,
};
use pconcave::transform::{build_phi, check_logpsi_concavity};
use pconcave::{ConcavityVerdict, ConvexDomain, ReactionTerm, SolverConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(n: u32, pass: bool, detail: String) {
    println!("[{}] criterion {n}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n} failed: {detail}");
}

fn sup_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn criterion_01_torsion_1d() {
    let dom = ConvexDomain::interval(-1.0, 1.0).unwrap();
    let mut parts = Vec::new();
    let mut pass = true;
    for (p, tol) in [(2.0, 1e-4), (3.0, 5e-3)] {
        let start = Instant::now();
        let res = solve_dirichlet(&dom, &constant(), &SolverConfig::new(p), 2.0 / 512.0).unwrap();
        let secs = start.elapsed().as_secs_f64();
        let exact = |x: f64| if p == 2.0 { (1.0 - x * x) / 2.0 } else { (2.0 / 3.0) * (1.0 - x.abs().powf(1.5)) };
        let err = res.field.mesh().nodes().iter().zip(res.field.values()).map(|(x, u)| (u - exact(x[0])).abs()).fold(0.0, f64::max);
        pass &= err <= tol && secs < 5.0;
        parts.push(format!("p={p} err={err:.2e} (≤{tol:.0e}) {secs:.2}s"));
    }
    report(1, pass, parts.join(", "));
}

#[test]
fn criterion_02_power_concavity_of_torsion() {
    let start = Instant::now();
    let dom = ConvexDomain::unit_square();
    let h = 1.0 / 64.0;
    let res = solve_dirichlet(&dom, &constant(), &SolverConfig::new(2.0), h).unwrap();
    let sqrt = |u: f64| u.max(0.0).sqrt();
    let half = convexity_scan(&ScanTarget::Field { field: &res.field, transform: &sqrt }, &dom, &Sampling::default());
    let pow = |u: f64| u.max(0.0).powf(0.6);
    let six = convexity_scan(&ScanTarget::Field { field: &res.field, transform: &pow }, &dom, &Sampling::default());
    let secs = start.elapsed().as_secs_f64();
    let near_corner = six.violation_locations.iter().filter(|v| dom.corner_distance(v.point) <= 2.0 * h).count();
    let pass = half.verdict == ConcavityVerdict::Concave
        && six.verdict == ConcavityVerdict::Violated
        && six.max_c > 10.0 * six.tolerance
        && six.violation_count > 0
        && near_corner == six.violation_locations.len()
        && secs < 60.0;
    report(
        2,
        pass,
        format!(
            "sqrt(u) {} (max_c {:.2e}, tol {:.2e}); u^0.6 {} (max_c {:.2e} = {:.2}·tol, {} of {} violations within 2h of a corner); {secs:.1}s",
            half.verdict,
            half.max_c,
            half.tolerance,
            six.verdict,
            six.max_c,
            six.max_c / six.tolerance,
            near_corner,
            six.violation_locations.len()
        ),
    );
}

#[test]
fn criterion_03_log_concavity_of_eigenfunctions() {
    let dom = ConvexDomain::unit_square();
    let mesh = Arc::new(triangulate(&dom, 1.0 / 64.0).unwrap());
    let mut parts = Vec::new();
    let mut pass = true;
    for p in [2.0, 3.0] {
        let e = first_eigenvalue_on_mesh(Arc::clone(&mesh), p).unwrap();
        let log = |u: f64| u.ln();
        let rep = convexity_scan(&ScanTarget::Field { field: &e.field, transform: &log }, &dom, &Sampling::default());
        pass &= rep.verdict == ConcavityVerdict::Concave;
        let mut part = format!("p={p} λ₁={:.4} log(u) {} (max_c {:.2e}, tol {:.2e})", e.lambda, rep.verdict, rep.max_c, rep.tolerance);
        if p == 2.0 {
            let rel = e.lambda / (2.0 * std::f64::consts::PI.powi(2)) - 1.0;
            pass &= rel.abs() <= 0.01;
            part += &format!(" rel. error {rel:.1e}");
        }
        parts.push(part);
    }
    report(3, pass, parts.join("; "));
}

#[test]
fn criterion_04_phi_concavity_for_entropy_reactions() {
    let dom = ConvexDomain::unit_square();
    let mesh = Arc::new(triangulate(&dom, 1.0 / 64.0).unwrap());
    let mut parts = Vec::new();
    let mut pass = true;
    for r in [entropy_a(), entropy_b()] {
        let hyp = check_hypotheses(&r, 2.0, GridSpec::default()).unwrap();
        pass &= hyp.thm12_passes();
        let spec = build_phi(&r, 2.0).unwrap();
        match solve_on_mesh(Arc::clone(&mesh), &r, &SolverConfig::new(2.0), None) {
            Ok(res) => {
                let phi = |u: f64| spec.phi(u);
                let rep = convexity_scan(&ScanTarget::Field { field: &res.field, transform: &phi }, &dom, &Sampling::default());
                pass &= rep.verdict == ConcavityVerdict::Concave;
                parts.push(format!("{}: hypotheses pass={}, phi(u) {} (max_c {:.2e})", r.name(), hyp.thm12_passes(), rep.verdict, rep.max_c));
            }
            Err(e) => {
                pass = false;
                parts.push(format!(
                    "{}: hypotheses pass={}, solve failed ({e}); lim f(t)/t = {:.3} at 0 is below λ₁ ≈ 19.74",
                    r.name(),
                    hyp.thm12_passes(),
                    hyp.window.at_zero
                ));
            }
        }
    }
    report(4, pass, parts.join("; "));
}

#[test]
fn criterion_05_hypothesis_table() {
    let check = |r: &ReactionTerm, p: f64| check_hypotheses(r, p, GridSpec::default()).unwrap();
    let mut rows = Vec::new();
    for q in [0.0, 0.5] {
        let rep = check(&power(q).unwrap(), 2.0);
        rows.push((format!("power q={q} pass/pass"), rep.thm11_passes() && rep.thm12_passes()));
    }
    let rep = check(&sqrt_shift(), 2.0);
    rows.push(("sqrt-shift passes 1.1, fails F/f convexity".into(), rep.thm11_passes() && rep.thm12_convex_ff.verdict == Verdict::Fail));
    let rep = check(&remark_f(), 2.0);
    rows.push((
        "remark-F monotone passes, F^1/2 concavity fails".into(),
        rep.thm11_monotone.passed() && rep.thm12_concave_f.verdict == Verdict::Fail,
    ));
    let rep = check(&truncated_linear(), 2.0);
    rows.push(("truncated-linear passes both on (0,1)".into(), rep.thm11_passes() && rep.thm12_passes()));
    let rep = check(&lifted_reaction(&entropy_a(), 3.0).unwrap(), 3.0);
    rows.push(("lifted entropy-A passes at p=3".into(), rep.thm12_passes()));
    let pass = rows.iter().all(|r| r.1);
    let detail = rows.iter().map(|(name, ok)| format!("{name}: {}", if *ok { "ok" } else { "MISMATCH" })).collect::<Vec<_>>().join("; ");
    report(5, pass, detail);
}

#[test]
fn criterion_06_regularisation_convergence() {
    let mesh = Arc::new(triangulate(&ConvexDomain::unit_square(), 1.0 / 64.0).unwrap());
    let cfg = SolverConfig::new(2.0);
    let base = solve_on_mesh(Arc::clone(&mesh), &constant(), &cfg, None).unwrap();
    let fam = solve_regularized_family_on_mesh(mesh, &constant(), &cfg, &[0.1, 0.01, 0.001]).unwrap();
    let gaps: Vec<f64> = fam.iter().map(|r| r.as_ref().map_or(f64::INFINITY, |r| sup_gap(r.field.values(), base.field.values()))).collect();
    let pass = gaps.windows(2).all(|w| w[1] < w[0]) && gaps[2] <= 1e-3;
    report(6, pass, format!("sup gaps for ε = 0.1, 0.01, 0.001: {:.2e}, {:.2e}, {:.2e}", gaps[0], gaps[1], gaps[2]));
}

#[test]
fn criterion_07_maximum_bound_and_truncation() {
    let truncated = truncated_linear();
    let untruncated = ReactionTerm::custom("1-t", |t| 1.0 - t, |t| t - 0.5 * t * t, Some(Arc::new(|_| -1.0)), f64::INFINITY);
    let mut parts = Vec::new();
    let mut pass = true;
    for side in [1.0, 10.0] {
        let mesh = Arc::new(triangulate(&ConvexDomain::square(side), side / 64.0).unwrap());
        let a = solve_on_mesh(Arc::clone(&mesh), &truncated, &SolverConfig::new(2.0), None).unwrap();
        let b = solve_on_mesh(mesh, &untruncated, &SolverConfig::new(2.0), None).unwrap();
        let gap = sup_gap(a.field.values(), b.field.values());
        pass &= a.field.max() <= 1.0 + 1e-8 && gap <= 1e-6;
        parts.push(format!("side {side}: max u = {:.6}, gap to untruncated {gap:.1e}", a.field.max()));
    }
    report(7, pass, parts.join("; "));
}

#[test]
fn criterion_08_transformed_residual_order() {
    let r = constant();
    let spec = build_phi(&r, 2.0).unwrap();
    let dom = ConvexDomain::interval(-1.0, 1.0).unwrap();
    let l2: Vec<f64> = [1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0]
        .iter()
        .map(|&h| {
            let res = solve_dirichlet(&dom, &r, &SolverConfig::new(2.0), h).unwrap();
            transformed_residual(&res.field, &spec, &r, 2.0, 0.0).l2
        })
        .collect();
    let orders: Vec<f64> = l2.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let pass = orders.iter().all(|&o| o >= 0.9);
    report(8, pass, format!("L² residuals {:.3e}, {:.3e}, {:.3e}; observed orders {:.3}, {:.3}", l2[0], l2[1], l2[2], orders[0], orders[1]));
}

#[test]
fn criterion_09_lemma_suite() {
    let mut catalog = builtin_catalog();
    catalog.push(power(0.0).unwrap());
    catalog.push(lifted_reaction(&entropy_a(), 3.0).unwrap());

    let mut implication = true;
    for r in &catalog {
        for p in [1.5, 2.0, 3.0] {
            let rep = check_hypotheses(r, p, GridSpec::default()).unwrap();
            implication &= !rep.thm12_concave_f.passed() || rep.thm11_monotone.passed();
        }
    }

    let mut logpsi = true;
    let mut logpsi_count = 0;
    for r in &catalog {
        for p in [2.0, 3.0] {
            if r.eigen().is_some_and(|e| e.p != p) || !check_hypotheses(r, p, GridSpec::default()).unwrap().thm12_passes() {
                continue;
            }
            logpsi &= check_logpsi_concavity(&build_phi(r, p).unwrap()).passed();
            logpsi_count += 1;
        }
    }

    let mesh = triangulate(&ConvexDomain::unit_square(), 0.125).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for p in [1.5, 2.0, 3.0] {
        for eps in [0.0, 0.01] {
            let r = entropy_a();
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
                worst = worst.max((fd - g[k]).abs() / g[k].abs().max(1e-12));
            }
        }
    }
    let pass = implication && logpsi && worst <= 1e-5;
    report(
        9,
        pass,
        format!("concave F^(1/p) ⇒ monotone f/t^(p−1): {implication}; log ψ concave for {logpsi_count} passing reactions: {logpsi}; worst gradient rel. error {worst:.1e}"),
    );
}

#[test]
fn criterion_10_uniqueness() {
    let mut parts = Vec::new();
    let mut pass = true;
    for side in [1.0, 6.0] {
        let mesh = Arc::new(triangulate(&ConvexDomain::square(side), side / 64.0).unwrap());
        let eig = first_eigenvalue_on_mesh(Arc::clone(&mesh), 2.0).unwrap();
        for r in [constant(), entropy_a()] {
            let cfg = SolverConfig::new(2.0);
            // a trivial minimiser is still a solution, since f(0) = 0
            let field = |res| match res {
                Ok(s) => s,
                Err(pconcave::solver::SolveError::TrivialSolution(s)) => *s,
                Err(e) => panic!("{e}"),
            };
            let a = field(solve_on_mesh(Arc::clone(&mesh), &r, &cfg, None));
            let b = field(solve_on_mesh(Arc::clone(&mesh), &r, &cfg, Some(eig.field.values())));
            let gap = sup_gap(a.field.values(), b.field.values());
            pass &= gap <= 1e-4;
            parts.push(format!("side {side} {}: max u {:.3e}, gap {gap:.1e}", r.name(), a.field.max()));
        }
    }
    report(10, pass, parts.join("; "));
}
