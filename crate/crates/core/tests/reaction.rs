use pconcave::reaction::{builtin_catalog, check_hypotheses, entropy_a, entropy_b, lifted_reaction, power, GridSpec};
use pconcave::ReactionTerm;
use proptest::prelude::*;

fn extended_catalog() -> Vec<ReactionTerm> {
    let mut all = builtin_catalog();
    all.push(power(0.0).unwrap());
    all.push(power(1.5).unwrap());
    all.push(lifted_reaction(&entropy_a(), 3.0).unwrap());
    all.push(lifted_reaction(&entropy_b(), 2.5).unwrap());
    all
}

#[test]
fn concave_root_of_primitive_implies_monotone_quotient() {
    for r in extended_catalog() {
        for p in [1.5, 2.0, 2.5, 3.0] {
            let rep = check_hypotheses(&r, p, GridSpec::default()).unwrap();
            if rep.thm12_concave_f.passed() {
                assert!(rep.thm11_monotone.passed(), "{} at p={p}: {:?}", r.name(), rep.thm11_monotone);
            }
        }
    }
}

#[test]
fn primitive_growth_bound() {
    for r in extended_catalog() {
        for p in [1.5, 2.0, 3.0] {
            let rep = check_hypotheses(&r, p, GridSpec::default()).unwrap();
            if !rep.thm12_concave_f.passed() {
                continue;
            }
            let c = 2.0 * r.F(1.0).max(1.0);
            for t in GridSpec::default().points_below(r.m()) {
                assert!(r.F(t) <= c * (1.0 + t.powf(p)), "{} at p={p}, t={t}", r.name());
            }
        }
    }
}

#[test]
fn monotone_condition_strengthens_as_p_decreases() {
    let ps = [1.25, 1.5, 2.0, 2.5, 3.0, 4.0];
    for r in extended_catalog() {
        let verdicts: Vec<bool> = ps.iter().map(|&p| check_hypotheses(&r, p, GridSpec::default()).unwrap().thm11_monotone.passed()).collect();
        if let Some(first) = verdicts.iter().position(|&v| v) {
            assert!(verdicts[first..].iter().all(|&v| v), "{}: {verdicts:?}", r.name());
        }
    }
}

#[test]
fn entropy_b_passes_concavity_conditions() {
    let rep = check_hypotheses(&entropy_b(), 2.0, GridSpec::default()).unwrap();
    assert!(rep.thm12_passes());
    assert!((rep.window.at_zero - 1.0).abs() < 1e-3);
}

#[test]
fn truncated_reaction_vanishes_past_cutoff() {
    for r in builtin_catalog().into_iter().filter(|r| r.m().is_finite()) {
        for k in 1..50 {
            let t = r.m() * (1.0 + 0.1 * k as f64);
            assert_eq!(r.f(t), 0.0, "{} at {t}", r.name());
        }
    }
}

proptest! {
    #[test]
    fn power_primitive_differentiates_to_f(q in 0.0f64..4.0, t in 1e-3f64..50.0) {
        let r = power(q).unwrap();
        let d = 1e-5 * (1.0 + t);
        let fd = (r.F(t + d) - r.F(t - d)) / (2.0 * d);
        prop_assert!((fd - r.f(t)).abs() <= 1e-5 * (1.0 + r.f(t).abs()));
    }

    #[test]
    fn lifted_primitive_is_a_power_of_the_base(q in 1.1f64..4.0, t in 1e-3f64..50.0) {
        let base = entropy_a();
        let r = lifted_reaction(&base, q).unwrap();
        let want = base.F(t).powf(q / 2.0);
        prop_assert!((r.F(t) - want).abs() <= 1e-12 * want);
        let d = 1e-5 * (1.0 + t);
        let fd = (r.F(t + d) - r.F(t - d)) / (2.0 * d);
        prop_assert!((fd - r.f(t)).abs() <= 1e-5 * (1.0 + r.f(t).abs()));
    }
}
