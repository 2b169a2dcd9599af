//! The map `φ(t) = ∫₁ᵗ F(τ)^{−1/p} dτ`, its inverse `ψ`, and the logarithm.
//!
//! `φ` is tabulated once at the knots `t = 2^j`, `j ∈ [−40, 40]`, by adaptive
//! Gauss–Kronrod quadrature; an evaluation integrates only from the nearest
//! knot below. Below the smallest knot `F` is replaced by the power law
//! `c τ^a` fitted there, which decides whether `φ(0⁺)` is finite.

use thiserror::Error;

use crate::quadrature::{integrate, NonFiniteIntegrand};
use crate::reaction::{geometric_grid, ConditionCheck, GridSpec, ReactionTerm, CHECK_TOL};

const KNOT_LO: i32 = -40;
const KNOT_HI: i32 = 40;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransformError {
    #[error("F^(-1/p) is not integrable at 0 (F(t) ~ c t^{exponent:.4} with p = {p})")]
    SingularityNotIntegrable { exponent: f64, p: f64 },
    #[error("F must be positive on (0, M); F({t}) = {value}")]
    NonPositivePrimitive { t: f64, value: f64 },
    #[error("invalid transform parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Quadrature(#[from] NonFiniteIntegrand),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformKind {
    PhiF,
    Log,
}

/// Local model `F(τ) ≈ c τ^a` on `(0, δ)`.
#[derive(Debug, Clone, Copy)]
struct TailModel {
    delta: f64,
    c: f64,
    a: f64,
}

impl TailModel {
    /// `1 − a/p`; zero or negative means `φ(0⁺) = −∞`.
    fn kappa(&self, p: f64) -> f64 {
        1.0 - self.a / p
    }

    fn log_case(&self, p: f64) -> bool {
        self.kappa(p).abs() < 1e-6
    }

    /// `∫_t^δ (c τ^a)^{−1/p} dτ`.
    fn integral_from(&self, t: f64, p: f64) -> f64 {
        let k = self.kappa(p);
        let scale = self.c.powf(-1.0 / p);
        if self.log_case(p) {
            scale * (self.delta / t).ln()
        } else {
            scale * (self.delta.powf(k) - t.powf(k)) / k
        }
    }

    /// Inverse of `t ↦ ∫_t^δ`, given the integral value `i ≥ 0`.
    fn invert(&self, i: f64, p: f64) -> f64 {
        let k = self.kappa(p);
        let scale = self.c.powf(-1.0 / p);
        if self.log_case(p) {
            self.delta * (-i / scale).exp()
        } else {
            let base = self.delta.powf(k) - i * k / scale;
            if base <= 0.0 {
                0.0
            } else {
                base.powf(1.0 / k)
            }
        }
    }
}

/// Evaluators for `φ`, `φ′`, `φ″` and `ψ = φ^{−1}`. Immutable once built and
/// safe to share between threads.
#[derive(Debug, Clone)]
pub struct TransformSpec {
    kind: TransformKind,
    p: f64,
    reaction: Option<ReactionTerm>,
    m: f64,
    knots: Vec<f64>,
    knot_phi: Vec<f64>,
    phi_m: f64,
    tail: Option<TailModel>,
    phi_zero: f64,
}

/// Builds `φ` for the given reaction and exponent.
pub fn build_phi(r: &ReactionTerm, p: f64) -> Result<TransformSpec, TransformError> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(TransformError::InvalidParameter(format!("p must exceed 1, got {p}")));
    }
    let m = r.m();
    for t in GridSpec::default().points_below(m) {
        let v = r.F(t);
        if !(v > 0.0 && v.is_finite()) {
            return Err(TransformError::NonPositivePrimitive { t, value: v });
        }
    }
    let mut knots: Vec<f64> = (KNOT_LO..=KNOT_HI).map(|j| 2f64.powi(j)).collect();
    knots.retain(|&k| k < m);
    if knots.is_empty() {
        return Err(TransformError::InvalidParameter(format!("cutoff M = {m} is too small to tabulate φ")));
    }
    let integrand = |t: f64| r.F(t.min(m)).powf(-1.0 / p);
    let piece = |a: f64, b: f64| -> Result<f64, NonFiniteIntegrand> { Ok(integrate(integrand, a, b, 1e-15, 1e-13)?.value) };
    // anchor φ(1) = 0 at the largest knot not above 1
    let anchor = knots.partition_point(|&k| k <= 1.0) - 1;
    let mut knot_phi = vec![0.0; knots.len()];
    knot_phi[anchor] = if m < 1.0 {
        -(piece(knots[anchor], m)? + (1.0 - m) * integrand(m))
    } else {
        -piece(knots[anchor], 1.0)?
    };
    for i in anchor + 1..knots.len() {
        knot_phi[i] = knot_phi[i - 1] + piece(knots[i - 1], knots[i])?;
    }
    for i in (0..anchor).rev() {
        knot_phi[i] = knot_phi[i + 1] - piece(knots[i], knots[i + 1])?;
    }
    let last = knots.len() - 1;
    let phi_m = if m.is_finite() { knot_phi[last] + piece(knots[last], m)? } else { f64::INFINITY };

    let delta = knots[0];
    let a = (r.F(delta) / r.F(0.5 * delta)).log2();
    let tail = TailModel { delta, c: r.F(delta) / delta.powf(a), a };
    let phi_zero = if tail.kappa(p) <= 1e-6 { f64::NEG_INFINITY } else { knot_phi[0] - tail.integral_from(0.0, p) };
    Ok(TransformSpec { kind: TransformKind::PhiF, p, reaction: Some(r.clone()), m, knots, knot_phi, phi_m, tail: Some(tail), phi_zero })
}

/// The logarithmic transform.
pub fn build_log() -> TransformSpec {
    TransformSpec {
        kind: TransformKind::Log,
        p: f64::NAN,
        reaction: None,
        m: f64::INFINITY,
        knots: Vec::new(),
        knot_phi: Vec::new(),
        phi_m: f64::INFINITY,
        tail: None,
        phi_zero: f64::NEG_INFINITY,
    }
}

impl TransformSpec {
    pub fn kind(&self) -> TransformKind {
        self.kind
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn reaction(&self) -> Option<&ReactionTerm> {
        self.reaction.as_ref()
    }

    /// Cutoff of the underlying reaction (infinite for the logarithm).
    pub fn m(&self) -> f64 {
        self.m
    }

    /// `φ(0⁺)`, possibly `−∞`.
    pub fn phi_zero(&self) -> f64 {
        self.phi_zero
    }

    /// Whether `φ(t)` is the linear continuation past the cutoff.
    pub fn is_extrapolated(&self, t: f64) -> bool {
        t > self.m
    }

    fn reaction_ref(&self) -> &ReactionTerm {
        self.reaction.as_ref().expect("phi_F transform has a reaction")
    }

    fn integrand(&self, t: f64) -> f64 {
        self.reaction_ref().F(t.min(self.m)).powf(-1.0 / self.p)
    }

    /// `φ(t)`; `φ(0⁺)` for `t ≤ 0`.
    pub fn phi(&self, t: f64) -> f64 {
        if self.kind == TransformKind::Log {
            return if t > 0.0 { t.ln() } else { f64::NEG_INFINITY };
        }
        if t <= 0.0 {
            return self.phi_zero;
        }
        if t >= self.m {
            return self.phi_m + (t - self.m) * self.integrand(self.m);
        }
        let tail = self.tail.expect("phi_F transform has a tail model");
        if t < tail.delta {
            return self.knot_phi[0] - tail.integral_from(t, self.p);
        }
        let i = self.knot_index(t);
        let rest = integrate(|x| self.integrand(x), self.knots[i], t, 1e-15, 1e-13).map(|q| q.value).unwrap_or(f64::NAN);
        self.knot_phi[i] + rest
    }

    /// `φ(t)`, reporting a divergent singularity as an error at `t = 0`.
    pub fn phi_checked(&self, t: f64) -> Result<f64, TransformError> {
        if t <= 0.0 && self.phi_zero == f64::NEG_INFINITY && self.kind == TransformKind::PhiF {
            let tail = self.tail.expect("phi_F transform has a tail model");
            return Err(TransformError::SingularityNotIntegrable { exponent: tail.a, p: self.p });
        }
        Ok(self.phi(t))
    }

    /// Largest knot index with `knots[i] ≤ t`.
    fn knot_index(&self, t: f64) -> usize {
        self.knots.partition_point(|&k| k <= t).saturating_sub(1)
    }

    /// `φ′(t) = F(t)^{−1/p}`.
    pub fn phi_prime(&self, t: f64) -> f64 {
        match self.kind {
            TransformKind::Log => 1.0 / t,
            TransformKind::PhiF => self.integrand(t),
        }
    }

    /// `φ″(t) = −f(t) / (p F(t)^{1+1/p})`, zero past the cutoff.
    pub fn phi_second(&self, t: f64) -> f64 {
        match self.kind {
            TransformKind::Log => -1.0 / (t * t),
            TransformKind::PhiF => {
                if t >= self.m {
                    return 0.0;
                }
                let r = self.reaction_ref();
                -r.f(t) / (self.p * r.F(t).powf(1.0 + 1.0 / self.p))
            }
        }
    }

    /// `ψ(s) = φ^{−1}(s)`; `0` for `s ≤ φ(0⁺)`.
    pub fn psi(&self, s: f64) -> f64 {
        if self.kind == TransformKind::Log {
            return s.exp();
        }
        if s <= self.phi_zero {
            return 0.0;
        }
        if s >= self.phi_m {
            return self.m + (s - self.phi_m) / self.integrand(self.m);
        }
        let tail = self.tail.expect("phi_F transform has a tail model");
        if s < self.knot_phi[0] {
            return tail.invert(self.knot_phi[0] - s, self.p);
        }
        let i = self.knot_phi.partition_point(|&v| v <= s).saturating_sub(1);
        let lo = self.knots[i];
        let hi = if i + 1 < self.knots.len() { self.knots[i + 1] } else { self.m };
        self.solve_bracketed(s, lo, hi)
    }

    /// Safeguarded Newton on `φ(t) = s` inside `[lo, hi]`.
    fn solve_bracketed(&self, s: f64, mut lo: f64, mut hi: f64) -> f64 {
        let mut t = 0.5 * (lo + hi);
        for _ in 0..200 {
            let g = self.phi(t) - s;
            if g == 0.0 {
                return t;
            }
            if g > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            let newton = t - g / self.phi_prime(t);
            let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if (next - t).abs() <= 1e-15 * t || hi - lo <= 4.0 * f64::EPSILON * hi {
                return next;
            }
            t = next;
        }
        t
    }

    /// `ψ′(s) = 1/φ′(ψ(s))`.
    pub fn psi_prime(&self, s: f64) -> f64 {
        1.0 / self.phi_prime(self.psi(s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KorevaarRow {
    pub t: f64,
    pub phi: f64,
    pub phi_prime: f64,
    pub phi_second: f64,
    pub phi_over_phi_prime: f64,
    pub phi_prime_over_phi_second: f64,
}

/// Observed behaviour of `φ` as `t → 0⁺` on `t = 10^{−k}`, `k = 1..8`.
/// Trends are reported, not certified limits.
#[derive(Debug, Clone, PartialEq)]
pub struct KorevaarReport {
    pub rows: Vec<KorevaarRow>,
    /// `φ′` increases strictly along the rows.
    pub phi_prime_grows: bool,
    /// `φ″ < 0 < φ′` on every row.
    pub signs_hold: bool,
    /// `|φ/φ′|` decreases strictly along the rows.
    pub ratio_phi_trends_to_zero: bool,
    /// `|φ′/φ″|` decreases strictly along the rows.
    pub ratio_prime_trends_to_zero: bool,
    pub last_ratio_phi: f64,
    pub last_ratio_prime: f64,
}

impl KorevaarReport {
    pub fn all_hold(&self) -> bool {
        self.phi_prime_grows && self.signs_hold && self.ratio_phi_trends_to_zero && self.ratio_prime_trends_to_zero
    }
}

pub fn check_korevaar_conditions(spec: &TransformSpec) -> KorevaarReport {
    let rows: Vec<KorevaarRow> = (1..=8)
        .map(|k| 10f64.powi(-k))
        .filter(|&t| t < spec.m())
        .map(|t| {
            let (phi, d1, d2) = (spec.phi(t), spec.phi_prime(t), spec.phi_second(t));
            KorevaarRow { t, phi, phi_prime: d1, phi_second: d2, phi_over_phi_prime: phi / d1, phi_prime_over_phi_second: d1 / d2 }
        })
        .collect();
    let strictly_down = |g: &dyn Fn(&KorevaarRow) -> f64| rows.windows(2).all(|w| g(&w[1]).abs() < g(&w[0]).abs());
    let last = rows.last();
    KorevaarReport {
        phi_prime_grows: rows.windows(2).all(|w| w[1].phi_prime > w[0].phi_prime),
        signs_hold: rows.iter().all(|r| r.phi_second < 0.0 && r.phi_prime > 0.0),
        ratio_phi_trends_to_zero: strictly_down(&|r| r.phi_over_phi_prime),
        ratio_prime_trends_to_zero: strictly_down(&|r| r.phi_prime_over_phi_second),
        last_ratio_phi: last.map_or(f64::NAN, |r| r.phi_over_phi_prime),
        last_ratio_prime: last.map_or(f64::NAN, |r| r.phi_prime_over_phi_second),
        rows,
    }
}

/// Discrete concavity of `s ↦ log ψ(s)` on 512 uniform points of
/// `φ((t_min, min(M, t_max)))`, with the default hypothesis grid bounds.
pub fn check_logpsi_concavity(spec: &TransformSpec) -> ConditionCheck {
    let g = GridSpec::default();
    let t_hi = if spec.m().is_finite() { spec.m() * (1.0 - 1e-6) } else { g.t_max.min(spec.m()) };
    let (s0, s1) = (spec.phi(g.t_min), spec.phi(t_hi));
    const N: usize = 512;
    let s: Vec<f64> = (0..N).map(|k| s0 + (s1 - s0) * k as f64 / (N - 1) as f64).collect();
    let v: Vec<f64> = s.iter().map(|&x| -spec.psi(x).ln()).collect();
    let (margin, worst_s) = crate::reaction::convexity_defect(&s, &v);
    ConditionCheck {
        verdict: crate::reaction::Verdict::from_margin(margin, CHECK_TOL),
        worst_t: spec.psi(worst_s),
        margin,
        tolerance: CHECK_TOL,
    }
}

/// Geometric grid on which the transform invariants are sampled.
pub fn sample_points(spec: &TransformSpec, n: usize) -> Vec<f64> {
    let hi = if spec.m().is_finite() { spec.m() * (1.0 - 1e-6) } else { 1e3 };
    geometric_grid(1e-6, hi, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reaction;

    #[test]
    fn constant_p2_closed_form() {
        let s = build_phi(&reaction::constant(), 2.0).unwrap();
        assert!((s.phi(4.0) - 2.0).abs() < 1e-13);
        assert!(s.phi(1.0).abs() < 1e-15);
        assert!((s.phi_zero() + 2.0).abs() < 1e-9);
        for t in [1e-9, 0.3, 17.0, 1e7] {
            assert!((s.phi(t) - 2.0 * (t.sqrt() - 1.0)).abs() < 1e-11 * (1.0 + t.sqrt()), "t={t}");
        }
    }

    #[test]
    fn log_transform_exact() {
        let s = build_log();
        assert_eq!(s.phi(1.0), 0.0);
        assert_eq!(s.phi_second(2.0), -0.25);
        for t in [0.1, 1.0, 10.0] {
            assert!((s.psi(s.phi(t)) - t).abs() < 1e-15 * t);
        }
    }

    #[test]
    fn roundtrip_entropy_b() {
        let s = build_phi(&reaction::entropy_b(), 2.0).unwrap();
        assert_eq!(s.phi_zero(), f64::NEG_INFINITY);
        for t in sample_points(&s, 60) {
            assert!((s.psi(s.phi(t)) - t).abs() <= 1e-8 * t, "t={t}");
        }
        assert!(matches!(s.phi_checked(0.0), Err(TransformError::SingularityNotIntegrable { .. })));
    }

    #[test]
    fn truncated_continuation_is_linear() {
        let s = build_phi(&reaction::truncated_linear(), 2.0).unwrap();
        assert!(s.is_extrapolated(1.5) && !s.is_extrapolated(0.5));
        let slope = 0.5f64.powf(-0.5);
        assert!((s.phi(3.0) - s.phi(2.0) - slope).abs() < 1e-12);
        assert!((s.psi(s.phi(2.5)) - 2.5).abs() < 1e-12);
        assert!((s.psi(s.phi(0.999)) - 0.999).abs() < 1e-12);
    }

    #[test]
    fn eigen_reaction_diverges_at_zero() {
        let s = build_phi(&reaction::eigen(2.0, 3.0).unwrap(), 3.0).unwrap();
        assert_eq!(s.phi_zero(), f64::NEG_INFINITY);
        assert!(s.phi(1e-20).is_finite());
    }

    #[test]
    fn nonpositive_primitive_rejected() {
        let r = ReactionTerm::custom("neg", |_| -1.0, |t| -t, None, f64::INFINITY);
        assert!(matches!(build_phi(&r, 2.0), Err(TransformError::NonPositivePrimitive { .. })));
    }
}
