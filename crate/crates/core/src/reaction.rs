//! Reaction terms `f` with primitive `F(t) = ∫₀ᵗ f`, and grid checks of the
//! structural conditions under which a transformed solution is concave.
//!
//! Both functions are given on `t ≥ 0`. Evaluation at negative arguments uses
//! the even extension of `f` and the odd extension of `F`, which is what the
//! energy minimiser needs to see `J(|u|) ≤ J(u)`.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReactionError {
    #[error("{which} is not finite at t = {t}")]
    EvaluationFailure { which: &'static str, t: f64 },
    #[error("unknown reaction '{0}'")]
    UnknownReaction(String),
    #[error("invalid reaction parameter: {0}")]
    InvalidParameter(String),
}

/// `f(t) = λ t^{p−1}`: the reaction whose positive solutions are first
/// eigenfunctions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenParams {
    pub lambda: f64,
    pub p: f64,
}

#[derive(Clone)]
pub struct ReactionTerm {
    name: String,
    f: ScalarFn,
    primitive: ScalarFn,
    f_prime: Option<ScalarFn>,
    m: f64,
    eigen: Option<EigenParams>,
}

impl fmt::Debug for ReactionTerm {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        fm.debug_struct("ReactionTerm")
            .field("name", &self.name)
            .field("m", &self.m)
            .field("eigen", &self.eigen)
            .finish_non_exhaustive()
    }
}

impl ReactionTerm {
    /// A reaction from closures defined on `t ≥ 0`. `m` is the cutoff
    /// `inf{t > 0 : f(t) = 0}`, or `f64::INFINITY`.
    pub fn custom(
        name: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        primitive: impl Fn(f64) -> f64 + Send + Sync + 'static,
        f_prime: Option<ScalarFn>,
        m: f64,
    ) -> Self {
        Self { name: name.into(), f: Arc::new(f), primitive: Arc::new(primitive), f_prime, m, eigen: None }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Cutoff `M`; infinite when `f > 0` everywhere.
    pub fn m(&self) -> f64 {
        self.m
    }

    /// `min(M, 1e3)`, the finite stand-in used for initial guesses and grids.
    pub fn m_hat(&self) -> f64 {
        self.m.min(1e3)
    }

    pub fn eigen(&self) -> Option<EigenParams> {
        self.eigen
    }

    /// `f`, extended evenly to negative arguments.
    #[inline]
    pub fn f(&self, t: f64) -> f64 {
        (self.f)(t.abs())
    }

    /// `F`, extended oddly to negative arguments.
    #[inline]
    #[allow(non_snake_case)]
    pub fn F(&self, t: f64) -> f64 {
        let v = (self.primitive)(t.abs());
        if t < 0.0 {
            -v
        } else {
            v
        }
    }

    /// `f′` on `t ≥ 0`, by the supplied derivative or central differences
    /// with step `1e−6·(1+t)`.
    pub fn f_prime(&self, t: f64) -> f64 {
        let t = t.abs();
        match &self.f_prime {
            Some(d) => d(t),
            None => {
                let h = 1e-6 * (1.0 + t);
                let lo = (t - h).max(0.0);
                ((self.f)(t + h) - (self.f)(lo)) / (t + h - lo)
            }
        }
    }

    pub fn has_exact_derivative(&self) -> bool {
        self.f_prime.is_some()
    }

    fn with_eigen(mut self, e: EigenParams) -> Self {
        self.eigen = Some(e);
        self
    }

    fn with_name(mut self, name: String) -> Self {
        self.name = name;
        self
    }
}

/// `f ≡ 1`.
pub fn constant() -> ReactionTerm {
    ReactionTerm::custom("constant", |_| 1.0, |t| t, Some(Arc::new(|_| 0.0)), f64::INFINITY)
}

/// `f(t) = t^q`, `q ≥ 0`.
pub fn power(q: f64) -> Result<ReactionTerm, ReactionError> {
    if !(q >= 0.0 && q.is_finite()) {
        return Err(ReactionError::InvalidParameter(format!("power exponent must be >= 0, got {q}")));
    }
    let fp: ScalarFn = if q == 0.0 { Arc::new(|_| 0.0) } else { Arc::new(move |t: f64| q * t.powf(q - 1.0)) };
    Ok(ReactionTerm::custom(format!("power:{q}"), move |t| t.powf(q), move |t| t.powf(q + 1.0) / (q + 1.0), Some(fp), f64::INFINITY))
}

/// `f(t) = λ t^{p−1}`.
pub fn eigen(lambda: f64, p: f64) -> Result<ReactionTerm, ReactionError> {
    if !(lambda > 0.0 && p > 1.0) {
        return Err(ReactionError::InvalidParameter(format!("eigen needs lambda > 0 and p > 1 (got {lambda}, {p})")));
    }
    Ok(ReactionTerm::custom(
        format!("eigen:{lambda}"),
        move |t| lambda * t.powf(p - 1.0),
        move |t| lambda * t.powf(p) / p,
        Some(Arc::new(move |t: f64| lambda * (p - 1.0) * t.powf(p - 2.0))),
        f64::INFINITY,
    )
    .with_eigen(EigenParams { lambda, p }))
}

/// `F(t) = t log(1+t)`.
pub fn entropy_a() -> ReactionTerm {
    ReactionTerm::custom(
        "entropy-a",
        |t| t.ln_1p() + t / (1.0 + t),
        |t| t * t.ln_1p(),
        Some(Arc::new(|t: f64| 1.0 / (1.0 + t) + 1.0 / ((1.0 + t) * (1.0 + t)))),
        f64::INFINITY,
    )
}

/// `F(t) = (t+1) log(t+1) − t`, so `f(t) = log(1+t)`.
pub fn entropy_b() -> ReactionTerm {
    ReactionTerm::custom(
        "entropy-b",
        |t| t.ln_1p(),
        // (1+t)log(1+t) − t, written to avoid cancellation for small t
        |t| if t < 1e-3 { t * t * (0.5 - t / 6.0 + t * t / 12.0) } else { (1.0 + t) * t.ln_1p() - t },
        Some(Arc::new(|t: f64| 1.0 / (1.0 + t))),
        f64::INFINITY,
    )
}

/// `f(t) = 1 + √t`.
pub fn sqrt_shift() -> ReactionTerm {
    ReactionTerm::custom(
        "sqrt-shift",
        |t| 1.0 + t.sqrt(),
        |t| t + 2.0 / 3.0 * t * t.sqrt(),
        Some(Arc::new(|t: f64| 0.5 / t.sqrt())),
        f64::INFINITY,
    )
}

/// `f(t) = (1−t)₊`, with `M = 1`.
pub fn truncated_linear() -> ReactionTerm {
    ReactionTerm::custom(
        "truncated-linear",
        |t| (1.0 - t).max(0.0),
        |t| if t <= 1.0 { t - 0.5 * t * t } else { 0.5 },
        Some(Arc::new(|t: f64| if t < 1.0 { -1.0 } else { 0.0 })),
        1.0,
    )
}

/// `F(t) = √(1+t) + t² − 1`.
pub fn remark_f() -> ReactionTerm {
    ReactionTerm::custom(
        "remark-f",
        |t| 0.5 / (1.0 + t).sqrt() + 2.0 * t,
        // √(1+t) − 1 = t/(√(1+t)+1)
        |t| t / ((1.0 + t).sqrt() + 1.0) + t * t,
        Some(Arc::new(|t: f64| 2.0 - 0.25 / (1.0 + t).powf(1.5))),
        f64::INFINITY,
    )
}

/// Reaction with primitive `F^{q/2}`; for `q = 2` this is `r` itself.
///
/// If `r` satisfies the concavity conditions at exponent 2, the lifted term
/// satisfies them at exponent `q`.
pub fn lifted_reaction(r: &ReactionTerm, q: f64) -> Result<ReactionTerm, ReactionError> {
    if !(q > 0.0 && q.is_finite()) {
        return Err(ReactionError::InvalidParameter(format!("lift exponent must be positive, got {q}")));
    }
    let a = 0.5 * q;
    let (r1, r2, r3) = (r.clone(), r.clone(), r.clone());
    let f = move |t: f64| {
        let big = r1.F(t);
        if big == 0.0 {
            return match a.partial_cmp(&1.0) {
                Some(std::cmp::Ordering::Greater) => 0.0,
                Some(std::cmp::Ordering::Equal) => r1.f(t),
                _ => f64::INFINITY,
            };
        }
        a * big.powf(a - 1.0) * r1.f(t)
    };
    let primitive = move |t: f64| r2.F(t).powf(a);
    let f_prime: Option<ScalarFn> = r.has_exact_derivative().then(|| {
        Arc::new(move |t: f64| {
            let (big, small) = (r3.F(t), r3.f(t));
            if big == 0.0 {
                return if a == 1.0 { r3.f_prime(t) } else { f64::NAN };
            }
            a * ((a - 1.0) * big.powf(a - 2.0) * small * small + big.powf(a - 1.0) * r3.f_prime(t))
        }) as ScalarFn
    });
    Ok(ReactionTerm::custom(format!("lift:{q}:{}", r.name()), f, primitive, f_prime, r.m()))
}

/// The named reaction terms, with `q = 1/2` for the power family and the
/// eigen term at `λ = 1`, `p = 2`.
pub fn builtin_catalog() -> Vec<ReactionTerm> {
    vec![
        constant(),
        power(0.5).expect("valid exponent"),
        eigen(1.0, 2.0).expect("valid parameters"),
        entropy_a(),
        entropy_b(),
        sqrt_shift(),
        truncated_linear(),
        remark_f(),
    ]
}

/// Parses a reaction name.
///
/// Accepted forms: `constant`, `power:<q>`, `eigen[:<λ>]` (using exponent
/// `p`), `entropy-a`, `entropy-b`, `sqrt-shift`, `truncated-linear`,
/// `remark-f`, and `lift:<q>:<name>`.
pub fn by_name(spec: &str, p: f64) -> Result<ReactionTerm, ReactionError> {
    let spec = spec.trim();
    let num = |s: &str| s.parse::<f64>().map_err(|_| ReactionError::InvalidParameter(format!("bad number '{s}' in '{spec}'")));
    let (head, rest) = match spec.split_once(':') {
        Some((h, r)) => (h, Some(r)),
        None => (spec, None),
    };
    let r = match (head.to_ascii_lowercase().replace('_', "-").as_str(), rest) {
        ("constant", None) => constant(),
        ("power", Some(q)) => power(num(q)?)?,
        ("eigen", None) => eigen(1.0, p)?,
        ("eigen", Some(l)) => eigen(num(l)?, p)?,
        ("entropy-a", None) => entropy_a(),
        ("entropy-b", None) => entropy_b(),
        ("sqrt-shift", None) => sqrt_shift(),
        ("truncated-linear", None) => truncated_linear(),
        ("remark-f", None) => remark_f(),
        ("lift", Some(rest)) => {
            let (q, base) = rest
                .split_once(':')
                .ok_or_else(|| ReactionError::InvalidParameter(format!("expected lift:<q>:<name>, got '{spec}'")))?;
            lifted_reaction(&by_name(base, 2.0)?, num(q)?)?
        }
        _ => return Err(ReactionError::UnknownReaction(spec.to_string())),
    };
    Ok(r.with_name(spec.to_string()))
}

/// First zero of `f` on `(0, t_max]`, refined by bisection to `1e−12`, or
/// `+∞` if `f > 0` at every scanned point.
pub fn detect_m(r: &ReactionTerm, t_max: f64) -> f64 {
    const SCAN: usize = 4096;
    let t0 = t_max * 1e-9;
    let ratio = (t_max / t0).powf(1.0 / (SCAN - 1) as f64);
    let mut prev = 0.0;
    let mut t = t0;
    for k in 0..SCAN {
        if k == SCAN - 1 {
            t = t_max;
        }
        if r.f(t) <= 0.0 {
            let (mut lo, mut hi) = (prev, t);
            while hi - lo > 1e-12 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if r.f(mid) <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return hi;
        }
        prev = t;
        t *= ratio;
    }
    f64::INFINITY
}

/// Geometric sampling grid for the hypothesis checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub t_min: f64,
    pub t_max: f64,
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { t_min: 1e-6, t_max: 1e3, points: 2048 }
    }
}

impl GridSpec {
    /// Grid on `[t_min, min(t_max, M(1−1e−6))]`.
    pub fn points_below(&self, m: f64) -> Vec<f64> {
        let hi = if m.is_finite() { self.t_max.min(m * (1.0 - 1e-6)) } else { self.t_max };
        geometric_grid(self.t_min, hi, self.points)
    }
}

pub fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let ratio = (hi / lo).ln() / (n - 1) as f64;
    let mut g: Vec<f64> = (0..n).map(|k| lo * (ratio * k as f64).exp()).collect();
    g[n - 1] = hi;
    g
}

/// Pass/fail/marginal outcome of a sampled inequality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Pass,
    Marginal,
    Fail,
}

impl Verdict {
    pub fn from_margin(margin: f64, tol: f64) -> Self {
        if margin <= tol {
            Self::Pass
        } else if margin <= 10.0 * tol {
            Self::Marginal
        } else {
            Self::Fail
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Pass => "pass",
            Self::Marginal => "marginal",
            Self::Fail => "fail",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Outcome of one grid condition. `margin` is the largest relative violation
/// `excess / (1 + |value|)` (negative when the condition holds strictly) and
/// `worst_t` is the grid point achieving it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionCheck {
    pub verdict: Verdict,
    pub worst_t: f64,
    pub margin: f64,
    pub tolerance: f64,
}

impl ConditionCheck {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    fn from_worst(worst_t: f64, margin: f64, tolerance: f64) -> Self {
        Self { verdict: Verdict::from_margin(margin, tolerance), worst_t, margin, tolerance }
    }
}

/// Relative tolerance of the discrete monotonicity and convexity tests.
pub const CHECK_TOL: f64 = 1e-8;

/// Largest relative excess of `v` over its chords on consecutive triples;
/// positive values witness a convexity violation at the middle point.
pub fn convexity_defect(t: &[f64], v: &[f64]) -> (f64, f64) {
    let mut worst = (f64::NEG_INFINITY, t.get(1).copied().unwrap_or(f64::NAN));
    for k in 1..t.len().saturating_sub(1) {
        let w = (t[k] - t[k - 1]) / (t[k + 1] - t[k - 1]);
        let chord = (1.0 - w) * v[k - 1] + w * v[k + 1];
        let m = (v[k] - chord) / (1.0 + v[k].abs());
        if m > worst.0 {
            worst = (m, t[k]);
        }
    }
    worst
}

fn concavity_defect(t: &[f64], v: &[f64]) -> (f64, f64) {
    let neg: Vec<f64> = v.iter().map(|x| -x).collect();
    convexity_defect(t, &neg)
}

/// Largest relative increase between consecutive values.
fn increase_defect(t: &[f64], v: &[f64]) -> (f64, f64) {
    let mut worst = (f64::NEG_INFINITY, t[0]);
    for k in 0..v.len() - 1 {
        let m = (v[k + 1] - v[k]) / (1.0 + v[k].abs());
        if m > worst.0 {
            worst = (m, t[k + 1]);
        }
    }
    worst
}

/// Estimates of `lim f(t)/t^{p−1}` at `0⁺` and at `+∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolvabilityLimits {
    pub at_zero: f64,
    pub at_infinity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisReport {
    pub p: f64,
    pub grid: GridSpec,
    /// `f(t)/t^{p−1}` non-increasing on `(0, M)`.
    pub thm11_monotone: ConditionCheck,
    /// `s ↦ e^{(p−1)s}/f(e^s)` convex on `(−∞, log M)`.
    pub thm11_convex: ConditionCheck,
    /// `F^{1/p}` concave on `(0, M)`.
    pub thm12_concave_f: ConditionCheck,
    /// `F/f` convex on `(0, M)`.
    pub thm12_convex_ff: ConditionCheck,
    /// `F^{1/p}` concave on the whole grid, ignoring `M`.
    pub thm12_concave_f_global: ConditionCheck,
    pub window: SolvabilityLimits,
}

impl HypothesisReport {
    pub fn thm11_passes(&self) -> bool {
        self.thm11_monotone.passed() && self.thm11_convex.passed()
    }

    pub fn thm12_passes(&self) -> bool {
        self.thm12_concave_f.passed() && self.thm12_convex_ff.passed()
    }

    /// Named conditions in report order.
    pub fn conditions(&self) -> [(&'static str, &ConditionCheck); 5] {
        [
            ("thm11_monotone", &self.thm11_monotone),
            ("thm11_convex", &self.thm11_convex),
            ("thm12_concaveF", &self.thm12_concave_f),
            ("thm12_convexFf", &self.thm12_convex_ff),
            ("thm12_concaveF_global", &self.thm12_concave_f_global),
        ]
    }
}

fn sample(r: &ReactionTerm, grid: &[f64]) -> Result<(Vec<f64>, Vec<f64>), ReactionError> {
    let mut fs = Vec::with_capacity(grid.len());
    let mut bigs = Vec::with_capacity(grid.len());
    for &t in grid {
        let (f, big) = (r.f(t), r.F(t));
        if !f.is_finite() {
            return Err(ReactionError::EvaluationFailure { which: "f", t });
        }
        if !big.is_finite() {
            return Err(ReactionError::EvaluationFailure { which: "F", t });
        }
        fs.push(f);
        bigs.push(big);
    }
    Ok((fs, bigs))
}

/// Samples the four structural conditions on a geometric grid restricted to
/// `(0, M)`, plus the global-grid concavity of `F^{1/p}` and the solvability
/// limits.
pub fn check_hypotheses(r: &ReactionTerm, p: f64, grid: GridSpec) -> Result<HypothesisReport, ReactionError> {
    if !(p > 1.0) {
        return Err(ReactionError::InvalidParameter(format!("p must exceed 1, got {p}")));
    }
    if !(grid.t_min > 0.0 && grid.t_max > grid.t_min && grid.points >= 3) {
        return Err(ReactionError::InvalidParameter(format!("bad grid {grid:?}")));
    }
    let t = grid.points_below(r.m());
    let (fs, bigs) = sample(r, &t)?;
    let tol = CHECK_TOL;

    let ratio: Vec<f64> = t.iter().zip(&fs).map(|(t, f)| f / t.powf(p - 1.0)).collect();
    let (m, w) = increase_defect(&t, &ratio);
    let thm11_monotone = ConditionCheck::from_worst(w, m, tol);

    // in s = log t the geometric grid is uniform
    let s: Vec<f64> = t.iter().map(|t| t.ln()).collect();
    let g: Vec<f64> = t.iter().zip(&fs).map(|(t, f)| t.powf(p - 1.0) / f).collect();
    let (m, ws) = convexity_defect(&s, &g);
    let thm11_convex = ConditionCheck::from_worst(ws.exp(), m, tol);

    let root: Vec<f64> = bigs.iter().map(|x| x.powf(1.0 / p)).collect();
    let (m, w) = concavity_defect(&t, &root);
    let thm12_concave_f = ConditionCheck::from_worst(w, m, tol);

    let q: Vec<f64> = bigs.iter().zip(&fs).map(|(big, f)| big / f).collect();
    let (m, w) = convexity_defect(&t, &q);
    let thm12_convex_ff = ConditionCheck::from_worst(w, m, tol);

    let tg = geometric_grid(grid.t_min, grid.t_max, grid.points);
    let (_, bigs_g) = sample(r, &tg)?;
    let root_g: Vec<f64> = bigs_g.iter().map(|x| x.powf(1.0 / p)).collect();
    let (m, w) = concavity_defect(&tg, &root_g);
    let thm12_concave_f_global = ConditionCheck::from_worst(w, m, tol);

    Ok(HypothesisReport {
        p,
        grid,
        thm11_monotone,
        thm11_convex,
        thm12_concave_f,
        thm12_convex_ff,
        thm12_concave_f_global,
        window: solvability_limits(r, p, grid),
    })
}

/// `f(t)/t^{p−1}` at the grid ends. Past a finite cutoff `f` vanishes, so the
/// limit at infinity is 0.
pub fn solvability_limits(r: &ReactionTerm, p: f64, grid: GridSpec) -> SolvabilityLimits {
    let ratio = |t: f64| r.f(t) / t.powf(p - 1.0);
    SolvabilityLimits {
        at_zero: ratio(grid.t_min),
        at_infinity: if r.m().is_finite() { 0.0 } else { ratio(grid.t_max) },
    }
}
