//! Limited-memory BFGS with a problem-supplied preconditioner as the initial
//! inverse Hessian, and Armijo backtracking.

use std::collections::VecDeque;

use crate::sparse::dot;

/// Approximate inverse Hessian `z = P⁻¹ r`.
pub trait Preconditioner: Send + Sync {
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

pub trait Problem {
    fn dim(&self) -> usize;

    /// Objective value, writing the gradient into `grad`.
    fn eval(&self, x: &[f64], grad: &mut [f64]) -> f64;

    /// Objective value alone.
    fn value(&self, x: &[f64]) -> f64 {
        let mut g = vec![0.0; self.dim()];
        self.eval(x, &mut g)
    }

    /// Stationarity measure compared against the tolerance.
    fn residual(&self, x: &[f64], grad: &[f64]) -> f64;

    /// Preconditioner built at `x`, or `None` for the scaled identity.
    fn preconditioner(&self, _x: &[f64]) -> Option<Box<dyn Preconditioner + '_>> {
        None
    }

    /// Optional replacement of an accepted iterate (for instance a symmetry
    /// or sign normalisation). It is kept only if the value does not increase.
    fn project(&self, _x: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearch {
    /// Step reduction factor per backtrack.
    pub shrink: f64,
    /// Sufficient-decrease constant.
    pub c1: f64,
    pub max_backtracks: usize,
}

impl Default for LineSearch {
    fn default() -> Self {
        Self { shrink: 0.5, c1: 1e-4, max_backtracks: 40 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub line_search: LineSearch,
    /// Iterations between preconditioner rebuilds (memory is cleared on rebuild).
    pub refresh_every: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self { memory: 6, max_iters: 2000, tol: 1e-9, line_search: LineSearch::default(), refresh_every: 4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub iter: usize,
    pub value: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub residual: f64,
    pub iterations: usize,
    pub status: Status,
    pub trace: Vec<TraceEntry>,
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

fn two_loop(g: &[f64], pairs: &VecDeque<Pair>, pre: Option<&dyn Preconditioner>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alpha = vec![0.0; pairs.len()];
    for (k, p) in pairs.iter().enumerate().rev() {
        alpha[k] = p.rho * dot(&p.s, &q);
        for (qi, yi) in q.iter_mut().zip(&p.y) {
            *qi -= alpha[k] * yi;
        }
    }
    let mut r = vec![0.0; q.len()];
    match pre {
        Some(pre) => pre.apply(&q, &mut r),
        None => {
            let gamma = pairs.back().map_or(1.0, |p| dot(&p.s, &p.y) / dot(&p.y, &p.y));
            for (ri, qi) in r.iter_mut().zip(&q) {
                *ri = gamma * qi;
            }
        }
    }
    for (k, p) in pairs.iter().enumerate() {
        let beta = p.rho * dot(&p.y, &r);
        for (ri, si) in r.iter_mut().zip(&p.s) {
            *ri += (alpha[k] - beta) * si;
        }
    }
    r.iter_mut().for_each(|v| *v = -*v);
    r
}

/// Armijo backtracking along `d`; returns the accepted point and value.
/// Once the predicted decrease drops below the round-off level of `f`, the
/// approximate Wolfe test on the directional derivative is used instead, and
/// the value may rise by at most `1e−13·|f|`.
fn backtrack(problem: &dyn Problem, x: &[f64], f: f64, slope: f64, d: &[f64], ls: &LineSearch, g_out: &mut [f64]) -> Option<(Vec<f64>, f64)> {
    let noise = 1e-13 * f.abs().max(f64::MIN_POSITIVE);
    let mut step = 1.0;
    let mut trial = vec![0.0; x.len()];
    for _ in 0..=ls.max_backtracks {
        for i in 0..x.len() {
            trial[i] = x[i] + step * d[i];
        }
        let ft = problem.eval(&trial, g_out);
        if ft.is_finite() {
            let predicted = ls.c1 * step * slope;
            if -predicted > noise {
                if ft <= f + predicted {
                    return Some((trial, ft));
                }
            } else if ft <= f + noise && dot(g_out, d) <= (2.0 * ls.c1 - 1.0) * slope {
                return Some((trial, ft));
            }
        }
        step *= ls.shrink;
    }
    None
}

pub fn minimize(problem: &dyn Problem, x0: Vec<f64>, opts: &LbfgsOptions) -> Outcome {
    let n = problem.dim();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut f = problem.eval(&x, &mut g);
    let mut pairs: VecDeque<Pair> = VecDeque::new();
    let mut pre = problem.preconditioner(&x);
    let mut since_refresh = 0usize;
    let mut trace = Vec::new();
    let mut g_new = vec![0.0; n];

    for iter in 0..opts.max_iters {
        let res = problem.residual(&x, &g);
        trace.push(TraceEntry { iter, value: f, residual: res });
        if res <= opts.tol {
            return Outcome { x, value: f, residual: res, iterations: iter, status: Status::Converged, trace };
        }
        if pre.is_some() && since_refresh >= opts.refresh_every {
            pre = problem.preconditioner(&x);
            pairs.clear();
            since_refresh = 0;
        }
        since_refresh += 1;

        let mut accepted = None;
        let mut candidates: Vec<Vec<f64>> = Vec::with_capacity(3);
        candidates.push(two_loop(&g, &pairs, pre.as_deref()));
        if !pairs.is_empty() {
            candidates.push(two_loop(&g, &VecDeque::new(), pre.as_deref()));
        }
        if pre.is_some() {
            let gn = crate::sparse::norm(&g).max(f64::MIN_POSITIVE);
            candidates.push(g.iter().map(|v| -v / gn).collect());
        }
        for d in candidates {
            let slope = dot(&g, &d);
            if !(slope < 0.0) {
                continue;
            }
            if let Some(step) = backtrack(problem, &x, f, slope, &d, &opts.line_search, &mut g_new) {
                accepted = Some(step);
                break;
            }
            pairs.clear();
        }
        let Some((x_new, f_new)) = accepted else {
            trace.pop();
            trace.push(TraceEntry { iter, value: f, residual: res });
            return Outcome { x, value: f, residual: res, iterations: iter, status: Status::LineSearchFailed, trace };
        };

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * crate::sparse::norm(&s) * crate::sparse::norm(&y) && sy > 0.0 {
            if pairs.len() == opts.memory {
                pairs.pop_front();
            }
            pairs.push_back(Pair { rho: 1.0 / sy, s, y });
        } else {
            // stale curvature information; restart from the initial metric
            pairs.clear();
        }
        x = x_new;
        f = f_new;
        std::mem::swap(&mut g, &mut g_new);

        if let Some(xp) = problem.project(&x) {
            let mut gp = vec![0.0; n];
            let fp = problem.eval(&xp, &mut gp);
            if fp <= f {
                x = xp;
                f = fp;
                g = gp;
                pairs.clear();
            }
        }
    }
    let res = problem.residual(&x, &g);
    trace.push(TraceEntry { iter: opts.max_iters, value: f, residual: res });
    Outcome { x, value: f, residual: res, iterations: opts.max_iters, status: Status::MaxIterations, trace }
}
