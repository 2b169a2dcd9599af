//! Minimisation of the discrete energy
//!
//! ```text
//! I_ε(u) = Σ_e |e| (ε |G(ū_e)|^{2/p} + |∇u|_e²)^{p/2} / p − Σ_i m_i F(u_i)
//! ```
//!
//! over P1 functions vanishing on the boundary (`ε = 0` gives the plain
//! energy `J`), plus the first eigenvalue of the p-Laplacian and the weak
//! residual of the transformed equation.
//!
//! Gradients are one-point per element, `ū_e` is the vertex mean, and the
//! reaction term uses lumped (vertex) quadrature with masses `m_i`.

use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{triangulate, ConvexDomain, GeometryError, Mesh, ScalarField};
use crate::optim::{self, LbfgsOptions, LineSearch, Preconditioner, Problem, Status, TraceEntry};
use crate::quadrature::gauss_legendre;
use crate::reaction::{solvability_limits, GridSpec, ReactionTerm};
use crate::sparse::{pcg, Csr, Ic0};
use crate::transform::TransformSpec;
use crate::Point;

/// Smoothing of the `ε = 0` kernel inside the gradient only.
const KERNEL_DELTA: f64 = 1e-10;
/// Element count above which element loops run on the rayon pool.
const PAR_THRESHOLD: usize = 4096;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("no convergence after {} iterations (residual {:.3e})", .0.iterations, .0.residual_norm)]
    NonConvergence(Box<SolveResult>),
    #[error("the minimiser is identically zero (max |u| = {:.3e}); the solvability window is violated", .0.field.max())]
    TrivialSolution(Box<SolveResult>),
    #[error("reaction is λ t^(p-1) with λ = {lambda}; positive solutions exist only at the first eigenvalue, use first_eigenvalue")]
    EigenLike { lambda: f64 },
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Which function enters the regularisation `ε (G(u)²)^{1/p}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GChoice {
    /// `G = F`.
    Primitive,
    /// `G(t) = t^p`.
    Power,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub p: f64,
    pub epsilon: f64,
    pub g_choice: GChoice,
    pub max_iters: usize,
    /// Tolerance on `max_i |∂E/∂u_i| / m_i`.
    pub grad_tol: f64,
    pub line_search: LineSearch,
    pub memory: usize,
}

impl SolverConfig {
    pub fn new(p: f64) -> Self {
        Self {
            p,
            epsilon: 0.0,
            g_choice: GChoice::Primitive,
            max_iters: 3000,
            grad_tol: 1e-9,
            line_search: LineSearch::default(),
            memory: 6,
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        if !(self.p > 1.0 && self.p.is_finite()) {
            return Err(SolveError::InvalidConfig(format!("p must exceed 1, got {}", self.p)));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(SolveError::InvalidConfig(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if !(self.grad_tol > 0.0) || self.max_iters == 0 || self.memory == 0 {
            return Err(SolveError::InvalidConfig("grad_tol, max_iters and memory must be positive".into()));
        }
        let ls = &self.line_search;
        if !(ls.shrink > 0.0 && ls.shrink < 1.0 && ls.c1 > 0.0 && ls.c1 < 1.0) {
            return Err(SolveError::InvalidConfig(format!("bad line search parameters {ls:?}")));
        }
        Ok(())
    }

    /// Upper bound `p^{2/p}` on ε for which the transformed equation keeps a
    /// positive kernel.
    pub fn epsilon_bound(&self) -> f64 {
        self.p.powf(2.0 / self.p)
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    /// Nodal `u`, zero on boundary nodes.
    pub field: ScalarField,
    pub energy: f64,
    pub iterations: usize,
    pub residual_norm: f64,
    /// Smallest interior nodal value.
    pub positivity_floor: f64,
    pub epsilon: f64,
    pub converged: bool,
    pub trace: Vec<TraceEntry>,
}

/// The discrete functional on a fixed mesh. Unknowns are the interior nodal
/// values in increasing node order.
pub struct DiscreteEnergy<'a> {
    mesh: &'a Mesh,
    r: &'a ReactionTerm,
    p: f64,
    eps: f64,
    g_choice: GChoice,
    interior: Vec<usize>,
    slot: Vec<usize>,
}

pub fn assemble_energy<'a>(mesh: &'a Mesh, r: &'a ReactionTerm, cfg: &SolverConfig) -> DiscreteEnergy<'a> {
    let interior = mesh.interior_nodes();
    let mut slot = vec![usize::MAX; mesh.node_count()];
    for (k, &i) in interior.iter().enumerate() {
        slot[i] = k;
    }
    DiscreteEnergy { mesh, r, p: cfg.p, eps: cfg.epsilon, g_choice: cfg.g_choice, interior, slot }
}

/// Per-element gradient data shared by energy, gradient and model Hessian.
struct ElementState {
    measure: f64,
    grad: Point,
    s: f64,
    a: f64,
    da: f64,
}

impl<'a> DiscreteEnergy<'a> {
    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    /// Nodal vector with the unknowns placed at interior nodes and zeros on
    /// the boundary.
    pub fn expand(&self, x: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.mesh.node_count()];
        for (k, &i) in self.interior.iter().enumerate() {
            u[i] = x[k];
        }
        u
    }

    pub fn restrict(&self, u: &[f64]) -> Vec<f64> {
        self.interior.iter().map(|&i| u[i]).collect()
    }

    /// Truncated `G` (odd) and `G′` (even).
    fn g_pair(&self, t: f64) -> (f64, f64) {
        let (a, sign) = (t.abs(), if t < 0.0 { -1.0 } else { 1.0 });
        let m = self.r.m();
        let (g, dg) = match self.g_choice {
            GChoice::Primitive if a >= m => (self.r.F(m), 0.0),
            GChoice::Primitive => (self.r.F(a), self.r.f(a)),
            GChoice::Power if a >= m => (m.powf(self.p), 0.0),
            GChoice::Power => (a.powf(self.p), self.p * a.powf(self.p - 1.0)),
        };
        (sign * g, dg)
    }

    fn element_state(&self, e: usize, u: &[f64]) -> ElementState {
        let el = &self.mesh.elements()[e];
        let geo = &self.mesh.element_geometry()[e];
        let verts = el.vertices();
        let mut grad = [0.0; 2];
        let mut mean = 0.0;
        for (j, &v) in verts.iter().enumerate() {
            grad[0] += u[v] * geo.grads[j][0];
            grad[1] += u[v] * geo.grads[j][1];
            mean += u[v];
        }
        let nv = verts.len() as f64;
        mean /= nv;
        let s = grad[0] * grad[0] + grad[1] * grad[1];
        let (a, da) = if self.eps > 0.0 {
            let (g, dg) = self.g_pair(mean);
            let ga = g.abs();
            let a = self.eps * ga.powf(2.0 / self.p);
            let da = if ga > 0.0 { self.eps * (2.0 / self.p) * ga.powf(2.0 / self.p - 1.0) * g.signum() * dg / nv } else { 0.0 };
            (a, da)
        } else {
            (0.0, 0.0)
        };
        ElementState { measure: geo.measure, grad, s, a, da }
    }

    /// Energy and per-element gradient contributions.
    fn element_terms(&self, e: usize, u: &[f64]) -> (f64, [f64; 3]) {
        let st = self.element_state(e, u);
        let energy = st.measure * (st.a + st.s).powf(0.5 * self.p) / self.p;
        let reg = if self.eps > 0.0 { 0.0 } else { KERNEL_DELTA * KERNEL_DELTA };
        let kernel = st.measure * (st.a + st.s + reg).powf(0.5 * (self.p - 2.0));
        let geo = &self.mesh.element_geometry()[e];
        let mut out = [0.0; 3];
        for (j, o) in out.iter_mut().enumerate().take(self.mesh.elements()[e].vertices().len()) {
            let gd = st.grad[0] * geo.grads[j][0] + st.grad[1] * geo.grads[j][1];
            *o = kernel * (gd + 0.5 * st.da);
        }
        (energy, out)
    }

    fn element_loop(&self, u: &[f64]) -> Vec<(f64, [f64; 3])> {
        let n = self.mesh.elements().len();
        if n >= PAR_THRESHOLD {
            (0..n).into_par_iter().map(|e| self.element_terms(e, u)).collect()
        } else {
            (0..n).map(|e| self.element_terms(e, u)).collect()
        }
    }

    /// Energy and full nodal gradient for a nodal vector `u`.
    pub fn energy_and_gradient_full(&self, u: &[f64]) -> (f64, Vec<f64>) {
        let terms = self.element_loop(u);
        let mut grad = vec![0.0; u.len()];
        let mut energy = 0.0;
        for (e, (en, g)) in terms.iter().enumerate() {
            energy += en;
            for (j, &v) in self.mesh.elements()[e].vertices().iter().enumerate() {
                grad[v] += g[j];
            }
        }
        let mass = self.mesh.lumped_mass();
        for i in 0..u.len() {
            energy -= mass[i] * self.r.F(u[i]);
            grad[i] -= mass[i] * self.r.f(u[i]);
        }
        (energy, grad)
    }

    /// Energy of a nodal vector `u` (boundary values are used as given).
    pub fn energy_full(&self, u: &[f64]) -> f64 {
        let terms = self.element_loop(u);
        let mass = self.mesh.lumped_mass();
        terms.iter().map(|t| t.0).sum::<f64>() - (0..u.len()).map(|i| mass[i] * self.r.F(u[i])).sum::<f64>()
    }

    /// SPD model of the Hessian on the unknowns.
    pub fn model_hessian(&self, x: &[f64]) -> Csr {
        let u = self.expand(x);
        let states: Vec<ElementState> = (0..self.mesh.elements().len()).map(|e| self.element_state(e, &u)).collect();
        let smax = states.iter().fold(0.0f64, |m, s| m.max(s.s + s.a));
        let floor = (1e-6 * smax).max(1e-300);
        let mut trip = Vec::with_capacity(states.len() * 9);
        for (e, st) in states.iter().enumerate() {
            let verts = self.mesh.elements()[e].vertices();
            let geo = &self.mesh.element_geometry()[e];
            let base = st.a + st.s + floor;
            let w = st.measure * base.powf(0.5 * (self.p - 2.0));
            let gb: Vec<f64> = (0..verts.len()).map(|j| st.grad[0] * geo.grads[j][0] + st.grad[1] * geo.grads[j][1]).collect();
            for (j, &vj) in verts.iter().enumerate() {
                let sj = self.slot[vj];
                if sj == usize::MAX {
                    continue;
                }
                for (k, &vk) in verts.iter().enumerate() {
                    let sk = self.slot[vk];
                    if sk == usize::MAX {
                        continue;
                    }
                    let bb = geo.grads[j][0] * geo.grads[k][0] + geo.grads[j][1] * geo.grads[k][1];
                    trip.push((sj, sk, w * (bb + (self.p - 2.0) * gb[j] * gb[k] / base)));
                }
            }
        }
        let mass = self.mesh.lumped_mass();
        for (k, &i) in self.interior.iter().enumerate() {
            let d = (-self.r.f_prime(x[k])).max(0.0);
            if d > 0.0 && d.is_finite() {
                trip.push((k, k, mass[i] * d));
            }
        }
        Csr::from_triplets(self.interior.len(), trip)
    }
}

/// `P⁻¹ r` computed by IC(0)-preconditioned CG on the model Hessian.
struct InnerSolve {
    a: Csr,
    ic: Ic0,
    scale: f64,
}

impl Preconditioner for InnerSolve {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.iter_mut().for_each(|v| *v = 0.0);
        pcg(&self.a, &self.ic, r, z, 1e-10, 2000);
        if self.scale != 1.0 {
            z.iter_mut().for_each(|v| *v *= self.scale);
        }
    }
}

impl Problem for DiscreteEnergy<'_> {
    fn dim(&self) -> usize {
        self.interior.len()
    }

    fn eval(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let u = self.expand(x);
        let (e, g) = self.energy_and_gradient_full(&u);
        for (k, &i) in self.interior.iter().enumerate() {
            grad[k] = g[i];
        }
        e
    }

    fn residual(&self, _x: &[f64], grad: &[f64]) -> f64 {
        let mass = self.mesh.lumped_mass();
        self.interior.iter().zip(grad).map(|(&i, g)| g.abs() / mass[i]).fold(0.0, f64::max)
    }

    fn preconditioner(&self, x: &[f64]) -> Option<Box<dyn Preconditioner + '_>> {
        let a = self.model_hessian(x);
        let ic = Ic0::new(&a);
        Some(Box::new(InnerSolve { a, ic, scale: 1.0 }))
    }

    fn project(&self, x: &[f64]) -> Option<Vec<f64>> {
        x.iter().any(|&v| v < 0.0).then(|| x.iter().map(|v| v.abs()).collect())
    }
}

fn check_eigen_refusal(r: &ReactionTerm) -> Result<(), SolveError> {
    match r.eigen() {
        Some(e) => Err(SolveError::EigenLike { lambda: e.lambda }),
        None => Ok(()),
    }
}

/// Meshes `domain` at `h` and minimises the energy.
pub fn solve_dirichlet(domain: &ConvexDomain, r: &ReactionTerm, cfg: &SolverConfig, h: f64) -> Result<SolveResult, SolveError> {
    cfg.validate()?;
    check_eigen_refusal(r)?;
    let mesh = Arc::new(triangulate(domain, h)?);
    solve_on_mesh(mesh, r, cfg, None)
}

/// Minimises the energy on a given mesh. `initial` is a nodal vector (its
/// boundary values are ignored); the default start is `0.1·min(M̂, 1)` on
/// interior nodes.
pub fn solve_on_mesh(mesh: Arc<Mesh>, r: &ReactionTerm, cfg: &SolverConfig, initial: Option<&[f64]>) -> Result<SolveResult, SolveError> {
    cfg.validate()?;
    check_eigen_refusal(r)?;
    let energy = assemble_energy(&mesh, r, cfg);
    let x0 = match initial {
        Some(u0) => {
            if u0.len() != mesh.node_count() {
                return Err(SolveError::InvalidConfig(format!("initial guess has {} values for {} nodes", u0.len(), mesh.node_count())));
            }
            energy.restrict(u0).iter().map(|v| v.abs()).collect()
        }
        None => vec![0.1 * r.m_hat().min(1.0); energy.dim()],
    };
    let opts = LbfgsOptions { memory: cfg.memory, max_iters: cfg.max_iters, tol: cfg.grad_tol, line_search: cfg.line_search, refresh_every: 4 };
    let out = optim::minimize(&energy, x0, &opts);
    let converged = match out.status {
        Status::Converged => true,
        Status::LineSearchFailed => out.residual <= 100.0 * cfg.grad_tol,
        Status::MaxIterations => false,
    };
    let values = energy.expand(&out.x);
    let floor = energy.interior().iter().map(|&i| values[i]).fold(f64::INFINITY, f64::min);
    let result = SolveResult {
        field: ScalarField::new(Arc::clone(&mesh), values)?,
        energy: out.value,
        iterations: out.iterations,
        residual_norm: out.residual,
        positivity_floor: floor,
        epsilon: cfg.epsilon,
        converged,
        trace: out.trace,
    };
    if !converged {
        return Err(SolveError::NonConvergence(Box::new(result)));
    }
    if result.field.values().iter().all(|v| v.abs() < 1e-8) {
        return Err(SolveError::TrivialSolution(Box::new(result)));
    }
    Ok(result)
}

/// Solves the regularised problems for each ε in turn, warm-starting every
/// solve from the previous successful one.
pub fn solve_regularized_family(
    domain: &ConvexDomain,
    r: &ReactionTerm,
    cfg: &SolverConfig,
    h: f64,
    eps_list: &[f64],
) -> Result<Vec<Result<SolveResult, SolveError>>, SolveError> {
    let mesh = Arc::new(triangulate(domain, h)?);
    solve_regularized_family_on_mesh(mesh, r, cfg, eps_list)
}

pub fn solve_regularized_family_on_mesh(
    mesh: Arc<Mesh>,
    r: &ReactionTerm,
    cfg: &SolverConfig,
    eps_list: &[f64],
) -> Result<Vec<Result<SolveResult, SolveError>>, SolveError> {
    cfg.validate()?;
    check_eigen_refusal(r)?;
    if eps_list.is_empty() {
        return Err(SolveError::InvalidConfig("epsilon list is empty".into()));
    }
    let bound = cfg.epsilon_bound();
    if eps_list.iter().any(|&e| !(e >= 0.0 && e < bound)) {
        return Err(SolveError::InvalidConfig(format!("every epsilon must lie in [0, p^(2/p)) = [0, {bound:.4})")));
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(SolveError::InvalidConfig("epsilon list must be strictly decreasing".into()));
    }
    let mut out = Vec::with_capacity(eps_list.len());
    let mut warm: Option<Vec<f64>> = None;
    for &eps in eps_list {
        let c = cfg.with_epsilon(eps);
        let res = solve_on_mesh(Arc::clone(&mesh), r, &c, warm.as_deref());
        if let Ok(s) = &res {
            warm = Some(s.field.values().to_vec());
        }
        out.push(res);
    }
    Ok(out)
}

/// Discrete Rayleigh quotient `Σ|e||∇v|^p / Σ m_i |v_i|^p` on the unknowns.
struct Rayleigh<'a> {
    mesh: &'a Mesh,
    p: f64,
    interior: Vec<usize>,
    slot: Vec<usize>,
}

impl Rayleigh<'_> {
    fn parts(&self, x: &[f64], grad: Option<&mut [f64]>) -> (f64, f64) {
        let mut u = vec![0.0; self.mesh.node_count()];
        for (k, &i) in self.interior.iter().enumerate() {
            u[i] = x[k];
        }
        let p = self.p;
        let terms: Vec<(f64, [f64; 3])> = {
            let f = |e: usize| {
                let el = &self.mesh.elements()[e];
                let geo = &self.mesh.element_geometry()[e];
                let mut g = [0.0; 2];
                for (j, &v) in el.vertices().iter().enumerate() {
                    g[0] += u[v] * geo.grads[j][0];
                    g[1] += u[v] * geo.grads[j][1];
                }
                let s = g[0] * g[0] + g[1] * g[1];
                let k = geo.measure * p * (s + KERNEL_DELTA * KERNEL_DELTA).powf(0.5 * (p - 2.0));
                let mut out = [0.0; 3];
                for (j, o) in out.iter_mut().enumerate().take(el.vertices().len()) {
                    *o = k * (g[0] * geo.grads[j][0] + g[1] * geo.grads[j][1]);
                }
                (geo.measure * s.powf(0.5 * p), out)
            };
            let n = self.mesh.elements().len();
            if n >= PAR_THRESHOLD {
                (0..n).into_par_iter().map(f).collect()
            } else {
                (0..n).map(f).collect()
            }
        };
        let mass = self.mesh.lumped_mass();
        let num: f64 = terms.iter().map(|t| t.0).sum();
        let den: f64 = self.interior.iter().zip(x).map(|(&i, v)| mass[i] * v.abs().powf(p)).sum();
        if let Some(grad) = grad {
            let mut gn = vec![0.0; self.mesh.node_count()];
            for (e, (_, g)) in terms.iter().enumerate() {
                for (j, &v) in self.mesh.elements()[e].vertices().iter().enumerate() {
                    gn[v] += g[j];
                }
            }
            let ratio = num / den;
            for (k, &i) in self.interior.iter().enumerate() {
                let v = x[k];
                let gd = if v == 0.0 { 0.0 } else { p * mass[i] * v.abs().powf(p - 2.0) * v };
                grad[k] = (gn[i] - ratio * gd) / den;
            }
        }
        (num, den)
    }
}

impl Problem for Rayleigh<'_> {
    fn dim(&self) -> usize {
        self.interior.len()
    }

    fn eval(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let (n, d) = self.parts(x, Some(grad));
        n / d
    }

    fn value(&self, x: &[f64]) -> f64 {
        let (n, d) = self.parts(x, None);
        n / d
    }

    /// Strong-form residual of `−Δ_p v = λ |v|^{p−2} v` at the normalised `v`.
    fn residual(&self, x: &[f64], grad: &[f64]) -> f64 {
        let mass = self.mesh.lumped_mass();
        let den: f64 = self.interior.iter().zip(x).map(|(&i, v)| mass[i] * v.abs().powf(self.p)).sum();
        let c = den.powf(1.0 / self.p);
        self.interior.iter().zip(grad).map(|(&i, g)| c * g.abs() / (self.p * mass[i])).fold(0.0, f64::max)
    }

    fn preconditioner(&self, x: &[f64]) -> Option<Box<dyn Preconditioner + '_>> {
        let r = ReactionTerm::custom("zero", |_| 0.0, |_| 0.0, None, f64::INFINITY);
        let energy = DiscreteEnergy { mesh: self.mesh, r: &r, p: self.p, eps: 0.0, g_choice: GChoice::Primitive, interior: self.interior.clone(), slot: self.slot.clone() };
        let a = energy.model_hessian(x);
        let ic = Ic0::new(&a);
        let mass = self.mesh.lumped_mass();
        let den: f64 = self.interior.iter().zip(x).map(|(&i, v)| mass[i] * v.abs().powf(self.p)).sum();
        Some(Box::new(InnerSolve { a, ic, scale: den / self.p }))
    }

    fn project(&self, x: &[f64]) -> Option<Vec<f64>> {
        let mass = self.mesh.lumped_mass();
        let den: f64 = self.interior.iter().zip(x).map(|(&i, v)| mass[i] * v.abs().powf(self.p)).sum();
        let flip = x.iter().any(|&v| v < 0.0);
        if !flip && (0.25..=4.0).contains(&den) {
            return None;
        }
        let c = den.powf(-1.0 / self.p);
        Some(x.iter().map(|v| c * v.abs()).collect())
    }
}

#[derive(Debug, Clone)]
pub struct EigenPair {
    pub lambda: f64,
    /// Positive eigenfunction with `Σ m_i v_i^p = 1`.
    pub field: ScalarField,
    pub iterations: usize,
    pub residual_norm: f64,
}

pub fn first_eigenvalue(domain: &ConvexDomain, p: f64, h: f64) -> Result<EigenPair, SolveError> {
    let mesh = Arc::new(triangulate(domain, h)?);
    first_eigenvalue_on_mesh(mesh, p)
}

/// Minimises the discrete Rayleigh quotient from the `p = 2` torsion function.
pub fn first_eigenvalue_on_mesh(mesh: Arc<Mesh>, p: f64) -> Result<EigenPair, SolveError> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(SolveError::InvalidConfig(format!("p must exceed 1, got {p}")));
    }
    let interior = mesh.interior_nodes();
    let mut slot = vec![usize::MAX; mesh.node_count()];
    for (k, &i) in interior.iter().enumerate() {
        slot[i] = k;
    }
    if interior.is_empty() {
        return Err(SolveError::InvalidConfig("mesh has no interior nodes".into()));
    }
    let torsion = {
        let one = crate::reaction::constant();
        let cfg = SolverConfig::new(2.0);
        let energy = assemble_energy(&mesh, &one, &cfg);
        let a = energy.model_hessian(&vec![0.0; interior.len()]);
        let ic = Ic0::new(&a);
        let b: Vec<f64> = interior.iter().map(|&i| mesh.lumped_mass()[i]).collect();
        let mut x = vec![0.0; b.len()];
        pcg(&a, &ic, &b, &mut x, 1e-12, 5000);
        x
    };
    let problem = Rayleigh { mesh: &mesh, p, interior, slot };
    let x0 = problem.project(&torsion).unwrap_or(torsion);
    let opts = LbfgsOptions { memory: 6, max_iters: 3000, tol: 0.0, line_search: LineSearch::default(), refresh_every: 4 };
    // tolerance relative to the eigenvalue itself
    let lambda0 = problem.value(&x0);
    let tol = 1e-8 * (1.0 + lambda0);
    let out = optim::minimize(&problem, x0, &LbfgsOptions { tol, ..opts });
    let converged = out.status == Status::Converged || (out.status == Status::LineSearchFailed && out.residual <= 100.0 * tol);
    let x = problem.project(&out.x).unwrap_or(out.x);
    let mass = mesh.lumped_mass();
    let den: f64 = problem.interior.iter().zip(&x).map(|(&i, v)| mass[i] * v.abs().powf(p)).sum();
    let c = den.powf(-1.0 / p);
    let mut values = vec![0.0; mesh.node_count()];
    for (k, &i) in problem.interior.iter().enumerate() {
        values[i] = c * x[k].abs();
    }
    let lambda = out.value;
    let field = ScalarField::new(Arc::clone(&mesh), values)?;
    if !converged {
        let result = SolveResult {
            positivity_floor: problem.interior.iter().map(|&i| field.values()[i]).fold(f64::INFINITY, f64::min),
            field,
            energy: lambda,
            iterations: out.iterations,
            residual_norm: out.residual,
            epsilon: 0.0,
            converged: false,
            trace: out.trace,
        };
        return Err(SolveError::NonConvergence(Box::new(result)));
    }
    Ok(EigenPair { lambda, field, iterations: out.iterations, residual_norm: out.residual })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowVerdict {
    Inside,
    Outside,
    EigenLike,
}

/// Compares the limits of `f(t)/t^{p−1}` at `0⁺` and `+∞` with `λ₁`.
///
/// When both limits agree (to `1e−8` relative) the reaction is a multiple of
/// `t^{p−1}`; it is then eigen-like if the multiple is within 1% of `λ₁` and
/// outside otherwise.
pub fn check_solvability_window(r: &ReactionTerm, p: f64, lambda1: f64) -> WindowVerdict {
    let lim = solvability_limits(r, p, GridSpec::default());
    let scale = lim.at_zero.abs().max(lim.at_infinity.abs()).max(f64::MIN_POSITIVE);
    if (lim.at_zero - lim.at_infinity).abs() <= 1e-8 * scale {
        let mu = 0.5 * (lim.at_zero + lim.at_infinity);
        return if (mu - lambda1).abs() <= 1e-2 * lambda1 { WindowVerdict::EigenLike } else { WindowVerdict::Outside };
    }
    if lim.at_infinity < lambda1 && lambda1 < lim.at_zero {
        WindowVerdict::Inside
    } else {
        WindowVerdict::Outside
    }
}

#[derive(Debug, Clone)]
pub struct ResidualStats {
    /// Weak residual per node (zero on boundary nodes).
    pub per_node: Vec<f64>,
    pub max_abs: f64,
    /// `sqrt(Σ m_i R_i²)` over interior nodes.
    pub l2: f64,
    /// Elements skipped because `|∇v| < 1e−12` with `ε = 0`.
    pub degenerate_elements: usize,
}

/// Quadrature on the reference element, clustered toward every vertex and
/// edge so the `φ′(u_h)` singularity at the boundary is resolved.
fn clustered_rule(dim: usize) -> Vec<([f64; 3], f64)> {
    let n = if dim == 1 { 30 } else { 8 };
    let (gx, gw) = gauss_legendre(n);
    // t ∈ (0,1) clustered toward both ends: t = s²/2 and 1 − s²/2, dt = s ds
    let mut line = Vec::with_capacity(2 * n);
    for (x, w) in gx.iter().zip(&gw) {
        let s = 0.5 * (x + 1.0);
        let wt = 0.5 * w * s;
        line.push((0.5 * s * s, wt));
        line.push((1.0 - 0.5 * s * s, wt));
    }
    if dim == 1 {
        return line.into_iter().map(|(t, w)| ([1.0 - t, t, 0.0], w)).collect();
    }
    // Duffy map (a, b) ↦ (ξ, η) = (a(1−b), ab), Jacobian a; reference area ½
    let mut rule = Vec::with_capacity(line.len() * line.len());
    for &(a, wa) in &line {
        for &(b, wb) in &line {
            let (xi, eta) = (a * (1.0 - b), a * b);
            rule.push(([1.0 - xi - eta, xi, eta], 2.0 * wa * wb * a));
        }
    }
    rule
}

/// Weak residual of the transformed equation
///
/// ```text
/// −div((ε+|∇v|²)^{(p−2)/2} ∇v) = f(ψ(v))/ψ′(v)^{p−1}
///     + (ψ″/ψ′)(v) (ε+|∇v|²)^{(p−2)/2} ((p−1)|∇v|² − ε)
/// ```
///
/// for `v = φ(u_h)` against interior P1 test functions. `v` is the composition
/// with the P1 field, so `∇v = φ′(u_h)∇u_h` at each quadrature point.
pub fn transformed_residual(field: &ScalarField, spec: &TransformSpec, r: &ReactionTerm, p: f64, epsilon: f64) -> ResidualStats {
    transformed_residual_with_source(field, spec, r, p, epsilon, &|_| 0.0)
}

/// As [`transformed_residual`], with an extra source term added to the right
/// side.
pub fn transformed_residual_with_source(
    field: &ScalarField,
    spec: &TransformSpec,
    r: &ReactionTerm,
    p: f64,
    epsilon: f64,
    source: &(dyn Fn(Point) -> f64 + Sync),
) -> ResidualStats {
    let mesh = field.mesh();
    let u = field.values();
    let rule = clustered_rule(mesh.dim());
    let contributions: Vec<Option<[f64; 3]>> = (0..mesh.elements().len())
        .into_par_iter()
        .map(|e| {
            let el = &mesh.elements()[e];
            let geo = &mesh.element_geometry()[e];
            let verts = el.vertices();
            let mut gu = [0.0; 2];
            for (j, &v) in verts.iter().enumerate() {
                gu[0] += u[v] * geo.grads[j][0];
                gu[1] += u[v] * geo.grads[j][1];
            }
            let mut out = [0.0; 3];
            for (lam, w) in &rule {
                let uh: f64 = verts.iter().zip(lam).map(|(&v, l)| l * u[v]).sum();
                if !(uh > 0.0) {
                    continue;
                }
                let (d1, d2) = (spec.phi_prime(uh), spec.phi_second(uh));
                let gv = [d1 * gu[0], d1 * gu[1]];
                let sv = gv[0] * gv[0] + gv[1] * gv[1];
                if epsilon == 0.0 && sv.sqrt() < 1e-12 {
                    return None;
                }
                let k = (epsilon + sv).powf(0.5 * (p - 2.0));
                let ratio = -d2 / (d1 * d1);
                let mut x = [0.0; 2];
                for (&v, l) in verts.iter().zip(lam) {
                    x[0] += l * mesh.nodes()[v][0];
                    x[1] += l * mesh.nodes()[v][1];
                }
                let rhs = r.f(uh) * d1.powf(p - 1.0) + ratio * k * ((p - 1.0) * sv - epsilon) + source(x);
                let wq = w * geo.measure;
                for (j, o) in out.iter_mut().enumerate().take(verts.len()) {
                    let flux = k * (gv[0] * geo.grads[j][0] + gv[1] * geo.grads[j][1]);
                    *o += wq * (flux - rhs * lam[j]);
                }
            }
            Some(out)
        })
        .collect();
    let mut per_node = vec![0.0; mesh.node_count()];
    let mut degenerate = 0;
    for (e, c) in contributions.iter().enumerate() {
        match c {
            Some(c) => {
                for (j, &v) in mesh.elements()[e].vertices().iter().enumerate() {
                    per_node[v] += c[j];
                }
            }
            None => degenerate += 1,
        }
    }
    let mass = mesh.lumped_mass();
    let mut max_abs: f64 = 0.0;
    let mut l2 = 0.0;
    for i in 0..per_node.len() {
        if mesh.is_boundary(i) {
            per_node[i] = 0.0;
            continue;
        }
        max_abs = max_abs.max(per_node[i].abs());
        l2 += mass[i] * per_node[i] * per_node[i];
    }
    ResidualStats { per_node, max_abs, l2: l2.sqrt(), degenerate_elements: degenerate }
}
