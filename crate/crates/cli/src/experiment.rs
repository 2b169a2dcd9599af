use std::path::Path;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use pconcave::concavity::{convexity_scan, quasiconcavity_scan, Sampling, ScanTarget};
use pconcave::geometry::triangulate;
use pconcave::reaction::{check_hypotheses, GridSpec};
use pconcave::solver::{check_solvability_window, first_eigenvalue_on_mesh, solve_regularized_family_on_mesh, WindowVerdict};
use pconcave::transform::build_phi;
use pconcave::{ConcavityReport, HypothesisReport, Point, ScalarField, SolverConfig};
use serde::Serialize;

use crate::config::{ExperimentConfig, TransformChoice};
use crate::output;
use crate::svg;
use crate::CliError;

/// Outcome of one pipeline stage.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage<T> {
    Done(T),
    Skipped(String),
    Failed(String),
}

impl<T> Stage<T> {
    pub fn done(&self) -> Option<&T> {
        match self {
            Stage::Done(t) => Some(t),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Versions {
    pub pconcave: &'static str,
    pub cli: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct MeshSummary {
    pub dim: usize,
    pub nodes: usize,
    pub elements: usize,
    pub h: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionSummary {
    pub condition: &'static str,
    pub verdict: String,
    pub worst_t: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct HypothesisSummary {
    pub conditions: Vec<ConditionSummary>,
    pub thm11_passes: bool,
    pub thm12_passes: bool,
    pub limit_at_zero: f64,
    pub limit_at_infinity: f64,
}

impl From<&HypothesisReport> for HypothesisSummary {
    fn from(rep: &HypothesisReport) -> Self {
        Self {
            conditions: rep
                .conditions()
                .iter()
                .map(|(name, c)| ConditionSummary { condition: name, verdict: c.verdict.to_string(), worst_t: c.worst_t, margin: c.margin })
                .collect(),
            thm11_passes: rep.thm11_passes(),
            thm12_passes: rep.thm12_passes(),
            limit_at_zero: rep.window.at_zero,
            limit_at_infinity: rep.window.at_infinity,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EigenSummary {
    pub lambda1: f64,
    pub window: &'static str,
    pub iterations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveSummary {
    pub energy: f64,
    pub iterations: usize,
    pub residual_norm: f64,
    pub max_u: f64,
    pub positivity_floor: f64,
    pub solution_csv: String,
    pub trace_csv: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct EpsilonSolve {
    pub epsilon: f64,
    pub outcome: Stage<SolveSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanSummary {
    pub verdict: String,
    pub max_c: f64,
    pub tolerance: f64,
    pub n_pairs: usize,
    pub violation_count: usize,
    pub boundary_adjacent_violations: usize,
    pub argmax_pair: (Point, Point),
}

impl From<&ConcavityReport> for ScanSummary {
    fn from(r: &ConcavityReport) -> Self {
        Self {
            verdict: r.verdict.to_string(),
            max_c: r.max_c,
            tolerance: r.tolerance,
            n_pairs: r.n_pairs,
            violation_count: r.violation_count,
            boundary_adjacent_violations: r.violation_locations.iter().filter(|v| v.boundary_adjacent).count(),
            argmax_pair: r.argmax_pair,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TransformScan {
    pub transform: String,
    pub outcome: Stage<ScanSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct QuasiSummary {
    pub levels: Vec<f64>,
    pub defect_per_level: Vec<f64>,
    pub max_defect: f64,
}

/// Everything an experiment produced. Artifact paths are relative to the
/// output directory.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentRecord {
    pub config: ExperimentConfig,
    pub versions: Versions,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
    pub mesh: MeshSummary,
    pub hypotheses: Stage<HypothesisSummary>,
    pub eigen: Stage<EigenSummary>,
    /// `"family"` for the regularised solves, `"eigen"` when the reaction is
    /// a multiple of `t^{p−1}` and the eigenfield is used instead.
    pub solve_mode: &'static str,
    pub solves: Vec<EpsilonSolve>,
    /// ε of the field the scans ran on.
    pub scanned_epsilon: Option<f64>,
    pub concavity: Vec<TransformScan>,
    pub quasiconcavity: Stage<QuasiSummary>,
    pub contour_svg: Stage<String>,
}

impl ExperimentRecord {
    /// True when no solve produced a usable field.
    pub fn numerical_failure(&self) -> bool {
        self.scanned_epsilon.is_none()
    }
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

fn file_label(t: &TransformChoice) -> String {
    t.label().replace(':', "_")
}

/// Runs hypothesis checks, the first eigenvalue, the ε family, and the scans,
/// writing CSV/SVG artifacts and `record.json` under the output directory.
/// Stage failures are recorded and the pipeline continues where it can.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentRecord, CliError> {
    let started = now();
    cfg.validate()?;
    let reaction = cfg.reaction_term()?;
    let domain = cfg.domain_spec()?;
    let transforms = cfg.transform_choices()?;
    let out = cfg.output_dir();
    std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;

    let mesh = Arc::new(triangulate(&domain, cfg.h).map_err(|e| CliError::Input(format!("meshing failed: {e}")))?);
    let mesh_summary = MeshSummary { dim: mesh.dim(), nodes: mesh.node_count(), elements: mesh.elements().len(), h: mesh.h() };

    let hypotheses = match check_hypotheses(&reaction, cfg.p, GridSpec::default()) {
        Ok(rep) => {
            output::write_hypotheses(&out.join("hypotheses.csv"), &rep)?;
            Stage::Done(HypothesisSummary::from(&rep))
        }
        Err(e) => Stage::Failed(e.to_string()),
    };

    let eigenpair = first_eigenvalue_on_mesh(Arc::clone(&mesh), cfg.p);
    let eigen = match &eigenpair {
        Ok(e) => {
            let window = match check_solvability_window(&reaction, cfg.p, e.lambda) {
                WindowVerdict::Inside => "inside",
                WindowVerdict::Outside => "outside",
                WindowVerdict::EigenLike => "eigen_like",
            };
            Stage::Done(EigenSummary { lambda1: e.lambda, window, iterations: e.iterations })
        }
        Err(e) => Stage::Failed(e.to_string()),
    };

    let mut eps = cfg.epsilons.clone();
    eps.sort_by(|a, b| b.total_cmp(a));
    eps.dedup();
    let mut solves = Vec::new();
    let mut chosen: Option<(f64, ScalarField)> = None;
    let solve_mode = if reaction.eigen().is_some() { "eigen" } else { "family" };
    if reaction.eigen().is_some() {
        for &e in &eps {
            solves.push(EpsilonSolve { epsilon: e, outcome: Stage::Skipped("reaction is a multiple of t^(p-1); the eigenfield is used".into()) });
        }
        if let Ok(pair) = eigenpair {
            output::write_solution(&out.join("eigenfield.csv"), &pair.field)?;
            chosen = Some((0.0, pair.field));
        }
    } else {
        let cfg_s = SolverConfig::new(cfg.p);
        match solve_regularized_family_on_mesh(Arc::clone(&mesh), &reaction, &cfg_s, &eps) {
            Ok(results) => {
                for (k, (res, &e)) in results.into_iter().zip(&eps).enumerate() {
                    let outcome = match res {
                        Ok(s) => {
                            let (sol, trace) = (format!("solution_eps{k}.csv"), format!("trace_eps{k}.csv"));
                            output::write_solution(&out.join(&sol), &s.field)?;
                            output::write_trace(&out.join(&trace), &s.trace)?;
                            let summary = SolveSummary {
                                energy: s.energy,
                                iterations: s.iterations,
                                residual_norm: s.residual_norm,
                                max_u: s.field.max(),
                                positivity_floor: s.positivity_floor,
                                solution_csv: sol,
                                trace_csv: trace,
                            };
                            // ε is sorted decreasingly, so the last success is the least regularised
                            chosen = Some((e, s.field));
                            Stage::Done(summary)
                        }
                        Err(err) => Stage::Failed(err.to_string()),
                    };
                    solves.push(EpsilonSolve { epsilon: e, outcome });
                }
            }
            Err(err) => {
                for &e in &eps {
                    solves.push(EpsilonSolve { epsilon: e, outcome: Stage::Failed(err.to_string()) });
                }
            }
        }
    }

    let mut concavity = Vec::new();
    let mut quasiconcavity = Stage::Skipped("no solve produced a usable field".into());
    let mut contour_svg = Stage::Skipped("no solve produced a usable field".into());
    if let Some((_, field)) = &chosen {
        let sampling = Sampling { pair_cap: cfg.sampling.pairs, seed: cfg.sampling.seed, ..Sampling::default() };
        let mut reports = Vec::new();
        let mut violation_points: Vec<Point> = Vec::new();
        for t in &transforms {
            let report = match t {
                TransformChoice::Phi => match build_phi(&reaction, cfg.p) {
                    Ok(spec) => {
                        let phi = |u: f64| spec.phi(u);
                        Ok(convexity_scan(&ScanTarget::Field { field, transform: &phi }, &domain, &sampling))
                    }
                    Err(e) => Err(e.to_string()),
                },
                TransformChoice::Log => {
                    let log = |u: f64| u.ln();
                    Ok(convexity_scan(&ScanTarget::Field { field, transform: &log }, &domain, &sampling))
                }
                TransformChoice::Pow(a) => {
                    let pw = |u: f64| u.max(0.0).powf(*a);
                    Ok(convexity_scan(&ScanTarget::Field { field, transform: &pw }, &domain, &sampling))
                }
                TransformChoice::Identity => {
                    let id = |u: f64| u;
                    Ok(convexity_scan(&ScanTarget::Field { field, transform: &id }, &domain, &sampling))
                }
            };
            let outcome = match report {
                Ok(r) => {
                    output::write_violations(&out.join(format!("violations_{}.csv", file_label(t))), &r)?;
                    violation_points.extend(r.violation_locations.iter().map(|v| v.point));
                    let s = ScanSummary::from(&r);
                    reports.push((t.label(), r));
                    Stage::Done(s)
                }
                Err(e) => Stage::Failed(e),
            };
            concavity.push(TransformScan { transform: t.label(), outcome });
        }
        let rows: Vec<(String, &ConcavityReport)> = reports.iter().map(|(l, r)| (l.clone(), r)).collect();
        output::write_concavity(&out.join("concavity.csv"), &rows)?;

        let levels = svg::even_levels(field, cfg.levels);
        if mesh.dim() == 2 {
            quasiconcavity = match quasiconcavity_scan(field, &levels) {
                Ok(q) => Stage::Done(QuasiSummary { levels: q.levels, defect_per_level: q.defect_per_level, max_defect: q.max_defect }),
                Err(e) => Stage::Failed(e.to_string()),
            };
            let overlay = (!violation_points.is_empty()).then_some(violation_points.as_slice());
            contour_svg = match svg::emit_svg_contour(field, &levels, overlay, &out.join("contours.svg")) {
                Ok(()) => Stage::Done("contours.svg".into()),
                Err(e) => Stage::Failed(e.to_string()),
            };
        } else {
            let why = "superlevel scans and contour plots need a two-dimensional mesh".to_string();
            quasiconcavity = Stage::Skipped(why.clone());
            contour_svg = Stage::Skipped(why);
        }
    }
    if transforms.is_empty() {
        concavity.push(TransformScan { transform: String::new(), outcome: Stage::Skipped("no transforms configured".into()) });
    }

    let record = ExperimentRecord {
        config: cfg.clone(),
        versions: Versions { pconcave: pconcave::VERSION, cli: env!("CARGO_PKG_VERSION") },
        started_unix_s: started,
        finished_unix_s: now(),
        mesh: mesh_summary,
        hypotheses,
        eigen,
        solve_mode,
        scanned_epsilon: chosen.as_ref().map(|c| c.0),
        solves,
        concavity,
        quasiconcavity,
        contour_svg,
    };
    let json = serde_json::to_string_pretty(&record).map_err(|e| CliError::Input(e.to_string()))?;
    output::write_text(&out.join("record.json"), &json)?;
    Ok(record)
}

/// Config files (`*.toml`) directly inside `dir`, sorted by name.
pub fn suite_configs(dir: &Path) -> Result<Vec<std::path::PathBuf>, CliError> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml") && p.is_file())
        .collect();
    files.sort();
    Ok(files)
}
