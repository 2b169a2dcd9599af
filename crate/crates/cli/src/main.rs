use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use pconcave::concavity::{convexity_scan, Sampling, ScanTarget};
use pconcave::geometry::triangulate;
use pconcave::reaction::{self, check_hypotheses, lifted_reaction, GridSpec, ReactionTerm};
use pconcave::solver::{first_eigenvalue_on_mesh, solve_on_mesh, SolveError};
use pconcave::transform::{build_phi, TransformError};
use pconcave::{Point, SolverConfig};
use pconcave_cli::config::parse_domain;
use pconcave_cli::experiment::suite_configs;
use pconcave_cli::{output, run_experiment, svg, CliError, ConfigError, ExperimentConfig, TransformChoice};
use rayon::prelude::*;

#[derive(Parser)]
#[command(name = "pconcave", version, about = "Concavity experiments for -Δp u = f(u) with zero boundary data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the structural conditions on f and write one row per condition.
    CheckReaction {
        #[arg(long)]
        reaction: String,
        #[arg(long)]
        p: f64,
        /// Replace the reaction by its lift with primitive F^(q/2).
        #[arg(long)]
        q: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the Dirichlet problem and write node values.
    Solve {
        /// square, square:<side>, disc, interval:<a>,<b>, or a polygon CSV.
        #[arg(long, default_value = "square")]
        domain: String,
        #[arg(long)]
        reaction: String,
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 0.0)]
        eps: f64,
        #[arg(long)]
        h: f64,
        /// Node table; the element table goes to `<stem>.elements.csv` beside it.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Tabulate φ, φ′, φ″ and the ψ round-trip error.
    Transform {
        #[arg(long)]
        reaction: String,
        #[arg(long)]
        p: f64,
        #[arg(long, value_delimiter = ',', required = true)]
        eval: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Scan a stored solution for convexity violations of T(u).
    Concavity {
        #[arg(long)]
        solution: PathBuf,
        /// Defaults to `<stem>.elements.csv` beside the solution.
        #[arg(long)]
        elements: Option<PathBuf>,
        /// phi, log, pow:<alpha>, or none.
        #[arg(long, default_value = "none")]
        transform: String,
        /// Needed for `--transform phi`.
        #[arg(long)]
        reaction: Option<String>,
        #[arg(long)]
        p: Option<f64>,
        /// Domain for boundary distances; recovered from the mesh when omitted.
        #[arg(long)]
        domain: Option<String>,
        #[arg(long, default_value_t = 200_000)]
        pairs: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Violation scatter over the domain outline.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Run experiments described by TOML files.
    Experiment {
        #[command(subcommand)]
        action: ExperimentAction,
    },
}

#[derive(Subcommand)]
enum ExperimentAction {
    Run { config: PathBuf },
    /// Run every `*.toml` in a directory.
    Suite { dir: PathBuf },
}

fn reaction_for(name: &str, p: f64) -> Result<ReactionTerm, CliError> {
    Ok(reaction::by_name(name, p).map_err(ConfigError::from)?)
}

fn transform_error(e: TransformError) -> CliError {
    match e {
        TransformError::InvalidParameter(m) => CliError::Input(m),
        other => CliError::Numerical(other.to_string()),
    }
}

fn check_reaction(name: &str, p: f64, q: Option<f64>, out: &Path) -> Result<(), CliError> {
    let mut r = reaction_for(name, p)?;
    if let Some(q) = q {
        r = lifted_reaction(&r, q).map_err(ConfigError::from)?;
    }
    let rep = check_hypotheses(&r, p, GridSpec::default()).map_err(ConfigError::from)?;
    output::write_hypotheses(out, &rep)?;
    for (name, c) in rep.conditions() {
        println!("{name:<22} {:<5} worst_t={:.4e} margin={:.3e}", c.verdict, c.worst_t, c.margin);
    }
    println!("limits of f(t)/t^(p-1): {:.6} at 0, {:.6} at infinity", rep.window.at_zero, rep.window.at_infinity);
    Ok(())
}

fn solve(domain: &str, name: &str, p: f64, eps: f64, h: f64, out: &Path, trace: Option<&Path>) -> Result<(), CliError> {
    let r = reaction_for(name, p)?;
    let domain = parse_domain(domain, Path::new(""))?;
    let mesh = Arc::new(triangulate(&domain, h).map_err(|e| CliError::Input(e.to_string()))?);
    let cfg = SolverConfig::new(p).with_epsilon(eps);
    let res = match solve_on_mesh(Arc::clone(&mesh), &r, &cfg, None) {
        Ok(res) => res,
        Err(SolveError::EigenLike { .. }) => {
            let pair = first_eigenvalue_on_mesh(mesh, p).map_err(|e| CliError::Numerical(e.to_string()))?;
            output::write_solution(out, &pair.field)?;
            println!("eigen-like reaction: wrote the first eigenfunction, lambda_1 = {:.8}", pair.lambda);
            return Ok(());
        }
        Err(e @ (SolveError::InvalidConfig(_) | SolveError::Geometry(_))) => return Err(CliError::Input(e.to_string())),
        Err(e) => {
            let msg = e.to_string();
            if let SolveError::TrivialSolution(s) | SolveError::NonConvergence(s) = e {
                output::write_solution(out, &s.field)?;
                if let Some(t) = trace {
                    output::write_trace(t, &s.trace)?;
                }
            }
            return Err(CliError::Numerical(msg));
        }
    };
    output::write_solution(out, &res.field)?;
    if let Some(t) = trace {
        output::write_trace(t, &res.trace)?;
    }
    println!(
        "nodes={} iterations={} energy={:.10e} residual={:.3e} max_u={:.8}",
        res.field.mesh().node_count(),
        res.iterations,
        res.energy,
        res.residual_norm,
        res.field.max()
    );
    Ok(())
}

fn transform(name: &str, p: f64, eval: &[f64], out: &Path) -> Result<(), CliError> {
    let r = reaction_for(name, p)?;
    let spec = build_phi(&r, p).map_err(transform_error)?;
    output::write_transform_table(out, &spec, eval)?;
    println!("wrote {} rows to {}", eval.len(), out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn concavity(
    solution: &Path,
    elements: Option<&Path>,
    transform: &str,
    reaction: Option<&str>,
    p: Option<f64>,
    domain: Option<&str>,
    sampling: Sampling,
    out: &Path,
    svg_path: Option<&Path>,
) -> Result<(), CliError> {
    let epath = elements.map(Path::to_path_buf).unwrap_or_else(|| output::elements_path(solution));
    let field = output::read_solution(solution, &epath)?;
    let domain = match domain {
        Some(d) => parse_domain(d, Path::new(""))?,
        None => output::infer_domain(field.mesh())?,
    };
    let choice = TransformChoice::parse(transform)?;
    let report = match choice {
        TransformChoice::Phi => {
            let (Some(name), Some(p)) = (reaction, p) else {
                return Err(CliError::Input("--transform phi needs --reaction and --p".into()));
            };
            let spec = build_phi(&reaction_for(name, p)?, p).map_err(transform_error)?;
            let phi = |u: f64| spec.phi(u);
            convexity_scan(&ScanTarget::Field { field: &field, transform: &phi }, &domain, &sampling)
        }
        TransformChoice::Log => {
            let log = |u: f64| u.ln();
            convexity_scan(&ScanTarget::Field { field: &field, transform: &log }, &domain, &sampling)
        }
        TransformChoice::Pow(a) => {
            let pw = |u: f64| u.max(0.0).powf(a);
            convexity_scan(&ScanTarget::Field { field: &field, transform: &pw }, &domain, &sampling)
        }
        TransformChoice::Identity => {
            let id = |u: f64| u;
            convexity_scan(&ScanTarget::Field { field: &field, transform: &id }, &domain, &sampling)
        }
    };
    output::write_concavity(out, &[(choice.label(), &report)])?;
    if let Some(path) = svg_path {
        let pts: Vec<Point> = report.violation_locations.iter().map(|v| v.point).collect();
        svg::emit_svg_contour(&field, &[], Some(&pts), path).map_err(|e| CliError::io(path, e))?;
    }
    println!(
        "{}: {} max_c={:.4e} tol={:.4e} pairs={} violations={}",
        choice.label(),
        report.verdict,
        report.max_c,
        report.tolerance,
        report.n_pairs,
        report.violation_count
    );
    Ok(())
}

fn run_one(path: &Path) -> Result<String, CliError> {
    let cfg = ExperimentConfig::load(path)?;
    let rec = run_experiment(&cfg)?;
    let scans: Vec<String> = rec
        .concavity
        .iter()
        .map(|s| match s.outcome.done() {
            Some(d) => format!("{} {} (max_c {:.3e}, tol {:.3e})", s.transform, d.verdict, d.max_c, d.tolerance),
            None => format!("{} not scanned", s.transform),
        })
        .collect();
    let line = format!("{}: {} -> {}", path.display(), cfg.output_dir().display(), scans.join("; "));
    if rec.numerical_failure() {
        let why: Vec<String> = rec
            .solves
            .iter()
            .filter_map(|s| match &s.outcome {
                pconcave_cli::experiment::Stage::Failed(e) => Some(format!("eps={}: {e}", s.epsilon)),
                _ => None,
            })
            .collect();
        return Err(CliError::Numerical(format!("{line}; no usable solution ({})", why.join("; "))));
    }
    Ok(line)
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("PCONCAVE_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| CliError::Input(format!("PCONCAVE_THREADS must be a positive integer, got '{v}'")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Input(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::CheckReaction { reaction, p, q, out } => check_reaction(&reaction, p, q, &out),
        Command::Solve { domain, reaction, p, eps, h, out, trace } => solve(&domain, &reaction, p, eps, h, &out, trace.as_deref()),
        Command::Transform { reaction, p, eval, out } => transform(&reaction, p, &eval, &out),
        Command::Concavity { solution, elements, transform, reaction, p, domain, pairs, seed, out, svg } => {
            let sampling = Sampling { pair_cap: pairs, seed, ..Sampling::default() };
            concavity(&solution, elements.as_deref(), &transform, reaction.as_deref(), p, domain.as_deref(), sampling, &out, svg.as_deref())
        }
        Command::Experiment { action: ExperimentAction::Run { config } } => {
            println!("{}", run_one(&config)?);
            Ok(())
        }
        Command::Experiment { action: ExperimentAction::Suite { dir } } => {
            let files = suite_configs(&dir)?;
            if files.is_empty() {
                return Err(CliError::Input(format!("no *.toml files in {}", dir.display())));
            }
            let results: Vec<Result<String, CliError>> = files.par_iter().map(|f| run_one(f)).collect();
            let mut worst: Option<CliError> = None;
            for r in results {
                match r {
                    Ok(line) => println!("{line}"),
                    Err(e) => {
                        eprintln!("error: {e}");
                        if worst.as_ref().is_none_or(|w| e.exit_code() > w.exit_code()) {
                            worst = Some(e);
                        }
                    }
                }
            }
            worst.map_or(Ok(()), Err)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
