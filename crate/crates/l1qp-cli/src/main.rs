//! Command-line driver: generate test instances, solve them, and verify
//! solutions. Exit codes: 0 success/optimal, 1 tolerance not reached,
//! 2 usage error, 3 internal failure.

use clap::{Args, Parser, Subcommand};
use l1qp::generators::{gen_convdiff_control, gen_poisson_control, ControlInstanceSpec};
use l1qp::pmm::{PenaltyState, PmmState};
use l1qp::precond::spectral_diagnostic;
use l1qp::problem::{
    kkt_residuals, load_problem, load_solution, save_problem, save_solution, Solution, Status,
};
use l1qp::ssn::{build_active_sets, natural_map};
use l1qp::SolverConfig;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "l1qp", version, about = "Sparse l1-regularized QP solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a PDE-control test instance bundle.
    Generate(GenerateArgs),
    /// Solve a problem bundle and write the solution and report.
    Solve(SolveArgs),
    /// Check a solution against a bundle; optionally run the spectral
    /// diagnostics.
    Check(CheckArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Instance family: poisson | convdiff
    family: String,
    /// Interior grid points per dimension
    #[arg(long)]
    grid: usize,
    /// L1 regularization weight
    #[arg(long, default_value_t = 1e-4)]
    alpha1: f64,
    /// L2 regularization weight
    #[arg(long, default_value_t = 1e-2)]
    alpha2: f64,
    /// Diffusion coefficient (convdiff only)
    #[arg(long, default_value_t = 0.02)]
    eps: f64,
    /// Lower control bound
    #[arg(long, default_value_t = -2.0)]
    lower: f64,
    /// Upper control bound
    #[arg(long, default_value_t = 1.5)]
    upper: f64,
    /// Output directory for the bundle
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    /// Problem bundle directory (or manifest path)
    problem: PathBuf,
    #[arg(long, default_value_t = 1e-5, env = "L1QP_TOL")]
    tol: f64,
    #[arg(long, default_value_t = 200, env = "L1QP_MAX_PMM")]
    max_pmm: usize,
    #[arg(long, default_value_t = 8, env = "L1QP_MAX_SSN")]
    max_ssn: usize,
    #[arg(long, default_value_t = 200, env = "L1QP_MINRES_MAXIT")]
    minres_maxit: usize,
    /// Skip the pADMM warm start (useful for ablation runs)
    #[arg(long, env = "L1QP_NO_WARMSTART")]
    no_warmstart: bool,
    #[arg(long, default_value_t = 1e-3, env = "L1QP_WARMSTART_TOL")]
    warmstart_tol: f64,
    #[arg(long, default_value_t = 400, env = "L1QP_WARMSTART_MAXIT")]
    warmstart_maxit: usize,
    #[arg(long, default_value_t = 1e2, env = "L1QP_BETA0")]
    beta0: f64,
    #[arg(long, default_value_t = 5e2, env = "L1QP_RHO0")]
    rho0: f64,
    #[arg(long, default_value_t = 0, env = "L1QP_SEED")]
    seed: u64,
    /// Where to write the solution (default: <bundle>/solution.txt)
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Optional report file (key = value lines, same as stdout)
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    /// Problem bundle directory (or manifest path)
    problem: PathBuf,
    /// Solution file to verify
    solution: PathBuf,
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
    /// Also run the dense spectral diagnostics (small instances only)
    #[arg(long)]
    spectral: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Solve(args) => cmd_solve(args),
        Command::Check(args) => cmd_check(args),
    }
}

fn cmd_generate(args: GenerateArgs) -> ExitCode {
    let problem = match args.family.as_str() {
        "poisson" => {
            let mut spec = ControlInstanceSpec::poisson(args.grid, args.alpha1, args.alpha2);
            spec.bounds = (args.lower, args.upper);
            gen_poisson_control(&spec)
        }
        "convdiff" => {
            let mut spec =
                ControlInstanceSpec::convdiff(args.grid, args.alpha1, args.alpha2, args.eps);
            spec.bounds = (args.lower, args.upper);
            gen_convdiff_control(&spec)
        }
        other => {
            eprintln!("unknown family {other:?}; expected poisson or convdiff");
            return ExitCode::from(2);
        }
    };
    match save_problem(&problem, &args.out) {
        Ok(()) => {
            println!(
                "wrote {} (n = {}, m = {}) to {}",
                problem.name(),
                problem.n(),
                problem.m(),
                args.out.display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}

fn render_report(name: &str, sol: &Solution, tol: f64) -> String {
    let r = &sol.report;
    let mut out = String::new();
    out.push_str(&format!("name = {name}\n"));
    out.push_str(&format!("status = {}\n", sol.status.as_str()));
    out.push_str(&format!("tol = {tol:e}\n"));
    out.push_str(&format!("pmm = {}\n", r.pmm_iters));
    out.push_str(&format!("ssn = {}\n", r.ssn_iters));
    out.push_str(&format!("minres_total = {}\n", r.minres_iters_total));
    out.push_str(&format!("minres_calls = {}\n", r.minres_calls));
    out.push_str(&format!("minres_avg = {:.2}\n", r.minres_avg()));
    out.push_str(&format!("factorizations = {}\n", r.factorizations));
    out.push_str(&format!(
        "warmstart = {}\n",
        if r.warmstart_used {
            format!("used ({} iterations)", r.warmstart_iters)
        } else {
            "skipped".to_string()
        }
    ));
    out.push_str(&format!("seed = {}\n", r.seed));
    out.push_str(&format!("residual_dual = {:e}\n", r.final_residuals.0));
    out.push_str(&format!("residual_primal = {:e}\n", r.final_residuals.1));
    out.push_str(&format!(
        "residual_complementarity = {:e}\n",
        r.final_residuals.2
    ));
    out.push_str(&format!("time_s = {:.3}\n", r.wall_time_seconds));
    out
}

fn cmd_solve(args: SolveArgs) -> ExitCode {
    let problem = match load_problem(&args.problem) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    };
    let cfg = SolverConfig {
        tol: args.tol,
        max_pmm: args.max_pmm,
        max_ssn_per_subproblem: args.max_ssn,
        minres_maxit: args.minres_maxit,
        warmstart: !args.no_warmstart,
        warmstart_tol: args.warmstart_tol,
        warmstart_maxit: args.warmstart_maxit,
        beta0: args.beta0,
        rho0: args.rho0,
        seed: args.seed,
    };
    let sol = l1qp::solve(&problem, &cfg);
    let report = render_report(problem.name(), &sol, args.tol);
    print!("{report}");

    let out_path = args.out.unwrap_or_else(|| {
        if args.problem.is_dir() {
            args.problem.join("solution.txt")
        } else {
            args.problem.with_file_name("solution.txt")
        }
    });
    if let Err(e) = save_solution(&sol, &out_path) {
        eprintln!("error: {e}");
        return ExitCode::from(3);
    }
    if let Some(rp) = &args.report {
        if let Err(e) = std::fs::write(rp, &report) {
            eprintln!("error: failed to write report: {e}");
            return ExitCode::from(3);
        }
    }
    match sol.status {
        Status::Optimal => ExitCode::SUCCESS,
        Status::MaxIterations => ExitCode::from(1),
        Status::LinearSolverFailure => ExitCode::from(3),
    }
}

fn cmd_check(args: CheckArgs) -> ExitCode {
    let problem = match load_problem(&args.problem) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    };
    let sol = match load_solution(&args.solution) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    };
    if sol.x.len() != problem.n() || sol.y.len() != problem.m() || sol.z.len() != problem.n() {
        eprintln!("error: solution dimensions do not match the problem");
        return ExitCode::from(3);
    }
    let (r1, r2, r3) = kkt_residuals(&problem, &sol.x, &sol.y, &sol.z);
    println!("residual_dual = {r1:e}");
    println!("residual_primal = {r2:e}");
    println!("residual_complementarity = {r3:e}");

    if args.spectral {
        // Diagnostics at the solution point with the default initial
        // penalties, anchored on the solution itself.
        let state = PmmState::new(
            sol.x.clone(),
            sol.y.clone(),
            sol.z.clone(),
            PenaltyState::new(1e2, 5e2),
        );
        let (_, u_hat) = natural_map(&sol.x, &sol.y, &state, &problem);
        let sets = build_active_sets(&sol.x, &u_hat, &state, &problem);
        match spectral_diagnostic(&problem, &sets, &state.penalties) {
            Ok(rep) => print!("{rep}"),
            Err(e) => {
                eprintln!("spectral diagnostics unavailable: {e}");
                return ExitCode::from(3);
            }
        }
    }

    if r1 <= args.tol && r2 <= args.tol && r3 <= args.tol {
        println!("check = pass");
        ExitCode::SUCCESS
    } else {
        println!("check = fail (tol = {:e})", args.tol);
        ExitCode::from(1)
    }
}
