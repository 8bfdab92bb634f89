use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use edgeprice::experiments::{
    check_trends, oracle_checks, run_convergence, run_sweep, sweep_table, write_convergence,
    ExperimentError,
};
use edgeprice::{export_results, load_scenario, Format, Scenario, ScenarioError};
use edgeprice_core::{fosd, tol, Device, PriceVector, SolveError};

const EXIT_FAILURE: u8 = 1;
const EXIT_INVALID_SCENARIO: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;
const EXIT_TREND_FAILED: u8 = 4;

/// Edge-server pricing game: equilibrium search, sweeps and oracle checks.
#[derive(Debug, Parser)]
#[command(name = "edgeprice", version)]
struct Cli {
    /// Scenario file (TOML). Omit for the reference scenario.
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    /// Output directory for exported results.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: Format,
    /// Fail with exit code 4 when a sweep breaks its expected trends.
    #[arg(long, global = true)]
    check_trends: bool,
    /// Fail with exit code 3 when the price iteration does not converge.
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the equilibrium search and export its trace and summary.
    Converge,
    /// Run the scenario's parameter sweep and export one row per sample.
    Sweep,
    /// Cross-check the equilibrium against the brute-force oracles.
    Verify,
    /// Solve a single device's purchase problem at given prices.
    SolveFollower {
        #[arg(long)]
        budget: f64,
        /// Hash price; defaults to the scenario's starting price.
        #[arg(long)]
        p_h: Option<f64>,
        /// Task price; defaults to the scenario's starting price.
        #[arg(long)]
        p_t: Option<f64>,
    },
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn experiment_failure(e: ExperimentError) -> ExitCode {
    match e {
        ExperimentError::Scenario(e) => fail(EXIT_INVALID_SCENARIO, e),
        other => fail(EXIT_FAILURE, other),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let scenario = match &cli.scenario {
        Some(path) => match load_scenario(path) {
            Ok(s) => s,
            Err(e @ ScenarioError::Io { .. }) => return fail(EXIT_FAILURE, e),
            Err(e) => return fail(EXIT_INVALID_SCENARIO, e),
        },
        None => Scenario::reference(),
    };
    if let Err(e) = std::fs::create_dir_all(&cli.out) {
        return fail(
            EXIT_FAILURE,
            format!("cannot create {}: {e}", cli.out.display()),
        );
    }
    match cli.command {
        Command::Converge => converge(&cli, &scenario),
        Command::Sweep => sweep(&cli, &scenario),
        Command::Verify => verify(&scenario),
        Command::SolveFollower { budget, p_h, p_t } => solve_follower(&scenario, budget, p_h, p_t),
    }
}

fn converge(cli: &Cli, scenario: &Scenario) -> ExitCode {
    let result = match run_convergence(scenario) {
        Ok(r) => r,
        Err(e) => return experiment_failure(e),
    };
    let (trace, summary) = match write_convergence(scenario, &result, &cli.out, cli.format) {
        Ok(p) => p,
        Err(e) => return experiment_failure(e),
    };
    println!(
        "p_h = {:.6}  p_t = {:.6}  u_h = {:.6}  u_t = {:.6}",
        result.prices.p_h, result.prices.p_t, result.utilities.u_h, result.utilities.u_t
    );
    println!(
        "converged = {}  iterations = {}  trace -> {}  summary -> {}",
        result.converged,
        result.iterations_used,
        trace.display(),
        summary.display()
    );
    if cli.strict {
        if let Err(e) = result.ensure_converged() {
            return fail(EXIT_NOT_CONVERGED, e);
        }
    }
    ExitCode::SUCCESS
}

fn sweep(cli: &Cli, scenario: &Scenario) -> ExitCode {
    let rows = match run_sweep(scenario) {
        Ok(r) => r,
        Err(e) => return experiment_failure(e),
    };
    let path = cli.out.join(format!("sweep.{}", cli.format.extension()));
    if let Err(e) = export_results(
        &sweep_table(&rows, scenario.devices.len()),
        &path,
        cli.format,
    ) {
        return fail(EXIT_FAILURE, e);
    }
    println!("{} rows -> {}", rows.len(), path.display());
    let mut code = ExitCode::SUCCESS;
    if cli.strict && rows.iter().any(|r| !r.converged) {
        code = fail(
            EXIT_NOT_CONVERGED,
            "at least one sweep sample did not converge",
        );
    }
    if cli.check_trends {
        let checks = check_trends(scenario, &rows);
        for c in &checks {
            println!(
                "{} trend {:<14} {:?} (worst step against trend {:e})",
                if c.passed() { "PASS" } else { "FAIL" },
                c.name,
                c.direction,
                c.worst_violation
            );
        }
        if checks.iter().any(|c| !c.passed()) {
            code = ExitCode::from(EXIT_TREND_FAILED);
        }
    }
    code
}

fn verify(scenario: &Scenario) -> ExitCode {
    let (result, checks) = match oracle_checks(scenario) {
        Ok(v) => v,
        Err(ExperimentError::Solve(e @ SolveError::NotConverged { .. })) => {
            return fail(EXIT_NOT_CONVERGED, e)
        }
        Err(e) => return experiment_failure(e),
    };
    println!(
        "fixed point p_h = {:.9}  p_t = {:.9}",
        result.prices.p_h, result.prices.p_t
    );
    for c in &checks {
        println!(
            "{} {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    if checks.iter().all(|c| c.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAILURE)
    }
}

fn solve_follower(
    scenario: &Scenario,
    budget: f64,
    p_h: Option<f64>,
    p_t: Option<f64>,
) -> ExitCode {
    let start = scenario
        .solver
        .init
        .unwrap_or_else(|| PriceVector::midpoint(&scenario.market));
    let prices = match PriceVector::new(
        p_h.unwrap_or(start.p_h),
        p_t.unwrap_or(start.p_t),
        &scenario.market,
    ) {
        Ok(p) => p,
        Err(e) => return fail(EXIT_FAILURE, e),
    };
    let device = match Device::new("cli", budget) {
        Ok(d) => d,
        Err(e) => return fail(EXIT_FAILURE, e),
    };
    match fosd(&device, &prices, &scenario.market, tol::BOUNDARY_REL) {
        Ok(s) => {
            let c = &s.certificate;
            println!(
                "case      {}{}",
                c.case,
                if s.degraded { " (degraded)" } else { "" }
            );
            println!("x_h       {}", s.strategy.x_h);
            println!("x_t       {}", s.strategy.x_t);
            println!("lambda    {} {} {}", c.lambda1, c.lambda2, c.lambda3);
            if let Some(aux) = c.aux {
                println!("A B t     {} {} {}", aux.a, aux.b, aux.t);
            }
            println!(
                "profit    {} (mining {}, task {})",
                s.profit.total, s.profit.mining_profit, s.profit.task_profit
            );
            ExitCode::SUCCESS
        }
        Err(e) => fail(EXIT_FAILURE, e),
    }
}
