//! Experiment runners: convergence traces, parameter sweeps, trend checks
//! and oracle cross-checks.

use std::path::{Path, PathBuf};

use edgeprice_core::leader::DEFAULT_PROBE_EPS;
use edgeprice_core::oracle::{brute_force_best_response, brute_force_follower, GridSpec};
use edgeprice_core::{
    fnes, price_bounds, verify_equilibrium, EquilibriumResult, MarketParams, Server, SolveError,
};
use serde::Serialize;

use crate::export::{export_results, ExportError, Format, Table, Value};
use crate::scenario::{Experiment, Scenario, ScenarioError, SweepTarget};

/// Fraction of each price interval used as the "has reached the
/// equilibrium" band when counting iterations.
pub const SETTLE_FRACTION: f64 = 0.01;

/// Weak-monotonicity tolerance of the trend checks.
pub const TREND_TOL: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Export(#[from] ExportError),
    #[error("scenario is not a {0} experiment")]
    WrongKind(&'static str),
}

/// Equilibrium search on the scenario as given.
pub fn run_convergence(scenario: &Scenario) -> Result<EquilibriumResult, ExperimentError> {
    Ok(fnes(&scenario.devices, &scenario.market, &scenario.solver)?)
}

#[derive(Debug, Serialize)]
pub struct DeviceSummary {
    pub id: String,
    pub budget: f64,
    pub x_h: f64,
    pub x_t: f64,
    pub profit: f64,
    pub case: &'static str,
    pub degraded: bool,
}

#[derive(Debug, Serialize)]
pub struct ConvergenceSummary {
    pub converged: bool,
    pub iterations_used: usize,
    pub settling_iteration: usize,
    pub p_h: f64,
    pub p_t: f64,
    pub u_h: f64,
    pub u_t: f64,
    pub sum_xh: f64,
    pub sum_xt: f64,
    pub devices: Vec<DeviceSummary>,
}

impl ConvergenceSummary {
    pub fn new(scenario: &Scenario, result: &EquilibriumResult) -> Self {
        let (sum_xh, sum_xt) = result.total_purchase();
        Self {
            converged: result.converged,
            iterations_used: result.iterations_used,
            settling_iteration: result.settling_iteration_rel(SETTLE_FRACTION, &scenario.market),
            p_h: result.prices.p_h,
            p_t: result.prices.p_t,
            u_h: result.utilities.u_h,
            u_t: result.utilities.u_t,
            sum_xh,
            sum_xt,
            devices: scenario
                .devices
                .iter()
                .zip(&result.solutions)
                .map(|(d, s)| DeviceSummary {
                    id: d.id.clone(),
                    budget: d.budget(),
                    x_h: s.strategy.x_h,
                    x_t: s.strategy.x_t,
                    profit: s.profit.total,
                    case: s.certificate.case.label(),
                    degraded: s.degraded,
                })
                .collect(),
        }
    }
}

/// Writes `trace.<ext>` and `summary.json` into `dir`.
pub fn write_convergence(
    scenario: &Scenario,
    result: &EquilibriumResult,
    dir: &Path,
    format: Format,
) -> Result<(PathBuf, PathBuf), ExperimentError> {
    let trace_path = dir.join(format!("trace.{}", format.extension()));
    export_results(&Table::from_trace(&result.trace), &trace_path, format)?;
    let summary_path = dir.join("summary.json");
    let mut json = serde_json::to_string_pretty(&ConvergenceSummary::new(scenario, result))
        .expect("summary serializes");
    json.push('\n');
    std::fs::write(&summary_path, json).map_err(|source| ExportError {
        path: summary_path.clone(),
        source,
    })?;
    Ok((trace_path, summary_path))
}

/// One equilibrium of a parameter sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub swept_value: f64,
    pub p_h: f64,
    pub p_t: f64,
    pub u_h: f64,
    pub u_t: f64,
    pub sum_xh: f64,
    pub sum_xt: f64,
    pub profits: Vec<f64>,
    pub converged: bool,
    pub iters: usize,
}

impl SweepRow {
    pub fn total_profit(&self) -> f64 {
        self.profits.iter().sum()
    }
}

/// Runs the equilibrium search at every sample of the scenario's sweep.
/// A sample that hits the iteration cap is recorded with `converged =
/// false` and the sweep continues.
pub fn run_sweep(scenario: &Scenario) -> Result<Vec<SweepRow>, ExperimentError> {
    let Experiment::Sweep(spec) = &scenario.experiment else {
        return Err(ExperimentError::WrongKind("sweep"));
    };
    spec.samples()
        .into_iter()
        .map(|value| {
            let (market, devices) = scenario.instance_at(value)?;
            let r = fnes(&devices, &market, &scenario.solver)?;
            let (sum_xh, sum_xt) = r.total_purchase();
            Ok(SweepRow {
                swept_value: value,
                p_h: r.prices.p_h,
                p_t: r.prices.p_t,
                u_h: r.utilities.u_h,
                u_t: r.utilities.u_t,
                sum_xh,
                sum_xt,
                profits: r.solutions.iter().map(|s| s.profit.total).collect(),
                converged: r.converged,
                iters: r.iterations_used,
            })
        })
        .collect()
}

pub fn sweep_table(rows: &[SweepRow], n_devices: usize) -> Table {
    let mut header: Vec<String> = [
        "swept_value",
        "p_h",
        "p_t",
        "u_h",
        "u_t",
        "sum_xh",
        "sum_xt",
    ]
    .map(String::from)
    .to_vec();
    header.extend((1..=n_devices).map(|i| format!("profit_{i}")));
    header.push("converged".into());
    header.push("iters".into());
    let rows = rows
        .iter()
        .map(|r| {
            let mut v: Vec<Value> = [
                r.swept_value,
                r.p_h,
                r.p_t,
                r.u_h,
                r.u_t,
                r.sum_xh,
                r.sum_xt,
            ]
            .into_iter()
            .map(Value::Real)
            .collect();
            v.extend(r.profits.iter().copied().map(Value::Real));
            v.push(Value::Bool(r.converged));
            v.push(Value::Int(r.iters as u64));
            v
        })
        .collect();
    Table { header, rows }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Increasing,
    Decreasing,
}

/// Outcome of one weak-monotonicity check over a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct TrendCheck {
    pub name: String,
    pub direction: Direction,
    /// Largest step against the expected direction (≤ 0 means none).
    pub worst_violation: f64,
}

impl TrendCheck {
    pub fn passed(&self) -> bool {
        self.worst_violation <= TREND_TOL
    }
}

fn trend(name: impl Into<String>, direction: Direction, series: &[f64]) -> TrendCheck {
    let worst_violation = series
        .windows(2)
        .map(|w| match direction {
            Direction::Increasing => w[0] - w[1],
            Direction::Decreasing => w[1] - w[0],
        })
        .fold(f64::NEG_INFINITY, f64::max);
    TrendCheck {
        name: name.into(),
        direction,
        worst_violation,
    }
}

/// The trends expected for a sweep target. Targets with no known trend
/// yield no checks.
pub fn check_trends(scenario: &Scenario, rows: &[SweepRow]) -> Vec<TrendCheck> {
    use Direction::{Decreasing as Dec, Increasing as Inc};
    let Experiment::Sweep(spec) = &scenario.experiment else {
        return Vec::new();
    };
    let col = |f: fn(&SweepRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    let profit = |i: usize| rows.iter().map(|r| r.profits[i]).collect::<Vec<_>>();
    let n = scenario.devices.len();
    match &spec.target {
        SweepTarget::Reward => vec![
            trend("p_h", Inc, &col(|r| r.p_h)),
            trend("p_t", Dec, &col(|r| r.p_t)),
            trend("sum_xh", Dec, &col(|r| r.sum_xh)),
            trend("total_profit", Inc, &col(SweepRow::total_profit)),
        ],
        SweepTarget::CostHash => {
            let mut v = vec![
                trend("p_h", Inc, &col(|r| r.p_h)),
                trend("p_t", Inc, &col(|r| r.p_t)),
                trend("sum_xh", Dec, &col(|r| r.sum_xh)),
                trend("sum_xt", Inc, &col(|r| r.sum_xt)),
                trend("u_h", Dec, &col(|r| r.u_h)),
            ];
            v.extend((0..n).map(|i| trend(format!("profit_{}", i + 1), Dec, &profit(i))));
            v
        }
        SweepTarget::Budget(id) => {
            let Some(target) = scenario.devices.iter().position(|d| &d.id == id) else {
                return Vec::new();
            };
            (0..n)
                .map(|i| {
                    let dir = if i == target { Inc } else { Dec };
                    trend(format!("profit_{}", i + 1), dir, &profit(i))
                })
                .collect()
        }
        SweepTarget::CostTask | SweepTarget::Alpha | SweepTarget::Beta => Vec::new(),
    }
}

/// One named oracle cross-check.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Runs the equilibrium search and checks the result against the
/// brute-force references: deviation probes and follower re-certification,
/// grid best responses for both servers, and a grid follower search for
/// every device.
pub fn oracle_checks(
    scenario: &Scenario,
) -> Result<(EquilibriumResult, Vec<OracleCheck>), ExperimentError> {
    let (market, devices) = (&scenario.market, &scenario.devices);
    let result = run_convergence(scenario)?;
    result.ensure_converged()?;
    let mut checks = Vec::new();

    let report = verify_equilibrium(&result, devices, market, &DEFAULT_PROBE_EPS)?;
    checks.push(OracleCheck {
        name: "unilateral deviations".into(),
        passed: report.deviations.iter().all(|d| d.passed()),
        detail: format!(
            "max gain {:e} over {} probes",
            report.max_gain(),
            report.deviations.len()
        ),
    });
    checks.push(OracleCheck {
        name: "follower KKT certificates".into(),
        passed: report.certificates.iter().all(|c| c.certified),
        detail: format!("{} devices", report.certificates.len()),
    });

    let grid = GridSpec::leader();
    let (h, t) = price_bounds(market);
    for (server, other, own, width) in [
        (
            Server::Hash,
            result.prices.p_t,
            result.prices.p_h,
            h.width(),
        ),
        (
            Server::Task,
            result.prices.p_h,
            result.prices.p_t,
            t.width(),
        ),
    ] {
        let (best, _) = brute_force_best_response(server, other, devices, market, &grid)?;
        let step = grid.final_resolution() * width;
        checks.push(OracleCheck {
            name: format!("{server:?} grid best response"),
            passed: (best - own).abs() <= step,
            detail: format!("grid {best} vs fixed point {own} (step {step})"),
        });
    }

    for (d, s) in devices.iter().zip(&result.solutions) {
        let (x, profit) = brute_force_follower(d, &result.prices, market, &GridSpec::follower());
        let dist = (x.x_h - s.strategy.x_h)
            .abs()
            .max((x.x_t - s.strategy.x_t).abs());
        checks.push(OracleCheck {
            name: format!("device {} grid optimum", d.id),
            passed: dist <= 1e-2 && s.profit.total >= profit - 1e-9 * (1.0 + profit.abs()),
            detail: format!(
                "distance {dist:e}, profit {} vs grid {profit}",
                s.profit.total
            ),
        });
    }
    Ok((result, checks))
}

/// Re-derives a sweep row's utilities from its prices through the follower
/// solver. Used to audit exported rows.
pub fn recompute_utilities(
    market: &MarketParams,
    devices: &[edgeprice_core::Device],
    row: &SweepRow,
) -> Result<(f64, f64), SolveError> {
    let prices = edgeprice_core::PriceVector {
        p_h: row.p_h,
        p_t: row.p_t,
    };
    let sols = edgeprice_core::solve_all_followers(devices, &prices, market)?;
    let u = edgeprice_core::server_utilities(&prices, sols.iter().map(|s| &s.strategy), market);
    Ok((u.u_h, u.u_t))
}
