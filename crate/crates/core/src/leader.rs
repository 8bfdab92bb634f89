//! Upper stage: the two servers' price game.
//!
//! [`fnes`] alternates probe-and-step moves: each server compares its
//! utility at the current price and one step above and below, moves to the
//! best of the three, and the step shrinks geometrically every iteration.
//! [`verify_equilibrium`] checks a result against unilateral price
//! deviations and re-certifies every follower.

use alloc::vec::Vec;

use crate::error::{ParamError, SolveError};
use crate::follower::{solve_all_followers, FollowerSolution};
use crate::game::{
    price_bounds, server_utilities, Device, Interval, MarketParams, PriceVector, ServerUtilities,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Server {
    Hash,
    Task,
}

impl Server {
    fn bounds(self, params: &MarketParams) -> Interval {
        let (h, t) = price_bounds(params);
        match self {
            Server::Hash => h,
            Server::Task => t,
        }
    }

    fn own_price(self, prices: &PriceVector) -> f64 {
        match self {
            Server::Hash => prices.p_h,
            Server::Task => prices.p_t,
        }
    }

    fn with_price(self, prices: &PriceVector, price: f64) -> PriceVector {
        match self {
            Server::Hash => PriceVector {
                p_h: price,
                p_t: prices.p_t,
            },
            Server::Task => PriceVector {
                p_h: prices.p_h,
                p_t: price,
            },
        }
    }

    fn utility(self, u: &ServerUtilities) -> f64 {
        match self {
            Server::Hash => u.u_h,
            Server::Task => u.u_t,
        }
    }
}

/// Step schedule and starting point of [`fnes`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Initial step `Δ`.
    pub delta0: f64,
    /// Attenuation `δ ∈ (0, 1)` applied to the step after every iteration.
    pub decay: f64,
    /// Starting prices; `None` means the midpoints of both intervals.
    pub init: Option<PriceVector>,
    pub max_iters: usize,
    /// Convergence requires an iteration with no price move taken at a step
    /// no larger than this.
    pub converge_eps: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            delta0: 1.0,
            decay: 0.99,
            init: None,
            max_iters: 10_000,
            converge_eps: 1e-4,
        }
    }
}

impl SolverConfig {
    pub fn with_init(mut self, init: PriceVector) -> Self {
        self.init = Some(init);
        self
    }

    pub fn with_delta0(mut self, delta0: f64) -> Self {
        self.delta0 = delta0;
        self
    }

    /// Validates the config and resolves the starting prices.
    pub fn start(&self, params: &MarketParams) -> Result<PriceVector, ParamError> {
        if !(self.delta0.is_finite() && self.delta0 > 0.0) {
            return Err(ParamError::NotPositive {
                field: "delta0",
                value: self.delta0,
            });
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(ParamError::DecayOutOfRange(self.decay));
        }
        if !(self.converge_eps.is_finite() && self.converge_eps > 0.0) {
            return Err(ParamError::NotPositive {
                field: "converge_eps",
                value: self.converge_eps,
            });
        }
        if self.max_iters == 0 {
            return Err(ParamError::ZeroIterations);
        }
        let init = self.init.unwrap_or_else(|| PriceVector::midpoint(params));
        init.check(params)?;
        Ok(init)
    }
}

/// State after one iteration: the updated prices, the utilities at those
/// prices and the step that was used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub p_h: f64,
    pub p_t: f64,
    pub u_h: f64,
    pub u_t: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResult {
    pub prices: PriceVector,
    /// Follower solutions at `prices`, in device order.
    pub solutions: Vec<FollowerSolution>,
    pub utilities: ServerUtilities,
    pub trace: Vec<IterationRecord>,
    pub converged: bool,
    pub iterations_used: usize,
}

impl EquilibriumResult {
    /// `(Σx_h, Σx_t)` over all devices.
    pub fn total_purchase(&self) -> (f64, f64) {
        self.solutions.iter().fold((0.0, 0.0), |(h, t), s| {
            (h + s.strategy.x_h, t + s.strategy.x_t)
        })
    }

    /// Turns a non-converged result into [`SolveError::NotConverged`].
    pub fn ensure_converged(&self) -> Result<(), SolveError> {
        if self.converged {
            Ok(())
        } else {
            Err(SolveError::NotConverged {
                iterations: self.iterations_used,
                delta: self.trace.last().map_or(f64::NAN, |r| r.delta),
            })
        }
    }

    /// First iteration from which every recorded price stays within
    /// `(tol_h, tol_t)` of the final prices. Zero for an empty trace.
    pub fn settling_iteration(&self, tol_h: f64, tol_t: f64) -> usize {
        let p = self.prices;
        self.trace
            .iter()
            .rposition(|r| (r.p_h - p.p_h).abs() > tol_h || (r.p_t - p.p_t).abs() > tol_t)
            .map_or(1, |i| i + 2)
            .min(self.trace.len())
    }

    /// [`Self::settling_iteration`] with tolerances set to `fraction` of each
    /// price interval's width.
    pub fn settling_iteration_rel(&self, fraction: f64, params: &MarketParams) -> usize {
        let (h, t) = price_bounds(params);
        self.settling_iteration(fraction * h.width(), fraction * t.width())
    }
}

/// Utility of `server` when it posts `candidate` (clamped into its interval)
/// and the other server keeps its price from `prices`.
pub fn utility_probe(
    server: Server,
    candidate: f64,
    prices: &PriceVector,
    devices: &[Device],
    params: &MarketParams,
) -> Result<f64, SolveError> {
    let probe = server.with_price(prices, server.bounds(params).clamp(candidate));
    let solutions = solve_all_followers(devices, &probe, params)?;
    let u = server_utilities(&probe, solutions.iter().map(|s| &s.strategy), params);
    Ok(server.utility(&u))
}

/// One probe-and-step move. Ties go up first, then down; staying is the
/// fallthrough.
fn step(
    server: Server,
    prices: &PriceVector,
    delta: f64,
    devices: &[Device],
    params: &MarketParams,
) -> Result<f64, SolveError> {
    let bounds = server.bounds(params);
    let current = server.own_price(prices);
    let up_price = bounds.clamp(current + delta);
    let down_price = bounds.clamp(current - delta);
    let stay = utility_probe(server, current, prices, devices, params)?;
    let up = utility_probe(server, up_price, prices, devices, params)?;
    let down = utility_probe(server, down_price, prices, devices, params)?;
    Ok(if up >= stay && up >= down {
        up_price
    } else if down >= stay && down >= up {
        down_price
    } else {
        current
    })
}

/// Damped alternating best-response search for the servers' equilibrium.
///
/// The hash server moves first and the task server responds to the updated
/// hash price. The loop stops once an iteration leaves both prices
/// unchanged with a step no larger than `converge_eps`. Hitting
/// `max_iters` first returns the result with `converged == false`.
pub fn fnes(
    devices: &[Device],
    params: &MarketParams,
    config: &SolverConfig,
) -> Result<EquilibriumResult, SolveError> {
    if devices.is_empty() {
        return Err(SolveError::NoDevices);
    }
    let mut prices = config.start(params)?;
    let mut delta = config.delta0;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut solutions = Vec::new();
    let mut utilities = ServerUtilities::default();

    for iteration in 1..=config.max_iters {
        let before = prices;
        prices.p_h = step(Server::Hash, &prices, delta, devices, params)?;
        prices.p_t = step(Server::Task, &prices, delta, devices, params)?;
        solutions = solve_all_followers(devices, &prices, params)?;
        utilities = server_utilities(&prices, solutions.iter().map(|s| &s.strategy), params);
        trace.push(IterationRecord {
            iteration,
            p_h: prices.p_h,
            p_t: prices.p_t,
            u_h: utilities.u_h,
            u_t: utilities.u_t,
            delta,
        });
        if before == prices && delta <= config.converge_eps {
            converged = true;
            break;
        }
        delta *= config.decay;
    }

    Ok(EquilibriumResult {
        prices,
        solutions,
        utilities,
        iterations_used: trace.len(),
        trace,
        converged,
    })
}

/// Deviation sizes probed by [`verify_equilibrium`] by default.
pub const DEFAULT_PROBE_EPS: [f64; 4] = [1e-3, 1e-2, 1e-1, 1.0];

/// One unilateral deviation tested by the verifier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviationCheck {
    pub server: Server,
    /// Signed deviation before clamping.
    pub offset: f64,
    pub price: f64,
    pub utility: f64,
    /// Utility gain over the equilibrium utility; positive means better.
    pub gain: f64,
    pub slack: f64,
}

impl DeviationCheck {
    pub fn passed(&self) -> bool {
        self.gain <= self.slack
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertificateCheck {
    pub device_index: usize,
    pub certified: bool,
    pub worst_stationarity_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VerificationReport {
    pub deviations: Vec<DeviationCheck>,
    pub certificates: Vec<CertificateCheck>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.deviations.iter().all(DeviationCheck::passed)
            && self.certificates.iter().all(|c| c.certified)
    }

    pub fn improving_deviations(&self) -> impl Iterator<Item = &DeviationCheck> {
        self.deviations.iter().filter(|d| !d.passed())
    }

    pub fn max_gain(&self) -> f64 {
        self.deviations
            .iter()
            .map(|d| d.gain)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Checks `prices` for profitable unilateral deviations of size `±ε` and
/// re-certifies each stored follower solution.
///
/// Only the finite set of deviations in `probe_eps` is tested, so a pass is
/// empirical evidence rather than proof.
pub fn verify_prices(
    prices: &PriceVector,
    solutions: &[FollowerSolution],
    devices: &[Device],
    params: &MarketParams,
    probe_eps: &[f64],
) -> Result<VerificationReport, SolveError> {
    let at = server_utilities(prices, solutions.iter().map(|s| &s.strategy), params);
    let mut report = VerificationReport::default();
    for &eps in probe_eps {
        for server in [Server::Hash, Server::Task] {
            let base = server.utility(&at);
            for offset in [eps, -eps] {
                let price = server
                    .bounds(params)
                    .clamp(server.own_price(prices) + offset);
                let utility = utility_probe(server, price, prices, devices, params)?;
                report.deviations.push(DeviationCheck {
                    server,
                    offset,
                    price,
                    utility,
                    gain: utility - base,
                    slack: 1e-6 * (1.0 + base.abs()),
                });
            }
        }
    }
    for (device_index, (device, sol)) in devices.iter().zip(solutions).enumerate() {
        let r = sol.residuals(prices, device.budget(), params);
        report.certificates.push(CertificateCheck {
            device_index,
            certified: r.is_certified(),
            worst_stationarity_ratio: r.worst_stationarity_ratio(),
        });
    }
    Ok(report)
}

/// [`verify_prices`] on a converged [`EquilibriumResult`].
pub fn verify_equilibrium(
    result: &EquilibriumResult,
    devices: &[Device],
    params: &MarketParams,
    probe_eps: &[f64],
) -> Result<VerificationReport, SolveError> {
    result.ensure_converged()?;
    verify_prices(
        &result.prices,
        &result.solutions,
        devices,
        params,
        probe_eps,
    )
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;
    use crate::follower::solve_all_followers;

    #[test]
    fn probe_at_cost_is_zero() {
        let p = MarketParams::reference();
        let devices = Device::reference_set();
        let prices = PriceVector::new(26.6, 45.0, &p).unwrap();
        let u = utility_probe(Server::Hash, p.cost_hash(), &prices, &devices, &p).unwrap();
        assert_eq!(u, 0.0);
        let upper = PriceVector::upper(&p);
        let u = utility_probe(Server::Hash, upper.p_h, &upper, &devices, &p).unwrap();
        assert_eq!(u, 0.0);
    }

    #[test]
    fn probe_clamps_candidate() {
        let p = MarketParams::reference();
        let devices = Device::reference_set();
        let prices = PriceVector::new(26.6, 45.0, &p).unwrap();
        let clamped = utility_probe(Server::Task, 1e6, &prices, &devices, &p).unwrap();
        let at_cap = utility_probe(Server::Task, 80.0, &prices, &devices, &p).unwrap();
        assert_eq!(clamped, at_cap);
    }

    #[test]
    fn probe_at_reference_prices() {
        // Σx_h = 12.7339756467838913... from the 50-digit closed forms.
        let p = MarketParams::reference();
        let devices = Device::reference_set();
        let prices = PriceVector::new(26.6, 45.0, &p).unwrap();
        let u = utility_probe(Server::Hash, 26.6, &prices, &devices, &p).unwrap();
        assert!((u - 16.6 * 12.733_975_646_783_891).abs() < 1e-9);
        let u = utility_probe(Server::Task, 45.0, &prices, &devices, &p).unwrap();
        assert!((u - 35.0 * 0.250_583_284_345_522_01).abs() < 1e-11);
    }

    #[test]
    fn config_validation() {
        let p = MarketParams::reference();
        assert!(SolverConfig::default().start(&p).is_ok());
        let bad = SolverConfig {
            decay: 1.0,
            ..SolverConfig::default()
        };
        assert_eq!(bad.start(&p), Err(ParamError::DecayOutOfRange(1.0)));
        let bad = SolverConfig::default().with_delta0(0.0);
        assert!(bad.start(&p).is_err());
        let bad = SolverConfig::default().with_init(PriceVector {
            p_h: 50.0,
            p_t: 45.0,
        });
        assert!(matches!(
            bad.start(&p),
            Err(ParamError::PriceOutOfBounds { .. })
        ));
        let bad = SolverConfig {
            max_iters: 0,
            ..SolverConfig::default()
        };
        assert_eq!(bad.start(&p), Err(ParamError::ZeroIterations));
    }

    #[test]
    fn fnes_requires_devices() {
        let p = MarketParams::reference();
        assert_eq!(
            fnes(&[], &p, &SolverConfig::default()),
            Err(SolveError::NoDevices)
        );
    }

    #[test]
    fn iteration_cap_reports_not_converged() {
        let p = MarketParams::reference();
        let config = SolverConfig {
            max_iters: 10,
            ..SolverConfig::default()
        };
        let r = fnes(&Device::reference_set(), &p, &config).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations_used, 10);
        assert_eq!(r.trace.len(), 10);
        assert!(matches!(
            r.ensure_converged(),
            Err(SolveError::NotConverged { iterations: 10, .. })
        ));
    }

    #[test]
    fn settling_iteration_counts_from_last_excursion() {
        let rec = |i, p_h| IterationRecord {
            iteration: i,
            p_h,
            p_t: 1.0,
            u_h: 0.0,
            u_t: 0.0,
            delta: 1.0,
        };
        let result = EquilibriumResult {
            prices: PriceVector { p_h: 5.0, p_t: 1.0 },
            solutions: Vec::new(),
            utilities: ServerUtilities::default(),
            trace: alloc::vec![rec(1, 1.0), rec(2, 4.0), rec(3, 4.95), rec(4, 5.0)],
            converged: true,
            iterations_used: 4,
        };
        assert_eq!(result.settling_iteration(0.1, 0.1), 3);
        assert_eq!(result.settling_iteration(10.0, 10.0), 1);
        assert_eq!(result.settling_iteration(0.0, 0.0), 4);
    }

    #[test]
    fn perturbed_point_has_improving_deviation() {
        let p = MarketParams::reference();
        let devices = Device::reference_set();
        let eq = fnes(&devices, &p, &SolverConfig::default()).unwrap();
        let moved = PriceVector {
            p_h: eq.prices.p_h + 1.0,
            p_t: eq.prices.p_t,
        };
        let sols = solve_all_followers(&devices, &moved, &p).unwrap();
        let report = verify_prices(&moved, &sols, &devices, &p, &DEFAULT_PROBE_EPS).unwrap();
        assert!(!report.passed());
        assert!(report
            .improving_deviations()
            .any(|d| d.server == Server::Hash && d.offset < 0.0));
    }
}
