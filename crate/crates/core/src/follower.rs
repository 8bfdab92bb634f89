//! Lower stage: a device's optimal budget split at fixed prices.
//!
//! The follower maximizes a strictly concave profit over the budget simplex,
//! so its KKT system has exactly one solution. [`fosd`] finds it by walking
//! the seven support/multiplier cases in a fixed order and returning the
//! first whose closed form satisfies every condition. Each accepted answer
//! carries a [`KktCertificate`] that can be re-checked independently with
//! [`KktCertificate::residuals`].

use alloc::vec::Vec;
use core::fmt;

use crate::error::SolveError;
use crate::game::{
    device_profit, Device, DeviceStrategy, MarketParams, PriceVector, ProfitBreakdown,
};
use crate::tol;

/// Which KKT case produced a solution.
///
/// `Case2*` buy only task resources, `Case3*` only hash power and `Case4*`
/// both; the `_1` variants have a slack budget (`λ₁ = 0`), the `_2`
/// variants spend it all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KktCase {
    Case1,
    Case2_1,
    Case2_2,
    Case3_1,
    Case3_2,
    Case4_1,
    Case4_2,
}

impl KktCase {
    /// Ladder order.
    pub const ALL: [KktCase; 7] = [
        KktCase::Case1,
        KktCase::Case2_1,
        KktCase::Case2_2,
        KktCase::Case3_1,
        KktCase::Case3_2,
        KktCase::Case4_1,
        KktCase::Case4_2,
    ];

    pub fn label(self) -> &'static str {
        match self {
            KktCase::Case1 => "CASE1",
            KktCase::Case2_1 => "CASE2_1",
            KktCase::Case2_2 => "CASE2_2",
            KktCase::Case3_1 => "CASE3_1",
            KktCase::Case3_2 => "CASE3_2",
            KktCase::Case4_1 => "CASE4_1",
            KktCase::Case4_2 => "CASE4_2",
        }
    }

    fn from_support(x: &DeviceStrategy, budget_bound: bool) -> Self {
        match (x.x_h > 0.0, x.x_t > 0.0, budget_bound) {
            (false, false, _) => KktCase::Case1,
            (false, true, false) => KktCase::Case2_1,
            (false, true, true) => KktCase::Case2_2,
            (true, false, false) => KktCase::Case3_1,
            (true, false, true) => KktCase::Case3_2,
            (true, true, false) => KktCase::Case4_1,
            (true, true, true) => KktCase::Case4_2,
        }
    }
}

impl fmt::Display for KktCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Intermediates of the budget-bound interior case:
/// `A = b + H·p_h + p_t/β`, `B = √(R·N·H·p_h)` and `t = √(1 + λ₁)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteriorAux {
    pub a: f64,
    pub b: f64,
    pub t: f64,
}

/// Lagrange multipliers proving a follower strategy optimal.
///
/// `lambda1` prices the budget constraint, `lambda2`/`lambda3` the
/// non-negativity of `x_h`/`x_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktCertificate {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub case: KktCase,
    pub aux: Option<InteriorAux>,
}

/// Residuals of every KKT condition at a candidate point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    /// `|R·N·H/(H+x_h)² − p_h(1+λ₁) + λ₂|`
    pub stationarity_h: f64,
    /// `|αβ/(1+βx_t) − p_t(1+λ₁) + λ₃|`
    pub stationarity_t: f64,
    /// `b − x_h·p_h − x_t·p_t`; negative means over budget.
    pub budget_slack: f64,
    pub min_amount: f64,
    pub min_multiplier: f64,
    /// `|λ₁·(b − spend)|`, `|λ₂·x_h|`, `|λ₃·x_t|`.
    pub complementarity: [f64; 3],
    stationarity_bound: f64,
    budget: f64,
}

impl KktResiduals {
    pub fn stationarity_ok(&self) -> bool {
        self.stationarity_h <= self.stationarity_bound
            && self.stationarity_t <= self.stationarity_bound
    }

    pub fn primal_ok(&self) -> bool {
        self.min_amount >= 0.0 && self.budget_slack >= -tol::FEASIBILITY_REL * self.budget
    }

    pub fn dual_ok(&self) -> bool {
        self.min_multiplier >= -tol::KKT
    }

    pub fn complementarity_ok(&self) -> bool {
        self.complementarity.iter().all(|r| *r <= tol::KKT)
    }

    pub fn is_certified(&self) -> bool {
        self.stationarity_ok() && self.primal_ok() && self.dual_ok() && self.complementarity_ok()
    }

    /// Largest stationarity residual relative to its bound.
    pub fn worst_stationarity_ratio(&self) -> f64 {
        self.stationarity_h.max(self.stationarity_t) / self.stationarity_bound
    }
}

impl KktCertificate {
    pub fn residuals(
        &self,
        strategy: &DeviceStrategy,
        prices: &PriceVector,
        budget: f64,
        params: &MarketParams,
    ) -> KktResiduals {
        let d = params.hash_power() + strategy.x_h;
        let shadow = 1.0 + self.lambda1;
        let stationarity_h = (params.rnh() / (d * d) - prices.p_h * shadow + self.lambda2).abs();
        let stationarity_t = (params.task_price_cap() / (1.0 + params.beta() * strategy.x_t)
            - prices.p_t * shadow
            + self.lambda3)
            .abs();
        let budget_slack = budget - strategy.spend(prices);
        KktResiduals {
            stationarity_h,
            stationarity_t,
            budget_slack,
            min_amount: strategy.x_h.min(strategy.x_t),
            min_multiplier: self.lambda1.min(self.lambda2).min(self.lambda3),
            complementarity: [
                (self.lambda1 * budget_slack).abs(),
                (self.lambda2 * strategy.x_h).abs(),
                (self.lambda3 * strategy.x_t).abs(),
            ],
            stationarity_bound: tol::STATIONARITY_REL * 1f64.max(prices.p_h).max(prices.p_t),
            budget,
        }
    }
}

/// Output of [`fosd`].
#[derive(Debug, Clone, PartialEq)]
pub struct FollowerSolution {
    pub strategy: DeviceStrategy,
    pub certificate: KktCertificate,
    pub profit: ProfitBreakdown,
    /// Set when the case ladder rejected every case and the bisection
    /// fallback produced the answer.
    pub degraded: bool,
}

impl FollowerSolution {
    pub fn residuals(
        &self,
        prices: &PriceVector,
        budget: f64,
        params: &MarketParams,
    ) -> KktResiduals {
        self.certificate
            .residuals(&self.strategy, prices, budget, params)
    }
}

/// Why a case did not apply.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RejectReason {
    HashPriceBelowCap,
    TaskPriceBelowCap,
    NotBothAtCap,
    OverBudget { spend: f64 },
    Lambda1NotPositive(f64),
    Lambda2Negative(f64),
    Lambda3Negative(f64),
    NonPositiveAmount { x_h: f64, x_t: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaseRejection {
    pub case: KktCase,
    pub reason: RejectReason,
}

impl fmt::Display for CaseRejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: ", self.case)?;
        match self.reason {
            RejectReason::HashPriceBelowCap => f.write_str("p_h below R*N/H"),
            RejectReason::TaskPriceBelowCap => f.write_str("p_t below alpha*beta"),
            RejectReason::NotBothAtCap => f.write_str("prices not both at their caps"),
            RejectReason::OverBudget { spend } => write!(f, "spend {spend} exceeds budget"),
            RejectReason::Lambda1NotPositive(l) => write!(f, "lambda1 = {l} not > 0"),
            RejectReason::Lambda2Negative(l) => write!(f, "lambda2 = {l} < 0"),
            RejectReason::Lambda3Negative(l) => write!(f, "lambda3 = {l} < 0"),
            RejectReason::NonPositiveAmount { x_h, x_t } => {
                write!(f, "amounts ({x_h}, {x_t}) not both > 0")
            }
        }
    }
}

fn at_cap(price: f64, cap: f64, boundary_tol: f64) -> bool {
    (price - cap).abs() <= boundary_tol * cap
}

fn certificate(case: KktCase, lambda1: f64, lambda2: f64, lambda3: f64) -> KktCertificate {
    KktCertificate {
        lambda1,
        lambda2,
        lambda3,
        case,
        aux: None,
    }
}

fn fits(spend: f64, budget: f64) -> bool {
    budget - spend >= -tol::FEASIBILITY_REL * budget
}

/// Evaluates one case of the ladder in isolation.
///
/// `boundary_tol` is the relative tolerance used for the "price equals its
/// cap" tests of `Case1`, `Case2_1` and `Case3_1`.
pub fn evaluate_case(
    case: KktCase,
    budget: f64,
    prices: &PriceVector,
    params: &MarketParams,
    boundary_tol: f64,
) -> Result<(DeviceStrategy, KktCertificate), RejectReason> {
    let PriceVector { p_h, p_t } = *prices;
    let rn_over_h = params.hash_price_cap();
    let ab = params.task_price_cap();
    let (alpha, beta, h, rnh) = (
        params.alpha(),
        params.beta(),
        params.hash_power(),
        params.rnh(),
    );
    let hash_at_cap = at_cap(p_h, rn_over_h, boundary_tol);
    let task_at_cap = at_cap(p_t, ab, boundary_tol);
    // Slack-budget single-resource optima; clamp the rounding noise that
    // appears when a price sits on its cap.
    let free_x_h = || (libm::sqrt(rnh / p_h) - h).max(0.0);
    let free_x_t = || (alpha / p_t - 1.0 / beta).max(0.0);

    match case {
        KktCase::Case1 => {
            if hash_at_cap && task_at_cap {
                Ok((DeviceStrategy::default(), certificate(case, 0.0, 0.0, 0.0)))
            } else {
                Err(RejectReason::NotBothAtCap)
            }
        }
        KktCase::Case2_1 => {
            if !hash_at_cap {
                return Err(RejectReason::HashPriceBelowCap);
            }
            let x_t = free_x_t();
            let spend = x_t * p_t;
            if !fits(spend, budget) {
                return Err(RejectReason::OverBudget { spend });
            }
            Ok((
                DeviceStrategy { x_h: 0.0, x_t },
                certificate(case, 0.0, 0.0, 0.0),
            ))
        }
        KktCase::Case2_2 => {
            let x_t = budget / p_t;
            let denom = beta * budget + p_t;
            let lambda1 = ab / denom - 1.0;
            let lambda2 = ab * p_h / denom - rn_over_h;
            if lambda1 <= tol::KKT {
                return Err(RejectReason::Lambda1NotPositive(lambda1));
            }
            if lambda2 < -tol::KKT {
                return Err(RejectReason::Lambda2Negative(lambda2));
            }
            Ok((
                DeviceStrategy { x_h: 0.0, x_t },
                certificate(case, lambda1, lambda2, 0.0),
            ))
        }
        KktCase::Case3_1 => {
            if !task_at_cap {
                return Err(RejectReason::TaskPriceBelowCap);
            }
            let x_h = free_x_h();
            let spend = x_h * p_h;
            if !fits(spend, budget) {
                return Err(RejectReason::OverBudget { spend });
            }
            Ok((
                DeviceStrategy { x_h, x_t: 0.0 },
                certificate(case, 0.0, 0.0, 0.0),
            ))
        }
        KktCase::Case3_2 => {
            let x_h = budget / p_h;
            let s = budget + h * p_h;
            let ratio = rnh * p_h / (s * s);
            let lambda1 = ratio - 1.0;
            let lambda3 = ratio * p_t - ab;
            if lambda1 <= tol::KKT {
                return Err(RejectReason::Lambda1NotPositive(lambda1));
            }
            if lambda3 < -tol::KKT {
                return Err(RejectReason::Lambda3Negative(lambda3));
            }
            Ok((
                DeviceStrategy { x_h, x_t: 0.0 },
                certificate(case, lambda1, 0.0, lambda3),
            ))
        }
        KktCase::Case4_1 => {
            let x = DeviceStrategy {
                x_h: free_x_h(),
                x_t: free_x_t(),
            };
            let spend = x.spend(prices);
            if !fits(spend, budget) {
                return Err(RejectReason::OverBudget { spend });
            }
            Ok((x, certificate(case, 0.0, 0.0, 0.0)))
        }
        KktCase::Case4_2 => {
            let a = budget + h * p_h + p_t / beta;
            let b = libm::sqrt(rnh * p_h);
            let t = (b + libm::sqrt(b * b + 4.0 * a * alpha)) / (2.0 * a);
            let shadow = t * t;
            let lambda1 = shadow - 1.0;
            if lambda1 <= tol::KKT {
                return Err(RejectReason::Lambda1NotPositive(lambda1));
            }
            let x_h = libm::sqrt(rnh / (p_h * shadow)) - h;
            let x_t = alpha / (p_t * shadow) - 1.0 / beta;
            if !(x_h > 0.0 && x_t > 0.0) {
                return Err(RejectReason::NonPositiveAmount { x_h, x_t });
            }
            let mut cert = certificate(case, lambda1, 0.0, 0.0);
            cert.aux = Some(InteriorAux { a, b, t });
            Ok((DeviceStrategy { x_h, x_t }, cert))
        }
    }
}

/// Slack-budget demand at shadow price `1 + λ₁`, projected onto `x ≥ 0`.
fn demand(shadow: f64, prices: &PriceVector, params: &MarketParams) -> DeviceStrategy {
    DeviceStrategy {
        x_h: (libm::sqrt(params.rnh() / (prices.p_h * shadow)) - params.hash_power()).max(0.0),
        x_t: (params.alpha() / (prices.p_t * shadow) - 1.0 / params.beta()).max(0.0),
    }
}

/// Solves the follower problem by bisection on `λ₁` over the budget
/// residual `b − spend(λ₁)`, with the demand projected onto `x ≥ 0`.
///
/// Spend is non-increasing in `λ₁`, so the root is bracketed once a
/// feasible upper end is found. Used as the fallback when the case ladder
/// accepts nothing.
pub fn solve_by_bisection(
    budget: f64,
    prices: &PriceVector,
    params: &MarketParams,
) -> (DeviceStrategy, KktCertificate) {
    let spend_at = |lambda: f64| demand(1.0 + lambda, prices, params).spend(prices);
    let lambda1 = if spend_at(0.0) <= budget {
        0.0
    } else {
        let mut hi = 1.0;
        while spend_at(hi) > budget {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..2000 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if spend_at(mid) > budget {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    };
    let shadow = 1.0 + lambda1;
    let x = demand(shadow, prices, params);
    let lambda2 = if x.x_h > 0.0 {
        0.0
    } else {
        (prices.p_h * shadow - params.hash_price_cap()).max(0.0)
    };
    let lambda3 = if x.x_t > 0.0 {
        0.0
    } else {
        (prices.p_t * shadow - params.task_price_cap()).max(0.0)
    };
    let case = KktCase::from_support(&x, lambda1 > 0.0);
    (x, certificate(case, lambda1, lambda2, lambda3))
}

/// Optimal purchase of one device at the given prices.
///
/// Cases are tried in ladder order and the first acceptable one wins.
/// Should every case be rejected (only possible through rounding at a
/// region boundary), the bisection fallback is used and the solution is
/// flagged `degraded`; if even that fails certification the per-case
/// diagnostics are returned in [`SolveError::NoCaseAccepted`].
pub fn fosd(
    device: &Device,
    prices: &PriceVector,
    params: &MarketParams,
    boundary_tol: f64,
) -> Result<FollowerSolution, SolveError> {
    prices.check(params)?;
    let budget = device.budget();
    let mut rejections = Vec::new();
    for case in KktCase::ALL {
        match evaluate_case(case, budget, prices, params, boundary_tol) {
            Ok((strategy, certificate)) => {
                return Ok(FollowerSolution {
                    profit: device_profit(&strategy, prices, params),
                    strategy,
                    certificate,
                    degraded: false,
                })
            }
            Err(reason) => rejections.push(CaseRejection { case, reason }),
        }
    }
    let (strategy, certificate) = solve_by_bisection(budget, prices, params);
    if certificate
        .residuals(&strategy, prices, budget, params)
        .is_certified()
    {
        Ok(FollowerSolution {
            profit: device_profit(&strategy, prices, params),
            strategy,
            certificate,
            degraded: true,
        })
    } else {
        Err(SolveError::NoCaseAccepted {
            device: device.id.clone(),
            rejections,
        })
    }
}

/// [`fosd`] for every device, in order, with the default boundary tolerance.
pub fn solve_all_followers(
    devices: &[Device],
    prices: &PriceVector,
    params: &MarketParams,
) -> Result<Vec<FollowerSolution>, SolveError> {
    devices
        .iter()
        .map(|d| fosd(d, prices, params, tol::BOUNDARY_REL))
        .collect()
}
