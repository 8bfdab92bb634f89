//! Market constants, player strategies and the closed-form profit and
//! utility functions that both solver stages evaluate.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::ParamError;

/// Global constants of one market instance.
///
/// Construction enforces that both price intervals are non-empty, so every
/// downstream function may assume a valid instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketParams {
    hash_power: f64,
    reward: f64,
    blocks_per_day: f64,
    alpha: f64,
    beta: f64,
    cost_hash: f64,
    cost_task: f64,
}

fn positive(field: &'static str, value: f64) -> Result<f64, ParamError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(ParamError::NotPositive { field, value })
    }
}

impl MarketParams {
    /// `hash_power` is the network-wide hash rate `H`, `reward` the block
    /// reward `R`, `blocks_per_day` is `N`; `alpha`/`beta` shape the task
    /// benefit `α·ln(1 + β·x)`; `cost_hash`/`cost_task` are the servers'
    /// unit costs.
    pub fn new(
        hash_power: f64,
        reward: f64,
        blocks_per_day: f64,
        alpha: f64,
        beta: f64,
        cost_hash: f64,
        cost_task: f64,
    ) -> Result<Self, ParamError> {
        let p = Self {
            hash_power: positive("H", hash_power)?,
            reward: positive("R", reward)?,
            blocks_per_day: positive("N", blocks_per_day)?,
            alpha: positive("alpha", alpha)?,
            beta: positive("beta", beta)?,
            cost_hash: positive("c_h", cost_hash)?,
            cost_task: positive("c_t", cost_task)?,
        };
        if p.beta < 1.0 {
            return Err(ParamError::BetaBelowOne(p.beta));
        }
        if p.cost_hash > p.hash_price_cap() {
            return Err(ParamError::HashCostAboveCap {
                cost: p.cost_hash,
                cap: p.hash_price_cap(),
            });
        }
        if p.cost_task > p.task_price_cap() {
            return Err(ParamError::TaskCostAboveCap {
                cost: p.cost_task,
                cap: p.task_price_cap(),
            });
        }
        Ok(p)
    }

    /// The reference market: `H = 1000`, `R = 300`, `N = 144`, `α = 40`,
    /// `β = 2`, `c_h = c_t = 10`.
    pub fn reference() -> Self {
        Self::new(1000.0, 300.0, 144.0, 40.0, 2.0, 10.0, 10.0).expect("reference market is valid")
    }

    pub fn hash_power(&self) -> f64 {
        self.hash_power
    }

    pub fn reward(&self) -> f64 {
        self.reward
    }

    pub fn blocks_per_day(&self) -> f64 {
        self.blocks_per_day
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn cost_hash(&self) -> f64 {
        self.cost_hash
    }

    pub fn cost_task(&self) -> f64 {
        self.cost_task
    }

    /// Expected daily mining revenue `R·N`.
    pub fn daily_reward(&self) -> f64 {
        self.reward * self.blocks_per_day
    }

    /// `R·N/H`, the marginal mining value of the first unit of hash power.
    pub fn hash_price_cap(&self) -> f64 {
        self.daily_reward() / self.hash_power
    }

    /// `α·β`, the marginal task benefit of the first unit of task resource.
    pub fn task_price_cap(&self) -> f64 {
        self.alpha * self.beta
    }

    /// `R·N·H`, which recurs in every hash-side closed form.
    pub(crate) fn rnh(&self) -> f64 {
        self.daily_reward() * self.hash_power
    }
}

/// One follower.
#[derive(Debug, Clone, PartialEq)]
pub struct Device {
    pub id: String,
    budget: f64,
}

impl Device {
    pub fn new(id: impl Into<String>, budget: f64) -> Result<Self, ParamError> {
        Ok(Self {
            id: id.into(),
            budget: positive("budget", budget)?,
        })
    }

    /// Daily spend limit `b_i`.
    pub fn budget(&self) -> f64 {
        self.budget
    }

    /// Five devices `s1..s5` with budgets 50, 60, 70, 80, 90.
    pub fn reference_set() -> Vec<Self> {
        (1..=5)
            .map(|i| Self::new(alloc::format!("s{i}"), 40.0 + 10.0 * f64::from(i)).unwrap())
            .collect()
    }
}

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.max(self.lo).min(self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// The two leaders' posted unit prices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceVector {
    pub p_h: f64,
    pub p_t: f64,
}

impl PriceVector {
    /// Builds a price vector, checking it against the feasible box of `params`.
    pub fn new(p_h: f64, p_t: f64, params: &MarketParams) -> Result<Self, ParamError> {
        let p = Self { p_h, p_t };
        p.check(params)?;
        Ok(p)
    }

    pub fn check(&self, params: &MarketParams) -> Result<(), ParamError> {
        let (h, t) = price_bounds(params);
        if !h.contains(self.p_h) {
            return Err(ParamError::PriceOutOfBounds {
                field: "p_h",
                value: self.p_h,
                lo: h.lo,
                hi: h.hi,
            });
        }
        if !t.contains(self.p_t) {
            return Err(ParamError::PriceOutOfBounds {
                field: "p_t",
                value: self.p_t,
                lo: t.lo,
                hi: t.hi,
            });
        }
        Ok(())
    }

    /// Midpoints of both price intervals.
    pub fn midpoint(params: &MarketParams) -> Self {
        let (h, t) = price_bounds(params);
        Self {
            p_h: h.midpoint(),
            p_t: t.midpoint(),
        }
    }

    /// Upper corners `(R·N/H, α·β)`, where no device buys anything.
    pub fn upper(params: &MarketParams) -> Self {
        Self {
            p_h: params.hash_price_cap(),
            p_t: params.task_price_cap(),
        }
    }
}

/// A follower's purchase `(x_h, x_t)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DeviceStrategy {
    pub x_h: f64,
    pub x_t: f64,
}

impl DeviceStrategy {
    pub fn new(x_h: f64, x_t: f64) -> Result<Self, ParamError> {
        for (field, value) in [("x_h", x_h), ("x_t", x_t)] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(ParamError::NegativeAmount { field, value });
            }
        }
        Ok(Self { x_h, x_t })
    }

    pub fn spend(&self, prices: &PriceVector) -> f64 {
        self.x_h * prices.p_h + self.x_t * prices.p_t
    }

    /// Whether the spend stays within `budget` plus the relative slack.
    pub fn is_affordable(&self, prices: &PriceVector, budget: f64) -> bool {
        self.spend(prices) <= budget * (1.0 + crate::tol::FEASIBILITY_REL)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfitBreakdown {
    pub mining_profit: f64,
    pub task_profit: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ServerUtilities {
    pub u_h: f64,
    pub u_t: f64,
}

/// Probability `x_h / (H + x_h)` that a miner holding `x_h` of hash power
/// wins the next block.
pub fn mining_probability(x_h: f64, params: &MarketParams) -> Result<f64, ParamError> {
    if !(x_h.is_finite() && x_h >= 0.0) {
        return Err(ParamError::NegativeAmount {
            field: "x_h",
            value: x_h,
        });
    }
    Ok(win_share(x_h, params))
}

#[inline]
fn win_share(x_h: f64, params: &MarketParams) -> f64 {
    x_h / (params.hash_power + x_h)
}

/// Mining and task profit of one device. The budget is not checked, so
/// callers may probe infeasible points.
pub fn device_profit(
    strategy: &DeviceStrategy,
    prices: &PriceVector,
    params: &MarketParams,
) -> ProfitBreakdown {
    let mining_profit =
        params.daily_reward() * win_share(strategy.x_h, params) - strategy.x_h * prices.p_h;
    let task_profit =
        params.alpha * libm::log1p(params.beta * strategy.x_t) - strategy.x_t * prices.p_t;
    ProfitBreakdown {
        mining_profit,
        task_profit,
        total: mining_profit + task_profit,
    }
}

/// Partial derivatives `(∂P/∂x_h, ∂P/∂x_t)` of the device profit.
pub fn marginal_profit(
    strategy: &DeviceStrategy,
    prices: &PriceVector,
    params: &MarketParams,
) -> (f64, f64) {
    let denom = params.hash_power + strategy.x_h;
    let d_h = params.daily_reward() * params.hash_power / (denom * denom) - prices.p_h;
    let d_t = params.task_price_cap() / (1.0 + params.beta * strategy.x_t) - prices.p_t;
    (d_h, d_t)
}

/// `U_h = (p_h − c_h)·Σx_h` and `U_t = (p_t − c_t)·Σx_t`.
pub fn server_utilities<'a, I>(
    prices: &PriceVector,
    strategies: I,
    params: &MarketParams,
) -> ServerUtilities
where
    I: IntoIterator<Item = &'a DeviceStrategy>,
{
    let (sum_h, sum_t) = strategies
        .into_iter()
        .fold((0.0, 0.0), |(h, t), s| (h + s.x_h, t + s.x_t));
    ServerUtilities {
        u_h: (prices.p_h - params.cost_hash) * sum_h,
        u_t: (prices.p_t - params.cost_task) * sum_t,
    }
}

/// Feasible price intervals `[c_h, R·N/H]` and `[c_t, α·β]`.
pub fn price_bounds(params: &MarketParams) -> (Interval, Interval) {
    (
        Interval {
            lo: params.cost_hash,
            hi: params.hash_price_cap(),
        },
        Interval {
            lo: params.cost_task,
            hi: params.task_price_cap(),
        },
    )
}
