//! Brute-force references for both game stages.
//!
//! These scan lattices instead of using any of the KKT case formulas or the
//! probe-and-step dynamics, so they check the optimization logic of
//! [`crate::follower`] and [`crate::leader`] independently. They do share the
//! profit and utility arithmetic in [`crate::game`].

use alloc::vec::Vec;

use crate::error::SolveError;
use crate::game::{price_bounds, Device, DeviceStrategy, MarketParams, PriceVector};
use crate::leader::{utility_probe, Server};

/// Lattice resolution for the brute-force scans.
///
/// `resolution` is the step as a fraction of each axis's extent: the
/// budget-affordable range `b/p` for a follower, the price interval width
/// for a leader. Each refine round re-grids a ±10-step window around the
/// incumbent at a tenth of the previous step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub resolution: f64,
    pub refine_rounds: usize,
}

impl GridSpec {
    pub fn follower() -> Self {
        Self {
            resolution: 1e-3,
            refine_rounds: 2,
        }
    }

    pub fn leader() -> Self {
        Self {
            resolution: 1e-2,
            refine_rounds: 2,
        }
    }

    /// Step fraction after all refine rounds.
    pub fn final_resolution(&self) -> f64 {
        self.resolution / libm::pow(10.0, self.refine_rounds as f64)
    }

    /// Largest per-axis follower step after `rounds` refinements.
    pub fn follower_step(&self, budget: f64, prices: &PriceVector, rounds: usize) -> f64 {
        let extent = (budget / prices.p_h).max(budget / prices.p_t);
        self.resolution * extent / libm::pow(10.0, rounds as f64)
    }
}

/// Lipschitz constant of the device profit used for the grid error bound:
/// `max(R·N/H − p_h, αβ − p_t) + p_h + p_t`.
pub fn lipschitz_bound(prices: &PriceVector, params: &MarketParams) -> f64 {
    (params.hash_price_cap() - prices.p_h).max(params.task_price_cap() - prices.p_t)
        + prices.p_h
        + prices.p_t
}

fn mining_part(x_h: f64, prices: &PriceVector, params: &MarketParams) -> f64 {
    params.daily_reward() * x_h / (params.hash_power() + x_h) - x_h * prices.p_h
}

fn task_part(x_t: f64, prices: &PriceVector, params: &MarketParams) -> f64 {
    params.alpha() * libm::log1p(params.beta() * x_t) - x_t * prices.p_t
}

struct Incumbent {
    x: DeviceStrategy,
    profit: f64,
}

impl Incumbent {
    fn offer(&mut self, x_h: f64, x_t: f64, profit: f64) {
        if profit > self.profit {
            *self = Incumbent {
                x: DeviceStrategy { x_h, x_t },
                profit,
            };
        }
    }
}

/// Scans the columns `x_h ∈ hs` against the rows `x_t ∈ ts` (both
/// ascending), keeping affordable points, plus the budget-exhausting point
/// of every column.
fn scan_follower(
    hs: &[f64],
    ts: &[f64],
    budget: f64,
    prices: &PriceVector,
    params: &MarketParams,
    best: &mut Incumbent,
) {
    // The profit is separable, so the row values can be tabulated once.
    let row_values: Vec<f64> = ts.iter().map(|&t| task_part(t, prices, params)).collect();
    for &x_h in hs {
        let remaining = budget - x_h * prices.p_h;
        if remaining < 0.0 {
            continue;
        }
        let column = mining_part(x_h, prices, params);
        for (&x_t, &v) in ts.iter().zip(&row_values) {
            if x_t * prices.p_t > remaining {
                break;
            }
            best.offer(x_h, x_t, column + v);
        }
        let edge = remaining / prices.p_t;
        best.offer(x_h, edge, column + task_part(edge, prices, params));
    }
}

fn axis(center: f64, step: f64, half_width: i64, upper: f64) -> Vec<f64> {
    (-half_width..=half_width)
        .map(|k| center + k as f64 * step)
        .filter(|&x| x >= 0.0 && x <= upper)
        .collect()
}

/// Best point of the budget simplex `{x ≥ 0, x_h·p_h + x_t·p_t ≤ b}` found by
/// exhaustive lattice search plus refinement. Returns the strategy and its
/// total profit.
pub fn brute_force_follower(
    device: &Device,
    prices: &PriceVector,
    params: &MarketParams,
    grid: &GridSpec,
) -> (DeviceStrategy, f64) {
    let budget = device.budget();
    let (max_h, max_t) = (budget / prices.p_h, budget / prices.p_t);
    let n = libm::floor(1.0 / grid.resolution + 1e-9) as i64;
    let (mut step_h, mut step_t) = (grid.resolution * max_h, grid.resolution * max_t);
    let hs: Vec<f64> = (0..=n).map(|i| (i as f64 * step_h).min(max_h)).collect();
    let ts: Vec<f64> = (0..=n).map(|j| (j as f64 * step_t).min(max_t)).collect();
    let mut best = Incumbent {
        x: DeviceStrategy::default(),
        profit: 0.0,
    };
    scan_follower(&hs, &ts, budget, prices, params, &mut best);
    for _ in 0..grid.refine_rounds {
        step_h /= 10.0;
        step_t /= 10.0;
        let hs = axis(best.x.x_h, step_h, 100, max_h);
        let ts = axis(best.x.x_t, step_t, 100, max_t);
        scan_follower(&hs, &ts, budget, prices, params, &mut best);
    }
    (best.x, best.profit)
}

/// Scans `server`'s whole price interval (the other price fixed at
/// `other_price`) and returns the utility-maximizing price.
///
/// Candidates are visited in ascending order and the first maximizer wins
/// ties; a degenerate interval returns its single point.
pub fn brute_force_best_response(
    server: Server,
    other_price: f64,
    devices: &[Device],
    params: &MarketParams,
    grid: &GridSpec,
) -> Result<(f64, f64), SolveError> {
    let (h, t) = price_bounds(params);
    let (interval, base) = match server {
        Server::Hash => (
            h,
            PriceVector {
                p_h: h.lo,
                p_t: other_price,
            },
        ),
        Server::Task => (
            t,
            PriceVector {
                p_h: other_price,
                p_t: t.lo,
            },
        ),
    };
    let probe = |price: f64| utility_probe(server, price, &base, devices, params);
    let mut best = (interval.lo, probe(interval.lo)?);
    if interval.width() == 0.0 {
        return Ok(best);
    }
    let mut step = grid.resolution * interval.width();
    let n = libm::floor(1.0 / grid.resolution + 1e-9) as i64;
    let scan = |candidates: &mut dyn Iterator<Item = f64>,
                best: &mut (f64, f64)|
     -> Result<(), SolveError> {
        for price in candidates {
            let u = probe(price)?;
            if u > best.1 {
                *best = (price, u);
            }
        }
        Ok(())
    };
    scan(
        &mut (1..=n).map(|k| interval.clamp(interval.lo + k as f64 * step)),
        &mut best,
    )?;
    for _ in 0..grid.refine_rounds {
        step /= 10.0;
        let center = best.0;
        scan(
            &mut (-100..=100)
                .map(|k| center + k as f64 * step)
                .filter(|p| interval.contains(*p)),
            &mut best,
        )?;
    }
    Ok(best)
}
