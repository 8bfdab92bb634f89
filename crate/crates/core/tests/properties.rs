#![allow(clippy::excessive_precision)]

mod common;

use common::{instance, random_instance};
use edgeprice_core::follower::{evaluate_case, KktCase};
use edgeprice_core::oracle::{brute_force_follower, lipschitz_bound, GridSpec};
use edgeprice_core::{
    device_profit, fosd, marginal_profit, mining_probability, server_utilities, tol, Device,
    DeviceStrategy, MarketParams,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn total(x_h: f64, x_t: f64, inst: &common::Instance) -> f64 {
    device_profit(&DeviceStrategy { x_h, x_t }, &inst.prices, &inst.params).total
}

proptest! {
    #[test]
    fn mining_probability_increasing_and_concave(x in 0.0..1e5f64, h in 100.0..5000.0f64) {
        let p = MarketParams::new(h, 300.0, 144.0, 40.0, 2.0, 1e-3, 10.0).unwrap();
        let step = 1e-3 * (h + x);
        let f = |v: f64| mining_probability(v, &p).unwrap();
        prop_assert!(f(x + step) > f(x));
        if x >= step {
            let second = f(x + step) - 2.0 * f(x) + f(x - step);
            prop_assert!(second < 0.0);
        }
        prop_assert!((0.0..1.0).contains(&f(x)));
    }

    #[test]
    fn profit_is_concave(inst in instance(), a in (0.0..1.0f64, 0.0..1.0f64), b in (0.0..1.0f64, 0.0..1.0f64), theta in 0.01..0.99f64) {
        let max_h = inst.device.budget() / inst.prices.p_h;
        let max_t = inst.device.budget() / inst.prices.p_t;
        let (ah, at) = (a.0 * max_h, a.1 * max_t);
        let (bh, bt) = (b.0 * max_h, b.1 * max_t);
        let mid = total(theta * ah + (1.0 - theta) * bh, theta * at + (1.0 - theta) * bt, &inst);
        let chord = theta * total(ah, at, &inst) + (1.0 - theta) * total(bh, bt, &inst);
        prop_assert!(mid >= chord - tol::NUMERIC, "{mid} < {chord}");
    }

    #[test]
    fn marginal_profit_matches_central_differences(inst in instance(), fh in 0.01..1.0f64, ft in 0.01..1.0f64) {
        let p = &inst.params;
        let x = DeviceStrategy { x_h: fh * inst.device.budget() / inst.prices.p_h, x_t: ft * inst.device.budget() / inst.prices.p_t };
        let (d_h, d_t) = marginal_profit(&x, &inst.prices, p);
        let hh = (1e-4 * (p.hash_power() + x.x_h)).min(0.5 * x.x_h);
        let ht = (1e-4 / p.beta()).min(0.5 * x.x_t);
        let fd_h = (device_profit(&DeviceStrategy { x_h: x.x_h + hh, ..x }, &inst.prices, p).mining_profit
            - device_profit(&DeviceStrategy { x_h: x.x_h - hh, ..x }, &inst.prices, p).mining_profit)
            / (2.0 * hh);
        let fd_t = (device_profit(&DeviceStrategy { x_t: x.x_t + ht, ..x }, &inst.prices, p).task_profit
            - device_profit(&DeviceStrategy { x_t: x.x_t - ht, ..x }, &inst.prices, p).task_profit)
            / (2.0 * ht);
        let scale_h = d_h.abs().max(inst.prices.p_h);
        let scale_t = d_t.abs().max(inst.prices.p_t);
        prop_assert!((fd_h - d_h).abs() <= 1e-6 * scale_h, "hash {fd_h} vs {d_h}");
        prop_assert!((fd_t - d_t).abs() <= 1e-6 * scale_t, "task {fd_t} vs {d_t}");
    }

    #[test]
    fn utilities_scale_linearly(inst in instance(), xs in proptest::collection::vec((0.0..100.0f64, 0.0..100.0f64), 0..8)) {
        let one: Vec<_> = xs.iter().map(|&(h, t)| DeviceStrategy { x_h: h, x_t: t }).collect();
        let two: Vec<_> = one.iter().map(|s| DeviceStrategy { x_h: 2.0 * s.x_h, x_t: 2.0 * s.x_t }).collect();
        let u1 = server_utilities(&inst.prices, &one, &inst.params);
        let u2 = server_utilities(&inst.prices, &two, &inst.params);
        prop_assert_eq!(u2.u_h, 2.0 * u1.u_h);
        prop_assert_eq!(u2.u_t, 2.0 * u1.u_t);
    }

    #[test]
    fn fosd_is_kkt_certified(inst in instance()) {
        let s = fosd(&inst.device, &inst.prices, &inst.params, tol::BOUNDARY_REL).unwrap();
        prop_assert!(!s.degraded);
        let r = s.residuals(&inst.prices, inst.device.budget(), &inst.params);
        prop_assert!(r.is_certified(), "{:?} {:?}", s, r);
        prop_assert_eq!(s.profit, device_profit(&s.strategy, &inst.prices, &inst.params));
    }

    #[test]
    fn fosd_is_a_strict_local_maximum(inst in instance()) {
        let s = fosd(&inst.device, &inst.prices, &inst.params, tol::BOUNDARY_REL).unwrap();
        let x = s.strategy;
        let budget = inst.device.budget();
        let base = s.profit.total;
        // Sixteen directions plus the two along the budget line.
        let norm = inst.prices.p_h.hypot(inst.prices.p_t);
        let mut dirs: Vec<(f64, f64)> = (0..16)
            .map(|k| {
                let a = core::f64::consts::PI * f64::from(k) / 8.0;
                (a.cos(), a.sin())
            })
            .collect();
        dirs.push((inst.prices.p_t / norm, -inst.prices.p_h / norm));
        dirs.push((-inst.prices.p_t / norm, inst.prices.p_h / norm));
        for eps in [1e-3, 1e-2] {
            for &(dh, dt) in &dirs {
                let y = DeviceStrategy { x_h: x.x_h + eps * dh, x_t: x.x_t + eps * dt };
                if y.x_h < 0.0 || y.x_t < 0.0 || !y.is_affordable(&inst.prices, budget) {
                    continue;
                }
                let v = device_profit(&y, &inst.prices, &inst.params).total;
                prop_assert!(v < base, "eps {eps} dir ({dh}, {dt}): {v} >= {base}");
            }
        }
    }

    #[test]
    fn spend_monotone_in_budget(inst in instance(), grow in 1.0..4.0f64) {
        let small = fosd(&inst.device, &inst.prices, &inst.params, tol::BOUNDARY_REL).unwrap();
        let bigger = Device::new("big", inst.device.budget() * grow).unwrap();
        let large = fosd(&bigger, &inst.prices, &inst.params, tol::BOUNDARY_REL).unwrap();
        let s_small = small.strategy.spend(&inst.prices);
        let s_large = large.strategy.spend(&inst.prices);
        prop_assert!(s_large >= s_small * (1.0 - 1e-12));
        for (sol, b) in [(&small, inst.device.budget()), (&large, bigger.budget())] {
            if sol.certificate.lambda1 > tol::KKT {
                let spend = sol.strategy.spend(&inst.prices);
                prop_assert!((spend - b).abs() <= 1e-9 * b);
            }
        }
    }

    #[test]
    fn exactly_one_case_accepts_at_interior_prices(inst in instance()) {
        let accepted: Vec<KktCase> = KktCase::ALL
            .into_iter()
            .filter(|&c| evaluate_case(c, inst.device.budget(), &inst.prices, &inst.params, tol::BOUNDARY_REL).is_ok())
            .collect();
        prop_assert_eq!(accepted.len(), 1, "{:?}", accepted);
    }
}

#[test]
fn fosd_dominates_grid_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0dd5);
    let grid = GridSpec {
        resolution: 1e-2,
        refine_rounds: 1,
    };
    for _ in 0..200 {
        let inst = random_instance(&mut rng);
        let s = fosd(&inst.device, &inst.prices, &inst.params, tol::BOUNDARY_REL).unwrap();
        let (_, oracle) = brute_force_follower(&inst.device, &inst.prices, &inst.params, &grid);
        let bound = lipschitz_bound(&inst.prices, &inst.params)
            * grid.follower_step(inst.device.budget(), &inst.prices, 0);
        assert!(s.profit.total >= oracle - 1e-9 * (1.0 + oracle.abs()));
        assert!(s.profit.total - oracle <= bound, "{inst:?}");
    }
}

#[test]
fn refinement_shrinks_the_error_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..40 {
        let inst = random_instance(&mut rng);
        let s = fosd(&inst.device, &inst.prices, &inst.params, tol::BOUNDARY_REL).unwrap();
        let lip = lipschitz_bound(&inst.prices, &inst.params);
        for rounds in 0..=2 {
            let grid = GridSpec {
                resolution: 1e-2,
                refine_rounds: rounds,
            };
            let (_, oracle) = brute_force_follower(&inst.device, &inst.prices, &inst.params, &grid);
            let bound = lip * grid.follower_step(inst.device.budget(), &inst.prices, rounds);
            assert!(s.profit.total - oracle <= bound, "round {rounds}: {inst:?}");
        }
    }
}
