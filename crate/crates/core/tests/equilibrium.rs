#![allow(clippy::excessive_precision)]

use edgeprice_core::leader::DEFAULT_PROBE_EPS;
use edgeprice_core::oracle::{brute_force_best_response, brute_force_follower, GridSpec};
use edgeprice_core::{
    fnes, solve_all_followers, utility_probe, verify_equilibrium, Device, DeviceStrategy,
    MarketParams, PriceVector, Server, SolveError, SolverConfig,
};

/// Fixed point of the reference market, cross-checked below against the
/// brute-force best responses.
const P_H_STAR: f64 = 29.714_833;
const P_T_STAR: f64 = 23.513_184;

fn reference() -> (MarketParams, Vec<Device>) {
    (MarketParams::reference(), Device::reference_set())
}

#[test]
fn regression_fixed_point() {
    let (p, devices) = reference();
    let r = fnes(&devices, &p, &SolverConfig::default()).unwrap();
    assert!(r.converged);
    assert!((r.prices.p_h - P_H_STAR).abs() < 1e-5, "{:?}", r.prices);
    assert!((r.prices.p_t - P_T_STAR).abs() < 1e-5, "{:?}", r.prices);
    assert!((r.utilities.u_h - 179.608_997).abs() < 1e-4);
    assert!((r.utilities.u_t - 45.567_068).abs() < 1e-4);
    let recomputed =
        edgeprice_core::server_utilities(&r.prices, r.solutions.iter().map(|s| &s.strategy), &p);
    assert_eq!(recomputed, r.utilities);
    assert_eq!(r.trace.len(), r.iterations_used);
}

#[test]
fn fixed_point_is_a_mutual_grid_best_response() {
    let (p, devices) = reference();
    let grid = GridSpec::leader();
    let (bh, _) = brute_force_best_response(Server::Hash, P_T_STAR, &devices, &p, &grid).unwrap();
    let (bt, _) = brute_force_best_response(Server::Task, P_H_STAR, &devices, &p, &grid).unwrap();
    let step_h = grid.final_resolution() * (p.hash_price_cap() - p.cost_hash());
    let step_t = grid.final_resolution() * (p.task_price_cap() - p.cost_task());
    assert!((bh - P_H_STAR).abs() <= step_h, "{bh}");
    assert!((bt - P_T_STAR).abs() <= step_t, "{bt}");
}

#[test]
fn initialization_independence() {
    let (p, devices) = reference();
    let inits = [
        (26.6, 45.0),
        (43.2, 80.0),
        (10.0, 10.0),
        (43.2, 10.0),
        (10.0, 80.0),
        (35.0, 60.0),
    ];
    for (ph, pt) in inits {
        let config = SolverConfig::default().with_init(PriceVector::new(ph, pt, &p).unwrap());
        let r = fnes(&devices, &p, &config).unwrap();
        assert!(r.converged);
        assert!(
            (r.prices.p_h - P_H_STAR).abs() < 1e-2,
            "init ({ph}, {pt}) -> {:?}",
            r.prices
        );
        assert!(
            (r.prices.p_t - P_T_STAR).abs() < 1e-2,
            "init ({ph}, {pt}) -> {:?}",
            r.prices
        );
    }
}

#[test]
fn trace_respects_bounds_and_step_schedule() {
    let (p, devices) = reference();
    let config = SolverConfig::default().with_init(PriceVector::upper(&p));
    let r = fnes(&devices, &p, &config).unwrap();
    let (h, t) = edgeprice_core::price_bounds(&p);
    let mut delta = config.delta0;
    for (k, rec) in r.trace.iter().enumerate() {
        assert_eq!(rec.iteration, k + 1);
        assert!(h.contains(rec.p_h) && t.contains(rec.p_t));
        assert_eq!(rec.delta.to_bits(), delta.to_bits());
        delta *= config.decay;
    }
}

#[test]
fn deterministic_traces() {
    let (p, devices) = reference();
    let a = fnes(&devices, &p, &SolverConfig::default()).unwrap();
    let b = fnes(&devices, &p, &SolverConfig::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn restart_at_fixed_point_stops_immediately() {
    let (p, devices) = reference();
    let first = fnes(&devices, &p, &SolverConfig::default()).unwrap();
    let last_delta = first.trace.last().unwrap().delta;
    let config = SolverConfig {
        init: Some(first.prices),
        delta0: last_delta,
        ..SolverConfig::default()
    };
    let again = fnes(&devices, &p, &config).unwrap();
    assert!(again.converged);
    assert_eq!(again.iterations_used, 1);
    assert_eq!(again.prices, first.prices);
}

#[test]
fn vanishing_budget_gives_vanishing_utilities() {
    let p = MarketParams::reference();
    let devices = [Device::new("tiny", 1e-9).unwrap()];
    let r = fnes(&devices, &p, &SolverConfig::default()).unwrap();
    assert!(
        r.utilities.u_h.abs() < 1e-8 && r.utilities.u_t.abs() < 1e-8,
        "{:?}",
        r.utilities
    );
}

#[test]
fn verify_accepts_fixed_point_and_rejects_tampering() {
    let (p, devices) = reference();
    let mut r = fnes(&devices, &p, &SolverConfig::default()).unwrap();
    let report = verify_equilibrium(&r, &devices, &p, &DEFAULT_PROBE_EPS).unwrap();
    assert!(report.passed(), "{report:?}");
    assert_eq!(report.deviations.len(), 16);
    assert_eq!(report.certificates.len(), 5);

    r.solutions[2].strategy.x_t *= 1.01;
    let report = verify_equilibrium(&r, &devices, &p, &DEFAULT_PROBE_EPS).unwrap();
    assert!(!report.passed());
    assert!(!report.certificates[2].certified);

    r.converged = false;
    assert!(matches!(
        verify_equilibrium(&r, &devices, &p, &DEFAULT_PROBE_EPS),
        Err(SolveError::NotConverged { .. })
    ));
}

#[test]
fn utilities_unimodal_in_own_price() {
    let (p, devices) = reference();
    for other in [10.0, 23.5, 45.0, 79.0] {
        check_unimodal(
            Server::Hash,
            PriceVector {
                p_h: 10.0,
                p_t: other,
            },
            &devices,
            &p,
        );
    }
    for other in [10.0, 29.7, 43.2] {
        check_unimodal(
            Server::Task,
            PriceVector {
                p_h: other,
                p_t: 10.0,
            },
            &devices,
            &p,
        );
    }
}

fn check_unimodal(server: Server, at: PriceVector, devices: &[Device], p: &MarketParams) {
    let (h, t) = edgeprice_core::price_bounds(p);
    let interval = if server == Server::Hash { h } else { t };
    let values: Vec<f64> = (0..100)
        .map(|k| {
            let price = interval.lo + interval.width() * f64::from(k) / 99.0;
            utility_probe(server, price, &at, devices, p).unwrap()
        })
        .collect();
    for k in 1..values.len() - 1 {
        let strict_min = values[k] < values[k - 1] - 1e-9 && values[k] < values[k + 1] - 1e-9;
        assert!(
            !strict_min,
            "{server:?} interior local minimum at sample {k}: {values:?}"
        );
    }
}

#[test]
fn batch_sums_match_oracle() {
    let (p, devices) = reference();
    let prices = PriceVector::new(26.6, 45.0, &p).unwrap();
    let sols = solve_all_followers(&devices, &prices, &p).unwrap();
    let (mut oh, mut ot) = (0.0, 0.0);
    for d in &devices {
        let (x, _): (DeviceStrategy, f64) =
            brute_force_follower(d, &prices, &p, &GridSpec::follower());
        oh += x.x_h;
        ot += x.x_t;
    }
    let sh: f64 = sols.iter().map(|s| s.strategy.x_h).sum();
    let st: f64 = sols.iter().map(|s| s.strategy.x_t).sum();
    assert!((sh - oh).abs() < 5e-3, "{sh} vs {oh}");
    assert!((st - ot).abs() < 5e-3, "{st} vs {ot}");
    // 50-digit closed-form sums.
    assert!((sh - 12.733_975_646_783_891).abs() < 1e-9);
    assert!((st - 0.250_583_284_345_522_01).abs() < 1e-12);
}
