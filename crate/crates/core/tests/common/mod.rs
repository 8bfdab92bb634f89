#![allow(dead_code)]

use edgeprice_core::{Device, MarketParams, PriceVector};
use proptest::prelude::*;
use rand::Rng;

/// One follower problem drawn from the randomized test distribution.
#[derive(Debug, Clone)]
pub struct Instance {
    pub params: MarketParams,
    pub prices: PriceVector,
    pub device: Device,
}

/// `H ∈ [100, 5000]`, `R ∈ [50, 500]`, `N ∈ [10, 300]`, `α ∈ [1, 100]`,
/// `β ∈ [1, 10]`, costs a random fraction of their caps, prices uniform in
/// their intervals and budgets in `[1, 500]`.
pub fn instance_from(u: [f64; 10]) -> Instance {
    let lerp = |t: f64, lo: f64, hi: f64| lo + t * (hi - lo);
    let (h, r, n) = (
        lerp(u[0], 100.0, 5000.0),
        lerp(u[1], 50.0, 500.0),
        lerp(u[2], 10.0, 300.0),
    );
    let (alpha, beta) = (lerp(u[3], 1.0, 100.0), lerp(u[4], 1.0, 10.0));
    let cap_h = r * n / h;
    let cap_t = alpha * beta;
    let c_h = lerp(u[5], 0.05, 1.0) * cap_h;
    let c_t = lerp(u[6], 0.05, 1.0) * cap_t;
    let params = MarketParams::new(h, r, n, alpha, beta, c_h, c_t).unwrap();
    let prices = PriceVector::new(
        lerp(u[7], c_h, params.hash_price_cap()),
        lerp(u[8], c_t, params.task_price_cap()),
        &params,
    )
    .unwrap();
    let device = Device::new("rnd", lerp(u[9], 1.0, 500.0)).unwrap();
    Instance {
        params,
        prices,
        device,
    }
}

pub fn random_instance<R: Rng>(rng: &mut R) -> Instance {
    let mut u = [0.0; 10];
    for v in &mut u {
        *v = rng.gen::<f64>();
    }
    instance_from(u)
}

pub fn instance() -> impl Strategy<Value = Instance> {
    proptest::array::uniform10(0.0..1.0f64).prop_map(instance_from)
}
