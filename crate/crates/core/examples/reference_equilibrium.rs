//! Prints the equilibrium of the reference market from both corner starts.

use edgeprice_core::{fnes, Device, MarketParams, PriceVector, SolverConfig};

fn main() {
    let params = MarketParams::reference();
    let devices = Device::reference_set();
    for init in [PriceVector::midpoint(&params), PriceVector::upper(&params)] {
        let config = SolverConfig::default().with_init(init);
        let r = fnes(&devices, &params, &config).expect("solver failed");
        let (sum_h, sum_t) = r.total_purchase();
        println!(
            "init ({:.1}, {:.1}): p = ({:.17}, {:.17}) u = ({:.17}, {:.17}) sums = ({sum_h:.12}, {sum_t:.12}) iters {} settle {}",
            init.p_h,
            init.p_t,
            r.prices.p_h,
            r.prices.p_t,
            r.utilities.u_h,
            r.utilities.u_t,
            r.iterations_used,
            r.settling_iteration_rel(0.01, &params),
        );
    }
}
