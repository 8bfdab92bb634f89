#![cfg_attr(not(any(test, feature = "std")), no_std)]
#![deny(unsafe_code)]

//! Solver for the two-stage pricing game between a hash-power server, a
//! task-processing server and a set of budget-constrained IoT devices.
//!
//! The servers (leaders) post unit prices `(p_h, p_t)`. Every device
//! (follower) then splits its budget between mining hash power and task
//! resources to maximize its own profit. [`follower::fosd`] solves the
//! follower problem in closed form through its KKT case analysis, and
//! [`leader::fnes`] runs damped alternating best-response updates on the two
//! prices until neither server moves. [`oracle`] holds brute-force
//! references for both stages.
//!
//! The crate is `no_std` (it needs `alloc`). Enable the `std` feature to get
//! `std::error::Error` impls.

extern crate alloc;

pub mod error;
pub mod follower;
pub mod game;
pub mod leader;
pub mod oracle;

pub use error::{ParamError, SolveError};
pub use follower::{
    fosd, solve_all_followers, CaseRejection, FollowerSolution, KktCase, KktCertificate,
    KktResiduals,
};
pub use game::{
    device_profit, marginal_profit, mining_probability, price_bounds, server_utilities, Device,
    DeviceStrategy, Interval, MarketParams, PriceVector, ProfitBreakdown, ServerUtilities,
};
pub use leader::{
    fnes, utility_probe, verify_equilibrium, verify_prices, EquilibriumResult, IterationRecord,
    Server, SolverConfig, VerificationReport,
};
pub use oracle::{brute_force_best_response, brute_force_follower, GridSpec};

/// Numeric tolerances shared by the solvers.
pub mod tol {
    /// Dual feasibility and complementary slackness tolerance.
    pub const KKT: f64 = 1e-9;
    /// Slack for concavity and other numeric property probes.
    pub const NUMERIC: f64 = 1e-7;
    /// Budget overshoot allowed, relative to the device budget.
    pub const FEASIBILITY_REL: f64 = 1e-9;
    /// Relative tolerance for "price sits on its upper bound" tests.
    pub const BOUNDARY_REL: f64 = 1e-9;
    /// Stationarity residual scale; the bound is this times `max(1, p_h, p_t)`.
    pub const STATIONARITY_REL: f64 = 1e-6;
}
