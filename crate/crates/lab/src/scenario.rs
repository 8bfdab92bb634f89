//! Scenario files.
//!
//! A scenario is a TOML document with four optional sections. Anything left
//! out takes the reference value, so an empty file is the reference
//! convergence experiment.
//!
//! ```toml
//! [market]
//! H = 1000.0        # network hash power
//! R = 300.0         # block reward
//! N = 144.0         # blocks per day
//! alpha = 40.0
//! beta = 2.0
//! c_h = 10.0        # hash-server unit cost
//! c_t = 10.0        # task-server unit cost
//!
//! [[devices]]       # repeat per device; default s1..s5 with budgets 50..90
//! id = "s1"
//! budget = 50.0
//!
//! [solver]
//! delta0 = 1.0
//! decay = 0.99
//! init_p_h = 26.6   # both or neither; default is the interval midpoints
//! init_p_t = 45.0
//! max_iters = 10000
//! converge_eps = 1e-4
//!
//! [experiment]
//! kind = "sweep"    # or "convergence"
//! target = "R"      # R, c_h, c_t, alpha, beta or budget:<device id>
//! start = 200.0
//! stop = 400.0
//! step = 50.0
//! ```

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use edgeprice_core::{Device, MarketParams, PriceVector, SolverConfig};
use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("scenario parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(msg.into())
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[serde(default)]
    market: RawMarket,
    devices: Option<Vec<RawDevice>>,
    #[serde(default)]
    solver: RawSolver,
    #[serde(default)]
    experiment: RawExperiment,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMarket {
    #[serde(rename = "H")]
    hash_power: Option<f64>,
    #[serde(rename = "R")]
    reward: Option<f64>,
    #[serde(rename = "N")]
    blocks_per_day: Option<f64>,
    alpha: Option<f64>,
    beta: Option<f64>,
    c_h: Option<f64>,
    c_t: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDevice {
    id: String,
    budget: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    delta0: Option<f64>,
    decay: Option<f64>,
    init_p_h: Option<f64>,
    init_p_t: Option<f64>,
    max_iters: Option<usize>,
    converge_eps: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    kind: Option<String>,
    target: Option<String>,
    start: Option<f64>,
    stop: Option<f64>,
    step: Option<f64>,
}

/// The swept quantity of a sweep experiment.
#[derive(Debug, Clone, PartialEq)]
pub enum SweepTarget {
    Reward,
    CostHash,
    CostTask,
    Alpha,
    Beta,
    Budget(String),
}

impl SweepTarget {
    fn parse(s: &str) -> Result<Self, ScenarioError> {
        Ok(match s {
            "R" => Self::Reward,
            "c_h" => Self::CostHash,
            "c_t" => Self::CostTask,
            "alpha" => Self::Alpha,
            "beta" => Self::Beta,
            _ => match s.strip_prefix("budget:") {
                Some(id) if !id.is_empty() => Self::Budget(id.to_owned()),
                _ => return Err(invalid(format!(
                    "experiment.target `{s}` is not one of R, c_h, c_t, alpha, beta, budget:<id>"
                ))),
            },
        })
    }
}

impl fmt::Display for SweepTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Reward => f.write_str("R"),
            Self::CostHash => f.write_str("c_h"),
            Self::CostTask => f.write_str("c_t"),
            Self::Alpha => f.write_str("alpha"),
            Self::Beta => f.write_str("beta"),
            Self::Budget(id) => write!(f, "budget:{id}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub target: SweepTarget,
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl SweepSpec {
    /// `start, start + step, …` up to and including `stop` (within rounding).
    pub fn samples(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|k| self.start + k as f64 * self.step).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Experiment {
    Convergence,
    Sweep(SweepSpec),
}

/// Fully validated experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub market: MarketParams,
    pub devices: Vec<Device>,
    pub solver: SolverConfig,
    pub experiment: Experiment,
}

#[derive(Debug, Clone, Copy)]
struct MarketFields {
    h: f64,
    r: f64,
    n: f64,
    alpha: f64,
    beta: f64,
    c_h: f64,
    c_t: f64,
}

impl MarketFields {
    fn of(p: &MarketParams) -> Self {
        Self {
            h: p.hash_power(),
            r: p.reward(),
            n: p.blocks_per_day(),
            alpha: p.alpha(),
            beta: p.beta(),
            c_h: p.cost_hash(),
            c_t: p.cost_task(),
        }
    }

    fn build(&self) -> Result<MarketParams, ScenarioError> {
        MarketParams::new(
            self.h, self.r, self.n, self.alpha, self.beta, self.c_h, self.c_t,
        )
        .map_err(|e| invalid(format!("market: {e}")))
    }
}

impl Scenario {
    /// Reference market and devices, default solver, convergence run.
    pub fn reference() -> Self {
        Self {
            market: MarketParams::reference(),
            devices: Device::reference_set(),
            solver: SolverConfig::default(),
            experiment: Experiment::Convergence,
        }
    }

    /// Market and devices with the sweep target set to `value`.
    pub fn instance_at(&self, value: f64) -> Result<(MarketParams, Vec<Device>), ScenarioError> {
        let Experiment::Sweep(spec) = &self.experiment else {
            return Ok((self.market, self.devices.clone()));
        };
        let mut m = MarketFields::of(&self.market);
        let mut devices = self.devices.clone();
        match &spec.target {
            SweepTarget::Reward => m.r = value,
            SweepTarget::CostHash => m.c_h = value,
            SweepTarget::CostTask => m.c_t = value,
            SweepTarget::Alpha => m.alpha = value,
            SweepTarget::Beta => m.beta = value,
            SweepTarget::Budget(id) => {
                let slot = devices
                    .iter_mut()
                    .find(|d| &d.id == id)
                    .ok_or_else(|| invalid(format!("sweep target budget:{id} names no device")))?;
                *slot = Device::new(id.clone(), value)
                    .map_err(|e| invalid(format!("budget:{id} = {value}: {e}")))?;
            }
        }
        let market = m
            .build()
            .map_err(|e| invalid(format!("sweep {} = {value}: {e}", spec.target)))?;
        Ok((market, devices))
    }
}

/// Reads and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_scenario(&text)
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let raw: RawScenario = toml::from_str(text)?;
    let reference = Scenario::reference();
    let defaults = MarketFields::of(&reference.market);
    let m = &raw.market;
    let fields = MarketFields {
        h: m.hash_power.unwrap_or(defaults.h),
        r: m.reward.unwrap_or(defaults.r),
        n: m.blocks_per_day.unwrap_or(defaults.n),
        alpha: m.alpha.unwrap_or(defaults.alpha),
        beta: m.beta.unwrap_or(defaults.beta),
        c_h: m.c_h.unwrap_or(defaults.c_h),
        c_t: m.c_t.unwrap_or(defaults.c_t),
    };
    let market = fields.build()?;

    let devices = match raw.devices {
        None => reference.devices,
        Some(list) => {
            let mut seen = HashSet::new();
            let mut out = Vec::with_capacity(list.len());
            for (i, d) in list.into_iter().enumerate() {
                if !seen.insert(d.id.clone()) {
                    return Err(invalid(format!("devices[{i}]: duplicate id `{}`", d.id)));
                }
                out.push(
                    Device::new(d.id, d.budget)
                        .map_err(|e| invalid(format!("devices[{i}]: {e}")))?,
                );
            }
            out
        }
    };
    if devices.is_empty() {
        return Err(invalid("devices: at least one device is required"));
    }

    let s = &raw.solver;
    let base = SolverConfig::default();
    let init = match (s.init_p_h, s.init_p_t) {
        (Some(p_h), Some(p_t)) => Some(PriceVector { p_h, p_t }),
        (None, None) => None,
        _ => {
            return Err(invalid(
                "solver: init_p_h and init_p_t must be given together",
            ))
        }
    };
    let solver = SolverConfig {
        delta0: s.delta0.unwrap_or(base.delta0),
        decay: s.decay.unwrap_or(base.decay),
        init,
        max_iters: s.max_iters.unwrap_or(base.max_iters),
        converge_eps: s.converge_eps.unwrap_or(base.converge_eps),
    };

    let e = &raw.experiment;
    let experiment = match e.kind.as_deref().unwrap_or("convergence") {
        "convergence" => {
            if e.target.is_some() || e.start.is_some() || e.stop.is_some() || e.step.is_some() {
                return Err(invalid(
                    "experiment: sweep fields given for a convergence experiment",
                ));
            }
            Experiment::Convergence
        }
        "sweep" => {
            let need = |v: Option<f64>, name: &str| {
                v.ok_or_else(|| invalid(format!("experiment.{name} is required for a sweep")))
            };
            let target = SweepTarget::parse(
                e.target
                    .as_deref()
                    .ok_or_else(|| invalid("experiment.target is required for a sweep"))?,
            )?;
            let spec = SweepSpec {
                target,
                start: need(e.start, "start")?,
                stop: need(e.stop, "stop")?,
                step: need(e.step, "step")?,
            };
            if !(spec.step.is_finite() && spec.step > 0.0) {
                return Err(invalid(format!(
                    "experiment.step must be > 0, got {}",
                    spec.step
                )));
            }
            if !(spec.start.is_finite() && spec.stop.is_finite() && spec.start <= spec.stop) {
                return Err(invalid(format!(
                    "experiment: empty sweep interval [{}, {}]",
                    spec.start, spec.stop
                )));
            }
            Experiment::Sweep(spec)
        }
        other => {
            return Err(invalid(format!(
                "experiment.kind `{other}` is not `convergence` or `sweep`"
            )))
        }
    };

    let scenario = Scenario {
        market,
        devices,
        solver,
        experiment,
    };
    // Every instance the experiment will run must be valid, including the
    // solver's starting prices.
    let values = match &scenario.experiment {
        Experiment::Convergence => vec![f64::NAN],
        Experiment::Sweep(spec) => spec.samples(),
    };
    for v in values {
        let (market, _) = scenario.instance_at(v)?;
        scenario
            .solver
            .start(&market)
            .map_err(|err| invalid(format!("solver: {err}")))?;
    }
    Ok(scenario)
}
