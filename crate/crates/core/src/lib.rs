//! Online EV charging-station operation in two stages.
//!
//! Stage 1 characterizes the aggregate charging-power flexibility band of the
//! parked fleet with Lyapunov charging queues (one pair per charging-delay
//! group). Stage 2 dispatches the aggregate EV power inside that band, splits
//! it between on-site renewables and grid purchases, and trades carbon quota
//! through a virtual carbon queue so the footprint stays under the quota.
//!
//! The crate also carries the comparison policies (charge-first, offline
//! flexibility LP, myopic cost minimizer, offline cost LP), a dense simplex
//! solver for the offline programs, and the disaggregation that maps any
//! aggregate dispatch back to per-EV charging profiles.

pub mod benchmarks;
pub mod cli;
pub mod disaggregate;
pub mod engine;
pub mod error;
pub mod fleet;
pub mod lpsolve;
pub mod scenario;
pub mod stage1;
pub mod stage2;

pub use engine::{run_two_stage, DispatchMode, EngineOptions, RunOutcome};
pub use stage2::HUpdate;
pub use error::{Error, Result};
pub use scenario::{ChargingTask, PriceSeries, Scenario, SyntheticConfig, TimeGrid};

/// Absolute tolerance used when comparing energies and powers.
pub const EPS: f64 = 1e-9;
