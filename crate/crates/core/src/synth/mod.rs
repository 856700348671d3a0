//! Deterministic time-tag stream synthesis.

mod arrivals;
mod crosstalk;
mod deadtime;
mod digitize;
mod merge;
mod models;
mod pipeline;
mod rng;

pub use arrivals::{generate_arrivals, poisson_times, Arrivals, PULSED_PROBABILITY_WARN};
pub use crosstalk::{inject_crosstalk, Crosstalked};
pub use deadtime::apply_dead_time;
pub use digitize::{digitize, enforce_rate_cap, quantize, Digitized};
pub use merge::{kway_merge, merge_streams};
pub use models::{
    CrosstalkModel, DropPolicy, SourceModel, TdcModel, TICK_DENOMINATOR, TICK_NUMERATOR, TICK_PS,
};
pub use pipeline::{simulate, SimRun};
