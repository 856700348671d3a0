//! Characterization analyses over time-tag streams.

mod bias;
mod counts;
mod efficiency;
mod heatmap;
mod interarrival;
mod jitter;
mod mcr;
mod stats;

pub use bias::{bias_sweep, BiasCurve, BiasCurvePoint, BiasPoint};
pub use counts::{CountSummary, Recording};
pub use efficiency::{array_sde, spde, spde_map, Efficiency, EfficiencyResult};
pub use heatmap::{heatmap, Heatmap};
pub use interarrival::{
    crosstalk_aggregate, crosstalk_bound, poisson_interarrival_prediction, CrosstalkConfig, CrosstalkResult,
};
pub use jitter::{jitter_fwhm, ChannelJitter, JitterConfig, JitterResult, SYNC_HISTORY};
pub use mcr::{log_sweep, mcr_3db, mcr_curve, McrPoint, McrResult};
pub use stats::{fwhm_from_histogram, ks_p_value, ks_statistic, poisson_upper_limit};
