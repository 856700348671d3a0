//! Shared fixtures for the throughput benchmarks.

use snspd_core::reproduce::flood;
use snspd_core::{simulate, Scenario, SimRun};

/// Flood the nominal array at `flux` photons/s for `duration_s`.
pub fn flood_run(flux: f64, duration_s: f64, seed: u64) -> SimRun {
    let s = flood(&Scenario::nominal(), flux);
    simulate(&s, duration_s, seed).expect("simulation succeeds")
}
