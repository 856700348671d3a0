use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Topology;

/// TDC tick: 15.625 ps, exactly 15625/1000.
pub const TICK_PS: f64 = 15.625;
pub const TICK_NUMERATOR: u32 = 15625;
pub const TICK_DENOMINATOR: u32 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropPolicy {
    #[default]
    DropNewest,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TdcModel {
    pub tick_ps: f64,
    pub rms_jitter_ps: f64,
    pub max_tag_rate_mcps: f64,
    /// Sliding window over which `max_tag_rate_mcps` is enforced.
    pub rate_window_ms: f64,
    pub drop_policy: DropPolicy,
}

impl Default for TdcModel {
    fn default() -> Self {
        Self {
            tick_ps: TICK_PS,
            rms_jitter_ps: 20.0,
            max_tag_rate_mcps: 900.0,
            rate_window_ms: 1.0,
            drop_policy: DropPolicy::DropNewest,
        }
    }
}

impl TdcModel {
    pub fn ideal() -> Self {
        Self { rms_jitter_ps: 0.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tick_ps > 0.0 && self.rms_jitter_ps >= 0.0 && self.max_tag_rate_mcps > 0.0) {
            return Err(Error::domain("TDC requires tick > 0, rms_jitter >= 0, max_tag_rate > 0"));
        }
        if !(self.rate_window_ms > 0.0) {
            return Err(Error::domain("TDC rate window must be positive"));
        }
        Ok(())
    }

    /// Most tags admitted in any one rate window.
    pub fn tags_per_window(&self) -> u64 {
        (self.max_tag_rate_mcps * 1e6 * self.rate_window_ms * 1e-3).floor() as u64
    }

    pub fn window_ticks(&self) -> u64 {
        (self.rate_window_ms * 1e9 / self.tick_ps).round() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrosstalkModel {
    pub probability: f64,
    pub delay_mean_ns: f64,
    pub delay_sigma_ns: f64,
    pub topology: Topology,
}

impl Default for CrosstalkModel {
    /// No crosstalk. Delay parameters are placeholders for a characteristic
    /// electrical/thermal timescale.
    fn default() -> Self {
        Self { probability: 0.0, delay_mean_ns: 2.0, delay_sigma_ns: 1.0, topology: Topology::FourNeighbor }
    }
}

impl CrosstalkModel {
    pub fn with_probability(probability: f64) -> Self {
        Self { probability, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.probability) {
            return Err(Error::domain("crosstalk probability must lie in [0, 1]"));
        }
        if !(self.delay_mean_ns >= 0.0 && self.delay_sigma_ns >= 0.0) {
            return Err(Error::domain("crosstalk delay mean and sigma must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SourceModel {
    Cw,
    Pulsed {
        rep_rate_mhz: f64,
        #[serde(default = "default_pulse_width")]
        pulse_width_ps: f64,
        sync_channel: u16,
        /// Delay from the sync epoch to the optical pulse at the array.
        #[serde(default = "default_optical_delay")]
        optical_delay_ps: f64,
    },
}

fn default_pulse_width() -> f64 {
    0.4
}

fn default_optical_delay() -> f64 {
    5_000.0
}

impl Default for SourceModel {
    fn default() -> Self {
        SourceModel::Cw
    }
}

impl SourceModel {
    pub fn pulsed(rep_rate_mhz: f64, sync_channel: u16) -> Self {
        SourceModel::Pulsed {
            rep_rate_mhz,
            pulse_width_ps: default_pulse_width(),
            sync_channel,
            optical_delay_ps: default_optical_delay(),
        }
    }

    pub fn sync_channel(&self) -> Option<u16> {
        match self {
            SourceModel::Cw => None,
            SourceModel::Pulsed { sync_channel, .. } => Some(*sync_channel),
        }
    }

    pub fn rep_period_ps(&self) -> Option<f64> {
        match self {
            SourceModel::Cw => None,
            SourceModel::Pulsed { rep_rate_mhz, .. } => Some(1e6 / rep_rate_mhz),
        }
    }

    pub fn validate(&self, pixel_count: usize) -> Result<()> {
        if let SourceModel::Pulsed { rep_rate_mhz, pulse_width_ps, sync_channel, optical_delay_ps } = self {
            if !(*rep_rate_mhz > 0.0) {
                return Err(Error::domain("pulsed source requires rep_rate_mhz > 0"));
            }
            if (*sync_channel as usize) < pixel_count || *sync_channel > 255 {
                return Err(Error::domain(format!(
                    "sync channel {sync_channel} must be distinct from detector channels 0..{pixel_count} and < 256"
                )));
            }
            if !(*pulse_width_ps >= 0.0 && *optical_delay_ps >= 0.0) {
                return Err(Error::domain("pulse width and optical delay must be non-negative"));
            }
        }
        Ok(())
    }
}
