use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McrPoint {
    pub input_rate: f64,
    pub measured_rate: f64,
    /// `measured / input`, normalized to the lowest-input point.
    pub efficiency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McrResult {
    pub points: Vec<McrPoint>,
    pub mcr_3db_cps: f64,
}

/// Normalized efficiency curve and its 3-dB crossing.
///
/// The lowest-input point defines the plateau, so sweeps should start well
/// below saturation. The crossing is located in log-log space between the
/// bracketing points and reported as the measured rate there.
pub fn mcr_curve(points: &[(f64, f64)]) -> Result<McrResult> {
    if points.len() < 4 {
        return Err(Error::domain(format!("need at least 4 rate points, got {}", points.len())));
    }
    if points.iter().any(|&(i, m)| !(i > 0.0 && m > 0.0 && i.is_finite() && m.is_finite())) {
        return Err(Error::domain("input and measured rates must be positive"));
    }
    if points.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(Error::domain("input rates must be strictly increasing"));
    }
    let plateau = points[0].1 / points[0].0;
    let curve: Vec<McrPoint> = points
        .iter()
        .map(|&(i, m)| McrPoint { input_rate: i, measured_rate: m, efficiency: m / i / plateau })
        .collect();
    let k = curve.windows(2).position(|w| w[0].efficiency >= 0.5 && w[1].efficiency < 0.5).ok_or(Error::NotBracketed)?;
    let (a, b) = (curve[k], curve[k + 1]);
    let t = (0.5f64.ln() - a.efficiency.ln()) / (b.efficiency.ln() - a.efficiency.ln());
    let mcr = (a.measured_rate.ln() + t * (b.measured_rate.ln() - a.measured_rate.ln())).exp();
    Ok(McrResult { points: curve, mcr_3db_cps: mcr })
}

/// Measured rate at the 3-dB compression point.
pub fn mcr_3db(points: &[(f64, f64)]) -> Result<f64> {
    mcr_curve(points).map(|r| r.mcr_3db_cps)
}

/// Log-spaced input rates, `per_decade` per decade from `start` to `stop`.
pub fn log_sweep(start: f64, stop: f64, per_decade: usize) -> Vec<f64> {
    let n = ((stop / start).log10() * per_decade as f64).round() as usize;
    (0..=n).map(|k| start * 10f64.powf(k as f64 / per_decade as f64)).collect()
}
