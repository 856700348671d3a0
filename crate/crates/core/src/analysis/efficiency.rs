use std::collections::BTreeMap;

use log::warn;
use serde::{Deserialize, Serialize};

use super::CountSummary;
use crate::device::Polarization;
use crate::error::{Error, Result};
use crate::geometry::ArrayGeometry;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Efficiency {
    pub value: f64,
    /// The raw estimate fell outside [0, 1] and was clamped.
    pub clamped: bool,
}

/// Detection efficiency `(R_counts - R_dcr) / R_input`, clamped to [0, 1].
pub fn spde(count_rate: f64, dark_rate: f64, input_flux: f64) -> Result<Efficiency> {
    if !(input_flux > 0.0) {
        return Err(Error::domain(format!("input flux must be positive, got {input_flux}")));
    }
    let raw = (count_rate - dark_rate) / input_flux;
    let value = raw.clamp(0.0, 1.0);
    let clamped = value != raw;
    if clamped {
        warn!("efficiency estimate {raw:.6} clamped to {value}");
    }
    Ok(Efficiency { value, clamped })
}

/// System detection efficiency of the whole array: total array rate minus
/// total dark rate, over the input flux.
pub fn array_sde(total_rate: f64, dark_total_rate: f64, input_flux: f64) -> Result<Efficiency> {
    spde(total_rate, dark_total_rate, input_flux)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyResult {
    /// Row-major `rows x cols` matrix.
    pub per_pixel_spde: Vec<Vec<f64>>,
    pub mean: f64,
    /// Sample standard deviation across pixels.
    pub stddev: f64,
    pub polarization: Polarization,
    pub clamped_pixels: Vec<usize>,
}

impl EfficiencyResult {
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.per_pixel_spde.iter().flatten().copied()
    }

    pub fn min(&self) -> f64 {
        self.values().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Per-pixel SPDE map from one recording per focused-spot position.
///
/// `R_counts` is the total array count rate of each recording, so photons
/// spilling onto neighbouring pixels still count; `R_dcr` is the total array
/// rate of the dark recording.
pub fn spde_map(
    geometry: &ArrayGeometry,
    positions: &BTreeMap<usize, CountSummary>,
    dark: &CountSummary,
    input_flux: f64,
    polarization: Polarization,
) -> Result<EfficiencyResult> {
    let n = geometry.pixel_count();
    let missing: Vec<usize> = (0..n).filter(|p| !positions.contains_key(p)).collect();
    if !missing.is_empty() {
        return Err(Error::MissingRecordings(missing));
    }
    if let Some(bad) = positions.keys().find(|p| **p >= n) {
        return Err(Error::InvalidPixel { index: *bad, count: n });
    }
    let dark_rate = dark.total_rate();
    let mut matrix = vec![vec![0.0; geometry.cols]; geometry.rows];
    let mut clamped_pixels = Vec::new();
    for (&pixel, rec) in positions {
        let e = spde(rec.total_rate(), dark_rate, input_flux)?;
        if e.clamped {
            clamped_pixels.push(pixel);
        }
        let (r, c) = geometry.row_col(pixel)?;
        matrix[r][c] = e.value;
    }
    let values: Vec<f64> = matrix.iter().flatten().copied().collect();
    let (mean, stddev) = mean_std(&values);
    Ok(EfficiencyResult { per_pixel_spde: matrix, mean, stddev, polarization, clamped_pixels })
}

pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
