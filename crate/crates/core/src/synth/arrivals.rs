use log::warn;
use rand::Rng;
use rand_distr::{Distribution, Exp, Geometric, Normal};
use rayon::prelude::*;

use super::rng::{self, Stage};
use super::SourceModel;
use crate::device::fwhm_to_sigma;
use crate::error::{Error, Result};
use crate::scenario::Scenario;

/// Per-pulse detection probabilities above this are flagged: the
/// single-detection-per-pulse approximation starts to break down.
pub const PULSED_PROBABILITY_WARN: f64 = 0.1;

/// Continuous-time detections (ps, sorted) for every pixel, plus the laser
/// sync epochs in pulsed mode.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Arrivals {
    pub per_pixel: Vec<Vec<f64>>,
    pub sync: Vec<f64>,
    pub sync_channel: Option<u16>,
    pub warnings: Vec<String>,
}

/// Homogeneous Poisson process on `[0, duration_ps)`.
pub fn poisson_times<R: Rng>(rate_cps: f64, duration_ps: f64, rng: &mut R) -> Vec<f64> {
    if !(rate_cps > 0.0) {
        return Vec::new();
    }
    let rate_per_ps = rate_cps * 1e-12;
    let expected = rate_per_ps * duration_ps;
    let mut out = Vec::with_capacity((expected + 4.0 * expected.sqrt() + 8.0) as usize);
    let exp = Exp::new(rate_per_ps).expect("positive rate");
    let mut t = 0.0;
    loop {
        t += exp.sample(rng);
        if t >= duration_ps {
            return out;
        }
        out.push(t);
    }
}

/// Draw detection times for every pixel.
///
/// CW sources give a Poisson process at the pixel's expected photon plus dark
/// rate. Pulsed sources detect on each pulse independently with probability
/// `photon_rate / rep_rate`, with Poisson darks on top.
pub fn generate_arrivals(scenario: &Scenario, duration_s: f64, seed: u64) -> Result<Arrivals> {
    if !(duration_s > 0.0) || !duration_s.is_finite() {
        return Err(Error::domain(format!("duration must be positive, got {duration_s}")));
    }
    let duration_ps = duration_s * 1e12;
    let photon = scenario.photon_rates()?;
    let dark = scenario.dark_rates()?;

    match scenario.source {
        SourceModel::Cw => {
            let per_pixel = (0..scenario.pixel_count())
                .into_par_iter()
                .map(|p| {
                    let mut rng = rng::stream(seed, Stage::Photons, p as u64);
                    poisson_times(photon[p] + dark[p], duration_ps, &mut rng)
                })
                .collect();
            Ok(Arrivals { per_pixel, ..Default::default() })
        }
        SourceModel::Pulsed { rep_rate_mhz, pulse_width_ps, sync_channel, optical_delay_ps } => {
            let period_ps = 1e6 / rep_rate_mhz;
            let rep_hz = rep_rate_mhz * 1e6;
            let mut warnings = Vec::new();
            for (p, r) in photon.iter().enumerate() {
                let prob = r / rep_hz;
                if prob > 1.0 {
                    return Err(Error::domain(format!(
                        "pixel {p}: per-pulse detection probability {prob:.3} exceeds 1"
                    )));
                }
                if prob > PULSED_PROBABILITY_WARN {
                    let msg = format!("pixel {p}: per-pulse detection probability {prob:.3} > {PULSED_PROBABILITY_WARN}");
                    warn!("{msg}");
                    warnings.push(msg);
                }
            }
            let pulses = (duration_ps / period_ps).ceil() as u64;
            let sync: Vec<f64> = (0..pulses).map(|k| k as f64 * period_ps).filter(|t| *t < duration_ps).collect();
            let pulse_sigma = fwhm_to_sigma(pulse_width_ps);

            let per_pixel = (0..scenario.pixel_count())
                .into_par_iter()
                .map(|p| {
                    let prob = photon[p] / rep_hz;
                    let mut rng = rng::stream(seed, Stage::Photons, p as u64);
                    let mut hits = Vec::new();
                    if prob > 0.0 {
                        let skip = Geometric::new(prob).expect("probability in (0, 1]");
                        let shape = Normal::new(0.0, pulse_sigma).expect("finite sigma");
                        let mut k: u64 = 0;
                        loop {
                            k = match k.checked_add(skip.sample(&mut rng)) {
                                Some(k) if k < pulses => k,
                                _ => break,
                            };
                            let t = k as f64 * period_ps + optical_delay_ps + shape.sample(&mut rng);
                            if t >= duration_ps {
                                break;
                            }
                            hits.push(t.max(0.0));
                            k += 1;
                        }
                    }
                    let mut rng = rng::stream(seed, Stage::Darks, p as u64);
                    let darks = poisson_times(dark[p], duration_ps, &mut rng);
                    merge_sorted_f64(&hits, &darks)
                })
                .collect();
            Ok(Arrivals { per_pixel, sync, sync_channel: Some(sync_channel), warnings })
        }
    }
}

pub(crate) fn merge_sorted_f64(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}
