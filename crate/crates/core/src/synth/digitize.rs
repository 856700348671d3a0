use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::rng::{self, Stage};
use super::{DropPolicy, TdcModel};
use crate::device::fwhm_to_sigma;
use crate::error::{Error, Result};
use crate::tag::{first_unsorted, Event, TimeTag};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Digitized {
    pub tags: Vec<TimeTag>,
    /// Tags removed by the TDC rate cap.
    pub drops: u64,
}

/// Convert analog events to TDC tags.
///
/// Each event gets Gaussian detector jitter (`jitter_fwhm_ps[channel]`,
/// zero for channels past the end of the slice, e.g. the sync input) plus
/// Gaussian TDC jitter, is floored to whole ticks (negative times clamp to
/// tick 0) and re-sorted. The TDC rate cap is then enforced over a sliding
/// window according to the drop policy.
pub fn digitize(events: &[Event], tdc: &TdcModel, jitter_fwhm_ps: &[f64], seed: u64) -> Result<Digitized> {
    tdc.validate()?;
    if let Some(index) = first_unsorted(events) {
        return Err(Error::Unsorted { index });
    }
    let sigmas: Vec<f64> = jitter_fwhm_ps.iter().map(|f| fwhm_to_sigma(*f)).collect();
    let mut rngs: Vec<Option<ChaCha8Rng>> = Vec::new();
    let mut tags = Vec::with_capacity(events.len());
    for ev in events {
        let ch = ev.channel as usize;
        if ch >= rngs.len() {
            rngs.resize_with(ch + 1, || None);
        }
        let rng = rngs[ch].get_or_insert_with(|| rng::stream(seed, Stage::Jitter, ch as u64));
        let z_det: f64 = StandardNormal.sample(rng);
        let z_tdc: f64 = StandardNormal.sample(rng);
        let det_sigma = sigmas.get(ch).copied().unwrap_or(0.0);
        let t = ev.time_ps + det_sigma * z_det + tdc.rms_jitter_ps * z_tdc;
        tags.push(TimeTag::new(ev.channel, quantize(t, tdc.tick_ps)));
    }
    tags.sort_unstable();
    enforce_rate_cap(tags, tdc)
}

/// Floor a time to a whole number of ticks.
pub fn quantize(time_ps: f64, tick_ps: f64) -> u64 {
    if time_ps <= 0.0 {
        0
    } else {
        (time_ps / tick_ps).floor() as u64
    }
}

/// Admit a tag only if fewer than `tdc.tags_per_window()` tags were admitted
/// in the preceding window `(t - W, t]`.
pub fn enforce_rate_cap(tags: Vec<TimeTag>, tdc: &TdcModel) -> Result<Digitized> {
    let cap = tdc.tags_per_window() as usize;
    let window = tdc.window_ticks();
    if tags.len() <= cap {
        return Ok(Digitized { tags, drops: 0 });
    }
    let mut kept: Vec<TimeTag> = Vec::with_capacity(tags.len());
    let mut lo = 0usize;
    let mut drops = 0u64;
    for tag in tags {
        while lo < kept.len() && kept[lo].tick + window <= tag.tick {
            lo += 1;
        }
        if kept.len() - lo < cap {
            kept.push(tag);
        } else {
            match tdc.drop_policy {
                DropPolicy::DropNewest => drops += 1,
                DropPolicy::Error => {
                    return Err(Error::RateExceeded {
                        window_ps: tag.tick as f64 * tdc.tick_ps,
                        max_tags: cap as u64,
                    })
                }
            }
        }
    }
    Ok(Digitized { tags: kept, drops })
}
