use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::fwhm_from_histogram;
use crate::error::{Error, Result};
use crate::tag::TimeTag;

pub const SYNC_HISTORY: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JitterConfig {
    pub sync_channel: u16,
    pub rep_period_ps: f64,
    pub tick_ps: f64,
    /// Weights of the preceding syncs, oldest first.
    pub weights: [f64; SYNC_HISTORY],
}

impl JitterConfig {
    pub fn new(sync_channel: u16, rep_period_ps: f64, tick_ps: f64) -> Self {
        Self { sync_channel, rep_period_ps, tick_ps, weights: [1.0; SYNC_HISTORY] }
    }

    fn validate(&self) -> Result<()> {
        if !(self.rep_period_ps > 0.0 && self.tick_ps > 0.0) {
            return Err(Error::domain("rep period and tick must be positive"));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0)) || !(self.weights.iter().sum::<f64>() > 0.0) {
            return Err(Error::domain("sync weights must be non-negative with a positive sum"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelJitter {
    pub count: u64,
    /// `None` when the histogram has no resolvable half-maximum.
    pub fwhm_ps: Option<f64>,
    pub histogram: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JitterResult {
    pub channels: BTreeMap<u16, ChannelJitter>,
    pub bin_ps: f64,
    /// Detections seen before enough sync history had accumulated.
    pub skipped: u64,
    pub min_channel: Option<u16>,
    pub max_channel: Option<u16>,
}

impl JitterResult {
    pub fn fwhm(&self, channel: u16) -> Option<f64> {
        self.channels.get(&channel).and_then(|c| c.fwhm_ps)
    }

    /// Histogram summed over all detector channels.
    pub fn combined_histogram(&self) -> Vec<u64> {
        let mut out: Vec<u64> = Vec::new();
        for c in self.channels.values() {
            out.resize(out.len().max(c.histogram.len()), 0);
            out.iter_mut().zip(&c.histogram).for_each(|(a, b)| *a += b);
        }
        out
    }

    /// FWHM of [`Self::combined_histogram`]; meaningful when the channels
    /// share one delay.
    pub fn combined_fwhm(&self) -> Option<f64> {
        fwhm_from_histogram(&self.combined_histogram(), self.bin_ps)
    }
}

/// Timing histogram of each detector channel relative to the pulse train.
///
/// The reference for a detection is the weighted mean of the preceding
/// eight sync tags, each extrapolated forward to the latest sync epoch by
/// whole periods. Delays are folded modulo the period and binned at the
/// TDC tick.
pub fn jitter_fwhm(tags: impl IntoIterator<Item = TimeTag>, cfg: &JitterConfig) -> Result<JitterResult> {
    cfg.validate()?;
    let period = cfg.rep_period_ps;
    let n_bins = (period / cfg.tick_ps).ceil() as usize;
    let wsum: f64 = cfg.weights.iter().sum();
    let mut history: VecDeque<f64> = VecDeque::with_capacity(SYNC_HISTORY);
    let mut reference = None;
    let mut seen_sync = false;
    let mut skipped = 0u64;
    let mut channels: BTreeMap<u16, ChannelJitter> = BTreeMap::new();

    for tag in tags {
        let t = tag.tick as f64 * cfg.tick_ps;
        if tag.channel == cfg.sync_channel {
            seen_sync = true;
            if history.len() == SYNC_HISTORY {
                history.pop_front();
            }
            history.push_back(t);
            if history.len() == SYNC_HISTORY {
                let r = history
                    .iter()
                    .zip(&cfg.weights)
                    .enumerate()
                    .map(|(k, (s, w))| w * (s + (SYNC_HISTORY - 1 - k) as f64 * period))
                    .sum::<f64>()
                    / wsum;
                reference = Some(r);
            }
            continue;
        }
        let Some(r) = reference else {
            skipped += 1;
            continue;
        };
        let delta = (t - r).rem_euclid(period);
        let bin = ((delta / cfg.tick_ps) as usize).min(n_bins - 1);
        let entry = channels
            .entry(tag.channel)
            .or_insert_with(|| ChannelJitter { count: 0, fwhm_ps: None, histogram: vec![0; n_bins] });
        entry.count += 1;
        entry.histogram[bin] += 1;
    }
    if !seen_sync {
        return Err(Error::Degenerate(format!("no tags on sync channel {}", cfg.sync_channel)));
    }
    for c in channels.values_mut() {
        c.fwhm_ps = fwhm_from_histogram(&c.histogram, cfg.tick_ps);
    }
    let by_fwhm = || channels.iter().filter_map(|(ch, c)| c.fwhm_ps.map(|f| (*ch, f)));
    let min_channel = by_fwhm().min_by(|a, b| a.1.total_cmp(&b.1)).map(|x| x.0);
    let max_channel = by_fwhm().max_by(|a, b| a.1.total_cmp(&b.1)).map(|x| x.0);
    Ok(JitterResult { channels, bin_ps: cfg.tick_ps, skipped, min_channel, max_channel })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    const T: f64 = 50_000.0;
    const TICK: f64 = 15.625;

    fn train(pulses: usize, detect: impl Fn(usize) -> Option<f64>) -> Vec<TimeTag> {
        let mut tags = Vec::new();
        for k in 0..pulses {
            let s = k as f64 * T;
            tags.push(TimeTag::new(64, (s / TICK) as u64));
            if let Some(d) = detect(k) {
                tags.push(TimeTag::new(3, ((s + d) / TICK).floor() as u64));
            }
        }
        tags.sort();
        tags
    }

    #[test]
    fn ideal_detections_fall_in_one_bin() {
        let tags = train(1000, |_| Some(5_003.0));
        let r = jitter_fwhm(tags, &JitterConfig::new(64, T, TICK)).unwrap();
        // first detection precedes its own sync tick ordering only after 8 syncs
        assert_eq!(r.skipped, 7);
        let c = &r.channels[&3];
        assert_eq!(c.count, 993);
        assert_eq!(c.histogram.iter().sum::<u64>(), c.count);
        assert!(c.fwhm_ps.unwrap() <= TICK + 1e-9);
    }

    #[test]
    fn gaussian_delays_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sigma = 60.0;
        let n = Normal::new(5_000.0, sigma).unwrap();
        let delays: Vec<f64> = (0..200_000).map(|_| n.sample(&mut rng)).collect();
        let tags = train(200_000, |k| Some(delays[k]));
        let r = jitter_fwhm(tags, &JitterConfig::new(64, T, TICK)).unwrap();
        let f = r.fwhm(3).unwrap();
        let expected = 2.0 * (2.0 * 2f64.ln()).sqrt() * (sigma * sigma + TICK * TICK / 12.0).sqrt();
        assert!((f - expected).abs() < 5.0, "{f} vs {expected}");
    }

    #[test]
    fn wraps_across_period_boundary() {
        let tags = train(2000, |k| Some(if k % 2 == 0 { T - 10.0 } else { T + 10.0 }));
        let r = jitter_fwhm(tags, &JitterConfig::new(64, T, TICK)).unwrap();
        assert!(r.fwhm(3).unwrap() <= 3.0 * TICK);
    }

    #[test]
    fn missing_sync_is_an_error() {
        let tags = vec![TimeTag::new(3, 10), TimeTag::new(3, 20)];
        assert!(jitter_fwhm(tags, &JitterConfig::new(64, T, TICK)).is_err());
    }

    #[test]
    fn weights_shift_reference() {
        // a late final sync moves the uniform reference by 1/8 of its offset
        let mut tags = train(16, |_| None);
        let last = tags.last_mut().unwrap();
        let epoch = last.tick;
        last.tick += 64;
        tags.push(TimeTag::new(3, epoch + 320));
        let uniform = jitter_fwhm(tags.clone(), &JitterConfig::new(64, T, TICK)).unwrap();
        let mut newest = JitterConfig::new(64, T, TICK);
        newest.weights = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0];
        let only_last = jitter_fwhm(tags, &newest).unwrap();
        let peak = |r: &JitterResult| r.channels[&3].histogram.iter().position(|&c| c > 0).unwrap();
        assert_eq!(peak(&uniform), 320 - 8);
        assert_eq!(peak(&only_last), 320 - 64);
    }
}
