use serde::{Deserialize, Serialize};

use super::poisson_upper_limit;
use crate::error::{Error, Result};
use crate::tag::TimeTag;

/// Expected first-arrival counts per bin for an independent Poisson channel
/// of rate `rate_b`: `n_pairs * (exp(-l t_k) - exp(-l t_{k+1}))`.
pub fn poisson_interarrival_prediction(rate_b: f64, bin_ns: f64, n_bins: usize, n_pairs: u64) -> Vec<f64> {
    let l = rate_b * bin_ns * 1e-9;
    (0..n_bins)
        .map(|k| n_pairs as f64 * ((-l * k as f64).exp() - (-l * (k + 1) as f64).exp()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrosstalkConfig {
    pub bin_ns: f64,
    pub n_bins: usize,
    /// Minimum number of source-channel events.
    pub min_counts: u64,
    /// Acquisition duration used for target rates; the stream span otherwise.
    pub duration_s: Option<f64>,
    pub tick_ps: f64,
    pub confidence: f64,
}

impl Default for CrosstalkConfig {
    fn default() -> Self {
        Self { bin_ns: 10.0, n_bins: 100, min_counts: 10_000, duration_s: None, tick_ps: crate::synth::TICK_PS, confidence: 0.95 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrosstalkResult {
    pub source: u16,
    pub targets: Vec<u16>,
    pub bin_ns: f64,
    /// Delays from each source event to the next event on a target.
    pub histogram: Vec<u64>,
    pub prediction: Vec<f64>,
    pub n_a: u64,
    pub n_pairs: u64,
    /// Target rates in cps, in `targets` order.
    pub rate_b: Vec<f64>,
    /// First-bin excess per source event, summed over targets.
    pub excess_fraction: Option<f64>,
    /// One-sided Poisson upper limit on `excess_fraction`.
    pub upper_bound_95: Option<f64>,
    pub flagged: Option<String>,
}

impl CrosstalkResult {
    /// Histogram and prediction as fractions of source events.
    pub fn normalized(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.n_a.max(1) as f64;
        (self.histogram.iter().map(|&c| c as f64 / n).collect(), self.prediction.iter().map(|&p| p / n).collect())
    }
}

/// Correlation between channel `a` and the next event on channel `b`.
pub fn crosstalk_bound(
    tags: impl IntoIterator<Item = TimeTag>,
    a: u16,
    b: u16,
    cfg: &CrosstalkConfig,
) -> Result<CrosstalkResult> {
    crosstalk_aggregate(tags, a, &[b], cfg)
}

/// Crosstalk from `source` onto a set of targets, with first-bin counts and
/// predictions summed over targets. Summing over all neighbours of the
/// source estimates its total induced-event probability.
pub fn crosstalk_aggregate(
    tags: impl IntoIterator<Item = TimeTag>,
    source: u16,
    targets: &[u16],
    cfg: &CrosstalkConfig,
) -> Result<CrosstalkResult> {
    if targets.is_empty() || targets.contains(&source) {
        return Err(Error::domain("crosstalk targets must be non-empty and exclude the source"));
    }
    if !(cfg.bin_ns > 0.0 && cfg.n_bins > 0 && cfg.tick_ps > 0.0) || !(0.0..1.0).contains(&cfg.confidence) {
        return Err(Error::domain("crosstalk histogram needs positive bin width, bin count and tick"));
    }
    let bin_ticks = cfg.bin_ns * 1e3 / cfg.tick_ps;
    let window = bin_ticks * cfg.n_bins as f64;
    let mut slot = [usize::MAX; 256];
    for (j, &t) in targets.iter().enumerate() {
        slot[t as usize] = j;
    }
    let mut pending: Vec<Vec<u64>> = vec![Vec::new(); targets.len()];
    let mut counts_b = vec![0u64; targets.len()];
    let mut pairs = vec![0u64; targets.len()];
    let mut histogram = vec![0u64; cfg.n_bins];
    let mut n_a = 0u64;
    let mut first = None;
    let mut last = 0u64;

    for tag in tags {
        first.get_or_insert(tag.tick);
        last = tag.tick;
        if tag.channel == source {
            n_a += 1;
            for p in &mut pending {
                p.push(tag.tick);
            }
            continue;
        }
        let j = match slot.get(tag.channel as usize) {
            Some(&j) if j != usize::MAX => j,
            _ => continue,
        };
        counts_b[j] += 1;
        pairs[j] += pending[j].len() as u64;
        for &ta in &pending[j] {
            let d = (tag.tick - ta) as f64;
            if d < window {
                histogram[(d / bin_ticks) as usize] += 1;
            }
        }
        pending[j].clear();
    }

    if n_a < cfg.min_counts {
        return Err(Error::InsufficientCounts { channel: source, found: n_a, required: cfg.min_counts });
    }
    let duration_s = match cfg.duration_s {
        Some(d) if d > 0.0 => d,
        Some(d) => return Err(Error::domain(format!("duration must be positive, got {d}"))),
        None => (last - first.unwrap_or(0)) as f64 * cfg.tick_ps * 1e-12,
    };
    let rate_b: Vec<f64> = counts_b.iter().map(|&c| if duration_s > 0.0 { c as f64 / duration_s } else { 0.0 }).collect();
    let n_pairs: u64 = pairs.iter().sum();

    let mut prediction = vec![0.0; cfg.n_bins];
    for (j, &r) in rate_b.iter().enumerate() {
        if r > 0.0 {
            let p = poisson_interarrival_prediction(r, cfg.bin_ns, cfg.n_bins, pairs[j]);
            prediction.iter_mut().zip(p).for_each(|(acc, v)| *acc += v);
        }
    }

    let silent: Vec<u16> = targets.iter().zip(&rate_b).filter(|(_, r)| **r == 0.0).map(|(t, _)| *t).collect();
    let (excess_fraction, upper_bound_95, flagged) = if !silent.is_empty() {
        (None, None, Some(format!("no events on target channel(s) {silent:?}; bound undefined")))
    } else {
        let observed = histogram[0];
        let excess = (observed as f64 - prediction[0]) / n_a as f64;
        let ul = ((poisson_upper_limit(observed, cfg.confidence) - prediction[0]) / n_a as f64).max(0.0);
        (Some(excess), Some(ul), None)
    };

    Ok(CrosstalkResult {
        source,
        targets: targets.to_vec(),
        bin_ns: cfg.bin_ns,
        histogram,
        prediction,
        n_a,
        n_pairs,
        rate_b,
        excess_fraction,
        upper_bound_95,
        flagged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::poisson_times;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const TICK: f64 = 15.625;

    fn to_tags(ch: u16, ps: &[f64]) -> Vec<TimeTag> {
        ps.iter().map(|&t| TimeTag::new(ch, (t / TICK) as u64)).collect()
    }

    fn independent(rate: f64, seconds: f64, seed: u64) -> Vec<TimeTag> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = poisson_times(rate, seconds * 1e12, &mut rng);
        let b = poisson_times(rate, seconds * 1e12, &mut rng);
        let mut tags = to_tags(0, &a);
        tags.extend(to_tags(1, &b));
        tags.sort();
        tags
    }

    #[test]
    fn small_rate_first_bin() {
        let p = poisson_interarrival_prediction(1e4, 10.0, 1, 1);
        assert!((p[0] - 1e-4).abs() < 1e-8);
    }

    #[test]
    fn prediction_normalization() {
        let short: f64 = poisson_interarrival_prediction(1e6, 10.0, 10, 1000).iter().sum();
        assert!(short <= 1000.0);
        let long: f64 = poisson_interarrival_prediction(1e6, 10.0, 100_000, 1000).iter().sum();
        assert!((long - 1000.0).abs() < 1e-6);
    }

    #[test]
    fn independent_channels_follow_prediction() {
        let cfg = CrosstalkConfig { duration_s: Some(2.0), ..Default::default() };
        let r = crosstalk_bound(independent(2e5, 2.0, 4), 0, 1, &cfg).unwrap();
        let inside = r
            .histogram
            .iter()
            .zip(&r.prediction)
            .filter(|(&o, &p)| (o as f64 - p).abs() <= 3.0 * p.sqrt().max(1.0))
            .count();
        assert!(inside >= 99, "{inside}");
        assert!(r.excess_fraction.unwrap().abs() < 3.0 * (r.prediction[0].sqrt() / r.n_a as f64));
    }

    #[test]
    fn injected_correlation_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = poisson_times(1e4, 10.0 * 1e12, &mut rng);
        let b: Vec<f64> = a.iter().filter(|_| rng.gen::<f64>() < 0.01).map(|t| t + 2_000.0).collect();
        let mut tags = to_tags(0, &a);
        tags.extend(to_tags(1, &b));
        tags.sort();
        let cfg = CrosstalkConfig { duration_s: Some(10.0), ..Default::default() };
        let r = crosstalk_bound(tags, 0, 1, &cfg).unwrap();
        assert!((r.excess_fraction.unwrap() - 0.01).abs() < 0.002);
        assert!(r.upper_bound_95.unwrap() >= r.excess_fraction.unwrap());
    }

    #[test]
    fn silent_target_is_flagged() {
        let tags = to_tags(0, &(0..20_000).map(|i| i as f64 * 1e6).collect::<Vec<_>>());
        let r = crosstalk_bound(tags, 0, 5, &CrosstalkConfig::default()).unwrap();
        assert!(r.flagged.is_some());
        assert!(r.histogram.iter().all(|&c| c == 0));
        assert_eq!(r.upper_bound_95, None);
    }

    #[test]
    fn too_few_source_events() {
        let tags = independent(1e3, 1.0, 1);
        match crosstalk_bound(tags, 0, 1, &CrosstalkConfig::default()) {
            Err(Error::InsufficientCounts { required, .. }) => assert_eq!(required, 10_000),
            other => panic!("{other:?}"),
        }
    }
}
