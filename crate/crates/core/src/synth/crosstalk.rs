use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::deadtime::apply_dead_time_flagged;
use super::rng::{self, Stage};
use super::CrosstalkModel;
use crate::error::{Error, Result};
use crate::geometry::ArrayGeometry;
use crate::tag::first_unsorted;

#[derive(Debug, Clone, PartialEq)]
pub struct Crosstalked {
    pub per_pixel: Vec<Vec<f64>>,
    /// Induced events drawn, before the victims' dead-time filter.
    pub spawned: u64,
    /// Induced events that survived the victims' dead-time filter.
    pub surviving: u64,
}

/// Spawn crosstalk events on neighbouring pixels.
///
/// Each input event independently, with `model.probability`, induces one
/// event on a uniformly chosen neighbour after a delay drawn from a normal
/// distribution truncated at zero. Induced events do not themselves spawn.
/// Each victim's merged stream is re-filtered with its dead time, so an
/// induced event can both be lost and blank later photon events.
pub fn inject_crosstalk(
    per_pixel: Vec<Vec<f64>>,
    model: &CrosstalkModel,
    geometry: &ArrayGeometry,
    dead_times_ns: &[f64],
    seed: u64,
) -> Result<Crosstalked> {
    model.validate()?;
    if per_pixel.len() != geometry.pixel_count() || dead_times_ns.len() != per_pixel.len() {
        return Err(Error::domain("crosstalk: per-pixel inputs must match the geometry"));
    }
    for events in &per_pixel {
        if let Some(index) = first_unsorted(events) {
            return Err(Error::Unsorted { index });
        }
    }
    if model.probability == 0.0 {
        return Ok(Crosstalked { per_pixel, spawned: 0, surviving: 0 });
    }

    let delay = DelayDist::new(model.delay_mean_ns * 1e3, model.delay_sigma_ns * 1e3);
    let mut induced: Vec<Vec<f64>> = vec![Vec::new(); per_pixel.len()];
    let mut spawned = 0u64;
    for (src, events) in per_pixel.iter().enumerate() {
        let neighbors = geometry.neighbors(src, model.topology)?;
        if neighbors.is_empty() {
            continue;
        }
        let mut rng = rng::stream(seed, Stage::Crosstalk, src as u64);
        for &t in events {
            if rng.gen::<f64>() < model.probability {
                let victim = neighbors[rng.gen_range(0..neighbors.len())];
                induced[victim].push(t + delay.sample(&mut rng));
                spawned += 1;
            }
        }
    }

    let mut surviving = 0u64;
    let mut out = Vec::with_capacity(per_pixel.len());
    for (victim, (own, mut extra)) in per_pixel.into_iter().zip(induced).enumerate() {
        if extra.is_empty() {
            out.push(own);
            continue;
        }
        extra.sort_by(f64::total_cmp);
        let mut merged: Vec<(f64, bool)> = Vec::with_capacity(own.len() + extra.len());
        let (mut i, mut j) = (0, 0);
        while i < own.len() || j < extra.len() {
            if j >= extra.len() || (i < own.len() && own[i] <= extra[j]) {
                merged.push((own[i], false));
                i += 1;
            } else {
                merged.push((extra[j], true));
                j += 1;
            }
        }
        let kept = apply_dead_time_flagged(&merged, dead_times_ns[victim]);
        surviving += kept.iter().filter(|e| e.1).count() as u64;
        out.push(kept.into_iter().map(|e| e.0).collect());
    }
    Ok(Crosstalked { per_pixel: out, spawned, surviving })
}

/// Normal delay truncated to `[0, inf)` by rejection.
struct DelayDist {
    mean: f64,
    normal: Option<Normal<f64>>,
}

impl DelayDist {
    fn new(mean: f64, sigma: f64) -> Self {
        let normal = (sigma > 0.0).then(|| Normal::new(mean, sigma).expect("finite"));
        Self { mean, normal }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match &self.normal {
            None => self.mean.max(0.0),
            Some(n) => {
                for _ in 0..64 {
                    let d = n.sample(rng);
                    if d >= 0.0 {
                        return d;
                    }
                }
                0.0
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Topology;

    fn empty() -> Vec<Vec<f64>> {
        vec![Vec::new(); 64]
    }

    #[test]
    fn zero_probability_is_identity() {
        let g = ArrayGeometry::default();
        let mut ev = empty();
        ev[10] = vec![1.0, 2e6, 3e6];
        let out = inject_crosstalk(ev.clone(), &CrosstalkModel::default(), &g, &[50.0; 64], 1).unwrap();
        assert_eq!(out.per_pixel, ev);
        assert_eq!(out.spawned, 0);
    }

    #[test]
    fn forced_single_event_lands_on_a_neighbor() {
        let g = ArrayGeometry::default();
        for seed in 0..20 {
            let mut ev = empty();
            ev[27] = vec![1e6];
            let model = CrosstalkModel { probability: 1.0, topology: Topology::FourNeighbor, ..Default::default() };
            let out = inject_crosstalk(ev, &model, &g, &[50.0; 64], seed).unwrap();
            let hit: Vec<usize> = (0..64).filter(|&p| p != 27 && !out.per_pixel[p].is_empty()).collect();
            assert_eq!(hit.len(), 1);
            assert!([19, 26, 28, 35].contains(&hit[0]));
            assert_eq!(out.per_pixel[hit[0]].len(), 1);
            assert!(out.per_pixel[hit[0]][0] >= 1e6);
            assert_eq!(out.per_pixel[27], vec![1e6]);
        }
    }

    #[test]
    fn binomial_spawn_count() {
        // 10^6 source events at p = 0.01: 10^4 +- 3 sqrt(10^4 * 0.99)
        let g = ArrayGeometry::default();
        let mut ev = empty();
        ev[27] = (0..1_000_000).map(|i| i as f64 * 1e6).collect();
        let model = CrosstalkModel::with_probability(0.01);
        let out = inject_crosstalk(ev, &model, &g, &[50.0; 64], 5).unwrap();
        assert!((out.spawned as f64 - 1e4).abs() < 300.0, "{}", out.spawned);
        assert_eq!(out.surviving, out.spawned);
    }

    #[test]
    fn induced_event_respects_victim_dead_time() {
        let g = ArrayGeometry::default();
        let mut ev = empty();
        // both neighbours of pixel 0 fire 1 ns before its induced event arrives
        ev[0] = vec![0.0];
        ev[1] = vec![1_000.0];
        ev[8] = vec![1_000.0];
        let model = CrosstalkModel {
            probability: 1.0,
            delay_mean_ns: 2.0,
            delay_sigma_ns: 0.0,
            topology: Topology::FourNeighbor,
        };
        let out = inject_crosstalk(ev, &model, &g, &[50.0; 64], 3).unwrap();
        assert_eq!(out.spawned, 3);
        assert_eq!(out.per_pixel[0], vec![0.0]);
        assert_eq!(out.per_pixel[1], vec![1_000.0]);
        assert_eq!(out.per_pixel[8], vec![1_000.0]);
        assert!(out.surviving < 3);
    }
}
