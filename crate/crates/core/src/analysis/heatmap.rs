use serde::{Deserialize, Serialize};

use crate::geometry::ArrayGeometry;
use crate::tag::TimeTag;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    /// Row-major per-pixel totals.
    pub counts: Vec<Vec<u64>>,
    /// Counts divided by the maximum entry, when requested.
    pub normalized: Option<Vec<Vec<f64>>>,
}

impl Heatmap {
    pub fn max(&self) -> u64 {
        self.counts.iter().flatten().copied().max().unwrap_or(0)
    }
}

/// Per-pixel totals by (row, col). Tags on channels outside the array, such
/// as a sync input, are ignored.
pub fn heatmap(tags: impl IntoIterator<Item = TimeTag>, geometry: &ArrayGeometry, normalize: bool) -> Heatmap {
    let n = geometry.pixel_count();
    let mut flat = vec![0u64; n];
    for t in tags {
        if let Some(c) = flat.get_mut(t.channel as usize) {
            *c += 1;
        }
    }
    let counts: Vec<Vec<u64>> = flat.chunks(geometry.cols).map(<[u64]>::to_vec).collect();
    let normalized = normalize.then(|| {
        let max = flat.iter().copied().max().unwrap_or(0).max(1) as f64;
        counts.iter().map(|row| row.iter().map(|&c| c as f64 / max).collect()).collect()
    });
    Heatmap { counts, normalized }
}
