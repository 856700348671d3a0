use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::tag::TimeTag;

/// k-way merge of individually sorted runs into one sorted vector.
///
/// Equal elements keep the order of their input runs.
pub fn kway_merge<T: Ord + Copy>(runs: &[&[T]]) -> Vec<T> {
    let total = runs.iter().map(|r| r.len()).sum();
    let mut out = Vec::with_capacity(total);
    let mut heap: BinaryHeap<Reverse<(T, usize)>> = runs
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.first().map(|&head| Reverse((head, i))))
        .collect();
    let mut cursor = vec![1usize; runs.len()];
    while let Some(Reverse((item, run))) = heap.pop() {
        out.push(item);
        let next = cursor[run];
        if let Some(&v) = runs[run].get(next) {
            cursor[run] = next + 1;
            heap.push(Reverse((v, run)));
        }
    }
    out
}

/// Merge per-channel tick lists (each sorted) into a single tag stream,
/// ordered by tick with ties broken by ascending channel.
pub fn merge_streams(channels: &[(u16, &[u64])]) -> Vec<TimeTag> {
    let runs: Vec<Vec<TimeTag>> = channels
        .iter()
        .map(|(ch, ticks)| ticks.iter().map(|&t| TimeTag::new(*ch, t)).collect())
        .collect();
    let refs: Vec<&[TimeTag]> = runs.iter().map(Vec::as_slice).collect();
    kway_merge(&refs)
}
