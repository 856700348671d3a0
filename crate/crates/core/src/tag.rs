use serde::{Deserialize, Serialize};

/// A digitized event: TDC channel and arrival time in ticks.
///
/// Ordering is by time, then by ascending channel, which is the sort order
/// of every tag stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TimeTag {
    pub tick: u64,
    pub channel: u16,
}

impl TimeTag {
    pub fn new(channel: u16, tick: u64) -> Self {
        Self { tick, channel }
    }
}

/// An analog event time before digitization, in picoseconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time_ps: f64,
    pub channel: u16,
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.time_ps.total_cmp(&other.time_ps).then(self.channel.cmp(&other.channel))
    }
}

/// Index of the first element that breaks non-decreasing order.
pub(crate) fn first_unsorted<T: PartialOrd>(items: &[T]) -> Option<usize> {
    items.windows(2).position(|w| w[1] < w[0]).map(|i| i + 1)
}
