use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synth::SimRun;
use crate::tag::TimeTag;
use crate::tagio::{stream_stats, TagReader};

/// Per-channel counts of one acquisition together with its duration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CountSummary {
    pub duration_s: f64,
    pub counts: BTreeMap<u16, u64>,
    pub sync_channel: Option<u16>,
}

impl CountSummary {
    pub fn from_tags(tags: impl IntoIterator<Item = TimeTag>, duration_s: f64, sync_channel: Option<u16>) -> Self {
        let stats = stream_stats(tags);
        Self {
            duration_s,
            counts: stats.channels.iter().map(|(c, s)| (*c, s.count)).collect(),
            sync_channel,
        }
    }

    pub fn from_run(run: &SimRun) -> Self {
        Self::from_tags(run.tags.iter().copied(), run.duration_s, run.sync_channel)
    }

    pub fn count(&self, channel: u16) -> u64 {
        self.counts.get(&channel).copied().unwrap_or(0)
    }

    pub fn rate(&self, channel: u16) -> f64 {
        self.count(channel) as f64 / self.duration_s
    }

    /// Detector counts, excluding the sync channel.
    pub fn detection_count(&self) -> u64 {
        self.counts.iter().filter(|(c, _)| Some(**c) != self.sync_channel).map(|(_, n)| n).sum()
    }

    /// Total array count rate, excluding the sync channel.
    pub fn total_rate(&self) -> f64 {
        self.detection_count() as f64 / self.duration_s
    }
}

/// A tag file plus its acquisition duration. When the duration is omitted
/// the span between the first and last record is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Recording {
    pub path: PathBuf,
    #[serde(default)]
    pub duration_s: Option<f64>,
}

impl Recording {
    pub fn summarize(&self) -> Result<CountSummary> {
        let reader = TagReader::open(&self.path)?;
        let header = *reader.header();
        let mut err = None;
        let stats = stream_stats(reader.map_while(|r| r.map_err(|e| err = Some(e)).ok()));
        if let Some(e) = err {
            return Err(e);
        }
        let duration_s = match self.duration_s {
            Some(d) if d > 0.0 => d,
            Some(d) => return Err(Error::domain(format!("recording duration must be positive, got {d}"))),
            None => stats.span_s(header.tick_ps()),
        };
        if !(duration_s > 0.0) {
            return Err(Error::Degenerate(format!("{}: cannot infer a duration", self.path.display())));
        }
        Ok(CountSummary {
            duration_s,
            counts: stats.channels.iter().map(|(c, s)| (*c, s.count)).collect(),
            sync_channel: header.sync_channel,
        })
    }
}
