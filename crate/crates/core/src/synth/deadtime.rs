use crate::error::{Error, Result};
use crate::tag::first_unsorted;

/// Non-paralyzable dead time: an event survives iff it arrives at least
/// `dead_time_ns` after the previous surviving event.
pub fn apply_dead_time(events_ps: &[f64], dead_time_ns: f64) -> Result<Vec<f64>> {
    if let Some(index) = first_unsorted(events_ps) {
        return Err(Error::Unsorted { index });
    }
    if !(dead_time_ns >= 0.0) {
        return Err(Error::domain("dead time must be non-negative"));
    }
    let dead_ps = dead_time_ns * 1e3;
    let mut out = Vec::with_capacity(events_ps.len());
    let mut last = f64::NEG_INFINITY;
    for &t in events_ps {
        if t - last >= dead_ps {
            out.push(t);
            last = t;
        }
    }
    Ok(out)
}

/// Like [`apply_dead_time`] over events carrying a payload flag; returns the
/// surviving events.
pub(crate) fn apply_dead_time_flagged(events: &[(f64, bool)], dead_time_ns: f64) -> Vec<(f64, bool)> {
    let dead_ps = dead_time_ns * 1e3;
    let mut out = Vec::with_capacity(events.len());
    let mut last = f64::NEG_INFINITY;
    for &e in events {
        if e.0 - last >= dead_ps {
            out.push(e);
            last = e.0;
        }
    }
    out
}
