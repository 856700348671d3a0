//! `snspd analyze`: run one characterization analysis described by a
//! metadata file and write its result JSON, CSV and SVG.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use snspd_core::analysis::{
    array_sde, bias_sweep, crosstalk_aggregate, heatmap, jitter_fwhm, mcr_curve, spde_map, BiasCurve, BiasPoint,
    CrosstalkConfig, CrosstalkResult, EfficiencyResult, Heatmap, JitterConfig, JitterResult, McrResult, Recording,
    SYNC_HISTORY,
};
use snspd_core::tagio::{TagFileHeader, TagReader};
use snspd_core::{ArrayGeometry, Polarization, TimeTag};

use crate::output::{OutDir, RunManifest};
use crate::plot::{render, Kind, Table};

/// Measurement metadata, tagged by `kind`. Relative paths are resolved
/// against the directory holding the metadata file.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Metadata {
    Spde(SpdeMeta),
    Sde(SdeMeta),
    Bias(BiasMeta),
    Mcr(McrMeta),
    Jitter(JitterMeta),
    Crosstalk(CrosstalkMeta),
    Heatmap(HeatmapMeta),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpdeMeta {
    /// Photon flux of the focused spot, photons/s.
    pub flux: f64,
    #[serde(default)]
    pub polarization: Polarization,
    #[serde(default)]
    pub geometry: ArrayGeometry,
    pub dark: Recording,
    pub positions: Vec<SpotRecording>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpotRecording {
    pub pixel: usize,
    pub path: PathBuf,
    #[serde(default)]
    pub duration_s: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdeMeta {
    pub flux: f64,
    pub dark: Recording,
    pub runs: Vec<SdeRun>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdeRun {
    pub diameter_um: f64,
    pub path: PathBuf,
    #[serde(default)]
    pub duration_s: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasMeta {
    pub points: Vec<BiasRun>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasRun {
    pub bias_ua: f64,
    pub light: Recording,
    pub dark: Recording,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McrMeta {
    pub points: Vec<McrRun>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McrRun {
    /// Incident rate in detected-count equivalents (cps).
    pub input_rate: f64,
    pub path: PathBuf,
    #[serde(default)]
    pub duration_s: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JitterMeta {
    pub recording: Recording,
    /// Defaults to the sync channel recorded in the tag file header.
    #[serde(default)]
    pub sync_channel: Option<u16>,
    pub rep_period_ps: f64,
    #[serde(default)]
    pub weights: Option<[f64; SYNC_HISTORY]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrosstalkMeta {
    pub recording: Recording,
    pub source: u16,
    pub targets: Vec<u16>,
    #[serde(default = "default_bin_ns")]
    pub bin_ns: f64,
    #[serde(default = "default_n_bins")]
    pub n_bins: usize,
    #[serde(default = "default_min_counts")]
    pub min_counts: u64,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
}

fn default_bin_ns() -> f64 {
    CrosstalkConfig::default().bin_ns
}
fn default_n_bins() -> usize {
    CrosstalkConfig::default().n_bins
}
fn default_min_counts() -> u64 {
    CrosstalkConfig::default().min_counts
}
fn default_confidence() -> f64 {
    CrosstalkConfig::default().confidence
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatmapMeta {
    pub recording: Recording,
    #[serde(default)]
    pub geometry: ArrayGeometry,
    #[serde(default = "yes")]
    pub normalize: bool,
}

impl Metadata {
    pub fn kind(&self) -> Kind {
        match self {
            Metadata::Spde(_) => Kind::Spde,
            Metadata::Sde(_) => Kind::Sde,
            Metadata::Bias(_) => Kind::Bias,
            Metadata::Mcr(_) => Kind::Mcr,
            Metadata::Jitter(_) => Kind::Jitter,
            Metadata::Crosstalk(_) => Kind::Crosstalk,
            Metadata::Heatmap(_) => Kind::Heatmap,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading metadata {}", path.display()))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let mut meta: Metadata = serde_path_to_error::deserialize(de)
            .map_err(|e| anyhow::anyhow!("metadata {} at `{}`: {}", path.display(), e.path(), e.inner()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in meta.paths_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(meta)
    }

    fn paths_mut(&mut self) -> Vec<&mut PathBuf> {
        match self {
            Metadata::Spde(m) => std::iter::once(&mut m.dark.path).chain(m.positions.iter_mut().map(|p| &mut p.path)).collect(),
            Metadata::Sde(m) => std::iter::once(&mut m.dark.path).chain(m.runs.iter_mut().map(|r| &mut r.path)).collect(),
            Metadata::Bias(m) => m.points.iter_mut().flat_map(|p| [&mut p.light.path, &mut p.dark.path]).collect(),
            Metadata::Mcr(m) => m.points.iter_mut().map(|p| &mut p.path).collect(),
            Metadata::Jitter(m) => vec![&mut m.recording.path],
            Metadata::Crosstalk(m) => vec![&mut m.recording.path],
            Metadata::Heatmap(m) => vec![&mut m.recording.path],
        }
    }

    pub fn paths(&self) -> Vec<PathBuf> {
        self.clone().paths_mut().into_iter().map(|p| p.clone()).collect()
    }
}

/// Result of one analysis, serialized as `result.json`.
#[derive(Debug, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Outcome {
    Spde(EfficiencyResult),
    Sde { flux: f64, points: Vec<SdePoint> },
    Bias(BiasCurve),
    Mcr(McrResult),
    Jitter(JitterResult),
    Crosstalk(CrosstalkResult),
    Heatmap(Heatmap),
}

#[derive(Debug, Clone, Serialize)]
pub struct SdePoint {
    pub diameter_um: f64,
    pub sde: f64,
    pub clamped: bool,
}

pub fn run(meta: &Metadata) -> Result<Outcome> {
    let missing: Vec<String> = meta.paths().iter().filter(|p| !p.is_file()).map(|p| p.display().to_string()).collect();
    if !missing.is_empty() {
        bail!("input files not found: {}", missing.join(", "));
    }
    Ok(match meta {
        Metadata::Spde(m) => {
            let dark = m.dark.summarize()?;
            let mut positions = BTreeMap::new();
            for p in &m.positions {
                let rec = Recording { path: p.path.clone(), duration_s: p.duration_s };
                if positions.insert(p.pixel, rec.summarize()?).is_some() {
                    bail!("pixel {} listed twice", p.pixel);
                }
            }
            Outcome::Spde(spde_map(&m.geometry, &positions, &dark, m.flux, m.polarization)?)
        }
        Metadata::Sde(m) => {
            let dark = m.dark.summarize()?;
            let mut points = Vec::new();
            for r in &m.runs {
                let light = Recording { path: r.path.clone(), duration_s: r.duration_s }.summarize()?;
                let e = array_sde(light.total_rate(), dark.total_rate(), m.flux)?;
                points.push(SdePoint { diameter_um: r.diameter_um, sde: e.value, clamped: e.clamped });
            }
            Outcome::Sde { flux: m.flux, points }
        }
        Metadata::Bias(m) => {
            let mut points = Vec::new();
            for p in &m.points {
                let light = p.light.summarize()?;
                let dark = p.dark.summarize()?;
                points.push(BiasPoint { bias_ua: p.bias_ua, count_rate: light.total_rate(), dark_rate: dark.total_rate() });
            }
            Outcome::Bias(bias_sweep(&points)?)
        }
        Metadata::Mcr(m) => {
            let mut points = Vec::new();
            for p in &m.points {
                let s = Recording { path: p.path.clone(), duration_s: p.duration_s }.summarize()?;
                points.push((p.input_rate, s.total_rate()));
            }
            Outcome::Mcr(mcr_curve(&points)?)
        }
        Metadata::Jitter(m) => {
            let (header, r) = stream(&m.recording.path, |header, tags| {
                let sync = m
                    .sync_channel
                    .or(header.sync_channel)
                    .context("no sync channel given and none recorded in the tag file")?;
                let mut cfg = JitterConfig::new(sync, m.rep_period_ps, header.tick_ps());
                if let Some(w) = m.weights {
                    cfg.weights = w;
                }
                Ok(jitter_fwhm(tags, &cfg)?)
            })?;
            log::debug!("jitter: {} records", header.record_count);
            Outcome::Jitter(r)
        }
        Metadata::Crosstalk(m) => {
            let (_, r) = stream(&m.recording.path, |header, tags| {
                let cfg = CrosstalkConfig {
                    bin_ns: m.bin_ns,
                    n_bins: m.n_bins,
                    min_counts: m.min_counts,
                    duration_s: m.recording.duration_s,
                    tick_ps: header.tick_ps(),
                    confidence: m.confidence,
                };
                Ok(crosstalk_aggregate(tags, m.source, &m.targets, &cfg)?)
            })?;
            Outcome::Crosstalk(r)
        }
        Metadata::Heatmap(m) => {
            let (_, h) = stream(&m.recording.path, |_, tags| Ok(heatmap(tags, &m.geometry, m.normalize)))?;
            Outcome::Heatmap(h)
        }
    })
}

/// Stream a tag file through `f`, surfacing read errors after it returns.
fn stream<T>(
    path: &Path,
    f: impl FnOnce(&TagFileHeader, &mut dyn Iterator<Item = TimeTag>) -> Result<T>,
) -> Result<(TagFileHeader, T)> {
    let reader = TagReader::open(path).with_context(|| format!("opening {}", path.display()))?;
    let header = *reader.header();
    let mut err = None;
    let mut tags = reader.map_while(|r| r.map_err(|e| err = Some(e)).ok());
    let out = f(&header, &mut tags);
    if let Some(e) = err {
        return Err(e).with_context(|| format!("reading {}", path.display()));
    }
    Ok((header, out?))
}

impl Outcome {
    pub fn table(&self) -> Table {
        match self {
            Outcome::Spde(r) => spde_table(r),
            Outcome::Sde { points, .. } => {
                let mut t = Table::new(&["diameter_um", "sde"]);
                for p in points {
                    t.push(vec![p.diameter_um, p.sde]);
                }
                t
            }
            Outcome::Bias(c) => bias_table(c),
            Outcome::Mcr(r) => mcr_table(r),
            Outcome::Jitter(r) => jitter_table(r),
            Outcome::Crosstalk(r) => crosstalk_table(r),
            Outcome::Heatmap(h) => {
                let max = h.max().max(1) as f64;
                let mut t = Table::new(&["row", "col", "count", "normalized"]);
                for (i, row) in h.counts.iter().enumerate() {
                    for (j, &c) in row.iter().enumerate() {
                        t.push(vec![i as f64, j as f64, c as f64, c as f64 / max]);
                    }
                }
                t
            }
        }
    }

    pub fn summary(&self) -> String {
        match self {
            Outcome::Spde(r) => format!(
                "SPDE mean {:.2}% (sd {:.2}%), range {:.2}-{:.2}%",
                100.0 * r.mean,
                100.0 * r.stddev,
                100.0 * r.min(),
                100.0 * r.max()
            ),
            Outcome::Sde { points, .. } => {
                let best = points.iter().map(|p| p.sde).fold(f64::NEG_INFINITY, f64::max);
                format!("{} spot sizes, best SDE {:.2}%", points.len(), 100.0 * best)
            }
            Outcome::Bias(c) => format!("{} bias points, plateau {:.0} cps", c.points.len(), c.plateau_cps),
            Outcome::Mcr(r) => format!("3 dB maximum count rate {:.2} Mcps", r.mcr_3db_cps / 1e6),
            Outcome::Jitter(r) => {
                let f: Vec<f64> = r.channels.values().filter_map(|c| c.fwhm_ps).collect();
                let lo = f.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                format!("{} channels, FWHM {lo:.1}-{hi:.1} ps", f.len())
            }
            Outcome::Crosstalk(r) => match (r.excess_fraction, r.upper_bound_95, &r.flagged) {
                (Some(ex), Some(ub), _) => format!(
                    "{} source events, excess {:.4}%, {:.0}% upper bound {:.4}%",
                    r.n_a,
                    100.0 * ex,
                    100.0 * 0.95,
                    100.0 * ub
                ),
                (_, _, Some(flag)) => format!("{} source events, no bound: {flag}", r.n_a),
                _ => format!("{} source events, no bound", r.n_a),
            },
            Outcome::Heatmap(h) => format!("{} counts, max pixel {}", h.counts.iter().flatten().sum::<u64>(), h.max()),
        }
    }
}

pub fn spde_table(r: &EfficiencyResult) -> Table {
    let mut t = Table::new(&["row", "col", "spde"]);
    for (i, row) in r.per_pixel_spde.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            t.push(vec![i as f64, j as f64, v]);
        }
    }
    t
}

pub fn bias_table(c: &BiasCurve) -> Table {
    let mut t = Table::new(&["bias_ua", "pcr_cps", "pcr_normalized", "dcr_cps"]);
    for p in &c.points {
        t.push(vec![p.bias_ua, p.pcr_cps, p.pcr_normalized, p.dcr_cps]);
    }
    t
}

pub fn mcr_table(r: &McrResult) -> Table {
    let mut t = Table::new(&["input_rate", "measured_rate", "efficiency"]);
    for p in &r.points {
        t.push(vec![p.input_rate, p.measured_rate, p.efficiency]);
    }
    t
}

/// Per-channel jitter histograms, one column per channel.
pub fn jitter_table(r: &JitterResult) -> Table {
    let names: Vec<String> = r.channels.keys().map(|c| format!("ch{c}")).collect();
    let mut headers = vec!["bin_start_ps"];
    headers.extend(names.iter().map(String::as_str));
    let mut t = Table::new(&headers);
    let n = r.channels.values().map(|c| c.histogram.len()).max().unwrap_or(0);
    for i in 0..n {
        let mut row = vec![i as f64 * r.bin_ps];
        row.extend(r.channels.values().map(|c| c.histogram.get(i).copied().unwrap_or(0) as f64));
        t.push(row);
    }
    t
}

pub fn crosstalk_table(r: &CrosstalkResult) -> Table {
    let (obs, pred) = r.normalized();
    let mut t = Table::new(&["bin_start_ps", "count", "count_per_event", "prediction_per_event"]);
    for (k, (o, p)) in obs.iter().zip(&pred).enumerate() {
        t.push(vec![k as f64 * r.bin_ns * 1e3, r.histogram[k] as f64, *o, *p]);
    }
    t
}

/// Write `<kind>.csv` and the SVG rendered from that CSV text.
pub fn write_figure(dir: &OutDir, manifest: &mut RunManifest, prefix: &str, kind: Kind, table: &Table) -> Result<()> {
    let csv = table.to_csv()?;
    let svg = render(kind, &Table::from_csv(&csv)?)?;
    dir.write(manifest, &format!("{prefix}{}.csv", kind.name()), csv.as_bytes())?;
    dir.write(manifest, &format!("{prefix}{}.svg", kind.name()), svg.as_bytes())?;
    Ok(())
}
