//! CSV artifacts for each analysis kind and the SVG figures derived from
//! them. Figures are rebuilt from the CSV alone, so regenerating a plot from
//! a stored CSV reproduces it byte for byte.

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use snspd_core::analysis::{fwhm_from_histogram, mcr_curve};

use crate::svg::{fmt_num, heatmap, Axis, Chart, Series, Style};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Spde,
    Sde,
    Bias,
    Mcr,
    Jitter,
    Crosstalk,
    Heatmap,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Spde => "spde",
            Kind::Sde => "sde",
            Kind::Bias => "bias",
            Kind::Mcr => "mcr",
            Kind::Jitter => "jitter",
            Kind::Crosstalk => "crosstalk",
            Kind::Heatmap => "heatmap",
        }
    }
}

pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(headers: &[&str]) -> Self {
        Self { headers: headers.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.headers)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        Ok(String::from_utf8(w.into_inner()?)?)
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let headers = r.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .with_context(|| format!("CSV row {}: non-numeric field", i + 1))?;
            rows.push(row);
        }
        Ok(Self { headers, rows })
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let k = self.headers.iter().position(|h| h == name).with_context(|| format!("CSV has no `{name}` column"))?;
        Ok(self.rows.iter().map(|r| r[k]).collect())
    }
}

pub fn render(kind: Kind, table: &Table) -> Result<String> {
    match kind {
        Kind::Spde => grid(table, "spde", "Single-pixel detection efficiency (%)", 100.0, 1),
        Kind::Heatmap => grid(table, "normalized", "Array count heatmap (normalised)", 1.0, 2),
        Kind::Sde => sde(table),
        Kind::Bias => bias(table),
        Kind::Mcr => mcr(table),
        Kind::Jitter => jitter(table),
        Kind::Crosstalk => crosstalk(table),
    }
}

fn grid(table: &Table, value: &str, title: &str, scale: f64, decimals: usize) -> Result<String> {
    let rows = table.column("row")?;
    let cols = table.column("col")?;
    let vals = table.column(value)?;
    let nr = rows.iter().fold(0.0f64, |m, r| m.max(*r)) as usize + 1;
    let nc = cols.iter().fold(0.0f64, |m, c| m.max(*c)) as usize + 1;
    let mut m = vec![vec![f64::NAN; nc]; nr];
    let mut labels = vec![vec![String::new(); nc]; nr];
    for ((r, c), v) in rows.iter().zip(&cols).zip(&vals) {
        m[*r as usize][*c as usize] = v * scale;
        labels[*r as usize][*c as usize] = format!("{:.*}", decimals, v * scale);
    }
    Ok(heatmap(title, &m, &labels))
}

fn sde(table: &Table) -> Result<String> {
    let d = table.column("diameter_um")?;
    let v = table.column("sde")?;
    let pts: Vec<(f64, f64)> = d.iter().zip(&v).map(|(a, b)| (*a, 100.0 * b)).collect();
    let chart = Chart {
        title: "Array system detection efficiency".into(),
        x: Axis::fit("beam 1/e2 diameter (um)", d.iter().copied()),
        y: Axis::linear("SDE (%)", 0.0, 100.0),
        series: vec![Series { label: "measured".into(), points: pts, color: "#1f4e9a", style: Style::Markers }],
    };
    Ok(chart.render())
}

fn bias(table: &Table) -> Result<String> {
    let b = table.column("bias_ua")?;
    let pcr = table.column("pcr_normalized")?;
    let dcr = table.column("dcr_cps")?;
    let chart = Chart {
        title: "Photon and dark count rate versus bias".into(),
        x: Axis::fit("nominal bias current (uA)", b.iter().copied()),
        y: Axis::fit_log("normalised PCR / DCR (cps)", pcr.iter().chain(&dcr).copied()),
        series: vec![
            Series { label: "normalised PCR".into(), points: b.iter().copied().zip(pcr).collect(), color: "#c0392b", style: Style::Line },
            Series { label: "DCR (cps)".into(), points: b.iter().copied().zip(dcr).collect(), color: "black", style: Style::Line },
        ],
    };
    Ok(chart.render())
}

fn mcr(table: &Table) -> Result<String> {
    let input = table.column("input_rate")?;
    let measured = table.column("measured_rate")?;
    let eff = table.column("efficiency")?;
    let points: Vec<(f64, f64)> = input.iter().copied().zip(measured.iter().copied()).collect();
    let x = Axis::fit_log("measured count rate (cps)", measured.iter().copied());
    let mut series = vec![
        Series { label: "normalised efficiency".into(), points: measured.iter().copied().zip(eff).collect(), color: "#1f4e9a", style: Style::Line },
        Series { label: "3 dB".into(), points: vec![(x.min, 0.5), (x.max, 0.5)], color: "gray", style: Style::Dashed },
    ];
    if let Ok(r) = mcr_curve(&points) {
        series.push(Series {
            label: format!("MCR {} Mcps", fmt_num(r.mcr_3db_cps / 1e6)),
            points: vec![(r.mcr_3db_cps, 0.5)],
            color: "#c0392b",
            style: Style::Markers,
        });
    }
    let chart = Chart { title: "Count-rate compression".into(), x, y: Axis::linear("normalised efficiency", 0.0, 1.1), series };
    Ok(chart.render())
}

const JITTER_WINDOW_PS: f64 = 400.0;
/// Channels drawn in the jitter figure; the CSV keeps all of them.
const JITTER_MAX_SERIES: usize = 8;
const PALETTE: [&str; 8] = ["#1f4e9a", "#c0392b", "#27ae60", "#8e44ad", "#e67e22", "#16a085", "#7f8c8d", "#d35400"];

fn jitter(table: &Table) -> Result<String> {
    let bins = table.column("bin_start_ps")?;
    if bins.len() < 2 {
        bail!("jitter CSV needs at least two bins");
    }
    let width = bins[1] - bins[0];
    let mut series = Vec::new();
    let mut all_y = Vec::new();
    for (k, name) in table.headers.iter().skip(1).take(JITTER_MAX_SERIES).enumerate() {
        let counts = table.column(name)?;
        let hist: Vec<u64> = counts.iter().map(|c| *c as u64).collect();
        let peak = hist.iter().enumerate().max_by_key(|(i, c)| (**c, std::cmp::Reverse(*i))).map_or(0, |x| x.0);
        let total = hist.iter().sum::<u64>().max(1) as f64;
        let fwhm = fwhm_from_histogram(&hist, width);
        let n = bins.len() as isize;
        let half = (JITTER_WINDOW_PS / width) as isize;
        let pts: Vec<(f64, f64)> = (-half..=half)
            .map(|d| {
                let i = (peak as isize + d).rem_euclid(n) as usize;
                (d as f64 * width, hist[i] as f64 / total)
            })
            .collect();
        all_y.extend(pts.iter().map(|p| p.1));
        let label = match fwhm {
            Some(f) => format!("{name}: FWHM {} ps", fmt_num((f * 10.0).round() / 10.0)),
            None => format!("{name}: FWHM n/a"),
        };
        series.push(Series { label, points: pts, color: PALETTE[k], style: Style::Line });
    }
    let chart = Chart {
        title: "Timing jitter histogram".into(),
        x: Axis::linear("delay from peak (ps)", -JITTER_WINDOW_PS, JITTER_WINDOW_PS),
        y: Axis::fit("fraction of events per bin", all_y.into_iter().chain([0.0])),
        series,
    };
    Ok(chart.render())
}

fn crosstalk(table: &Table) -> Result<String> {
    let bins = table.column("bin_start_ps")?;
    let obs = table.column("count_per_event")?;
    let pred = table.column("prediction_per_event")?;
    if bins.len() < 2 {
        bail!("crosstalk CSV needs at least two bins");
    }
    let width = (bins[1] - bins[0]) / 1e3;
    // points at bin centres so the first bin stays clear of the axis
    let ns: Vec<f64> = bins.iter().map(|b| b / 1e3 + width / 2.0).collect();
    let first = pred[0];
    let x = Axis::linear("delay to next event on target (ns)", 0.0, bins[bins.len() - 1] / 1e3 + width);
    let y = Axis::fit_log("normalised number of events", obs.iter().chain(&pred).copied().chain([first + 0.01]));
    let series = vec![
        Series { label: "measured".into(), points: ns.iter().copied().zip(obs).collect(), color: "#1f4e9a", style: Style::Markers },
        Series { label: "Poisson prediction".into(), points: ns.iter().copied().zip(pred).collect(), color: "black", style: Style::Line },
        Series { label: "1% crosstalk".into(), points: vec![(x.min, first + 0.01), (x.max, first + 0.01)], color: "#c0392b", style: Style::Dashed },
        Series { label: "0.1% crosstalk".into(), points: vec![(x.min, first + 0.001), (x.max, first + 0.001)], color: "#e67e22", style: Style::Dashed },
    ];
    Ok(Chart { title: "Inter-channel arrival histogram".into(), x, y, series }.render())
}
