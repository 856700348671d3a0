//! Canonical characterization runs.
//!
//! Each experiment simulates the corresponding bench measurement, feeds the
//! resulting tag streams through the analysis toolkit and returns the
//! recovered quantities. [`reproduce`] runs all of them and scores the
//! results against the reference figures.

use std::collections::BTreeMap;
use std::time::Instant;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    array_sde, bias_sweep, crosstalk_aggregate, crosstalk_bound, jitter_fwhm, log_sweep, mcr_curve, spde_map,
    BiasCurve, BiasPoint, CountSummary, CrosstalkConfig, CrosstalkResult, Efficiency, EfficiencyResult,
    JitterConfig, JitterResult, McrResult,
};
use crate::device::{BeamProfile, Polarization};
use crate::error::{Error, Result};
use crate::geometry::Rect;
use crate::scenario::Scenario;
use crate::synth::{simulate, CrosstalkModel, SourceModel};

/// 1/e^2 diameter of the focused spot used for per-pixel efficiency.
pub const FOCUSED_SPOT_UM: f64 = 27.0;
/// Expanded spot that fills the array; see [`array_sde_experiment`].
pub const EXPANDED_SPOT_UM: f64 = 220.0;
pub const PULSED_REP_RATE_MHZ: f64 = 20.0;
/// Pixel at the centre of the crosstalk block (row 3, column 3).
pub const CROSSTALK_SOURCE: usize = 27;

/// Independent seed for sub-run `k` of a run seeded with `seed`.
pub fn sub_seed(seed: u64, k: u64) -> u64 {
    let mut z = seed.wrapping_add(k.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Flux that gives `pixel` an expected photon count rate of `rate_cps`
/// under `scenario`'s beam shape.
pub fn flux_for_pixel_rate(scenario: &Scenario, pixel: usize, rate_cps: f64) -> Result<f64> {
    let probe = scenario.clone().with_beam(scenario.beam.clone().with_flux(1.0));
    let per_photon = probe.photon_rates()?[pixel];
    if !(per_photon > 0.0) {
        return Err(Error::Degenerate(format!("pixel {pixel} receives no light from the beam")));
    }
    Ok(rate_cps / per_photon)
}

pub fn focused_spot(scenario: &Scenario, pixel: usize, flux: f64, polarization: Polarization) -> Result<Scenario> {
    let center = scenario.geometry.pixel_center(pixel)?;
    let beam = BeamProfile::gaussian(center, FOCUSED_SPOT_UM, flux).with_polarization(polarization);
    Ok(scenario.clone().with_beam(beam))
}

pub fn flood(scenario: &Scenario, flux: f64) -> Scenario {
    scenario.clone().with_beam(BeamProfile::flood(scenario.geometry.footprint(), flux))
}

pub fn dark(scenario: &Scenario, bias_ua: f64) -> Scenario {
    let mut s = scenario.clone().with_beam(scenario.beam.clone().with_flux(0.0));
    s.bias_ua = bias_ua;
    s
}

/// Flood over the 3x3 block of pixel cells around `center`, CW, with the
/// given crosstalk probability.
pub fn block_flood(scenario: &Scenario, center: usize, per_pixel_rate: f64, probability: f64) -> Result<Scenario> {
    let cell = scenario.geometry.cell_rect(center)?;
    let pitch = scenario.geometry.pitch_um;
    let rect = Rect::new(cell.x0 - pitch, cell.y0 - pitch, cell.x1 + pitch, cell.y1 + pitch);
    let mut s = scenario.clone().with_beam(BeamProfile::flood(rect, 1.0));
    s.source = SourceModel::Cw;
    s.crosstalk = CrosstalkModel { probability, ..scenario.crosstalk.clone() };
    let flux = flux_for_pixel_rate(&s, center, per_pixel_rate)?;
    Ok(s.clone().with_beam(s.beam.clone().with_flux(flux)))
}

/// Pulsed flood over the whole array with the sync on the first channel
/// after the pixels.
pub fn pulsed_flood(scenario: &Scenario, rep_rate_mhz: f64, per_pixel_rate: f64) -> Result<Scenario> {
    let mut s = flood(scenario, 1.0);
    s.source = SourceModel::pulsed(rep_rate_mhz, s.pixel_count() as u16);
    let flux = flux_for_pixel_rate(&s, 0, per_pixel_rate)?;
    Ok(s.clone().with_beam(s.beam.clone().with_flux(flux)))
}

pub fn dark_experiment(scenario: &Scenario, bias_ua: f64, duration_s: f64, seed: u64) -> Result<CountSummary> {
    let run = simulate(&dark(scenario, bias_ua), duration_s, seed)?;
    Ok(CountSummary::from_run(&run))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpdeOutcome {
    pub result: EfficiencyResult,
    pub dark: CountSummary,
    pub flux: f64,
    /// Smallest dark-subtracted detection count over all spot positions.
    pub min_photon_counts: f64,
}

/// Focused spot on each pixel in turn, plus one dark run.
pub fn spde_experiment(
    scenario: &Scenario,
    polarization: Polarization,
    pixel_rate_cps: f64,
    duration_s: f64,
    dark: &CountSummary,
    seed: u64,
) -> Result<SpdeOutcome> {
    let center = scenario.geometry.index(scenario.geometry.rows / 2, scenario.geometry.cols / 2).unwrap_or(0);
    let probe = focused_spot(scenario, center, 1.0, Polarization::Parallel)?;
    let flux = flux_for_pixel_rate(&probe, center, pixel_rate_cps)?;
    let positions: BTreeMap<usize, CountSummary> = (0..scenario.pixel_count())
        .into_par_iter()
        .map(|p| {
            let s = focused_spot(scenario, p, flux, polarization)?;
            let run = simulate(&s, duration_s, sub_seed(seed, p as u64))?;
            Ok((p, CountSummary::from_run(&run)))
        })
        .collect::<Result<_>>()?;
    let dark_counts = dark.total_rate() * duration_s;
    let min_photon_counts =
        positions.values().map(|c| c.detection_count() as f64 - dark_counts).fold(f64::INFINITY, f64::min);
    let result = spde_map(&scenario.geometry, &positions, dark, flux, polarization)?;
    Ok(SpdeOutcome { result, dark: dark.clone(), flux, min_photon_counts })
}

/// Centred Gaussian spot of `diameter_um`; total array rate over flux.
pub fn array_sde_experiment(
    scenario: &Scenario,
    diameter_um: f64,
    flux: f64,
    duration_s: f64,
    dark: &CountSummary,
    seed: u64,
) -> Result<Efficiency> {
    let beam = BeamProfile::gaussian(scenario.geometry.center(), diameter_um, flux);
    let run = simulate(&scenario.clone().with_beam(beam), duration_s, seed)?;
    array_sde(CountSummary::from_run(&run).total_rate(), dark.total_rate(), flux)
}

/// Illuminated and dark runs at each bias.
pub fn bias_experiment(
    scenario: &Scenario,
    biases_ua: &[f64],
    flux: f64,
    duration_s: f64,
    dark_duration_s: f64,
    seed: u64,
) -> Result<BiasCurve> {
    let lit = flood(scenario, flux);
    let points = biases_ua
        .par_iter()
        .enumerate()
        .map(|(k, &bias)| {
            let mut s = lit.clone();
            s.bias_ua = bias;
            let on = simulate(&s, duration_s, sub_seed(seed, 2 * k as u64))?;
            let off = simulate(&dark(scenario, bias), dark_duration_s, sub_seed(seed, 2 * k as u64 + 1))?;
            Ok(BiasPoint {
                bias_ua: bias,
                count_rate: CountSummary::from_run(&on).total_rate(),
                dark_rate: CountSummary::from_run(&off).total_rate(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    bias_sweep(&points)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McrSweepConfig {
    /// Lowest and highest per-pixel `rate * dead_time` of the sweep.
    pub rtau_start: f64,
    pub rtau_stop: f64,
    pub per_decade: usize,
    /// Target kept counts per pixel at each point.
    pub counts_per_pixel: f64,
}

impl Default for McrSweepConfig {
    fn default() -> Self {
        Self { rtau_start: 0.001, rtau_stop: 5.0, per_decade: 10, counts_per_pixel: 5e4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McrSweep {
    pub array: McrResult,
    pub per_pixel: Vec<McrResult>,
    pub drops: u64,
}

impl McrSweep {
    pub fn pixel_range(&self) -> (f64, f64) {
        self.per_pixel.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
            (lo.min(r.mcr_3db_cps), hi.max(r.mcr_3db_cps))
        })
    }
}

/// Full-array flood at increasing flux. Durations shrink with flux so each
/// point holds about `counts_per_pixel` kept counts per pixel.
pub fn mcr_experiment(scenario: &Scenario, cfg: &McrSweepConfig, seed: u64) -> Result<McrSweep> {
    let base = flood(scenario, 1.0);
    let unit = base.photon_rates()?;
    let mean_unit = unit.iter().sum::<f64>() / unit.len() as f64;
    let tau_s = scenario.pixels.iter().map(|p| p.dead_time_ns).sum::<f64>() / scenario.pixel_count() as f64 * 1e-9;
    let fluxes: Vec<f64> = log_sweep(cfg.rtau_start, cfg.rtau_stop, cfg.per_decade)
        .into_iter()
        .map(|rt| rt / tau_s / mean_unit)
        .collect();
    let runs = fluxes
        .iter()
        .enumerate()
        .map(|(k, &flux)| {
            let r = flux * mean_unit;
            let duration = cfg.counts_per_pixel * (1.0 + r * tau_s) / r;
            let run = simulate(&base.clone().with_beam(base.beam.clone().with_flux(flux)), duration, sub_seed(seed, k as u64))?;
            info!("mcr point {k}: flux {flux:.3e}/s, {} tags, {} dropped", run.tags.len(), run.drops);
            Ok((flux, CountSummary::from_run(&run), run.drops))
        })
        .collect::<Result<Vec<_>>>()?;
    let array = mcr_curve(&runs.iter().map(|(f, c, _)| (*f, c.total_rate())).collect::<Vec<_>>())?;
    let per_pixel = (0..scenario.pixel_count() as u16)
        .map(|ch| mcr_curve(&runs.iter().map(|(f, c, _)| (*f, c.rate(ch))).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;
    Ok(McrSweep { array, per_pixel, drops: runs.iter().map(|r| r.2).sum() })
}

/// Pulsed flood; per-channel timing histograms against the sync.
pub fn jitter_experiment(scenario: &Scenario, per_pixel_rate: f64, duration_s: f64, seed: u64) -> Result<JitterResult> {
    let s = pulsed_flood(scenario, PULSED_REP_RATE_MHZ, per_pixel_rate)?;
    let run = simulate(&s, duration_s, seed)?;
    let sync = run.sync_channel.expect("pulsed scenario has a sync channel");
    let cfg = JitterConfig::new(sync, s.source.rep_period_ps().expect("pulsed"), run.tick_ps);
    jitter_fwhm(run.tags.iter().copied(), &cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrosstalkOutcome {
    /// Source pixel against its right-hand neighbour.
    pub pair: CrosstalkResult,
    /// Source pixel against all its neighbours.
    pub aggregate: CrosstalkResult,
}

pub fn crosstalk_experiment(
    scenario: &Scenario,
    probability: f64,
    per_pixel_rate: f64,
    duration_s: f64,
    min_counts: u64,
    seed: u64,
) -> Result<CrosstalkOutcome> {
    let s = block_flood(scenario, CROSSTALK_SOURCE, per_pixel_rate, probability)?;
    let run = simulate(&s, duration_s, seed)?;
    let src = CROSSTALK_SOURCE as u16;
    let cfg = CrosstalkConfig { duration_s: Some(duration_s), tick_ps: run.tick_ps, min_counts, ..Default::default() };
    let neighbors: Vec<u16> =
        s.geometry.neighbors(CROSSTALK_SOURCE, s.crosstalk.topology)?.into_iter().map(|n| n as u16).collect();
    let pair = crosstalk_bound(run.tags.iter().copied(), src, src + 1, &cfg)?;
    let aggregate = crosstalk_aggregate(run.tags.iter().copied(), src, &neighbors, &cfg)?;
    Ok(CrosstalkOutcome { pair, aggregate })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub target: String,
    pub recovered: f64,
    pub unit: String,
    pub pass: bool,
}

impl Check {
    fn within(name: &str, recovered: f64, target: f64, tol: f64, unit: &str) -> Self {
        Self {
            name: name.into(),
            target: format!("{target} +- {tol}"),
            recovered,
            unit: unit.into(),
            pass: (recovered - target).abs() <= tol,
        }
    }

    fn bounded(name: &str, recovered: f64, lo: f64, hi: f64, unit: &str) -> Self {
        Self { name: name.into(), target: format!("[{lo}, {hi}]"), recovered, unit: unit.into(), pass: recovered >= lo && recovered <= hi }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReproduceReport {
    pub seed: u64,
    pub effort: f64,
    pub checks: Vec<Check>,
    pub failures: Vec<StageFailure>,
    pub timings: Vec<StageTiming>,
    /// Analysis outputs of the stages that completed, for figures.
    #[serde(skip)]
    pub outputs: StageOutputs,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StageOutputs {
    pub bias: Option<BiasCurve>,
    pub spde_parallel: Option<EfficiencyResult>,
    pub spde_perpendicular: Option<EfficiencyResult>,
    pub mcr: Option<McrSweep>,
    pub jitter: Option<JitterResult>,
    pub crosstalk_null: Option<CrosstalkOutcome>,
    pub crosstalk_injected: Option<CrosstalkOutcome>,
}

impl ReproduceReport {
    pub fn all_passed(&self) -> bool {
        self.failures.is_empty() && self.checks.iter().all(|c| c.pass)
    }

    pub fn to_markdown(&self) -> String {
        let mut s = format!("# Characterization report\n\nseed {}, effort {}\n\n", self.seed, self.effort);
        s.push_str("| check | target | recovered | unit | result |\n|---|---|---|---|---|\n");
        for c in &self.checks {
            s.push_str(&format!(
                "| {} | {} | {:.6} | {} | {} |\n",
                c.name,
                c.target,
                c.recovered,
                c.unit,
                if c.pass { "PASS" } else { "FAIL" }
            ));
        }
        if !self.failures.is_empty() {
            s.push_str("\n## Failures\n\n");
            for f in &self.failures {
                s.push_str(&format!("- {}: {}\n", f.stage, f.error));
            }
        }
        s.push_str("\n## Timings\n\n");
        for t in &self.timings {
            s.push_str(&format!("- {}: {:.1} s\n", t.stage, t.seconds));
        }
        s
    }
}

/// Run-length knobs of [`reproduce`]. `effort` scales every duration;
/// values below one give quick, noisier runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Effort(pub f64);

impl Default for Effort {
    fn default() -> Self {
        Effort(1.0)
    }
}

/// Run every canonical experiment and score it. Stage errors are recorded
/// in `failures` and do not stop later stages.
pub fn reproduce(scenario: &Scenario, seed: u64, effort: Effort) -> ReproduceReport {
    let e = effort.0;
    let mut report = ReproduceReport { seed, effort: e, ..Default::default() };

    let mut dark_run = None;
    stage(&mut report, "dark count rate", &mut || {
        let d21 = dark_experiment(scenario, 21.0, 60.0 * e, sub_seed(seed, 100))?;
        let d23 = dark_experiment(scenario, 23.0, 10.0 * e, sub_seed(seed, 101))?;
        let ratio = d23.total_rate() / d21.total_rate();
        let checks = vec![
            Check::within("aggregate DCR at 21 uA", d21.total_rate(), 1280.0, 128.0, "cps"),
            Check::bounded("DCR(23 uA) / DCR(21 uA)", ratio, 5.0, f64::INFINITY, "ratio"),
        ];
        dark_run = Some(d21);
        Ok(checks)
    });
    let dark_run = dark_run.unwrap_or_default();
    let mut out = StageOutputs::default();

    stage(&mut report, "bias sweep", &mut || {
        let biases: Vec<f64> = (10..=23).map(f64::from).collect();
        let curve = bias_experiment(scenario, &biases, 1e6, 2.0 * e, 10.0 * e, sub_seed(seed, 200))?;
        let at21 = curve.at(21.0).ok_or_else(|| Error::Degenerate("no 21 uA point".into()))?;
        let check = Check::bounded("normalized PCR at 21 uA", at21.pcr_normalized, 0.99, f64::INFINITY, "ratio");
        out.bias = Some(curve);
        Ok(vec![check])
    });

    for (pol, target, name) in
        [(Polarization::Parallel, 0.777, "SPDE map (parallel)"), (Polarization::Perpendicular, 0.737, "SPDE map (perpendicular)")]
    {
        stage(&mut report, name, &mut || {
            if !(dark_run.duration_s > 0.0) {
                return Err(Error::Degenerate("dark run unavailable".into()));
            }
            let r = spde_experiment(scenario, pol, 2e4, 58.0 * e, &dark_run, sub_seed(seed, 300 + pol as u64))?.result;
            let mut checks = vec![Check::within(&format!("{name} mean"), r.mean, target, 0.01, "probability")];
            if pol == Polarization::Parallel {
                checks.push(Check::bounded(&format!("{name} min pixel"), r.min(), 0.752, 0.802, "probability"));
                checks.push(Check::bounded(&format!("{name} max pixel"), r.max(), 0.752, 0.802, "probability"));
                out.spde_parallel = Some(r);
            } else {
                out.spde_perpendicular = Some(r);
            }
            Ok(checks)
        });
    }

    stage(&mut report, "array SDE", &mut || {
        if !(dark_run.duration_s > 0.0) {
            return Err(Error::Degenerate("dark run unavailable".into()));
        }
        let sde = array_sde_experiment(scenario, EXPANDED_SPOT_UM, 1e6, 5.0 * e, &dark_run, sub_seed(seed, 400))?;
        Ok(vec![Check::within("array SDE, expanded spot", sde.value, 0.65, 0.02, "probability")])
    });

    stage(&mut report, "MCR sweep", &mut || {
        let cfg = McrSweepConfig { counts_per_pixel: 5e4 * e, ..Default::default() };
        let sweep = mcr_experiment(scenario, &cfg, sub_seed(seed, 500))?;
        let (lo, hi) = sweep.pixel_range();
        let checks = vec![
            Check::within("array MCR (3 dB)", sweep.array.mcr_3db_cps / 1e6, 645.0, 645.0 * 0.05, "Mcps"),
            Check::bounded("min pixel MCR", lo / 1e6, 8.2, 11.0, "Mcps"),
            Check::bounded("max pixel MCR", hi / 1e6, 8.2, 11.0, "Mcps"),
        ];
        out.mcr = Some(sweep);
        Ok(checks)
    });

    stage(&mut report, "pulsed jitter", &mut || {
        let r = jitter_experiment(scenario, 2e5, 0.5 * e, sub_seed(seed, 600))?;
        let fwhms: Vec<f64> = r.channels.values().filter_map(|c| c.fwhm_ps).collect();
        if fwhms.len() != scenario.pixel_count() {
            return Err(Error::Degenerate(format!("{} of {} channels resolved", fwhms.len(), scenario.pixel_count())));
        }
        let lo = fwhms.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = fwhms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        out.jitter = Some(r);
        Ok(vec![
            Check::within("min channel jitter FWHM", lo, 100.0, 5.0, "ps"),
            Check::within("max channel jitter FWHM", hi, 100.0, 5.0, "ps"),
        ])
    });

    stage(&mut report, "crosstalk", &mut || {
        let dur = 10.5 * e;
        let min = (1e6 * e) as u64;
        let null = crosstalk_experiment(scenario, 0.0, 1e5, dur, min, sub_seed(seed, 700))?;
        let inj = crosstalk_experiment(scenario, 0.01, 1e5, dur, min, sub_seed(seed, 701))?;
        let ub = null.pair.upper_bound_95.ok_or_else(|| Error::Degenerate("null bound undefined".into()))?;
        let ex = inj.aggregate.excess_fraction.ok_or_else(|| Error::Degenerate("excess undefined".into()))?;
        out.crosstalk_null = Some(null);
        out.crosstalk_injected = Some(inj);
        Ok(vec![
            Check::bounded("null crosstalk 95% upper bound", ub, 0.0, 0.001, "fraction"),
            Check::within("injected 1% crosstalk recovered", ex, 0.01, 0.002, "fraction"),
        ])
    });

    report.outputs = out;
    report
}

fn stage(report: &mut ReproduceReport, name: &str, f: &mut dyn FnMut() -> Result<Vec<Check>>) {
    let t0 = Instant::now();
    info!("stage: {name}");
    match f() {
        Ok(checks) => report.checks.extend(checks),
        Err(err) => report.failures.push(StageFailure { stage: name.into(), error: err.to_string() }),
    }
    report.timings.push(StageTiming { stage: name.into(), seconds: t0.elapsed().as_secs_f64() });
}
