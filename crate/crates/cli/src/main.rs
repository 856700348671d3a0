//! `snspd`: simulate SNSPD array acquisitions, analyse tag streams and
//! regenerate the characterization figures.

mod analyze;
mod output;
mod plot;
mod svg;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use snspd_core::analysis::{CountSummary, CrosstalkConfig};
use snspd_core::reproduce::{reproduce, Effort, CROSSTALK_SOURCE};
use snspd_core::tagio::write_tags;
use snspd_core::{simulate, Scenario, ScenarioConfig, Topology};

use crate::analyze::Metadata;
use crate::output::{ChannelRate, OutDir, RunManifest, RunSummary};
use crate::plot::{render, Kind, Table};

#[derive(Parser)]
#[command(name = "snspd", version, about = "SNSPD imaging-array simulator and characterization toolkit")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Root for default output directories.
    #[arg(long, global = true, env = "SNSPD_OUT", default_value = "snspd-out")]
    out_root: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a tag file from a scenario.
    Simulate(SimulateArgs),
    /// Run one analysis described by a metadata file.
    Analyze(AnalyzeArgs),
    /// Re-render an SVG figure from a stored CSV.
    Plot(PlotArgs),
    /// Run every canonical experiment and write a scored report.
    Reproduce(ReproduceArgs),
    /// Print the default scenario, or validate one.
    Scenario(ScenarioArgs),
}

#[derive(Args)]
struct Common {
    /// Output directory (defaults to <out-root>/<command>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overwrite existing outputs.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario JSON; the built-in default when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Acquisition length in seconds (scenario value, else 1).
    #[arg(long)]
    duration: Option<f64>,
    /// Random seed (scenario value, else 1).
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    /// Metadata JSON describing the recordings.
    metadata: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    /// CSV written by `analyze` or `reproduce`.
    csv: PathBuf,
    /// SVG path (defaults to the CSV path with an .svg extension).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct ReproduceArgs {
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Scales every acquisition length; below 1 gives quick, noisy runs.
    #[arg(long, default_value_t = 1.0)]
    effort: f64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Validate this scenario file instead of printing the default.
    #[arg(long)]
    check: Option<PathBuf>,
}

const TAG_FILE: &str = "tags.bin";

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: --jobs {n}: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a, &cli.out_root),
        Command::Analyze(a) => cmd_analyze(a, &cli.out_root),
        Command::Plot(a) => cmd_plot(a),
        Command::Reproduce(a) => cmd_reproduce(a, &cli.out_root),
        Command::Scenario(a) => cmd_scenario(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn load_scenario(path: Option<&Path>) -> Result<ScenarioConfig> {
    match path {
        None => Ok(ScenarioConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading scenario {}", p.display()))?;
            ScenarioConfig::from_json(&text).with_context(|| format!("scenario {}", p.display()))
        }
    }
}

fn out_dir(common: &Common, root: &Path, command: &str) -> PathBuf {
    common.out.clone().unwrap_or_else(|| root.join(command))
}

/// Run `body`, then write the manifest whatever the outcome.
fn with_manifest(dir: &OutDir, mut manifest: RunManifest, body: impl FnOnce(&mut RunManifest) -> Result<bool>) -> Result<bool> {
    let result = body(&mut manifest);
    match &result {
        Ok(ok) => manifest.ok = *ok,
        Err(e) => {
            manifest.ok = false;
            manifest.errors.push(format!("{e:#}"));
        }
    }
    dir.finish(&manifest)?;
    result
}

fn cmd_simulate(a: &SimulateArgs, root: &Path) -> Result<bool> {
    let metas = ["heatmap.meta.json", "crosstalk.meta.json", "jitter.meta.json"];
    let names: Vec<&str> = [TAG_FILE, "scenario.json"].into_iter().chain(metas).collect();
    let dir = OutDir::prepare(out_dir(&a.common, root, "simulate"), &names, a.common.force)?;
    let manifest = RunManifest {
        command: "simulate".into(),
        scenario: a.scenario.clone(),
        out_dir: dir.path.clone(),
        seed: a.seed,
        duration_s: a.duration,
        ..Default::default()
    };
    with_manifest(&dir, manifest, |m| {
        let config = load_scenario(a.scenario.as_deref())?;
        let duration = a.duration.or(config.duration_s).unwrap_or(1.0);
        if !(duration > 0.0 && duration.is_finite()) {
            bail!("--duration must be positive, got {duration}");
        }
        let seed = a.seed.or(config.seed).unwrap_or(1);
        m.seed = Some(seed);
        m.duration_s = Some(duration);
        let scenario = config.resolve().context("resolving scenario")?;
        let run = simulate(&scenario, duration, seed)?;
        write_tags(run.tags.iter().copied(), dir.file(TAG_FILE), run.channel_count, run.sync_channel)?;
        m.record_file(&dir, TAG_FILE)?;
        dir.write(m, "scenario.json", config.to_json().as_bytes())?;

        let counts = CountSummary::from_run(&run);
        let channels: Vec<ChannelRate> = (0..run.channel_count)
            .map(|c| ChannelRate { channel: c, count: counts.count(c), rate_cps: counts.rate(c) })
            .collect();
        println!("{:>7} {:>10} {:>14}", "channel", "count", "rate (cps)");
        for c in &channels {
            let label = if Some(c.channel) == run.sync_channel { format!("{} sync", c.channel) } else { c.channel.to_string() };
            println!("{label:>7} {:>10} {:>14.1}", c.count, c.rate_cps);
        }
        println!("tags {}, TDC drops {}, crosstalk events {}", run.tags.len(), run.drops, run.crosstalk_spawned);
        for w in &run.warnings {
            eprintln!("warning: {w}");
        }

        write_metadata(&dir, m, &scenario, duration)?;
        m.figure_formats = vec!["svg".into(), "csv".into()];
        m.run = Some(RunSummary {
            tags: run.tags.len() as u64,
            drops: run.drops,
            crosstalk_spawned: run.crosstalk_spawned,
            sync_channel: run.sync_channel,
            channels,
            warnings: run.warnings.clone(),
        });
        println!("wrote {}", dir.path.display());
        Ok(true)
    })
}

/// Ready-to-use `analyze` metadata for the single-recording analyses.
fn write_metadata(dir: &OutDir, m: &mut RunManifest, scenario: &Scenario, duration: f64) -> Result<()> {
    let recording = json!({ "path": TAG_FILE, "duration_s": duration });
    let geometry = serde_json::to_value(&scenario.geometry)?;
    dir.write_json(m, "heatmap.meta.json", &json!({ "kind": "heatmap", "recording": recording, "geometry": geometry }))?;
    m.analyses.push("heatmap".into());

    let source = CROSSTALK_SOURCE.min(scenario.pixel_count() - 1);
    let targets = scenario.geometry.neighbors(source, Topology::FourNeighbor)?;
    let cfg = CrosstalkConfig::default();
    dir.write_json(
        m,
        "crosstalk.meta.json",
        &json!({
            "kind": "crosstalk",
            "recording": recording,
            "source": source,
            "targets": targets,
            "bin_ns": cfg.bin_ns,
            "n_bins": cfg.n_bins,
            "min_counts": cfg.min_counts,
        }),
    )?;
    m.analyses.push("crosstalk".into());

    if let (Some(sync), Some(period)) = (scenario.source.sync_channel(), scenario.source.rep_period_ps()) {
        dir.write_json(
            m,
            "jitter.meta.json",
            &json!({ "kind": "jitter", "recording": recording, "sync_channel": sync, "rep_period_ps": period }),
        )?;
        m.analyses.push("jitter".into());
    }
    Ok(())
}

fn cmd_analyze(a: &AnalyzeArgs, root: &Path) -> Result<bool> {
    let meta = Metadata::load(&a.metadata)?;
    if meta.kind() != a.kind {
        bail!(
            "metadata {} describes a `{}` analysis but --kind {} was requested",
            a.metadata.display(),
            meta.kind().name(),
            a.kind.name()
        );
    }
    let kind = a.kind;
    let names = ["result.json".to_string(), format!("{}.csv", kind.name()), format!("{}.svg", kind.name())];
    let names: Vec<&str> = names.iter().map(String::as_str).collect();
    let dir = OutDir::prepare(out_dir(&a.common, root, &format!("analyze-{}", kind.name())), &names, a.common.force)?;
    let manifest = RunManifest {
        command: "analyze".into(),
        metadata: Some(a.metadata.clone()),
        out_dir: dir.path.clone(),
        analyses: vec![kind.name().into()],
        figure_formats: vec!["svg".into(), "csv".into()],
        ..Default::default()
    };
    with_manifest(&dir, manifest, |m| {
        let outcome = analyze::run(&meta)?;
        dir.write_json(m, "result.json", &outcome)?;
        analyze::write_figure(&dir, m, "", kind, &outcome.table())?;
        println!("{}: {}", kind.name(), outcome.summary());
        println!("wrote {}", dir.path.display());
        Ok(true)
    })
}

fn cmd_plot(a: &PlotArgs) -> Result<bool> {
    let text = fs::read_to_string(&a.csv).with_context(|| format!("reading {}", a.csv.display()))?;
    let table = Table::from_csv(&text).with_context(|| format!("parsing {}", a.csv.display()))?;
    let svg = render(a.kind, &table).with_context(|| format!("{} figure from {}", a.kind.name(), a.csv.display()))?;
    let out = a.out.clone().unwrap_or_else(|| a.csv.with_extension("svg"));
    if out.exists() && !a.force {
        bail!("{} exists; pass --force to overwrite", out.display());
    }
    fs::write(&out, svg).with_context(|| format!("writing {}", out.display()))?;
    println!("wrote {}", out.display());
    Ok(true)
}

fn cmd_reproduce(a: &ReproduceArgs, root: &Path) -> Result<bool> {
    if !(a.effort > 0.0 && a.effort.is_finite()) {
        bail!("--effort must be positive, got {}", a.effort);
    }
    let dir = OutDir::prepare(out_dir(&a.common, root, "reproduce"), &["report.json", "report.md"], a.common.force)?;
    let manifest = RunManifest {
        command: "reproduce".into(),
        scenario: a.scenario.clone(),
        out_dir: dir.path.clone(),
        seed: Some(a.seed),
        analyses: ["dark", "bias", "spde", "sde", "mcr", "jitter", "crosstalk"].map(String::from).to_vec(),
        figure_formats: vec!["svg".into(), "csv".into(), "md".into()],
        ..Default::default()
    };
    with_manifest(&dir, manifest, |m| {
        let report = match load_scenario(a.scenario.as_deref()).and_then(|c| Ok(c.resolve()?)) {
            Ok(s) => reproduce(&s, a.seed, Effort(a.effort)),
            Err(e) => {
                let mut r = snspd_core::reproduce::ReproduceReport { seed: a.seed, effort: a.effort, ..Default::default() };
                r.failures.push(snspd_core::reproduce::StageFailure { stage: "scenario".into(), error: format!("{e:#}") });
                r
            }
        };
        let o = &report.outputs;
        let figures: Vec<(&str, Kind, Option<Table>)> = vec![
            ("bias/", Kind::Bias, o.bias.as_ref().map(analyze::bias_table)),
            ("spde-parallel/", Kind::Spde, o.spde_parallel.as_ref().map(analyze::spde_table)),
            ("spde-perpendicular/", Kind::Spde, o.spde_perpendicular.as_ref().map(analyze::spde_table)),
            ("mcr/", Kind::Mcr, o.mcr.as_ref().map(|s| analyze::mcr_table(&s.array))),
            ("jitter/", Kind::Jitter, o.jitter.as_ref().map(analyze::jitter_table)),
            ("crosstalk-null/", Kind::Crosstalk, o.crosstalk_null.as_ref().map(|c| analyze::crosstalk_table(&c.pair))),
            (
                "crosstalk-injected/",
                Kind::Crosstalk,
                o.crosstalk_injected.as_ref().map(|c| analyze::crosstalk_table(&c.aggregate)),
            ),
        ];
        for (prefix, kind, table) in figures {
            if let Some(t) = table {
                analyze::write_figure(&dir, m, prefix, kind, &t)?;
            }
        }
        dir.write_json(m, "report.json", &report)?;
        dir.write(m, "report.md", report.to_markdown().as_bytes())?;
        for c in &report.checks {
            println!(
                "{:<44} target {:<10} recovered {:<12.6} {:<11} {}",
                c.name,
                c.target,
                c.recovered,
                c.unit,
                if c.pass { "PASS" } else { "FAIL" }
            );
        }
        for f in &report.failures {
            println!("stage failed: {}: {}", f.stage, f.error);
            m.errors.push(format!("{}: {}", f.stage, f.error));
        }
        let passed = report.checks.iter().filter(|c| c.pass).count();
        println!("{passed}/{} checks within tolerance, {} failed stages", report.checks.len(), report.failures.len());
        println!("wrote {}", dir.path.display());
        // the exit status reports completion; tolerance verdicts live in the report
        Ok(report.failures.is_empty())
    })
}

fn cmd_scenario(a: &ScenarioArgs) -> Result<bool> {
    match &a.check {
        None => {
            let text = ScenarioConfig::default().to_json() + "\n";
            match std::io::stdout().write_all(text.as_bytes()) {
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
                r => r?,
            }
        }
        Some(p) => {
            let s = load_scenario(Some(p))?.resolve().with_context(|| format!("scenario {}", p.display()))?;
            println!("{}: ok, {} pixels, {} channels", p.display(), s.pixel_count(), s.channel_count());
        }
    }
    Ok(true)
}
