use criterion::{black_box, criterion_group, criterion_main, Criterion, Throughput};

use snspd_bench::flood_run;
use snspd_core::analysis::{crosstalk_bound, heatmap, jitter_fwhm, CrosstalkConfig, JitterConfig};
use snspd_core::reproduce::pulsed_flood;
use snspd_core::tagio::{stream_stats, write_tags, TagReader};
use snspd_core::{simulate, ArrayGeometry, Scenario};

fn analyses(c: &mut Criterion) {
    let run = flood_run(1e7, 0.2, 1);
    let n = run.tags.len() as u64;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bench.tags");
    write_tags(run.tags.iter().copied(), &path, run.channel_count, run.sync_channel).unwrap();
    let geometry = ArrayGeometry::default();

    let mut g = c.benchmark_group("tag stream");
    g.throughput(Throughput::Elements(n));
    g.sample_size(20);
    g.bench_function("read + count", |b| {
        b.iter(|| stream_stats(TagReader::open(&path).unwrap().map(Result::unwrap)).total)
    });
    g.bench_function("heatmap", |b| b.iter(|| heatmap(black_box(&run.tags).iter().copied(), &geometry, true)));
    let cfg = CrosstalkConfig { duration_s: Some(run.duration_s), min_counts: 1, ..Default::default() };
    g.bench_function("interarrival", |b| {
        b.iter(|| crosstalk_bound(black_box(&run.tags).iter().copied(), 27, 28, &cfg).unwrap())
    });
    g.finish();

    let s = pulsed_flood(&Scenario::nominal(), 20.0, 2e5).unwrap();
    let pulsed = simulate(&s, 0.05, 2).unwrap();
    let jc = JitterConfig::new(64, 50_000.0, s.tdc.tick_ps);
    let mut g = c.benchmark_group("pulsed stream");
    g.throughput(Throughput::Elements(pulsed.tags.len() as u64));
    g.sample_size(10);
    g.bench_function("jitter histogram", |b| b.iter(|| jitter_fwhm(black_box(&pulsed.tags).iter().copied(), &jc).unwrap()));
    g.finish();
}

fn synthesis(c: &mut Criterion) {
    let mut g = c.benchmark_group("synthesis");
    g.sample_size(10);
    g.bench_function("flood 1e7 photons/s, 20 ms", |b| b.iter(|| flood_run(1e7, 0.02, 3).tags.len()));
    g.finish();
}

criterion_group!(benches, analyses, synthesis);
criterion_main!(benches);
