use criterion::{criterion_group, criterion_main, Criterion};
use devgeo_core::report::{cmd_pipeline, RunConfig};
use devgeo_core::synthetic::{write_fixture, DEFAULT_SEED};

fn fixture_pipeline(c: &mut Criterion) {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path(), DEFAULT_SEED).unwrap();
    let mut group = c.benchmark_group("fixture_pipeline");
    group.sample_size(10);
    for jobs in ["1", "0"] {
        let overrides = [("jobs".to_string(), jobs.to_string())];
        let cfg = RunConfig::load(Some(&dir.path().join("pipeline.conf")), &overrides, dir.path()).unwrap();
        group.bench_function(format!("jobs={jobs}"), |b| b.iter(|| cmd_pipeline(&cfg).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, fixture_pipeline);
criterion_main!(benches);
