//! Single-worker versus full-pool timings for the hot paths. Build with
//! `--no-default-features` to time the purely sequential code instead.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use segrobust::label_space::{region_wise_targets, LabelScheme};
use segrobust::metrics::{euclidean_distance_transform, evaluate_patient, hd95, BinaryMask, Hd95Options};
use segrobust::par::with_jobs;
use segrobust::stats::{compare_paired, StatConfig};
use segrobust::volume_io::{ValueKind, VoxelGrid};

fn ball(dims: [usize; 3], center: [f64; 3], radius: f64) -> Vec<bool> {
    let mut bits = Vec::with_capacity(dims.iter().product());
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let d = [x as f64 - center[0], y as f64 - center[1], z as f64 - center[2]];
                bits.push(d.iter().map(|v| v * v).sum::<f64>() <= radius * radius);
            }
        }
    }
    bits
}

fn labels(dims: [usize; 3], shift: f64) -> VoxelGrid {
    let c = [dims[0] as f64 / 2.0 + shift, dims[1] as f64 / 2.0, dims[2] as f64 / 2.0];
    let outer = ball(dims, c, 30.0);
    let mid = ball(dims, c, 18.0);
    let inner = ball(dims, c, 8.0);
    let data = (0..outer.len())
        .map(|i| match (outer[i], mid[i], inner[i]) {
            (_, _, true) => 1.0,
            (_, true, _) => 4.0,
            (true, _, _) => 2.0,
            _ => 0.0,
        })
        .collect();
    VoxelGrid::with_spacing(dims, [1.0; 3], data, ValueKind::IntegerLabel).unwrap()
}

fn pools() -> Vec<(&'static str, Option<usize>)> {
    vec![("1-thread", Some(1)), ("full-pool", None)]
}

fn bench_edt(c: &mut Criterion) {
    let dims = [160, 160, 100];
    let a = BinaryMask::with_spacing(dims, [1.0; 3], ball(dims, [80.0, 80.0, 50.0], 35.0)).unwrap();
    let b = BinaryMask::with_spacing(dims, [1.0; 3], ball(dims, [84.0, 78.0, 50.0], 33.0)).unwrap();
    let mut g = c.benchmark_group("edt");
    g.sample_size(10);
    for (name, jobs) in pools() {
        g.bench_with_input(BenchmarkId::new("transform", name), &jobs, |bch, &jobs| {
            bch.iter(|| with_jobs(jobs, || euclidean_distance_transform(&a).unwrap()))
        });
        g.bench_with_input(BenchmarkId::new("hd95", name), &jobs, |bch, &jobs| {
            bch.iter(|| with_jobs(jobs, || hd95(&a, &b).unwrap()))
        });
    }
    g.finish();
}

fn bench_patient(c: &mut Criterion) {
    let dims = [240, 240, 155];
    let pred = labels(dims, 3.0);
    let reference = labels(dims, 0.0);
    let scheme = LabelScheme::brats();
    let targets = region_wise_targets();
    let mut g = c.benchmark_group("evaluate_patient");
    g.sample_size(10);
    for (name, jobs) in pools() {
        g.bench_with_input(BenchmarkId::from_parameter(name), &jobs, |bch, &jobs| {
            bch.iter(|| {
                with_jobs(jobs, || {
                    evaluate_patient("p", &pred, &reference, &targets, &scheme, Hd95Options::default()).unwrap()
                })
            })
        });
    }
    g.finish();
}

fn bench_bootstrap(c: &mut Criterion) {
    let diffs: Vec<f64> = (0..400).map(|i| ((i * 37 % 101) as f64 - 50.0) / 10.0).collect();
    let cfg = StatConfig { replicates: 2000, ..StatConfig::default() };
    let mut g = c.benchmark_group("bootstrap");
    for (name, jobs) in pools() {
        g.bench_with_input(BenchmarkId::from_parameter(name), &jobs, |bch, &jobs| {
            bch.iter(|| with_jobs(jobs, || compare_paired("WT", &diffs, &cfg, true).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, bench_edt, bench_patient, bench_bootstrap);
criterion_main!(benches);
