use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use percnat::arms::{ArmGeometry, ArmScratch};
use percnat::content::{box_count_segments, neighborhood_area, sample_interface, unit_box_domain};
use percnat::{trace_interface, AnnulusSpec, ArmPattern, BoxSpec, Coloring, Point, RngStream, Shape};

fn tracing(c: &mut Criterion) {
    let mut group = c.benchmark_group("trace_interface");
    for k in [5, 7] {
        let eta = 2f64.powi(-k);
        let domain = unit_box_domain(eta).unwrap();
        let mut t = 0;
        group.bench_with_input(BenchmarkId::from_parameter(format!("eta=2^-{k}")), &domain, |b, d| {
            b.iter(|| {
                t += 1;
                let c = Coloring::sample(d, RngStream::new(1, t)).with_boundary("-i", "i").unwrap();
                black_box(trace_interface(&c, "-i", "i").unwrap().len())
            })
        });
    }
    group.finish();
}

fn arms(c: &mut Criterion) {
    let patterns: Vec<ArmPattern> = (2..=5).map(ArmPattern::preset).collect();
    let mut group = c.benchmark_group("arm_events");
    for k in [5, 7] {
        let geom = ArmGeometry::new(&AnnulusSpec::site_to_radius(Point::new(0.0, 0.0), 1.0), 2f64.powi(-k)).unwrap();
        let mut scratch = ArmScratch::default();
        let mut out = Vec::new();
        let mut t = 0;
        group.bench_function(format!("eta=2^-{k}"), |b| {
            b.iter(|| {
                t += 1;
                geom.evaluate_sample(RngStream::new(2, t), &patterns, &mut scratch, &mut out);
                black_box(out.iter().filter(|h| **h).count())
            })
        });
    }
    group.finish();
}

fn content(c: &mut Criterion) {
    let domain = unit_box_domain(2f64.powi(-8)).unwrap();
    let curve = sample_interface(&domain, RngStream::new(3, 0), "-i", "i").unwrap();
    let v = curve.vertices();
    let region = BoxSpec::new(Point::new(0.0, 0.0), 0.5);
    c.bench_function("box_count eps=2^-4", |b| {
        b.iter(|| {
            let segs = v.windows(2).map(|w| (w[0], w[1]));
            black_box(box_count_segments(segs, domain.region(), &region, 1.0 / 16.0).unwrap())
        })
    });
    let shape = Shape::from_curve(&curve);
    c.bench_function("neighborhood_area r=2^-5", |b| {
        b.iter(|| black_box(neighborhood_area(&shape, 1.0 / 32.0).unwrap()))
    });
}

criterion_group!(benches, tracing, arms, content);
criterion_main!(benches);
