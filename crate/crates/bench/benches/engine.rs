use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;
use stonf_core::io::bundled;
use stonf_core::rational::qi;
use stonf_core::sim::sample_convolution;
use stonf_core::text::parse_noise;
use stonf_core::{construct, parse_spec, verify_order, BuiltSpec, NoisePath, NormalForm, OrderSpec, Policy};

fn toy(order: &str) -> (BuiltSpec, Policy) {
    let doc = parse_spec(bundled("toy").unwrap()).unwrap();
    let b = doc.build(Some(&OrderSpec::parse(order).unwrap())).unwrap();
    (b, doc.policy)
}

fn derive(c: &mut Criterion) {
    let mut g = c.benchmark_group("construct");
    g.sample_size(10);
    for order in ["e4,s3", "e6,s3"] {
        let (b, policy) = toy(order);
        g.bench_function(format!("toy {order}"), |bench| {
            bench.iter(|| construct(black_box(&b.spec), policy.clone()).unwrap())
        });
    }
    g.finish();
}

fn verify(c: &mut Criterion) {
    let mut g = c.benchmark_group("verify_order");
    g.sample_size(10);
    let (b, policy) = toy("e6,s3");
    let nf: NormalForm = construct(&b.spec, policy).unwrap();
    g.bench_function("toy e6,s3", |bench| bench.iter(|| verify_order(black_box(&b.spec), &nf).unwrap()));
    g.finish();
}

fn sampling(c: &mut Criterion) {
    let path = NoisePath::generate(1, 1e-3, 100_000, 7, 0).unwrap();
    let mut g = c.benchmark_group("sample");
    for text in ["Z[-1]{ phi[0] }", "Z[+1]{ phi[0]*Z[-1]{ phi[0] } }", "Z[-1]{ Z[-1]{ phi[0] }^2 }"] {
        let poly = parse_noise(text).unwrap();
        let (e, k) = poly.iter().next().unwrap();
        assert_eq!(*k, qi(1));
        g.bench_function(text, |bench| bench.iter(|| sample_convolution(black_box(&path), e).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, derive, verify, sampling);
criterion_main!(benches);
