use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use superlime::synth::synth_corpus;
use superlime::{Method, Segmenter};

fn segmenters(c: &mut Criterion) {
    let mut group = c.benchmark_group("segment");
    group.sample_size(10);
    for size in [128, 256] {
        let img = synth_corpus(1, size, 3)[0].image.clone();
        for m in Method::ALL {
            let seg = Segmenter::with_defaults(m);
            group.bench_with_input(BenchmarkId::new(m.name(), size), &img, |b, img| {
                b.iter(|| seg.segment(img, 0).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, segmenters);
criterion_main!(benches);
