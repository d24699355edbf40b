use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use superlime::explain::lasso::WeightedProblem;

/// Deterministic pseudo-random binary design with a sparse linear response.
fn problem(n: usize, p: usize) -> WeightedProblem {
    let mut state = 0x9e37_79b9_7f4a_7c15u64;
    let mut bit = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        state & 1 == 1
    };
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..p).map(|_| f64::from(u8::from(bit()))).collect())
        .collect();
    let y: Vec<f64> = rows.iter().map(|r| 0.6 * r[0] + 0.3 * r[p / 2] - 0.2 * r[p - 1]).collect();
    let weights: Vec<f64> = rows
        .iter()
        .map(|r| {
            let off = r.iter().filter(|&&v| v == 0.0).count() as f64 / p as f64;
            (-off * off / 0.0625).exp()
        })
        .collect();
    WeightedProblem::new(&rows, &y, &weights).unwrap()
}

fn lasso(c: &mut Criterion) {
    let mut group = c.benchmark_group("k_lasso");
    for (n, p) in [(500, 25), (1000, 100)] {
        let prob = problem(n, p);
        group.bench_with_input(BenchmarkId::new("select_k5", format!("{n}x{p}")), &prob, |b, prob| {
            b.iter(|| prob.k_lasso_select(5))
        });
    }
    group.finish();
}

criterion_group!(benches, lasso);
criterion_main!(benches);
