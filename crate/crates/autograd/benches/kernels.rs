//! Sequential-vs-parallel kernel comparison.
//!
//! Run with `cargo bench -p offrec-autograd`. The parallel dispatch is
//! bitwise-equivalent to the serial path; these benches quantify its
//! speedup (or overhead on a single core) on the matrix shapes the training
//! loops actually produce.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use offrec_autograd::kernels;

struct Case {
    name: &'static str,
    m: usize,
    k: usize,
    n: usize,
}

// Shapes: transformer token projection, feed-forward, LSTM step, LSTM
// input lift.
const CASES: &[Case] = &[
    Case { name: "proj_3840x16x64", m: 3840, k: 16, n: 64 },
    Case { name: "ffw_3840x64x16", m: 3840, k: 64, n: 16 },
    Case { name: "lstm_step_128x32x128", m: 128, k: 32, n: 128 },
    Case { name: "lstm_lift_3840x16x128", m: 3840, k: 16, n: 128 },
    Case { name: "square_256", m: 256, k: 256, n: 256 },
];

fn bench_matmul(c: &mut Criterion) {
    let mut rng = ChaCha12Rng::seed_from_u64(1);
    let mut group = c.benchmark_group("matmul_nn");
    for case in CASES {
        let a: Vec<f32> = (0..case.m * case.k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f32> = (0..case.k * case.n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut out = vec![0.0f32; case.m * case.n];
        group.throughput(Throughput::Elements((2 * case.m * case.k * case.n) as u64));

        group.bench_with_input(BenchmarkId::new("parallel", case.name), case, |bch, case| {
            bch.iter(|| {
                out.iter_mut().for_each(|v| *v = 0.0);
                kernels::matmul_nn(&mut out, &a, &b, case.m, case.k, case.n);
            });
        });
        group.bench_with_input(BenchmarkId::new("serial", case.name), case, |bch, case| {
            bch.iter(|| {
                out.iter_mut().for_each(|v| *v = 0.0);
                kernels::serial::matmul_nn(&mut out, &a, &b, case.m, case.k, case.n);
            });
        });
    }
    group.finish();
}

fn bench_matmul_nt(c: &mut Criterion) {
    let mut rng = ChaCha12Rng::seed_from_u64(2);
    let mut group = c.benchmark_group("matmul_nt");
    for case in CASES {
        let a: Vec<f32> = (0..case.m * case.k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f32> = (0..case.n * case.k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut out = vec![0.0f32; case.m * case.n];
        group.throughput(Throughput::Elements((2 * case.m * case.k * case.n) as u64));

        group.bench_with_input(BenchmarkId::new("parallel", case.name), case, |bch, case| {
            bch.iter(|| {
                out.iter_mut().for_each(|v| *v = 0.0);
                kernels::matmul_nt(&mut out, &a, &b, case.m, case.k, case.n);
            });
        });
        group.bench_with_input(BenchmarkId::new("serial", case.name), case, |bch, case| {
            bch.iter(|| {
                out.iter_mut().for_each(|v| *v = 0.0);
                kernels::serial::matmul_nt(&mut out, &a, &b, case.m, case.k, case.n);
            });
        });
    }
    group.finish();
}

criterion_group!(benches, bench_matmul, bench_matmul_nt);
criterion_main!(benches);
