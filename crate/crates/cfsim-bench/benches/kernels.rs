//! Benchmarks for the hot numeric kernels: the deterministic SINR fixed
//! point, exact MMSE SINR evaluation, and per-AP power prediction at two
//! network scales with equal AP density.

use std::hint::black_box;

use cfsim_bench::instance;
use cfsim_core::mlp::{top_khat, MlpModel};
use cfsim_core::ul_sinr::{exact_sinr_mmse, rm_ap1};
use cfsim_core::UlPowerVector;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn bench_rm_fixed_point(c: &mut Criterion) {
    let inst = instance(128, 16, 16, 1000.0, 11);
    let eta = UlPowerVector::full(16);
    c.bench_function("rm_ap1_m128_k16", |b| {
        b.iter(|| {
            rm_ap1(
                black_box(&inst.gamma),
                black_box(&inst.net.beta),
                &eta,
                inst.rho_u,
                1e-9,
                500,
            )
            .expect("fixed point")
        })
    });
}

fn bench_exact_sinr(c: &mut Criterion) {
    let inst = instance(64, 8, 8, 1000.0, 12);
    let eta = UlPowerVector::full(8);
    c.bench_function("exact_sinr_mmse_m64_k8", |b| {
        b.iter(|| {
            exact_sinr_mmse(
                black_box(&inst.g_hat),
                &inst.gamma,
                &inst.net.beta,
                &eta,
                inst.rho_u,
            )
            .expect("sinr")
        })
    });
}

// Per-AP prediction cost must stay flat as the network grows: each AP only
// reads its own strongest large-scale coefficients.
fn bench_nn_per_ap(c: &mut Criterion) {
    let khat = 4;
    let model = MlpModel::init(khat, 13).expect("model");
    let mut group = c.benchmark_group("nn_predict_per_ap");
    for (m, area) in [(64usize, 500.0f64), (256, 1000.0)] {
        let inst = instance(m, 8, 8, area, 14);
        group.bench_with_input(BenchmarkId::from_parameter(m), &inst, |b, inst| {
            b.iter(|| {
                let mut acc = 0.0;
                for mm in 0..m {
                    let strongest = top_khat(inst.net.beta.row(mm), khat).expect("top entries");
                    acc += model.forward(strongest.view()).expect("forward");
                }
                black_box(acc)
            })
        });
    }
    group.finish();
}

criterion_group!(
    kernels,
    bench_rm_fixed_point,
    bench_exact_sinr,
    bench_nn_per_ap
);
criterion_main!(kernels);
