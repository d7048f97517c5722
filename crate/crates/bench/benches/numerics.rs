use criterion::{criterion_group, criterion_main, Criterion};
use rwpmlab_core::disorder_relevance::{h_functional, CoarseGrainConfig};
use rwpmlab_core::kernels::{green_function, DEFAULT_TOL};
use rwpmlab_core::lattice_walk::{collision_local_time, sample_path};
use rwpmlab_core::pinning_model::{volterra_partition_checked, PinningModel};
use rwpmlab_core::renewal::{renewal_function, RenewalLaw, TimeGrid};
use rwpmlab_core::{JumpKernel, KernelTable, Stream};
use std::hint::black_box;

fn kernels(c: &mut Criterion) {
    let k = JumpKernel::simple(3).unwrap();
    c.bench_function("green_function_srw3", |b| b.iter(|| green_function(black_box(&k), 1.0).unwrap()));
    c.bench_function("kernel_table_t100", |b| b.iter(|| KernelTable::new(&k, 1.0, black_box(100.0), DEFAULT_TOL).unwrap()));
}

fn walks(c: &mut Criterion) {
    let k = JumpKernel::simple(3).unwrap();
    let x = sample_path(&k, 1.0, 100.0, &mut Stream::new(1).rng());
    let y = sample_path(&k, 1.0, 100.0, &mut Stream::new(2).rng());
    c.bench_function("collision_local_time_t100", |b| b.iter(|| collision_local_time(black_box(&x), &y, 100.0).unwrap()));
    let cfg = CoarseGrainConfig::new(200.0, 3.0).unwrap().with_a2(50.0).unwrap();
    let path = sample_path(&k, 1.0, 250.0, &mut Stream::new(3).rng());
    c.bench_function("h_functional_l200", |b| b.iter(|| h_functional(black_box(&path), &cfg).unwrap()));
}

fn solvers(c: &mut Criterion) {
    let k = JumpKernel::simple(3).unwrap();
    let law = RenewalLaw::pinning(&k, 1.0).unwrap();
    let grid = TimeGrid::hybrid(0.05, 100.0, 1000.0).unwrap();
    c.bench_function("renewal_function_t1000", |b| b.iter(|| renewal_function(black_box(&law), &grid).unwrap()));
    let model = PinningModel::new(&k, 1.0, 20.0, 0.05).unwrap();
    let params = model.params_z(1.0, 20.0).unwrap();
    let y = model.sample_disorder(20.0, Stream::new(4));
    let mut g = c.benchmark_group("volterra");
    g.sample_size(10);
    g.bench_function("checked_t20_h0.05", |b| b.iter(|| volterra_partition_checked(&model, &params, black_box(&y), 0.05).unwrap()));
    g.finish();
}

criterion_group!(benches, kernels, walks, solvers);
criterion_main!(benches);
