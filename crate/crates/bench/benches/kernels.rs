use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use tfelab::interface_ode::{find_periodic_orbit, OrbitMethod};
use tfelab::{kernel_1d, Grid1D};

fn kernel_table(c: &mut Criterion) {
    let mut group = c.benchmark_group("kernel_1d");
    group.sample_size(10);
    for cells in [1000usize, 4000] {
        let grid = Grid1D::new(-40.0, 40.0, cells).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(cells), &grid, |b, g| {
            b.iter(|| kernel_1d(*g, 1e-13).unwrap())
        });
    }
    group.finish();
}

fn orbit(c: &mut Criterion) {
    let mut group = c.benchmark_group("periodic_orbit");
    group.sample_size(10);
    group.bench_function("attractor n=1", |b| {
        b.iter(|| find_periodic_orbit(1.0, OrbitMethod::ForwardAttractor).unwrap())
    });
    group.finish();
}

criterion_group!(benches, kernel_table, orbit);
criterion_main!(benches);
