use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};
use cusp_spectral::eigen::EigOptions;
use cusp_spectral::forms::{assemble_q_t, AssemblyOptions};
use cusp_spectral::model::mode_branch;
use cusp_spectral::modespace::{CuspGrid, DofMap, MeshParams};
use cusp_spectral::par;

fn grid() -> Arc<CuspGrid> {
    Arc::new(CuspGrid::graded(MeshParams::new(0.02, 15.0), 1.5, Some(1.25), 3.0).unwrap())
}

fn bench_paths(c: &mut Criterion, name: &str, mut f: impl FnMut()) {
    let mut group = c.benchmark_group(name);
    group.sample_size(10);
    for (label, seq) in [("parallel", false), ("sequential", true)] {
        par::set_sequential(seq);
        group.bench_function(label, |b| b.iter(&mut f));
    }
    par::set_sequential(false);
    group.finish();
}

fn assembly(c: &mut Criterion) {
    let dofs = Arc::new(DofMap::new(grid(), 6));
    let opts = AssemblyOptions::default();
    bench_paths(c, "assemble_q_t", || {
        assemble_q_t(0.05, 1.5, 1.25, &dofs, &opts).unwrap();
    });
}

fn sweep(c: &mut Criterion) {
    let g = grid();
    let ts: Vec<f64> = (0..32).map(|i| 0.02 * 10f64.powf(i as f64 / 31.0)).collect();
    let opts = EigOptions::default();
    bench_paths(c, "mode_branch_sweep", || {
        mode_branch(1, &ts, 4, &g, &opts).unwrap();
    });
}

criterion_group!(benches, assembly, sweep);
criterion_main!(benches);
