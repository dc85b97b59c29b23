//! Cost of the pieces of one optimization iteration on the arch mesh
//! (200x100 elements) at the uniform starting design.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use presstopo::{library, mma_update, Evaluator, FlowAnalysis, MmaState, Problem};

fn arch() -> Problem {
    library::load("arch").unwrap().build().unwrap()
}

fn stages(c: &mut Criterion) {
    let problem = arch();
    let x = problem.initial_design();
    let mut eval = Evaluator::new(&problem).unwrap();
    let analysis = eval.analyze(&x).unwrap();
    let grads = eval.gradients(&analysis, true).unwrap();

    let mut group = c.benchmark_group("arch");
    group.sample_size(10);

    group.bench_function("filter", |b| b.iter(|| eval.filter().apply(black_box(&x)).unwrap()));

    let mut flow = FlowAnalysis::new(&problem.mesh, problem.darcy, &problem.bc).unwrap();
    let rho = &analysis.density.physical;
    group.bench_function("pressure_solve", |b| b.iter(|| flow.solve(black_box(rho)).unwrap()));

    group.bench_function("analyze", |b| b.iter(|| eval.analyze(black_box(&x)).unwrap()));

    group.bench_function("gradients", |b| {
        b.iter(|| eval.gradients(black_box(&analysis), true).unwrap())
    });

    let n = problem.mesh.element_count();
    group.bench_function("mma_update", |b| {
        b.iter(|| {
            let mut mma = MmaState::new(n, problem.mesh.passive_mask().to_vec(), Default::default()).unwrap();
            mma_update(&mut mma, &x, &grads.objective, analysis.constraint, &grads.constraint).unwrap()
        })
    });
    group.finish();
}

criterion_group!(benches, stages);
criterion_main!(benches);
