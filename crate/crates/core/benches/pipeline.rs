use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use opgeom::analysis::analyze_point;
use opgeom::field::Chart;
use opgeom::model::{build_model, naturality_audit, select_natural_coordinates};
use opgeom::par::Exec;
use opgeom::random::{random_operator, random_unipotent};
use opgeom::Tolerances;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

fn point(c: &mut Criterion) {
    let tol = Tolerances::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut group = c.benchmark_group("analyze_point");
    for (n, m) in [(2, 2), (2, 3), (3, 3)] {
        let op = random_operator(&mut rng, n, m, Chart::new(vec![-0.5; n], vec![0.5; n]).unwrap());
        let x = vec![0.1; n];
        group.bench_function(BenchmarkId::from_parameter(format!("n{n}_m{m}")), |b| {
            b.iter(|| analyze_point(black_box(&op), black_box(&x), &tol))
        });
    }
    group.finish();
}

fn grid(c: &mut Criterion) {
    let tol = Tolerances::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let op = random_operator(&mut rng, 2, 3, Chart::new(vec![-0.5; 2], vec![0.5; 2]).unwrap());
    let gauge = random_unipotent(&mut rng, 2, 3, 0.5);
    let sel = select_natural_coordinates(&op, 9, &tol, 0, Exec::Parallel).expect("regular benchmark operator");
    let mut group = c.benchmark_group("grid");
    group.sample_size(10);
    for res in [9, 16] {
        for (name, exec) in [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)] {
            group.bench_with_input(BenchmarkId::new(format!("build_model/{name}"), res), &res, |b, &res| {
                b.iter(|| build_model(&op, res, &sel, &tol, 0, exec))
            });
            group.bench_with_input(BenchmarkId::new(format!("select/{name}"), res), &res, |b, &res| {
                b.iter(|| select_natural_coordinates(&op, res, &tol, 0, exec))
            });
            group.bench_with_input(BenchmarkId::new(format!("audit/{name}"), res), &res, |b, &res| {
                b.iter(|| naturality_audit(&op, &gauge, res, &tol, exec))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, point, grid);
criterion_main!(benches);
