use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use timefuel::lti::{build_spectrum, validate_problem, LtiSystem, ProblemSpec};
use timefuel::parallel::Execution;
use timefuel::solver::{solve_report, SolverOptions};

fn problem(pairs: &[(i64, i64)], x0: Vec<f64>) -> ProblemSpec {
    let n = pairs.len();
    let sys = LtiSystem::new(build_spectrum(pairs).unwrap(), vec![1.0; n]).unwrap();
    validate_problem(sys, x0, 1.0, None).unwrap()
}

fn execution(c: &mut Criterion) {
    let cases = [
        ("n2", problem(&[(-1, 1), (-2, 1)], vec![0.6, 0.4])),
        ("n3", problem(&[(-1, 1), (-2, 1), (-3, 1)], vec![0.3, 0.2, 0.1])),
    ];
    let mut group = c.benchmark_group("solve_report");
    group.sample_size(10);
    for (name, spec) in &cases {
        for execution in [Execution::Sequential, Execution::Parallel] {
            let options = SolverOptions { execution, ..SolverOptions::default() };
            group.bench_with_input(BenchmarkId::new(format!("{execution:?}"), name), spec, |b, spec| {
                b.iter(|| solve_report(black_box(spec), &options).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, execution);
criterion_main!(benches);
