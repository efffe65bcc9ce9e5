mod common;

use proptest::prelude::*;

use timefuel::parallel::{with_threads, Execution};
use timefuel::sequences::Level;
use timefuel::simulator::{propagate, reachability_x0, SwitchingSchedule};
use timefuel::solver::{decode_levels, solve_report, SolverOptions};

use common::{example, random_schedule, random_system, rng, EXAMPLE_ROWS};

fn report_json(execution: Execution, threads: Option<usize>, seed: u64) -> String {
    let options = SolverOptions { seed, execution, ..SolverOptions::default() };
    with_threads(threads, || serde_json::to_string(&solve_report(&example(1.0), &options).unwrap()).unwrap())
}

#[test]
fn reports_do_not_depend_on_execution() {
    let reference = report_json(Execution::Sequential, None, 3);
    for threads in [Some(1), Some(2), Some(4)] {
        assert_eq!(report_json(Execution::Parallel, threads, 3), reference, "{threads:?}");
    }
    assert_ne!(report_json(Execution::Sequential, None, 4), reference);
}

#[test]
fn cost_grows_and_final_time_shrinks_with_k() {
    let mut prev: Option<(f64, f64, f64)> = None;
    for (k, _) in EXAMPLE_ROWS {
        let best = solve_report(&example(k), &SolverOptions::default()).unwrap().best.unwrap();
        if let Some((cost, tf, on)) = prev {
            assert!(best.cost > cost, "k={k}");
            assert!(best.final_time <= tf + 1e-9, "k={k}");
            assert!(best.on_duration >= on - 1e-9, "k={k}");
        }
        prev = Some((best.cost, best.final_time, best.on_duration));
    }
}

/// Exact duality of the closed forms over many random schedules, with
/// durations in units of the fastest time constant.
#[test]
fn reachability_inverts_propagation() {
    let mut r = rng(71);
    for i in 0..1000 {
        let n = 1 + i % 4;
        let sys = random_system(&mut r, n, true);
        let fastest = sys.spectrum().eigenvalues().iter().fold(0.0f64, |a, l| a.max(l.abs()));
        let raw = random_schedule(&mut r, 2 * n + 1);
        let bps: Vec<f64> = raw.breakpoints().iter().map(|t| t / fastest).collect();
        let s = SwitchingSchedule::piecewise(bps, raw.levels().to_vec()).unwrap();
        let x0 = reachability_x0(&sys, &s);
        let end = propagate(&sys, &x0, &s, 1).unwrap().terminal_state;
        assert!(end.iter().all(|x| x.abs() <= 1e-10), "case {i}: {end:?}");
    }
}

fn level() -> impl Strategy<Value = Level> {
    prop_oneof![Just(Level::Minus), Just(Level::Off), Just(Level::Plus)]
}

proptest! {
    #[test]
    fn decoding_is_idempotent(
        pattern in proptest::collection::vec((level(), prop_oneof![Just(0.0f64), 1e-9f64..1e-6, 1e-3f64..1.0]), 1..10)
    ) {
        let levels: Vec<Level> = pattern.iter().map(|p| p.0).collect();
        let mut times = Vec::with_capacity(pattern.len());
        let mut t = 0.0;
        for (_, gap) in &pattern {
            t += gap;
            times.push(t);
        }
        let once = decode_levels(&levels, &times);
        let twice = decode_levels(once.levels(), &once.breakpoints()[1..]);
        prop_assert_eq!(&once, &twice);
        prop_assert!(once.levels().last() != Some(&Level::Off));
        prop_assert!(once.levels().windows(2).all(|w| w[0] != w[1]));
    }
}
