mod common;

use timefuel::lti::validate_problem;
use timefuel::solver::{solve_report, SolverOptions};

use common::{random_feasible_problem, random_system, rng, scalar_optimum, solver_and_oracle};

const PROBLEMS: usize = 20;
const REL: f64 = 5e-3;

fn oracle_agreement(n: usize, seed: u64, grid_step: f64) {
    let mut r = rng(seed);
    for case in 0..PROBLEMS {
        let (spec, schedule) = random_feasible_problem(&mut r, n);
        let (solver, oracle) = solver_and_oracle(&spec, schedule.final_time(), grid_step);
        let gap = (solver - oracle).abs() / oracle.abs().max(1e-12);
        assert!(
            gap <= REL,
            "case {case}: solver {solver} vs oracle {oracle} (x0 {:?}, k {})",
            spec.initial_state,
            spec.time_weight
        );
    }
}

#[test]
fn scalar_matches_grid_oracle() {
    oracle_agreement(1, 11, 1e-3);
}

#[test]
fn second_order_matches_grid_oracle() {
    oracle_agreement(2, 12, 2e-2);
}

#[test]
fn scalar_matches_closed_form() {
    let mut r = rng(13);
    let mut checked = 0;
    while checked < PROBLEMS {
        let sys = random_system(&mut r, 1, true);
        let lambda = sys.eigenvalue(0);
        let b = sys.input_gains()[0];
        let x0 = rand::Rng::random_range(&mut r, -1.5..1.5);
        let k = rand::Rng::random_range(&mut r, 0.2..4.0);
        let Some(expected) = scalar_optimum(lambda, b, x0, k) else {
            continue;
        };
        let spec = validate_problem(sys, vec![x0], k, None).unwrap();
        let best = solve_report(&spec, &SolverOptions::default()).unwrap().best.unwrap();
        assert!(
            (best.cost - expected).abs() <= 1e-6,
            "lambda {lambda} b {b} x0 {x0} k {k}: {} vs {expected}",
            best.cost
        );
        checked += 1;
    }
}
