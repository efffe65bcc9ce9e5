#![allow(dead_code)]

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use timefuel::builder::NlpInstance;
use timefuel::lti::{build_spectrum, validate_problem, LtiSystem, ProblemSpec};
use timefuel::sequences::{enumerate_candidates, Level};
use timefuel::simulator::{grid_oracle_best, reachability_x0, SwitchingSchedule};
use timefuel::solver::{solve_report, SolverOptions};

pub const EXAMPLE_ROWS: [(f64, [f64; 4]); 4] = [
    (0.5, [1.2959, 1.2689, 0.6615, 0.4787]),
    (1.0, [1.8940, 1.1480, 0.746, 0.3502]),
    (2.0, [3.0025, 1.0839, 0.8347, 0.2299]),
    (3.0, [4.0752, 1.0645, 0.8817, 0.1717]),
];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn system(pairs: &[(i64, i64)], gains: Vec<f64>) -> LtiSystem {
    LtiSystem::new(build_spectrum(pairs).unwrap(), gains).unwrap()
}

pub fn example(k: f64) -> ProblemSpec {
    let sys = system(&[(-1, 1), (-2, 1)], vec![1.0, 1.0]);
    validate_problem(sys, vec![0.6, 0.4], k, None).unwrap()
}

/// Distinct nonzero rationals `c / d` with `|c| <= 4`, `d <= 3`. With
/// `mixed` the signs are random, otherwise all negative.
pub fn random_pairs(rng: &mut impl Rng, n: usize, mixed: bool) -> Vec<(i64, i64)> {
    let mut out: Vec<(i64, i64)> = Vec::with_capacity(n);
    while out.len() < n {
        let c: i64 = rng.random_range(1..=4);
        let c = if mixed && rng.random_bool(0.5) { c } else { -c };
        let d: i64 = rng.random_range(1..=3);
        let v = c as f64 / d as f64;
        if out.iter().all(|&(a, b)| (a as f64 / b as f64 - v).abs() > 1e-9) {
            out.push((c, d));
        }
    }
    out
}

pub fn random_system(rng: &mut impl Rng, n: usize, mixed: bool) -> LtiSystem {
    let pairs = random_pairs(rng, n, mixed);
    let gains = (0..n)
        .map(|_| {
            let g: f64 = rng.random_range(0.5..2.0);
            if rng.random_bool(0.5) { g } else { -g }
        })
        .collect();
    system(&pairs, gains)
}

/// Random schedule of up to `max_len` intervals with distinct neighbours.
pub fn random_schedule(rng: &mut impl Rng, max_len: usize) -> SwitchingSchedule {
    let len = rng.random_range(1..=max_len);
    let all = [Level::Minus, Level::Off, Level::Plus];
    let mut levels: Vec<Level> = Vec::with_capacity(len);
    while levels.len() < len {
        let l = *all.choose(rng).unwrap();
        if levels.last() != Some(&l) {
            levels.push(l);
        }
    }
    let durations: Vec<f64> = (0..len).map(|_| rng.random_range(0.05..1.0)).collect();
    SwitchingSchedule::from_durations(&durations, levels).unwrap()
}

/// A problem whose initial state is steered to the origin by a random
/// candidate schedule; returns the spec and that schedule.
pub fn random_feasible_problem(rng: &mut impl Rng, n: usize) -> (ProblemSpec, SwitchingSchedule) {
    let sys = random_system(rng, n, true);
    let candidates: Vec<_> = enumerate_candidates(n, None).into_iter().collect();
    let seq = candidates.choose(rng).unwrap().clone();
    let durations: Vec<f64> = (0..seq.len()).map(|_| rng.random_range(0.1..0.8)).collect();
    let schedule = SwitchingSchedule::from_durations(&durations, seq.levels().to_vec()).unwrap();
    let x0 = reachability_x0(&sys, &schedule);
    let k = rng.random_range(0.5..3.0);
    (validate_problem(sys, x0, k, None).unwrap(), schedule)
}

/// Optimal cost of the scalar problem `x' = lambda x + b u`.
///
/// A stable mode coasts while `|lambda| w > k`, `w = |x0 / b|`, then pushes
/// to the origin; an unstable mode pushes at once and needs
/// `lambda w < 1`.
pub fn scalar_optimum(lambda: f64, b: f64, x0: f64, k: f64) -> Option<f64> {
    let w = (x0 / b).abs();
    if w == 0.0 {
        return Some(0.0);
    }
    if lambda < 0.0 {
        let a = -lambda;
        let z = (a * w).min(k);
        let coast = if a * w > k { (a * w / k).ln() / a } else { 0.0 };
        Some(k * coast + (k + 1.0) * (1.0 + z).ln() / a)
    } else if lambda * w < 1.0 {
        Some(-(k + 1.0) * (1.0 - lambda * w).ln() / lambda)
    } else {
        None
    }
}

/// Solver and grid-oracle optimal costs.
pub fn solver_and_oracle(spec: &ProblemSpec, final_time: f64, grid_step: f64) -> (f64, f64) {
    let report = solve_report(spec, &SolverOptions::default()).unwrap();
    let solver = report.best.expect("feasible by construction").cost;
    let (_, oracle) = grid_oracle_best(spec, grid_step, 3.0 * final_time)
        .unwrap()
        .expect("oracle finds a point");
    (solver, oracle.cost)
}

/// Random breakpoints `0 < t_1 <= ... <= t_m <= horizon`.
pub fn random_times(rng: &mut impl Rng, m: usize, horizon: f64) -> Vec<f64> {
    let mut t: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..horizon)).collect();
    t.sort_by(f64::total_cmp);
    t
}

/// Largest violation found when comparing the analytic Jacobian and
/// constraint Hessians against central differences at `points` random
/// points. Returns the worst ratio `error / allowed`, so values up to one
/// pass.
pub fn gradient_check(inst: &NlpInstance, rng: &mut impl Rng, points: usize, rel: f64) -> f64 {
    let h = 1e-6;
    let m = inst.n_vars();
    let mut worst: f64 = 0.0;
    let mut ratio = |a: f64, b: f64| {
        let allowed = rel * a.abs().max(b.abs()).max(1e-3);
        worst = worst.max((a - b).abs() / allowed);
    };
    for _ in 0..points {
        // Keep a margin so the stencil stays inside the domain.
        let mut t = random_times(rng, m, 3.0);
        for (j, tj) in t.iter_mut().enumerate() {
            *tj += 2.0 * h * (j + 1) as f64;
        }
        let jac = inst.jacobian(&t);
        for j in 0..m {
            let mut up = t.clone();
            let mut dn = t.clone();
            up[j] += h;
            dn[j] -= h;
            let ru = inst.residuals(&up);
            let rd = inst.residuals(&dn);
            for i in 0..inst.n_constraints() {
                ratio(jac[(i, j)], (ru[i] - rd[i]) / (2.0 * h));
            }
            let ju = inst.jacobian(&up);
            let jd = inst.jacobian(&dn);
            for i in 0..inst.n_constraints() {
                let hess = inst.constraint_hessian(i, &t);
                for a in 0..m {
                    ratio(hess[(a, j)], (ju[(i, a)] - jd[(i, a)]) / (2.0 * h));
                }
            }
            let cu = inst.time_cost(&up);
            let cd = inst.time_cost(&dn);
            ratio(inst.cost_gradient()[j], (cu - cd) / (2.0 * h));
        }
    }
    worst
}
