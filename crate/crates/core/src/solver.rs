//! Multi-start local solves of every instance and selection of the best
//! verified schedule.
//!
//! Results are best-of-multi-start local optima, not certified global
//! minima. The per-instance status in the report shows which instances
//! failed, so `starts` can be raised when in doubt.

mod al;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::builder::{build_all, NlpInstance};
use crate::error::{Error, Result};
use crate::lti::ProblemSpec;
use crate::parallel::{map_ordered, Execution};
use crate::sequences::{CandidateSequence, Level};
use crate::simulator::{evaluate_cost, propagate, SwitchingSchedule};

/// Intervals shorter than this are removed when decoding.
pub const COLLAPSE_TOL: f64 = 1e-6;
/// Relative cost window for reporting ties.
pub const TIE_TOL: f64 = 1e-6;
/// Unconverged starts with a residual above this are reported infeasible.
pub const INFEASIBLE_RESIDUAL: f64 = 1e-4;
/// Range factor of the random start horizons around the slowest time
/// constant.
const START_SPREAD: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub starts: usize,
    pub seed: u64,
    /// Newton iterations per start.
    pub max_iterations: usize,
    pub kkt_tol: f64,
    pub feas_tol: f64,
    /// Horizon bound; `None` means `50 / min |lambda_i|`.
    pub t_max: Option<f64>,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            starts: 64,
            seed: 0,
            max_iterations: 500,
            kkt_tol: 1e-8,
            feas_tol: 1e-8,
            t_max: None,
            execution: Execution::default(),
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if self.starts == 0 || self.max_iterations == 0 {
            return Err(Error::DomainError(
                "starts and max_iterations must be at least 1".into(),
            ));
        }
        if !(self.kkt_tol > 0.0 && self.feas_tol > 0.0) {
            return Err(Error::DomainError("tolerances must be positive".into()));
        }
        if let Some(t) = self.t_max {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::DomainError(format!("horizon {t} must be positive")));
            }
        }
        Ok(())
    }

    pub fn horizon(&self, spec: &ProblemSpec) -> f64 {
        self.t_max
            .unwrap_or_else(|| 50.0 / spec.system.spectrum().slowest_rate())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Converged,
    Infeasible,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalSolution {
    pub instance_id: String,
    pub times: Vec<f64>,
    pub cost: f64,
    pub kkt_residual: f64,
    pub constraint_residual: f64,
    pub status: SolveStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BestSolution {
    pub instance_id: String,
    pub sequence: CandidateSequence,
    pub schedule: SwitchingSchedule,
    pub cost: f64,
    pub final_time: f64,
    pub on_duration: f64,
    pub sparsity: f64,
    pub terminal_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub best: Option<BestSolution>,
    pub ties: Vec<String>,
    #[serde(rename = "instances")]
    pub per_instance: Vec<LocalSolution>,
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Generator for one start, a function of the seed, the instance and the
/// start index only.
fn start_rng(seed: u64, id: &str, start: usize) -> ChaCha8Rng {
    let key = splitmix(splitmix(seed) ^ fnv1a(id)) ^ splitmix(start as u64);
    ChaCha8Rng::seed_from_u64(key)
}

/// Exponential gaps whose expected total is the slowest time constant times
/// a log-uniform factor in `[1/8, 8]`, capped at `0.9 t_max`.
fn initial_gaps(inst: &NlpInstance, t_max: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let m = inst.n_vars().max(1) as f64;
    let tau = 1.0 / inst.system.spectrum().slowest_rate();
    let spread = START_SPREAD.ln();
    let total = tau * rng.random_range(-spread..spread).exp();
    let exp = Exp::new(m / total.min(0.9 * t_max)).expect("positive rate");
    let mut gaps: Vec<f64> = (0..inst.n_vars()).map(|_| exp.sample(rng)).collect();
    let total: f64 = gaps.iter().sum();
    if total > 0.9 * t_max {
        let s = 0.9 * t_max / total;
        gaps.iter_mut().for_each(|g| *g *= s);
    }
    gaps
}

fn local_solution(inst: &NlpInstance, outcome: al::Outcome) -> LocalSolution {
    let times = al::cumulative(&outcome.gaps);
    let status = if outcome.converged {
        SolveStatus::Converged
    } else if outcome.feasibility > INFEASIBLE_RESIDUAL {
        SolveStatus::Infeasible
    } else {
        SolveStatus::IterationLimit
    };
    LocalSolution {
        instance_id: inst.id.clone(),
        cost: inst.time_cost(&times),
        times,
        kkt_residual: outcome.kkt,
        constraint_residual: outcome.feasibility,
        status,
    }
}

/// True when `a` is a better local result than `b`.
fn better(a: &LocalSolution, b: &LocalSolution) -> bool {
    let ca = a.status == SolveStatus::Converged;
    let cb = b.status == SolveStatus::Converged;
    match (ca, cb) {
        (true, false) => true,
        (false, true) => false,
        (true, true) => a.cost < b.cost,
        (false, false) => a.constraint_residual < b.constraint_residual,
    }
}

/// Multi-start local solve of one instance.
pub fn solve_nlp(instance: &NlpInstance, options: &SolverOptions, t_max: f64) -> LocalSolution {
    let tol = al::Tolerances {
        kkt: options.kkt_tol,
        feas: options.feas_tol,
        max_iterations: options.max_iterations,
    };
    let starts: Vec<usize> = (0..options.starts).collect();
    let results = map_ordered(&starts, options.execution, |&s| {
        let mut rng = start_rng(options.seed, &instance.id, s);
        let gaps = initial_gaps(instance, t_max, &mut rng);
        local_solution(instance, al::solve(instance, gaps, t_max, &tol, s % 2 == 1))
    });
    let mut best = results[0].clone();
    for r in &results[1..] {
        if better(r, &best) {
            best = r.clone();
        }
    }
    best
}

/// Solves every instance; results come back in instance order.
pub fn solve_all(
    instances: &[NlpInstance],
    options: &SolverOptions,
    t_max: f64,
) -> Vec<LocalSolution> {
    map_ordered(instances, options.execution, |inst| solve_nlp(inst, options, t_max))
}

/// Pairs the template levels with the intervals between `times`.
///
/// Intervals shorter than [`COLLAPSE_TOL`] take the level of their
/// predecessor (or successor, at the start), equal neighbours merge, and
/// trailing off intervals are dropped.
pub fn decode_schedule(instance: &NlpInstance, times: &[f64]) -> SwitchingSchedule {
    decode_levels(&instance.levels, times)
}

/// [`decode_schedule`] for a bare level pattern.
pub fn decode_levels(levels: &[Level], times: &[f64]) -> SwitchingSchedule {
    let m = levels.len().min(times.len());
    let mut starts = Vec::with_capacity(m);
    let mut prev = 0.0;
    for &t in &times[..m] {
        starts.push(prev);
        prev = t;
    }
    let keep: Vec<bool> = (0..m).map(|j| times[j] - starts[j] >= COLLAPSE_TOL).collect();

    let mut bps = vec![0.0];
    let mut lv: Vec<Level> = Vec::new();
    for j in 0..m {
        if !keep[j] {
            if lv.is_empty() {
                continue;
            }
            *bps.last_mut().unwrap() = times[j];
            continue;
        }
        if lv.last() == Some(&levels[j]) {
            *bps.last_mut().unwrap() = times[j];
        } else {
            lv.push(levels[j]);
            bps.push(times[j]);
        }
    }
    while lv.last() == Some(&Level::Off) {
        lv.pop();
        bps.pop();
    }
    SwitchingSchedule::new(bps, lv).unwrap_or_else(|_| SwitchingSchedule::empty())
}

/// Builds, solves and verifies every instance, then picks the cheapest.
pub fn solve_report(spec: &ProblemSpec, options: &SolverOptions) -> Result<SolveReport> {
    options.validate()?;
    let t_max = options.horizon(spec);
    let instances = build_all(spec);
    let per_instance = solve_all(&instances, options, t_max);

    let mut verified: Vec<BestSolution> = Vec::new();
    for (inst, sol) in instances.iter().zip(&per_instance) {
        if sol.status != SolveStatus::Converged {
            continue;
        }
        let schedule = decode_schedule(inst, &sol.times);
        let tr = propagate(&spec.system, &spec.initial_state, &schedule, 1)?;
        let residual = tr.terminal_state.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        if residual > 10.0 * options.feas_tol {
            continue;
        }
        let summary = evaluate_cost(&schedule, spec.time_weight);
        verified.push(BestSolution {
            instance_id: inst.id.clone(),
            sequence: schedule.sequence(),
            final_time: schedule.final_time(),
            on_duration: summary.on_duration,
            sparsity: summary.sparsity,
            cost: summary.cost,
            terminal_residual: residual,
            schedule,
        });
    }

    let Some(min_cost) = verified.iter().map(|b| b.cost).min_by(f64::total_cmp) else {
        return Ok(SolveReport {
            best: None,
            ties: Vec::new(),
            per_instance,
        });
    };
    let mut tied: Vec<BestSolution> = verified
        .into_iter()
        .filter(|b| b.cost - min_cost <= TIE_TOL * min_cost.abs())
        .collect();
    tied.sort_by(|a, b| {
        a.schedule
            .switchings()
            .cmp(&b.schedule.switchings())
            .then(a.final_time.total_cmp(&b.final_time))
            .then(a.instance_id.cmp(&b.instance_id))
    });
    let ties = tied.iter().map(|b| b.instance_id.clone()).collect();
    Ok(SolveReport {
        best: tied.into_iter().next(),
        ties,
        per_instance,
    })
}

/// Like [`solve_report`], failing with `InfeasibleProblem` when no instance
/// yields a verified solution.
pub fn solve_time_fuel(spec: &ProblemSpec, options: &SolverOptions) -> Result<SolveReport> {
    let report = solve_report(spec, options)?;
    if report.best.is_none() {
        let best_residual = report
            .per_instance
            .iter()
            .map(|s| s.constraint_residual)
            .fold(f64::INFINITY, f64::min);
        return Err(Error::InfeasibleProblem { best_residual });
    }
    Ok(report)
}
