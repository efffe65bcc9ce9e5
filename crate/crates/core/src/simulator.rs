//! Closed-form propagation of the diagonal system under piecewise-constant
//! input, the reachability map, cost evaluation, and a grid-search cost
//! oracle for first- and second-order systems.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti::{LtiSystem, ProblemSpec};
use crate::sequences::{
    enumerate_candidates, maximal_sequences, CandidateSequence, Level,
};

/// Piecewise-constant control: `levels[j]` is applied on
/// `[breakpoints[j], breakpoints[j + 1])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchedule")]
pub struct SwitchingSchedule {
    breakpoints: Vec<f64>,
    levels: Vec<Level>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSchedule {
    breakpoints: Vec<f64>,
    levels: Vec<Level>,
}

impl TryFrom<RawSchedule> for SwitchingSchedule {
    type Error = Error;

    fn try_from(raw: RawSchedule) -> Result<Self> {
        Self::new(raw.breakpoints, raw.levels)
    }
}

impl SwitchingSchedule {
    /// Validated schedule: breakpoints start at 0 and increase strictly,
    /// neighbouring levels differ, and the last level is nonzero.
    pub fn new(breakpoints: Vec<f64>, levels: Vec<Level>) -> Result<Self> {
        let s = Self::piecewise(breakpoints, levels)?;
        if s.levels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidSchedule("adjacent levels are equal".into()));
        }
        if s.levels.last().is_some_and(|l| !l.is_on()) {
            return Err(Error::InvalidSchedule("last level must be nonzero".into()));
        }
        Ok(s)
    }

    /// Any piecewise-constant input with positive-length intervals. Only the
    /// time grid is checked.
    pub fn piecewise(breakpoints: Vec<f64>, levels: Vec<Level>) -> Result<Self> {
        if breakpoints.len() != levels.len() + 1 {
            return Err(Error::InvalidSchedule(format!(
                "{} breakpoints for {} levels",
                breakpoints.len(),
                levels.len()
            )));
        }
        if breakpoints[0] != 0.0 {
            return Err(Error::InvalidSchedule("first breakpoint must be 0".into()));
        }
        if breakpoints.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidSchedule("breakpoints must be finite".into()));
        }
        if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidSchedule(
                "breakpoints must increase strictly".into(),
            ));
        }
        Ok(Self { breakpoints, levels })
    }

    /// Builds a piecewise schedule from interval lengths.
    pub fn from_durations(durations: &[f64], levels: Vec<Level>) -> Result<Self> {
        let mut breakpoints = Vec::with_capacity(durations.len() + 1);
        let mut t = 0.0;
        breakpoints.push(t);
        for d in durations {
            t += d;
            breakpoints.push(t);
        }
        Self::piecewise(breakpoints, levels)
    }

    pub fn empty() -> Self {
        Self {
            breakpoints: vec![0.0],
            levels: Vec::new(),
        }
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn final_time(&self) -> f64 {
        *self.breakpoints.last().expect("at least one breakpoint")
    }

    /// `(start, end, level)` per interval.
    pub fn segments(&self) -> impl Iterator<Item = (f64, f64, Level)> + '_ {
        self.breakpoints
            .windows(2)
            .zip(&self.levels)
            .map(|(w, &l)| (w[0], w[1], l))
    }

    pub fn on_duration(&self) -> f64 {
        self.segments()
            .filter(|(_, _, l)| l.is_on())
            .map(|(a, b, _)| b - a)
            .sum()
    }

    pub fn switchings(&self) -> usize {
        self.levels.len().saturating_sub(1)
    }

    pub fn sequence(&self) -> CandidateSequence {
        CandidateSequence::structural(self.levels.clone())
    }

    /// Control value at time `t` (right-continuous, zero outside).
    pub fn level_at(&self, t: f64) -> Level {
        self.segments()
            .find(|&(a, b, _)| t >= a && t < b)
            .map_or(Level::Off, |(_, _, l)| l)
    }
}

/// Sampled state trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub sample_times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub terminal_state: Vec<f64>,
}

/// `(e^{lambda dt} - 1) / lambda`, with the `lambda -> 0` limit.
fn phi(lambda: f64, dt: f64) -> f64 {
    if lambda == 0.0 {
        dt
    } else {
        (lambda * dt).exp_m1() / lambda
    }
}

/// Exact state after holding `u` for `dt`.
pub fn segment_step(lambda: f64, b: f64, x: f64, u: f64, dt: f64) -> f64 {
    (lambda * dt).exp() * x + u * b * phi(lambda, dt)
}

pub fn propagate(
    system: &LtiSystem,
    x0: &[f64],
    schedule: &SwitchingSchedule,
    samples_per_segment: usize,
) -> Result<Trajectory> {
    let n = system.order();
    if x0.len() != n {
        return Err(Error::DimensionMismatch {
            what: "initial state",
            expected: n,
            actual: x0.len(),
        });
    }
    if samples_per_segment == 0 {
        return Err(Error::InvalidSchedule(
            "samples_per_segment must be at least 1".into(),
        ));
    }
    let lambdas = system.spectrum().eigenvalues();
    let gains = system.input_gains();

    let mut sample_times = vec![0.0];
    let mut states = vec![x0.to_vec()];
    let mut x = x0.to_vec();
    for (a, b, level) in schedule.segments() {
        let u = level.as_f64();
        let start = x.clone();
        for s in 1..=samples_per_segment {
            // The last sample sits exactly on the breakpoint.
            let t = if s == samples_per_segment {
                b
            } else {
                a + (b - a) * s as f64 / samples_per_segment as f64
            };
            let dt = t - a;
            let xs: Vec<f64> = (0..n)
                .map(|i| segment_step(lambdas[i], gains[i], start[i], u, dt))
                .collect();
            sample_times.push(t);
            states.push(xs.clone());
            if s == samples_per_segment {
                x = xs;
            }
        }
    }
    Ok(Trajectory {
        sample_times,
        states,
        terminal_state: x,
    })
}

/// Contribution of holding `u` on `[ta, ta + dt]` to `x0_i = -int e^{-lambda tau} b u dtau`.
pub(crate) fn reach_term(lambda: f64, b: f64, u: f64, ta: f64, dt: f64) -> f64 {
    if lambda == 0.0 {
        -u * b * dt
    } else {
        u * b * (-lambda * ta).exp() * (-lambda * dt).exp_m1() / lambda
    }
}

/// The initial state that `schedule` steers to the origin.
pub fn reachability_x0(system: &LtiSystem, schedule: &SwitchingSchedule) -> Vec<f64> {
    let gains = system.input_gains();
    (0..system.order())
        .map(|i| {
            let lambda = system.eigenvalue(i);
            schedule
                .segments()
                .map(|(a, b, l)| reach_term(lambda, gains[i], l.as_f64(), a, b - a))
                .sum()
        })
        .collect()
}

/// Cost, on-duration and sparsity of a schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostSummary {
    pub cost: f64,
    pub on_duration: f64,
    pub sparsity: f64,
}

pub fn evaluate_cost(schedule: &SwitchingSchedule, k: f64) -> CostSummary {
    let tf = schedule.final_time();
    let on = schedule.on_duration();
    let sparsity = if schedule.is_empty() || tf == 0.0 {
        1.0
    } else {
        1.0 - on / tf
    };
    CostSummary {
        cost: k * tf + on,
        on_duration: on,
        sparsity,
    }
}

pub const GRID_ORACLE_MAX_ORDER: usize = 2;
const GRID_REFINEMENTS: usize = 2;
const GRID_WINDOW: f64 = 2.0;
const BISECTION_STEPS: usize = 80;

/// Best grid point found by [`grid_oracle`]: cost and breakpoints
/// `t_1..t_m` (`t_0 = 0` omitted).
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub cost: f64,
    pub times: Vec<f64>,
}

/// Exhaustive grid search over the switching times of `sequence` on
/// `[0, horizon]`.
///
/// The last breakpoint is solved in closed form from the first mode. For a
/// second-order system the second-to-last breakpoint is scanned on the grid
/// and the second mode's residual is driven to zero by bisection between
/// grid points with opposite signs; the remaining breakpoints are gridded.
/// A point is feasible when the reachability map lands within
/// `10 * grid_step` of `x0`. The coarse pass is refined twice, each time on
/// a grid ten times finer in a window around the incumbent.
pub fn grid_oracle(
    spec: &ProblemSpec,
    sequence: &CandidateSequence,
    grid_step: f64,
    horizon: f64,
) -> Result<Option<OracleResult>> {
    let n = spec.order();
    if n > GRID_ORACLE_MAX_ORDER {
        return Err(Error::OrderTooLarge {
            n,
            limit: GRID_ORACLE_MAX_ORDER,
        });
    }
    if !(grid_step > 0.0) || !(horizon > 0.0) {
        return Err(Error::DomainError(
            "grid step and horizon must be positive".into(),
        ));
    }
    let levels = sequence.levels();
    if levels.is_empty() {
        return Ok(None);
    }
    let search = GridSearch::new(spec, levels, horizon);
    let gridded = search.gridded();
    let scanned = usize::from(n == 2 && levels.len() >= 2);
    let full = vec![(0.0, horizon); gridded + scanned];
    let mut best = search.run(&full, grid_step);
    let mut step = grid_step;
    for _ in 0..GRID_REFINEMENTS {
        let Some(inc) = &best else { break };
        let window: Vec<(f64, f64)> = inc.times[..full.len()]
            .iter()
            .map(|&t| {
                (
                    (t - GRID_WINDOW * step).max(0.0),
                    (t + GRID_WINDOW * step).min(horizon),
                )
            })
            .collect();
        step /= 10.0;
        if let Some(r) = search.run(&window, step) {
            if r.cost <= inc.cost {
                best = Some(r);
            }
        }
    }
    Ok(best.filter(|r| {
        let s = schedule_from_times(levels, &r.times);
        let x = reachability_x0(&spec.system, &s);
        x.iter()
            .zip(&spec.initial_state)
            .all(|(a, b)| (a - b).abs() <= 10.0 * grid_step)
    }))
}

/// Minimum of [`grid_oracle`] over the maximal candidates of the problem's
/// order, which cover every candidate through zero-length intervals.
pub fn grid_oracle_best(
    spec: &ProblemSpec,
    grid_step: f64,
    horizon: f64,
) -> Result<Option<(CandidateSequence, OracleResult)>> {
    let mut best: Option<(CandidateSequence, OracleResult)> = None;
    for s in maximal_sequences(&enumerate_candidates(spec.order(), None)) {
        if let Some(r) = grid_oracle(spec, &s, grid_step, horizon)? {
            if best.as_ref().is_none_or(|(_, b)| r.cost < b.cost) {
                best = Some((s, r));
            }
        }
    }
    Ok(best)
}

/// Schedule from breakpoints `t_1..t_m`, dropping zero-length intervals and
/// merging equal neighbours.
fn schedule_from_times(levels: &[Level], times: &[f64]) -> SwitchingSchedule {
    let mut bps = vec![0.0];
    let mut lv: Vec<Level> = Vec::new();
    let mut prev = 0.0;
    for (&t, &l) in times.iter().zip(levels) {
        if t > prev {
            if lv.last() == Some(&l) {
                *bps.last_mut().unwrap() = t;
            } else {
                lv.push(l);
                bps.push(t);
            }
            prev = t;
        }
    }
    SwitchingSchedule::piecewise(bps, lv).unwrap_or_else(|_| SwitchingSchedule::empty())
}

struct GridSearch<'a> {
    levels: &'a [Level],
    lambdas: Vec<f64>,
    gains: Vec<f64>,
    x0: Vec<f64>,
    k: f64,
    horizon: f64,
}

impl<'a> GridSearch<'a> {
    fn new(spec: &ProblemSpec, levels: &'a [Level], horizon: f64) -> Self {
        Self {
            levels,
            lambdas: spec.system.spectrum().eigenvalues(),
            gains: spec.system.input_gains().to_vec(),
            x0: spec.initial_state.clone(),
            k: spec.time_weight,
            horizon,
        }
    }

    fn n(&self) -> usize {
        self.lambdas.len()
    }

    fn m(&self) -> usize {
        self.levels.len()
    }

    /// Number of breakpoints placed directly on the grid.
    fn gridded(&self) -> usize {
        self.m().saturating_sub(self.n())
    }

    /// Partial reachability sums of segments `0..upto` given breakpoints.
    fn partial(&self, i: usize, times: &[f64], upto: usize) -> f64 {
        let mut prev = 0.0;
        let mut acc = 0.0;
        for j in 0..upto {
            let t = times[j];
            acc += reach_term(self.lambdas[i], self.gains[i], self.levels[j].as_f64(), prev, t - prev);
            prev = t;
        }
        acc
    }

    /// Closes the last interval from mode 0; `times` holds `t_1..t_{m-1}`.
    fn close(&self, times: &[f64]) -> Option<f64> {
        let m = self.m();
        let lambda = self.lambdas[0];
        let start = if m >= 2 { times[m - 2] } else { 0.0 };
        let rest = self.x0[0] - self.partial(0, times, m - 1);
        let u = self.levels[m - 1].as_f64();
        let denom = u * self.gains[0] * (-lambda * start).exp();
        if denom == 0.0 {
            return None;
        }
        let v = rest * lambda / denom;
        if !(v > -1.0) {
            return None;
        }
        let dt = -v.ln_1p() / lambda;
        let dt = if dt < 0.0 && dt > -1e-14 { 0.0 } else { dt };
        (dt >= 0.0 && start + dt <= self.horizon).then_some(start + dt)
    }

    fn cost(&self, all: &[f64]) -> f64 {
        let mut prev = 0.0;
        let mut on = 0.0;
        for (&t, l) in all.iter().zip(self.levels) {
            if l.is_on() {
                on += t - prev;
            }
            prev = t;
        }
        self.k * prev + on
    }

    /// Mode-1 residual after closing the last interval.
    fn residual2(&self, times: &[f64]) -> Option<(f64, Vec<f64>)> {
        let tf = self.close(times)?;
        let mut all = times.to_vec();
        all.push(tf);
        let r = self.partial(1, &all, self.m()) - self.x0[1];
        Some((r, all))
    }

    fn consider(&self, all: Vec<f64>, best: &mut Option<OracleResult>) {
        let cost = self.cost(&all);
        if best.as_ref().is_none_or(|b| cost < b.cost) {
            *best = Some(OracleResult { cost, times: all });
        }
    }

    /// Grid pass over `ranges` (one per searched breakpoint, in order).
    fn run(&self, ranges: &[(f64, f64)], step: f64) -> Option<OracleResult> {
        let mut best = None;
        let mut times = Vec::with_capacity(self.m());
        self.descend(ranges, step, &mut times, &mut best);
        best
    }

    fn descend(
        &self,
        ranges: &[(f64, f64)],
        step: f64,
        times: &mut Vec<f64>,
        best: &mut Option<OracleResult>,
    ) {
        let depth = times.len();
        let prev = times.last().copied().unwrap_or(0.0);
        if depth == self.gridded() {
            if self.n() == 1 || self.m() == 1 {
                if let Some(tf) = self.close(times) {
                    let mut all = times.clone();
                    all.push(tf);
                    if self.n() == 2 {
                        // A single interval leaves nothing to scan.
                        let r = self.partial(1, &all, self.m()) - self.x0[1];
                        if r.abs() > 10.0 * step {
                            return;
                        }
                    }
                    self.consider(all, best);
                }
            } else {
                self.scan(ranges[depth], step, times, best);
            }
            return;
        }
        let (lo, hi) = ranges[depth];
        for t in grid_points(lo.max(prev), hi, step) {
            times.push(t);
            self.descend(ranges, step, times, best);
            times.pop();
        }
    }

    /// Scans the second-to-last breakpoint and bisects sign changes of the
    /// second mode's residual.
    fn scan(
        &self,
        range: (f64, f64),
        step: f64,
        times: &mut Vec<f64>,
        best: &mut Option<OracleResult>,
    ) {
        let prev = times.last().copied().unwrap_or(0.0);
        let mut last: Option<(f64, f64)> = None;
        for t in grid_points(range.0.max(prev), range.1, step) {
            times.push(t);
            let here = self.residual2(times);
            times.pop();
            let Some((r, all)) = here else {
                last = None;
                continue;
            };
            if r == 0.0 {
                self.consider(all, best);
            } else if let Some((t0, r0)) = last {
                if r0.signum() != r.signum() {
                    if let Some(root) = self.bisect(times, t0, r0, t) {
                        self.consider(root, best);
                    }
                }
            }
            last = Some((t, r));
        }
    }

    fn bisect(&self, times: &mut Vec<f64>, mut a: f64, mut ra: f64, mut b: f64) -> Option<Vec<f64>> {
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            times.push(mid);
            let here = self.residual2(times);
            times.pop();
            let (r, _) = here?;
            if r == 0.0 {
                a = mid;
                b = mid;
                break;
            }
            if r.signum() == ra.signum() {
                a = mid;
                ra = r;
            } else {
                b = mid;
            }
        }
        times.push(0.5 * (a + b));
        let out = self.residual2(times).map(|(_, all)| all);
        times.pop();
        out
    }
}

/// Grid `lo, lo + h, ...` up to and including `hi`.
fn grid_points(lo: f64, hi: f64, step: f64) -> impl Iterator<Item = f64> {
    let count = if hi >= lo {
        ((hi - lo) / step + 1e-9).floor() as usize
    } else {
        0
    };
    let tail = (hi >= lo && lo + count as f64 * step < hi).then_some(hi);
    (0..=count)
        .filter(move |_| hi >= lo)
        .map(move |j| lo + j as f64 * step)
        .chain(tail)
}
