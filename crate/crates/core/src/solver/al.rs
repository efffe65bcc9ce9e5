//! Augmented Lagrangian with projected Newton inner iterations, over the
//! nonnegative gaps `Delta_j = t_j - t_{j-1}`.
//!
//! Equalities are the instance residuals `r(t) = 0`; the horizon
//! `t_m <= t_max` is handled as an inequality with its own multiplier.
//! Once the iterate is nearly feasible, a few Newton steps on the KKT system
//! over the positive gaps try to finish the job.
//!
//! With a small penalty the first inner solve can walk away from a feasible
//! region onto a bound-constrained minimiser of the infeasibility, which
//! happens readily with unstable modes. Half the starts therefore first
//! minimise the residual alone and continue with fitted multipliers and a
//! stiff penalty.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::builder::NlpInstance;

const MU_START: f64 = 10.0;
const MU_MAX: f64 = 1e12;
const MU_RESTORED: f64 = 1e4;
const MU_GROWTH: f64 = 10.0;
const FEAS_DECREASE: f64 = 0.25;
const MAX_OUTER: usize = 100;
const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-14;
const ACTIVE_EPS: f64 = 1e-3;
const POLISH_FROM: f64 = 1e-3;
const POLISH_DROP: f64 = 1e-4;
const POLISH_STEPS: usize = 20;

#[derive(Debug, Clone)]
pub(crate) struct Outcome {
    pub gaps: Vec<f64>,
    pub feasibility: f64,
    pub kkt: f64,
    pub converged: bool,
}

pub(crate) struct Tolerances {
    pub kkt: f64,
    pub feas: f64,
    pub max_iterations: usize,
}

pub(crate) fn cumulative(gaps: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    gaps.iter()
        .map(|g| {
            acc += g;
            acc
        })
        .collect()
}

/// `L^T v` for the lower-triangular all-ones `L`: suffix sums.
fn suffix_sums(v: &[f64]) -> Vec<f64> {
    let mut out = v.to_vec();
    for k in (0..out.len().saturating_sub(1)).rev() {
        out[k] += out[k + 1];
    }
    out
}

/// `L^T H L`: two-dimensional suffix sums.
fn suffix_sums_2d(h: &DMatrix<f64>) -> DMatrix<f64> {
    let m = h.nrows();
    let mut out = h.clone();
    for i in (0..m).rev() {
        for j in (0..m).rev() {
            let mut v = out[(i, j)];
            if i + 1 < m {
                v += out[(i + 1, j)];
            }
            if j + 1 < m {
                v += out[(i, j + 1)];
            }
            if i + 1 < m && j + 1 < m {
                v -= out[(i + 1, j + 1)];
            }
            out[(i, j)] = v;
        }
    }
    out
}

/// Projected gradient for the bounds `x >= 0`.
fn projected(x: &[f64], g: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(g)
        .map(|(&xi, &gi)| if xi > 0.0 { gi } else { gi.min(0.0) })
        .collect()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

struct Multipliers {
    y: Vec<f64>,
    z: f64,
    mu: f64,
}

struct Problem<'a> {
    inst: &'a NlpInstance,
    t_max: f64,
    /// Weight of the cost; zero while restoring feasibility.
    cost_scale: f64,
}

impl Problem<'_> {
    fn m(&self) -> usize {
        self.inst.n_vars()
    }

    fn horizon(&self, t: &[f64]) -> f64 {
        t.last().copied().unwrap_or(0.0) - self.t_max
    }

    fn value(&self, gaps: &[f64], mult: &Multipliers) -> f64 {
        let t = cumulative(gaps);
        let r = self.inst.residuals(&t);
        let g = self.horizon(&t);
        let mut v = self.cost_scale * self.inst.time_cost(&t);
        for (ri, yi) in r.iter().zip(&mult.y) {
            v += -yi * ri + 0.5 * mult.mu * ri * ri;
        }
        let s = (mult.z + mult.mu * g).max(0.0);
        v + (s * s - mult.z * mult.z) / (2.0 * mult.mu)
    }

    /// Gradient and Hessian of the augmented Lagrangian in gap space.
    fn derivatives(&self, gaps: &[f64], mult: &Multipliers) -> (Vec<f64>, DMatrix<f64>) {
        let m = self.m();
        let t = cumulative(gaps);
        let r = self.inst.residuals(&t);
        let mut grad: Vec<f64> = self.inst.cost_gradient().iter().map(|c| self.cost_scale * c).collect();
        let mut hess = DMatrix::zeros(m, m);
        let mut row = vec![0.0; m];
        for (i, c) in self.inst.equality_constraints.iter().enumerate() {
            let w = mult.mu * r[i] - mult.y[i];
            c.add_gradient(&t, w, &mut grad);
            c.add_hessian(&t, w, &mut hess);
            row.iter_mut().for_each(|v| *v = 0.0);
            c.add_gradient(&t, 1.0, &mut row);
            for a in 0..m {
                for b in 0..m {
                    hess[(a, b)] += mult.mu * row[a] * row[b];
                }
            }
        }
        let s = mult.z + mult.mu * self.horizon(&t);
        if s > 0.0 && m > 0 {
            grad[m - 1] += s;
            hess[(m - 1, m - 1)] += mult.mu;
        }
        (suffix_sums(&grad), suffix_sums_2d(&hess))
    }

    /// Gradient of the plain Lagrangian `f - y.r + z g` in gap space.
    fn lagrangian_gradient(&self, gaps: &[f64], mult: &Multipliers) -> Vec<f64> {
        let m = self.m();
        let t = cumulative(gaps);
        let mut grad = self.inst.cost_gradient().to_vec();
        for (i, c) in self.inst.equality_constraints.iter().enumerate() {
            c.add_gradient(&t, -mult.y[i], &mut grad);
        }
        if m > 0 {
            grad[m - 1] += mult.z;
        }
        suffix_sums(&grad)
    }

    /// Stationarity with least-squares equality multipliers fitted on the
    /// free gaps. Near collapsed intervals the constraint Jacobian loses
    /// rank and the first-order estimates drift; this gives a second estimate.
    fn fitted_kkt(&self, gaps: &[f64], z: f64) -> f64 {
        self.fitted_multipliers(gaps, z).0
    }

    fn fitted_multipliers(&self, gaps: &[f64], z: f64) -> (f64, Vec<f64>) {
        let m = self.m();
        let nc = self.inst.n_constraints();
        let t = cumulative(gaps);
        let mut f = self.inst.cost_gradient().to_vec();
        if m > 0 {
            f[m - 1] += z;
        }
        let f = suffix_sums(&f);
        let jac = self.inst.jacobian(&t);
        let rows: Vec<Vec<f64>> = (0..nc)
            .map(|i| suffix_sums(&jac.row(i).iter().copied().collect::<Vec<_>>()))
            .collect();
        let free: Vec<usize> = (0..m).filter(|&k| gaps[k] > 0.0).collect();
        if free.is_empty() || nc == 0 {
            return (inf_norm(&projected(gaps, &f)), vec![0.0; nc]);
        }
        let a = DMatrix::from_fn(free.len(), nc, |r, c| rows[c][free[r]]);
        let b = DVector::from_iterator(free.len(), free.iter().map(|&k| f[k]));
        let Ok(y) = a.svd(true, true).solve(&b, 1e-12) else {
            return (f64::INFINITY, vec![0.0; nc]);
        };
        let grad: Vec<f64> = (0..m)
            .map(|k| f[k] - (0..nc).map(|i| y[i] * rows[i][k]).sum::<f64>())
            .collect();
        (inf_norm(&projected(gaps, &grad)), y.iter().copied().collect())
    }

    /// Newton steps on the KKT system restricted to the positive gaps, with
    /// gaps below `POLISH_DROP` pinned at zero. Returns the polished gaps
    /// only when they meet both tolerances.
    fn polish(&self, gaps: &[f64], tol: &Tolerances, budget: &mut usize) -> Option<Vec<f64>> {
        let m = self.m();
        let nc = self.inst.n_constraints();
        let mut x: Vec<f64> = gaps.iter().map(|&g| if g < POLISH_DROP { 0.0 } else { g }).collect();
        let mut y = self.fitted_multipliers(&x, 0.0).1;
        for _ in 0..POLISH_STEPS {
            if *budget == 0 {
                return None;
            }
            *budget -= 1;
            let t = cumulative(&x);
            if self.horizon(&t) > 0.0 {
                return None;
            }
            let r = self.inst.residuals(&t);
            let lg = {
                let mult = Multipliers { y: y.clone(), z: 0.0, mu: 1.0 };
                self.lagrangian_gradient(&x, &mult)
            };
            let free: Vec<usize> = (0..m).filter(|&k| x[k] > 0.0).collect();
            if inf_norm(&r) <= tol.feas && self.fitted_kkt(&x, 0.0) <= tol.kkt {
                return Some(x);
            }
            let mut hess = DMatrix::zeros(m, m);
            for (i, c) in self.inst.equality_constraints.iter().enumerate() {
                c.add_hessian(&t, -y[i], &mut hess);
            }
            let hess = suffix_sums_2d(&hess);
            let jac = self.inst.jacobian(&t);
            let rows: Vec<Vec<f64>> = (0..nc)
                .map(|i| suffix_sums(&jac.row(i).iter().copied().collect::<Vec<_>>()))
                .collect();
            let nf = free.len();
            let mut kkt = DMatrix::zeros(nf + nc, nf + nc);
            let mut rhs = DVector::zeros(nf + nc);
            for (a, &ka) in free.iter().enumerate() {
                for (b, &kb) in free.iter().enumerate() {
                    kkt[(a, b)] = hess[(ka, kb)];
                }
                for i in 0..nc {
                    kkt[(a, nf + i)] = -rows[i][ka];
                    kkt[(nf + i, a)] = rows[i][ka];
                }
                rhs[a] = -lg[ka];
            }
            for i in 0..nc {
                rhs[nf + i] = -r[i];
            }
            let step = kkt.svd(true, true).solve(&rhs, 1e-14).ok()?;
            if step.iter().any(|v| !v.is_finite()) {
                return None;
            }
            // Stop at the first gap that would turn negative and pin it.
            let mut alpha = 1.0f64;
            let mut blocking = None;
            for (a, &k) in free.iter().enumerate() {
                if step[a] < 0.0 && x[k] + step[a] < 0.0 {
                    let ratio = -x[k] / step[a];
                    if ratio < alpha {
                        alpha = ratio;
                        blocking = Some(k);
                    }
                }
            }
            for (a, &k) in free.iter().enumerate() {
                x[k] = (x[k] + alpha * step[a]).max(0.0);
            }
            if let Some(k) = blocking {
                x[k] = 0.0;
            }
            for i in 0..nc {
                y[i] += alpha * step[nf + i];
            }
        }
        None
    }

    /// Projected Newton on the augmented Lagrangian until the projected
    /// gradient drops below `tol` or the budget runs out.
    fn inner(&self, gaps: &mut Vec<f64>, mult: &Multipliers, tol: f64, budget: &mut usize) {
        let m = self.m();
        while *budget > 0 {
            *budget -= 1;
            let (g, h) = self.derivatives(gaps, mult);
            let pg = projected(gaps, &g);
            let pg_norm = inf_norm(&pg);
            if pg_norm <= tol {
                return;
            }
            let w: f64 = gaps
                .iter()
                .zip(&g)
                .map(|(x, gi)| (x - (x - gi).max(0.0)).powi(2))
                .sum::<f64>()
                .sqrt();
            let eps = ACTIVE_EPS.min(w);
            let free: Vec<usize> = (0..m).filter(|&k| !(gaps[k] <= eps && g[k] > 0.0)).collect();

            let mut dir: Vec<f64> = g.iter().map(|x| -x).collect();
            if !free.is_empty() {
                let hf = DMatrix::from_fn(free.len(), free.len(), |a, b| h[(free[a], free[b])]);
                let gf = DVector::from_iterator(free.len(), free.iter().map(|&k| -g[k]));
                if let Some(d) = modified_newton(hf, &gf) {
                    for (a, &k) in free.iter().enumerate() {
                        dir[k] = d[a];
                    }
                }
            }
            let base = self.value(gaps, mult);
            if !self.search(gaps, mult, &g, &dir, base) {
                // Fall back to a projected gradient step.
                let steepest: Vec<f64> = g.iter().map(|x| -x).collect();
                if !self.search(gaps, mult, &g, &steepest, base) {
                    return;
                }
            }
        }
    }

    /// Projected Armijo backtracking along `dir`; updates `gaps` on success.
    fn search(&self, gaps: &mut Vec<f64>, mult: &Multipliers, g: &[f64], dir: &[f64], base: f64) -> bool {
        let mut alpha = 1.0;
        while alpha >= MIN_STEP {
            let trial: Vec<f64> = gaps
                .iter()
                .zip(dir)
                .map(|(x, d)| (x + alpha * d).max(0.0))
                .collect();
            let decrease: f64 = g.iter().zip(trial.iter().zip(gaps.iter())).map(|(gi, (a, b))| gi * (a - b)).sum();
            if decrease < 0.0 {
                let v = self.value(&trial, mult);
                if v.is_finite() && v <= base + ARMIJO * decrease {
                    *gaps = trial;
                    return true;
                }
            } else if decrease == 0.0 {
                return false;
            }
            alpha *= 0.5;
        }
        false
    }
}

/// Solves `H d = g` after shifting `H` until it is positive definite.
fn modified_newton(h: DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    let scale = h.diagonal().iter().fold(0.0f64, |a, x| a.max(x.abs())).max(1e-12);
    let mut shift = 0.0;
    for _ in 0..60 {
        let shifted = &h + DMatrix::identity(h.nrows(), h.ncols()) * shift;
        if let Some(ch) = Cholesky::new(shifted) {
            return Some(ch.solve(g));
        }
        shift = if shift == 0.0 { 1e-10 * scale } else { shift * 10.0 };
    }
    None
}

/// Local solve from `start`; `restore` runs the residual-only phase first.
pub(crate) fn solve(inst: &NlpInstance, start: Vec<f64>, t_max: f64, tol: &Tolerances, restore: bool) -> Outcome {
    let mut gaps = start;
    let mut budget = tol.max_iterations;
    if restore {
        let restoration = Problem { inst, t_max, cost_scale: 0.0 };
        let flat = Multipliers { y: vec![0.0; inst.n_constraints()], z: 0.0, mu: 1.0 };
        let mut share = budget / 4;
        let before = share;
        restoration.inner(&mut gaps, &flat, tol.feas * tol.feas, &mut share);
        budget -= before - share;
    }
    let problem = Problem { inst, t_max, cost_scale: 1.0 };
    let mut mult = Multipliers {
        y: vec![0.0; inst.n_constraints()],
        z: 0.0,
        mu: MU_START,
    };
    if restore && inf_norm(&inst.residuals(&cumulative(&gaps))) <= POLISH_FROM {
        // Stay near the restored point: fitted multipliers and a stiff penalty.
        mult.y = problem.fitted_multipliers(&gaps, 0.0).1;
        mult.mu = MU_RESTORED;
    }
    let mut prev_eq = f64::INFINITY;
    let mut feasibility = f64::INFINITY;
    let mut kkt = f64::INFINITY;
    for _ in 0..MAX_OUTER {
        let omega = (0.1 * prev_eq.min(1.0)).max(0.1 * tol.kkt);
        problem.inner(&mut gaps, &mult, omega, &mut budget);

        let t = cumulative(&gaps);
        let r = inst.residuals(&t);
        let g = problem.horizon(&t);
        for (yi, ri) in mult.y.iter_mut().zip(&r) {
            *yi -= mult.mu * ri;
        }
        mult.z = (mult.z + mult.mu * g).max(0.0);

        let eq = inf_norm(&r);
        feasibility = inf_norm(&r).max(g.max(0.0));
        let lg = problem.lagrangian_gradient(&gaps, &mult);
        kkt = inf_norm(&projected(&gaps, &lg)).max((mult.z * g).abs());
        if feasibility <= tol.feas && kkt > tol.kkt {
            kkt = kkt.min(problem.fitted_kkt(&gaps, mult.z).max((mult.z * g).abs()));
        }
        if feasibility <= tol.feas && kkt <= tol.kkt {
            return Outcome {
                gaps,
                feasibility,
                kkt,
                converged: true,
            };
        }
        if feasibility <= POLISH_FROM && g < 0.0 {
            if let Some(x) = problem.polish(&gaps, tol, &mut budget) {
                let t = cumulative(&x);
                let feasibility = inf_norm(&inst.residuals(&t));
                let kkt = problem.fitted_kkt(&x, 0.0);
                return Outcome {
                    gaps: x,
                    feasibility,
                    kkt,
                    converged: true,
                };
            }
        }
        if feasibility > tol.feas && eq > FEAS_DECREASE * prev_eq {
            mult.mu = (mult.mu * MU_GROWTH).min(MU_MAX);
        }
        prev_eq = eq;
        if budget == 0 {
            break;
        }
    }
    Outcome {
        gaps,
        feasibility,
        kkt,
        converged: false,
    }
}
