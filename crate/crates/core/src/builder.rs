//! Static optimization problems, one per candidate template and sign vector.
//!
//! A template is a level pattern with one time variable per interval: the
//! `j`-th interval ends at `t_j` and `t_0 = 0`. For the pattern levels
//! `L_1..L_m`, with `L_0 = L_{m+1} = 0`, the reachability condition reads
//!
//! `x0_i = -(b_i / lambda_i) * sum_{j=0..m} (L_{j+1} - L_j) e^{-lambda_i t_j}`
//!
//! and the cost is `k t_m + sum_j |L_j| (t_j - t_{j-1})`, linear in `t`.
//! Under `a_j = e^{t_j / l}` the same quantities become monomials in `a`.

use nalgebra::DMatrix;
use num_integer::binomial;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lti::{LtiSystem, ProblemSpec};
use crate::sequences::{enumerate_candidates, CandidateSequence, Level, Sign};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Variant {
    OP1,
    OP2,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::OP1 => "OP1",
            Variant::OP2 => "OP2",
        }
    }
}

/// One interval of a template: a fixed level or the `m`-th sign placeholder
/// (zero-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PatternSlot {
    Fixed(Level),
    Signed(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ControlTemplate {
    pub variant: Variant,
    pub start_sign: Sign,
    pub order: usize,
    pub pattern: Vec<PatternSlot>,
    /// True for the parametrized OP1/OP2 families, whose sign vectors obey
    /// the sum rule.
    pub generic: bool,
}

impl ControlTemplate {
    /// `(+1, 0, s_1, 0, ..., s_{n-1}, 0, (-1)^n)`, negated for `Minus`.
    pub fn op1(n: usize, start_sign: Sign) -> Self {
        let mut pattern = vec![PatternSlot::Fixed(Level::Plus), PatternSlot::Fixed(Level::Off)];
        for m in 0..n.saturating_sub(1) {
            pattern.push(PatternSlot::Signed(m));
            pattern.push(PatternSlot::Fixed(Level::Off));
        }
        pattern.push(PatternSlot::Fixed(if n.is_multiple_of(2) { Level::Plus } else { Level::Minus }));
        Self::signed(Variant::OP1, n, start_sign, pattern)
    }

    /// `(0, +1, 0, s_1, 0, ..., s_{n-2}, 0, -(-1)^n)`, negated for `Minus`.
    pub fn op2(n: usize, start_sign: Sign) -> Self {
        let mut pattern = vec![
            PatternSlot::Fixed(Level::Off),
            PatternSlot::Fixed(Level::Plus),
            PatternSlot::Fixed(Level::Off),
        ];
        for m in 0..n.saturating_sub(2) {
            pattern.push(PatternSlot::Signed(m));
            pattern.push(PatternSlot::Fixed(Level::Off));
        }
        pattern.push(PatternSlot::Fixed(if n.is_multiple_of(2) { Level::Minus } else { Level::Plus }));
        Self::signed(Variant::OP2, n, start_sign, pattern)
    }

    fn signed(variant: Variant, order: usize, start_sign: Sign, pattern: Vec<PatternSlot>) -> Self {
        let pattern = match start_sign {
            Sign::Plus => pattern,
            Sign::Minus => pattern
                .into_iter()
                .map(|s| match s {
                    PatternSlot::Fixed(l) => PatternSlot::Fixed(l.negate()),
                    other => other,
                })
                .collect(),
        };
        Self {
            variant,
            start_sign,
            order,
            pattern,
            generic: true,
        }
    }

    /// Template spelling a fixed sequence.
    pub fn fixed(sequence: &CandidateSequence, order: usize) -> Self {
        let levels = sequence.levels();
        Self {
            variant: if levels.first() == Some(&Level::Off) {
                Variant::OP2
            } else {
                Variant::OP1
            },
            start_sign: sequence.leading_sign().unwrap_or(Sign::Plus),
            order,
            pattern: levels.iter().map(|&l| PatternSlot::Fixed(l)).collect(),
            generic: false,
        }
    }

    /// Number of time variables.
    pub fn slot_count(&self) -> usize {
        self.pattern.len()
    }

    pub fn placeholder_count(&self) -> usize {
        self.pattern
            .iter()
            .filter(|s| matches!(s, PatternSlot::Signed(_)))
            .count()
    }

    /// Concrete levels for a sign vector.
    pub fn levels(&self, signs: &SignVector) -> Vec<Level> {
        self.pattern
            .iter()
            .map(|s| match *s {
                PatternSlot::Fixed(l) => l,
                PatternSlot::Signed(m) => signs.entries[m].level(),
            })
            .collect()
    }
}

/// Values of the sign placeholders `s_1, s_2, ...`, used as levels
/// directly. Vectors for minus templates are the negated plus vectors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SignVector {
    pub entries: Vec<Sign>,
    pub variant: Variant,
}

impl SignVector {
    pub fn values(&self) -> Vec<i8> {
        self.entries.iter().map(|s| s.level().value()).collect()
    }

    /// Compact `p`/`m` spelling used in instance ids.
    pub fn bits(&self) -> String {
        self.entries
            .iter()
            .map(|s| if *s == Sign::Plus { 'p' } else { 'm' })
            .collect()
    }

    fn sum(&self) -> i64 {
        self.values().iter().map(|&v| v as i64).sum()
    }
}

fn required_sum(n: usize, variant: Variant) -> i64 {
    match (variant, n.is_multiple_of(2)) {
        (Variant::OP1, true) | (Variant::OP2, false) => -1,
        (Variant::OP1, false) | (Variant::OP2, true) => 0,
    }
}

fn placeholder_len(n: usize, variant: Variant) -> usize {
    match variant {
        Variant::OP1 => n.saturating_sub(1),
        Variant::OP2 => n.saturating_sub(2),
    }
}

/// Admissible sign vectors, in lexicographic order with `+1` before `-1`.
///
/// For a plus template the entries sum to -1 (OP1, `n` even; OP2, `n` odd)
/// or 0 otherwise. For a minus template the returned vectors are the
/// entries as printed for that template, so the sums flip sign. The OP1
/// alternating vector, which spells the alternating sequence, is removed.
pub fn sign_vectors(n: usize, variant: Variant, start_sign: Sign) -> Vec<SignVector> {
    let len = placeholder_len(n, variant);
    let target = required_sum(n, variant);
    let mut out = Vec::new();
    for mask in 0..(1u64 << len) {
        // Bit set = -1, highest bit first, so +1 sorts first.
        let entries: Vec<Sign> = (0..len)
            .map(|i| {
                if mask >> (len - 1 - i) & 1 == 1 {
                    Sign::Minus
                } else {
                    Sign::Plus
                }
            })
            .collect();
        let v = SignVector { entries, variant };
        if v.sum() != target {
            continue;
        }
        if variant == Variant::OP1 && v.entries.iter().enumerate().all(|(i, s)| {
            (*s == Sign::Minus) == (i % 2 == 0)
        }) {
            continue;
        }
        out.push(match start_sign {
            Sign::Plus => v,
            Sign::Minus => SignVector {
                entries: v.entries.iter().map(|s| s.flip()).collect(),
                variant,
            },
        });
    }
    out
}

/// Number of generic problems for an order-`n` system.
pub fn count_nlps(n: usize) -> Result<u64> {
    if n < 3 {
        return Err(Error::OrderTooSmall { n, min: 3 });
    }
    let n = n as u64;
    Ok(if n.is_multiple_of(2) {
        2 * (binomial(n - 1, n / 2) - 1 + binomial(n - 2, (n - 2) / 2))
    } else {
        2 * (binomial(n - 1, (n - 1) / 2) - 1 + binomial(n - 2, (n - 1) / 2))
    })
}

/// Linear time-domain cost `sum_j coefficients[j] * t_j`. The same
/// coefficients are the exponents of the monomial ratio in `a`, whose
/// logarithm is `J / l`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostExpression {
    pub kind: Variant,
    pub k: f64,
    pub coefficients: Vec<f64>,
}

impl CostExpression {
    fn new(kind: Variant, k: f64, levels: &[Level]) -> Self {
        let m = levels.len();
        let on = |j: usize| if j < m && levels[j].is_on() { 1.0 } else { 0.0 };
        let coefficients = (0..m)
            .map(|j| on(j) - on(j + 1) + if j + 1 == m { k } else { 0.0 })
            .collect();
        Self { kind, k, coefficients }
    }

    /// `J = k t_m + on-duration`.
    pub fn time_cost(&self, t: &[f64]) -> f64 {
        self.coefficients.iter().zip(t).map(|(c, x)| c * x).sum()
    }

    /// `ln J_a = sum_j coefficients[j] * ln a_j`, equal to `J / l`.
    pub fn log_a_cost(&self, a: &[f64]) -> f64 {
        self.coefficients.iter().zip(a).map(|(c, x)| c * x.ln()).sum()
    }

    /// The monomial ratio `J_1` or `J_2`.
    pub fn a_cost(&self, a: &[f64]) -> f64 {
        self.coefficients.iter().zip(a).map(|(c, x)| x.powf(*c)).product()
    }
}

/// `coef * exp(rate * (t_plus - t_minus))`, `None` standing for `t_0 = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpTerm {
    pub coef: f64,
    pub rate: f64,
    pub plus: Option<usize>,
    pub minus: Option<usize>,
}

impl ExpTerm {
    fn value(&self, t: &[f64]) -> f64 {
        let tp = self.plus.map_or(0.0, |j| t[j]);
        let tm = self.minus.map_or(0.0, |j| t[j]);
        self.coef * (self.rate * (tp - tm)).exp()
    }
}

/// Reachability condition of one state.
///
/// The residual is the terminal state `e^{lambda t_m} (x0_i - implied_x0_i(t))`,
/// so it agrees with what the simulator checks. For an unstable mode this
/// also rules out spurious near-solutions at very long horizons, where the
/// initial-state mismatch flattens out.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintExpression {
    pub state: usize,
    pub b: f64,
    pub c: i64,
    pub l: i64,
    pub x0: f64,
    /// `L_{j+1} - L_j` for `j = 0..=m`.
    pub breakpoint_coefficients: Vec<f64>,
    #[serde(skip)]
    terms: Vec<ExpTerm>,
}

impl ConstraintExpression {
    fn new(state: usize, system: &LtiSystem, x0: f64, levels: &[Level]) -> Self {
        let spectrum = system.spectrum();
        let c = spectrum.scaled_numerators()[state];
        let l = spectrum.common_denominator();
        let lambda = c as f64 / l as f64;
        let b = system.input_gains()[state];
        let m = levels.len();
        let at = |j: usize| if j >= 1 && j <= m { levels[j - 1].as_f64() } else { 0.0 };
        let d: Vec<f64> = (0..=m).map(|j| at(j + 1) - at(j)).collect();
        let var = |j: usize| if j == 0 { None } else { Some(j - 1) };
        let last = if m == 0 { None } else { Some(m - 1) };

        // x(t_m) = e^{lambda t_m} (x0_i + (b / lambda) sum_j d_j e^{-lambda t_j})
        let mut terms = Vec::with_capacity(m + 2);
        terms.push(ExpTerm { coef: x0, rate: lambda, plus: last, minus: None });
        for (j, &dj) in d.iter().enumerate() {
            if dj != 0.0 {
                terms.push(ExpTerm { coef: b / lambda * dj, rate: lambda, plus: last, minus: var(j) });
            }
        }
        Self {
            state,
            b,
            c,
            l,
            x0,
            breakpoint_coefficients: d,
            terms,
        }
    }

    pub fn lambda(&self) -> f64 {
        self.c as f64 / self.l as f64
    }

    pub fn residual(&self, t: &[f64]) -> f64 {
        self.terms.iter().map(|term| term.value(t)).sum()
    }

    /// Accumulates `w * grad` into `grad`.
    pub fn add_gradient(&self, t: &[f64], w: f64, grad: &mut [f64]) {
        for term in &self.terms {
            let g = w * term.rate * term.value(t);
            if let Some(p) = term.plus {
                grad[p] += g;
            }
            if let Some(q) = term.minus {
                grad[q] -= g;
            }
        }
    }

    /// Accumulates `w * hessian` into `h`.
    pub fn add_hessian(&self, t: &[f64], w: f64, h: &mut DMatrix<f64>) {
        for term in &self.terms {
            let v = w * term.rate * term.rate * term.value(t);
            if let Some(p) = term.plus {
                h[(p, p)] += v;
            }
            if let Some(q) = term.minus {
                h[(q, q)] += v;
            }
            if let (Some(p), Some(q)) = (term.plus, term.minus) {
                h[(p, q)] -= v;
                h[(q, p)] -= v;
            }
        }
    }

    pub fn implied_x0(&self, t: &[f64]) -> f64 {
        let lambda = self.lambda();
        let sum: f64 = self
            .breakpoint_coefficients
            .iter()
            .enumerate()
            .filter(|(_, d)| **d != 0.0)
            .map(|(j, d)| {
                let tj = if j == 0 { 0.0 } else { t[j - 1] };
                d * (-lambda * tj).exp()
            })
            .sum();
        -self.b / lambda * sum
    }

    /// `x0_i = -(b_i l / c_i) sum_j d_j a_j^{-c_i}` with `a_0 = 1`.
    pub fn implied_x0_a(&self, a: &[f64]) -> f64 {
        let sum: f64 = self
            .breakpoint_coefficients
            .iter()
            .enumerate()
            .filter(|(_, d)| **d != 0.0)
            .map(|(j, d)| d * if j == 0 { 1.0 } else { a[j - 1].powi(-self.c as i32) })
            .sum();
        -self.b * self.l as f64 / self.c as f64 * sum
    }

    /// `(D_i, N_i)` with `x0_i = N_i / D_i` and both polynomial in `a`.
    pub fn numerator_denominator(&self, a: &[f64]) -> (f64, f64) {
        let scale = -self.b * self.l as f64 / self.c as f64;
        let used: Vec<usize> = (1..self.breakpoint_coefficients.len())
            .filter(|&j| self.breakpoint_coefficients[j] != 0.0)
            .collect();
        if self.c < 0 {
            let pow = (-self.c) as i32;
            let num = self.breakpoint_coefficients[0]
                + used
                    .iter()
                    .map(|&j| self.breakpoint_coefficients[j] * a[j - 1].powi(pow))
                    .sum::<f64>();
            (1.0, scale * num)
        } else {
            let pow = self.c as i32;
            let den: f64 = used.iter().map(|&j| a[j - 1].powi(pow)).product();
            let mut num = self.breakpoint_coefficients[0] * den;
            for &j in &used {
                let others: f64 = used
                    .iter()
                    .filter(|&&i| i != j)
                    .map(|&i| a[i - 1].powi(pow))
                    .product();
                num += self.breakpoint_coefficients[j] * others;
            }
            (den, scale * num)
        }
    }

    /// `x0_i D_i - N_i`.
    pub fn polynomial_residual(&self, a: &[f64]) -> f64 {
        let (d, n) = self.numerator_denominator(a);
        self.x0 * d - n
    }
}

/// One static problem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NlpInstance {
    pub id: String,
    pub template: ControlTemplate,
    pub signs: SignVector,
    pub levels: Vec<Level>,
    #[serde(skip)]
    pub system: LtiSystem,
    pub x0: Vec<f64>,
    pub k: f64,
    pub cost: CostExpression,
    pub equality_constraints: Vec<ConstraintExpression>,
}

impl NlpInstance {
    pub fn n_vars(&self) -> usize {
        self.levels.len()
    }

    pub fn n_constraints(&self) -> usize {
        self.equality_constraints.len()
    }

    /// `a_j <= a_{j+1}` for consecutive variables plus `a_1 >= 1`.
    pub fn ordering_constraint_count(&self) -> usize {
        self.n_vars().saturating_sub(1) + 1
    }

    pub fn common_denominator(&self) -> i64 {
        self.system.spectrum().common_denominator()
    }

    pub fn time_cost(&self, t: &[f64]) -> f64 {
        self.cost.time_cost(t)
    }

    /// Constant gradient of the time-domain cost.
    pub fn cost_gradient(&self) -> &[f64] {
        &self.cost.coefficients
    }

    pub fn residuals(&self, t: &[f64]) -> Vec<f64> {
        self.equality_constraints.iter().map(|c| c.residual(t)).collect()
    }

    pub fn jacobian(&self, t: &[f64]) -> DMatrix<f64> {
        let m = self.n_vars();
        let mut jac = DMatrix::zeros(self.n_constraints(), m);
        let mut row = vec![0.0; m];
        for (i, c) in self.equality_constraints.iter().enumerate() {
            row.iter_mut().for_each(|v| *v = 0.0);
            c.add_gradient(t, 1.0, &mut row);
            for j in 0..m {
                jac[(i, j)] = row[j];
            }
        }
        jac
    }

    pub fn constraint_hessian(&self, i: usize, t: &[f64]) -> DMatrix<f64> {
        let m = self.n_vars();
        let mut h = DMatrix::zeros(m, m);
        self.equality_constraints[i].add_hessian(t, 1.0, &mut h);
        h
    }

    pub fn implied_x0(&self, t: &[f64]) -> Vec<f64> {
        self.equality_constraints.iter().map(|c| c.implied_x0(t)).collect()
    }

    pub fn implied_x0_a(&self, a: &[f64]) -> Vec<f64> {
        self.equality_constraints.iter().map(|c| c.implied_x0_a(a)).collect()
    }

    pub fn polynomial_residuals(&self, a: &[f64]) -> Vec<f64> {
        self.equality_constraints
            .iter()
            .map(|c| c.polynomial_residual(a))
            .collect()
    }

    /// The pattern spelled as a sequence.
    pub fn sequence(&self) -> CandidateSequence {
        CandidateSequence::structural(self.levels.clone())
    }
}

fn sign_vector_consistent(template: &ControlTemplate, signs: &SignVector) -> Result<()> {
    let inconsistent = |msg: String| Err(Error::InconsistentSigns(msg));
    if signs.entries.len() != template.placeholder_count() {
        return inconsistent(format!(
            "{} entries for {} placeholders",
            signs.entries.len(),
            template.placeholder_count()
        ));
    }
    if !template.generic {
        return Ok(());
    }
    if signs.variant != template.variant {
        return inconsistent(format!(
            "{} signs for an {} template",
            signs.variant.name(),
            template.variant.name()
        ));
    }
    let expected = required_sum(template.order, template.variant)
        * if template.start_sign == Sign::Plus { 1 } else { -1 };
    if signs.sum() != expected {
        return inconsistent(format!("entries sum to {}, expected {expected}", signs.sum()));
    }
    Ok(())
}

fn instance_id(template: &ControlTemplate, signs: &SignVector) -> String {
    let head = format!("{}-{}", template.variant.name(), template.start_sign.name());
    if signs.entries.is_empty() {
        head
    } else {
        format!("{head}-{}", signs.bits())
    }
}

fn sequence_id(s: &CandidateSequence) -> String {
    let letters: String = s
        .levels()
        .iter()
        .map(|l| match l {
            Level::Plus => 'p',
            Level::Off => 'z',
            Level::Minus => 'm',
        })
        .collect();
    let sign = s.leading_sign().unwrap_or(Sign::Plus);
    format!("SEQ-{}-{letters}", sign.name())
}

pub fn build_nlp(
    spec: &ProblemSpec,
    template: &ControlTemplate,
    signs: &SignVector,
) -> Result<NlpInstance> {
    sign_vector_consistent(template, signs)?;
    let id = if template.generic || template.order == 2 {
        instance_id(template, signs)
    } else {
        sequence_id(&CandidateSequence::structural(template.levels(signs)))
    };
    Ok(instantiate(spec, template, signs, id))
}

fn instantiate(
    spec: &ProblemSpec,
    template: &ControlTemplate,
    signs: &SignVector,
    id: String,
) -> NlpInstance {
    let levels = template.levels(signs);
    let equality_constraints = (0..spec.order())
        .map(|i| ConstraintExpression::new(i, &spec.system, spec.initial_state[i], &levels))
        .collect();
    NlpInstance {
        id,
        template: template.clone(),
        signs: signs.clone(),
        cost: CostExpression::new(template.variant, spec.time_weight, &levels),
        levels,
        system: spec.system.clone(),
        x0: spec.initial_state.clone(),
        k: spec.time_weight,
        equality_constraints,
    }
}

/// Every instance for `spec`, sorted by id.
///
/// Orders of three and up use the OP1/OP2 families. A second-order system
/// uses the four templates `(+1,0,+1)`, `(0,+1,0,-1)` and their conjugates.
/// A first-order system, and any problem with a switching budget, gets one
/// instance per candidate sequence.
pub fn build_all(spec: &ProblemSpec) -> Vec<NlpInstance> {
    let n = spec.order();
    let mut out = Vec::new();
    let no_signs = |variant| SignVector {
        entries: Vec::new(),
        variant,
    };
    if spec.max_switches.is_some() || n == 1 {
        for s in enumerate_candidates(n, spec.max_switches) {
            let t = ControlTemplate::fixed(&s, n);
            let signs = no_signs(t.variant);
            out.push(instantiate(spec, &t, &signs, sequence_id(&s)));
        }
    } else if n == 2 {
        for values in [&[1i8, 0, 1][..], &[-1, 0, -1], &[0, 1, 0, -1], &[0, -1, 0, 1]] {
            let s = CandidateSequence::from_values(values).expect("valid template");
            let t = ControlTemplate::fixed(&s, n);
            let signs = no_signs(t.variant);
            out.push(instantiate(spec, &t, &signs, instance_id(&t, &signs)));
        }
    } else {
        for variant in [Variant::OP1, Variant::OP2] {
            for sign in [Sign::Plus, Sign::Minus] {
                let t = match variant {
                    Variant::OP1 => ControlTemplate::op1(n, sign),
                    Variant::OP2 => ControlTemplate::op2(n, sign),
                };
                for signs in sign_vectors(n, variant, sign) {
                    let id = instance_id(&t, &signs);
                    out.push(instantiate(spec, &t, &signs, id));
                }
            }
        }
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    out
}

/// `t_j = l ln a_j`.
pub fn to_times(a: &[f64], l: i64) -> Result<Vec<f64>> {
    a.iter()
        .map(|&x| {
            if x >= 1.0 {
                Ok(l as f64 * x.ln())
            } else {
                Err(Error::DomainError(format!("a = {x} is below 1")))
            }
        })
        .collect()
}

/// `a_j = e^{t_j / l}`.
pub fn to_a(times: &[f64], l: i64) -> Result<Vec<f64>> {
    times
        .iter()
        .map(|&t| {
            if t >= 0.0 {
                Ok((t / l as f64).exp())
            } else {
                Err(Error::DomainError(format!("time {t} is negative")))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::{build_spectrum, validate_problem};
    use crate::simulator::{reachability_x0, SwitchingSchedule};
    use proptest::prelude::*;

    fn spec(pairs: &[(i64, i64)], x0: Vec<f64>, r: Option<usize>) -> ProblemSpec {
        let b = vec![1.0; pairs.len()];
        let sys = LtiSystem::new(build_spectrum(pairs).unwrap(), b).unwrap();
        validate_problem(sys, x0, 1.0, r).unwrap()
    }

    fn order(n: usize) -> ProblemSpec {
        let pairs: Vec<_> = (1..=n as i64).map(|c| (-c, 1)).collect();
        spec(&pairs, vec![0.1; n], None)
    }

    fn sv(values: &[i8], variant: Variant) -> SignVector {
        SignVector {
            entries: values.iter().map(|&v| if v > 0 { Sign::Plus } else { Sign::Minus }).collect(),
            variant,
        }
    }

    #[test]
    fn sign_vectors_order_four() {
        let v = sign_vectors(4, Variant::OP1, Sign::Plus);
        assert_eq!(v, vec![sv(&[1, -1, -1], Variant::OP1), sv(&[-1, -1, 1], Variant::OP1)]);
        let v = sign_vectors(4, Variant::OP2, Sign::Plus);
        assert_eq!(v.len(), 2);
        let minus = sign_vectors(4, Variant::OP1, Sign::Minus);
        assert_eq!(minus, vec![sv(&[-1, 1, 1], Variant::OP1), sv(&[1, 1, -1], Variant::OP1)]);
    }

    #[test]
    fn sign_vectors_order_six() {
        let v = sign_vectors(6, Variant::OP1, Sign::Plus);
        assert_eq!(v.len(), 9);
        assert!(v.iter().all(|s| s.values().iter().filter(|&&x| x == 1).count() == 2));
        assert!(!v.contains(&sv(&[-1, 1, -1, 1, -1], Variant::OP1)));
        assert_eq!(v[0], sv(&[1, 1, -1, -1, -1], Variant::OP1));
        assert_eq!(sign_vectors(6, Variant::OP2, Sign::Plus).len(), 6);
    }

    #[test]
    fn nlp_counts() {
        assert_eq!(count_nlps(4).unwrap(), 8);
        assert_eq!(count_nlps(6).unwrap(), 30);
        assert_eq!(count_nlps(5).unwrap(), 16);
        assert!(matches!(count_nlps(2), Err(Error::OrderTooSmall { .. })));
        for n in 3..=7 {
            assert_eq!(build_all(&order(n)).len() as u64, count_nlps(n).unwrap(), "n = {n}");
        }
    }

    #[test]
    fn second_order_templates() {
        let all = build_all(&spec(&[(-1, 1), (-2, 1)], vec![0.6, 0.4], None));
        let ids: Vec<_> = all.iter().map(|i| i.id.as_str()).collect();
        assert_eq!(ids, vec!["OP1-minus", "OP1-plus", "OP2-minus", "OP2-plus"]);
        let op2m = &all[2];
        assert_eq!(op2m.sequence(), CandidateSequence::from_values(&[0, -1, 0, 1]).unwrap());
        assert_eq!(op2m.n_vars(), 4);
    }

    #[test]
    fn template_shapes() {
        let t = ControlTemplate::op1(6, Sign::Plus);
        assert_eq!(t.slot_count(), 13);
        let t = ControlTemplate::op2(6, Sign::Plus);
        assert_eq!(t.slot_count(), 12);
        let t = ControlTemplate::op1(4, Sign::Minus);
        let levels = t.levels(&sv(&[-1, 1, 1], Variant::OP1));
        let v: Vec<i8> = levels.iter().map(|l| l.value()).collect();
        assert_eq!(v, vec![-1, 0, -1, 0, 1, 0, 1, 0, -1]);
    }

    #[test]
    fn order_six_op1_bracket() {
        // Breakpoint coefficients -d_j reproduce the printed bracket, whose
        // overall sign is opposite: -1 + a1 - s1 a2 + s1 a3 ... - a12 + a13.
        let s = order(6);
        let t = ControlTemplate::op1(6, Sign::Plus);
        let signs = sv(&[1, 1, -1, -1, -1], Variant::OP1);
        let inst = build_nlp(&s, &t, &signs).unwrap();
        let d = &inst.equality_constraints[0].breakpoint_coefficients;
        let s_ = [1.0, 1.0, -1.0, -1.0, -1.0];
        let mut bracket = vec![-1.0, 1.0];
        for sm in s_ {
            bracket.push(-sm);
            bracket.push(sm);
        }
        bracket.push(-1.0);
        bracket.push(1.0);
        let neg: Vec<f64> = d.iter().map(|x| -x).collect();
        assert_eq!(neg, bracket);
        assert_eq!(inst.id, "OP1-plus-ppmmm");
    }

    #[test]
    fn inconsistent_signs() {
        let s = order(4);
        let t = ControlTemplate::op1(4, Sign::Plus);
        assert!(matches!(build_nlp(&s, &t, &sv(&[1, 1, 1], Variant::OP1)), Err(Error::InconsistentSigns(_))));
        assert!(matches!(build_nlp(&s, &t, &sv(&[1, -1], Variant::OP1)), Err(Error::InconsistentSigns(_))));
        assert!(matches!(build_nlp(&s, &t, &sv(&[1, -1, -1], Variant::OP2)), Err(Error::InconsistentSigns(_))));
        let tm = ControlTemplate::op1(4, Sign::Minus);
        assert!(build_nlp(&s, &tm, &sv(&[-1, 1, 1], Variant::OP1)).is_ok());
    }

    #[test]
    fn restricted_builds_follow_candidates() {
        let pairs = [(-1, 1), (-2, 1), (-3, 1)];
        let all = build_all(&spec(&pairs, vec![0.1; 3], Some(4)));
        assert_eq!(all.len(), enumerate_candidates(3, Some(4)).len());
        assert!(all.iter().any(|i| i.id == "SEQ-minus-zmzp"));
        let one = build_all(&spec(&[(-1, 1)], vec![0.1], None));
        assert_eq!(one.len(), 4);
    }

    #[test]
    fn zero_times_imply_origin() {
        for n in [3, 4] {
            for inst in build_all(&order(n)) {
                let t = vec![0.0; inst.n_vars()];
                assert!(inst.implied_x0(&t).iter().all(|x| *x == 0.0));
                let a = vec![1.0; inst.n_vars()];
                assert!(inst.implied_x0_a(&a).iter().all(|x| x.abs() < 1e-15));
                assert_eq!(inst.cost.log_a_cost(&a), 0.0);
                assert_eq!(inst.cost.a_cost(&a), 1.0);
            }
        }
    }

    #[test]
    fn cost_exponents_match_monomials() {
        let inst = &build_all(&order(4))[0];
        assert_eq!(inst.template.variant, Variant::OP1);
        let mut expect = vec![1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 2.0];
        assert_eq!(inst.cost.coefficients, expect);
        let op2 = build_all(&order(4)).into_iter().find(|i| i.template.variant == Variant::OP2).unwrap();
        expect = vec![-1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 2.0];
        assert_eq!(op2.cost.coefficients, expect);
    }

    #[test]
    fn conversions() {
        assert_eq!(to_times(&[1.0, 1.0, 1.0], 1).unwrap(), vec![0.0; 3]);
        assert_eq!(to_a(&[2f64.ln()], 1).unwrap(), vec![2.0]);
        assert!(to_times(&[0.5], 1).is_err());
        assert!(to_a(&[-0.1], 1).is_err());
    }

    /// Schedule with the template's levels on the given breakpoints, zero
    /// intervals dropped.
    fn schedule(levels: &[Level], t: &[f64]) -> SwitchingSchedule {
        let mut bps = vec![0.0];
        let mut lv = Vec::new();
        for (&tj, &l) in t.iter().zip(levels) {
            if tj > *bps.last().unwrap() {
                bps.push(tj);
                lv.push(l);
            }
        }
        SwitchingSchedule::piecewise(bps, lv).unwrap()
    }

    fn check_duality(inst: &NlpInstance, gaps: &[f64]) -> std::result::Result<(), TestCaseError> {
        let t: Vec<f64> = gaps
            .iter()
            .scan(0.0, |acc, g| {
                *acc += g;
                Some(*acc)
            })
            .collect();
        let sim = reachability_x0(&inst.system, &schedule(&inst.levels, &t));
        let implied = inst.implied_x0(&t);
        for (a, b) in implied.iter().zip(&sim) {
            prop_assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()), "{a} vs {b}");
        }
        let a = to_a(&t, inst.common_denominator()).unwrap();
        let from_a = inst.implied_x0_a(&a);
        for (x, y) in from_a.iter().zip(&sim) {
            prop_assert!((x - y).abs() <= 1e-8 * (1.0 + y.abs()), "{x} vs {y}");
        }
        // Residuals vanish exactly when x0 equals the implied state.
        let mut shifted = inst.clone();
        for (c, x) in shifted.equality_constraints.iter_mut().zip(&implied) {
            *c = ConstraintExpression::new(c.state, &inst.system, *x, &inst.levels);
        }
        for r in shifted.residuals(&t) {
            prop_assert!(r.abs() <= 1e-12);
        }
        for (i, c) in shifted.equality_constraints.iter().enumerate() {
            let (d, n) = c.numerator_denominator(&a);
            prop_assert!((n / d - implied[i]).abs() <= 1e-8 * (1.0 + implied[i].abs()));
        }
        Ok(())
    }

    proptest! {
        #[test]
        fn builder_simulator_duality(
            gaps in proptest::collection::vec(0.0f64..0.8, 13),
            pick in 0usize..1000,
        ) {
            let specs = [
                spec(&[(-1, 1), (-2, 1)], vec![0.6, 0.4], None),
                spec(&[(1, 2), (-3, 4), (2, 3)], vec![0.1, 0.2, 0.0], None),
                spec(&[(-1, 1), (-2, 1), (-3, 1), (-4, 1)], vec![0.1; 4], None),
                spec(&[(-1, 3)], vec![0.2], None),
            ];
            for s in &specs {
                let all = build_all(s);
                let inst = &all[pick % all.len()];
                check_duality(inst, &gaps[..inst.n_vars()])?;
            }
        }

        #[test]
        fn round_trip(a in proptest::collection::vec(1.0f64..10.0, 1..8), l in 1i64..12) {
            let back = to_a(&to_times(&a, l).unwrap(), l).unwrap();
            for (x, y) in a.iter().zip(&back) {
                prop_assert!((x - y).abs() <= 4.0 * f64::EPSILON * x);
            }
        }

        #[test]
        fn log_cost_is_scaled_time_cost(t in proptest::collection::vec(0.0f64..3.0, 9), l in 1i64..5) {
            let inst = &build_all(&order(4))[0];
            let a = to_a(&t, l).unwrap();
            let lhs = inst.cost.log_a_cost(&a);
            let rhs = inst.time_cost(&t) / l as f64;
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
            prop_assert!(inst.cost.a_cost(&a) > 0.0);
        }
    }
}
