//! Candidate bang-off-bang sequences: crossing counts, segment
//! decomposition, enumeration by the control automaton, counting, and a
//! grammar-based brute-force oracle.
//!
//! Crossing counts follow the per-sub-sequence tallies of the crossing
//! table: a transition touching level `-1` adds one to `p`, a transition
//! touching level `+1` adds one to `q`.

mod automaton;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use num_integer::binomial;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Control level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum Level {
    Minus,
    Off,
    Plus,
}

impl Level {
    pub fn value(self) -> i8 {
        match self {
            Level::Minus => -1,
            Level::Off => 0,
            Level::Plus => 1,
        }
    }

    pub fn as_f64(self) -> f64 {
        self.value() as f64
    }

    pub fn negate(self) -> Self {
        match self {
            Level::Minus => Level::Plus,
            Level::Off => Level::Off,
            Level::Plus => Level::Minus,
        }
    }

    pub fn is_on(self) -> bool {
        self != Level::Off
    }
}

impl TryFrom<i8> for Level {
    type Error = Error;

    fn try_from(v: i8) -> Result<Self> {
        match v {
            -1 => Ok(Level::Minus),
            0 => Ok(Level::Off),
            1 => Ok(Level::Plus),
            other => Err(Error::InvalidSequence(format!("level {other} is not in {{-1, 0, 1}}"))),
        }
    }
}

impl From<Level> for i8 {
    fn from(l: Level) -> i8 {
        l.value()
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

/// Sign of a family, template or start level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn flip(self) -> Self {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }

    pub fn level(self) -> Level {
        match self {
            Sign::Plus => Level::Plus,
            Sign::Minus => Level::Minus,
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Sign::Plus => "plus",
            Sign::Minus => "minus",
        }
    }
}

/// Counts `(p, q)` of transitions touching `-1` and `+1` respectively.
pub fn crossing_counts(levels: &[Level]) -> (usize, usize) {
    let (mut p, mut q) = (0, 0);
    for w in levels.windows(2) {
        if w[0] == Level::Minus || w[1] == Level::Minus {
            p += 1;
        }
        if w[0] == Level::Plus || w[1] == Level::Plus {
            q += 1;
        }
    }
    (p, q)
}

/// A sequence over `{-1, 0, +1}` with its crossing counts.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct CandidateSequence {
    levels: Vec<Level>,
    p: usize,
    q: usize,
}

impl CandidateSequence {
    /// Validated constructor: nonempty, no repeated neighbours, no direct
    /// `+1`/`-1` switch, nonzero terminal level.
    pub fn new(levels: Vec<Level>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidSequence("sequence is empty".into()));
        }
        for w in levels.windows(2) {
            if w[0] == w[1] {
                return Err(Error::InvalidSequence(format!("repeated level {}", w[0])));
            }
            if w[0].is_on() && w[1].is_on() {
                return Err(Error::InvalidSequence(format!(
                    "direct switch {} -> {} without an off segment",
                    w[0], w[1]
                )));
            }
        }
        if !levels.last().is_some_and(|l| l.is_on()) {
            return Err(Error::InvalidSequence("terminal level must be nonzero".into()));
        }
        Ok(Self::structural(levels))
    }

    /// Builds a sequence without checking the structural conditions.
    pub fn structural(levels: Vec<Level>) -> Self {
        let (p, q) = crossing_counts(&levels);
        Self { levels, p, q }
    }

    pub fn from_values(values: &[i8]) -> Result<Self> {
        let levels = values
            .iter()
            .map(|&v| Level::try_from(v))
            .collect::<Result<Vec<_>>>()?;
        Self::new(levels)
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn values(&self) -> Vec<i8> {
        self.levels.iter().map(|l| l.value()).collect()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Number of level changes.
    pub fn switchings(&self) -> usize {
        self.levels.len().saturating_sub(1)
    }

    /// Sign of the first nonzero level.
    pub fn leading_sign(&self) -> Option<Sign> {
        self.levels.iter().find_map(|l| match l {
            Level::Plus => Some(Sign::Plus),
            Level::Minus => Some(Sign::Minus),
            Level::Off => None,
        })
    }

    /// True when `self` can be obtained from `other` by deleting elements.
    pub fn is_subsequence_of(&self, other: &CandidateSequence) -> bool {
        let mut it = other.levels.iter();
        self.levels.iter().all(|l| it.any(|m| m == l))
    }
}

impl fmt::Display for CandidateSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, l) in self.levels.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{l}")?;
        }
        Ok(())
    }
}

impl FromStr for CandidateSequence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let values = s
            .trim()
            .trim_start_matches('(')
            .trim_end_matches(')')
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<i8>()
                    .map_err(|_| Error::InvalidSequence(format!("cannot parse level {t:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_values(&values)
    }
}

/// Beginning, middle and end segment counts of a family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SegmentCounts {
    pub beta_plus: u8,
    pub beta_minus: u8,
    pub gamma_plus: usize,
    pub gamma_minus: usize,
    pub eps_plus: u8,
    pub eps_minus: u8,
}

impl SegmentCounts {
    fn mirrored(self) -> Self {
        Self {
            beta_plus: self.beta_minus,
            beta_minus: self.beta_plus,
            gamma_plus: self.gamma_minus,
            gamma_minus: self.gamma_plus,
            eps_plus: self.eps_minus,
            eps_minus: self.eps_plus,
        }
    }

    /// Number of interleavings of the middle segment.
    pub fn arrangements(&self) -> u64 {
        binomial((self.gamma_plus + self.gamma_minus) as u64, self.gamma_plus as u64)
    }
}

/// `S^+_{p,q}` or `S^-_{p,q}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FamilyId {
    pub p: usize,
    pub q: usize,
    pub sign: Sign,
}

impl FamilyId {
    pub fn new(p: usize, q: usize, sign: Sign) -> Self {
        Self { p, q, sign }
    }
}

/// Solves the segment-count system for `S^sign_{p,q}`, `p + q > 1`.
///
/// Returns `None` when the family is empty, and also for `p + q <= 1`,
/// whose families are fixed base cases rather than solutions of the system.
pub fn segment_solutions(p: usize, q: usize, sign: Sign) -> Option<SegmentCounts> {
    if p + q <= 1 {
        return None;
    }
    match sign {
        Sign::Plus => plus_solution(p, q),
        Sign::Minus => plus_solution(q, p).map(SegmentCounts::mirrored),
    }
}

fn plus_solution(p: usize, q: usize) -> Option<SegmentCounts> {
    // 2 gamma- + eps- = p fixes eps- by parity; eps+ is its complement.
    let eps_minus = (p % 2) as u8;
    let eps_plus = 1 - eps_minus;
    // beta+ + 2 gamma+ + eps+ = q with beta+ in {1, 2}.
    let rest = q.checked_sub(eps_plus as usize)?;
    let beta_plus: u8 = if rest % 2 == 1 { 1 } else { 2 };
    let gamma_plus = rest.checked_sub(beta_plus as usize)? / 2;
    Some(SegmentCounts {
        beta_plus,
        beta_minus: 0,
        gamma_plus,
        gamma_minus: (p - eps_minus as usize) / 2,
        eps_plus,
        eps_minus,
    })
}

/// All sequences of the family `id`.
pub fn enumerate_family(id: FamilyId) -> BTreeSet<CandidateSequence> {
    match id.sign {
        Sign::Plus => automaton::run_plus(id.p, id.q),
        Sign::Minus => automaton::run_plus(id.q, id.p)
            .iter()
            .map(conjugate)
            .collect(),
    }
}

/// Negates every nonzero level.
pub fn conjugate(s: &CandidateSequence) -> CandidateSequence {
    CandidateSequence::structural(s.levels.iter().map(|l| l.negate()).collect())
}

/// `N(S^+_{p,q})`.
pub fn count_family_plus(p: usize, q: usize) -> u64 {
    segment_solutions(p, q, Sign::Plus).map_or(0, |c| c.arrangements())
}

/// `N(S^+_{p,q}) + N(S^-_{p,q})` for `p + q > 1`.
pub fn count_family(p: usize, q: usize) -> u64 {
    count_family_plus(p, q) + segment_solutions(p, q, Sign::Minus).map_or(0, |c| c.arrangements())
}

/// The alternating sequence `(+1,0,-1,0,+1,...,(-1)^n)` or its conjugate.
///
/// # Panics
/// If `n == 0`.
pub fn tilde_sequence(n: usize, sign: Sign) -> CandidateSequence {
    assert!(n >= 1, "tilde sequence needs n >= 1");
    let mut levels = Vec::with_capacity(2 * n + 1);
    let mut current = sign.level();
    levels.push(current);
    for _ in 0..n {
        current = current.negate();
        levels.push(Level::Off);
        levels.push(current);
    }
    CandidateSequence::structural(levels)
}

/// Every candidate for an order-`n` system, optionally limited to at most
/// `r` switchings (`p + q <= r`).
pub fn enumerate_candidates(n: usize, r: Option<usize>) -> BTreeSet<CandidateSequence> {
    let limit = r.unwrap_or(2 * n);
    let excluded = [tilde_sequence(n.max(1), Sign::Plus), tilde_sequence(n.max(1), Sign::Minus)];
    let mut out = BTreeSet::new();
    for p in 0..=n {
        for q in 0..=n {
            if p + q > limit {
                continue;
            }
            for sign in [Sign::Plus, Sign::Minus] {
                out.extend(enumerate_family(FamilyId::new(p, q, sign)));
            }
        }
    }
    for s in &excluded {
        out.remove(s);
    }
    out
}

/// Closed-form number of candidates that start with a `+1` segment.
pub fn count_all_candidates(n: usize) -> u64 {
    let n = n as u64;
    if n == 0 {
        return 0;
    }
    if n.is_multiple_of(2) {
        binomial(n, (n - 2) / 2) + 2 * binomial(n, n / 2) + binomial(n + 1, n / 2) - 3
    } else {
        3 * binomial(n, (n - 1) / 2) + binomial(n + 1, n.div_ceil(2)) - 3
    }
}

/// Candidates whose first nonzero level is `+1`.
pub fn plus_part(set: &BTreeSet<CandidateSequence>) -> BTreeSet<CandidateSequence> {
    set.iter()
        .filter(|s| s.leading_sign() == Some(Sign::Plus))
        .cloned()
        .collect()
}

pub const BRUTE_FORCE_MAX_ORDER: usize = 8;

/// The eight building blocks with their `(p, q)` tallies.
const SUB_SEQUENCES: [(&[Level], usize, usize); 8] = [
    (&[Level::Plus, Level::Off], 0, 1),
    (&[Level::Minus, Level::Off], 1, 0),
    (&[Level::Off, Level::Plus, Level::Off], 0, 2),
    (&[Level::Off, Level::Minus, Level::Off], 2, 0),
    (&[Level::Off, Level::Plus], 0, 1),
    (&[Level::Off, Level::Minus], 1, 0),
    (&[Level::Plus], 0, 0),
    (&[Level::Minus], 0, 0),
];

/// Independent oracle: concatenates the building blocks directly, subject
/// to the joining rules, and filters by the structural conditions.
pub fn brute_force_candidates(n: usize) -> Result<BTreeSet<CandidateSequence>> {
    if n > BRUTE_FORCE_MAX_ORDER {
        return Err(Error::OrderTooLarge {
            n,
            limit: BRUTE_FORCE_MAX_ORDER,
        });
    }
    let mut out = BTreeSet::new();
    let mut levels = Vec::new();
    grow(n, &mut levels, 0, 0, &mut out);
    if n >= 1 {
        out.remove(&tilde_sequence(n, Sign::Plus));
        out.remove(&tilde_sequence(n, Sign::Minus));
    }
    Ok(out)
}

fn grow(
    n: usize,
    levels: &mut Vec<Level>,
    p: usize,
    q: usize,
    out: &mut BTreeSet<CandidateSequence>,
) {
    for (block, dp, dq) in SUB_SEQUENCES {
        let (np, nq) = (p + dp, q + dq);
        if np > n || nq > n {
            continue;
        }
        let joined = match levels.last() {
            None => block.to_vec(),
            // Blocks are joined only zero to zero, and the two zeros merge.
            Some(Level::Off) if block[0] == Level::Off => block[1..].to_vec(),
            Some(_) => continue,
        };
        let keep = levels.len();
        levels.extend(joined);
        if levels.last().is_some_and(|l| l.is_on()) {
            let s = CandidateSequence::structural(levels.clone());
            debug_assert_eq!((s.p, s.q), (np, nq));
            out.insert(s);
        } else if np + nq < 2 * n {
            grow(n, levels, np, nq, out);
        }
        levels.truncate(keep);
    }
}

/// Members of `set` that are not a proper subsequence of another member.
///
/// Every candidate obtained by collapsing segments of a longer candidate is
/// a subsequence of it, so solving only the maximal members covers the rest
/// through zero-length segments.
pub fn maximal_sequences(set: &BTreeSet<CandidateSequence>) -> BTreeSet<CandidateSequence> {
    set.iter()
        .filter(|s| {
            !set
                .iter()
                .any(|t| t.len() > s.len() && s.is_subsequence_of(t))
        })
        .cloned()
        .collect()
}
