//! The optimal control automaton. Each state emits one building block; a
//! run from an initial state to a final state spells one sequence of
//! `S^+_{p,q}`. All runs are collected by backtracking over the enabled
//! edges.

use std::collections::BTreeSet;

use super::{segment_solutions, CandidateSequence, Level, Sign};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    /// (+1, 0)
    Q1,
    /// (0, +1, 0)
    Q2,
    /// (0, -1, 0)
    Q3,
    /// (0, +1)
    Q4,
    /// (0, -1)
    Q5,
    /// (+1)
    Q6,
}

impl State {
    fn block(self) -> &'static [Level] {
        use Level::*;
        match self {
            State::Q1 => &[Plus, Off],
            State::Q2 => &[Off, Plus, Off],
            State::Q3 => &[Off, Minus, Off],
            State::Q4 => &[Off, Plus],
            State::Q5 => &[Off, Minus],
            State::Q6 => &[Plus],
        }
    }

    fn is_final(self) -> bool {
        matches!(self, State::Q4 | State::Q5 | State::Q6)
    }
}

#[derive(Debug, Clone, Copy)]
struct Registers {
    gamma_plus: usize,
    gamma_minus: usize,
    eps_plus: bool,
    eps_minus: bool,
}

impl Registers {
    /// Edges leaving a non-final state whose guards hold, with the reset
    /// applied.
    fn successors(self) -> Vec<(State, Registers)> {
        let mut out = Vec::new();
        if self.gamma_plus > 0 {
            out.push((
                State::Q2,
                Registers {
                    gamma_plus: self.gamma_plus - 1,
                    ..self
                },
            ));
        }
        if self.gamma_minus > 0 {
            out.push((
                State::Q3,
                Registers {
                    gamma_minus: self.gamma_minus - 1,
                    ..self
                },
            ));
        }
        if self.gamma_plus == 0 && self.gamma_minus == 0 {
            if self.eps_plus {
                out.push((State::Q4, self));
            }
            if self.eps_minus {
                out.push((State::Q5, self));
            }
        }
        out
    }
}

/// Appends a block, merging a doubled zero at the joint.
fn append(levels: &mut Vec<Level>, block: &[Level]) {
    match (levels.last(), block.first()) {
        (Some(Level::Off), Some(Level::Off)) => levels.extend_from_slice(&block[1..]),
        _ => levels.extend_from_slice(block),
    }
}

fn explore(
    state: State,
    regs: Registers,
    levels: &mut Vec<Level>,
    out: &mut BTreeSet<CandidateSequence>,
) {
    let keep = levels.len();
    append(levels, state.block());
    if state.is_final() {
        out.insert(CandidateSequence::structural(levels.clone()));
    } else {
        for (next, next_regs) in regs.successors() {
            explore(next, next_regs, levels, out);
        }
    }
    levels.truncate(keep);
}

/// All runs for `S^+_{p,q}`.
pub(super) fn run_plus(p: usize, q: usize) -> BTreeSet<CandidateSequence> {
    let mut out = BTreeSet::new();
    let mut levels = Vec::new();
    let idle = Registers {
        gamma_plus: 0,
        gamma_minus: 0,
        eps_plus: false,
        eps_minus: false,
    };
    match (p, q) {
        (0, 0) => explore(State::Q6, idle, &mut levels, &mut out),
        (0, 1) => explore(
            State::Q4,
            Registers {
                eps_plus: true,
                ..idle
            },
            &mut levels,
            &mut out,
        ),
        (1, 0) => {}
        _ => {
            if let Some(c) = segment_solutions(p, q, Sign::Plus) {
                let regs = Registers {
                    gamma_plus: c.gamma_plus,
                    gamma_minus: c.gamma_minus,
                    eps_plus: c.eps_plus == 1,
                    eps_minus: c.eps_minus == 1,
                };
                let start = if c.beta_plus == 1 { State::Q1 } else { State::Q2 };
                explore(start, regs, &mut levels, &mut out);
            }
        }
    }
    out
}
