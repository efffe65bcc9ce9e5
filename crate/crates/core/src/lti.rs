//! Diagonal single-input LTI systems with rational spectra, and the
//! problem data (initial state, time weight, switching budget) attached to
//! them.
//!
//! Eigenvalues enter as integer pairs `n_i / d_i` and are kept exact: the
//! spectrum stores the common denominator `l = lcm(d_1, ..., d_n)` and the
//! integer numerators `c_i = n_i * l / d_i`, so that `lambda_i = c_i / l`.

use std::fs;
use std::path::Path;

use num_integer::Integer;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exact rational spectrum `lambda_i = n_i / d_i = c_i / l`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RationalSpectrum {
    numerators: Vec<i64>,
    denominators: Vec<i64>,
    common_denominator: i64,
    scaled_numerators: Vec<i64>,
}

impl RationalSpectrum {
    /// Builds a spectrum from `(numerator, denominator)` pairs.
    ///
    /// Each fraction is reduced to lowest terms with a positive denominator
    /// before the common denominator is taken.
    pub fn new(rationals: &[(i64, i64)]) -> Result<Self> {
        if rationals.is_empty() {
            return Err(Error::EmptySpectrum);
        }
        let mut numerators = Vec::with_capacity(rationals.len());
        let mut denominators = Vec::with_capacity(rationals.len());
        for (index, &(num, den)) in rationals.iter().enumerate() {
            if den == 0 {
                return Err(Error::ZeroDenominator { index });
            }
            if num == 0 {
                return Err(Error::ZeroEigenvalue { index });
            }
            let g = num.gcd(&den);
            let (mut num, mut den) = (num / g, den / g);
            if den < 0 {
                num = -num;
                den = -den;
            }
            numerators.push(num);
            denominators.push(den);
        }

        let mut common: i64 = 1;
        for &d in &denominators {
            let g = common.gcd(&d);
            common = (common / g).checked_mul(d).ok_or(Error::SpectrumOverflow)?;
        }
        let scaled_numerators = numerators
            .iter()
            .zip(&denominators)
            .map(|(&num, &den)| num.checked_mul(common / den).ok_or(Error::SpectrumOverflow))
            .collect::<Result<Vec<_>>>()?;

        for i in 0..scaled_numerators.len() {
            for j in (i + 1)..scaled_numerators.len() {
                if scaled_numerators[i] == scaled_numerators[j] {
                    return Err(Error::RepeatedEigenvalue { first: i, second: j });
                }
            }
        }

        Ok(Self {
            numerators,
            denominators,
            common_denominator: common,
            scaled_numerators,
        })
    }

    /// Number of eigenvalues.
    pub fn len(&self) -> usize {
        self.scaled_numerators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scaled_numerators.is_empty()
    }

    /// Reduced numerators `n_i`.
    pub fn numerators(&self) -> &[i64] {
        &self.numerators
    }

    /// Reduced, positive denominators `d_i`.
    pub fn denominators(&self) -> &[i64] {
        &self.denominators
    }

    /// Common denominator `l`.
    pub fn common_denominator(&self) -> i64 {
        self.common_denominator
    }

    /// Integer numerators `c_i` over the common denominator.
    pub fn scaled_numerators(&self) -> &[i64] {
        &self.scaled_numerators
    }

    pub fn eigenvalue(&self, i: usize) -> f64 {
        self.scaled_numerators[i] as f64 / self.common_denominator as f64
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.eigenvalue(i)).collect()
    }

    /// Smallest eigenvalue magnitude, `min |c_i| / l`.
    pub fn slowest_rate(&self) -> f64 {
        let min_c = self.scaled_numerators.iter().map(|c| c.unsigned_abs()).min().unwrap_or(1);
        min_c as f64 / self.common_denominator as f64
    }
}

/// Builds a [`RationalSpectrum`] from integer pairs.
pub fn build_spectrum(rationals: &[(i64, i64)]) -> Result<RationalSpectrum> {
    RationalSpectrum::new(rationals)
}

/// `x' = diag(lambda) x + b u` with `|u| <= 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LtiSystem {
    spectrum: RationalSpectrum,
    input_gains: Vec<f64>,
}

impl LtiSystem {
    pub fn new(spectrum: RationalSpectrum, input_gains: Vec<f64>) -> Result<Self> {
        if input_gains.len() != spectrum.len() {
            return Err(Error::DimensionMismatch {
                what: "input gains",
                expected: spectrum.len(),
                actual: input_gains.len(),
            });
        }
        // For diagonal A with distinct nonzero eigenvalues, controllability of
        // (A, AB) reduces to every b_i being nonzero.
        if let Some(index) = input_gains.iter().position(|b| *b == 0.0 || !b.is_finite()) {
            return Err(Error::ZeroInputGain { index });
        }
        Ok(Self {
            spectrum,
            input_gains,
        })
    }

    /// System order `n`.
    pub fn order(&self) -> usize {
        self.spectrum.len()
    }

    pub fn spectrum(&self) -> &RationalSpectrum {
        &self.spectrum
    }

    pub fn input_gains(&self) -> &[f64] {
        &self.input_gains
    }

    pub fn eigenvalue(&self, i: usize) -> f64 {
        self.spectrum.eigenvalue(i)
    }
}

/// A validated time-fuel problem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProblemSpec {
    pub system: LtiSystem,
    pub initial_state: Vec<f64>,
    pub time_weight: f64,
    pub max_switches: Option<usize>,
}

impl ProblemSpec {
    pub fn order(&self) -> usize {
        self.system.order()
    }

    /// Same problem with a different time weight.
    pub fn with_time_weight(&self, k: f64) -> Result<Self> {
        validate_problem(
            self.system.clone(),
            self.initial_state.clone(),
            k,
            self.max_switches,
        )
    }
}

pub fn validate_problem(
    system: LtiSystem,
    x0: Vec<f64>,
    k: f64,
    max_switches: Option<usize>,
) -> Result<ProblemSpec> {
    let n = system.order();
    if x0.len() != n {
        return Err(Error::DimensionMismatch {
            what: "initial state",
            expected: n,
            actual: x0.len(),
        });
    }
    if let Some(index) = x0.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFiniteState { index });
    }
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::NonpositiveTimeWeight(k));
    }
    if let Some(r) = max_switches {
        if r == 0 || r > 2 * n {
            return Err(Error::InvalidMaxSwitches {
                value: r,
                max: 2 * n,
            });
        }
    }
    Ok(ProblemSpec {
        system,
        initial_state: x0,
        time_weight: k,
        max_switches,
    })
}

/// On-disk problem description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub eigenvalues: Vec<[i64; 2]>,
    pub b: Vec<f64>,
    pub x0: Vec<f64>,
    pub k: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_switches: Option<usize>,
}

impl ProblemFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn into_spec(self) -> Result<ProblemSpec> {
        let pairs: Vec<(i64, i64)> = self.eigenvalues.iter().map(|p| (p[0], p[1])).collect();
        let system = LtiSystem::new(build_spectrum(&pairs)?, self.b)?;
        validate_problem(system, self.x0, self.k, self.max_switches)
    }
}

impl From<&ProblemSpec> for ProblemFile {
    fn from(spec: &ProblemSpec) -> Self {
        let spectrum = spec.system.spectrum();
        Self {
            eigenvalues: spectrum
                .numerators()
                .iter()
                .zip(spectrum.denominators())
                .map(|(&n, &d)| [n, d])
                .collect(),
            b: spec.system.input_gains().to_vec(),
            x0: spec.initial_state.clone(),
            k: spec.time_weight,
            max_switches: spec.max_switches,
        }
    }
}
