//! Sequential VAR order identification: test VAR(p0) against VAR(p0+1) for
//! p0 = 0, 1, … and stop at the first non-rejection.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::gaussian_test_order;
use crate::grid::{factorize, make_grid, BallGrid};
use crate::rank_tests::{test_order, Calibration, TestOutcome};
use crate::scores::ScoreSpec;
use crate::series::SeriesMatrix;

/// Which family of order tests drives the identification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum OrderTest {
    Rank { score: ScoreSpec },
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentifyOptions {
    pub alpha: f64,
    /// Defaults to `⌊n^{1/3}⌋`.
    pub max_order: Option<usize>,
    /// Permutation count for rank tests; `None` means asymptotic calibration.
    pub permutations: Option<usize>,
    pub seed: u64,
}

impl Default for IdentifyOptions {
    fn default() -> Self {
        Self { alpha: 0.05, max_order: None, permutations: None, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentificationStep {
    pub p0: usize,
    pub outcome: TestOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentificationTrace {
    pub test: OrderTest,
    pub steps: Vec<IdentificationStep>,
    pub selected_order: usize,
    pub max_order: usize,
    /// Every test up to the cap rejected.
    pub truncated: bool,
}

/// A step failed; `partial` holds the steps completed before it.
#[derive(Debug)]
pub struct IdentificationFailure {
    pub partial: IdentificationTrace,
    pub error: Error,
}

impl fmt::Display for IdentificationFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "order identification stopped after {} step(s): {}", self.partial.steps.len(), self.error)
    }
}

impl std::error::Error for IdentificationFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<Error> for IdentificationFailure {
    fn from(error: Error) -> Self {
        let partial = IdentificationTrace {
            test: OrderTest::Gaussian,
            steps: Vec::new(),
            selected_order: 0,
            max_order: 0,
            truncated: false,
        };
        Self { partial, error }
    }
}

pub fn default_max_order(n: usize) -> usize {
    let mut k = (n as f64).cbrt().floor() as usize;
    // Guard against cbrt rounding just below an exact cube.
    while (k + 1).pow(3) <= n {
        k += 1;
    }
    k.max(1)
}

/// Runs the sequential procedure. Rank tests use `grid` when given and
/// otherwise the heuristic grid for `n` seeded with `opts.seed`. The same
/// permutation seed is used at every step.
pub fn identify_order(
    x: &SeriesMatrix,
    test: OrderTest,
    grid: Option<&BallGrid>,
    opts: IdentifyOptions,
) -> std::result::Result<IdentificationTrace, IdentificationFailure> {
    let (n, d) = (x.n(), x.d());
    let max_order = opts.max_order.unwrap_or_else(|| default_max_order(n));
    if max_order == 0 {
        return Err(Error::invalid("max_order must be at least 1").into());
    }
    if n <= d * max_order + 10 {
        return Err(Error::invalid(format!(
            "n = {n} is too small for max_order = {max_order} in dimension {d} (need n > {})",
            d * max_order + 10
        ))
        .into());
    }
    let owned;
    let grid = match (test, grid) {
        (OrderTest::Rank { .. }, None) => {
            owned = make_grid(factorize(n, d, None)?, d, opts.seed)?;
            Some(&owned)
        }
        (_, g) => g,
    };
    let calibration = match opts.permutations {
        Some(m) => Calibration::Permutation { m, seed: opts.seed },
        None => Calibration::Asymptotic,
    };
    let mut trace =
        IdentificationTrace { test, steps: Vec::new(), selected_order: max_order, max_order, truncated: true };
    for p0 in 0..max_order {
        let outcome = match test {
            OrderTest::Rank { score } => {
                test_order(x, p0, p0 + 1, score, grid.expect("rank tests have a grid"), opts.alpha, calibration)
            }
            OrderTest::Gaussian => gaussian_test_order(x, p0, p0 + 1, opts.alpha),
        };
        let outcome = match outcome {
            Ok(o) => o,
            Err(error) => {
                trace.selected_order = p0;
                trace.truncated = false;
                return Err(IdentificationFailure { partial: trace, error });
            }
        };
        let reject = outcome.reject;
        trace.steps.push(IdentificationStep { p0, outcome });
        if !reject {
            trace.selected_order = p0;
            trace.truncated = false;
            break;
        }
    }
    Ok(trace)
}

/// Convenience wrapper returning only the selected order.
pub fn selected_order(x: &SeriesMatrix, test: OrderTest, opts: IdentifyOptions) -> Result<usize> {
    identify_order(x, test, None, opts).map(|t| t.selected_order).map_err(|f| f.error)
}
