//! Per-anchor weights over negative pairs.
//!
//! Row `i` of a weight matrix distributes unit mass over the negatives
//! `j != i` of anchor `i`. The diagonal (the positive pair) always carries
//! zero weight.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::features::SimilarityMatrix;

/// Which negatives receive more weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// Up-weight negatives that are similar to the anchor.
    Hard,
    /// Up-weight negatives that are dissimilar to the anchor.
    Easy,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Hard => "hard",
            Strategy::Easy => "easy",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "hard" => Ok(Strategy::Hard),
            "easy" => Ok(Strategy::Easy),
            other => Err(Error::InvalidParameter(format!(
                "unknown strategy {other:?} (expected hard or easy)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightKind {
    RowStochastic,
    DoublyStochastic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightStrategy {
    Hard,
    Easy,
    Uniform,
    /// Derived from an arbitrary cost matrix not tied to a strategy.
    Custom,
}

impl From<Strategy> for WeightStrategy {
    fn from(s: Strategy) -> Self {
        match s {
            Strategy::Hard => WeightStrategy::Hard,
            Strategy::Easy => WeightStrategy::Easy,
        }
    }
}

/// Nonnegative `N x N` negative-pair weights with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    pub w: Array2<f64>,
    pub kind: WeightKind,
    pub strategy: WeightStrategy,
}

impl WeightMatrix {
    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    /// Largest deviation of any row sum from 1.
    pub fn row_error(&self) -> f64 {
        self.w
            .rows()
            .into_iter()
            .map(|r| (r.sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Largest deviation of any column sum from 1.
    pub fn col_error(&self) -> f64 {
        self.w
            .columns()
            .into_iter()
            .map(|c| (c.sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "beta must be a finite positive number, got {beta}"
        )));
    }
    Ok(())
}

/// Softmax over `j != i` of `logit(S[i][j])`, max-shifted.
fn off_diagonal_softmax(s: &SimilarityMatrix, logit: impl Fn(f64) -> f64) -> Result<Array2<f64>> {
    let n = s.n();
    if n < 2 {
        return Err(Error::DegenerateAnchor(n));
    }
    let mut w = Array2::zeros((n, n));
    for i in 0..n {
        let mut peak = f64::NEG_INFINITY;
        for j in (0..n).filter(|&j| j != i) {
            peak = peak.max(logit(s.get(i, j)));
        }
        let mut total = 0.0;
        for j in (0..n).filter(|&j| j != i) {
            let e = (logit(s.get(i, j)) - peak).exp();
            w[[i, j]] = e;
            total += e;
        }
        for j in (0..n).filter(|&j| j != i) {
            w[[i, j]] /= total;
        }
    }
    Ok(w)
}

/// `w[i][j] ∝ exp(S[i][j] / beta)` over `j != i`.
pub fn hard_weights(s: &SimilarityMatrix, beta: f64) -> Result<WeightMatrix> {
    check_beta(beta)?;
    Ok(WeightMatrix {
        w: off_diagonal_softmax(s, |v| v / beta)?,
        kind: WeightKind::RowStochastic,
        strategy: WeightStrategy::Hard,
    })
}

/// `w[i][j] ∝ exp((1 - S[i][j]) / beta)` over `j != i`.
pub fn easy_weights(s: &SimilarityMatrix, beta: f64) -> Result<WeightMatrix> {
    check_beta(beta)?;
    Ok(WeightMatrix {
        w: off_diagonal_softmax(s, |v| (1.0 - v) / beta)?,
        kind: WeightKind::RowStochastic,
        strategy: WeightStrategy::Easy,
    })
}

pub fn strategy_weights(
    s: &SimilarityMatrix,
    strategy: Strategy,
    beta: f64,
) -> Result<WeightMatrix> {
    match strategy {
        Strategy::Hard => hard_weights(s, beta),
        Strategy::Easy => easy_weights(s, beta),
    }
}

/// Every negative gets `1 / (n - 1)`.
pub fn uniform_weights(n: usize) -> Result<WeightMatrix> {
    if n < 2 {
        return Err(Error::DegenerateAnchor(n));
    }
    let v = 1.0 / (n - 1) as f64;
    let w = Array2::from_shape_fn((n, n), |(i, j)| if i == j { 0.0 } else { v });
    Ok(WeightMatrix {
        w,
        kind: WeightKind::RowStochastic,
        strategy: WeightStrategy::Uniform,
    })
}
