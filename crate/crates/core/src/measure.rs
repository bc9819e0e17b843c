//! Regression losses and the prediction container they are evaluated on.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::stable_sum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Minimize,
    Maximize,
}

impl Direction {
    /// +1 for losses, -1 for scores; multiplies `post - baseline` so that
    /// "performance got worse" is always positive.
    pub fn sign(self) -> f64 {
        match self {
            Direction::Minimize => 1.0,
            Direction::Maximize => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Mse,
    Mae,
    Rmse,
    Rsq,
}

impl Measure {
    pub fn id(self) -> &'static str {
        match self {
            Measure::Mse => "mse",
            Measure::Mae => "mae",
            Measure::Rmse => "rmse",
            Measure::Rsq => "rsq",
        }
    }

    pub fn direction(self) -> Direction {
        match self {
            Measure::Rsq => Direction::Maximize,
            _ => Direction::Minimize,
        }
    }

    /// Whether the aggregate is the mean of observation-wise losses.
    pub fn decomposable(self) -> bool {
        matches!(self, Measure::Mse | Measure::Mae)
    }

    pub fn evaluate(self, prediction: &Prediction) -> Result<f64> {
        self.score(&prediction.truth, &prediction.response)
    }

    pub fn obs_losses(self, prediction: &Prediction) -> Result<Vec<f64>> {
        self.pointwise(&prediction.truth, &prediction.response)
    }

    /// Aggregate score on raw truth/response slices.
    pub fn score(self, truth: &[f64], response: &[f64]) -> Result<f64> {
        debug_assert_eq!(truth.len(), response.len());
        let n = truth.len();
        if n == 0 {
            return Err(Error::EmptyPrediction);
        }
        let sq = || truth.iter().zip(response).map(|(t, r)| (t - r) * (t - r));
        Ok(match self {
            Measure::Mse => stable_sum(sq()) / n as f64,
            Measure::Mae => stable_sum(truth.iter().zip(response).map(|(t, r)| (t - r).abs())) / n as f64,
            Measure::Rmse => (stable_sum(sq()) / n as f64).sqrt(),
            Measure::Rsq => {
                let mean = stable_sum(truth.iter().copied()) / n as f64;
                let ss_tot = stable_sum(truth.iter().map(|t| (t - mean) * (t - mean)));
                if ss_tot <= 0.0 {
                    return Err(Error::DegenerateRsq);
                }
                1.0 - stable_sum(sq()) / ss_tot
            }
        })
    }

    pub fn pointwise(self, truth: &[f64], response: &[f64]) -> Result<Vec<f64>> {
        if !self.decomposable() {
            return Err(Error::NotDecomposable(self.id().to_string()));
        }
        if truth.is_empty() {
            return Err(Error::EmptyPrediction);
        }
        Ok(match self {
            Measure::Mse => truth.iter().zip(response).map(|(t, r)| (t - r) * (t - r)).collect(),
            Measure::Mae => truth.iter().zip(response).map(|(t, r)| (t - r).abs()).collect(),
            Measure::Rmse | Measure::Rsq => unreachable!(),
        })
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().trim_start_matches("regr.") {
            "mse" => Ok(Measure::Mse),
            "mae" => Ok(Measure::Mae),
            "rmse" => Ok(Measure::Rmse),
            "rsq" | "r2" => Ok(Measure::Rsq),
            other => Err(Error::param(format!("unknown measure '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub row_ids: Vec<usize>,
    pub truth: Vec<f64>,
    pub response: Vec<f64>,
}

impl Prediction {
    pub fn new(row_ids: Vec<usize>, truth: Vec<f64>, response: Vec<f64>) -> Result<Self> {
        if row_ids.len() != truth.len() || truth.len() != response.len() {
            return Err(Error::param("prediction vectors must have equal lengths"));
        }
        Ok(Self { row_ids, truth, response })
    }

    pub fn len(&self) -> usize {
        self.truth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truth.is_empty()
    }
}
