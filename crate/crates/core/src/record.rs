use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One example as seen by the auditor.
///
/// Labels are booleans: `y = true` is the positive class, `a = true` is
/// protected group 1. `score` is the attribute classifier's estimate of
/// `P(a = 1 | x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub y: bool,
    pub y_hat: bool,
    pub a: Option<bool>,
    pub a_hat: Option<bool>,
    pub score: Option<f64>,
}

impl PredictionRecord {
    pub fn new(id: impl Into<String>, y: bool, y_hat: bool) -> Self {
        Self {
            id: id.into(),
            y,
            y_hat,
            a: None,
            a_hat: None,
            score: None,
        }
    }

    pub fn with_a(mut self, a: bool) -> Self {
        self.a = Some(a);
        self
    }

    pub fn with_a_hat(mut self, a_hat: bool) -> Self {
        self.a_hat = Some(a_hat);
        self
    }

    pub fn with_score(mut self, score: f64) -> Self {
        self.score = Some(score);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(score) = self.score {
            if !(0.0..=1.0).contains(&score) {
                return Err(Error::InvalidParams(format!(
                    "record `{}`: score {score} outside [0,1]",
                    self.id
                )));
            }
        }
        Ok(())
    }

    pub(crate) fn require_a(&self) -> Result<bool> {
        self.a.ok_or_else(|| Error::MissingField {
            id: self.id.clone(),
            field: "a",
        })
    }

    pub(crate) fn require_a_hat(&self) -> Result<bool> {
        self.a_hat.ok_or_else(|| Error::MissingField {
            id: self.id.clone(),
            field: "a_hat",
        })
    }

    /// Distance of the attribute score from the decision boundary; small
    /// means the attribute classifier is uncertain.
    pub fn uncertainty_key(&self) -> Option<f64> {
        self.score.map(|s| (s - 0.5).abs())
    }
}
