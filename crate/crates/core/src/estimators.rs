//! Closed-form bias estimators and corrections.
//!
//! All estimators return the signed gap `P(y_hat=1 | y=1, group=1) -
//! P(y_hat=1 | y=1, group=0)`; callers take the absolute value for the
//! equal-opportunity bias.

use serde::Serialize;

use crate::error::{Error, Group, Result};
use crate::table::{Axis, Cell, JointTable};

/// `gamma` at or below this is treated as uninvertible.
pub const GAMMA_THRESHOLD: f64 = 1e-6;
/// `|1 - delta1 - delta2|` at or below this is treated as uninvertible.
pub const DELTA_THRESHOLD: f64 = 1e-6;

/// Joint base rates of the positive class in each protected group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rates {
    /// `P(y=1, a=1)`
    pub r: f64,
    /// `P(y=1, a=0)`
    pub s: f64,
}

impl Rates {
    pub fn new(r: f64, s: f64) -> Result<Self> {
        if !(r.is_finite() && s.is_finite()) || r < 0.0 || s < 0.0 || r + s > 1.0 + 1e-12 {
            return Err(Error::InvalidParams(format!(
                "rates r={r}, s={s} must be nonnegative with r+s <= 1"
            )));
        }
        Ok(Self { r, s })
    }

    /// The first empty group, if any. Only estimators that divide by `r` or
    /// `s` treat this as fatal.
    pub fn missing_group(&self) -> Option<Group> {
        if self.r <= 0.0 {
            Some(Group::PositiveA1)
        } else if self.s <= 0.0 {
            Some(Group::PositiveA0)
        } else {
            None
        }
    }

    pub fn check_groups(&self) -> Result<()> {
        match self.missing_group() {
            Some(g) => Err(Error::MissingGroup(g)),
            None => Ok(()),
        }
    }
}

/// Error rates of the attribute classifier on the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorProfile {
    /// `P(a_hat != a | a=0, y=1)`
    pub g1: f64,
    /// `P(a_hat != a | a=1, y=1)`
    pub g2: f64,
    /// `P(a_hat=1 | y_hat=1, a=0, y=1)`
    pub delta1: f64,
    /// `P(a_hat=0 | y_hat=1, a=1, y=1)`
    pub delta2: f64,
}

impl ErrorProfile {
    pub fn new(g1: f64, g2: f64, delta1: f64, delta2: f64) -> Result<Self> {
        for (name, v) in [("g1", g1), ("g2", g2), ("delta1", delta1), ("delta2", delta2)] {
            check_probability(name, v)?;
        }
        Ok(Self {
            g1,
            g2,
            delta1,
            delta2,
        })
    }
}

fn check_probability(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!("{name}={v} outside [0,1]")))
    }
}

/// `r = P(y=1, a=1)`, `s = P(y=1, a=0)` as fractions of the whole table.
pub fn rates(table: &JointTable) -> Result<Rates> {
    table.require(Axis::A)?;
    Rates::new(
        table.prob(|c| c.y && c.a),
        table.prob(|c| c.y && !c.a),
    )
}

fn group_rate(table: &JointTable, group: impl Fn(Cell) -> bool, value: bool) -> Option<f64> {
    table.conditional(|c| c.y_hat, |c| c.y && group(c) == value)
}

/// `(alpha, beta)` from true attributes.
pub fn true_rates(table: &JointTable) -> Result<(f64, f64)> {
    table.require(Axis::A)?;
    let alpha = group_rate(table, |c| c.a, true).ok_or(Error::MissingGroup(Group::PositiveA1))?;
    let beta = group_rate(table, |c| c.a, false).ok_or(Error::MissingGroup(Group::PositiveA0))?;
    Ok((alpha, beta))
}

/// `alpha - beta`.
pub fn true_bias(table: &JointTable) -> Result<f64> {
    let (alpha, beta) = true_rates(table)?;
    Ok(alpha - beta)
}

/// `(alpha_hat, beta_hat)` from predicted attributes.
pub fn naive_rates(table: &JointTable) -> Result<(f64, f64)> {
    table.require(Axis::AHat)?;
    let alpha_hat = group_rate(table, |c| c.a_hat, true)
        .ok_or(Error::EmptyPredictedGroup { a_hat: true })?;
    let beta_hat = group_rate(table, |c| c.a_hat, false)
        .ok_or(Error::EmptyPredictedGroup { a_hat: false })?;
    Ok((alpha_hat, beta_hat))
}

/// `alpha_hat - beta_hat`.
pub fn naive_bias(table: &JointTable) -> Result<f64> {
    let (alpha_hat, beta_hat) = naive_rates(table)?;
    Ok(alpha_hat - beta_hat)
}

/// `(g1, g2)`.
pub fn conditional_errors(table: &JointTable) -> Result<(f64, f64)> {
    table.require(Axis::A)?;
    table.require(Axis::AHat)?;
    let g1 = table
        .conditional(|c| c.a_hat != c.a, |c| c.y && !c.a)
        .ok_or(Error::MissingGroup(Group::PositiveA0))?;
    let g2 = table
        .conditional(|c| c.a_hat != c.a, |c| c.y && c.a)
        .ok_or(Error::MissingGroup(Group::PositiveA1))?;
    Ok((g1, g2))
}

/// `(delta1, delta2)`, the attribute error rates restricted to `y_hat = 1`.
pub fn deltas(table: &JointTable) -> Result<(f64, f64)> {
    table.require(Axis::A)?;
    table.require(Axis::AHat)?;
    let delta1 = table
        .conditional(|c| c.a_hat, |c| c.y && c.y_hat && !c.a)
        .ok_or(Error::MissingConditioningEvent {
            event: "y_hat=1, a=0, y=1",
        })?;
    let delta2 = table
        .conditional(|c| !c.a_hat, |c| c.y && c.y_hat && c.a)
        .ok_or(Error::MissingConditioningEvent {
            event: "y_hat=1, a=1, y=1",
        })?;
    Ok((delta1, delta2))
}

pub fn error_profile(table: &JointTable) -> Result<ErrorProfile> {
    let (g1, g2) = conditional_errors(table)?;
    let (delta1, delta2) = deltas(table)?;
    ErrorProfile::new(g1, g2, delta1, delta2)
}

/// Multiplicative shrinkage of the naive gap under conditional independence:
///
/// `gamma = |1 - g1 - g2| / ((s/r (1 - g1) + g2) (r/s (1 - g2) + g1))`
///
/// The value lies in `[0, 1]`; it is evaluated with `r s` multiplied through
/// so that the perfect classifier gives exactly one.
pub fn distortion_factor(g1: f64, g2: f64, rates: Rates) -> Result<f64> {
    check_probability("g1", g1)?;
    check_probability("g2", g2)?;
    rates.check_groups()?;
    let Rates { r, s } = rates;
    let left = s * (1.0 - g1) + r * g2;
    let right = r * (1.0 - g2) + s * g1;
    if left == 0.0 {
        return Err(Error::ZeroDenominator {
            which: "s/r (1-g1) + g2",
        });
    }
    if right == 0.0 {
        return Err(Error::ZeroDenominator {
            which: "r/s (1-g2) + g1",
        });
    }
    let gamma = r * s * (1.0 - g1 - g2).abs() / (left * right);
    Ok(gamma.min(1.0))
}

/// `(alpha_hat, beta_hat)` implied by `(alpha, beta)` when `y_hat` and
/// `a_hat` are independent given `(y, a)`.
pub fn forward_noisy_estimates(
    alpha: f64,
    beta: f64,
    rates: Rates,
    g1: f64,
    g2: f64,
) -> Result<(f64, f64)> {
    for (name, v) in [("alpha", alpha), ("beta", beta), ("g1", g1), ("g2", g2)] {
        check_probability(name, v)?;
    }
    let Rates { r, s } = rates;
    let denom_hat1 = r * (1.0 - g2) + s * g1;
    let denom_hat0 = r * g2 + s * (1.0 - g1);
    if denom_hat1 <= 0.0 {
        return Err(Error::ZeroDenominator {
            which: "r (1-g2) + s g1",
        });
    }
    if denom_hat0 <= 0.0 {
        return Err(Error::ZeroDenominator {
            which: "r g2 + s (1-g1)",
        });
    }
    let alpha_hat = (alpha * r * (1.0 - g2) + beta * s * g1) / denom_hat1;
    let beta_hat = (alpha * r * g2 + beta * s * (1.0 - g1)) / denom_hat0;
    Ok((alpha_hat, beta_hat))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Corrected {
    pub value: f64,
    /// Set when `naive_abs / gamma` exceeded one and was clamped.
    pub clamped: bool,
}

/// `|alpha_hat - beta_hat| / gamma`, clamped to `[0, 1]`.
pub fn corrected_bias(naive_abs: f64, gamma: f64) -> Result<Corrected> {
    if !(gamma > GAMMA_THRESHOLD) {
        return Err(Error::UninvertibleDistortion { gamma });
    }
    let raw = naive_abs.abs() / gamma;
    Ok(Corrected {
        value: raw.min(1.0),
        clamped: raw > 1.0,
    })
}

/// Recovers `alpha - beta` from the naive rates without any independence
/// assumption, given the error profile and the base-rate ratio.
pub fn general_corrected_bias(
    alpha_hat: f64,
    beta_hat: f64,
    profile: &ErrorProfile,
    rates: Rates,
) -> Result<f64> {
    rates.check_groups()?;
    let ErrorProfile {
        g1,
        g2,
        delta1,
        delta2,
    } = *profile;
    let denominator = 1.0 - delta1 - delta2;
    if denominator.abs() <= DELTA_THRESHOLD {
        return Err(Error::DegenerateDeltas { denominator });
    }
    let s_over_r = rates.s / rates.r;
    let r_over_s = rates.r / rates.s;
    let hat1 = alpha_hat * (s_over_r * g1 + 1.0 - g2) * (1.0 - delta1 + r_over_s * delta2);
    let hat0 = beta_hat * (1.0 - g1 + r_over_s * g2) * (1.0 + s_over_r * delta1 - delta2);
    Ok((hat1 - hat0) / denominator)
}

/// Largest deviation from conditional independence of `y_hat` and `a_hat`
/// given `(y, a)`:
///
/// `max_{y,a} max_{y_hat,a_hat} |P(y_hat,a_hat | y,a) - P(y_hat | y,a) P(a_hat | y,a)|`
///
/// Empty `(y, a)` cells are skipped.
pub fn ci_violation(table: &JointTable) -> Result<f64> {
    table.require(Axis::A)?;
    table.require(Axis::AHat)?;
    let mut worst = 0.0f64;
    for (y, a) in [(false, false), (false, true), (true, false), (true, true)] {
        let given = |c: Cell| c.y == y && c.a == a;
        if table.mass(given) <= 0.0 {
            continue;
        }
        for (y_hat, a_hat) in [(false, false), (false, true), (true, false), (true, true)] {
            let joint = table
                .conditional(|c| c.y_hat == y_hat && c.a_hat == a_hat, given)
                .unwrap_or(0.0);
            let p_yhat = table.conditional(|c| c.y_hat == y_hat, given).unwrap_or(0.0);
            let p_ahat = table.conditional(|c| c.a_hat == a_hat, given).unwrap_or(0.0);
            worst = worst.max((joint - p_yhat * p_ahat).abs());
        }
    }
    Ok(worst)
}
