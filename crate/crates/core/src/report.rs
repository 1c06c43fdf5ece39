//! Every estimate for one audit, each either a finite value or a reason code.

use std::collections::{HashMap, HashSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{
    ci_violation, conditional_errors, corrected_bias, deltas, distortion_factor,
    general_corrected_bias, naive_rates, rates, true_bias, ErrorProfile,
};
use crate::record::PredictionRecord;
use crate::sampling::{direct_estimation, plug_in_bias};
use crate::table::{build_joint_table, AttributeSource};

pub const NOT_REQUESTED: &str = "NotRequested";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reason {
    pub code: &'static str,
    pub message: String,
}

impl From<&Error> for Reason {
    fn from(e: &Error) -> Self {
        Self {
            code: e.code(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate {
    pub value: Option<f64>,
    pub reason: Option<Reason>,
}

impl Estimate {
    pub fn ok(value: f64) -> Self {
        Self {
            value: Some(value),
            reason: None,
        }
    }

    pub fn failed(err: &Error) -> Self {
        Self {
            value: None,
            reason: Some(err.into()),
        }
    }

    pub fn not_requested() -> Self {
        Self {
            value: None,
            reason: Some(Reason {
                code: NOT_REQUESTED,
                message: "estimator not requested".into(),
            }),
        }
    }

    pub fn from_result(r: Result<f64>) -> Self {
        match r {
            Ok(v) if v.is_finite() => Self::ok(v),
            Ok(v) => Self {
                value: None,
                reason: Some(Reason {
                    code: "NonFinite",
                    message: format!("estimate evaluated to {v}"),
                }),
            },
            Err(e) => Self::failed(&e),
        }
    }

    pub fn abs(&self) -> Self {
        Self {
            value: self.value.map(f64::abs),
            reason: self.reason.clone(),
        }
    }

    fn requested(on: bool, f: impl FnOnce() -> Self) -> Self {
        if on {
            f()
        } else {
            Self::not_requested()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileEstimate {
    pub g1: Estimate,
    pub g2: Estimate,
    pub delta1: Estimate,
    pub delta2: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatesEstimate {
    pub r: Estimate,
    pub s: Estimate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EstimatorSet {
    pub naive: bool,
    pub corrected: bool,
    pub general: bool,
    pub direct: bool,
}

impl EstimatorSet {
    pub const ALL: Self = Self {
        naive: true,
        corrected: true,
        general: true,
        direct: true,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasReport {
    pub true_bias_signed: Estimate,
    pub true_bias_abs: Estimate,
    pub naive_signed: Estimate,
    pub naive_abs: Estimate,
    pub gamma: Estimate,
    pub corrected_abs: Estimate,
    pub corrected_clamped: bool,
    pub general_signed: Estimate,
    pub general_abs: Estimate,
    pub direct_signed: Estimate,
    pub direct_abs: Estimate,
    pub plug_in_signed: Estimate,
    pub plug_in_abs: Estimate,
    pub error_profile: ProfileEstimate,
    pub rates: RatesEstimate,
    pub ci_violation: Estimate,
    pub n_evaluation: usize,
    pub n_labeled: usize,
}

impl BiasReport {
    /// `(field, reason)` for every missing estimate that was requested.
    pub fn degenerate(&self) -> Vec<(&'static str, &Reason)> {
        let fields: [(&'static str, &Estimate); 13] = [
            ("true_bias", &self.true_bias_signed),
            ("naive", &self.naive_signed),
            ("gamma", &self.gamma),
            ("corrected", &self.corrected_abs),
            ("general", &self.general_signed),
            ("direct", &self.direct_signed),
            ("plug_in", &self.plug_in_signed),
            ("g1", &self.error_profile.g1),
            ("g2", &self.error_profile.g2),
            ("delta1", &self.error_profile.delta1),
            ("delta2", &self.error_profile.delta2),
            ("r", &self.rates.r),
            ("ci_violation", &self.ci_violation),
        ];
        fields
            .into_iter()
            .filter_map(|(name, e)| e.reason.as_ref().map(|r| (name, r)))
            .filter(|(_, r)| r.code != NOT_REQUESTED)
            .collect()
    }

    /// Whether any requested headline estimator produced a value.
    pub fn any_requested_value(&self, set: EstimatorSet) -> bool {
        (set.naive && self.naive_signed.value.is_some())
            || (set.corrected && self.corrected_abs.value.is_some())
            || (set.general && self.general_signed.value.is_some())
            || (set.direct && self.direct_signed.value.is_some())
    }
}

fn split<T: Copy>(r: Result<(T, T)>) -> (Result<T>, Result<T>) {
    match r {
        Ok((a, b)) => (Ok(a), Ok(b)),
        Err(e) => (Err(clone_err(&e)), Err(e)),
    }
}

fn est(r: &Result<f64>) -> Estimate {
    match r {
        Ok(v) => Estimate::ok(*v),
        Err(e) => Estimate::failed(e),
    }
}

/// Audits the label classifier on `evaluation` (predicted attributes) using
/// `common` (records with both true and predicted attributes) to estimate
/// the attribute classifier's errors and the base rates.
///
/// Only an empty or malformed evaluation set is a hard error; everything else
/// degrades into reason codes on the individual estimates.
pub fn audit(
    evaluation: &[PredictionRecord],
    common: &[PredictionRecord],
    set: EstimatorSet,
) -> Result<BiasReport> {
    let eval_table = build_joint_table(evaluation, AttributeSource::PredictedA)?;
    let naive = naive_rates(&eval_table);
    let naive_signed = Estimate::from_result(naive.as_ref().map(|(a, b)| a - b).map_err(clone_err));

    let true_bias_signed = if evaluation.iter().all(|r| r.a.is_some()) {
        Estimate::from_result(
            build_joint_table(evaluation, AttributeSource::TrueA).and_then(|t| true_bias(&t)),
        )
    } else {
        Estimate::failed(&Error::MissingField {
            id: evaluation
                .iter()
                .find(|r| r.a.is_none())
                .map(|r| r.id.clone())
                .unwrap_or_default(),
            field: "a",
        })
    };

    let common_table = build_joint_table(common, AttributeSource::Both);
    let rates_r = common_table.as_ref().map_err(clone_err).and_then(rates);
    let (g1, g2) = split(common_table.as_ref().map_err(clone_err).and_then(conditional_errors));
    let (delta1, delta2) = split(common_table.as_ref().map_err(clone_err).and_then(deltas));

    let gamma = match (&g1, &g2, &rates_r) {
        (Ok(g1), Ok(g2), Ok(rt)) => distortion_factor(*g1, *g2, *rt),
        (Err(e), _, _) | (_, Err(e), _) | (_, _, Err(e)) => Err(clone_err(e)),
    };

    let mut corrected_clamped = false;
    let corrected_abs = Estimate::requested(set.corrected, || {
        let r = naive_signed
            .value
            .ok_or_else(|| reason_err(&naive_signed))
            .and_then(|n| corrected_bias(n.abs(), *gamma.as_ref().map_err(clone_err)?));
        match r {
            Ok(c) => {
                corrected_clamped = c.clamped;
                Estimate::ok(c.value)
            }
            Err(e) => Estimate::failed(&e),
        }
    });

    let general_signed = Estimate::requested(set.general, || {
        Estimate::from_result((|| {
            let (alpha_hat, beta_hat) = *naive.as_ref().map_err(clone_err)?;
            let profile = ErrorProfile::new(
                *g1.as_ref().map_err(clone_err)?,
                *g2.as_ref().map_err(clone_err)?,
                *delta1.as_ref().map_err(clone_err)?,
                *delta2.as_ref().map_err(clone_err)?,
            )?;
            general_corrected_bias(alpha_hat, beta_hat, &profile, *rates_r.as_ref().map_err(clone_err)?)
        })())
    });

    let direct_signed = Estimate::requested(set.direct, || {
        Estimate::from_result(direct_estimation(common))
    });

    let plug_in_signed = Estimate::from_result(plug_in(evaluation, common));

    let naive_signed = if set.naive {
        naive_signed
    } else {
        Estimate::not_requested()
    };

    Ok(BiasReport {
        true_bias_abs: true_bias_signed.abs(),
        true_bias_signed,
        naive_abs: naive_signed.abs(),
        naive_signed,
        gamma: est(&gamma),
        corrected_abs,
        corrected_clamped,
        general_abs: general_signed.abs(),
        general_signed,
        direct_abs: direct_signed.abs(),
        direct_signed,
        plug_in_abs: plug_in_signed.abs(),
        plug_in_signed,
        error_profile: ProfileEstimate {
            g1: est(&g1),
            g2: est(&g2),
            delta1: est(&delta1),
            delta2: est(&delta2),
        },
        rates: RatesEstimate {
            r: est(&rates_r.as_ref().map(|r| r.r).map_err(clone_err)),
            s: est(&rates_r.as_ref().map(|r| r.s).map_err(clone_err)),
        },
        ci_violation: est(&common_table.as_ref().map_err(clone_err).and_then(ci_violation)),
        n_evaluation: evaluation.len(),
        n_labeled: common.len(),
    })
}

/// True attribute on common records, predicted attribute on the rest.
fn plug_in(evaluation: &[PredictionRecord], common: &[PredictionRecord]) -> Result<f64> {
    let revealed: HashMap<String, bool> = common
        .iter()
        .map(|r| Ok((r.id.clone(), r.require_a()?)))
        .collect::<Result<_>>()?;
    let eval_ids: HashSet<&str> = evaluation.iter().map(|r| r.id.as_str()).collect();
    let pool: Vec<PredictionRecord> = evaluation
        .iter()
        .chain(common.iter().filter(|r| !eval_ids.contains(r.id.as_str())))
        .cloned()
        .collect();
    plug_in_bias(&pool, &revealed)
}

/// Errors are not `Clone`; shared failures are re-raised by code and message.
fn clone_err(e: &Error) -> Error {
    match e {
        Error::EmptyInput => Error::EmptyInput,
        Error::MissingField { id, field } => Error::MissingField {
            id: id.clone(),
            field,
        },
        Error::MissingAxis(a) => Error::MissingAxis(*a),
        Error::MissingGroup(g) => Error::MissingGroup(*g),
        Error::EmptyPredictedGroup { a_hat } => Error::EmptyPredictedGroup { a_hat: *a_hat },
        Error::MissingConditioningEvent { event } => Error::MissingConditioningEvent { event },
        Error::ZeroDenominator { which } => Error::ZeroDenominator { which },
        Error::UninvertibleDistortion { gamma } => Error::UninvertibleDistortion { gamma: *gamma },
        Error::DegenerateDeltas { denominator } => Error::DegenerateDeltas {
            denominator: *denominator,
        },
        other => Error::InvalidTable(other.to_string()),
    }
}

fn reason_err(e: &Estimate) -> Error {
    Error::InvalidTable(
        e.reason
            .as_ref()
            .map_or_else(String::new, |r| r.message.clone()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::theory::bayes_counterexample;

    #[test]
    fn counterexample_audit() {
        let recs = bayes_counterexample().records();
        let rep = audit(&recs, &recs, EstimatorSet::ALL).unwrap();
        assert_eq!(rep.true_bias_signed.value, Some(0.0));
        assert_eq!(rep.naive_signed.value, Some(1.0));
        assert_eq!(rep.error_profile.g1.value, Some(0.5));
        assert_eq!(rep.error_profile.g2.value, Some(0.5));
        assert_eq!(rep.error_profile.delta1.value, Some(1.0));
        assert_eq!(rep.error_profile.delta2.value, Some(0.0));
        assert_eq!(rep.general_signed.reason.as_ref().unwrap().code, "DegenerateDeltas");
        assert_eq!(rep.corrected_abs.reason.as_ref().unwrap().code, "UninvertibleDistortion");
    }

    #[test]
    fn perfect_proxy_agrees_everywhere() {
        let recs: Vec<_> = (0..40)
            .map(|i| {
                let a = i % 2 == 0;
                let y_hat = if a { i % 3 != 0 } else { i % 5 == 0 };
                PredictionRecord::new(format!("p{i}"), i % 4 != 3, y_hat)
                    .with_a(a)
                    .with_a_hat(a)
            })
            .collect();
        let rep = audit(&recs, &recs, EstimatorSet::ALL).unwrap();
        let t = rep.true_bias_signed.value.unwrap();
        assert_eq!(rep.gamma.value, Some(1.0));
        for v in [
            rep.naive_signed.value,
            rep.general_signed.value,
            rep.direct_signed.value,
            rep.plug_in_signed.value,
        ] {
            assert!((v.unwrap() - t).abs() < 1e-12);
        }
        assert!((rep.corrected_abs.value.unwrap() - t.abs()).abs() < 1e-12);
        assert!(rep.degenerate().is_empty());
    }

    #[test]
    fn unrequested_fields_are_marked() {
        let recs = bayes_counterexample().records();
        let set = EstimatorSet {
            naive: true,
            corrected: false,
            general: false,
            direct: false,
        };
        let rep = audit(&recs, &recs, set).unwrap();
        assert_eq!(rep.direct_signed.reason.as_ref().unwrap().code, NOT_REQUESTED);
        assert!(rep.any_requested_value(set));
    }
}
