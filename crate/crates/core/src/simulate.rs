//! Seeded synthetic populations with known ground truth.
//!
//! Within each `(y, a)` slice the pair (label prediction correct?, attribute
//! prediction correct?) is drawn from the product of its marginals plus a
//! signed perturbation scaled by `coupling`. The perturbation leaves both
//! marginals untouched, so `alpha`, `beta`, `g1`, `g2` are exact for any
//! coupling while conditional independence holds only at `coupling = 0`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    ci_violation, distortion_factor, naive_bias, true_bias, Rates,
};
use crate::record::PredictionRecord;
use crate::table::{Cell, JointTable};

/// Conditionals for the `y = 0` slice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NegativeSlice {
    /// `P(y_hat=1 | y=0, a=1)`
    pub fpr_a1: f64,
    /// `P(y_hat=1 | y=0, a=0)`
    pub fpr_a0: f64,
    /// `P(a_hat != a | a=0, y=0)`
    pub g1: f64,
    /// `P(a_hat != a | a=1, y=0)`
    pub g2: f64,
    /// `P(y=0, a=1)`
    pub r0: f64,
    /// `P(y=0, a=0)`
    pub s0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    /// `P(y_hat=1 | y=1, a=1)`
    pub alpha: f64,
    /// `P(y_hat=1 | y=1, a=0)`
    pub beta: f64,
    pub r: f64,
    pub s: f64,
    pub g1: f64,
    pub g2: f64,
    /// `None` mirrors the positive slice: false-positive rates `1 - alpha`,
    /// `1 - beta`, the same attribute error rates, and the remaining mass
    /// split in proportion `r : s`.
    pub negative: Option<NegativeSlice>,
    /// In `[-1, 1]`; positive values make the two classifiers err together.
    pub coupling: f64,
    /// Spread of the attribute score around its extreme (correct) or
    /// boundary (incorrect) anchor.
    pub score_noise: f64,
    pub seed: u64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            alpha: 0.7,
            beta: 0.5,
            r: 0.25,
            s: 0.25,
            g1: 0.2,
            g2: 0.3,
            negative: None,
            coupling: 0.0,
            score_noise: 0.15,
            seed: 0,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("r", self.r),
            ("s", self.s),
            ("g1", self.g1),
            ("g2", self.g2),
        ];
        for (name, v) in probs {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParams(format!("{name}={v} outside [0,1]")));
            }
        }
        if self.r + self.s > 1.0 + 1e-12 {
            return Err(Error::InvalidParams(format!(
                "r + s = {} exceeds one",
                self.r + self.s
            )));
        }
        if !(-1.0..=1.0).contains(&self.coupling) {
            return Err(Error::InvalidParams(format!(
                "coupling {} outside [-1,1]",
                self.coupling
            )));
        }
        if !(self.score_noise.is_finite() && self.score_noise >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "score_noise {} must be finite and nonnegative",
                self.score_noise
            )));
        }
        let neg = self.negative_slice();
        for (name, v) in [
            ("fpr_a1", neg.fpr_a1),
            ("fpr_a0", neg.fpr_a0),
            ("negative g1", neg.g1),
            ("negative g2", neg.g2),
            ("r0", neg.r0),
            ("s0", neg.s0),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParams(format!("{name}={v} outside [0,1]")));
            }
        }
        let total = self.r + self.s + neg.r0 + neg.s0;
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParams(format!(
                "slice masses sum to {total}, not one"
            )));
        }
        Ok(())
    }

    pub fn negative_slice(&self) -> NegativeSlice {
        self.negative.unwrap_or_else(|| {
            let rest = (1.0 - self.r - self.s).max(0.0);
            let pos = self.r + self.s;
            let (r0, s0) = if pos > 0.0 {
                (rest * self.r / pos, rest * self.s / pos)
            } else {
                (rest / 2.0, rest / 2.0)
            };
            NegativeSlice {
                fpr_a1: 1.0 - self.alpha,
                fpr_a0: 1.0 - self.beta,
                g1: self.g1,
                g2: self.g2,
                r0,
                s0,
            }
        })
    }

    /// `(mass, P(y_hat=1), P(a_hat=1))` of the `(y, a)` slice.
    fn slice(&self, y: bool, a: bool) -> (f64, f64, f64) {
        let neg = self.negative_slice();
        match (y, a) {
            (true, true) => (self.r, self.alpha, 1.0 - self.g2),
            (true, false) => (self.s, self.beta, self.g1),
            (false, true) => (neg.r0, neg.fpr_a1, 1.0 - neg.g2),
            (false, false) => (neg.s0, neg.fpr_a0, neg.g1),
        }
    }

    /// Probability of `cell`.
    fn cell_probability(&self, cell: Cell) -> f64 {
        let (mass, p_yhat1, p_ahat1) = self.slice(cell.y, cell.a);
        let p_label_ok = if cell.y { p_yhat1 } else { 1.0 - p_yhat1 };
        let p_attr_ok = if cell.a { p_ahat1 } else { 1.0 - p_ahat1 };
        let label_ok = cell.y_hat == cell.y;
        let attr_ok = cell.a_hat == cell.a;
        let marginal = |ok: bool, p: f64| if ok { p } else { 1.0 - p };
        let product = marginal(label_ok, p_label_ok) * marginal(attr_ok, p_attr_ok);
        let room = if self.coupling >= 0.0 {
            (p_label_ok * (1.0 - p_attr_ok)).min((1.0 - p_label_ok) * p_attr_ok)
        } else {
            (p_label_ok * p_attr_ok).min((1.0 - p_label_ok) * (1.0 - p_attr_ok))
        };
        let sign = if label_ok == attr_ok { 1.0 } else { -1.0 };
        (mass * (product + sign * self.coupling * room)).max(0.0)
    }
}

/// Infinite-sample table of the population described by `params`.
pub fn exact_table(params: &SimParams) -> Result<JointTable> {
    params.validate()?;
    JointTable::from_fn(|c| params.cell_probability(c))
}

/// Ground-truth quantities of the exact table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExactSummary {
    pub true_bias: f64,
    pub naive_bias: f64,
    pub gamma: f64,
    pub ci_violation: f64,
}

pub fn exact_summary(params: &SimParams) -> Result<ExactSummary> {
    let t = exact_table(params)?;
    Ok(ExactSummary {
        true_bias: true_bias(&t)?,
        naive_bias: naive_bias(&t)?,
        gamma: distortion_factor(params.g1, params.g2, Rates::new(params.r, params.s)?)?,
        ci_violation: ci_violation(&t)?,
    })
}

fn id_width(n: usize) -> usize {
    n.saturating_sub(1).to_string().len().max(6)
}

/// Draws `n` i.i.d. records from the exact table, deterministically in
/// `params.seed`. Ids are zero padded so lexical and numeric order agree.
pub fn sample_records(params: &SimParams, n: usize) -> Result<Vec<PredictionRecord>> {
    if n == 0 {
        return Err(Error::InvalidParams("sample size must be at least one".into()));
    }
    let table = exact_table(params)?;
    let mut cumulative = [0.0; 16];
    let mut acc = 0.0;
    for (i, &m) in table.cells().iter().enumerate() {
        acc += m;
        cumulative[i] = acc;
    }
    let total = acc;
    let width = id_width(n);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let u: f64 = rng.random::<f64>() * total;
        let idx = cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or_else(|| cumulative.iter().rposition(|&c| c > 0.0).unwrap_or(15));
        let cell = Cell::from_index(idx);
        let z: f64 = rng.sample::<f64, _>(StandardNormal) * params.score_noise;
        let spread = z.abs().min(0.5);
        let toward = if cell.a_hat { 1.0 } else { -1.0 };
        let score = if cell.a_hat == cell.a {
            0.5 + toward * (0.5 - spread)
        } else {
            0.5 + toward * spread
        };
        out.push(
            PredictionRecord::new(format!("r{i:0width$}"), cell.y, cell.y_hat)
                .with_a(cell.a)
                .with_a_hat(cell.a_hat)
                .with_score(score.clamp(0.0, 1.0)),
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::forward_noisy_estimates;

    #[test]
    fn defaults_are_valid() {
        SimParams::default().validate().unwrap();
        let t = exact_table(&SimParams::default()).unwrap();
        assert!((t.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn independent_table_matches_forward_map() {
        let p = SimParams::default();
        let t = exact_table(&p).unwrap();
        assert!(ci_violation(&t).unwrap() < 1e-12);
        let (ah, bh) =
            forward_noisy_estimates(p.alpha, p.beta, Rates::new(p.r, p.s).unwrap(), p.g1, p.g2)
                .unwrap();
        assert!((naive_bias(&t).unwrap() - (ah - bh)).abs() < 1e-12);
        assert!((true_bias(&t).unwrap() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn perfect_proxy_naive_equals_true() {
        let p = SimParams {
            g1: 0.0,
            g2: 0.0,
            ..SimParams::default()
        };
        let t = exact_table(&p).unwrap();
        assert!((naive_bias(&t).unwrap() - true_bias(&t).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn coupling_breaks_independence_only() {
        let p = SimParams {
            coupling: 1.0,
            ..SimParams::default()
        };
        let t = exact_table(&p).unwrap();
        assert!(ci_violation(&t).unwrap() > 0.01);
        assert!((true_bias(&t).unwrap() - 0.2).abs() < 1e-12);
        let (g1, g2) = crate::estimators::conditional_errors(&t).unwrap();
        assert!((g1 - 0.2).abs() < 1e-12 && (g2 - 0.3).abs() < 1e-12);
        let neg = SimParams {
            coupling: -1.0,
            ..SimParams::default()
        };
        assert!(ci_violation(&exact_table(&neg).unwrap()).unwrap() > 0.01);
    }

    #[test]
    fn invalid_params_rejected() {
        let bad = [
            SimParams {
                alpha: 1.2,
                ..SimParams::default()
            },
            SimParams {
                r: 0.6,
                s: 0.6,
                ..SimParams::default()
            },
            SimParams {
                coupling: 1.5,
                ..SimParams::default()
            },
            SimParams {
                score_noise: -0.1,
                ..SimParams::default()
            },
        ];
        for p in bad {
            assert!(matches!(exact_table(&p), Err(Error::InvalidParams(_))), "{p:?}");
        }
        assert!(sample_records(&SimParams::default(), 0).is_err());
    }

    #[test]
    fn single_record_in_range() {
        let recs = sample_records(&SimParams::default(), 1).unwrap();
        assert_eq!(recs.len(), 1);
        let r = &recs[0];
        assert_eq!(r.id, "r000000");
        assert!(r.a.is_some() && r.a_hat.is_some());
        assert!((0.0..=1.0).contains(&r.score.unwrap()));
    }

    #[test]
    fn same_seed_same_records() {
        let p = SimParams {
            seed: 42,
            ..SimParams::default()
        };
        assert_eq!(sample_records(&p, 500).unwrap(), sample_records(&p, 500).unwrap());
        let q = SimParams { seed: 43, ..p };
        assert_ne!(sample_records(&p, 500).unwrap(), sample_records(&q, 500).unwrap());
    }

    #[test]
    fn scores_agree_with_predicted_attribute_side() {
        let recs = sample_records(&SimParams::default(), 2000).unwrap();
        for r in &recs {
            let s = r.score.unwrap();
            if r.a_hat.unwrap() {
                assert!(s >= 0.5);
            } else {
                assert!(s <= 0.5);
            }
        }
    }
}
