//! Label acquisition strategies for estimating bias from a pool that carries
//! labels, label predictions and attribute predictions, but whose true
//! attributes must be bought from an oracle.
//!
//! [`active_sampling`] follows the uncertainty-first loop: after an initial
//! uniform batch of positives fixes the base-rate ratio, each round draws `b`
//! unlabeled positives, reveals the `w` whose attribute score is closest to
//! 0.5, and re-estimates `(g1, g2, delta1, delta2)` until all four move by at
//! most `epsilon`. [`uniform_sampling`] and [`positive_sampling`] are the
//! non-adaptive baselines.
//!
//! Every snapshot records the general (assumption-free) estimate, the
//! plug-in estimate over the pool and the direct estimate on the labeled set,
//! whichever strategy produced it.

mod oracle;

use std::collections::HashMap;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub use oracle::{AttributeOracle, FileExchangeOracle, InMemoryOracle, OracleBudgetState};

use crate::error::{Error, Group, Result};
use crate::estimators::{general_corrected_bias, naive_rates, ErrorProfile, Rates};
use crate::record::PredictionRecord;
use crate::table::{build_joint_table, AttributeSource};

pub const DEFAULT_MAX_ITERS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Active,
    Uniform,
    Positive,
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// Inversion from naive rates, error profile and base-rate ratio.
    General,
    /// True attribute where revealed, predicted attribute elsewhere.
    PlugIn,
    /// Labeled records only.
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    BudgetExhausted,
    PoolExhausted,
    MaxIters,
    TargetReached,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub iteration: usize,
    pub labels_used: usize,
    pub g1: Option<f64>,
    pub g2: Option<f64>,
    pub delta1: Option<f64>,
    pub delta2: Option<f64>,
    pub r_hat: Option<f64>,
    pub s_hat: Option<f64>,
    pub estimator: EstimatorKind,
    /// Signed value of `estimator`.
    pub estimate: Option<f64>,
    pub general: Option<f64>,
    pub plug_in: Option<f64>,
    pub direct: Option<f64>,
}

impl Snapshot {
    pub fn value(&self, kind: EstimatorKind) -> Option<f64> {
        match kind {
            EstimatorKind::General => self.general,
            EstimatorKind::PlugIn => self.plug_in,
            EstimatorKind::Direct => self.direct,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplingTrace {
    pub strategy: Strategy,
    pub snapshots: Vec<Snapshot>,
    pub termination: Termination,
}

impl SamplingTrace {
    /// Labels used at the first snapshot whose `kind` estimate lies strictly
    /// within `tolerance` of `true_bias`.
    pub fn labels_to_reach(
        &self,
        true_bias: f64,
        tolerance: f64,
        kind: EstimatorKind,
    ) -> Option<usize> {
        self.snapshots
            .iter()
            .find(|s| s.value(kind).is_some_and(|v| (v - true_bias).abs() < tolerance))
            .map(|s| s.labels_used)
    }

    /// Labels used from which every later `kind` estimate stays strictly
    /// within `tolerance` of `true_bias`.
    pub fn labels_to_settle(
        &self,
        true_bias: f64,
        tolerance: f64,
        kind: EstimatorKind,
    ) -> Option<usize> {
        let inside = |s: &Snapshot| s.value(kind).is_some_and(|v| (v - true_bias).abs() < tolerance);
        let tail = self.snapshots.iter().rev().take_while(|s| inside(s)).count();
        (tail > 0).then(|| self.snapshots[self.snapshots.len() - tail].labels_used)
    }

    pub fn labels_used(&self) -> usize {
        self.snapshots.last().map_or(0, |s| s.labels_used)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateFailure {
    pub code: &'static str,
    pub message: String,
}

impl From<&Error> for EstimateFailure {
    fn from(e: &Error) -> Self {
        Self {
            code: e.code(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SamplingOutcome {
    /// Signed final estimate from the strategy's headline estimator.
    pub estimate: Option<f64>,
    pub estimate_error: Option<EstimateFailure>,
    pub trace: SamplingTrace,
    pub oracle: OracleBudgetState,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ActiveConfig {
    /// Candidates drawn per round (and size of the initial batch).
    pub b: usize,
    /// Labels revealed per round.
    pub w: usize,
    pub epsilon: f64,
    pub max_iters: usize,
    pub budget: Option<usize>,
    /// Pseudo-count added to each labeled-positive cell before estimating
    /// the error profile.
    pub smoothing: f64,
    pub seed: u64,
}

impl Default for ActiveConfig {
    fn default() -> Self {
        Self {
            b: 100,
            w: 100,
            epsilon: 0.01,
            max_iters: DEFAULT_MAX_ITERS,
            budget: None,
            smoothing: 0.0,
            seed: 0,
        }
    }
}

/// Early stop for the baselines once an estimate is close to a known truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Target {
    pub true_bias: f64,
    pub tolerance: f64,
    pub estimator: EstimatorKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BaselineConfig {
    pub batch: usize,
    pub max_iters: usize,
    pub budget: Option<usize>,
    pub smoothing: f64,
    pub seed: u64,
    pub target: Option<Target>,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            batch: 100,
            max_iters: DEFAULT_MAX_ITERS,
            budget: None,
            smoothing: 0.0,
            seed: 0,
            target: None,
        }
    }
}

/// Error profile estimated from labeled positives; a quantity is `None`
/// while its conditioning event is empty.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct PartialProfile {
    g1: Option<f64>,
    g2: Option<f64>,
    delta1: Option<f64>,
    delta2: Option<f64>,
}

/// Pool together with the attributes disclosed so far.
struct LabeledPool<'a> {
    pool: &'a [PredictionRecord],
    labels: Vec<Option<bool>>,
    positives: Vec<usize>,
    naive: (f64, f64),
}

impl<'a> LabeledPool<'a> {
    fn new(pool: &'a [PredictionRecord]) -> Result<Self> {
        if pool.is_empty() {
            return Err(Error::EmptyInput);
        }
        let table = build_joint_table(pool, AttributeSource::PredictedA)?;
        let naive = naive_rates(&table)?;
        let positives = pool
            .iter()
            .enumerate()
            .filter(|(_, r)| r.y)
            .map(|(i, _)| i)
            .collect();
        Ok(Self {
            pool,
            labels: vec![None; pool.len()],
            positives,
            naive,
        })
    }

    fn unlabeled(&self, frame: &[usize]) -> Vec<usize> {
        frame
            .iter()
            .copied()
            .filter(|&i| self.labels[i].is_none())
            .collect()
    }

    fn reveal(
        &mut self,
        idx: &[usize],
        oracle: &mut dyn AttributeOracle,
        state: &mut OracleBudgetState,
    ) -> Result<()> {
        let ids: Vec<&str> = idx.iter().map(|&i| self.pool[i].id.as_str()).collect();
        let answers = oracle.reveal(&ids)?;
        if answers.len() != ids.len() {
            return Err(Error::Oracle(format!(
                "asked for {} attributes, got {}",
                ids.len(),
                answers.len()
            )));
        }
        state.record(&ids);
        for (&i, a) in idx.iter().zip(answers) {
            self.labels[i] = Some(a);
        }
        Ok(())
    }

    /// Counts over labeled positives indexed by `a << 2 | y_hat << 1 | a_hat`.
    fn positive_counts(&self, smoothing: f64) -> [f64; 8] {
        let mut counts = [smoothing; 8];
        for &i in &self.positives {
            if let Some(a) = self.labels[i] {
                let r = &self.pool[i];
                let a_hat = r.a_hat.expect("checked at construction");
                counts[(a as usize) << 2 | (r.y_hat as usize) << 1 | a_hat as usize] += 1.0;
            }
        }
        counts
    }

    fn profile(&self, smoothing: f64) -> PartialProfile {
        let c = self.positive_counts(smoothing);
        let at = |a: bool, y_hat: bool, a_hat: bool| c[(a as usize) << 2 | (y_hat as usize) << 1 | a_hat as usize];
        let ratio = |num: f64, den: f64| (den > 0.0).then(|| num / den);
        let a0 = at(false, false, false) + at(false, false, true) + at(false, true, false) + at(false, true, true);
        let a1 = at(true, false, false) + at(true, false, true) + at(true, true, false) + at(true, true, true);
        PartialProfile {
            g1: ratio(at(false, false, true) + at(false, true, true), a0),
            g2: ratio(at(true, false, false) + at(true, true, false), a1),
            delta1: ratio(at(false, true, true), at(false, true, false) + at(false, true, true)),
            delta2: ratio(at(true, true, false), at(true, true, false) + at(true, true, true)),
        }
    }

    /// `(r, s)` from the labeled positives, scaled by the pool's positive rate.
    fn rates_hat(&self) -> Option<Rates> {
        let (mut n1, mut n0) = (0usize, 0usize);
        for &i in &self.positives {
            match self.labels[i] {
                Some(true) => n1 += 1,
                Some(false) => n0 += 1,
                None => {}
            }
        }
        let labeled = n1 + n0;
        if labeled == 0 {
            return None;
        }
        let p_pos = self.positives.len() as f64 / self.pool.len() as f64;
        Some(Rates {
            r: p_pos * n1 as f64 / labeled as f64,
            s: p_pos * n0 as f64 / labeled as f64,
        })
    }

    fn general(&self, profile: [f64; 4], rates: Option<Rates>) -> Result<f64> {
        let rates = rates.ok_or(Error::MissingGroup(Group::PositiveA1))?;
        let p = ErrorProfile::new(profile[0], profile[1], profile[2], profile[3])?;
        general_corrected_bias(self.naive.0, self.naive.1, &p, rates)
    }

    fn plug_in(&self) -> Result<f64> {
        plug_in_from_labels(self.pool, &self.labels)
    }

    fn direct(&self) -> Result<f64> {
        let (mut pos1, mut tot1, mut pos0, mut tot0) = (0usize, 0usize, 0usize, 0usize);
        for &i in &self.positives {
            let y_hat = self.pool[i].y_hat as usize;
            match self.labels[i] {
                Some(true) => {
                    tot1 += 1;
                    pos1 += y_hat;
                }
                Some(false) => {
                    tot0 += 1;
                    pos0 += y_hat;
                }
                None => {}
            }
        }
        if tot1 == 0 {
            return Err(Error::MissingGroup(Group::PositiveA1));
        }
        if tot0 == 0 {
            return Err(Error::MissingGroup(Group::PositiveA0));
        }
        Ok(pos1 as f64 / tot1 as f64 - pos0 as f64 / tot0 as f64)
    }

    fn labels_used(&self) -> usize {
        self.labels.iter().filter(|l| l.is_some()).count()
    }
}

fn plug_in_from_labels(pool: &[PredictionRecord], labels: &[Option<bool>]) -> Result<f64> {
    let (mut pos1, mut tot1, mut pos0, mut tot0) = (0usize, 0usize, 0usize, 0usize);
    for (r, label) in pool.iter().zip(labels) {
        if !r.y {
            continue;
        }
        let group = match label {
            Some(a) => *a,
            None => r.require_a_hat()?,
        };
        if group {
            tot1 += 1;
            pos1 += r.y_hat as usize;
        } else {
            tot0 += 1;
            pos0 += r.y_hat as usize;
        }
    }
    if tot1 == 0 {
        return Err(Error::EmptyPredictedGroup { a_hat: true });
    }
    if tot0 == 0 {
        return Err(Error::EmptyPredictedGroup { a_hat: false });
    }
    Ok(pos1 as f64 / tot1 as f64 - pos0 as f64 / tot0 as f64)
}

/// Signed bias using the true attribute for revealed ids and the predicted
/// attribute for the rest.
pub fn plug_in_bias(pool: &[PredictionRecord], revealed: &HashMap<String, bool>) -> Result<f64> {
    if pool.is_empty() {
        return Err(Error::EmptyInput);
    }
    let labels: Vec<Option<bool>> = pool.iter().map(|r| revealed.get(&r.id).copied()).collect();
    plug_in_from_labels(pool, &labels)
}

/// Signed `alpha - beta` from records whose true attribute is known.
pub fn direct_estimation(labeled: &[PredictionRecord]) -> Result<f64> {
    let table = build_joint_table(labeled, AttributeSource::TrueA)?;
    crate::estimators::true_bias(&table)
}

fn check_pool(pool: &[PredictionRecord], need_scores: bool) -> Result<()> {
    for r in pool {
        r.require_a_hat()?;
        if need_scores && r.y && r.score.is_none() {
            return Err(Error::MissingField {
                id: r.id.clone(),
                field: "score",
            });
        }
        r.validate()?;
    }
    Ok(())
}

fn draw(rng: &mut ChaCha8Rng, unlabeled: &[usize], k: usize) -> Vec<usize> {
    index::sample(rng, unlabeled.len(), k)
        .into_iter()
        .map(|j| unlabeled[j])
        .collect()
}

fn snapshot(
    lp: &LabeledPool<'_>,
    iteration: usize,
    profile: PartialProfile,
    general_inputs: Option<([f64; 4], Option<Rates>)>,
    rates: Option<Rates>,
    estimator: EstimatorKind,
) -> Snapshot {
    let general = general_inputs.and_then(|(p, r)| lp.general(p, r).ok());
    let plug_in = lp.plug_in().ok();
    let direct = lp.direct().ok();
    let mut s = Snapshot {
        iteration,
        labels_used: lp.labels_used(),
        g1: profile.g1,
        g2: profile.g2,
        delta1: profile.delta1,
        delta2: profile.delta2,
        r_hat: rates.map(|r| r.r),
        s_hat: rates.map(|r| r.s),
        estimator,
        estimate: None,
        general,
        plug_in,
        direct,
    };
    s.estimate = s.value(estimator);
    s
}

/// Uncertainty-first attribute acquisition on the positive class.
pub fn active_sampling(
    pool: &[PredictionRecord],
    config: &ActiveConfig,
    oracle: &mut dyn AttributeOracle,
) -> Result<SamplingOutcome> {
    let ActiveConfig {
        b,
        w,
        epsilon,
        max_iters,
        budget,
        smoothing,
        seed,
    } = *config;
    if w == 0 || b < w {
        return Err(Error::InvalidParams(format!("need b >= w >= 1 (b={b}, w={w})")));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParams(format!("epsilon {epsilon} must be positive")));
    }
    check_pool(pool, true)?;
    let mut lp = LabeledPool::new(pool)?;
    let mut state = OracleBudgetState::new(budget);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positives = lp.positives.clone();

    // Initial uniform batch fixes the base-rate estimate for the whole run.
    if positives.len() < b {
        return Err(Error::PoolExhausted {
            needed: b,
            available: positives.len(),
        });
    }
    if state.remaining() < b {
        return Err(Error::InvalidParams(format!(
            "budget {} cannot cover the initial batch of {b}",
            state.remaining()
        )));
    }
    let initial = draw(&mut rng, &positives, b);
    lp.reveal(&initial, oracle, &mut state)?;
    let rates = lp.rates_hat();

    let mut current = [0.0f64; 4];
    let zero = PartialProfile {
        g1: Some(0.0),
        g2: Some(0.0),
        delta1: Some(0.0),
        delta2: Some(0.0),
    };
    let mut snapshots = vec![snapshot(
        &lp,
        0,
        zero,
        Some((current, rates)),
        rates,
        EstimatorKind::General,
    )];

    let termination = loop {
        let t = snapshots.len();
        if t > max_iters {
            break Termination::MaxIters;
        }
        let unlabeled = lp.unlabeled(&positives);
        if unlabeled.len() < b {
            break Termination::PoolExhausted;
        }
        if state.remaining() < w {
            break Termination::BudgetExhausted;
        }
        let mut batch = draw(&mut rng, &unlabeled, b);
        batch.sort_by(|&i, &j| {
            let (ri, rj) = (&pool[i], &pool[j]);
            let ki = ri.uncertainty_key().expect("checked");
            let kj = rj.uncertainty_key().expect("checked");
            ki.partial_cmp(&kj).expect("finite").then_with(|| ri.id.cmp(&rj.id))
        });
        batch.truncate(w);
        lp.reveal(&batch, oracle, &mut state)?;

        let fresh = lp.profile(smoothing);
        let mut converged = true;
        for (slot, value) in current
            .iter_mut()
            .zip([fresh.g1, fresh.g2, fresh.delta1, fresh.delta2])
        {
            match value {
                Some(v) => {
                    converged &= (v - *slot).abs() <= epsilon;
                    *slot = v;
                }
                // Undefined quantities keep their value and block convergence.
                None => converged = false,
            }
        }
        let shown = PartialProfile {
            g1: fresh.g1.or(Some(current[0])),
            g2: fresh.g2.or(Some(current[1])),
            delta1: fresh.delta1.or(Some(current[2])),
            delta2: fresh.delta2.or(Some(current[3])),
        };
        snapshots.push(snapshot(
            &lp,
            t,
            shown,
            Some((current, rates)),
            rates,
            EstimatorKind::General,
        ));
        if converged {
            break Termination::Converged;
        }
    };

    let (estimate, estimate_error) = match lp.general(current, rates) {
        Ok(v) => (Some(v), None),
        Err(e) => (None, Some(EstimateFailure::from(&e))),
    };
    Ok(SamplingOutcome {
        estimate,
        estimate_error,
        trace: SamplingTrace {
            strategy: Strategy::Active,
            snapshots,
            termination,
        },
        oracle: state,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Frame {
    All,
    Positives,
}

fn baseline(
    pool: &[PredictionRecord],
    config: &BaselineConfig,
    oracle: &mut dyn AttributeOracle,
    frame: Frame,
    strategy: Strategy,
    headline: EstimatorKind,
) -> Result<SamplingOutcome> {
    if config.batch == 0 {
        return Err(Error::InvalidParams("batch must be at least one".into()));
    }
    check_pool(pool, false)?;
    let mut lp = LabeledPool::new(pool)?;
    let mut state = OracleBudgetState::new(config.budget);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let frame_idx: Vec<usize> = match frame {
        Frame::All => (0..pool.len()).collect(),
        Frame::Positives => lp.positives.clone(),
    };

    let mut snapshots: Vec<Snapshot> = Vec::new();
    let termination = loop {
        if snapshots.len() >= config.max_iters {
            break Termination::MaxIters;
        }
        let unlabeled = lp.unlabeled(&frame_idx);
        if unlabeled.is_empty() {
            break Termination::PoolExhausted;
        }
        let room = state.remaining();
        if room == 0 {
            break Termination::BudgetExhausted;
        }
        let k = config.batch.min(unlabeled.len()).min(room);
        let batch = draw(&mut rng, &unlabeled, k);
        lp.reveal(&batch, oracle, &mut state)?;

        let profile = lp.profile(config.smoothing);
        let rates = lp.rates_hat();
        let complete = match (profile.g1, profile.g2, profile.delta1, profile.delta2) {
            (Some(a), Some(b), Some(c), Some(d)) => Some([a, b, c, d]),
            _ => None,
        };
        let snap = snapshot(
            &lp,
            snapshots.len() + 1,
            profile,
            complete.map(|p| (p, rates)),
            rates,
            headline,
        );
        let hit = config.target.is_some_and(|t| {
            snap.value(t.estimator)
                .is_some_and(|v| (v - t.true_bias).abs() < t.tolerance)
        });
        snapshots.push(snap);
        if hit {
            break Termination::TargetReached;
        }
    };

    let last = snapshots.last();
    let estimate = last.and_then(|s| s.estimate);
    let estimate_error = if estimate.is_some() {
        None
    } else {
        let err = match headline {
            EstimatorKind::Direct => lp.direct().err(),
            EstimatorKind::PlugIn => lp.plug_in().err(),
            EstimatorKind::General => {
                let p = lp.profile(config.smoothing);
                match (p.g1, p.g2, p.delta1, p.delta2) {
                    (Some(a), Some(b), Some(c), Some(d)) => lp.general([a, b, c, d], lp.rates_hat()).err(),
                    _ => Some(Error::MissingConditioningEvent {
                        event: "labeled positives in every (a, y_hat) cell",
                    }),
                }
            }
        };
        err.as_ref().map(EstimateFailure::from)
    };
    Ok(SamplingOutcome {
        estimate,
        estimate_error,
        trace: SamplingTrace {
            strategy,
            snapshots,
            termination,
        },
        oracle: state,
    })
}

/// Reveals uniform batches drawn from the whole pool.
pub fn uniform_sampling(
    pool: &[PredictionRecord],
    config: &BaselineConfig,
    oracle: &mut dyn AttributeOracle,
) -> Result<SamplingOutcome> {
    baseline(pool, config, oracle, Frame::All, Strategy::Uniform, EstimatorKind::General)
}

/// Reveals uniform batches drawn from the positive class only.
pub fn positive_sampling(
    pool: &[PredictionRecord],
    config: &BaselineConfig,
    oracle: &mut dyn AttributeOracle,
) -> Result<SamplingOutcome> {
    baseline(pool, config, oracle, Frame::Positives, Strategy::Positive, EstimatorKind::General)
}

/// Positive-class sampling reported through the direct estimate on the
/// labeled set.
pub fn direct_sampling(
    pool: &[PredictionRecord],
    config: &BaselineConfig,
    oracle: &mut dyn AttributeOracle,
) -> Result<SamplingOutcome> {
    baseline(pool, config, oracle, Frame::Positives, Strategy::Direct, EstimatorKind::Direct)
}
