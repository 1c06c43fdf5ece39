//! Distortion-factor landscapes and the constructions showing how proxy
//! attributes can mislead a bias audit.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{distortion_factor, Rates};
use crate::record::PredictionRecord;
use crate::table::{build_joint_table, AttributeSource, Cell, JointTable};

pub const DEFAULT_SCAN_STEP: f64 = 1e-3;

/// Ties within this of the grid maximum belong to the argmax set.
const ARGMAX_TOLERANCE: f64 = 1e-12;

/// Attribute-classifier error mass on the positive class,
/// `U = P(h(x) != a, y = 1)`, at equal base rates `r = s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorBudget {
    pub u: f64,
    pub r: f64,
}

impl ErrorBudget {
    pub fn new(u: f64, r: f64) -> Result<Self> {
        if !(u.is_finite() && r.is_finite()) || r <= 0.0 || r > 0.5 || u < 0.0 {
            return Err(Error::InvalidParams(format!(
                "error budget needs U >= 0 and 0 < r <= 1/2 (got U={u}, r={r})"
            )));
        }
        Ok(Self { u, r })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanConfig {
    pub r: f64,
    pub s: f64,
    pub u: f64,
    pub step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanPoint {
    pub g1: f64,
    pub g2: f64,
    pub gamma: f64,
    /// `gamma` is 0/0 at this corner; the value is its limit along the
    /// constraint line.
    pub singular: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaScan {
    pub config: ScanConfig,
    /// Feasible `g1` interval `[lo, hi]`.
    pub interval: (f64, f64),
    pub points: Vec<ScanPoint>,
    /// Indices into `points` attaining the grid maximum.
    pub argmax: Vec<usize>,
}

impl GammaScan {
    pub fn max_gamma(&self) -> f64 {
        self.argmax
            .first()
            .map(|&i| self.points[i].gamma)
            .unwrap_or(f64::NAN)
    }

    pub fn argmax_points(&self) -> impl Iterator<Item = &ScanPoint> {
        self.argmax.iter().map(|&i| &self.points[i])
    }

    /// Writes the curve as CSV with columns `g1,g2,gamma`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["g1", "g2", "gamma"])?;
        for p in &self.points {
            w.write_record([p.g1.to_string(), p.g2.to_string(), p.gamma.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Feasible `g1` range on the line `s g1 + r g2 = U` inside the unit square.
pub fn feasible_interval(r: f64, s: f64, u: f64) -> Result<(f64, f64)> {
    if !(r > 0.0 && s > 0.0 && r + s <= 1.0 + 1e-12) {
        return Err(Error::InvalidParams(format!(
            "base rates must satisfy r, s > 0 and r + s <= 1 (got r={r}, s={s})"
        )));
    }
    if !(u.is_finite() && u >= 0.0) {
        return Err(Error::InfeasibleBudget(format!("U={u} must be nonnegative")));
    }
    let lo = ((u - r) / s).max(0.0);
    let hi = (u / s).min(1.0);
    if lo > hi + 1e-12 {
        return Err(Error::InfeasibleBudget(format!(
            "U={u} exceeds the maximum error mass r+s={}",
            r + s
        )));
    }
    Ok((lo, hi.max(lo)))
}

/// `gamma` at a point on the constraint line, with the 0/0 corners
/// `(1, 0)` and `(0, 1)` replaced by the line limit `|r - s| / (2 (r + s))`.
fn gamma_on_line(g1: f64, g2: f64, r: f64, s: f64) -> (f64, bool) {
    match distortion_factor(g1, g2, Rates { r, s }) {
        Ok(gamma) => (gamma, false),
        Err(_) => ((r - s).abs() / (2.0 * (r + s)), true),
    }
}

/// Evaluates `gamma` along `s g1 + r g2 = U` on a grid of `g1` with the
/// given step. Both interval endpoints are always on the grid.
pub fn gamma_scan(r: f64, s: f64, u: f64, step: f64) -> Result<GammaScan> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidParams(format!("step {step} must be positive")));
    }
    let (lo, hi) = feasible_interval(r, s, u)?;
    let n = ((hi - lo) / step).floor() as usize;
    let mut grid: Vec<f64> = (0..=n).map(|k| lo + k as f64 * step).collect();
    match grid.last_mut() {
        Some(last) if hi - *last <= step * 1e-9 => *last = hi,
        _ => grid.push(hi),
    }
    let points: Vec<ScanPoint> = grid
        .into_iter()
        .map(|g1| {
            let g2 = ((u - s * g1) / r).clamp(0.0, 1.0);
            let (gamma, singular) = gamma_on_line(g1, g2, r, s);
            ScanPoint {
                g1,
                g2,
                gamma,
                singular,
            }
        })
        .collect();
    let best = points.iter().map(|p| p.gamma).fold(f64::NEG_INFINITY, f64::max);
    let argmax = points
        .iter()
        .enumerate()
        .filter(|(_, p)| p.gamma >= best - ARGMAX_TOLERANCE)
        .map(|(i, _)| i)
        .collect();
    Ok(GammaScan {
        config: ScanConfig { r, s, u, step },
        interval: (lo, hi),
        points,
        argmax,
    })
}

pub fn gamma_scan_budget(budget: ErrorBudget, step: f64) -> Result<GammaScan> {
    gamma_scan(budget.r, budget.r, budget.u, step)
}

/// Global maximizers of `gamma` at equal base rates under error budget `U`.
///
/// Returns `(0, U/r)` and `(U/r, 0)` when `U <= r`, and `(U/r - 1, 1)` and
/// `(1, U/r - 1)` when `U >= r`. At `U = r` both branches give the same two
/// points; at `U = 0` the set collapses to the perfect classifier.
pub fn optimal_error_split(budget: ErrorBudget) -> Result<Vec<(f64, f64)>> {
    let ErrorBudget { u, r } = budget;
    let k = u / r;
    if k > 2.0 + 1e-12 {
        return Err(Error::InfeasibleBudget(format!("U/r = {k} exceeds 2")));
    }
    let k = k.min(2.0);
    let mut out = Vec::with_capacity(4);
    if k <= 1.0 {
        out.extend([(0.0, k), (k, 0.0)]);
    }
    if k >= 1.0 {
        out.extend([(k - 1.0, 1.0), (1.0, k - 1.0)]);
    }
    out.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    out.dedup();
    Ok(out)
}

/// A row of the four-variable distribution on which the Bayes-optimal
/// attribute predictor reports maximal bias for an unbiased classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CounterexampleRow {
    pub x1: bool,
    pub x2: bool,
    pub a: bool,
    pub y: bool,
    /// Bayes-optimal attribute prediction, ties resolved as in the
    /// published table.
    pub a_hat: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Counterexample {
    /// Six equally likely rows.
    pub rows: Vec<CounterexampleRow>,
    /// Count table (mass one per row) with `y_hat = x2`.
    pub table: JointTable,
}

impl Counterexample {
    pub fn records(&self) -> Vec<PredictionRecord> {
        rows_to_records(&self.rows)
    }
}

fn rows_to_records(rows: &[CounterexampleRow]) -> Vec<PredictionRecord> {
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            PredictionRecord::new(format!("row{}", i + 1), row.y, row.x2)
                .with_a(row.a)
                .with_a_hat(row.a_hat)
        })
        .collect()
}

pub fn bayes_counterexample() -> Counterexample {
    // (x1, x2, a, y, a_hat)
    const ROWS: [(bool, bool, bool, bool, bool); 6] = [
        (true, false, true, true, false),
        (true, true, true, true, true),
        (true, true, false, true, true),
        (true, false, false, true, false),
        (true, true, true, false, true),
        (true, false, false, false, false),
    ];
    let rows: Vec<_> = ROWS
        .iter()
        .map(|&(x1, x2, a, y, a_hat)| CounterexampleRow {
            x1,
            x2,
            a,
            y,
            a_hat,
        })
        .collect();
    let table = build_joint_table(&rows_to_records(&rows), AttributeSource::Both)
        .expect("counterexample rows are complete");
    Counterexample { rows, table }
}

/// A discrete distribution over `(x, y)` with `x` an opaque point id.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct XyDistribution {
    mass: BTreeMap<(usize, bool), f64>,
}

impl XyDistribution {
    /// Duplicate `(x, y)` entries are summed.
    pub fn new(points: impl IntoIterator<Item = (usize, bool, f64)>) -> Result<Self> {
        let mut mass = BTreeMap::new();
        for (x, y, m) in points {
            if !(m.is_finite() && m >= 0.0) {
                return Err(Error::InvalidParams(format!("mass {m} at x={x}")));
            }
            *mass.entry((x, y)).or_insert(0.0) += m;
        }
        if mass.values().sum::<f64>() <= 0.0 {
            return Err(Error::InvalidParams("base distribution has no mass".into()));
        }
        Ok(Self { mass })
    }

    pub fn mass(&self, x: usize, y: bool) -> f64 {
        self.mass.get(&(x, y)).copied().unwrap_or(0.0)
    }

    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        let mut xs: Vec<usize> = self.mass.keys().map(|&(x, _)| x).collect();
        xs.dedup();
        xs.into_iter()
    }
}

/// A discrete distribution over `(x, y, a)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct XyaDistribution {
    mass: BTreeMap<(usize, bool, bool), f64>,
}

impl XyaDistribution {
    pub fn mass(&self, x: usize, y: bool, a: bool) -> f64 {
        self.mass.get(&(x, y, a)).copied().unwrap_or(0.0)
    }

    pub fn xy_marginal(&self) -> BTreeMap<(usize, bool), f64> {
        let mut out = BTreeMap::new();
        for (&(x, y, _), &m) in &self.mass {
            *out.entry((x, y)).or_insert(0.0) += m;
        }
        out
    }

    pub fn xa_marginal(&self) -> BTreeMap<(usize, bool), f64> {
        let mut out = BTreeMap::new();
        for (&(x, _, a), &m) in &self.mass {
            *out.entry((x, a)).or_insert(0.0) += m;
        }
        out
    }

    /// Pushes the distribution through a label classifier `f` and an
    /// attribute classifier `h`.
    pub fn joint_table(
        &self,
        f: impl Fn(usize) -> bool,
        h: impl Fn(usize) -> bool,
    ) -> Result<JointTable> {
        let mut cells = [0.0; 16];
        for (&(x, y, a), &m) in &self.mass {
            cells[Cell::new(y, a, f(x), h(x)).index()] += m;
        }
        JointTable::from_cells(cells)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IndistinguishablePair {
    /// Zero true bias.
    pub q1: XyaDistribution,
    /// True bias one.
    pub q2: XyaDistribution,
    /// Whether the `y = 0` slice could absorb the difference in `(x, a)`
    /// marginals at every `x`. Fails where `P(x, y=0) < P(x, y=1) / 2`.
    pub xa_marginals_match: bool,
}

/// Two distributions sharing the `(x, y)` marginal on which a non-Bayes-
/// optimal classifier `f` has true bias 0 and 1 respectively.
///
/// On the positive class, `Q1` draws `a` by a fair coin while `Q2` sets
/// `a = f(x)`. On the negative class each `x` gets `P(a=1 | x, y=0)` chosen
/// so that the `(x, a)` marginals of both distributions coincide, which
/// reduces to a fair coin wherever `x` carries no positive mass.
pub fn indistinguishable_pair(
    base: &XyDistribution,
    f: impl Fn(usize) -> bool,
) -> Result<IndistinguishablePair> {
    let region_mass = |label: bool| -> f64 {
        base.support()
            .filter(|&x| f(x) == label)
            .map(|x| base.mass(x, true))
            .sum()
    };
    if region_mass(true) <= 0.0 {
        return Err(Error::BayesOptimalInput {
            region: "f=1, y=1",
        });
    }
    if region_mass(false) <= 0.0 {
        return Err(Error::BayesOptimalInput {
            region: "f=0, y=1",
        });
    }

    let mut q1 = BTreeMap::new();
    let mut q2 = BTreeMap::new();
    let mut matched = true;
    for x in base.support() {
        let pos = base.mass(x, true);
        let neg = base.mass(x, false);
        let fx = f(x);

        q1.insert((x, true, true), pos / 2.0);
        q1.insert((x, true, false), pos / 2.0);
        q2.insert((x, true, fx), pos);
        q2.insert((x, true, !fx), 0.0);

        // Q1(x, a=1) - Q2(x, a=1) on the positive slice is -pos/2 when
        // f(x)=1 and +pos/2 otherwise; the negative slice cancels it.
        let shift = if pos == 0.0 {
            0.0
        } else if neg > 0.0 {
            let needed = pos / (2.0 * neg);
            if needed > 1.0 + 1e-12 {
                matched = false;
            }
            needed.min(1.0)
        } else {
            matched = false;
            0.0
        };
        let sign = if fx { 1.0 } else { -1.0 };
        let p1 = 0.5 + sign * shift / 2.0;
        let p2 = 0.5 - sign * shift / 2.0;
        q1.insert((x, false, true), neg * p1);
        q1.insert((x, false, false), neg * (1.0 - p1));
        q2.insert((x, false, true), neg * p2);
        q2.insert((x, false, false), neg * (1.0 - p2));
    }
    Ok(IndistinguishablePair {
        q1: XyaDistribution { mass: q1 },
        q2: XyaDistribution { mass: q2 },
        xa_marginals_match: matched,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{ci_violation, conditional_errors, deltas, naive_bias, rates, true_bias};

    #[test]
    fn split_below_base_rate() {
        let b = ErrorBudget::new(0.1, 0.5).unwrap();
        assert_eq!(optimal_error_split(b).unwrap(), vec![(0.0, 0.2), (0.2, 0.0)]);
    }

    #[test]
    fn split_above_base_rate() {
        let b = ErrorBudget::new(0.75, 0.5).unwrap();
        assert_eq!(optimal_error_split(b).unwrap(), vec![(0.5, 1.0), (1.0, 0.5)]);
    }

    #[test]
    fn split_zero_budget_and_boundary() {
        let b = ErrorBudget::new(0.0, 0.3).unwrap();
        assert_eq!(optimal_error_split(b).unwrap(), vec![(0.0, 0.0)]);
        let b = ErrorBudget::new(0.3, 0.3).unwrap();
        assert_eq!(optimal_error_split(b).unwrap(), vec![(0.0, 1.0), (1.0, 0.0)]);
        let b = ErrorBudget::new(0.7, 0.3).unwrap();
        assert!(matches!(optimal_error_split(b), Err(Error::InfeasibleBudget(_))));
    }

    #[test]
    fn scan_equal_rates_matches_closed_form() {
        let scan = gamma_scan(0.25, 0.25, 0.1, 1e-3).unwrap();
        assert_eq!(scan.interval, (0.0, 0.4));
        let argmax: Vec<f64> = scan.argmax_points().map(|p| p.g1).collect();
        assert_eq!(argmax, vec![0.0, 0.4]);
    }

    #[test]
    fn scan_on_unit_budget_is_flat_zero() {
        let scan = gamma_scan(0.3, 0.3, 0.3, 1e-2).unwrap();
        assert!(scan.points.iter().all(|p| p.gamma < 1e-12));
        assert_eq!(scan.argmax.len(), scan.points.len());
        assert!(scan.points.first().unwrap().singular && scan.points.last().unwrap().singular);
    }

    #[test]
    fn scan_unequal_rates_peaks_at_an_endpoint() {
        let scan = gamma_scan(0.3, 0.1, 0.06, 1e-3).unwrap();
        let (lo, hi) = scan.interval;
        assert!(scan
            .argmax_points()
            .all(|p| (p.g1 - lo).abs() <= 1e-3 || (p.g1 - hi).abs() <= 1e-3));
    }

    #[test]
    fn scan_includes_endpoints_for_indivisible_step() {
        let scan = gamma_scan(0.25, 0.25, 0.1, 0.15).unwrap();
        let g1s: Vec<f64> = scan.points.iter().map(|p| p.g1).collect();
        assert_eq!(g1s.first(), Some(&0.0));
        assert_eq!(g1s.last(), Some(&0.4));
    }

    #[test]
    fn scan_rejects_infeasible_budget() {
        assert!(matches!(
            gamma_scan(0.2, 0.2, 0.5, 1e-3),
            Err(Error::InfeasibleBudget(_))
        ));
        assert!(gamma_scan(0.2, 0.2, 0.1, 0.0).is_err());
    }

    #[test]
    fn scan_csv_has_header_and_rows() {
        let scan = gamma_scan(0.25, 0.25, 0.1, 0.1).unwrap();
        let mut buf = Vec::new();
        scan.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "g1,g2,gamma");
        assert_eq!(lines.len(), scan.points.len() + 1);
    }

    #[test]
    fn counterexample_tallies() {
        let ce = bayes_counterexample();
        let t = &ce.table;
        assert_eq!(t.total(), 6.0);
        assert_eq!(t.cells().iter().filter(|&&m| m == 1.0).count(), 6);
        assert_eq!(true_bias(t).unwrap(), 0.0);
        assert_eq!(naive_bias(t).unwrap(), 1.0);
        assert_eq!(conditional_errors(t).unwrap(), (0.5, 0.5));
        assert_eq!(deltas(t).unwrap(), (1.0, 0.0));
        assert_eq!(ci_violation(t).unwrap(), 0.25);
        let rt = rates(t).unwrap();
        assert!((rt.r - 1.0 / 3.0).abs() < 1e-15 && (rt.s - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(*t.exact_true_bias().unwrap().numer(), 0);
        assert_eq!(t.exact_naive_bias().unwrap(), num_rational::Ratio::from_integer(1));
    }

    #[test]
    fn pair_on_four_point_base() {
        // x0:(y=1) f=1, x1:(y=1) f=0, x2,x3:(y=0) f=0 -- f correct on 3 of 4.
        let base = XyDistribution::new([
            (0, true, 0.25),
            (1, true, 0.25),
            (2, false, 0.25),
            (3, false, 0.25),
        ])
        .unwrap();
        let f = |x: usize| x == 0;
        let pair = indistinguishable_pair(&base, f).unwrap();
        let h = |x: usize| x % 2 == 0;
        assert_eq!(true_bias(&pair.q1.joint_table(f, h).unwrap()).unwrap(), 0.0);
        assert_eq!(true_bias(&pair.q2.joint_table(f, h).unwrap()).unwrap(), 1.0);
        assert_eq!(pair.q1.xy_marginal(), pair.q2.xy_marginal());
        // Positive-only points cannot be balanced through the negative slice.
        assert!(!pair.xa_marginals_match);
    }

    #[test]
    fn pair_rejects_bayes_optimal_classifier() {
        let base = XyDistribution::new([(0, true, 0.5), (1, false, 0.5)]).unwrap();
        assert!(matches!(
            indistinguishable_pair(&base, |x| x == 0),
            Err(Error::BayesOptimalInput { region: "f=0, y=1" })
        ));
    }

    #[test]
    fn pair_balances_xa_marginals_when_possible() {
        let base = XyDistribution::new([
            (0, true, 0.2),
            (0, false, 0.15),
            (1, true, 0.1),
            (1, false, 0.3),
            (2, false, 0.25),
        ])
        .unwrap();
        let f = |x: usize| x == 0;
        let pair = indistinguishable_pair(&base, f).unwrap();
        assert!(pair.xa_marginals_match);
        let (m1, m2) = (pair.q1.xa_marginal(), pair.q2.xa_marginal());
        for (k, v) in &m1 {
            assert!((v - m2[k]).abs() < 1e-12, "{k:?}");
        }
        let h = |x: usize| x != 1;
        let t1 = pair.q1.joint_table(f, h).unwrap();
        let t2 = pair.q2.joint_table(f, h).unwrap();
        assert!((naive_bias(&t1).unwrap() - naive_bias(&t2).unwrap()).abs() < 1e-12);
    }
}
