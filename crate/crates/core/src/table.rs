//! Joint probability table over `(y, a, y_hat, a_hat)`.
//!
//! Every conditional probability used by the estimators is a ratio of two
//! sums of cells of this table. Tables built from records hold exact
//! integer counts; tables built from a distribution hold probabilities.
//! Ratios are scale free, so both forms feed the same estimators.

use std::fmt;

use num_rational::Ratio;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::record::PredictionRecord;

/// Exact bias from integer counts.
pub type ExactRatio = Ratio<i64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Axis {
    Y,
    A,
    YHat,
    AHat,
}

/// One of the 16 outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Cell {
    pub y: bool,
    pub a: bool,
    pub y_hat: bool,
    pub a_hat: bool,
}

impl Cell {
    pub const fn new(y: bool, a: bool, y_hat: bool, a_hat: bool) -> Self {
        Self { y, a, y_hat, a_hat }
    }

    pub const fn index(self) -> usize {
        (self.y as usize) << 3 | (self.a as usize) << 2 | (self.y_hat as usize) << 1 | self.a_hat as usize
    }

    pub const fn from_index(i: usize) -> Self {
        Self {
            y: i & 8 != 0,
            a: i & 4 != 0,
            y_hat: i & 2 != 0,
            a_hat: i & 1 != 0,
        }
    }

    pub fn all() -> impl Iterator<Item = Cell> {
        (0..16).map(Cell::from_index)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(y={}, a={}, y_hat={}, a_hat={})",
            u8::from(self.y),
            u8::from(self.a),
            u8::from(self.y_hat),
            u8::from(self.a_hat)
        )
    }
}

/// Which attribute columns a table is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeSource {
    /// Only the true attribute `a`; the `a_hat` axis is collapsed.
    TrueA,
    /// Only the predicted attribute `a_hat`; the `a` axis is collapsed.
    PredictedA,
    Both,
}

impl AttributeSource {
    pub fn has(self, axis: Axis) -> bool {
        match (self, axis) {
            (_, Axis::Y | Axis::YHat) => true,
            (AttributeSource::TrueA, Axis::AHat) => false,
            (AttributeSource::PredictedA, Axis::A) => false,
            _ => true,
        }
    }
}

/// Nonnegative masses over the 16 `(y, a, y_hat, a_hat)` cells.
///
/// Collapsed axes keep all their mass at the `false` coordinate. The table is
/// immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointTable {
    cells: [f64; 16],
    total: f64,
    source: AttributeSource,
}

impl JointTable {
    /// Builds a full table from raw cell masses indexed by [`Cell::index`].
    pub fn from_cells(cells: [f64; 16]) -> Result<Self> {
        Self::with_source(cells, AttributeSource::Both)
    }

    pub fn from_fn(mut mass: impl FnMut(Cell) -> f64) -> Result<Self> {
        let mut cells = [0.0; 16];
        for cell in Cell::all() {
            cells[cell.index()] = mass(cell);
        }
        Self::from_cells(cells)
    }

    fn with_source(cells: [f64; 16], source: AttributeSource) -> Result<Self> {
        for (i, &m) in cells.iter().enumerate() {
            if !m.is_finite() || m < 0.0 {
                return Err(Error::InvalidTable(format!(
                    "cell {} has mass {m}",
                    Cell::from_index(i)
                )));
            }
            let cell = Cell::from_index(i);
            let collapsed = (!source.has(Axis::A) && cell.a) || (!source.has(Axis::AHat) && cell.a_hat);
            if collapsed && m > 0.0 {
                return Err(Error::InvalidTable(format!(
                    "cell {cell} carries mass on a collapsed axis"
                )));
            }
        }
        let total: f64 = cells.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidTable("total mass is zero".into()));
        }
        Ok(Self {
            cells,
            total,
            source,
        })
    }

    pub fn cells(&self) -> &[f64; 16] {
        &self.cells
    }

    pub fn cell_mass(&self, cell: Cell) -> f64 {
        self.cells[cell.index()]
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn source(&self) -> AttributeSource {
        self.source
    }

    pub fn require(&self, axis: Axis) -> Result<()> {
        if self.source.has(axis) {
            Ok(())
        } else {
            Err(Error::MissingAxis(axis))
        }
    }

    /// Sum of the cells selected by `event`.
    pub fn mass(&self, event: impl Fn(Cell) -> bool) -> f64 {
        Cell::all()
            .filter(|&c| event(c))
            .map(|c| self.cells[c.index()])
            .sum()
    }

    pub fn prob(&self, event: impl Fn(Cell) -> bool) -> f64 {
        self.mass(event) / self.total
    }

    /// `P(event | given)`, or `None` when `given` has zero mass.
    pub fn conditional(
        &self,
        event: impl Fn(Cell) -> bool,
        given: impl Fn(Cell) -> bool,
    ) -> Option<f64> {
        let denom = self.mass(&given);
        if denom > 0.0 {
            Some(self.mass(|c| given(c) && event(c)) / denom)
        } else {
            None
        }
    }

    /// Rescaled copy with total mass one.
    pub fn normalized(&self) -> Self {
        let mut cells = self.cells;
        for m in &mut cells {
            *m /= self.total;
        }
        Self {
            cells,
            total: cells.iter().sum(),
            source: self.source,
        }
    }

    /// Adds `pseudo_count` to every populated cell (cells on collapsed axes
    /// stay empty).
    pub fn smoothed(&self, pseudo_count: f64) -> Result<Self> {
        if !(pseudo_count >= 0.0 && pseudo_count.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "pseudo-count {pseudo_count} must be finite and nonnegative"
            )));
        }
        let mut cells = self.cells;
        for cell in Cell::all() {
            let collapsed = (!self.source.has(Axis::A) && cell.a)
                || (!self.source.has(Axis::AHat) && cell.a_hat);
            if !collapsed {
                cells[cell.index()] += pseudo_count;
            }
        }
        Self::with_source(cells, self.source)
    }

    /// Cell masses as integers, if every cell holds a whole count.
    pub fn exact_counts(&self) -> Option<[u64; 16]> {
        let mut out = [0u64; 16];
        for (o, &m) in out.iter_mut().zip(&self.cells) {
            if m.fract() != 0.0 || m > (1u64 << 53) as f64 {
                return None;
            }
            *o = m as u64;
        }
        Some(out)
    }

    /// `alpha - beta` computed in exact rational arithmetic on integer counts.
    pub fn exact_true_bias(&self) -> Result<ExactRatio> {
        self.require(Axis::A)?;
        self.exact_gap(|c| c.a, "a")
    }

    /// `alpha_hat - beta_hat` in exact rational arithmetic on integer counts.
    pub fn exact_naive_bias(&self) -> Result<ExactRatio> {
        self.require(Axis::AHat)?;
        self.exact_gap(|c| c.a_hat, "a_hat")
    }

    fn exact_gap(&self, group: impl Fn(Cell) -> bool, name: &str) -> Result<ExactRatio> {
        let counts = self
            .exact_counts()
            .ok_or_else(|| Error::InvalidTable("exact arithmetic needs integer counts".into()))?;
        let count = |event: &dyn Fn(Cell) -> bool| -> i64 {
            Cell::all()
                .filter(|&c| event(c))
                .map(|c| counts[c.index()] as i64)
                .sum()
        };
        let rate = |g: bool| -> Result<ExactRatio> {
            let denom = count(&|c| c.y && group(c) == g);
            if denom == 0 {
                return Err(Error::InvalidTable(format!(
                    "no positives with {name}={}",
                    u8::from(g)
                )));
            }
            Ok(Ratio::new(count(&|c| c.y && c.y_hat && group(c) == g), denom))
        };
        Ok(rate(true)? - rate(false)?)
    }
}

/// Tallies records into a count table.
///
/// With `TrueA` or `PredictedA` the unused attribute axis is collapsed.
pub fn build_joint_table(
    records: &[PredictionRecord],
    source: AttributeSource,
) -> Result<JointTable> {
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut cells = [0.0; 16];
    for r in records {
        let a = if source.has(Axis::A) { r.require_a()? } else { false };
        let a_hat = if source.has(Axis::AHat) {
            r.require_a_hat()?
        } else {
            false
        };
        cells[Cell::new(r.y, a, r.y_hat, a_hat).index()] += 1.0;
    }
    JointTable::with_source(cells, source)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, y: bool, a: bool, y_hat: bool, a_hat: bool) -> PredictionRecord {
        PredictionRecord::new(id, y, y_hat).with_a(a).with_a_hat(a_hat)
    }

    #[test]
    fn index_round_trips() {
        for i in 0..16 {
            assert_eq!(Cell::from_index(i).index(), i);
        }
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(matches!(
            build_joint_table(&[], AttributeSource::Both),
            Err(Error::EmptyInput)
        ));
    }

    #[test]
    fn point_mass_table() {
        let recs: Vec<_> = (0..4)
            .map(|i| rec(&i.to_string(), true, true, true, true))
            .collect();
        let t = build_joint_table(&recs, AttributeSource::Both).unwrap();
        let cell = Cell::new(true, true, true, true);
        assert_eq!(t.cell_mass(cell), 4.0);
        assert_eq!(t.total(), 4.0);
        assert_eq!(t.conditional(|c| c.y_hat, |c| c.y && c.a), Some(1.0));
        assert_eq!(t.conditional(|c| c.a_hat, |c| c.y && c.a && c.y_hat), Some(1.0));
        assert_eq!(t.conditional(|c| c.y_hat, |c| !c.y), None);
    }

    #[test]
    fn missing_field_names_the_record() {
        let recs = vec![PredictionRecord::new("r7", true, true).with_a_hat(true)];
        match build_joint_table(&recs, AttributeSource::Both) {
            Err(Error::MissingField { id, field }) => {
                assert_eq!(id, "r7");
                assert_eq!(field, "a");
            }
            other => panic!("unexpected {other:?}"),
        }
        let t = build_joint_table(&recs, AttributeSource::PredictedA).unwrap();
        assert!(matches!(t.require(Axis::A), Err(Error::MissingAxis(Axis::A))));
    }

    #[test]
    fn collapsed_axis_keeps_mass_at_false() {
        let recs = vec![rec("1", true, true, false, true), rec("2", false, false, true, true)];
        let t = build_joint_table(&recs, AttributeSource::TrueA).unwrap();
        assert_eq!(t.cell_mass(Cell::new(true, true, false, false)), 1.0);
        assert_eq!(t.mass(|c| c.a_hat), 0.0);
    }

    #[test]
    fn rejects_negative_mass() {
        let mut cells = [1.0; 16];
        cells[3] = -0.1;
        assert!(JointTable::from_cells(cells).is_err());
        assert!(JointTable::from_cells([0.0; 16]).is_err());
    }

    #[test]
    fn smoothing_adds_pseudo_counts() {
        let t = JointTable::from_fn(|c| if c.y { 1.0 } else { 0.0 }).unwrap();
        let s = t.smoothed(0.5).unwrap();
        assert_eq!(s.total(), 8.0 + 8.0);
        assert!(t.smoothed(-1.0).is_err());
    }

    #[test]
    fn chained_conditionals_agree_with_direct_ratio() {
        let t = JointTable::from_fn(|c| 1.0 + c.index() as f64 * 0.37).unwrap();
        // P(y_hat, a_hat | y, a) == P(y_hat | y, a) * P(a_hat | y, a, y_hat)
        for cell in Cell::all() {
            let given = |c: Cell| c.y == cell.y && c.a == cell.a;
            let direct = t
                .conditional(|c| c.y_hat == cell.y_hat && c.a_hat == cell.a_hat, given)
                .unwrap();
            let first = t.conditional(|c| c.y_hat == cell.y_hat, given).unwrap();
            let second = t
                .conditional(
                    |c| c.a_hat == cell.a_hat,
                    |c| given(c) && c.y_hat == cell.y_hat,
                )
                .unwrap();
            assert!((direct - first * second).abs() < 1e-12);
        }
    }
}
