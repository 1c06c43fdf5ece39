//! Equal-opportunity bias estimation when the sensitive attribute is only
//! observed through a noisy attribute classifier.
//!
//! The crate is organised around a [`JointTable`] over
//! `(y, a, y_hat, a_hat)`:
//!
//! * [`estimators`] holds the closed-form naive, corrected and general
//!   estimators together with the distortion factor.
//! * [`theory`] builds the distortion-factor landscapes, the optimal error
//!   split and the two counterexample constructions.
//! * [`simulate`] generates exact tables and seeded synthetic records.
//! * [`sampling`] implements uncertainty-driven label acquisition and its
//!   baselines against an attribute oracle.
//! * [`io`] reads and writes the CSV record format and splits datasets.

pub mod error;
pub mod estimators;
pub mod io;
pub mod record;
pub mod report;
pub mod sampling;
pub mod simulate;
pub mod table;
pub mod theory;

pub use error::{Error, Group, Result};
pub use estimators::{ErrorProfile, Rates};
pub use record::PredictionRecord;
pub use report::BiasReport;
pub use table::{build_joint_table, AttributeSource, Axis, Cell, JointTable};
