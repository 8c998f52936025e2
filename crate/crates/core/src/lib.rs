//! Stochastic realization and identification of linear switched systems
//! with i.i.d. switching.

pub mod benchmark;
pub mod covariance;
pub mod error;
pub mod exec;
pub mod identify;
pub mod linalg;
pub mod model;
pub mod realize;
pub mod selection;
pub mod simulate;
pub mod table;
pub mod word;

pub use error::{Error, Result, Stage};
pub use exec::Execution;
pub use model::{DeterministicModel, InnovationModel, SwitchedModel};
pub use selection::Selection;
pub use simulate::{Dataset, SimConfig};
pub use table::WordTable;
pub use word::Word;
