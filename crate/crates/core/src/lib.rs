pub mod baseline;
pub mod bench;
pub mod datamodel;
pub mod error;
pub mod identify;
pub mod matops;
pub mod metrics;
pub mod simulate;
pub mod sketch;

pub use error::{FrsidError, Result};
pub use matops::Matrix;
