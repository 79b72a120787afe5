pub mod error;
pub mod experiment;
pub mod frac_integral;
pub mod hh;
pub mod oracle;
pub mod polynomial;
pub mod process;
pub mod quadrature;
pub mod series;
pub mod special;

pub use error::{Error, Result};
