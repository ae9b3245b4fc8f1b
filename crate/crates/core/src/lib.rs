pub mod closed_form;
pub mod detection;
pub mod error;
pub mod gp_limit;
pub mod io;
pub mod moments;
pub mod series;

pub use error::{Error, ErrorKind, Result};
