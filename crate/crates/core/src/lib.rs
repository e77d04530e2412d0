pub mod cam;
pub mod data;
pub mod desk;
pub mod error;
pub mod eval;
pub mod imgprep;
pub mod model;
pub mod train;

pub use error::{Error, Result};
