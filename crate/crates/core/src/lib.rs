pub mod error;
pub mod evolution;
pub mod kernel;
pub mod lab;
pub mod normal_form;
pub mod norms;
mod quadrature;
pub mod spectral;
pub mod vector_fields;

pub use error::{Error, Result};
