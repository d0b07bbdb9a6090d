//! Compiles and runs the code blocks of the book as doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/spectral.md")]
pub mod spectral {}
#[doc = include_str!("../../../book/src/norms.md")]
pub mod norms {}
#[doc = include_str!("../../../book/src/kernel.md")]
pub mod kernel {}
#[doc = include_str!("../../../book/src/evolution.md")]
pub mod evolution {}
#[doc = include_str!("../../../book/src/vector_fields.md")]
pub mod vector_fields {}
#[doc = include_str!("../../../book/src/normal_form.md")]
pub mod normal_form {}
#[doc = include_str!("../../../book/src/lab.md")]
pub mod lab {}
