//! Rule-based fuzzy models with smooth s-t compositions.
//!
//! The crate covers the whole identification workflow:
//!
//! - [`norms`]: t-norm / s-norm pairs with analytic partials,
//! - [`membership`]: Gaussian membership functions,
//! - [`model`]: fuzzification, firing strengths, centroid defuzzification and
//!   the model file format,
//! - [`train`]: gradient-descent identification with multi-start,
//! - [`adapt`]: the online self-learning loop,
//! - [`plants`]: Mackey-Glass and CSTR data generators,
//! - [`bench`]: experiment orchestration, result tables and charts.

pub mod adapt;
pub mod bench;
pub mod data;
pub mod io;
pub mod membership;
pub mod model;
pub mod norms;
pub mod plants;
pub mod seed;
pub mod train;

pub use membership::GaussianMF;
pub use model::{FuzzyModel, Rule};
pub use norms::CompositionKind;
