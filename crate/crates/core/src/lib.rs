// NaN-rejecting checks are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod affine_hull;
pub mod attribute_space;
pub mod cli;
pub mod crm;
pub mod energy_model;
pub mod error;
pub mod evaluation;
pub mod experiments;
pub mod io;
pub mod numeric;
pub mod rng;
pub mod synthetic;
pub mod table;

pub use error::{CrmError, Result};
