//! Transfer operators, equilibrium states and statistical properties of
//! one-dimensional Markov maps with a region of weak contraction.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod cli;
pub mod cones;
pub mod config;
pub mod dynamics;
pub mod equilibrium;
pub mod error;
pub mod grid;
pub mod hypotheses;
pub mod linalg;
pub mod perturbation;
pub mod potential;
pub mod statistics;
pub mod symbolic;
pub mod transfer;

pub use config::{MapSpec, RunConfig};
pub use dynamics::{Atom, Branch, MarkovMap};
pub use error::{Error, Result};
pub use potential::{Potential, PotentialForm};
pub use statistics::Observable;
pub use transfer::{CylinderModel, CylinderSystem};
