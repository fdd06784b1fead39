//! Two emitters in a driven cavity whose output is reflected back by a
//! distant mirror, in the weak-drive two-excitation truncation.

// `!(x > 0.0)` also rejects NaN; index loops mirror the matrix algebra
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod dressed;
pub mod dynamics;
pub mod error;
pub mod model;
pub mod observables;
pub mod oracle;
pub mod state;

pub use dynamics::{FeedbackSystem, Propagator};
pub use error::{Error, Result};
pub use model::{build_params, CouplingMode, Delay, KGrid, ParamsBuilder, SystemParams};
pub use state::{Amp, Excitation, Family, StateVector};
