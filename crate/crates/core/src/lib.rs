//! Numerical solver for the continuous-time principal-agent problem with distinct discount rates.
//!
//! The agent discounts at `r`, the principal at `ρ`. Everything is expressed through the
//! agent's continuation utility `y` and the ratio `δ = r/ρ`.

pub mod cara;
pub mod error;
pub mod facelift;
pub mod firstbest;
pub mod gp_conditions;
pub mod hjb;
pub mod mcsim;
pub mod model;
pub mod numerics;

pub use error::{Error, Result};
pub use model::{CostSpec, Curve, I0Value, ModelParams};

/// Library version, embedded in emitted artifacts.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
