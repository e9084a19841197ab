//! Numerical building blocks: maximisation, roots, quadrature, ODE integration, interpolation.

pub mod interp;
pub mod ode;
pub mod optimize;
pub mod quad;
pub mod radau;
