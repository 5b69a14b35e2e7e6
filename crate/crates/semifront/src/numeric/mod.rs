//! Numerical kernels: interpolation, quadrature, ODE integration,
//! endpoint extrapolation.
//!
//! Everything here is model-agnostic; the physics lives in the layers above.

pub mod extrap;
pub mod pchip;
pub mod quad;
pub mod rk;
