//! Numerical laboratory for semi-wavefront and wavefront profiles of
//! degenerate advection-reaction-diffusion equations
//!
//! ```text
//! rho_t + f(rho)_x = (D(rho) rho_x)_x + g(rho)
//! ```
//!
//! on the density interval [0, rho_bar], where the diffusivity D
//! degenerates (vanishes) at the top density and possibly at zero.
//! Traveling-wave profiles phi(x - ct) of this equation are computed by
//! reducing them to a singular first-order boundary value problem for
//! z(phi) = D(phi) phi', namely
//!
//! ```text
//! dz/dphi = h(phi) - c - D(phi) g(phi) / z(phi),   z < 0,
//! z(rho_bar) = 0,
//! ```
//!
//! with h = f'. The crate solves this problem by asymptotic seeding at the
//! singular endpoint plus adaptive integration ([`zsolver`]), decides
//! whether fronts are sharp or classical and whether they are strictly
//! monotone ([`classify`]), reconstructs profiles phi(xi) by quadrature and
//! monotone inversion ([`profile`]), studies convergence of semi-wavefront
//! families toward wavefronts ([`convergence`]), pastes profile pieces
//! across an interior source zero ([`pasting`]), and cross-checks
//! everything against direct PDE evolution ([`evolve`]).

pub mod classify;
pub mod convergence;
pub mod error;
pub mod evolve;
pub mod field;
pub mod model;
pub mod numeric;
pub mod pasting;
pub mod profile;
pub mod zsolver;

pub use error::{Error, Result};
pub use field::{FieldKind, LocalOrder, ScalarField};
pub use model::{AssumptionReport, EllLimit, Model, Tag};
