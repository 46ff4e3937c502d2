//! Pseudo-spectral laboratory for the pressureless Euler–Navier-Stokes system
//!
//! ```text
//! ρ_t + div(ρw) = 0
//! w_t + w·∇w = u − w
//! u_t + u·∇u − Δu + ∇P = ρ(w − u),   div u = 0
//! ```
//!
//! posed on a periodic box that stands in for the whole space. The crate
//! provides the Fourier machinery ([`spectral`]), the state and initial data
//! ([`state`]), time integration of both the advective and the conservative
//! form ([`solver`]), a semi-Lagrangian flow-map density oracle
//! ([`transport`]), the energy functionals and function-space norms
//! ([`functionals`]), experiment drivers ([`experiments`]) and file formats
//! ([`io`]).

pub mod error;
pub mod experiments;
pub mod functionals;
pub mod io;
pub mod solver;
pub mod spectral;
pub mod state;
pub mod transport;

pub use error::{Error, Result};
pub use spectral::{Field, Grid, SpectralField};
pub use state::{FluidState, InitialData, RunConfig};

#[cfg(test)]
#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;
