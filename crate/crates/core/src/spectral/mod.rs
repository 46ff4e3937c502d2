//! Periodic-box Fourier machinery.

mod fft;
mod field;
mod grid;
mod ops;

pub use fft::{forward, forward_samples, inverse};
pub use field::{Field, SpectralField};
pub use grid::Grid;
pub use ops::{
    dealias, divergence, dyadic_block, dyadic_index, dyadic_range, gradient, heat_semigroup, laplacian,
    leray_project, ShellSpectrum,
};

pub(crate) use fft::{forward_arrays, forward_arrays_masked, inverse_arrays, inverse_derivatives, inverse_unchecked};
pub(crate) use ops::{
    dealias_mask, derivative, divergence_into, gradient_energy, gradient_tensor, leray_in_place, tensor_sup,
};

pub use rustfft::num_complex::Complex64;
