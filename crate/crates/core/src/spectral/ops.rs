//! Mode-wise operators on spectral fields.

use rustfft::num_complex::Complex64;

use super::{Grid, SpectralField};
use crate::error::{Error, Result};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

fn require_scalar(s: &SpectralField, op: &str) -> Result<()> {
    if !s.is_scalar() {
        return Err(Error::Shape(format!("{op} expects a scalar field")));
    }
    Ok(())
}

fn require_vector(s: &SpectralField, op: &str) -> Result<()> {
    if s.ncomp() != 3 {
        return Err(Error::Shape(format!("{op} expects a vector field")));
    }
    Ok(())
}

/// Multiplies by `i k'`, where `k'` drops the Nyquist column.
pub fn gradient(spec: &SpectralField) -> Result<SpectralField> {
    require_scalar(spec, "gradient")?;
    let grid = spec.grid();
    let comps = (0..3).map(|axis| derivative(grid, spec.coeffs(0), axis)).collect();
    SpectralField::new(grid, comps)
}

pub fn divergence(spec: &SpectralField) -> Result<SpectralField> {
    require_vector(spec, "divergence")?;
    let grid = spec.grid();
    let mut out = vec![Complex64::default(); grid.len()];
    divergence_into(grid, [spec.coeffs(0), spec.coeffs(1), spec.coeffs(2)], &mut out);
    SpectralField::new(grid, vec![out])
}

/// Multiplies by `−|k|²` (Nyquist included).
pub fn laplacian(spec: &SpectralField) -> SpectralField {
    let ksq = spec.grid().k_sq();
    spec.map_modes(|i| -ksq[i])
}

/// `v − k'(k'·v)/|k'|²` per mode; modes with `k' = 0` pass through unchanged.
pub fn leray_project(spec: &SpectralField) -> Result<SpectralField> {
    require_vector(spec, "leray_project")?;
    let mut comps = spec.components().to_vec();
    let [a, rest @ ..] = comps.as_mut_slice() else { unreachable!() };
    let [b, c] = rest else { unreachable!() };
    leray_in_place(spec.grid(), [a, b, c]);
    SpectralField::new(spec.grid(), comps)
}

/// Multiplies by `e^{−|k|² t}`.
pub fn heat_semigroup(spec: &SpectralField, t: f64) -> Result<SpectralField> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("heat semigroup needs t ≥ 0, got {t}")));
    }
    let ksq = spec.grid().k_sq();
    Ok(spec.map_modes(|i| (-ksq[i] * t).exp()))
}

/// Zeroes every mode with some `|m_j|` above [`Grid::dealias_limit`].
pub fn dealias(spec: &SpectralField) -> SpectralField {
    let mask = dealias_mask(spec.grid());
    spec.map_modes(|i| if mask[i] { 1.0 } else { 0.0 })
}

/// Range `[j_min, j_max]` of dyadic indices whose annuli `2^j ≤ |k| < 2^{j+1}`
/// contain at least one nonzero mode of the grid.
pub fn dyadic_range(grid: &Grid) -> (i32, i32) {
    let mut lo = i32::MAX;
    let mut hi = i32::MIN;
    for &k2 in &grid.k_sq()[1..] {
        let j = dyadic_index(k2);
        lo = lo.min(j);
        hi = hi.max(j);
    }
    (lo, hi)
}

/// Dyadic index of a nonzero mode with squared wavenumber `k2`.
pub fn dyadic_index(k2: f64) -> i32 {
    (0.5 * k2.log2()).floor() as i32
}

/// Restriction to the sharp annulus `2^j ≤ |k| < 2^{j+1}`.
pub fn dyadic_block(spec: &SpectralField, j: i32) -> Result<SpectralField> {
    let (min, max) = dyadic_range(spec.grid());
    if j < min || j > max {
        return Err(Error::DyadicRange { j, min, max });
    }
    let ksq = spec.grid().k_sq();
    Ok(spec.map_modes(|i| if i != 0 && dyadic_index(ksq[i]) == j { 1.0 } else { 0.0 }))
}

/// Spectral energy grouped by integer shell `|m|²`, for fast evaluation of
/// radial multipliers such as the heat semigroup.
#[derive(Clone, Debug)]
pub struct ShellSpectrum {
    /// (|k|², L³·Σ|c|² over the shell), zero mode excluded, sorted by |k|².
    pub shells: Vec<(f64, f64)>,
    pub zero_mode: f64,
}

impl ShellSpectrum {
    pub fn new(spec: &SpectralField) -> Self {
        let grid = spec.grid();
        let msq = grid.mode_sq();
        let maxm = msq.iter().copied().max().unwrap_or(0) as usize;
        let mut acc = vec![0.0; maxm + 1];
        for c in spec.components() {
            for (idx, z) in c.iter().enumerate() {
                acc[msq[idx] as usize] += z.norm_sqr();
            }
        }
        let k0 = 2.0 * std::f64::consts::PI / grid.box_len();
        let vol = grid.volume();
        let shells = acc
            .iter()
            .enumerate()
            .skip(1)
            .filter(|(_, &e)| e > 0.0)
            .map(|(m2, &e)| (k0 * k0 * m2 as f64, vol * e))
            .collect();
        ShellSpectrum { shells, zero_mode: vol * acc[0] }
    }

    /// ‖e^{tΔ}z‖² without the zero mode.
    pub fn heat_energy(&self, t: f64) -> f64 {
        self.shells.iter().map(|&(k2, e)| e * (-2.0 * k2 * t).exp()).sum()
    }
}

pub(crate) fn dealias_mask(grid: &Grid) -> Vec<bool> {
    let kmax = grid.dealias_limit();
    (0..grid.len())
        .map(|idx| grid.modes_at(idx).iter().all(|m| m.abs() <= kmax))
        .collect()
}

/// Calls `f(idx, i, j, k)` for every flat index in storage order.
#[inline]
fn for_each_index(n: usize, mut f: impl FnMut(usize, usize, usize, usize)) {
    let mut idx = 0;
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                f(idx, i, j, k);
                idx += 1;
            }
        }
    }
}

/// `i k'_axis · c` as a new array.
pub(crate) fn derivative(grid: &Grid, c: &[Complex64], axis: usize) -> Vec<Complex64> {
    let n = grid.n();
    let kd = grid.derivative_wavenumbers();
    let mut out = Vec::with_capacity(c.len());
    let ik = |k: f64, z: Complex64| Complex64::new(-k * z.im, k * z.re);
    match axis {
        0 => {
            for row in c.chunks_exact(n) {
                out.extend(row.iter().zip(kd).map(|(&z, &k)| ik(k, z)));
            }
        }
        1 => {
            for (r, row) in c.chunks_exact(n).enumerate() {
                let k = kd[r % n];
                out.extend(row.iter().map(|&z| ik(k, z)));
            }
        }
        _ => {
            for (plane, chunk) in c.chunks_exact(n * n).enumerate() {
                let k = kd[plane];
                out.extend(chunk.iter().map(|&z| ik(k, z)));
            }
        }
    }
    out
}

pub(crate) fn divergence_into(grid: &Grid, v: [&[Complex64]; 3], out: &mut [Complex64]) {
    let kd = grid.derivative_wavenumbers();
    for_each_index(grid.n(), |idx, i, j, k| {
        out[idx] = I * (kd[i] * v[0][idx] + kd[j] * v[1][idx] + kd[k] * v[2][idx]);
    });
}

pub(crate) fn leray_in_place(grid: &Grid, v: [&mut Vec<Complex64>; 3]) {
    let kd = grid.derivative_wavenumbers();
    let n = grid.n();
    let inv = grid.inv_deriv_k_sq();
    let [a, b, c] = v;
    let rows = a
        .chunks_exact_mut(n)
        .zip(b.chunks_exact_mut(n))
        .zip(c.chunks_exact_mut(n).zip(inv.chunks_exact(n)));
    for (r, ((ra, rb), (rc, ri))) in rows.enumerate() {
        let (k1, k2) = (kd[r % n], kd[r / n]);
        for i in 0..n {
            let k0 = kd[i];
            let dot = (ra[i] * k0 + rb[i] * k1 + rc[i] * k2) * ri[i];
            ra[i] -= dot * k0;
            rb[i] -= dot * k1;
            rc[i] -= dot * k2;
        }
    }
}

/// Physical-space velocity gradient: nine arrays, entry `3·i + j` is `∂_j v_i`.
pub(crate) fn gradient_tensor(grid: &Grid, v: [&[Complex64]; 3]) -> Vec<Vec<f64>> {
    let spectra: Vec<Vec<Complex64>> = (0..9).map(|e| derivative(grid, v[e / 3], e % 3)).collect();
    let refs: Vec<&[Complex64]> = spectra.iter().map(|s| s.as_slice()).collect();
    super::inverse_arrays(grid, &refs)
}

/// sup over points of the Frobenius norm of a 3×3 tensor field.
pub(crate) fn tensor_sup(t: &[Vec<f64>]) -> f64 {
    let len = t[0].len();
    let mut m: f64 = 0.0;
    for p in 0..len {
        let s: f64 = t.iter().map(|c| c[p] * c[p]).sum();
        m = m.max(s);
    }
    m.sqrt()
}

/// ‖∇v‖²_{L²} = L³ Σ |k'|²|v̂|².
pub(crate) fn gradient_energy(grid: &Grid, v: &[Vec<Complex64>]) -> f64 {
    let kd = grid.derivative_wavenumbers();
    let mut acc = 0.0;
    for c in v {
        for_each_index(grid.n(), |idx, i, j, k| {
            acc += (kd[i] * kd[i] + kd[j] * kd[j] + kd[k] * kd[k]) * c[idx].norm_sqr();
        });
    }
    grid.volume() * acc
}
