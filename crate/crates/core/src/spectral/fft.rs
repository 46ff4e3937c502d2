//! Normalized 3-D transforms.
//!
//! Forward: `c(m) = N⁻³ Σ_x f(x) e^{−i k·x}`; inverse: `f(x) = Σ_m c(m) e^{i k·x}`.
//! With this convention `sin(2πx₁/L)` has `c(±1,0,0) = ∓i/2`, and a single
//! coefficient `i/2` at `m = (1,0,0)` with its conjugate partner inverts to
//! `−sin(2πx₁/L)`.
//!
//! Two real fields are packed into one complex transform whenever possible.

use std::cell::RefCell;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use super::{Field, Grid, SpectralField};
use crate::error::{Error, Result};

thread_local! {
    static SCRATCH: RefCell<(Vec<Complex64>, Vec<Complex64>)> = const { RefCell::new((Vec::new(), Vec::new())) };
}

/// Unnormalized in-place 3-D transform of an x-fastest complex array.
pub(crate) fn fft3_in_place(grid: &Grid, data: &mut [Complex64], inverse: bool) {
    let n = grid.n();
    let plan = if inverse { grid.fft_inverse() } else { grid.fft_forward() };
    SCRATCH.with(|cell| {
        let (lines, scratch) = &mut *cell.borrow_mut();
        let need = plan.get_inplace_scratch_len();
        if scratch.len() < need {
            scratch.resize(need, Complex64::default());
        }
        lines.resize(n * n, Complex64::default());

        plan.process_with_scratch(data, &mut scratch[..need]);

        // Remaining axes: gather n lines at a time into contiguous rows,
        // transform, scatter back.
        for stride in [n, n * n] {
            let bases: Box<dyn Iterator<Item = usize>> = if stride == n {
                Box::new((0..n).map(move |k| k * n * n))
            } else {
                Box::new((0..n).map(move |j| j * n))
            };
            for base in bases {
                gather(data, lines, base, stride, n);
                plan.process_with_scratch(lines, &mut scratch[..need]);
                scatter(data, lines, base, stride, n);
            }
        }
    });
}

// lines[b·n + a] = data[base + stride·a + b], four rows at a time so each
// write fills a cache line.
fn gather(data: &[Complex64], lines: &mut [Complex64], base: usize, stride: usize, n: usize) {
    for a0 in (0..n).step_by(4) {
        let r0 = &data[base + stride * a0..][..n];
        let r1 = &data[base + stride * (a0 + 1)..][..n];
        let r2 = &data[base + stride * (a0 + 2)..][..n];
        let r3 = &data[base + stride * (a0 + 3)..][..n];
        for b in 0..n {
            let dst = &mut lines[b * n + a0..][..4];
            dst[0] = r0[b];
            dst[1] = r1[b];
            dst[2] = r2[b];
            dst[3] = r3[b];
        }
    }
}

fn scatter(data: &mut [Complex64], lines: &[Complex64], base: usize, stride: usize, n: usize) {
    for a0 in (0..n).step_by(4) {
        let (mut r0, mut r1, mut r2, mut r3) = (
            base + stride * a0,
            base + stride * (a0 + 1),
            base + stride * (a0 + 2),
            base + stride * (a0 + 3),
        );
        for b in 0..n {
            let src = &lines[b * n + a0..][..4];
            data[r0] = src[0];
            data[r1] = src[1];
            data[r2] = src[2];
            data[r3] = src[3];
            r0 += 1;
            r1 += 1;
            r2 += 1;
            r3 += 1;
        }
    }
}

fn forward_pair(
    grid: &Grid,
    a: &[f64],
    b: Option<&[f64]>,
    mask: Option<&[bool]>,
) -> (Vec<Complex64>, Option<Vec<Complex64>>) {
    let scale = 1.0 / grid.len() as f64;
    let mut buf: Vec<Complex64> = match b {
        Some(b) => a.iter().zip(b).map(|(&x, &y)| Complex64::new(x, y)).collect(),
        None => a.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
    };
    fft3_in_place(grid, &mut buf, false);
    let len = grid.len();
    let keep = |p: usize| mask.is_none_or(|m| m[p]);
    if b.is_none() {
        for (p, z) in buf.iter_mut().enumerate() {
            *z = if keep(p) { *z * scale } else { Complex64::default() };
        }
        return (buf, None);
    }
    let mirror = &grid.mirror_table()[..len];
    let buf = &buf[..len];
    let half = 0.5 * scale;
    let mut sa = Vec::with_capacity(len);
    let mut sb = Vec::with_capacity(len);
    for (p, (&c, &mi)) in buf.iter().zip(mirror).enumerate() {
        if !keep(p) {
            sa.push(Complex64::default());
            sb.push(Complex64::default());
            continue;
        }
        let cm = buf[mi as usize].conj();
        sa.push((c + cm) * half);
        // (c − cm)/(2i)
        let d = (c - cm) * half;
        sb.push(Complex64::new(d.im, -d.re));
    }
    (sa, Some(sb))
}

fn inverse_pair(grid: &Grid, a: &[Complex64], b: Option<&[Complex64]>) -> (Vec<f64>, Option<Vec<f64>>) {
    let mut buf: Vec<Complex64> = match b {
        Some(b) => a.iter().zip(b).map(|(&x, &y)| x + Complex64::new(-y.im, y.re)).collect(),
        None => a.to_vec(),
    };
    fft3_in_place(grid, &mut buf, true);
    match b {
        Some(_) => (
            buf.iter().map(|z| z.re).collect(),
            Some(buf.iter().map(|z| z.im).collect()),
        ),
        None => (buf.iter().map(|z| z.re).collect(), None),
    }
}

/// Transform a batch of real arrays, pairing them two per complex FFT.
pub(crate) fn forward_arrays(grid: &Grid, arrays: &[&[f64]]) -> Vec<Vec<Complex64>> {
    forward_arrays_inner(grid, arrays, None)
}

/// [`forward_arrays`] with coefficients outside `mask` set to zero.
pub(crate) fn forward_arrays_masked(grid: &Grid, arrays: &[&[f64]], mask: &[bool]) -> Vec<Vec<Complex64>> {
    forward_arrays_inner(grid, arrays, Some(mask))
}

fn forward_arrays_inner(grid: &Grid, arrays: &[&[f64]], mask: Option<&[bool]>) -> Vec<Vec<Complex64>> {
    let pairs: Vec<(&[f64], Option<&[f64]>)> = arrays
        .chunks(2)
        .map(|ch| (ch[0], ch.get(1).copied()))
        .collect();
    let out: Vec<(Vec<Complex64>, Option<Vec<Complex64>>)> =
        pairs.par_iter().map(|&(a, b)| forward_pair(grid, a, b, mask)).collect();
    unpair(out, arrays.len())
}

fn unpair<T>(out: Vec<(Vec<T>, Option<Vec<T>>)>, count: usize) -> Vec<Vec<T>> {
    let mut result = Vec::with_capacity(count);
    for (a, b) in out {
        result.push(a);
        if let Some(b) = b {
            result.push(b);
        }
    }
    result
}

/// Physical values of ∂_axis of each spectrum; the derivative is applied
/// while packing, so no intermediate spectra are stored.
pub(crate) fn inverse_derivatives(grid: &Grid, spectra: &[(&[Complex64], usize)]) -> Vec<Vec<f64>> {
    let pairs: Vec<((&[Complex64], usize), Option<(&[Complex64], usize)>)> = spectra
        .chunks(2)
        .map(|ch| (ch[0], ch.get(1).copied()))
        .collect();
    let out: Vec<(Vec<f64>, Option<Vec<f64>>)> = pairs
        .par_iter()
        .map(|&(a, b)| {
            let n = grid.n();
            let kd = grid.derivative_wavenumbers();
            // Wavenumber of flat index p = i + n·(j + n·k) along one axis.
            let k_at = |axis: usize, i: usize, j: usize, k: usize| match axis {
                0 => kd[i],
                1 => kd[j],
                _ => kd[k],
            };
            let mut buf = vec![Complex64::new(0.0, 0.0); a.0.len()];
            let mut p = 0;
            for k in 0..n {
                for j in 0..n {
                    for i in 0..n {
                        let ka = k_at(a.1, i, j, k);
                        let x = a.0[p];
                        buf[p] = match b {
                            // ik_a·a + i·(ik_b·b)
                            Some((b, bx)) => {
                                let kb = k_at(bx, i, j, k);
                                let y = b[p];
                                Complex64::new(-ka * x.im + -(kb * y.re), ka * x.re + -kb * y.im)
                            }
                            None => Complex64::new(-ka * x.im, ka * x.re),
                        };
                        p += 1;
                    }
                }
            }
            fft3_in_place(grid, &mut buf, true);
            match b {
                Some(_) => (
                    buf.iter().map(|z| z.re).collect(),
                    Some(buf.iter().map(|z| z.im).collect()),
                ),
                None => (buf.iter().map(|z| z.re).collect(), None),
            }
        })
        .collect();
    unpair(out, spectra.len())
}

/// Inverse of a batch of Hermitian spectra; symmetry is assumed, not checked.
pub(crate) fn inverse_arrays(grid: &Grid, spectra: &[&[Complex64]]) -> Vec<Vec<f64>> {
    let pairs: Vec<(&[Complex64], Option<&[Complex64]>)> = spectra
        .chunks(2)
        .map(|ch| (ch[0], ch.get(1).copied()))
        .collect();
    let out: Vec<(Vec<f64>, Option<Vec<f64>>)> =
        pairs.par_iter().map(|&(a, b)| inverse_pair(grid, a, b)).collect();
    unpair(out, spectra.len())
}

/// Normalized Fourier coefficients of a real field.
pub fn forward(field: &Field) -> SpectralField {
    let grid = field.grid();
    let arrays: Vec<&[f64]> = field.components().iter().map(|c| c.as_slice()).collect();
    SpectralField::new(grid, forward_arrays(grid, &arrays)).expect("shape preserved")
}

/// Real field from conjugate-symmetric coefficients.
///
/// Fails when the largest symmetry defect exceeds `1e−10` times the largest
/// coefficient magnitude plus an absolute round-off floor of `1e−15`.
pub fn inverse(spec: &SpectralField) -> Result<Field> {
    let defect = spec.symmetry_defect();
    let tolerance = 1e-10 * spec.max_abs() + 1e-15;
    if defect > tolerance {
        return Err(Error::Symmetry { defect, tolerance });
    }
    Ok(inverse_unchecked(spec))
}

pub(crate) fn inverse_unchecked(spec: &SpectralField) -> Field {
    let grid = spec.grid();
    let spectra: Vec<&[Complex64]> = spec.components().iter().map(|c| c.as_slice()).collect();
    Field::new(grid, inverse_arrays(grid, &spectra)).expect("shape preserved")
}

/// Samples of `field` must match the grid; exposed for callers holding raw arrays.
pub fn forward_samples(grid: &Grid, samples: &[f64]) -> Result<SpectralField> {
    if samples.len() != grid.len() {
        return Err(Error::Shape(format!(
            "{} samples for a grid of {} points",
            samples.len(),
            grid.len()
        )));
    }
    Ok(SpectralField::new(grid, forward_arrays(grid, &[samples]))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_field(grid: &Grid, ncomp: usize, seed: u64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let comps = (0..ncomp)
            .map(|_| (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        Field::new(grid, comps).unwrap()
    }

    // Direct O(N²) evaluation of the forward sum.
    fn dft_oracle(grid: &Grid, f: &[f64]) -> Vec<Complex64> {
        let n = grid.n();
        let len = grid.len();
        (0..len)
            .map(|kidx| {
                let m = grid.modes_at(kidx);
                let mut acc = Complex64::new(0.0, 0.0);
                for xidx in 0..len {
                    let [i, j, k] = grid.coords(xidx);
                    let phase = -2.0 * PI
                        * ((m[0] * i as i64 + m[1] * j as i64 + m[2] * k as i64).rem_euclid(n as i64) as f64)
                        / n as f64;
                    acc += f[xidx] * Complex64::from_polar(1.0, phase);
                }
                acc / len as f64
            })
            .collect()
    }

    #[test]
    fn forward_matches_direct_sum() {
        let g = Grid::new(8, 2.5).unwrap();
        let f = random_field(&g, 3, 1);
        let spec = forward(&f);
        for c in 0..3 {
            let oracle = dft_oracle(&g, f.comp(c));
            let err = spec.coeffs(c).iter().zip(&oracle).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(err < 1e-12, "component {c}: {err}");
        }
    }

    #[test]
    fn round_trip_32() {
        let g = Grid::new(32, 1.0).unwrap();
        let f = random_field(&g, 3, 2);
        let back = inverse(&forward(&f)).unwrap();
        assert!(back.max_abs_diff(&f) < 1e-12);
        let s = random_field(&g, 1, 3);
        assert!(inverse(&forward(&s)).unwrap().max_abs_diff(&s) < 1e-12);
    }

    #[test]
    fn sine_has_two_modes() {
        let g = Grid::new(16, 3.0).unwrap();
        let f = Field::from_fn(&g, |x| (2.0 * PI * x[0] / 3.0).sin());
        let s = forward(&f);
        for idx in 0..g.len() {
            let m = g.modes_at(idx);
            let expect = match m {
                [1, 0, 0] => Complex64::new(0.0, -0.5),
                [-1, 0, 0] => Complex64::new(0.0, 0.5),
                _ => Complex64::new(0.0, 0.0),
            };
            assert!((s.coeffs(0)[idx] - expect).norm() < 1e-14, "{m:?}");
        }
    }

    #[test]
    fn constant_maps_to_zero_mode() {
        let g = Grid::new(8, 1.0).unwrap();
        let s = forward(&Field::constant(&g, 2.5));
        assert!((s.coeffs(0)[0] - Complex64::new(2.5, 0.0)).norm() < 1e-15);
        assert!(s.coeffs(0)[1..].iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn single_mode_inverse_sign() {
        let g = Grid::new(8, 2.0).unwrap();
        let mut s = SpectralField::zeros(&g, 1);
        s.set(0, [1, 0, 0], Complex64::new(0.0, 0.5));
        s.set(0, [-1, 0, 0], Complex64::new(0.0, -0.5));
        let f = inverse(&s).unwrap();
        // i/2 e^{iθ} − i/2 e^{−iθ} = −sin θ
        for idx in 0..g.len() {
            let x = g.position(idx);
            assert!((f.comp(0)[idx] + (PI * x[0]).sin()).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_spectrum_inverts_to_zero() {
        let g = Grid::new(8, 1.0).unwrap();
        let f = inverse(&SpectralField::zeros(&g, 3)).unwrap();
        assert_eq!(f.max_norm(), 0.0);
    }

    #[test]
    fn asymmetric_spectrum_rejected() {
        let g = Grid::new(8, 1.0).unwrap();
        let mut s = SpectralField::zeros(&g, 1);
        s.set(0, [1, 2, 0], Complex64::new(1.0, 0.0));
        assert!(matches!(inverse(&s), Err(Error::Symmetry { .. })));
    }

    #[test]
    fn parseval() {
        let g = Grid::new(16, 1.7).unwrap();
        let f = random_field(&g, 3, 4);
        let s = forward(&f);
        let rel = (f.l2_norm_sq() - s.l2_norm_sq()).abs() / f.l2_norm_sq();
        assert!(rel < 1e-12);
    }

    #[test]
    fn shape_mismatch() {
        let g = Grid::new(8, 1.0).unwrap();
        assert!(forward_samples(&g, &[0.0; 10]).is_err());
    }
}
