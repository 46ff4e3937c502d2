use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Cubic periodic box `[0, L)³` sampled at `n` points per axis.
///
/// Flat arrays are stored x-fastest: `idx = i + n·(j + n·k)`. Array index `i`
/// carries the integer mode `m = i` for `i < n/2` and `m = i − n` otherwise,
/// so the Nyquist index `n/2` is the mode `−n/2`.
///
/// Cloning is cheap; the wavenumber tables and FFT plans are shared.
#[derive(Clone)]
pub struct Grid {
    inner: Arc<GridInner>,
}

struct GridInner {
    n: usize,
    box_len: f64,
    wavenumbers: Vec<f64>,
    deriv_wavenumbers: Vec<f64>,
    k_sq: Vec<f64>,
    mode_sq: Vec<u32>,
    inv_deriv_k_sq: Vec<f64>,
    mirror: Vec<u32>,
    fft_fwd: Arc<dyn Fft<f64>>,
    fft_inv: Arc<dyn Fft<f64>>,
}

impl Grid {
    /// `n` must be a multiple of 4 and at least 8. Powers of two are fastest.
    pub fn new(n: usize, box_len: f64) -> Result<Self> {
        if n < 8 || n % 4 != 0 {
            return Err(Error::InvalidGrid(format!(
                "n = {n}: need a multiple of 4 points per axis, at least 8"
            )));
        }
        if n > 1024 {
            return Err(Error::InvalidGrid(format!("n = {n} exceeds 1024")));
        }
        if !(box_len.is_finite() && box_len > 0.0) {
            return Err(Error::InvalidGrid(format!("box length {box_len} must be positive")));
        }

        let k0 = 2.0 * PI / box_len;
        let modes: Vec<i64> = (0..n).map(|i| mode_of(i, n)).collect();
        let wavenumbers: Vec<f64> = modes.iter().map(|&m| k0 * m as f64).collect();
        // The Nyquist column has no conjugate partner, so odd-order derivatives
        // drop it to keep real fields real.
        let mut deriv_wavenumbers = wavenumbers.clone();
        deriv_wavenumbers[n / 2] = 0.0;

        let len = n * n * n;
        let mut k_sq = Vec::with_capacity(len);
        let mut mode_sq = Vec::with_capacity(len);
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    k_sq.push(
                        wavenumbers[i] * wavenumbers[i]
                            + wavenumbers[j] * wavenumbers[j]
                            + wavenumbers[k] * wavenumbers[k],
                    );
                    mode_sq.push((modes[i] * modes[i] + modes[j] * modes[j] + modes[k] * modes[k]) as u32);
                }
            }
        }

        let mut inv_deriv_k_sq = Vec::with_capacity(len);
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let d = &deriv_wavenumbers;
                    let k2 = d[i] * d[i] + d[j] * d[j] + d[k] * d[k];
                    inv_deriv_k_sq.push(if k2 > 0.0 { 1.0 / k2 } else { 0.0 });
                }
            }
        }

        let mut mirror = Vec::with_capacity(len);
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    mirror.push(((n - i) % n + n * ((n - j) % n + n * ((n - k) % n))) as u32);
                }
            }
        }

        let mut planner = FftPlanner::new();
        let fft_fwd = planner.plan_fft_forward(n);
        let fft_inv = planner.plan_fft_inverse(n);

        Ok(Grid {
            inner: Arc::new(GridInner {
                n,
                box_len,
                wavenumbers,
                deriv_wavenumbers,
                k_sq,
                mode_sq,
                inv_deriv_k_sq,
                mirror,
                fft_fwd,
                fft_inv,
            }),
        })
    }

    pub fn n(&self) -> usize {
        self.inner.n
    }

    pub fn box_len(&self) -> f64 {
        self.inner.box_len
    }

    /// Grid spacing h = L/n.
    pub fn spacing(&self) -> f64 {
        self.inner.box_len / self.inner.n as f64
    }

    /// Number of samples per component, n³.
    pub fn len(&self) -> usize {
        self.inner.n * self.inner.n * self.inner.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(3)
    }

    pub fn volume(&self) -> f64 {
        self.inner.box_len.powi(3)
    }

    /// Per-axis wavenumbers 2πm/L, indexed by array position.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.inner.wavenumbers
    }

    /// Same as [`Grid::wavenumbers`] with the Nyquist entry zeroed; used by
    /// gradient, divergence, Leray projection and pressure.
    pub fn derivative_wavenumbers(&self) -> &[f64] {
        &self.inner.deriv_wavenumbers
    }

    /// |k|² at every flat index (Nyquist included).
    pub fn k_sq(&self) -> &[f64] {
        &self.inner.k_sq
    }

    /// 1/|k'|² with the derivative wavenumbers, 0 where |k'| = 0.
    pub(crate) fn inv_deriv_k_sq(&self) -> &[f64] {
        &self.inner.inv_deriv_k_sq
    }

    /// |m|² in integer modes at every flat index.
    pub fn mode_sq(&self) -> &[u32] {
        &self.inner.mode_sq
    }

    pub fn mode(&self, i: usize) -> i64 {
        mode_of(i, self.inner.n)
    }

    /// Array position of an integer mode (taken modulo n).
    pub fn position_of_mode(&self, m: i64) -> usize {
        m.rem_euclid(self.inner.n as i64) as usize
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        let n = self.inner.n;
        i + n * (j + n * k)
    }

    /// Flat index of the mode triple `m`.
    pub fn mode_index(&self, m: [i64; 3]) -> usize {
        self.index(
            self.position_of_mode(m[0]),
            self.position_of_mode(m[1]),
            self.position_of_mode(m[2]),
        )
    }

    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let n = self.inner.n;
        [idx % n, (idx / n) % n, idx / (n * n)]
    }

    pub fn modes_at(&self, idx: usize) -> [i64; 3] {
        let [i, j, k] = self.coords(idx);
        [self.mode(i), self.mode(j), self.mode(k)]
    }

    /// Physical position of a sample point.
    pub fn position(&self, idx: usize) -> [f64; 3] {
        let h = self.spacing();
        let [i, j, k] = self.coords(idx);
        [i as f64 * h, j as f64 * h, k as f64 * h]
    }

    /// Flat index of the mode −m.
    pub fn mirror(&self, idx: usize) -> usize {
        self.inner.mirror[idx] as usize
    }

    pub(crate) fn mirror_table(&self) -> &[u32] {
        &self.inner.mirror
    }

    /// Largest retained |m_j| under the two-thirds rule: the largest K with 3K < n.
    pub fn dealias_limit(&self) -> i64 {
        (self.inner.n as i64 - 1) / 3
    }

    /// Time scale below which heat-flow quantities are not resolved, h².
    pub fn min_resolved_time(&self) -> f64 {
        self.spacing().powi(2)
    }

    pub(crate) fn fft_forward(&self) -> &Arc<dyn Fft<f64>> {
        &self.inner.fft_fwd
    }

    pub(crate) fn fft_inverse(&self) -> &Arc<dyn Fft<f64>> {
        &self.inner.fft_inv
    }
}

fn mode_of(i: usize, n: usize) -> i64 {
    if i < n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
            || (self.inner.n == other.inner.n && self.inner.box_len.to_bits() == other.inner.box_len.to_bits())
    }
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("n", &self.inner.n)
            .field("box_len", &self.inner.box_len)
            .finish()
    }
}
