//! Density from the flow map of `w`.
//!
//! Along a trajectory of `w` the continuity equation reduces to
//! `d/ds ρ = −ρ div w`, so
//!
//! ```text
//! ρ(t, x) = ρ₀(W_t⁻¹(x)) · exp(−∫₀ᵗ (div w)(s, W_s(W_t⁻¹(x))) ds).
//! ```
//!
//! Characteristics are traced backward with the midpoint rule, one step per
//! history interval. Velocity and divergence are sampled by 4-point Lagrange
//! interpolation per axis and linearly in time.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::spectral::{self, Field, Grid};
use crate::state::FluidState;

/// Snapshots of `w` (and its spectral divergence) at uniformly spaced times.
#[derive(Clone, Debug)]
pub struct VelocityHistory {
    grid: Grid,
    times: Vec<f64>,
    /// Per snapshot, `[w₀, w₁, w₂, div w]` at every grid point.
    samples: Vec<Vec<[f64; 4]>>,
}

/// Foot point of a backward characteristic and the divergence integral along it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Trace {
    pub foot: [f64; 3],
    /// ∫ (div w)(s, X(s)) ds over the traced interval.
    pub div_integral: f64,
}

impl VelocityHistory {
    pub fn new(grid: &Grid) -> Self {
        VelocityHistory {
            grid: grid.clone(),
            times: Vec::new(),
            samples: Vec::new(),
        }
    }

    /// Builds a history from solver snapshots (e.g. [`crate::solver::RunOutput::snapshots`]).
    pub fn from_states(states: &[FluidState]) -> Result<Self> {
        let first = states
            .first()
            .ok_or_else(|| Error::History("no snapshots".into()))?;
        let mut h = VelocityHistory::new(first.grid());
        for s in states {
            h.push(s.time(), s.w())?;
        }
        Ok(h)
    }

    /// Appends a snapshot; times must increase with constant spacing.
    pub fn push(&mut self, time: f64, w: &Field) -> Result<()> {
        if w.grid() != &self.grid || w.ncomp() != 3 {
            return Err(Error::Shape("history snapshot must be a vector field on the history grid".into()));
        }
        if !time.is_finite() {
            return Err(Error::History(format!("non-finite time {time}")));
        }
        if let Some(&last) = self.times.last() {
            if time <= last {
                return Err(Error::History(format!("time {time} does not follow {last}")));
            }
            if self.times.len() >= 2 {
                let spacing = self.times[1] - self.times[0];
                if ((time - last) - spacing).abs() > 1e-6 * spacing {
                    return Err(Error::History(format!(
                        "spacing {} differs from {spacing}",
                        time - last
                    )));
                }
            }
        }
        let div = spectral::inverse_unchecked(&spectral::divergence(&spectral::forward(w))?);
        let (w0, w1, w2, d) = (w.comp(0), w.comp(1), w.comp(2), div.comp(0));
        let packed = (0..self.grid.len()).map(|p| [w0[p], w1[p], w2[p], d[p]]).collect();
        self.times.push(time);
        self.samples.push(packed);
        Ok(())
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Snapshot spacing; zero for fewer than two snapshots.
    pub fn spacing(&self) -> f64 {
        if self.times.len() < 2 {
            0.0
        } else {
            self.times[1] - self.times[0]
        }
    }

    fn check_time(&self, t: f64) -> Result<()> {
        let (Some(&lo), Some(&hi)) = (self.times.first(), self.times.last()) else {
            return Err(Error::History("empty history".into()));
        };
        let slack = 1e-9 * (hi - lo).max(1.0);
        if !(t >= lo - slack && t <= hi + slack) {
            return Err(Error::History(format!("time {t} outside [{lo}, {hi}]")));
        }
        Ok(())
    }

    /// `[w, div w]` at time `t` and point `x`.
    pub fn sample(&self, t: f64, x: [f64; 3]) -> Result<[f64; 4]> {
        self.check_time(t)?;
        Ok(self.sample_unchecked(t, x))
    }

    fn sample_unchecked(&self, t: f64, x: [f64; 3]) -> [f64; 4] {
        let last = self.times.len() - 1;
        if last == 0 {
            return interpolate(&self.grid, &self.samples[0], x);
        }
        let s = ((t - self.times[0]) / self.spacing()).clamp(0.0, last as f64);
        let i = (s.floor() as usize).min(last - 1);
        let theta = s - i as f64;
        let a = interpolate(&self.grid, &self.samples[i], x);
        if theta == 0.0 {
            return a;
        }
        let b = interpolate(&self.grid, &self.samples[i + 1], x);
        [0, 1, 2, 3].map(|c| (1.0 - theta) * a[c] + theta * b[c])
    }
}

/// 4-point Lagrange weights for nodes −1, 0, 1, 2 at offset `f ∈ [0, 1)`.
fn cubic_weights(f: f64) -> [f64; 4] {
    [
        -f * (f - 1.0) * (f - 2.0) / 6.0,
        (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0,
        -(f + 1.0) * f * (f - 2.0) / 2.0,
        (f + 1.0) * f * (f - 1.0) / 6.0,
    ]
}

/// Base index (node −1) and weights along one axis, periodic.
fn stencil(x: f64, h: f64, n: usize) -> ([usize; 4], [f64; 4]) {
    let s = x / h;
    let fl = s.floor();
    let f = s - fl;
    let base = (fl as i64 - 1).rem_euclid(n as i64) as usize;
    ([0, 1, 2, 3].map(|o| (base + o) % n), cubic_weights(f))
}

fn interpolate(grid: &Grid, data: &[[f64; 4]], x: [f64; 3]) -> [f64; 4] {
    let n = grid.n();
    let h = grid.spacing();
    let (ix, wx) = stencil(x[0], h, n);
    let (iy, wy) = stencil(x[1], h, n);
    let (iz, wz) = stencil(x[2], h, n);
    let mut out = [0.0; 4];
    for (c, &k) in iz.iter().enumerate() {
        for (b, &j) in iy.iter().enumerate() {
            let row = n * (j + n * k);
            let wyz = wy[b] * wz[c];
            let mut acc = [0.0; 4];
            for (a, &i) in ix.iter().enumerate() {
                let v = &data[row + i];
                for q in 0..4 {
                    acc[q] += wx[a] * v[q];
                }
            }
            for q in 0..4 {
                out[q] += wyz * acc[q];
            }
        }
    }
    out
}

/// Cubic interpolation of a scalar clipped to the range of its 64-point
/// stencil, so nonnegative data interpolates to nonnegative values.
fn interpolate_clipped(grid: &Grid, data: &[f64], x: [f64; 3]) -> f64 {
    let n = grid.n();
    let h = grid.spacing();
    let (ix, wx) = stencil(x[0], h, n);
    let (iy, wy) = stencil(x[1], h, n);
    let (iz, wz) = stencil(x[2], h, n);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut out = 0.0;
    for (c, &k) in iz.iter().enumerate() {
        for (b, &j) in iy.iter().enumerate() {
            let row = n * (j + n * k);
            let mut acc = 0.0;
            for (a, &i) in ix.iter().enumerate() {
                let v = data[row + i];
                lo = lo.min(v);
                hi = hi.max(v);
                acc += wx[a] * v;
            }
            out += wy[b] * wz[c] * acc;
        }
    }
    out.clamp(lo, hi)
}

fn wrap(x: f64, l: f64) -> f64 {
    let y = x.rem_euclid(l);
    if y >= l {
        0.0
    } else {
        y
    }
}

/// Traces the characteristic through `x` at time `t` back to the first snapshot.
pub fn trace_characteristic(x: [f64; 3], history: &VelocityHistory, t: f64) -> Result<Trace> {
    let t0 = *history
        .times
        .first()
        .ok_or_else(|| Error::History("empty history".into()))?;
    trace_between(x, history, t, t0)
}

/// Traces the characteristic through `x` at `t_from` back to `t_to ≤ t_from`.
///
/// The interval is cut into equal steps no longer than the snapshot spacing,
/// so tracing through an intermediate snapshot time composes exactly.
pub fn trace_between(x: [f64; 3], history: &VelocityHistory, t_from: f64, t_to: f64) -> Result<Trace> {
    history.check_time(t_from)?;
    history.check_time(t_to)?;
    if t_to > t_from {
        return Err(Error::History(format!("cannot trace forward from {t_from} to {t_to}")));
    }
    Ok(trace_unchecked(x, history, t_from, t_to))
}

fn trace_unchecked(x: [f64; 3], history: &VelocityHistory, t_from: f64, t_to: f64) -> Trace {
    let l = history.grid.box_len();
    let span = t_from - t_to;
    let spacing = history.spacing();
    let steps = if span <= 0.0 {
        0
    } else if spacing > 0.0 {
        ((span / spacing) - 1e-9).ceil().max(1.0) as usize
    } else {
        1
    };
    let mut pos = x.map(|c| wrap(c, l));
    let mut integral = 0.0;
    if steps > 0 {
        let dt = span / steps as f64;
        for s in 0..steps {
            let t = t_from - s as f64 * dt;
            let v = history.sample_unchecked(t, pos);
            let mid = [0, 1, 2].map(|c| wrap(pos[c] - 0.5 * dt * v[c], l));
            let vm = history.sample_unchecked(t - 0.5 * dt, mid);
            pos = [0, 1, 2].map(|c| wrap(pos[c] - dt * vm[c], l));
            integral += dt * vm[3];
        }
    }
    Trace {
        foot: pos,
        div_integral: integral,
    }
}

/// ρ at time `t` on the grid from ρ₀ (given at the first snapshot) and the flow of `w`.
pub fn density_from_flow(rho0: &Field, history: &VelocityHistory, t: f64) -> Result<Field> {
    if rho0.grid() != &history.grid || !rho0.is_scalar() {
        return Err(Error::Shape("ρ₀ must be a scalar field on the history grid".into()));
    }
    let t0 = *history
        .times
        .first()
        .ok_or_else(|| Error::History("empty history".into()))?;
    history.check_time(t)?;
    let g = &history.grid;
    let data = rho0.comp(0);
    let values: Vec<f64> = (0..g.len())
        .into_par_iter()
        .map(|p| {
            let tr = trace_unchecked(g.position(p), history, t, t0);
            interpolate_clipped(g, data, tr.foot) * (-tr.div_integral).exp()
        })
        .collect();
    Field::scalar(g, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn steady(grid: &Grid, w: impl Fn([f64; 3]) -> [f64; 3] + Copy, t_end: f64, count: usize) -> VelocityHistory {
        let mut h = VelocityHistory::new(grid);
        let f = Field::vector_from_fn(grid, w);
        for i in 0..count {
            h.push(t_end * i as f64 / (count - 1) as f64, &f).unwrap();
        }
        h
    }

    #[test]
    fn cubic_interpolation_is_exact_on_cubics() {
        let g = Grid::new(16, 16.0).unwrap();
        let f = |x: [f64; 3]| 0.5 + x[0] - 0.1 * x[1] * x[1] + 0.01 * x[2].powi(3);
        let data: Vec<[f64; 4]> = (0..g.len()).map(|p| [f(g.position(p)); 4]).collect();
        let x = [5.3, 7.7, 6.1];
        let v = interpolate(&g, &data, x);
        assert!((v[0] - f(x)).abs() < 1e-10);
    }

    #[test]
    fn zero_velocity_keeps_points_and_density() {
        let g = Grid::new(8, 2.0 * PI).unwrap();
        let h = steady(&g, |_| [0.0; 3], 1.0, 5);
        let x = [1.0, 2.0, 3.0];
        let tr = trace_characteristic(x, &h, 1.0).unwrap();
        assert_eq!(tr.foot, x);
        assert_eq!(tr.div_integral, 0.0);
        let rho0 = Field::from_fn(&g, |x| 1.0 + 0.5 * x[0].sin());
        assert!(density_from_flow(&rho0, &h, 1.0).unwrap().bit_eq(&rho0));
    }

    #[test]
    fn uniform_translation() {
        let g = Grid::new(8, 2.0 * PI).unwrap();
        let c = 0.7;
        let h = steady(&g, |_| [c, 0.0, 0.0], 2.0, 11);
        let tr = trace_characteristic([0.5, 1.0, 1.5], &h, 2.0).unwrap();
        let expect = (0.5 - 2.0 * c).rem_euclid(2.0 * PI);
        assert!((tr.foot[0] - expect).abs() < 1e-12);
        assert!((tr.foot[1] - 1.0).abs() < 1e-12 && (tr.foot[2] - 1.5).abs() < 1e-12);
        assert!(tr.div_integral.abs() < 1e-12);
    }

    #[test]
    fn out_of_range_time_rejected() {
        let g = Grid::new(8, 2.0 * PI).unwrap();
        let h = steady(&g, |_| [0.0; 3], 1.0, 3);
        assert!(trace_characteristic([0.0; 3], &h, 1.5).is_err());
        assert!(trace_between([0.0; 3], &h, 0.2, 0.5).is_err());
        assert!(trace_characteristic([0.0; 3], &VelocityHistory::new(&g), 0.0).is_err());
    }

    #[test]
    fn uneven_spacing_rejected() {
        let g = Grid::new(8, 2.0 * PI).unwrap();
        let f = Field::zeros(&g, 3);
        let mut h = VelocityHistory::new(&g);
        h.push(0.0, &f).unwrap();
        h.push(0.1, &f).unwrap();
        assert!(h.push(0.3, &f).is_err());
        assert!(h.push(0.1, &f).is_err());
    }

    #[test]
    fn clipping_keeps_sign() {
        let g = Grid::new(8, 8.0).unwrap();
        // A spike next to zeros makes the plain cubic undershoot.
        let data: Vec<f64> = (0..g.len()).map(|p| if p == g.index(4, 4, 4) { 1.0 } else { 0.0 }).collect();
        let v = interpolate_clipped(&g, &data, [2.5, 4.0, 4.0]);
        assert!(v >= 0.0);
    }
}
