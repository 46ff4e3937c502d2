//! Drivers for the quantitative checks: decay fits, ledger monitoring,
//! twin-run stability, long-time density behavior and the inequality sweep.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::functionals::{self, check_inequality, EnergyLedger, InequalityId};
use crate::solver::{PointDiagnostics, StepScheme, Stepper};
use crate::spectral::{self, Field, Grid, SpectralField};
use crate::state::{make_initial, random_bandlimited, FluidState, RunConfig};

/// Fit of `E(t) = c·(1 + a t)^{−β}` over a window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayFit {
    pub a: f64,
    pub beta: f64,
    /// Fitted prefactor c.
    pub amplitude: f64,
    pub t_lo: f64,
    pub t_hi: f64,
    /// Largest relative deviation of the model from the data in the window.
    pub residual: f64,
    pub points: usize,
}

/// Intercept and slope of the least-squares line through `(x, y)`, and the
/// sum of squared errors.
fn line_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let sse = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    (intercept, slope, sse)
}

/// Least squares of `log E` against `log(1 + a t)`: a one-dimensional search
/// over `a` (log-spaced scan, then golden section) with the slope and
/// intercept solved in closed form for each `a`.
pub fn decay_fit(series: &[(f64, f64)], window: (f64, f64)) -> Result<DecayFit> {
    let (lo, hi) = window;
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() || lo < 0.0 {
        return Err(Error::Fit(format!("invalid window [{lo}, {hi}]")));
    }
    let pts: Vec<(f64, f64)> = series.iter().copied().filter(|&(t, _)| t >= lo && t <= hi).collect();
    if pts.len() < 20 {
        return Err(Error::Fit(format!("{} points in window [{lo}, {hi}], need at least 20", pts.len())));
    }
    if let Some(&(t, v)) = pts.iter().find(|&&(_, v)| !(v > 0.0 && v.is_finite())) {
        return Err(Error::Fit(format!("nonpositive value {v} at t = {t}")));
    }
    let t: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let eval = |log_a: f64| {
        let a = log_a.exp();
        let x: Vec<f64> = t.iter().map(|&s| (a * s).ln_1p()).collect();
        line_fit(&x, &y)
    };

    let (min_la, max_la) = ((1e-6f64).ln(), (1e6f64).ln());
    let scan = 241;
    let mut best = (min_la, f64::INFINITY);
    for i in 0..scan {
        let la = min_la + (max_la - min_la) * i as f64 / (scan - 1) as f64;
        let sse = eval(la).2;
        if sse < best.1 {
            best = (la, sse);
        }
    }
    let step = (max_la - min_la) / (scan - 1) as f64;
    let (mut a0, mut b0) = ((best.0 - step).max(min_la), (best.0 + step).min(max_la));
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b0 - phi * (b0 - a0);
    let mut d = a0 + phi * (b0 - a0);
    let (mut fc, mut fd) = (eval(c).2, eval(d).2);
    for _ in 0..200 {
        if (b0 - a0).abs() < 1e-13 {
            break;
        }
        if fc < fd {
            b0 = d;
            d = c;
            fd = fc;
            c = b0 - phi * (b0 - a0);
            fc = eval(c).2;
        } else {
            a0 = c;
            c = d;
            fc = fd;
            d = a0 + phi * (b0 - a0);
            fd = eval(d).2;
        }
    }
    let la = 0.5 * (a0 + b0);
    let la = if eval(la).2 <= best.1 { la } else { best.0 };
    let (intercept, slope, _) = eval(la);
    let a = la.exp();
    let amplitude = intercept.exp();
    let beta = -slope;
    let residual = pts
        .iter()
        .map(|&(s, v)| (amplitude * (1.0 + a * s).powf(-beta) - v).abs() / v)
        .fold(0.0, f64::max);
    Ok(DecayFit {
        a,
        beta,
        amplitude,
        t_lo: lo,
        t_hi: hi,
        residual,
        points: pts.len(),
    })
}

/// `(t, ‖e^{tΔ}z‖²_{L²})` for each `t`, computed exactly per mode.
pub fn heat_decay_series(z: &SpectralField, times: &[f64]) -> Result<Vec<(f64, f64)>> {
    let g = z.grid();
    let ksq = g.k_sq();
    let vol = g.volume();
    times
        .iter()
        .map(|&t| {
            if !(t >= 0.0) {
                return Err(Error::InvalidArgument(format!("time {t} must be nonnegative")));
            }
            let s: f64 = z
                .components()
                .iter()
                .map(|c| c.iter().zip(ksq).map(|(v, k2)| v.norm_sqr() * (-2.0 * k2 * t).exp()).sum::<f64>())
                .sum();
            Ok((t, vol * s))
        })
        .collect()
}

/// `count` log-spaced times in `[lo, hi]`.
pub fn log_times(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count < 2 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect()
}

/// One ledger row as seen by the monitor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonitorRow {
    pub t: f64,
    /// E₀(t) + ∫₀ᵗD₀ − E₀(0).
    pub energy_residual: f64,
    /// Bound on ‖w‖_∞ minus the measured value.
    pub w_slack: f64,
    pub rho_sup: f64,
    pub int_grad_u_inf: f64,
    pub int_grad_w_inf: f64,
    /// (dE₁/dt + D₁) over (‖√ρ w‖²_∞ + ‖u‖²_∞)‖∇u‖².
    pub h1b_ratio: f64,
    /// (dE₁/dt + D̃₁) over the same factor plus R⁻¹‖∇u‖⁶ (unit constant).
    pub h1e_ratio: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonitorReport {
    pub rows: Vec<MonitorRow>,
    pub w0_inf: f64,
    pub max_abs_energy_residual: f64,
    pub min_w_slack: f64,
    /// Minimum slack ≥ −1e−3·‖w₀‖_∞.
    pub w_bound_holds: bool,
    /// Every finite-difference ratio is finite.
    pub ratios_bounded: bool,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else if num.abs() <= 1e-300 {
        0.0
    } else {
        f64::INFINITY * num.signum()
    }
}

/// Checks a completed run's ledger against the energy balance and the
/// maximum-principle bound on `w`, and reports the constant-bearing
/// inequality ratios as data.
pub fn monitor(ledger: &EnergyLedger) -> MonitorReport {
    let rows = ledger.rows();
    let Some(first) = rows.first() else {
        return MonitorReport {
            rows: Vec::new(),
            w0_inf: 0.0,
            max_abs_energy_residual: 0.0,
            min_w_slack: 0.0,
            w_bound_holds: true,
            ratios_bounded: true,
        };
    };
    let r = (2.0 * first.rho_inf).max(1.0);
    let w0_inf = first.w_inf;
    let mut out = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let de1 = if rows.len() < 2 {
            0.0
        } else if i == 0 {
            (rows[1].e1 - rows[0].e1) / (rows[1].t - rows[0].t)
        } else if i + 1 == rows.len() {
            (rows[i].e1 - rows[i - 1].e1) / (rows[i].t - rows[i - 1].t)
        } else {
            (rows[i + 1].e1 - rows[i - 1].e1) / (rows[i + 1].t - rows[i - 1].t)
        };
        let factor = (row.rho_inf * row.w_inf * row.w_inf + row.u_inf * row.u_inf) * row.grad_u_sq;
        out.push(MonitorRow {
            t: row.t,
            energy_residual: row.e0 + row.int_d0 - first.e0,
            w_slack: row.w_bound - row.w_inf,
            rho_sup: row.rho_inf,
            int_grad_u_inf: row.int_grad_u_inf,
            int_grad_w_inf: row.int_grad_w_inf,
            h1b_ratio: ratio(de1 + row.d1, factor),
            h1e_ratio: ratio(de1 + row.d1_tilde, factor + row.grad_u_sq.powi(3) / r),
        });
    }
    let max_abs_energy_residual = out.iter().map(|m| m.energy_residual.abs()).fold(0.0, f64::max);
    let min_w_slack = out.iter().map(|m| m.w_slack).fold(f64::INFINITY, f64::min);
    MonitorReport {
        w_bound_holds: min_w_slack >= -1e-3 * w0_inf,
        ratios_bounded: out.iter().all(|m| m.h1b_ratio.is_finite() && m.h1e_ratio.is_finite()),
        rows: out,
        w0_inf,
        max_abs_energy_residual,
        min_w_slack,
    }
}

/// Which initial field a twin run perturbs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PerturbTarget {
    /// Divergence-free perturbation of u.
    Velocity,
    /// Mean-free perturbation of ρ.
    Density,
    /// Perturbation of w.
    Particle,
}

/// Band-limited random perturbation with sup norm `epsilon`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Perturbation {
    pub target: PerturbTarget,
    pub epsilon: f64,
    pub seed: u64,
    pub band: i64,
}

impl Perturbation {
    pub fn new(target: PerturbTarget, epsilon: f64) -> Self {
        Perturbation {
            target,
            epsilon,
            seed: 1,
            band: 2,
        }
    }

    pub fn apply(&self, state: &FluidState) -> Result<FluidState> {
        let g = state.grid();
        if self.band < 1 || self.band > g.dealias_limit() {
            return Err(Error::InvalidArgument(format!("perturbation band {} out of range", self.band)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let unit = |f: Field| -> Field {
            let m = f.max_norm();
            if m > 0.0 {
                f.scaled(self.epsilon / m)
            } else {
                f
            }
        };
        let (mut rho, mut w, mut u) = (state.rho().clone(), state.w().clone(), state.u().clone());
        match self.target {
            PerturbTarget::Velocity => {
                let v = random_bandlimited(g, 3, self.band, &mut rng);
                let p = spectral::inverse_unchecked(&spectral::leray_project(&spectral::forward(&v))?);
                u = u.add(&unit(p))?;
            }
            PerturbTarget::Density => {
                rho = rho.add(&unit(random_bandlimited(g, 1, self.band, &mut rng)))?;
            }
            PerturbTarget::Particle => {
                w = w.add(&unit(random_bandlimited(g, 3, self.band, &mut rng)))?;
            }
        }
        FluidState::new(state.time(), rho, w, u)
    }
}

/// Differences between perturbed (2) and base (1) solutions at one time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StabilitySample {
    pub t: f64,
    /// ‖√ρ₂ δw‖² + ‖δu‖².
    pub delta_e: f64,
    /// ‖∇δu‖² + ‖√ρ₂(δw − δu)‖².
    pub delta_d: f64,
    pub delta_rho_hm1: f64,
    /// 3(‖∇w₁‖_∞ + ‖∇u₁‖_∞)δE + (‖w₁−u₁‖²_∞ + ‖∇(w₁−u₁)‖_∞)‖δρ‖²_{Ḣ⁻¹}.
    pub rhs: f64,
}

/// The stability inequality between consecutive samples: difference quotient
/// of δE plus the mean of δD, against the mean right-hand side.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntervalCheck {
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// lhs − rhs; the inequality asks for ≤ 0.
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityReport {
    pub perturbation: Perturbation,
    pub samples: Vec<StabilitySample>,
    pub checks: Vec<IntervalCheck>,
}

impl StabilityReport {
    pub fn sup_delta_e(&self) -> f64 {
        self.samples.iter().map(|s| s.delta_e).fold(0.0, f64::max)
    }

    /// Largest positive residual as a fraction of |rhs| (0 when the
    /// inequality holds everywhere).
    pub fn worst_violation(&self) -> f64 {
        self.checks
            .iter()
            .map(|c| {
                if c.residual <= 0.0 {
                    0.0
                } else if c.rhs.abs() > 0.0 {
                    c.residual / c.rhs.abs()
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max)
    }
}

fn stability_sample(base: &FluidState, diag: &PointDiagnostics, other: &FluidState) -> Result<StabilitySample> {
    let g = base.grid();
    let drho = other.rho_hat().sub(base.rho_hat())?;
    let dw = other.w().sub(base.w())?;
    let du = other.u().sub(base.u())?;
    let du_hat = other.u_hat().sub(base.u_hat())?;
    let rho2 = other.rho().comp(0);
    let cell = g.cell_volume();
    let (mut we, mut rel) = (0.0, 0.0);
    for p in 0..g.len() {
        let r = rho2[p].max(0.0);
        let mut a = 0.0;
        let mut b = 0.0;
        for i in 0..3 {
            let x = dw.comp(i)[p];
            let y = x - du.comp(i)[p];
            a += x * x;
            b += y * y;
        }
        we += r * a;
        rel += r * b;
    }
    let delta_e = cell * we + du.l2_norm_sq();
    let delta_d = spectral::gradient_energy(g, du_hat.components()) + cell * rel;
    let hm1 = functionals::sobolev_neg1_norm_spec(&drho);
    let rhs = 3.0 * (diag.grad_w_inf + diag.grad_u_inf) * delta_e
        + (diag.rel_inf * diag.rel_inf + diag.grad_rel_inf) * hm1 * hm1;
    Ok(StabilitySample {
        t: base.time(),
        delta_e,
        delta_d,
        delta_rho_hm1: hm1,
        rhs,
    })
}

/// Evolves the base solution of `config` together with one perturbed copy
/// per entry of `perturbations`, in lockstep, sampling every `cadence` steps.
pub fn twin_runs(config: &RunConfig, perturbations: &[Perturbation]) -> Result<Vec<StabilityReport>> {
    config.validate()?;
    let grid = config.grid()?;
    let base0 = make_initial(&config.init, &grid)?;
    let mut states = vec![base0.clone()];
    for p in perturbations {
        states.push(p.apply(&base0)?);
    }
    let scheme = StepScheme::new(config.scheme, config.order, config.integrating_factor)?;
    let stepper = Stepper::new(
        &grid,
        scheme,
        config.dt,
        config.cfl,
        config.rho_floor * base0.rho().max_value(),
        functionals::r_constant(base0.rho()),
    )?;
    let steps = config.steps()?;
    let mut samples: Vec<Vec<StabilitySample>> = vec![Vec::new(); perturbations.len()];
    let mut record = |states: &[FluidState], diag: &PointDiagnostics| -> Result<()> {
        for (k, s) in states[1..].iter().enumerate() {
            samples[k].push(stability_sample(&states[0], diag, s)?);
        }
        Ok(())
    };
    for step in 0..steps {
        let stepped: Vec<Result<(FluidState, PointDiagnostics)>> = states.par_iter().map(|s| stepper.step(s)).collect();
        let mut next = Vec::with_capacity(states.len());
        let mut base_diag = None;
        for (k, r) in stepped.into_iter().enumerate() {
            let (s, d) = r?;
            if k == 0 {
                base_diag = Some(d);
            }
            next.push(s);
        }
        if step % config.cadence == 0 {
            record(&states, &base_diag.expect("base stepped"))?;
        }
        states = next;
    }
    let diag = stepper.diagnostics(&states[0])?;
    record(&states, &diag)?;

    Ok(perturbations
        .iter()
        .zip(samples)
        .map(|(p, samples)| {
            let checks = samples
                .windows(2)
                .map(|w| {
                    let h = w[1].t - w[0].t;
                    let lhs = (w[1].delta_e - w[0].delta_e) / h + 0.5 * (w[0].delta_d + w[1].delta_d);
                    let rhs = 0.5 * (w[0].rhs + w[1].rhs);
                    IntervalCheck {
                        t: 0.5 * (w[0].t + w[1].t),
                        lhs,
                        rhs,
                        residual: lhs - rhs,
                    }
                })
                .collect();
            StabilityReport {
                perturbation: *p,
                samples,
                checks,
            }
        })
        .collect())
}

/// Single twin run.
pub fn twin_run(config: &RunConfig, perturbation: &Perturbation) -> Result<StabilityReport> {
    Ok(twin_runs(config, std::slice::from_ref(perturbation))?.remove(0))
}

/// Long-time density analysis of a trajectory.
#[derive(Clone, Debug)]
pub struct DensityLongtime {
    /// Final snapshot, used as the estimate of ρ_∞.
    pub rho_inf: Field,
    /// `(t, ‖ρ(t) − ρ_∞‖_{Ḣ⁻¹})`.
    pub distance: Vec<(f64, f64)>,
    /// `(t, ∫_t^{t_end} ‖ρw‖_{L¹})`, trapezoid over the snapshots.
    pub tail_flux: Vec<(f64, f64)>,
    /// ‖ρ(t_end) − ρ(t_end/2)‖ < 0.1·‖ρ(t_end/2) − ρ₀‖ (Ḣ⁻¹).
    pub converged: bool,
    /// Distance series nonincreasing on `window`.
    pub monotone: bool,
    pub window: (f64, f64),
    /// Log-log slope of the distance on `window`, when it has at least
    /// three positive points.
    pub rate: Option<f64>,
}

/// ρ_∞ estimate and convergence series from snapshots ordered in time;
/// monotonicity is scanned on `[t_lo, min(t_end/2, t_hi)]`.
pub fn density_longtime(snapshots: &[FluidState], t_lo: f64, t_hi: f64) -> Result<DensityLongtime> {
    let last = snapshots.last().ok_or_else(|| Error::History("no snapshots".into()))?;
    if snapshots.windows(2).any(|w| w[1].time() <= w[0].time()) {
        return Err(Error::History("snapshot times must increase".into()));
    }
    let t_end = last.time();
    let rho_inf_hat = last.rho_hat();
    let dist = |s: &FluidState| -> Result<f64> { Ok(functionals::sobolev_neg1_norm_spec(&s.rho_hat().sub(rho_inf_hat)?)) };
    let distance: Vec<(f64, f64)> = snapshots.iter().map(|s| Ok((s.time(), dist(s)?))).collect::<Result<_>>()?;

    let flux: Vec<f64> = snapshots
        .iter()
        .map(|s| {
            let g = s.grid();
            let rho = s.rho().comp(0);
            let mag = s.w().magnitude();
            g.cell_volume() * rho.iter().zip(&mag).map(|(r, m)| (r * m).abs()).sum::<f64>()
        })
        .collect();
    let mut tail_flux = vec![(t_end, 0.0); snapshots.len()];
    let mut acc = 0.0;
    for i in (0..snapshots.len()).rev() {
        if i + 1 < snapshots.len() {
            acc += 0.5 * (snapshots[i + 1].time() - snapshots[i].time()) * (flux[i] + flux[i + 1]);
        }
        tail_flux[i] = (snapshots[i].time(), acc);
    }

    let mid = snapshots
        .iter()
        .min_by(|a, b| (a.time() - t_end / 2.0).abs().total_cmp(&(b.time() - t_end / 2.0).abs()))
        .expect("nonempty");
    let late = dist(mid)?;
    let early = functionals::sobolev_neg1_norm_spec(&mid.rho_hat().sub(snapshots[0].rho_hat())?);
    let converged = late < 0.1 * early || (late == 0.0 && early == 0.0);

    let window = (t_lo, t_hi.min(t_end / 2.0));
    let inside: Vec<(f64, f64)> = distance
        .iter()
        .copied()
        .filter(|&(t, _)| t >= window.0 && t <= window.1)
        .collect();
    let monotone = inside.windows(2).all(|w| w[1].1 <= w[0].1);
    let positive: Vec<(f64, f64)> = inside.iter().copied().filter(|&(t, d)| t > 0.0 && d > 0.0).collect();
    let rate = if positive.len() >= 3 {
        let x: Vec<f64> = positive.iter().map(|p| p.0.ln()).collect();
        let y: Vec<f64> = positive.iter().map(|p| p.1.ln()).collect();
        Some(line_fit(&x, &y).1)
    } else {
        None
    };
    if !converged {
        log::warn!("density has not settled: late distance {late:e} vs early {early:e}");
    }
    Ok(DensityLongtime {
        rho_inf: last.rho().clone(),
        distance,
        tail_flux,
        converged,
        monotone,
        window,
        rate,
    })
}

/// Ratio statistics of one inequality on one grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InequalityStats {
    pub id: InequalityId,
    pub n: usize,
    pub max_ratio: f64,
    pub min_ratio: f64,
    /// Largest relative change of a ratio when its field is scaled.
    pub amplitude_defect: f64,
}

/// Ratio statistics over `count` random band-limited scalar fields per grid
/// size, each also evaluated at amplitudes 1e−3 and 1e3.
pub fn inequality_sweep(sizes: &[usize], box_len: f64, count: usize, band: i64, seed: u64) -> Result<Vec<InequalityStats>> {
    let mut out = Vec::new();
    for &n in sizes {
        let grid = Grid::new(n, box_len)?;
        if band < 1 || band > grid.dealias_limit() {
            return Err(Error::InvalidArgument(format!("band {band} out of range for n = {n}")));
        }
        let fields: Vec<Field> = (0..count)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
                random_bandlimited(&grid, 1, band, &mut rng)
            })
            .collect();
        for id in InequalityId::ALL {
            let per_field: Vec<(f64, f64)> = fields
                .par_iter()
                .map(|f| -> Result<(f64, f64)> {
                    let r = check_inequality(id, f)?;
                    let mut defect: f64 = 0.0;
                    for s in [1e-3, 1e3] {
                        let rs = check_inequality(id, &f.scaled(s))?;
                        defect = defect.max((rs - r).abs() / r.abs());
                    }
                    Ok((r, defect))
                })
                .collect::<Result<_>>()?;
            out.push(InequalityStats {
                id,
                n,
                max_ratio: per_field.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max),
                min_ratio: per_field.iter().map(|p| p.0).fold(f64::INFINITY, f64::min),
                amplitude_defect: per_field.iter().map(|p| p.1).fold(0.0, f64::max),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::LedgerRow;

    #[test]
    fn fit_recovers_its_model() {
        let series: Vec<(f64, f64)> = (0..100).map(|i| {
            let t = 0.1 * i as f64;
            (t, 3.0 * (1.0 + 2.0 * t).powf(-1.5))
        }).collect();
        let f = decay_fit(&series, (0.0, 10.0)).unwrap();
        assert!((f.beta - 1.5).abs() < 1e-6, "{f:?}");
        assert!((f.a - 2.0).abs() < 1e-4, "{f:?}");
        assert!(f.residual < 1e-6);
    }

    #[test]
    fn fit_of_constant_is_flat() {
        let series: Vec<(f64, f64)> = (0..30).map(|i| (i as f64, 0.7)).collect();
        let f = decay_fit(&series, (0.0, 29.0)).unwrap();
        assert!(f.beta.abs() < 1e-6);
        assert!(f.residual < 1e-12);
    }

    #[test]
    fn fit_rejects_bad_input() {
        let short: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 1.0)).collect();
        assert!(decay_fit(&short, (0.0, 9.0)).is_err());
        let mut neg: Vec<(f64, f64)> = (0..30).map(|i| (i as f64, 1.0)).collect();
        neg[5].1 = -1.0;
        assert!(decay_fit(&neg, (0.0, 29.0)).is_err());
        let ok: Vec<(f64, f64)> = (0..30).map(|i| (i as f64, 1.0)).collect();
        assert!(decay_fit(&ok, (100.0, 200.0)).is_err());
        assert!(decay_fit(&ok, (5.0, 1.0)).is_err());
    }

    #[test]
    fn heat_series_of_single_mode() {
        let g = Grid::new(8, 2.0 * std::f64::consts::PI).unwrap();
        let z = spectral::forward(&Field::from_fn(&g, |x| x[0].cos()));
        let s = heat_decay_series(&z, &[0.0, 0.5]).unwrap();
        let e0 = 0.5 * g.volume();
        assert!((s[0].1 - e0).abs() < 1e-12 * e0);
        assert!((s[1].1 - e0 * (-1.0f64).exp()).abs() < 1e-12 * e0);
    }

    #[test]
    fn monitor_of_flat_ledger() {
        let mut l = EnergyLedger::new();
        for i in 0..5 {
            l.push(LedgerRow {
                t: i as f64,
                e0: 1.0,
                w_bound: 0.5 * (-(i as f64)).exp() + 0.1,
                w_inf: 0.5 * (-(i as f64)).exp(),
                ..LedgerRow::default()
            })
            .unwrap();
        }
        let m = monitor(&l);
        assert_eq!(m.max_abs_energy_residual, 0.0);
        assert!(m.w_bound_holds && m.ratios_bounded);
        assert!((m.min_w_slack - 0.1).abs() < 1e-15);
    }

    #[test]
    fn log_times_span() {
        let t = log_times(2.0, 40.0, 5);
        assert!((t[0] - 2.0).abs() < 1e-15 && (t[4] - 40.0).abs() < 1e-12);
    }
}
