//! Energy and dissipation functionals, function-space norms and the
//! inequality harness.

use std::fmt;
use std::str::FromStr;

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::solver::{self, PointDiagnostics, TimeDerivatives};
use crate::spectral::{self, dyadic_index, dyadic_range, Field, Grid, ShellSpectrum, SpectralField};
use crate::state::{FluidState, MonitorConfig};

/// ∫ρ over the box (rectangle rule, equal to L³ times the zero mode).
pub fn mass(rho: &Field) -> f64 {
    rho.integral(0)
}

/// R = max(1, 2‖ρ‖_∞).
pub fn r_constant(rho: &Field) -> f64 {
    (2.0 * rho.max_norm()).max(1.0)
}

/// ∫ max(ρ,0)·|a|² for a vector field `a`.
fn weighted_sq(rho: &Field, a: &[&[f64]; 3]) -> f64 {
    let r = rho.comp(0);
    if r.iter().any(|&v| v < 0.0) {
        log::debug!("negative density samples clamped to zero in weighted norm");
    }
    rho.grid().cell_volume()
        * (0..r.len())
            .map(|p| r[p].max(0.0) * (a[0][p] * a[0][p] + a[1][p] * a[1][p] + a[2][p] * a[2][p]))
            .sum::<f64>()
}

fn relative_velocity(state: &FluidState) -> [Vec<f64>; 3] {
    [0, 1, 2].map(|i| {
        state
            .w()
            .comp(i)
            .iter()
            .zip(state.u().comp(i))
            .map(|(w, u)| w - u)
            .collect()
    })
}

/// ‖√ρ(w−u)‖².
pub fn drag_dissipation(state: &FluidState) -> f64 {
    let r = relative_velocity(state);
    weighted_sq(state.rho(), &[&r[0], &r[1], &r[2]])
}

/// (E₀, D₀) with E₀ = ½(‖√ρw‖² + ‖u‖²), D₀ = ‖√ρ(w−u)‖² + ‖∇u‖².
pub fn energy_e0(state: &FluidState) -> (f64, f64) {
    let w = state.w();
    let e0 = 0.5 * (weighted_sq(state.rho(), &[w.comp(0), w.comp(1), w.comp(2)]) + state.u().l2_norm_sq());
    let d0 = drag_dissipation(state) + spectral::gradient_energy(state.grid(), state.u_hat().components());
    (e0, d0)
}

/// Quadratic pieces of the Stokes rewrite of the u equation.
#[derive(Clone, Copy, Debug)]
pub struct StokesParts {
    /// ‖u_t‖² with u_t = −|k|²û + P F̂.
    pub ut_sq: f64,
    /// ‖∇²u‖² = L³ Σ |k|⁴ |û|².
    pub hess_sq: f64,
    /// ‖∇P‖² = L³ Σ |F̂ − P F̂|².
    pub grad_p_sq: f64,
}

pub(crate) fn stokes_parts(grid: &Grid, u: &[Vec<Complex64>; 3], f_hat: &[Vec<Complex64>; 3]) -> StokesParts {
    let mut pf = f_hat.clone();
    {
        let [a, b, c] = &mut pf;
        spectral::leray_in_place(grid, [a, b, c]);
    }
    let ksq = grid.k_sq();
    let (mut ut, mut hess, mut gp) = (0.0, 0.0, 0.0);
    for i in 0..3 {
        for p in 0..grid.len() {
            ut += (pf[i][p] - ksq[p] * u[i][p]).norm_sqr();
            hess += ksq[p] * ksq[p] * u[i][p].norm_sqr();
            gp += (f_hat[i][p] - pf[i][p]).norm_sqr();
        }
    }
    let vol = grid.volume();
    StokesParts {
        ut_sq: vol * ut,
        hess_sq: vol * hess,
        grad_p_sq: vol * gp,
    }
}

pub(crate) fn d1_tilde_from_parts(drag: f64, parts: &StokesParts, r: f64) -> f64 {
    let d1 = drag + parts.ut_sq;
    d1 / 2.0 + parts.hess_sq / (24.0 * r) + parts.grad_p_sq / (12.0 * r)
}

fn parts_of(state: &FluidState, td: &TimeDerivatives) -> StokesParts {
    let u = [0, 1, 2].map(|i| state.u_hat().coeffs(i).to_vec());
    let f = [0, 1, 2].map(|i| td.f_hat.coeffs(i).to_vec());
    stokes_parts(state.grid(), &u, &f)
}

/// (E₁, D₁, D̃₁); `r` is the frozen constant max(1, 2‖ρ₀‖_∞).
pub fn energy_e1(state: &FluidState, r: f64) -> Result<(f64, f64, f64)> {
    let td = solver::time_derivatives(state)?;
    Ok(e1_from(state, &td, r))
}

fn e1_from(state: &FluidState, td: &TimeDerivatives, r: f64) -> (f64, f64, f64) {
    let drag = drag_dissipation(state);
    let parts = parts_of(state, td);
    let e1 = drag + spectral::gradient_energy(state.grid(), state.u_hat().components());
    let d1 = drag + parts.ut_sq;
    (e1, d1, d1_tilde_from_parts(drag, &parts, r))
}

/// (E₂, D₂) with E₂ = ‖u_t‖² + ‖√ρ w_t‖², D₂ = ‖∇u_t‖² + 2‖√ρ(u_t − w_t)‖².
pub fn energy_e2(state: &FluidState) -> Result<(f64, f64)> {
    let td = solver::time_derivatives(state)?;
    Ok(e2_from(state, &td))
}

fn e2_from(state: &FluidState, td: &TimeDerivatives) -> (f64, f64) {
    let g = state.grid();
    let refs: Vec<&[Complex64]> = td
        .u_t
        .components()
        .iter()
        .chain(td.w_t.components())
        .map(|c| c.as_slice())
        .collect();
    let phys = spectral::inverse_arrays(g, &refs);
    let ut = [&phys[0][..], &phys[1][..], &phys[2][..]];
    let wt = [&phys[3][..], &phys[4][..], &phys[5][..]];
    let diff: [Vec<f64>; 3] = [0, 1, 2].map(|i| ut[i].iter().zip(wt[i]).map(|(a, b)| a - b).collect());
    let e2 = td.u_t.l2_norm_sq() + weighted_sq(state.rho(), &wt);
    let d2 = spectral::gradient_energy(g, td.u_t.components())
        + 2.0 * weighted_sq(state.rho(), &[&diff[0], &diff[1], &diff[2]]);
    (e2, d2)
}

/// Result of the heat-semigroup Besov supremum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeatNorm {
    pub value: f64,
    /// Time attaining the supremum.
    pub t_star: f64,
    /// The maximizer sits at the lower end h² of the scanned window: the
    /// value is limited by grid resolution.
    pub at_lower_edge: bool,
    /// The maximizer sits at the upper end (L/2)².
    pub at_upper_edge: bool,
}

const POINTS_PER_DECADE: f64 = 64.0;

/// sup_t t^{σ/2}‖e^{tΔ}z‖ over t ∈ [h², (L/2)²], zero mode excluded.
pub fn besov_heat_norm(z: &Field, sigma: f64) -> Result<f64> {
    Ok(besov_heat_report(&spectral::forward(z), sigma)?.value)
}

pub fn besov_heat_norm_spec(z: &SpectralField, sigma: f64) -> Result<f64> {
    Ok(besov_heat_report(z, sigma)?.value)
}

pub fn besov_heat_report(z: &SpectralField, sigma: f64) -> Result<HeatNorm> {
    if !(sigma > 0.0 && sigma <= 1.5) {
        return Err(Error::InvalidArgument(format!("heat-norm exponent σ = {sigma} outside (0, 3/2]")));
    }
    let g = z.grid();
    let t_min = g.min_resolved_time();
    let t_max = (g.box_len() / 2.0).powi(2);
    if !(t_min < t_max) {
        return Err(Error::InvalidArgument("empty time grid for heat norm".into()));
    }
    let shells = ShellSpectrum::new(z);
    if shells.zero_mode > 1e-24 * (shells.zero_mode + shells.heat_energy(0.0)) {
        log::debug!("heat norm: zero mode of magnitude {:e} ignored", shells.zero_mode.sqrt());
    }
    if shells.shells.is_empty() {
        return Ok(HeatNorm {
            value: 0.0,
            t_star: t_min,
            at_lower_edge: false,
            at_upper_edge: false,
        });
    }
    let f = |t: f64| t.powf(sigma / 2.0) * shells.heat_energy(t).sqrt();
    let (lo, hi) = (t_min.ln(), t_max.ln());
    let count = ((hi - lo) / std::f64::consts::LN_10 * POINTS_PER_DECADE).ceil().max(2.0) as usize;
    let step = (hi - lo) / count as f64;
    let samples: Vec<f64> = (0..=count).map(|i| f((lo + step * i as f64).exp())).collect();
    let best = samples
        .iter()
        .enumerate()
        .fold(0, |b, (i, v)| if *v > samples[b] { i } else { b });
    // Golden-section refinement in log t on the bracketing cells.
    let mut a = lo + step * best.saturating_sub(1) as f64;
    let mut b = lo + step * (best + 1).min(count) as f64;
    let gr = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut c = b - gr * (b - a);
    let mut d = a + gr * (b - a);
    let (mut fc, mut fd) = (f(c.exp()), f(d.exp()));
    for _ in 0..60 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - gr * (b - a);
            fc = f(c.exp());
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + gr * (b - a);
            fd = f(d.exp());
        }
    }
    let (mut value, mut t_star) = (samples[best], (lo + step * best as f64).exp());
    for (x, v) in [(c, fc), (d, fd)] {
        if v > value {
            value = v;
            t_star = x.exp();
        }
    }
    Ok(HeatNorm {
        value,
        t_star,
        at_lower_edge: best == 0,
        at_upper_edge: best == count,
    })
}

/// ℓ^q summation over dyadic blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Summation {
    One,
    Two,
    Inf,
}

/// ‖z‖_{Ḃ^s_{2,q}} = ℓ^q_j(2^{js}‖Δ_j z‖) with sharp annuli, zero mode excluded.
pub fn besov_dyadic_norm(z: &Field, s: f64, q: Summation) -> f64 {
    besov_dyadic_norm_spec(&spectral::forward(z), s, q)
}

pub fn besov_dyadic_norm_spec(z: &SpectralField, s: f64, q: Summation) -> f64 {
    let g = z.grid();
    let (lo, hi) = dyadic_range(g);
    let mut energy = vec![0.0; (hi - lo + 1) as usize];
    let ksq = g.k_sq();
    for c in z.components() {
        for (idx, v) in c.iter().enumerate().skip(1) {
            energy[(dyadic_index(ksq[idx]) - lo) as usize] += v.norm_sqr();
        }
    }
    let terms = energy
        .iter()
        .enumerate()
        .map(|(i, e)| 2f64.powf((lo + i as i32) as f64 * s) * (g.volume() * e).sqrt());
    match q {
        Summation::One => terms.sum(),
        Summation::Two => terms.map(|v| v * v).sum::<f64>().sqrt(),
        Summation::Inf => terms.fold(0.0, f64::max),
    }
}

/// ‖z‖_{Ḣ⁻¹} = (L³ Σ_{k≠0} |ẑ|²/|k|²)^{1/2}.
pub fn sobolev_neg1_norm(z: &Field) -> f64 {
    sobolev_neg1_norm_spec(&spectral::forward(z))
}

pub fn sobolev_neg1_norm_spec(z: &SpectralField) -> f64 {
    let g = z.grid();
    let ksq = g.k_sq();
    let zero: f64 = z.components().iter().map(|c| c[0].norm_sqr()).sum();
    if zero > 0.0 {
        log::debug!("Ḣ⁻¹ norm: zero mode of magnitude {:e} dropped", zero.sqrt());
    }
    let s: f64 = z
        .components()
        .iter()
        .map(|c| c.iter().zip(ksq).skip(1).map(|(v, k2)| v.norm_sqr() / k2).sum::<f64>())
        .sum();
    (g.volume() * s).sqrt()
}

/// L^{3,1} norm by decreasing rearrangement: Σ 3(V_i^{1/3} − V_{i−1}^{1/3}) z*_i
/// with V_i = i·h³. Vector fields use the pointwise Euclidean magnitude.
pub fn lorentz_31_norm(z: &Field) -> f64 {
    lorentz_31_of_samples(&z.magnitude(), z.grid().cell_volume())
}

fn lorentz_31_of_samples(values: &[f64], cell: f64) -> f64 {
    let mut v: Vec<f64> = values.iter().map(|x| x.abs()).collect();
    v.sort_by(|a, b| b.total_cmp(a));
    let mut prev = 0.0;
    let mut acc = 0.0;
    for (i, x) in v.iter().enumerate() {
        let cur = ((i + 1) as f64 * cell).cbrt();
        acc += 3.0 * (cur - prev) * x;
        prev = cur;
    }
    acc
}

/// Inequalities checked by the harness; each is a ratio LHS/RHS.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum InequalityId {
    /// ‖z‖²_∞ ≲ ‖∇z‖‖∇²z‖.
    Gn,
    /// ‖z‖ ≲ ‖∇z‖^{3/5}‖z‖^{2/5}_{Ḃ^{−3/2}_{2,∞}}.
    Interpo,
    /// ‖z‖²_{L^{3,1}} ≲ ‖z‖‖∇z‖.
    L31,
    /// ‖z‖_∞ ≲ ‖∇z‖_{L^{3,1}}.
    Embed,
    /// ‖z‖_{Ḃ^{−3/2}_{2,∞}} ≲ ‖z‖_{L¹}.
    Embed0,
}

impl InequalityId {
    pub const ALL: [InequalityId; 5] = [
        InequalityId::Gn,
        InequalityId::Interpo,
        InequalityId::L31,
        InequalityId::Embed,
        InequalityId::Embed0,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InequalityId::Gn => "GN",
            InequalityId::Interpo => "interpo",
            InequalityId::L31 => "L31",
            InequalityId::Embed => "embed",
            InequalityId::Embed0 => "embed0",
        }
    }
}

impl fmt::Display for InequalityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InequalityId {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        InequalityId::ALL
            .into_iter()
            .find(|i| i.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown inequality '{s}'"))
    }
}

/// LHS/RHS of inequality `id` for the mean-free part of `z`.
///
/// Returns [`Error::Degenerate`] when the right-hand side vanishes.
pub fn check_inequality(id: InequalityId, z: &Field) -> Result<f64> {
    let g = z.grid();
    let mut spec = spectral::forward(z);
    for c in 0..spec.ncomp() {
        spec.coeffs_mut(c)[0] = Complex64::default();
    }
    let zf = spectral::inverse_unchecked(&spec);
    let ksq = g.k_sq();
    let l2 = spec.l2_norm();
    let grad_l2 = spectral::gradient_energy(g, spec.components()).sqrt();
    let (lhs, rhs) = match id {
        InequalityId::Gn => {
            let hess: f64 = spec
                .components()
                .iter()
                .map(|c| c.iter().zip(ksq).map(|(v, k2)| k2 * k2 * v.norm_sqr()).sum::<f64>())
                .sum();
            (zf.max_norm().powi(2), grad_l2 * (g.volume() * hess).sqrt())
        }
        InequalityId::Interpo => {
            let b = besov_heat_report(&spec, 1.5)?.value;
            (l2, grad_l2.powf(0.6) * b.powf(0.4))
        }
        InequalityId::L31 => (lorentz_31_norm(&zf).powi(2), l2 * grad_l2),
        InequalityId::Embed => {
            let comps: Vec<&[Complex64]> = spec.components().iter().map(|c| c.as_slice()).collect();
            let derivs: Vec<Vec<Complex64>> = comps
                .iter()
                .flat_map(|c| (0..3).map(move |a| spectral::derivative(g, c, a)))
                .collect();
            let refs: Vec<&[Complex64]> = derivs.iter().map(|d| d.as_slice()).collect();
            let grads = spectral::inverse_arrays(g, &refs);
            let mag: Vec<f64> = (0..g.len())
                .map(|p| grads.iter().map(|d| d[p] * d[p]).sum::<f64>().sqrt())
                .collect();
            (zf.max_norm(), lorentz_31_of_samples(&mag, g.cell_volume()))
        }
        InequalityId::Embed0 => {
            let l1 = g.cell_volume() * zf.magnitude().iter().sum::<f64>();
            (besov_heat_report(&spec, 1.5)?.value, l1)
        }
    };
    if !(rhs > 0.0) {
        return Err(Error::Degenerate);
    }
    Ok(lhs / rhs)
}

/// Column names of the ledger CSV, in order.
pub const LEDGER_COLUMNS: [&str; 23] = [
    "t",
    "mass",
    "e0",
    "d0",
    "e1",
    "d1",
    "d1_tilde",
    "e2",
    "d2",
    "u_besov_m1_2",
    "u_besov_m3_2",
    "u_besov_1_2_1",
    "w_inf",
    "grad_w_inf",
    "grad_u_inf",
    "rho_inf",
    "int_d0",
    "int_grad_u_inf",
    "int_grad_w_inf",
    "u_inf",
    "w_bound",
    "int_weighted_d1_tilde",
    "grad_u_sq",
];

/// One row of the energy ledger. Columns of disabled monitors hold 0.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LedgerRow {
    pub t: f64,
    pub mass: f64,
    pub e0: f64,
    pub d0: f64,
    pub e1: f64,
    pub d1: f64,
    pub d1_tilde: f64,
    pub e2: f64,
    pub d2: f64,
    /// ‖u‖_{Ḃ^{−1/2}_{2,∞}} (heat definition).
    pub u_besov_m1_2: f64,
    /// ‖u‖_{Ḃ^{−3/2}_{2,∞}} (heat definition).
    pub u_besov_m3_2: f64,
    /// ‖u‖_{Ḃ^{1/2}_{2,1}} (dyadic definition).
    pub u_besov_1_2_1: f64,
    pub w_inf: f64,
    pub grad_w_inf: f64,
    pub grad_u_inf: f64,
    pub rho_inf: f64,
    pub int_d0: f64,
    pub int_grad_u_inf: f64,
    pub int_grad_w_inf: f64,
    pub u_inf: f64,
    /// e^{−t}‖w₀‖_∞ + ∫₀ᵗ e^{τ−t}‖u‖_∞ dτ.
    pub w_bound: f64,
    /// ∫₀ᵗ (1 + a₀τ)^β D̃₁ dτ.
    pub int_weighted_d1_tilde: f64,
    pub grad_u_sq: f64,
}

impl LedgerRow {
    pub fn values(&self) -> [f64; 23] {
        [
            self.t,
            self.mass,
            self.e0,
            self.d0,
            self.e1,
            self.d1,
            self.d1_tilde,
            self.e2,
            self.d2,
            self.u_besov_m1_2,
            self.u_besov_m3_2,
            self.u_besov_1_2_1,
            self.w_inf,
            self.grad_w_inf,
            self.grad_u_inf,
            self.rho_inf,
            self.int_d0,
            self.int_grad_u_inf,
            self.int_grad_w_inf,
            self.u_inf,
            self.w_bound,
            self.int_weighted_d1_tilde,
            self.grad_u_sq,
        ]
    }

    pub fn from_values(v: &[f64; 23]) -> Self {
        LedgerRow {
            t: v[0],
            mass: v[1],
            e0: v[2],
            d0: v[3],
            e1: v[4],
            d1: v[5],
            d1_tilde: v[6],
            e2: v[7],
            d2: v[8],
            u_besov_m1_2: v[9],
            u_besov_m3_2: v[10],
            u_besov_1_2_1: v[11],
            w_inf: v[12],
            grad_w_inf: v[13],
            grad_u_inf: v[14],
            rho_inf: v[15],
            int_d0: v[16],
            int_grad_u_inf: v[17],
            int_grad_w_inf: v[18],
            u_inf: v[19],
            w_bound: v[20],
            int_weighted_d1_tilde: v[21],
            grad_u_sq: v[22],
        }
    }

    /// Value of a column by name.
    pub fn get(&self, column: &str) -> Option<f64> {
        LEDGER_COLUMNS.iter().position(|c| *c == column).map(|i| self.values()[i])
    }
}

/// Time series of ledger rows with strictly increasing t.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EnergyLedger {
    rows: Vec<LedgerRow>,
}

impl EnergyLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: LedgerRow) -> Result<()> {
        if let Some(last) = self.rows.last() {
            if !(row.t > last.t) {
                return Err(Error::Ledger(format!("time {} does not follow {}", row.t, last.t)));
            }
        }
        if let Some(i) = row.values().iter().position(|v| !v.is_finite()) {
            return Err(Error::Ledger(format!("non-finite {} at t = {}", LEDGER_COLUMNS[i], row.t)));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn rows(&self) -> &[LedgerRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// (t, value) pairs of one column.
    pub fn series(&self, column: &str) -> Result<Vec<(f64, f64)>> {
        let i = LEDGER_COLUMNS
            .iter()
            .position(|c| *c == column)
            .ok_or_else(|| Error::Ledger(format!("unknown column '{column}'")))?;
        Ok(self.rows.iter().map(|r| (r.t, r.values()[i])).collect())
    }

    /// Names of columns holding a negative value anywhere (should be empty).
    pub fn negative_columns(&self) -> Vec<&'static str> {
        (0..LEDGER_COLUMNS.len())
            .filter(|&i| self.rows.iter().any(|r| r.values()[i] < 0.0))
            .map(|i| LEDGER_COLUMNS[i])
            .collect()
    }
}

/// Running time integrals maintained by the run loop (trapezoid rule).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Running {
    pub time: f64,
    pub int_d0: f64,
    pub int_grad_u_inf: f64,
    pub int_grad_w_inf: f64,
    /// ∫₀ᵗ e^{τ−t}‖u(τ)‖_∞ dτ.
    pub relaxed_u_inf: f64,
    pub w0_inf: f64,
    pub int_weighted_d1_tilde: f64,
}

impl Running {
    pub fn new(w0_inf: f64) -> Self {
        Running {
            time: 0.0,
            int_d0: 0.0,
            int_grad_u_inf: 0.0,
            int_grad_w_inf: 0.0,
            relaxed_u_inf: 0.0,
            w0_inf,
            int_weighted_d1_tilde: 0.0,
        }
    }

    /// Adds the interval between two consecutive diagnostic points.
    pub fn accumulate(&mut self, prev: &PointDiagnostics, cur: &PointDiagnostics, monitor: &MonitorConfig) {
        let h = cur.time - prev.time;
        let trap = |a: f64, b: f64| 0.5 * h * (a + b);
        self.int_d0 += trap(prev.d0, cur.d0);
        self.int_grad_u_inf += trap(prev.grad_u_inf, cur.grad_u_inf);
        self.int_grad_w_inf += trap(prev.grad_w_inf, cur.grad_w_inf);
        let decay = (-h).exp();
        self.relaxed_u_inf = decay * self.relaxed_u_inf + 0.5 * h * (decay * prev.u_inf + cur.u_inf);
        let weight = |t: f64| (1.0 + monitor.a0 * t).powf(monitor.beta);
        self.int_weighted_d1_tilde += trap(weight(prev.time) * prev.d1_tilde, weight(cur.time) * cur.d1_tilde);
        self.time = cur.time;
    }

    /// Right-hand side of the maximum-principle bound on ‖w(t)‖_∞.
    pub fn w_bound(&self) -> f64 {
        (-self.time).exp() * self.w0_inf + self.relaxed_u_inf
    }
}

/// All functionals of one state plus the running integrals.
pub fn ledger_row(state: &FluidState, r: f64, monitor: &MonitorConfig, running: &Running) -> Result<LedgerRow> {
    let g = state.grid();
    let (e0, d0) = energy_e0(state);
    let mut row = LedgerRow {
        t: state.time(),
        mass: mass(state.rho()),
        e0,
        d0,
        ..LedgerRow::default()
    };
    if monitor.higher_order {
        let td = solver::time_derivatives(state)?;
        (row.e1, row.d1, row.d1_tilde) = e1_from(state, &td, r);
        (row.e2, row.d2) = e2_from(state, &td);
    }
    if monitor.besov {
        row.u_besov_m1_2 = besov_heat_report(state.u_hat(), 0.5)?.value;
        row.u_besov_m3_2 = besov_heat_report(state.u_hat(), 1.5)?.value;
        row.u_besov_1_2_1 = besov_dyadic_norm_spec(state.u_hat(), 0.5, Summation::One);
    }
    let uh = state.u_hat();
    let wh = state.w_hat();
    row.grad_u_inf = spectral::tensor_sup(&spectral::gradient_tensor(g, [uh.coeffs(0), uh.coeffs(1), uh.coeffs(2)]));
    row.grad_w_inf = spectral::tensor_sup(&spectral::gradient_tensor(g, [wh.coeffs(0), wh.coeffs(1), wh.coeffs(2)]));
    row.w_inf = state.w().max_norm();
    row.u_inf = state.u().max_norm();
    row.rho_inf = state.rho().max_norm();
    row.int_d0 = running.int_d0;
    row.int_grad_u_inf = running.int_grad_u_inf;
    row.int_grad_w_inf = running.int_grad_w_inf;
    row.w_bound = running.w_bound();
    row.int_weighted_d1_tilde = running.int_weighted_d1_tilde;
    row.grad_u_sq = spectral::gradient_energy(g, uh.components());
    Ok(row)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{make_initial, random_bandlimited, Generator, InitialData};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn single_mode(grid: &Grid, m: [i64; 3], amp: f64) -> Field {
        let k0 = 2.0 * PI / grid.box_len();
        Field::from_fn(grid, |x| amp * (k0 * (m[0] as f64 * x[0] + m[1] as f64 * x[1] + m[2] as f64 * x[2])).cos())
    }

    #[test]
    fn mass_of_constant_and_linearity() {
        let g = Grid::new(8, 3.0).unwrap();
        assert!((mass(&Field::constant(&g, 2.0)) - 54.0).abs() < 1e-12);
        let a = single_mode(&g, [1, 0, 0], 1.0).map(|v| v + 2.0);
        let b = Field::constant(&g, 0.5);
        assert!((mass(&a.add(&b).unwrap()) - mass(&a) - mass(&b)).abs() < 1e-12);
    }

    #[test]
    fn single_mode_energy() {
        let g = Grid::new(16, 2.0 * PI).unwrap();
        let a = 0.3;
        let u = Field::vector_from_fn(&g, |x| [a * (2.0 * x[1]).cos(), 0.0, 0.0]);
        let s = FluidState::new(0.0, Field::zeros(&g, 1), Field::zeros(&g, 3), u).unwrap();
        let (e0, d0) = energy_e0(&s);
        let vol = g.volume();
        assert!((e0 - 0.25 * a * a * vol).abs() < 1e-12 * vol);
        assert!((d0 - 4.0 * 2.0 * e0).abs() < 1e-12 * vol);
    }

    #[test]
    fn heat_norm_single_mode_closed_form() {
        let g = Grid::new(32, 2.0 * PI).unwrap();
        let z = single_mode(&g, [2, 0, 0], 1.0);
        let kappa: f64 = 2.0;
        for sigma in [0.5, 1.0, 1.5] {
            let expect = z.l2_norm() * (sigma / (2.0 * kappa * kappa)).powf(sigma / 2.0) * (-sigma / 2.0).exp();
            let got = besov_heat_norm(&z, sigma).unwrap();
            assert!((got - expect).abs() < 1e-6 * expect, "σ={sigma}: {got} vs {expect}");
        }
        assert_eq!(besov_heat_norm(&Field::zeros(&g, 1), 0.5).unwrap(), 0.0);
        assert!(besov_heat_norm(&z, 0.0).is_err());
        assert!(besov_heat_norm(&z, 2.0).is_err());
    }

    #[test]
    fn dyadic_single_block_and_plancherel() {
        let g = Grid::new(16, 2.0 * PI).unwrap();
        let z = single_mode(&g, [3, 0, 0], 0.7);
        for q in [Summation::One, Summation::Inf] {
            let v = besov_dyadic_norm(&z, 0.5, q);
            assert!((v - 2f64.powf(0.5) * z.l2_norm()).abs() < 1e-12);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = random_bandlimited(&g, 1, 6, &mut rng);
        assert!((besov_dyadic_norm(&r, 0.0, Summation::Two) - r.l2_norm()).abs() < 1e-12 * r.l2_norm());
    }

    #[test]
    fn neg1_norm() {
        let g = Grid::new(16, 5.0).unwrap();
        let z = single_mode(&g, [0, 2, 1], 1.3);
        let kappa = 2.0 * PI / 5.0 * 5f64.sqrt();
        assert!((sobolev_neg1_norm(&z) - z.l2_norm() / kappa).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = random_bandlimited(&g, 3, 5, &mut rng);
        let div = spectral::divergence(&spectral::forward(&f)).unwrap();
        assert!(sobolev_neg1_norm_spec(&div) <= f.l2_norm());
    }

    #[test]
    fn lorentz_on_indicator() {
        let g = Grid::new(8, 2.0).unwrap();
        let z = Field::from_fn(&g, |x| if x[0] < 0.9 && x[1] < 0.9 { 2.0 } else { 0.0 });
        let count = z.comp(0).iter().filter(|v| **v > 0.0).count();
        let vol = count as f64 * g.cell_volume();
        assert!((lorentz_31_norm(&z) - 3.0 * 2.0 * vol.cbrt()).abs() < 1e-12);
        assert_eq!(lorentz_31_norm(&Field::zeros(&g, 1)), 0.0);
    }

    #[test]
    fn inequalities_degenerate_and_scale_free() {
        let g = Grid::new(16, 2.0 * PI).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z = random_bandlimited(&g, 3, 4, &mut rng);
        for id in InequalityId::ALL {
            assert!(matches!(check_inequality(id, &Field::zeros(&g, 3)), Err(Error::Degenerate)));
            let a = check_inequality(id, &z).unwrap();
            let b = check_inequality(id, &z.scaled(-37.5)).unwrap();
            assert!((a - b).abs() < 1e-12 * a, "{id}");
        }
    }

    #[test]
    fn e1_e2_of_shear_mode() {
        let g = Grid::new(16, 2.0 * PI).unwrap();
        let mut spec = InitialData::new(Generator::ShearMode);
        spec.amplitude = 0.0;
        spec.u_amplitude = 0.5;
        spec.mode = 2;
        let s = make_initial(&spec, &g).unwrap();
        let u2 = s.u().l2_norm_sq();
        let k2 = 4.0;
        let (e1, d1, _) = energy_e1(&s, 1.0).unwrap();
        assert!((e1 - k2 * u2).abs() < 1e-12 * e1);
        assert!((d1 - k2 * k2 * u2).abs() < 1e-12 * d1);
        let (e2, d2) = energy_e2(&s).unwrap();
        assert!((e2 - k2 * k2 * u2).abs() < 1e-12 * e2);
        assert!((d2 - k2 * k2 * k2 * u2).abs() < 1e-12 * d2);
    }

    #[test]
    fn uniform_state_functionals() {
        let g = Grid::new(8, 2.0).unwrap();
        let mut spec = InitialData::new(Generator::Uniform);
        spec.amplitude = 1.5;
        spec.w_mean = [0.2, -0.1, 0.3];
        spec.u_mean = spec.w_mean;
        let s = make_initial(&spec, &g).unwrap();
        assert!(energy_e1(&s, 3.0).unwrap().0.abs() < 1e-28);
        let (e2, d2) = energy_e2(&s).unwrap();
        assert!(e2.abs() < 1e-28 && d2.abs() < 1e-28);
    }

    #[test]
    fn uniform_slip_e2() {
        // w_t = −w̄ and u_t = ρ̄w̄, so both phases contribute.
        let g = Grid::new(8, 2.0).unwrap();
        let mut spec = InitialData::new(Generator::Uniform);
        let rho = 1.5;
        spec.amplitude = rho;
        spec.w_mean = [0.2, -0.1, 0.3];
        let s = make_initial(&spec, &g).unwrap();
        let w2 = 0.14 * 8.0;
        let (e2, d2) = energy_e2(&s).unwrap();
        let want_e2 = (rho * rho + rho) * w2;
        let want_d2 = 2.0 * rho * (rho + 1.0).powi(2) * w2;
        assert!((e2 - want_e2).abs() < 1e-12 * want_e2, "{e2} vs {want_e2}");
        assert!((d2 - want_d2).abs() < 1e-12 * want_d2, "{d2} vs {want_d2}");
    }
}
